/******************************************************************************
 * Copyright 2026 The fslam authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *****************************************************************************/
#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace fslam {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Thrown when input geometry admits no (or infinitely many) solutions.
class DegenerateGeometry : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// SO(3) element stored as a unit quaternion, renormalized after every
/// composition so long products do not drift. Matrix view on demand.
class Rotation {
 public:
  Rotation() : q_(Quat::Identity()) {}
  explicit Rotation(const Quat& q) : q_(q.normalized()) {}
  explicit Rotation(const Mat3& m) : q_(Quat(m).normalized()) {}

  static Rotation identity() { return Rotation(); }

  /// Rodrigues exponential of an axis-angle vector (radians).
  static Rotation exp(const Vec3& omega) {
    const double theta = omega.norm();
    Quat q;
    if (theta < 1e-12) {
      q = Quat(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z());
      q.normalize();
    } else {
      const double half = 0.5 * theta;
      const double s = std::sin(half) / theta;
      q = Quat(std::cos(half), s * omega.x(), s * omega.y(), s * omega.z());
    }
    return Rotation(q);
  }

  /// Inverse of exp(). The branch with angle in [0, pi] is returned; near pi
  /// the atan2 form stays stable because the quaternion vector part has unit
  /// magnitude there.
  Vec3 log() const {
    Quat q = q_;
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    const Vec3 v = q.vec();
    const double vn = v.norm();
    if (vn < 1e-12) return (2.0 / q.w()) * v;
    const double angle = 2.0 * std::atan2(vn, q.w());
    return (angle / vn) * v;
  }

  Mat3 matrix() const { return q_.toRotationMatrix(); }
  const Quat& quat() const { return q_; }

  Rotation inverse() const { return Rotation(q_.conjugate()); }

  Rotation operator*(const Rotation& rhs) const { return Rotation(q_ * rhs.q_); }
  Vec3 operator*(const Vec3& v) const { return q_ * v; }

  /// R^T * v without materializing the matrix.
  Vec3 unrotate(const Vec3& v) const { return q_.conjugate() * v; }

  /// Geodesic distance to another rotation, in radians.
  double angle_to(const Rotation& rhs) const {
    return (inverse() * rhs).log().norm();
  }

 private:
  Quat q_;
};

/// Rotation taking unit vector u onto unit vector v about their mutual
/// perpendicular. Antipodal inputs get a deterministic 180-degree rotation:
/// the axis is Gram-Schmidt of (1,0,0) against u, falling back to (0,1,0).
inline Rotation rotation_aligning(const Vec3& u, const Vec3& v) {
  const double c = u.dot(v);
  if (1.0 + c < 1e-12) {
    Vec3 axis = Vec3::UnitX() - u.dot(Vec3::UnitX()) * u;
    if (axis.norm() < 1e-6) axis = Vec3::UnitY() - u.dot(Vec3::UnitY()) * u;
    axis.normalize();
    return Rotation(Quat(0.0, axis.x(), axis.y(), axis.z()));
  }
  const Vec3 ax = u.cross(v);
  Quat q(1.0 + c, ax.x(), ax.y(), ax.z());
  return Rotation(q);
}

/// Pinhole intrinsics, pixels. fx, fy > 0 and the principal point inside
/// the image.
struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  bool valid() const {
    return fx > 0 && fy > 0 && cx >= 0 && cx < width && cy >= 0 && cy < height;
  }
};

/// Unit bearing through a pixel (camera frame, z forward).
inline Vec3 pixel_to_bearing(const Vec2& px, const Intrinsics& k) {
  return Vec3((px.x() - k.cx) / k.fx, (px.y() - k.cy) / k.fy, 1.0).normalized();
}

/// Projects a camera-frame direction back to pixels. The direction must
/// point in front of the camera.
inline Vec2 bearing_to_pixel(const Vec3& dir, const Intrinsics& k) {
  if (dir.z() <= 0.0)
    throw DegenerateGeometry("bearing_to_pixel: direction behind camera");
  return Vec2(k.fx * dir.x() / dir.z() + k.cx, k.fy * dir.y() / dir.z() + k.cy);
}

inline bool pixel_in_image(const Vec2& px, const Intrinsics& k) {
  return px.x() >= 0.0 && px.x() < k.width && px.y() >= 0.0 && px.y() < k.height;
}

/// Rigid camera pose: world-to-camera rotation plus camera center in world
/// coordinates.
struct CameraPose {
  Rotation rotation;       // world-to-camera
  Vec3 position = Vec3::Zero();  // camera center, world units

  /// World point -> camera frame.
  Vec3 to_camera(const Vec3& x_world) const {
    return rotation * (x_world - position);
  }
  /// Camera frame -> world point.
  Vec3 to_world(const Vec3& x_cam) const {
    return rotation.unrotate(x_cam) + position;
  }
};

/// Sim(3) element acting as x -> scale * R * x + translation.
struct SimilarityTransform {
  double scale = 1.0;
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  SimilarityTransform() = default;
  SimilarityTransform(double s, const Rotation& r, const Vec3& t)
      : scale(s), rotation(r), translation(t) {
    if (!(scale > 0.0))
      throw std::invalid_argument("SimilarityTransform: scale must be > 0");
  }

  static SimilarityTransform identity() { return SimilarityTransform(); }

  Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }

  SimilarityTransform inverse() const {
    const Rotation rinv = rotation.inverse();
    return SimilarityTransform(1.0 / scale, rinv,
                               (-1.0 / scale) * (rinv * translation));
  }

  /// Composition: (a * b)(x) = a(b(x)).
  SimilarityTransform operator*(const SimilarityTransform& rhs) const {
    return SimilarityTransform(scale * rhs.scale, rotation * rhs.rotation,
                               scale * (rotation * rhs.translation) + translation);
  }
};

inline SimilarityTransform sim3_compose(const SimilarityTransform& a,
                                        const SimilarityTransform& b) {
  return a * b;
}
inline SimilarityTransform sim3_invert(const SimilarityTransform& a) {
  return a.inverse();
}
inline Vec3 sim3_apply(const SimilarityTransform& a, const Vec3& x) {
  return a.apply(x);
}

/// Angle between two unit vectors, robust near 0 and pi.
inline double angle_between(const Vec3& u, const Vec3& v) {
  return std::atan2(u.cross(v).norm(), u.dot(v));
}

}  // namespace fslam
