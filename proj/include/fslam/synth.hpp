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

#include <map>
#include <stdexcept>
#include <vector>

#include "fslam/geometry.hpp"
#include "fslam/rng.hpp"

namespace fslam {

enum class MotionKind { Circular, Forward };
enum class DepthPreset { Close, Far };

/// Configuration of one synthetic trial: a short clip with scene points in
/// the first camera's frustum, pixel noise on the observations, and optional
/// noise on the per-frame rotations.
struct SceneConfig {
  MotionKind motion = MotionKind::Forward;
  double depth_min = 5.0;
  double depth_max = 10.0;
  int n_frames = 30;
  double camera_interval = 0.05;
  double hfov_deg = 60.0;
  int image_width = 800;
  int image_height = 600;
  int n_points = 200;
  double pixel_noise_sigma = 3.0;
  double rotation_noise_deg = 0.0;
  uint64_t seed = 0;

  void set_depth(DepthPreset p) {
    if (p == DepthPreset::Close) {
      depth_min = 5.0;
      depth_max = 10.0;
    } else {
      depth_min = 10.0;
      depth_max = 15.0;
    }
  }

  void validate() const {
    if (!(depth_min < depth_max))
      throw std::invalid_argument("SceneConfig: depth_min must be < depth_max");
    if (n_frames < 2) throw std::invalid_argument("SceneConfig: n_frames >= 2");
    if (pixel_noise_sigma < 0)
      throw std::invalid_argument("SceneConfig: pixel_noise_sigma >= 0");
    if (rotation_noise_deg < 0)
      throw std::invalid_argument("SceneConfig: rotation_noise_deg >= 0");
    if (n_points < 1) throw std::invalid_argument("SceneConfig: n_points >= 1");
    if (camera_interval <= 0)
      throw std::invalid_argument("SceneConfig: camera_interval > 0");
  }

  Intrinsics intrinsics() const {
    Intrinsics k;
    k.width = image_width;
    k.height = image_height;
    k.fx = 0.5 * image_width / std::tan(0.5 * hfov_deg * M_PI / 180.0);
    k.fy = k.fx;
    k.cx = 0.5 * image_width;
    k.cy = 0.5 * image_height;
    return k;
  }
};

struct GroundTruth {
  std::vector<CameraPose> poses;  // frame id == index
  std::vector<Vec3> points;       // track id == index
};

/// One noisy pixel observation of a track in a frame.
struct Observation {
  int64_t frame_id = 0;
  int64_t track_id = 0;
  Vec2 pixel = Vec2::Zero();
};

namespace detail {

// World-to-camera rotation looking from `from` toward `at`, y kept as close
// to world y as the view direction allows.
inline Rotation look_at(const Vec3& from, const Vec3& at) {
  const Vec3 z = (at - from).normalized();
  Vec3 up = Vec3::UnitY();
  if (std::abs(up.dot(z)) > 1.0 - 1e-9) up = Vec3::UnitX();
  const Vec3 x = up.cross(z).normalized();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.row(0) = x;
  r.row(1) = y;
  r.row(2) = z;
  return Rotation(r);
}

}  // namespace detail

/// Generates scene points uniform in the first camera's frustum and a camera
/// trajectory with fixed spacing between neighboring centers. Frame 0 sits at
/// the origin with identity rotation. Forward motion translates toward the
/// point centroid with the rotation held at identity; circular motion orbits
/// the centroid at constant radius (chord length = camera_interval), looking
/// at it.
inline GroundTruth generate_scene(const SceneConfig& cfg) {
  cfg.validate();
  const Intrinsics k = cfg.intrinsics();
  Rng rng(Rng::derive_seed(cfg.seed, 0));

  GroundTruth gt;
  gt.points.reserve(cfg.n_points);
  for (int i = 0; i < cfg.n_points; ++i) {
    const Vec2 px(rng.uniform(0.0, k.width), rng.uniform(0.0, k.height));
    const double depth = rng.uniform(cfg.depth_min, cfg.depth_max);
    const Vec3 b = pixel_to_bearing(px, k);
    gt.points.push_back(b * (depth / b.z()));
  }

  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : gt.points) centroid += p;
  centroid /= static_cast<double>(gt.points.size());

  gt.poses.resize(cfg.n_frames);
  gt.poses[0] = CameraPose{};  // identity at origin
  if (cfg.motion == MotionKind::Forward) {
    const Vec3 dir = centroid.normalized();
    for (int t = 1; t < cfg.n_frames; ++t) {
      gt.poses[t].rotation = Rotation::identity();
      gt.poses[t].position = dir * (cfg.camera_interval * t);
    }
  } else {
    const double radius = centroid.norm();
    const Vec3 g = centroid / radius;
    Vec3 h = g.cross(Vec3::UnitY());
    if (h.norm() < 1e-9) h = g.cross(Vec3::UnitX());
    h.normalize();
    const double dphi = 2.0 * std::asin(0.5 * cfg.camera_interval / radius);
    for (int t = 1; t < cfg.n_frames; ++t) {
      const double phi = dphi * t;
      const Vec3 q = centroid + radius * (-std::cos(phi) * g + std::sin(phi) * h);
      gt.poses[t].position = q;
      gt.poses[t].rotation = detail::look_at(q, centroid);
    }
  }
  return gt;
}

/// Projects every point into every frame and perturbs the visible pixels
/// with isotropic Gaussian noise of cfg.pixel_noise_sigma. Points behind a
/// camera or with an exact projection outside the image yield no observation
/// for that frame. Deterministic for a given config.
inline std::vector<Observation> generate_tracks(const GroundTruth& gt,
                                                const SceneConfig& cfg) {
  const Intrinsics k = cfg.intrinsics();
  Rng rng(Rng::derive_seed(cfg.seed, 1));
  std::vector<Observation> obs;
  for (size_t f = 0; f < gt.poses.size(); ++f) {
    for (size_t p = 0; p < gt.points.size(); ++p) {
      const Vec3 xc = gt.poses[f].to_camera(gt.points[p]);
      if (xc.z() <= 1e-12) continue;
      const Vec2 exact = bearing_to_pixel(xc, k);
      if (!pixel_in_image(exact, k)) continue;
      const Vec2 noisy =
          exact + cfg.pixel_noise_sigma * Vec2(rng.normal(), rng.normal());
      obs.push_back({static_cast<int64_t>(f), static_cast<int64_t>(p), noisy});
    }
  }
  return obs;
}

/// Composes each ground-truth rotation with a random-axis perturbation whose
/// angle is |N(0, noise_deg)|, standing in for a gyro/IMU rotation source.
/// noise_deg == 0 returns the ground-truth rotations untouched.
inline std::map<int64_t, Rotation> perturb_rotations(const GroundTruth& gt,
                                                     double noise_deg,
                                                     uint64_t seed) {
  if (noise_deg < 0) throw std::invalid_argument("rotation noise must be >= 0");
  std::map<int64_t, Rotation> out;
  Rng rng(Rng::derive_seed(seed, 2));
  for (size_t f = 0; f < gt.poses.size(); ++f) {
    if (noise_deg == 0.0) {
      out[static_cast<int64_t>(f)] = gt.poses[f].rotation;
      continue;
    }
    const double angle = std::abs(rng.normal(0.0, noise_deg)) * M_PI / 180.0;
    const Vec3 axis = rng.unit3();
    out[static_cast<int64_t>(f)] =
        Rotation::exp(axis * angle) * gt.poses[f].rotation;
  }
  return out;
}

}  // namespace fslam
