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
#include "fslam/geometry.hpp"

#include <gtest/gtest.h>

#include "fslam/rng.hpp"

namespace fslam {
namespace {

// Independent power-series oracle for the matrix exponential of [w]x.
Mat3 exp_series(const Vec3& w) {
  Mat3 hat;
  hat << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  Mat3 sum = Mat3::Identity();
  Mat3 term = Mat3::Identity();
  for (int k = 1; k < 20; ++k) {
    term = term * hat / static_cast<double>(k);
    sum += term;
  }
  return sum;
}

TEST(Rotation, ExpZeroIsIdentity) {
  EXPECT_LT((Rotation::exp(Vec3::Zero()).matrix() - Mat3::Identity()).norm(),
            1e-15);
}

TEST(Rotation, ExpQuarterTurnAboutZ) {
  const Rotation r = Rotation::exp(Vec3(0, 0, M_PI_2));
  EXPECT_LT((r * Vec3::UnitX() - Vec3::UnitY()).norm(), 1e-12);
}

TEST(Rotation, ExpMatchesPowerSeries) {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const Vec3 w = rng.unit3() * 0.3;
    EXPECT_LT((Rotation::exp(w).matrix() - exp_series(w)).norm(), 1e-12);
  }
}

TEST(Rotation, LogIdentityIsZero) {
  EXPECT_LT(Rotation::identity().log().norm(), 1e-15);
}

TEST(Rotation, ExpLogRoundTrip) {
  Rng rng(12);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 w = rng.unit3() * rng.uniform(0.0, 3.0);
    EXPECT_LT((Rotation::exp(w).log() - w).norm(), 1e-10);
  }
}

TEST(Rotation, LogOfHalfTurnAboutZ) {
  const Rotation r = Rotation::exp(Vec3(0, 0, M_PI));
  const Vec3 l = r.log();
  EXPECT_NEAR(l.norm(), M_PI, 1e-9);
  EXPECT_NEAR(std::abs(l.z()), M_PI, 1e-9);
  EXPECT_NEAR(l.x(), 0.0, 1e-9);
  EXPECT_NEAR(l.y(), 0.0, 1e-9);
}

TEST(Rotation, LogNearPiStable) {
  Rng rng(13);
  for (int i = 0; i < 100; ++i) {
    const Vec3 axis = rng.unit3();
    const double angle = M_PI - 1e-7 * rng.uniform01();
    const Vec3 w = axis * angle;
    EXPECT_LT((Rotation::exp(w).log() - w).norm(), 1e-7);
  }
}

TEST(Rotation, CompositionStaysOrthonormal) {
  Rng rng(14);
  Rotation r;
  for (int i = 0; i < 20000; ++i) r = r * Rotation::exp(rng.unit3() * 0.01);
  const Mat3 m = r.matrix();
  EXPECT_LT((m * m.transpose() - Mat3::Identity()).norm(), 1e-9);
  EXPECT_NEAR(m.determinant(), 1.0, 1e-9);
}

TEST(RotationAligning, EqualVectorsGiveIdentity) {
  const Vec3 u = Vec3(1, 2, 3).normalized();
  EXPECT_LT((rotation_aligning(u, u).matrix() - Mat3::Identity()).norm(), 1e-12);
}

TEST(RotationAligning, QuarterTurnCase) {
  const Rotation r = rotation_aligning(Vec3::UnitX(), Vec3::UnitY());
  EXPECT_LT((r.matrix() - Rotation::exp(Vec3(0, 0, M_PI_2)).matrix()).norm(),
            1e-12);
}

TEST(RotationAligning, MapsUOntoVRandomized) {
  Rng rng(15);
  for (int i = 0; i < 10000; ++i) {
    const Vec3 u = rng.unit3();
    const Vec3 v = rng.unit3();
    const Rotation r = rotation_aligning(u, v);
    EXPECT_LT((r * u - v).norm(), 1e-10);
    if ((r * u - v).norm() >= 1e-10) break;
    // Axis parallel to u x v for non-degenerate pairs.
    const Vec3 cr = u.cross(v);
    if (cr.norm() > 1e-6) {
      const Vec3 axis = r.log().normalized();
      EXPECT_LT(std::min((axis - cr.normalized()).norm(),
                         (axis + cr.normalized()).norm()),
                1e-8);
    }
  }
}

TEST(RotationAligning, AntipodalDeterministic) {
  const Vec3 u = Vec3(0.3, -0.4, 0.5).normalized();
  const Rotation r1 = rotation_aligning(u, -u);
  const Rotation r2 = rotation_aligning(u, -u);
  EXPECT_LT((r1 * u + u).norm(), 1e-10);
  EXPECT_EQ(r1.quat().coeffs(), r2.quat().coeffs());
  // 180-degree rotation with axis perpendicular to u.
  const Vec3 l = r1.log();
  EXPECT_NEAR(l.norm(), M_PI, 1e-9);
  EXPECT_NEAR(l.normalized().dot(u), 0.0, 1e-9);
}

Intrinsics test_intrinsics() {
  Intrinsics k;
  k.fx = 692.8;
  k.fy = 692.8;
  k.cx = 400;
  k.cy = 300;
  k.width = 800;
  k.height = 600;
  return k;
}

TEST(Bearings, PrincipalPointLooksForward) {
  const Intrinsics k = test_intrinsics();
  EXPECT_LT((pixel_to_bearing(Vec2(k.cx, k.cy), k) - Vec3::UnitZ()).norm(),
            1e-12);
}

TEST(Bearings, UnitTangentOffset) {
  const Intrinsics k = test_intrinsics();
  const Vec3 b = pixel_to_bearing(Vec2(k.cx + k.fx, k.cy), k);
  EXPECT_LT((b - Vec3(1, 0, 1).normalized()).norm(), 1e-12);
}

TEST(Bearings, RoundTripRandomPixels) {
  const Intrinsics k = test_intrinsics();
  Rng rng(16);
  for (int i = 0; i < 1000; ++i) {
    const Vec2 px(rng.uniform(0, k.width), rng.uniform(0, k.height));
    const Vec2 back = bearing_to_pixel(pixel_to_bearing(px, k), k);
    EXPECT_LT((px - back).norm(), 1e-9);
  }
}

TEST(Bearings, BehindCameraThrows) {
  const Intrinsics k = test_intrinsics();
  EXPECT_THROW(bearing_to_pixel(Vec3(0, 0, -1), k), DegenerateGeometry);
  EXPECT_THROW(bearing_to_pixel(Vec3(1, 0, 0), k), DegenerateGeometry);
}

SimilarityTransform random_sim3(Rng& rng) {
  return SimilarityTransform(std::exp(rng.uniform(-1.5, 1.5)),
                             Rotation::exp(rng.unit3() * rng.uniform(0, 3)),
                             rng.normal3() * 2.0);
}

TEST(Sim3, ComposeWithInverseIsIdentity) {
  Rng rng(17);
  const SimilarityTransform a = random_sim3(rng);
  const SimilarityTransform id = a * a.inverse();
  EXPECT_NEAR(id.scale, 1.0, 1e-12);
  EXPECT_LT(id.translation.norm(), 1e-12);
  EXPECT_LT((id.rotation.matrix() - Mat3::Identity()).norm(), 1e-12);
}

TEST(Sim3, PureScale) {
  const SimilarityTransform s(2.0, Rotation::identity(), Vec3::Zero());
  EXPECT_LT((s.apply(Vec3(1, 1, 1)) - Vec3(2, 2, 2)).norm(), 1e-15);
}

TEST(Sim3, GroupLawsRandomized) {
  Rng rng(18);
  for (int i = 0; i < 500; ++i) {
    const SimilarityTransform a = random_sim3(rng);
    const SimilarityTransform b = random_sim3(rng);
    const SimilarityTransform c = random_sim3(rng);
    const Vec3 x = rng.normal3() * 3.0;
    const double tol = 1e-9 * (1.0 + x.norm());
    EXPECT_LT((sim3_apply(sim3_compose(a, b), x) - a.apply(b.apply(x))).norm(),
              tol);
    EXPECT_LT((sim3_apply(sim3_invert(a), a.apply(x)) - x).norm(), tol);
    const Vec3 left = ((a * b) * c).apply(x);
    const Vec3 right = (a * (b * c)).apply(x);
    EXPECT_LT((left - right).norm(), tol);
  }
}

TEST(Sim3, NonPositiveScaleRejected) {
  EXPECT_THROW(SimilarityTransform(0.0, Rotation::identity(), Vec3::Zero()),
               std::invalid_argument);
  EXPECT_THROW(SimilarityTransform(-2.0, Rotation::identity(), Vec3::Zero()),
               std::invalid_argument);
}

}  // namespace
}  // namespace fslam
