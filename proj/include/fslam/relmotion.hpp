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

#include <vector>

#include <Eigen/SVD>

#include "fslam/geometry.hpp"
#include "fslam/rng.hpp"

namespace fslam {

struct TwoPointConfig {
  int iterations = 200;
  // On |t.n| / ||n||, dimensionless. The residual of a clean correspondence
  // scales like bearing-noise / parallax-angle, which reaches a few times
  // 1e-2 under 3 px noise at small baselines, so the gate sits well above
  // that and only sheds gross outliers.
  double inlier_threshold = 0.2;
};

/// Relative motion of a frame w.r.t. its keyframe: known rotation plus the
/// translation direction recovered by the two-point solver. The direction
/// points from the keyframe center toward the frame's center, expressed in
/// keyframe coordinates.
struct RelativeMotion {
  Rotation rotation;                 // keyframe -> frame (world-to-camera style)
  Vec3 translation_dir = Vec3::UnitZ();
  std::vector<int64_t> inlier_ids;
  bool low_parallax = false;
};

namespace detail {

// Epipolar-plane normal of one correspondence, in keyframe coordinates.
// b_i is the keyframe bearing, b_j the frame bearing, rot the keyframe->frame
// rotation. Vanishes when the motion has no parallax for this point.
inline Vec3 epipolar_normal(const Vec3& b_i, const Vec3& b_j, const Rotation& rot) {
  return b_i.cross(rot.unrotate(b_j));
}

// Closest-approach parameters of the rays alpha*t and p_k - beta*p_jk.
// Returns false when the 2x2 system is singular (parallel rays).
inline bool closest_ray_params(const Vec3& t, const Vec3& p_k, const Vec3& p_jk,
                               double& alpha, double& beta) {
  const double c = t.dot(p_jk);
  const double det = 1.0 - c * c;
  if (std::abs(det) < 1e-9) return false;
  const double b1 = t.dot(p_k);
  const double b2 = p_jk.dot(p_k);
  alpha = (b1 - c * b2) / det;
  beta = (b2 - c * b1) / det;
  return true;
}

}  // namespace detail

/// Two-point translation-direction solver for a known relative rotation.
/// Each correspondence contributes one epipolar-plane normal; a pair of
/// normals gives a hypothesis t = n_a x n_b, scored by |t.n_k| / ||n_k||.
/// The inlier refit takes the smallest singular direction of the stacked
/// unit normals; the sign is fixed by majority cheirality. Correspondences
/// with a vanishing normal carry no constraint and count as inliers.
inline RelativeMotion two_point_translation(const std::vector<Vec3>& bearings_i,
                                            const std::vector<Vec3>& bearings_j,
                                            const std::vector<int64_t>& track_ids,
                                            const Rotation& rot,
                                            const TwoPointConfig& cfg,
                                            uint64_t seed) {
  const size_t n = bearings_i.size();
  if (n != bearings_j.size() || n != track_ids.size())
    throw std::invalid_argument("two_point_translation: size mismatch");
  if (n < 2)
    throw std::invalid_argument("two_point_translation: need >= 2 correspondences");

  constexpr double kNormalEps = 1e-12;

  std::vector<Vec3> normals(n);
  std::vector<double> norms(n);
  std::vector<size_t> informative;
  for (size_t k = 0; k < n; ++k) {
    normals[k] = detail::epipolar_normal(bearings_i[k], bearings_j[k], rot);
    norms[k] = normals[k].norm();
    if (norms[k] >= kNormalEps) informative.push_back(k);
  }

  RelativeMotion out;
  out.rotation = rot;

  // Pure-rotation motion: every normal vanishes, any direction fits.
  if (informative.size() < 2) {
    out.low_parallax = true;
    out.translation_dir = Vec3::UnitZ();
    out.inlier_ids = track_ids;
    return out;
  }

  auto residual = [&](const Vec3& t, size_t k) {
    return norms[k] < kNormalEps ? 0.0 : std::abs(t.dot(normals[k])) / norms[k];
  };

  Rng rng(seed);
  Vec3 best_t = Vec3::Zero();
  size_t best_inliers = 0;
  double best_score = std::numeric_limits<double>::infinity();
  bool have_hypothesis = false;
  for (int it = 0; it < cfg.iterations; ++it) {
    const size_t a = informative[rng.uniform_index(informative.size())];
    size_t b = a;
    while (b == a) b = informative[rng.uniform_index(informative.size())];
    const Vec3 h = normals[a].cross(normals[b]);
    if (h.norm() < kNormalEps * norms[a] * norms[b]) continue;
    const Vec3 t = h.normalized();
    size_t count = 0;
    double score = 0.0;
    for (size_t k = 0; k < n; ++k) {
      const double r = residual(t, k);
      if (r < cfg.inlier_threshold) {
        ++count;
        score += r;
      }
    }
    if (count > best_inliers || (count == best_inliers && score < best_score)) {
      best_inliers = count;
      best_score = score;
      best_t = t;
      have_hypothesis = true;
    }
  }
  if (!have_hypothesis)
    throw DegenerateGeometry(
        "two_point_translation: all hypotheses degenerate (parallel normals)");

  // Refit on the best hypothesis' inliers: null direction of the stacked
  // normals. Unnormalized rows weight each plane by its parallax, which is
  // the natural precision weighting.
  std::vector<size_t> inliers;
  for (size_t k = 0; k < n; ++k)
    if (residual(best_t, k) < cfg.inlier_threshold) inliers.push_back(k);
  MatX a = MatX::Zero(inliers.size(), 3);
  {
    int row = 0;
    for (size_t k : inliers) a.row(row++) = normals[k].transpose();
  }
  Eigen::JacobiSVD<MatX> svd(a, Eigen::ComputeFullV);
  Vec3 t = svd.matrixV().col(2);
  const VecX sv = svd.singularValues();
  const double s1 = sv(0);
  const double s2 = sv.size() > 1 ? sv(1) : 0.0;
  const double s3 = sv.size() > 2 ? sv(2) : 0.0;
  // Ambiguous null space: the second-smallest singular value sits at the
  // noise floor too, so the direction is not determined.
  const double noise_floor = s3 + 1e-12 * std::max(1.0, s1);
  out.low_parallax = (s2 - s3) < 10.0 * noise_floor;

  // Cheirality: both ray parameters must be positive for points in front of
  // both cameras; flip t if the majority of all correspondences says so.
  int votes_pos = 0, votes_neg = 0;
  for (size_t k = 0; k < n; ++k) {
    if (norms[k] < kNormalEps) continue;
    double alpha, beta;
    if (!detail::closest_ray_params(t, bearings_i[k],
                                    rot.unrotate(bearings_j[k]), alpha, beta))
      continue;
    if (alpha > 0 && beta > 0) ++votes_pos;
    if (alpha < 0 && beta > 0) ++votes_neg;
  }
  if (votes_neg > votes_pos) t = -t;

  out.translation_dir = t;
  for (size_t k = 0; k < n; ++k)
    if (residual(t, k) < cfg.inlier_threshold) out.inlier_ids.push_back(track_ids[k]);
  return out;
}

}  // namespace fslam
