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
#include <optional>
#include <set>
#include <vector>

#include <Eigen/SVD>

#include "fslam/geometry.hpp"
#include "fslam/relmotion.hpp"

namespace fslam {

enum class RaySignal { Ok, DegenerateSkip, CheiralityReject };

struct RayMidpoint {
  RaySignal signal = RaySignal::Ok;
  double alpha = 0.0;
  double beta = 0.0;
  Vec3 midpoint = Vec3::Zero();
};

/// Closest point between the ray alpha*t from the origin and the ray
/// p_k - beta*p_jk from p_k, via the 2x2 normal system; the midpoint of the
/// mutual-perpendicular segment approximates the (depth-scaled) camera
/// position. Near-parallel rays signal DegenerateSkip; a negative parameter
/// means the point reconstructs behind a camera and signals CheiralityReject.
inline RayMidpoint ray_midpoint_params(const Vec3& t, const Vec3& p_k,
                                       const Vec3& p_jk) {
  RayMidpoint r;
  const double c = t.dot(p_jk);
  const double det = 1.0 - c * c;
  if (std::abs(det) < 1e-9) {
    r.signal = RaySignal::DegenerateSkip;
    return r;
  }
  const double b1 = t.dot(p_k);
  const double b2 = p_jk.dot(p_k);
  r.alpha = (b1 - c * b2) / det;
  r.beta = (b2 - c * b1) / det;
  if (r.alpha <= 0.0 || r.beta <= 0.0) {
    r.signal = RaySignal::CheiralityReject;
    return r;
  }
  r.midpoint = 0.5 * (r.alpha * t + p_k - r.beta * p_jk);
  return r;
}

/// The camera-point constraint vector v = 0.5*(alpha*R(w) + I - beta*R(th))*p_k,
/// where R(w) aligns p_k with t and R(th) aligns p_k with p_jk. Algebraically
/// identical to the ray midpoint; both forms are kept because the rotation
/// form is what makes the constraint linear in p_k.
inline Vec3 camera_point_vector(const Vec3& t, const Vec3& p_k, const Vec3& p_jk,
                                double alpha, double beta) {
  const Mat3 r_omega = rotation_aligning(p_k, t).matrix();
  const Mat3 r_theta = rotation_aligning(p_k, p_jk).matrix();
  const Mat3 a = 0.5 * (alpha * r_omega + Mat3::Identity() - beta * r_theta);
  return a * p_k;
}

/// The 3m x n stacked constraint matrix M. Rows arrive one frame-block at a
/// time; columns may be dropped when a track leaves the full-window set.
/// Cells suppressed by per-frame ray signals are absent, not zero.
class ConstraintMatrix {
 public:
  void set_tracks(const std::vector<int64_t>& ids) {
    if (frame_count() > 0)
      throw std::logic_error("ConstraintMatrix: tracks fixed after first frame");
    track_ids_ = ids;
  }

  /// Appends one frame block. `cells` maps track id -> v vector; absent
  /// tracks get a masked-out cell.
  void append_frame(int64_t frame_id, const std::map<int64_t, Vec3>& cells) {
    const int n = col_count();
    values_.conservativeResize(values_.rows() + 3, n);
    mask_.conservativeResize(mask_.rows() + 1, n);
    const int j = static_cast<int>(frame_ids_.size());
    frame_ids_.push_back(frame_id);
    for (int k = 0; k < n; ++k) {
      auto it = cells.find(track_ids_[k]);
      if (it == cells.end()) {
        mask_(j, k) = 0;
        values_.block<3, 1>(3 * j, k).setZero();
      } else {
        mask_(j, k) = 1;
        values_.block<3, 1>(3 * j, k) = it->second;
      }
    }
  }

  /// Keeps only the listed tracks (set intersection), dropping columns.
  void keep_tracks(const std::set<int64_t>& keep) {
    std::vector<int> cols;
    for (int k = 0; k < col_count(); ++k)
      if (keep.count(track_ids_[k])) cols.push_back(k);
    if (static_cast<int>(cols.size()) == col_count()) return;
    MatX v(values_.rows(), cols.size());
    Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic> m(mask_.rows(),
                                                             cols.size());
    std::vector<int64_t> ids;
    for (size_t i = 0; i < cols.size(); ++i) {
      v.col(i) = values_.col(cols[i]);
      m.col(i) = mask_.col(cols[i]);
      ids.push_back(track_ids_[cols[i]]);
    }
    values_ = std::move(v);
    mask_ = std::move(m);
    track_ids_ = std::move(ids);
  }

  int frame_count() const { return static_cast<int>(frame_ids_.size()); }
  int col_count() const { return static_cast<int>(track_ids_.size()); }
  bool column_has_data(int k) const {
    for (int j = 0; j < frame_count(); ++j)
      if (mask_(j, k)) return true;
    return false;
  }
  const std::vector<int64_t>& track_ids() const { return track_ids_; }
  const std::vector<int64_t>& frame_ids() const { return frame_ids_; }
  bool present(int j, int k) const { return mask_(j, k) != 0; }
  Vec3 cell(int j, int k) const { return values_.block<3, 1>(3 * j, k); }

  /// Dense view with missing cells zeroed (callers that need a completion
  /// should fill from a model).
  const MatX& values() const { return values_; }

 private:
  std::vector<int64_t> track_ids_;
  std::vector<int64_t> frame_ids_;
  MatX values_;  // 3m x n
  Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic> mask_;  // m x n
};

struct FactorizeResult {
  VecX camera_stack;  // C, 3m, unit norm
  VecX inverse_depths;  // D, n
  double singular_ratio = 0.0;  // r2 / r1 of the (model-completed) matrix
  int iterations = 0;
  bool converged = false;
  std::vector<double> residual_history;  // Frobenius residual per iteration
  std::vector<int64_t> nonpositive_depth_tracks;
};

class FactorizationError : public std::runtime_error {
 public:
  FactorizationError(const std::string& what, FactorizeResult last)
      : std::runtime_error(what), last_iterate(std::move(last)) {}
  FactorizeResult last_iterate;
};

/// Rank-1 factorization M ~ C * D^T by alternating least squares (power
/// iteration on the normal matrix), tolerating missing cells by summing only
/// over present ones. Gauge: ||C|| = 1 and the sign flipped so the majority
/// of D is positive. The fit residual over present cells never increases.
inline FactorizeResult rank1_factorize(const ConstraintMatrix& m,
                                       const std::optional<VecX>& init_depths,
                                       double tol = 1e-10, int max_iters = 50) {
  const int nf = m.frame_count();
  const int nc = m.col_count();
  if (nf < 1 || nc < 2)
    throw std::invalid_argument("rank1_factorize: need >= 1 frame and >= 2 columns");

  VecX d = init_depths.value_or(VecX::Ones(nc));
  if (d.size() != nc)
    throw std::invalid_argument("rank1_factorize: init size mismatch");
  VecX c = VecX::Zero(3 * nf);

  FactorizeResult res;
  auto fit_residual = [&]() {
    double s = 0.0;
    for (int j = 0; j < nf; ++j)
      for (int k = 0; k < nc; ++k)
        if (m.present(j, k))
          s += (m.cell(j, k) - c.segment<3>(3 * j) * d(k)).squaredNorm();
    return std::sqrt(s);
  };

  VecX prev_c, prev_d;
  for (int it = 0; it < max_iters; ++it) {
    // C step: per-frame least squares over present cells.
    for (int j = 0; j < nf; ++j) {
      Vec3 num = Vec3::Zero();
      double den = 0.0;
      for (int k = 0; k < nc; ++k) {
        if (!m.present(j, k)) continue;
        num += d(k) * m.cell(j, k);
        den += d(k) * d(k);
      }
      c.segment<3>(3 * j) = den > 1e-300 ? Vec3(num / den) : Vec3::Zero();
    }
    // D step: per-column least squares over present cells.
    for (int k = 0; k < nc; ++k) {
      double num = 0.0, den = 0.0;
      for (int j = 0; j < nf; ++j) {
        if (!m.present(j, k)) continue;
        num += c.segment<3>(3 * j).dot(m.cell(j, k));
        den += c.segment<3>(3 * j).squaredNorm();
      }
      d(k) = den > 1e-300 ? num / den : 0.0;
    }
    // Fix the scale gauge before measuring progress.
    const double cn = c.norm();
    if (cn > 1e-300) {
      c /= cn;
      d *= cn;
    }
    res.residual_history.push_back(fit_residual());
    res.iterations = it + 1;
    if (it > 0) {
      const double dc = (c - prev_c).norm() / std::max(prev_c.norm(), 1e-300);
      const double dd = (d - prev_d).norm() / std::max(prev_d.norm(), 1e-300);
      if (std::max(dc, dd) < tol) {
        res.converged = true;
        break;
      }
    }
    prev_c = c;
    prev_d = d;
  }

  // Sign gauge: majority of data-backed inverse depths positive.
  int pos = 0, neg = 0;
  for (int k = 0; k < nc; ++k) {
    if (!m.column_has_data(k)) continue;
    (d(k) > 0 ? pos : neg)++;
  }
  if (neg > pos) {
    c = -c;
    d = -d;
  }
  res.camera_stack = c;
  res.inverse_depths = d;
  for (int k = 0; k < nc; ++k)
    if (d(k) <= 0.0) res.nonpositive_depth_tracks.push_back(m.track_ids()[k]);

  // Spectral diagnostic on the model-completed matrix.
  MatX filled = m.values();
  for (int j = 0; j < nf; ++j)
    for (int k = 0; k < nc; ++k)
      if (!m.present(j, k)) filled.block<3, 1>(3 * j, k) = c.segment<3>(3 * j) * d(k);
  Eigen::BDCSVD<MatX> svd(filled);
  const VecX sv = svd.singularValues();
  res.singular_ratio = sv(0) > 0 ? sv(1) / sv(0) : 0.0;

  if (!res.converged)
    throw FactorizationError("rank1_factorize: no convergence in " +
                                 std::to_string(max_iters) + " iterations",
                             res);
  return res;
}

/// A keyframe-anchored local map: member-frame poses relative to the
/// keyframe (which sits at the origin with identity rotation) and
/// inverse-depth points along keyframe bearings. The camera-position stack
/// is normalized to unit length; only positive inverse depths are stored.
struct LocalMap {
  enum class State { Factorized, TriangulatedAugmented, BaRefined };

  int64_t keyframe_id = 0;
  std::vector<int64_t> frame_ids;     // excludes the keyframe
  std::vector<Rotation> rotations;    // R_j, keyframe-local
  std::vector<Vec3> positions;        // c_j, keyframe-local units
  std::map<int64_t, Vec3> bearings;   // p_k on the keyframe (unit)
  std::map<int64_t, double> inverse_depths;  // d_k > 0
  State state = State::Factorized;
  bool low_parallax = false;

  Vec3 point(int64_t track) const {
    return bearings.at(track) / inverse_depths.at(track);
  }
  bool has_point(int64_t track) const { return inverse_depths.count(track) > 0; }

  std::optional<CameraPose> pose_of(int64_t frame) const {
    if (frame == keyframe_id) return CameraPose{};
    for (size_t j = 0; j < frame_ids.size(); ++j)
      if (frame_ids[j] == frame) return CameraPose{rotations[j], positions[j]};
    return std::nullopt;
  }
};

struct OdometryConfig {
  TwoPointConfig two_point;
  double factor_tol = 1e-10;
  int factor_max_iters = 50;
  int min_tracks = 8;
};

class InsufficientSupport : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incremental rank-1 odometry over one local window (Algorithm-1 style):
/// each new frame contributes a translation direction, a block-row of
/// constraint vectors, and a warm-started refactorization.
class WindowOdometry {
 public:
  WindowOdometry(int64_t keyframe_id, std::map<int64_t, Vec3> keyframe_bearings,
                 const OdometryConfig& cfg = {})
      : cfg_(cfg), keyframe_id_(keyframe_id),
        keyframe_bearings_(std::move(keyframe_bearings)) {}

  /// Advances the window with a frame. `rel_rotation` maps keyframe
  /// coordinates to frame coordinates; `frame_bearings` holds the frame's
  /// unit bearings by track id. Returns the refreshed factorization.
  const FactorizeResult& add_frame(int64_t frame_id, const Rotation& rel_rotation,
                                   const std::map<int64_t, Vec3>& frame_bearings,
                                   uint64_t seed) {
    // Full-window tracks: seen on the keyframe and every frame so far.
    std::set<int64_t> survivors;
    if (matrix_.frame_count() == 0) {
      std::vector<int64_t> ids;
      for (const auto& [t, b] : keyframe_bearings_)
        if (frame_bearings.count(t)) ids.push_back(t);
      matrix_.set_tracks(ids);
    } else {
      for (int64_t t : matrix_.track_ids())
        if (frame_bearings.count(t)) survivors.insert(t);
      matrix_.keep_tracks(survivors);
    }
    if (matrix_.col_count() < cfg_.min_tracks)
      throw InsufficientSupport("window " + std::to_string(keyframe_id_) +
                                ": only " + std::to_string(matrix_.col_count()) +
                                " full-window tracks at frame " +
                                std::to_string(frame_id));

    std::vector<Vec3> b_i, b_j;
    std::vector<int64_t> ids;
    for (int64_t t : matrix_.track_ids()) {
      b_i.push_back(keyframe_bearings_.at(t));
      b_j.push_back(frame_bearings.at(t));
      ids.push_back(t);
    }
    RelativeMotion motion =
        two_point_translation(b_i, b_j, ids, rel_rotation, cfg_.two_point, seed);

    std::map<int64_t, Vec3> cells;
    for (size_t k = 0; k < ids.size(); ++k) {
      const Vec3 p_jk = rel_rotation.unrotate(b_j[k]);
      const RayMidpoint rm =
          ray_midpoint_params(motion.translation_dir, b_i[k], p_jk);
      if (rm.signal != RaySignal::Ok) continue;
      cells[ids[k]] = camera_point_vector(motion.translation_dir, b_i[k], p_jk,
                                          rm.alpha, rm.beta);
    }
    matrix_.append_frame(frame_id, cells);
    motions_.push_back(std::move(motion));
    rotations_.push_back(rel_rotation);
    frame_ids_.push_back(frame_id);

    factorization_ = rank1_factorize(matrix_, warm_start(), cfg_.factor_tol,
                                     cfg_.factor_max_iters);
    prev_track_ids_ = matrix_.track_ids();
    // Tracks that factor to a strictly negative depth are inconsistent and
    // get dropped from the matrix; columns whose cells are all masked out so
    // far stay (later frames may fill them) but carry no map point.
    std::set<int64_t> keep;
    for (int k = 0; k < matrix_.col_count(); ++k) {
      const int64_t t = matrix_.track_ids()[k];
      if (factorization_->inverse_depths(k) >= 0.0 || !matrix_.column_has_data(k))
        keep.insert(t);
    }
    if (static_cast<int>(keep.size()) >= cfg_.min_tracks &&
        static_cast<int>(keep.size()) < matrix_.col_count())
      matrix_.keep_tracks(keep);
    return *factorization_;
  }

  bool started() const { return factorization_.has_value(); }
  const ConstraintMatrix& matrix() const { return matrix_; }
  const FactorizeResult& factorization() const { return *factorization_; }
  const std::vector<RelativeMotion>& motions() const { return motions_; }
  int64_t keyframe_id() const { return keyframe_id_; }

  LocalMap local_map() const {
    if (!factorization_)
      throw std::logic_error("WindowOdometry: no factorization yet");
    LocalMap map;
    map.keyframe_id = keyframe_id_;
    map.frame_ids = frame_ids_;
    map.rotations = rotations_;
    const VecX& c = factorization_->camera_stack;
    for (size_t j = 0; j < frame_ids_.size(); ++j)
      map.positions.push_back(c.segment<3>(3 * static_cast<int>(j)));
    const VecX& d = factorization_->inverse_depths;
    for (size_t k = 0; k < prev_track_ids_.size(); ++k) {
      if (d(static_cast<int>(k)) <= 0.0) continue;
      const int64_t t = prev_track_ids_[k];
      map.bearings[t] = keyframe_bearings_.at(t);
      map.inverse_depths[t] = d(static_cast<int>(k));
    }
    for (const RelativeMotion& m : motions_) map.low_parallax |= m.low_parallax;
    return map;
  }

 private:
  std::optional<VecX> warm_start() const {
    if (!factorization_) return std::nullopt;
    // Map previous depths onto the current column set; columns never appear
    // mid-window, but they do get dropped.
    std::map<int64_t, double> prev;
    for (size_t k = 0; k < prev_track_ids_.size(); ++k)
      prev[prev_track_ids_[k]] = factorization_->inverse_depths(k);
    VecX init(matrix_.col_count());
    std::vector<double> known;
    for (const auto& [t, v] : prev) known.push_back(v);
    double median = 1.0;
    if (!known.empty()) {
      auto mid = known.begin() + known.size() / 2;
      std::nth_element(known.begin(), mid, known.end());
      median = *mid;
    }
    for (int k = 0; k < matrix_.col_count(); ++k) {
      auto it = prev.find(matrix_.track_ids()[k]);
      init(k) = it != prev.end() ? it->second : median;
    }
    return init;
  }

  OdometryConfig cfg_;
  int64_t keyframe_id_;
  std::map<int64_t, Vec3> keyframe_bearings_;
  ConstraintMatrix matrix_;
  std::vector<int64_t> frame_ids_;
  std::vector<Rotation> rotations_;
  std::vector<RelativeMotion> motions_;
  std::optional<FactorizeResult> factorization_;
  std::vector<int64_t> prev_track_ids_;
};

}  // namespace fslam
