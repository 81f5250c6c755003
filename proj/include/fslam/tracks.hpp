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

#include <algorithm>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fslam/geometry.hpp"
#include "fslam/synth.hpp"

namespace fslam {

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// All pixel observations of one track, keyed by frame id.
struct FeatureTrack {
  int64_t id = 0;
  std::map<int64_t, Vec2> observations;
};

/// Parsed track file: intrinsics, observations indexed both ways, optional
/// per-frame rotations and ground-truth poses.
class TrackDataset {
 public:
  Intrinsics intrinsics;
  std::map<int64_t, FeatureTrack> tracks;                 // by track id
  std::map<int64_t, std::set<int64_t>> frames;            // frame -> track ids
  std::map<int64_t, Rotation> rotations;                  // optional, w2c
  std::map<int64_t, CameraPose> ground_truth;             // optional

  void add_observation(int64_t frame, int64_t track, const Vec2& px) {
    auto& t = tracks[track];
    t.id = track;
    if (!t.observations.emplace(frame, px).second)
      throw std::invalid_argument("duplicate observation for (frame " +
                                  std::to_string(frame) + ", track " +
                                  std::to_string(track) + ")");
    frames[frame].insert(track);
  }

  bool has_observation(int64_t frame, int64_t track) const {
    auto it = tracks.find(track);
    return it != tracks.end() && it->second.observations.count(frame) > 0;
  }

  Vec2 pixel(int64_t frame, int64_t track) const {
    return tracks.at(track).observations.at(frame);
  }

  Vec3 bearing(int64_t frame, int64_t track) const {
    return pixel_to_bearing(pixel(frame, track), intrinsics);
  }

  std::vector<int64_t> frame_ids() const {
    std::vector<int64_t> ids;
    ids.reserve(frames.size());
    for (const auto& [f, _] : frames) ids.push_back(f);
    return ids;
  }

  std::vector<int64_t> shared_tracks(int64_t frame_a, int64_t frame_b) const {
    std::vector<int64_t> out;
    auto ia = frames.find(frame_a);
    auto ib = frames.find(frame_b);
    if (ia == frames.end() || ib == frames.end()) return out;
    std::set_intersection(ia->second.begin(), ia->second.end(),
                          ib->second.begin(), ib->second.end(),
                          std::back_inserter(out));
    return out;
  }
};

namespace detail {

inline Quat parse_quaternion(double w, double x, double y, double z, int line) {
  Quat q(w, x, y, z);
  if (std::abs(q.norm() - 1.0) > 1e-6)
    throw ParseError(line, "quaternion not normalized (tolerance 1e-6)");
  q.normalize();
  return q;
}

}  // namespace detail

/// Reads the line-oriented track format:
///   intrinsics <fx> <fy> <cx> <cy> <width> <height>   (first, exactly once)
///   obs <frame> <track> <x_px> <y_px>
///   rot <frame> <qw> <qx> <qy> <qz>
///   gt  <frame> <qw> <qx> <qy> <qz> <cx> <cy> <cz>
/// '#' starts a comment. Malformed input throws ParseError with the line.
inline TrackDataset read_track_file(std::istream& in) {
  TrackDataset ds;
  bool have_intrinsics = false;
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    std::istringstream ls(raw);
    std::string tag;
    if (!(ls >> tag)) continue;

    auto need = [&](auto&... vals) {
      if (!((ls >> vals) && ...))
        throw ParseError(lineno, "malformed '" + tag + "' record");
    };
    auto frame_ok = [&](int64_t f) {
      if (f < 0) throw ParseError(lineno, "frame id must be non-negative");
      return f;
    };

    if (tag == "intrinsics") {
      if (have_intrinsics) throw ParseError(lineno, "duplicate intrinsics");
      need(ds.intrinsics.fx, ds.intrinsics.fy, ds.intrinsics.cx,
           ds.intrinsics.cy, ds.intrinsics.width, ds.intrinsics.height);
      if (!ds.intrinsics.valid()) throw ParseError(lineno, "invalid intrinsics");
      have_intrinsics = true;
      continue;
    }
    if (!have_intrinsics)
      throw ParseError(lineno, "first record must be 'intrinsics'");

    if (tag == "obs") {
      int64_t frame, track;
      double x, y;
      need(frame, track, x, y);
      frame_ok(frame);
      try {
        ds.add_observation(frame, track, Vec2(x, y));
      } catch (const std::invalid_argument& e) {
        throw ParseError(lineno, e.what());
      }
    } else if (tag == "rot") {
      int64_t frame;
      double w, x, y, z;
      need(frame, w, x, y, z);
      frame_ok(frame);
      if (!ds.rotations.emplace(frame, Rotation(detail::parse_quaternion(w, x, y, z, lineno))).second)
        throw ParseError(lineno, "duplicate rot record for frame " + std::to_string(frame));
    } else if (tag == "gt") {
      int64_t frame;
      double w, x, y, z, px, py, pz;
      need(frame, w, x, y, z, px, py, pz);
      frame_ok(frame);
      CameraPose pose;
      pose.rotation = Rotation(detail::parse_quaternion(w, x, y, z, lineno));
      pose.position = Vec3(px, py, pz);
      if (!ds.ground_truth.emplace(frame, pose).second)
        throw ParseError(lineno, "duplicate gt record for frame " + std::to_string(frame));
    } else {
      throw ParseError(lineno, "unknown record type '" + tag + "'");
    }
  }
  if (!have_intrinsics) throw ParseError(lineno, "missing intrinsics record");
  return ds;
}

namespace detail {

inline std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// Writes a dataset in the track-file format, frames ascending, with `rot`
/// and `gt` records before that frame's observations. %.17g keeps the
/// text round-trip lossless.
inline void write_track_file(std::ostream& out, const TrackDataset& ds) {
  using detail::fmt_num;
  out << "intrinsics " << fmt_num(ds.intrinsics.fx) << ' '
      << fmt_num(ds.intrinsics.fy) << ' ' << fmt_num(ds.intrinsics.cx) << ' '
      << fmt_num(ds.intrinsics.cy) << ' ' << ds.intrinsics.width << ' '
      << ds.intrinsics.height << '\n';
  std::set<int64_t> all_frames;
  for (const auto& [f, _] : ds.frames) all_frames.insert(f);
  for (const auto& [f, _] : ds.rotations) all_frames.insert(f);
  for (const auto& [f, _] : ds.ground_truth) all_frames.insert(f);
  for (int64_t f : all_frames) {
    if (auto it = ds.rotations.find(f); it != ds.rotations.end()) {
      const Quat& q = it->second.quat();
      out << "rot " << f << ' ' << fmt_num(q.w()) << ' ' << fmt_num(q.x())
          << ' ' << fmt_num(q.y()) << ' ' << fmt_num(q.z()) << '\n';
    }
    if (auto it = ds.ground_truth.find(f); it != ds.ground_truth.end()) {
      const Quat& q = it->second.rotation.quat();
      const Vec3& c = it->second.position;
      out << "gt " << f << ' ' << fmt_num(q.w()) << ' ' << fmt_num(q.x())
          << ' ' << fmt_num(q.y()) << ' ' << fmt_num(q.z()) << ' '
          << fmt_num(c.x()) << ' ' << fmt_num(c.y()) << ' ' << fmt_num(c.z())
          << '\n';
    }
    if (auto it = ds.frames.find(f); it != ds.frames.end()) {
      for (int64_t t : it->second) {
        const Vec2 px = ds.pixel(f, t);
        out << "obs " << f << ' ' << t << ' ' << fmt_num(px.x()) << ' '
            << fmt_num(px.y()) << '\n';
      }
    }
  }
}

/// Builds a dataset from synthetic ground truth. `rotations` may be empty.
inline TrackDataset make_dataset(const SceneConfig& cfg, const GroundTruth& gt,
                                 const std::vector<Observation>& obs,
                                 const std::map<int64_t, Rotation>& rotations) {
  TrackDataset ds;
  ds.intrinsics = cfg.intrinsics();
  for (const Observation& o : obs) ds.add_observation(o.frame_id, o.track_id, o.pixel);
  ds.rotations = rotations;
  for (size_t f = 0; f < gt.poses.size(); ++f)
    ds.ground_truth[static_cast<int64_t>(f)] = gt.poses[f];
  return ds;
}

/// Median angle between rotation-compensated view rays of the shared tracks.
/// Rotations are world-to-camera for each frame.
inline double median_parallax(const TrackDataset& ds, int64_t frame_a,
                              int64_t frame_b, const Rotation& rot_a,
                              const Rotation& rot_b) {
  const std::vector<int64_t> shared = ds.shared_tracks(frame_a, frame_b);
  if (shared.empty())
    throw DegenerateGeometry("median_parallax: no shared tracks");
  std::vector<double> angles;
  angles.reserve(shared.size());
  for (int64_t t : shared) {
    const Vec3 u = ds.bearing(frame_a, t);
    // Express frame_b's ray in frame_a's camera frame before measuring.
    const Vec3 v = rot_a * (rot_b.unrotate(ds.bearing(frame_b, t)));
    angles.push_back(angle_between(u, v));
  }
  auto mid = angles.begin() + angles.size() / 2;
  std::nth_element(angles.begin(), mid, angles.end());
  if (angles.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(angles.begin(), mid);
  return 0.5 * (lo + hi);
}

/// One expanding local window anchored at a keyframe.
struct LocalWindow {
  int64_t keyframe_id = 0;
  std::vector<int64_t> member_frames;  // first entry is the keyframe
  std::set<int64_t> tracks_full;       // observed in every member frame
  bool low_parallax_keyframe = false;  // set when the fallback keyframe rule fired
};

struct WindowConfig {
  double min_track_ratio = 0.30;        // strict ">" against the keyframe's set
  double keyframe_parallax_deg = 1.15;  // baseline threshold for new keyframes
};

enum class WindowDecision { Expand, CloseAndStartNew };

struct WindowUpdate {
  WindowDecision decision = WindowDecision::Expand;
  int64_t new_keyframe_id = -1;  // valid for CloseAndStartNew
  bool low_parallax_fallback = false;
};

/// Decides whether `new_frame` expands the window. The ratio is measured
/// against the keyframe's track set; the window closes unless strictly more
/// than min_track_ratio of those tracks reach the new frame. On close, the
/// new keyframe is the most recent member whose median parallax against the
/// new frame reaches the threshold, falling back to the most recent member.
inline WindowUpdate update_window(
    LocalWindow& window, const TrackDataset& ds,
    const std::map<int64_t, Rotation>& rotations, int64_t new_frame,
    const WindowConfig& cfg = {}) {
  if (!window.member_frames.empty() && new_frame <= window.member_frames.back())
    throw std::invalid_argument("update_window: frames must arrive in order");

  const auto& kf_tracks = ds.frames.at(window.keyframe_id);
  const auto frame_it = ds.frames.find(new_frame);
  size_t tracked = 0;
  if (frame_it != ds.frames.end()) {
    for (int64_t t : kf_tracks) tracked += frame_it->second.count(t);
  }
  const double ratio =
      kf_tracks.empty() ? 0.0 : static_cast<double>(tracked) / kf_tracks.size();

  WindowUpdate upd;
  if (ratio > cfg.min_track_ratio) {
    upd.decision = WindowDecision::Expand;
    window.member_frames.push_back(new_frame);
    std::set<int64_t> kept;
    if (frame_it != ds.frames.end()) {
      for (int64_t t : window.tracks_full)
        if (frame_it->second.count(t)) kept.insert(t);
    }
    window.tracks_full = std::move(kept);
    return upd;
  }

  upd.decision = WindowDecision::CloseAndStartNew;
  const double thresh_rad = cfg.keyframe_parallax_deg * M_PI / 180.0;
  // Scan members from most recent to oldest for a sufficient baseline.
  for (auto it = window.member_frames.rbegin(); it != window.member_frames.rend();
       ++it) {
    const int64_t cand = *it;
    if (ds.shared_tracks(cand, new_frame).empty()) continue;
    const double par = median_parallax(ds, cand, new_frame, rotations.at(cand),
                                       rotations.at(new_frame));
    if (par >= thresh_rad) {
      upd.new_keyframe_id = cand;
      return upd;
    }
  }
  upd.new_keyframe_id = window.member_frames.back();
  upd.low_parallax_fallback = true;
  return upd;
}

/// Starts a window at `keyframe`: tracks_full is the keyframe's own set.
inline LocalWindow start_window(const TrackDataset& ds, int64_t keyframe) {
  LocalWindow w;
  w.keyframe_id = keyframe;
  w.member_frames = {keyframe};
  w.tracks_full = ds.frames.at(keyframe);
  return w;
}

}  // namespace fslam
