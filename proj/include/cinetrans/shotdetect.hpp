#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "cinetrans/error.hpp"
#include "cinetrans/frameio.hpp"
#include "cinetrans/partition.hpp"

namespace cinetrans {

// Content difference between adjacent frames; values[t] compares frames t and
// t + 1. Scale: 0 for identical histograms, 255 for a full black/white cut.
struct CutScores {
  std::vector<double> values;
};

// Per-frame transition probabilities from the two detector heads.
struct GradualScores {
  std::vector<double> single_frame;  // frame t is the instant of a transition
  std::vector<double> all_frame;     // frame t lies inside a gradual transition
};

struct SegmentConfig {
  double cut_threshold = 27.0;
  double single_threshold = 0.45;
  double all_threshold = 0.50;
};

inline constexpr std::size_t kCutHistogramBins = 32;

namespace detail {

inline std::size_t cut_bin(const FrameSequence& seq, std::size_t flat) {
  if (seq.dtype() == PixelType::byte) return seq.bytes()[flat] >> 3;
  double v = std::clamp(static_cast<double>(seq.floats()[flat]), 0.0, 1.0);
  return std::min(kCutHistogramBins - 1, static_cast<std::size_t>(v * kCutHistogramBins));
}

// Mean absolute per-pixel difference between frames t - 1 and t in unit
// scale; entry 0 is 0.
inline std::vector<double> frame_differences(const FrameSequence& seq) {
  const std::size_t n = seq.frame_count();
  const std::size_t fs = seq.frame_size();
  std::vector<double> d(n, 0.0);
  for (std::size_t t = 1; t < n; ++t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < fs; ++i) acc += std::abs(seq.unit(t * fs + i) - seq.unit((t - 1) * fs + i));
    d[t] = acc / static_cast<double>(fs);
  }
  return d;
}

inline double window_max(const std::vector<double>& v, std::size_t t, std::size_t radius) {
  std::size_t lo = t >= radius ? t - radius : 0;
  std::size_t hi = std::min(v.size() - 1, t + radius);
  return *std::max_element(v.begin() + static_cast<std::ptrdiff_t>(lo), v.begin() + static_cast<std::ptrdiff_t>(hi) + 1);
}

// Lower quartile of v over [t - radius, t + radius], ignoring indices below `first`.
inline double window_quartile(const std::vector<double>& v, std::size_t t, std::size_t radius, std::size_t first) {
  std::size_t lo = std::max(first, t >= radius ? t - radius : 0);
  std::size_t hi = std::min(v.size() - 1, t + radius);
  if (lo > hi) return 0.0;
  std::vector<double> w(v.begin() + static_cast<std::ptrdiff_t>(lo), v.begin() + static_cast<std::ptrdiff_t>(hi) + 1);
  auto q = w.begin() + static_cast<std::ptrdiff_t>(w.size() / 4);
  std::nth_element(w.begin(), q, w.end());
  return *q;
}

}  // namespace detail

inline CutScores content_cut_scores(const FrameSequence& seq) {
  const std::size_t n = seq.frame_count();
  if (n < 2) throw ValidationError("cut scoring needs at least 2 frames");
  const std::size_t C = seq.channels();
  const std::size_t B = kCutHistogramBins;
  const std::size_t fs = seq.frame_size();
  const double pixels = static_cast<double>(seq.height() * seq.width());

  auto histogram = [&](std::size_t t) {
    std::vector<double> h(C * B, 0.0);
    for (std::size_t i = 0; i < fs; ++i) h[(i % C) * B + detail::cut_bin(seq, t * fs + i)] += 1.0;
    for (double& v : h) v /= pixels;
    return h;
  };

  CutScores out;
  out.values.reserve(n - 1);
  auto prev = histogram(0);
  for (std::size_t t = 1; t < n; ++t) {
    auto cur = histogram(t);
    double l1 = 0.0;
    for (std::size_t k = 0; k < cur.size(); ++k) l1 += std::abs(cur[k] - prev[k]);
    // Each channel's L1 distance is at most 2.
    out.values.push_back(255.0 * l1 / (2.0 * static_cast<double>(C)));
    prev = std::move(cur);
  }
  return out;
}

// Cut candidates: frame t + 1 for every local maximum t of the score signal
// with score(t) >= threshold. A run of equal maximal scores (a plateau) counts
// once, at its earliest index. Peaks are defined independently of the
// threshold, so raising it can only remove boundaries.
inline std::vector<std::size_t> detect_cuts(const CutScores& scores, double threshold) {
  if (!(threshold > 0.0)) throw ConfigError("cut threshold must be positive");
  const auto& s = scores.values;
  std::vector<std::size_t> out;
  std::size_t t = 0;
  while (t < s.size()) {
    std::size_t end = t;
    while (end + 1 < s.size() && s[end + 1] == s[t]) ++end;
    bool left_lower = t == 0 || s[t - 1] < s[t];
    bool right_lower = end + 1 == s.size() || s[end + 1] < s[t];
    if (left_lower && right_lower && s[t] >= threshold) out.push_back(t + 1);
    t = end + 1;
  }
  return out;
}

// Signal-processing stand-ins for the two transition-detector heads. With
// d(t) the mean absolute difference between frames t - 1 and t (d(0) = 0,
// d(N) = 0):
//
//   sharp(t)        = max(0, d(t) - max(d(t - 1), d(t + 1)))
//   single_frame(t) = sharp(t) / max_{|u - t| <= 8} d(u)      (0 if that max is 0)
//
//   q(t)   = min(d(t), d(t + 1))   how far frame t sits from both neighbours
//   raw(t) = q(t) / max_{|u - t| <= 4} d(u)   if q(t) > 1.5 * Q1_{|u - t| <= 8} d(u) + 0.01
//            0                                 otherwise
//   all_frame(t) = raw(t - 1) / 4 + raw(t) / 2 + raw(t + 1) / 4
//
// Q1 is the lower quartile. A hard cut is a one-frame spike in d and moves a
// frame away from only one neighbour; a dissolve spreads d over several frames
// and moves each of its frames away from both. The quartile gate keeps steady
// noise and slow drift from registering.
inline constexpr std::size_t kSingleWindow = 8;
inline constexpr std::size_t kAllWindow = 4;
inline constexpr double kNoiseFactor = 1.5;
inline constexpr double kNoiseFloor = 0.01;

inline GradualScores gradual_scores(const FrameSequence& seq) {
  const std::size_t n = seq.frame_count();
  if (n < 3) throw ValidationError("gradual scoring needs at least 3 frames");
  auto d = detail::frame_differences(seq);

  GradualScores out;
  out.single_frame.resize(n, 0.0);
  out.all_frame.resize(n, 0.0);
  std::vector<double> raw(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double mx = detail::window_max(d, t, kSingleWindow);
    double next = t + 1 < n ? d[t + 1] : 0.0;
    double prev = t > 0 ? d[t - 1] : 0.0;
    double sharp = std::max(0.0, d[t] - std::max(prev, next));
    out.single_frame[t] = mx > 0.0 ? std::clamp(sharp / mx, 0.0, 1.0) : 0.0;

    double q = std::min(d[t], next);
    double local = detail::window_max(d, t, kAllWindow);
    double base = detail::window_quartile(d, t, kSingleWindow, 1);
    if (local > 0.0 && q > kNoiseFactor * base + kNoiseFloor) raw[t] = q / local;
  }
  for (std::size_t t = 0; t < n; ++t) {
    double v = 0.5 * raw[t];
    if (t > 0) v += 0.25 * raw[t - 1];
    if (t + 1 < n) v += 0.25 * raw[t + 1];
    out.all_frame[t] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

struct GradualRemoval {
  std::vector<std::size_t> kept_frames;     // original indices of surviving frames
  ShotPartition labels;                     // original indices; gradual frames recorded
  ShotPartition compact;                    // the same shots re-indexed over kept_frames
  std::vector<std::size_t> gradual_frames;  // original indices of removed frames
};

// Frames with all_frame >= all_threshold are gradual unless they form the
// pair (c - 1, c) around an isolated instantaneous cut c, i.e. a frame with
// single_frame(c) >= single_threshold whose neighbours are both below it.
// Surviving frames are split into shots at every cut candidate and at every
// gap left by removed frames.
inline GradualRemoval remove_gradual_frames(const std::vector<std::size_t>& candidates, const GradualScores& preds,
                                            double single_threshold = 0.45, double all_threshold = 0.50) {
  if (!(single_threshold > 0.0 && single_threshold < 1.0) || !(all_threshold > 0.0 && all_threshold < 1.0)) {
    throw ConfigError("gradual thresholds must lie in (0, 1)");
  }
  const std::size_t n = preds.single_frame.size();
  if (n == 0 || preds.all_frame.size() != n) throw ShapeError("gradual score heads must have equal nonzero length");

  const auto& single = preds.single_frame;
  std::vector<bool> protect(n, false);
  for (std::size_t c = 0; c < n; ++c) {
    bool peak = single[c] >= single_threshold && (c == 0 || single[c - 1] < single_threshold) &&
                (c + 1 == n || single[c + 1] < single_threshold);
    if (peak) {
      protect[c] = true;
      if (c > 0) protect[c - 1] = true;
    }
  }
  std::vector<bool> is_cut(n, false);
  for (std::size_t b : candidates) {
    if (b < n) is_cut[b] = true;
  }

  GradualRemoval out;
  std::vector<Shot> shots;
  std::vector<std::size_t> compact_bounds{0};
  bool prev_kept = false;
  for (std::size_t t = 0; t < n; ++t) {
    bool gradual = preds.all_frame[t] >= all_threshold && !protect[t];
    if (gradual) {
      out.gradual_frames.push_back(t);
      prev_kept = false;
      continue;
    }
    if (!prev_kept || is_cut[t]) {
      shots.push_back({t, t + 1});
      if (!out.kept_frames.empty()) compact_bounds.push_back(out.kept_frames.size());
    } else {
      shots.back().end = t + 1;
    }
    out.kept_frames.push_back(t);
    prev_kept = true;
  }
  if (out.kept_frames.empty()) throw ValidationError("every frame was classified as gradual");
  compact_bounds.push_back(out.kept_frames.size());
  out.labels = ShotPartition(n, std::move(shots), out.gradual_frames);
  out.compact = ShotPartition::from_boundaries(compact_bounds);
  return out;
}

// content_cut_scores -> detect_cuts -> gradual_scores -> remove_gradual_frames.
inline ShotPartition segment(const FrameSequence& seq, const SegmentConfig& config = {}) {
  const std::size_t n = seq.frame_count();
  if (n < 2) throw ValidationError("segmentation needs at least 2 frames");
  auto cuts = detect_cuts(content_cut_scores(seq), config.cut_threshold);
  GradualScores preds;
  if (n >= 3) {
    preds = gradual_scores(seq);
  } else {
    preds.single_frame.assign(n, 0.0);
    preds.all_frame.assign(n, 0.0);
  }
  return remove_gradual_frames(cuts, preds, config.single_threshold, config.all_threshold).labels;
}

}  // namespace cinetrans
