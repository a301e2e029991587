#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cinetrans/attention.hpp"
#include "cinetrans/binary_io.hpp"
#include "cinetrans/error.hpp"
#include "cinetrans/partition.hpp"
#include "cinetrans/shotmask.hpp"

namespace cinetrans {

// Captured attention probabilities, layers x heads x n_tokens x n_tokens.
struct AttnCapture {
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::size_t n_tokens = 0;
  std::vector<float> probs;  // layer-major, head-major, row-major

  std::size_t map_size() const noexcept { return n_tokens * n_tokens; }

  std::span<const float> map(std::size_t layer, std::size_t head) const {
    if (layer >= layers || head >= heads) {
      throw IndexError("capture has " + std::to_string(layers) + " layers x " + std::to_string(heads) + " heads");
    }
    return {probs.data() + (layer * heads + head) * map_size(), map_size()};
  }

  void validate(double tol = 1e-6) const {
    if (layers == 0 || heads == 0 || n_tokens == 0) throw ValidationError("capture dimensions must be positive");
    if (probs.size() != layers * heads * map_size()) throw ShapeError("capture size does not match header");
    for (std::size_t m = 0; m < layers * heads; ++m) {
      for (std::size_t i = 0; i < n_tokens; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n_tokens; ++j) {
          float v = probs[m * map_size() + i * n_tokens + j];
          if (!(v >= 0.0f && v <= 1.0f)) throw ValidationError("capture probabilities must lie in [0, 1]");
          sum += v;
        }
        if (std::abs(sum - 1.0) > tol) {
          throw ValidationError("capture row " + std::to_string(i) + " of map " + std::to_string(m) +
                                " is not stochastic");
        }
      }
    }
  }

  // Appends one layer-head map; maps must be added in layer-major order.
  void push(const DenseMatrix& p) {
    if (p.rows() != n_tokens || p.cols() != n_tokens) throw ShapeError("map size does not match capture");
    for (double v : p.values()) probs.push_back(static_cast<float>(v));
  }

  bool operator==(const AttnCapture&) const = default;
};

// n x n attention between frames (latent slices when compression > 1).
struct FrameAttentionMap {
  std::size_t n = 0;
  std::vector<double> probs;

  double operator()(std::size_t f, std::size_t g) const noexcept { return probs[f * n + g]; }
  double& operator()(std::size_t f, std::size_t g) noexcept { return probs[f * n + g]; }

  void renormalize_rows() {
    for (std::size_t f = 0; f < n; ++f) {
      double sum = 0.0;
      for (std::size_t g = 0; g < n; ++g) sum += (*this)(f, g);
      if (sum > 0.0) {
        for (std::size_t g = 0; g < n; ++g) (*this)(f, g) /= sum;
      }
    }
  }
};

// Entry (f, g) is the mean of probs[i][j] over tokens i of slice f and j of
// slice g; rows are then renormalised to sum to 1. With one token per frame and
// no temporal compression this is the identity.
inline FrameAttentionMap group_attention_by_frame(const AttnCapture& capture, const TokenLayout& layout,
                                                  std::size_t layer, std::size_t head) {
  layout.validate();
  if (layout.n_tokens() != capture.n_tokens) throw ShapeError("layout does not match capture token count");
  auto map = capture.map(layer, head);
  const std::size_t p = layout.tokens_per_slice;
  FrameAttentionMap out{layout.n_slices(), std::vector<double>(layout.n_slices() * layout.n_slices(), 0.0)};
  for (std::size_t i = 0; i < capture.n_tokens; ++i) {
    for (std::size_t j = 0; j < capture.n_tokens; ++j) out(i / p, j / p) += map[i * capture.n_tokens + j];
  }
  const double pairs = static_cast<double>(p * p);
  for (double& v : out.probs) v /= pairs;
  out.renormalize_rows();
  return out;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("pearson: inputs differ in length");
  if (x.size() < 2) throw ValidationError("pearson needs at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = x[i] - mx;
    double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelationError("pearson: constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct IntraInterStats {
  double intra_mean = 0.0;
  double inter_mean = 0.0;
  double ratio = 0.0;  // +inf when inter_mean == 0

  bool ratio_infinite() const noexcept { return std::isinf(ratio); }
};

// Mean over same-shot frame pairs (diagonal included) against the mean over
// cross-shot pairs.
inline IntraInterStats intra_inter_ratio(const FrameAttentionMap& map, const ShotPartition& partition) {
  if (partition.n_frames() != map.n) throw ValidationError("partition does not cover the attention map");
  partition.require_contiguous("intra/inter ratio");
  if (partition.shot_count() < 2) throw NotComputableError("intra/inter ratio needs at least two shots");
  std::vector<std::size_t> shot(map.n);
  for (std::size_t f = 0; f < map.n; ++f) shot[f] = *partition.shot_of_frame(f);
  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  for (std::size_t f = 0; f < map.n; ++f) {
    for (std::size_t g = 0; g < map.n; ++g) {
      if (shot[f] == shot[g]) {
        intra += map(f, g);
        ++n_intra;
      } else {
        inter += map(f, g);
        ++n_inter;
      }
    }
  }
  IntraInterStats s;
  s.intra_mean = intra / static_cast<double>(n_intra);
  s.inter_mean = inter / static_cast<double>(n_inter);
  s.ratio = s.inter_mean == 0.0 ? std::numeric_limits<double>::infinity() : s.intra_mean / s.inter_mean;
  return s;
}

struct BoundarySignals {
  std::vector<double> adjacency;  // a(t) = map(t, t + 1)
  std::vector<double> boundary;   // b(t) = 1 iff a shot boundary lies between t and t + 1
};

inline BoundarySignals boundary_signals(const FrameAttentionMap& map, const ShotPartition& partition) {
  if (partition.n_frames() != map.n) throw ValidationError("partition does not cover the attention map");
  partition.require_contiguous("boundary correlation");
  if (map.n < 3) throw ValidationError("boundary correlation needs at least 3 frames");
  BoundarySignals s;
  for (std::size_t t = 0; t + 1 < map.n; ++t) {
    s.adjacency.push_back(map(t, t + 1));
    s.boundary.push_back(*partition.shot_of_frame(t) != *partition.shot_of_frame(t + 1) ? 1.0 : 0.0);
  }
  return s;
}

// pearson(a, 1 - b): positive when adjacent-frame attention drops at shot
// boundaries.
inline double boundary_correlation(const FrameAttentionMap& map, const ShotPartition& partition) {
  auto s = boundary_signals(map, partition);
  std::vector<double> not_boundary(s.boundary.size());
  for (std::size_t i = 0; i < s.boundary.size(); ++i) not_boundary[i] = 1.0 - s.boundary[i];
  return pearson(s.adjacency, not_boundary);
}

struct HeadStats {
  std::size_t layer = 0;
  std::size_t head = 0;
  IntraInterStats ratio;
  std::optional<double> correlation;  // absent when a signal is constant
};

struct CaptureReport {
  std::vector<HeadStats> heads;
  double mean_intra = 0.0;
  double mean_inter = 0.0;
  double mean_ratio = 0.0;  // mean of per-head ratios; +inf if any head is infinite
  std::optional<double> mean_correlation;
};

// Per-(layer, head) statistics plus their grand means. `partition` is over
// frames; it is mapped onto latent slices when the layout compresses time.
inline CaptureReport analyze_capture(const AttnCapture& capture, const TokenLayout& layout,
                                     const ShotPartition& partition) {
  auto slices = slice_partition(partition, layout);
  CaptureReport rep;
  double corr_sum = 0.0;
  std::size_t corr_n = 0;
  for (std::size_t l = 0; l < capture.layers; ++l) {
    for (std::size_t h = 0; h < capture.heads; ++h) {
      auto map = group_attention_by_frame(capture, layout, l, h);
      HeadStats hs{l, h, intra_inter_ratio(map, slices), std::nullopt};
      if (map.n >= 3) {
        try {
          hs.correlation = boundary_correlation(map, slices);
        } catch (const UndefinedCorrelationError&) {
        }
      }
      rep.mean_intra += hs.ratio.intra_mean;
      rep.mean_inter += hs.ratio.inter_mean;
      rep.mean_ratio += hs.ratio.ratio;
      if (hs.correlation) {
        corr_sum += *hs.correlation;
        ++corr_n;
      }
      rep.heads.push_back(hs);
    }
  }
  const double k = static_cast<double>(rep.heads.size());
  rep.mean_intra /= k;
  rep.mean_inter /= k;
  rep.mean_ratio /= k;
  if (corr_n > 0) rep.mean_correlation = corr_sum / static_cast<double>(corr_n);
  return rep;
}

// ---------------------------------------------------------------------------
// ATNv1: magic "ATNv1", u32 LE layers, heads, n_tokens, then float32 LE
// probabilities layer-major, head-major, row-major.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kAtnMagic = "ATNv1";

inline binary::Bytes encode_atn(const AttnCapture& c) {
  if (c.probs.size() != c.layers * c.heads * c.map_size()) throw ShapeError("capture size does not match header");
  binary::ByteWriter w;
  w.reserve(17 + 4 * c.probs.size());
  w.magic(kAtnMagic);
  w.u32(static_cast<std::uint32_t>(c.layers));
  w.u32(static_cast<std::uint32_t>(c.heads));
  w.u32(static_cast<std::uint32_t>(c.n_tokens));
  for (float v : c.probs) w.f32(v);
  return std::move(w).bytes();
}

inline AttnCapture decode_atn(std::span<const std::uint8_t> data) {
  binary::ByteReader r(data, "ATN");
  r.expect_magic(kAtnMagic);
  AttnCapture c;
  c.layers = r.u32();
  c.heads = r.u32();
  c.n_tokens = r.u32();
  std::uint64_t count = static_cast<std::uint64_t>(c.layers) * c.heads * c.n_tokens * c.n_tokens;
  r.expect_payload(count * 4);
  c.probs.resize(count);
  for (auto& v : c.probs) v = r.f32();
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw FormatError(std::string("ATN: ") + e.what());
  }
  return c;
}

inline void write_atn(const AttnCapture& c, const std::filesystem::path& path) {
  binary::write_file_atomic(path, encode_atn(c));
}

inline AttnCapture read_atn(const std::filesystem::path& path) { return decode_atn(binary::read_file(path)); }

}  // namespace cinetrans
