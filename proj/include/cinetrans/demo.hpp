#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "cinetrans/attention.hpp"
#include "cinetrans/error.hpp"
#include "cinetrans/frameio.hpp"
#include "cinetrans/partition.hpp"
#include "cinetrans/rng.hpp"
#include "cinetrans/shotmask.hpp"

// Self-attention smoothing as a stand-in for a denoiser: with the block mask,
// tokens only ever average within their own shot, so each shot settles on its
// own constant while the unmasked run collapses to one global value.
namespace cinetrans {

struct SmoothingConfig {
  std::size_t iterations = 200;
  double temperature = 4.0;
  std::uint64_t seed = 7;
  TokenLayout layout;
  std::size_t feature_dim = 3;

  void validate() const {
    if (iterations == 0) throw ConfigError("smoothing needs at least one iteration");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
    if (feature_dim == 0) throw ConfigError("feature dim must be positive");
    layout.validate();
  }
};

// X <- softmax(X X^T / (temperature * sqrt(d)) + M) X, `iterations` times.
inline DenseMatrix run_smoothing(DenseMatrix x, const AttnMask& mask, const SmoothingConfig& config) {
  config.validate();
  if (x.rows() != mask.size()) throw ShapeError("smoothing: one feature row per mask token required");
  for (std::size_t it = 0; it < config.iterations; ++it) {
    DenseMatrix q = x;
    for (double& v : q.values()) v /= config.temperature;
    x = scaled_dot_product_attention(q, x, x, &mask).output;
  }
  return x;
}

// Seeded initial tokens: every shot m gets a centre c_m in [-1, 1]^d drawn from
// its own substream (redrawn until it sits at least 0.5 away, in L-infinity,
// from earlier centres), and each token is c_m + U(-0.25, 0.25)^d.
inline DenseMatrix initial_tokens(const ShotPartition& partition, const SmoothingConfig& config) {
  config.validate();
  const std::size_t d = config.feature_dim;
  const std::size_t n = config.layout.n_tokens();
  const CounterRng root(config.seed);

  std::vector<std::vector<double>> centres;
  for (std::size_t m = 0; m < partition.shot_count(); ++m) {
    CounterRng rng = root.substream(m);
    std::vector<double> c(d);
    for (int attempt = 0;; ++attempt) {
      for (double& v : c) v = rng.uniform(-1.0, 1.0);
      bool far = std::all_of(centres.begin(), centres.end(), [&](const auto& o) {
        double mx = 0.0;
        for (std::size_t i = 0; i < d; ++i) mx = std::max(mx, std::abs(o[i] - c[i]));
        return mx >= 0.5;
      });
      if (far || attempt >= 64) break;
    }
    centres.push_back(c);
  }

  const CounterRng noise = root.substream(0xA11CE);
  DenseMatrix x(n, d);
  for (std::size_t tok = 0; tok < n; ++tok) {
    std::size_t shot = shot_of_token(config.layout, partition, tok);
    for (std::size_t i = 0; i < d; ++i) {
      x(tok, i) = centres[shot][i] + 0.5 * (noise.uniform_at(tok * d + i) - 0.5);
    }
  }
  return x;
}

struct RenderConfig {
  std::size_t height = 16;
  std::size_t width = 16;
  double offset = 128.0;
  double gain = 100.0;
};

// Channel c of a token's colour is offset + gain * x[c mod d], rounded and
// clamped to a byte. The p tokens of a slice paint p horizontal stripes of
// every frame in that slice.
inline FrameSequence render_tokens(const DenseMatrix& x, const TokenLayout& layout, const RenderConfig& render) {
  layout.validate();
  if (x.rows() != layout.n_tokens()) throw ShapeError("render: token count does not match layout");
  const std::size_t C = 3;
  const std::size_t H = render.height;
  const std::size_t W = render.width;
  const std::size_t p = layout.tokens_per_slice;
  std::vector<std::uint8_t> px(layout.n_frames * H * W * C);
  for (std::size_t f = 0; f < layout.n_frames; ++f) {
    std::size_t slice = f / layout.compression;
    for (std::size_t y = 0; y < H; ++y) {
      std::size_t tok = slice * p + std::min(p - 1, y * p / H);
      for (std::size_t xx = 0; xx < W; ++xx) {
        for (std::size_t c = 0; c < C; ++c) {
          double v = render.offset + render.gain * x(tok, c % x.cols());
          px[((f * H + y) * W + xx) * C + c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
        }
      }
    }
  }
  return FrameSequence({layout.n_frames, H, W, C}, std::move(px));
}

// Seeds tokens, smooths them under the block-diagonal mask for `partition`
// (or under an all-allowed mask when `use_mask` is false) and renders frames.
inline FrameSequence demo_multishot_generation(const ShotPartition& partition, const SmoothingConfig& config,
                                               const RenderConfig& render = {}, bool use_mask = true) {
  config.validate();
  auto x = initial_tokens(partition, config);
  AttnMask mask = use_mask ? build_block_diagonal_mask(partition, config.layout)
                           : AttnMask::all_allowed(config.layout.n_tokens());
  return render_tokens(run_smoothing(std::move(x), mask, config), config.layout, render);
}

}  // namespace cinetrans
