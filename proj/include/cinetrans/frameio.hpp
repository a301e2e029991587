#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cinetrans/binary_io.hpp"
#include "cinetrans/error.hpp"
#include "cinetrans/partition.hpp"
#include "cinetrans/rng.hpp"

namespace cinetrans {

enum class PixelType : std::uint32_t { byte = 0, float32 = 1 };

struct FrameShape {
  std::size_t frame_count = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t frame_size() const noexcept { return height * width * channels; }
  std::size_t total() const noexcept { return frame_count * frame_size(); }
  bool operator==(const FrameShape&) const = default;
};

// Decoded video: frame-major, row-major, channel-interleaved pixels.
//
// Byte pixels span [0, 255]; float32 pixels use the nominal range [0, 1].
// Analysis code reads pixels through unit(), which maps both onto [0, 1], so
// every detector threshold means the same thing for either storage type.
class FrameSequence {
 public:
  FrameSequence(FrameShape shape, std::vector<std::uint8_t> pixels) : shape_(shape), pixels_(std::move(pixels)) {
    validate();
  }

  FrameSequence(FrameShape shape, std::vector<float> pixels) : shape_(shape), pixels_(std::move(pixels)) {
    validate();
    for (float v : std::get<std::vector<float>>(pixels_)) {
      if (!std::isfinite(v)) throw ValidationError("float32 pixels must be finite");
    }
  }

  const FrameShape& shape() const noexcept { return shape_; }
  std::size_t frame_count() const noexcept { return shape_.frame_count; }
  std::size_t height() const noexcept { return shape_.height; }
  std::size_t width() const noexcept { return shape_.width; }
  std::size_t channels() const noexcept { return shape_.channels; }
  std::size_t frame_size() const noexcept { return shape_.frame_size(); }

  PixelType dtype() const noexcept {
    return std::holds_alternative<std::vector<std::uint8_t>>(pixels_) ? PixelType::byte : PixelType::float32;
  }

  std::span<const std::uint8_t> bytes() const { return std::get<std::vector<std::uint8_t>>(pixels_); }
  std::span<const float> floats() const { return std::get<std::vector<float>>(pixels_); }

  // Pixel at flat index mapped to the nominal unit range.
  double unit(std::size_t flat) const noexcept {
    if (const auto* b = std::get_if<std::vector<std::uint8_t>>(&pixels_)) return (*b)[flat] / 255.0;
    return static_cast<double>(std::get<std::vector<float>>(pixels_)[flat]);
  }

  double unit(std::size_t frame, std::size_t y, std::size_t x, std::size_t c) const noexcept {
    return unit(((frame * shape_.height + y) * shape_.width + x) * shape_.channels + c);
  }

  // Raw payload size in bytes.
  std::size_t payload_bytes() const noexcept {
    return shape_.total() * (dtype() == PixelType::byte ? 1 : 4);
  }

  bool operator==(const FrameSequence&) const = default;

 private:
  void validate() const {
    if (shape_.frame_count == 0 || shape_.height == 0 || shape_.width == 0 || shape_.channels == 0) {
      throw ValidationError("frame sequence dimensions must be positive");
    }
    std::size_t n = std::visit([](const auto& v) { return v.size(); }, pixels_);
    if (n != shape_.total()) {
      throw ValidationError("pixel count " + std::to_string(n) + " does not match shape (" +
                            std::to_string(shape_.total()) + ")");
    }
  }

  FrameShape shape_;
  std::variant<std::vector<std::uint8_t>, std::vector<float>> pixels_;
};

// ---------------------------------------------------------------------------
// CTF container
//
//   offset  size  field
//   0       5     magic "CTFv1"
//   5       4     frame_count (u32 LE)
//   9       4     height
//   13      4     width
//   17      4     channels
//   21      4     dtype tag: 0 = byte, 1 = float32
//   25      ...   pixels, frame-major row-major, float32 as IEEE-754 LE
// ---------------------------------------------------------------------------

inline constexpr std::string_view kCtfMagic = "CTFv1";
inline constexpr std::size_t kCtfHeaderBytes = 25;

inline binary::Bytes encode_ctf(const FrameSequence& seq) {
  binary::ByteWriter w;
  w.reserve(kCtfHeaderBytes + seq.payload_bytes());
  w.magic(kCtfMagic);
  const auto& s = seq.shape();
  for (std::size_t v : {s.frame_count, s.height, s.width, s.channels}) {
    if (v > UINT32_MAX) throw ValidationError("dimension exceeds the u32 header field");
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.u32(static_cast<std::uint32_t>(seq.dtype()));
  if (seq.dtype() == PixelType::byte) {
    w.raw(seq.bytes());
  } else {
    for (float v : seq.floats()) w.f32(v);
  }
  return std::move(w).bytes();
}

inline FrameSequence decode_ctf(std::span<const std::uint8_t> data) {
  binary::ByteReader r(data, "CTF");
  r.expect_magic(kCtfMagic);
  FrameShape shape;
  shape.frame_count = r.u32();
  shape.height = r.u32();
  shape.width = r.u32();
  shape.channels = r.u32();
  std::uint32_t tag = r.u32();
  if (tag > 1) throw FormatError("CTF: unknown dtype tag " + std::to_string(tag));
  if (shape.total() == 0) throw FormatError("CTF: dimensions must be positive");
  std::uint64_t elem = tag == 0 ? 1 : 4;
  r.expect_payload(static_cast<std::uint64_t>(shape.total()) * elem);
  if (tag == 0) {
    auto raw = r.take(shape.total());
    return FrameSequence(shape, std::vector<std::uint8_t>(raw.begin(), raw.end()));
  }
  std::vector<float> px(shape.total());
  for (auto& v : px) v = r.f32();
  try {
    return FrameSequence(shape, std::move(px));
  } catch (const ValidationError& e) {
    throw FormatError(std::string("CTF: ") + e.what());
  }
}

inline void write_ctf(const FrameSequence& seq, const std::filesystem::path& path) {
  binary::write_file_atomic(path, encode_ctf(seq));
}

inline FrameSequence read_ctf(const std::filesystem::path& path) { return decode_ctf(binary::read_file(path)); }

// ---------------------------------------------------------------------------
// Synthetic multi-shot fixtures
// ---------------------------------------------------------------------------

struct ShotSpec {
  std::size_t length_frames = 1;
  std::vector<double> base_color;       // one value per channel, in dtype units
  double noise_amplitude = 0.0;         // uniform noise in [-a, a], dtype units
  std::vector<double> drift_per_frame;  // empty means no drift
};

// A crossfade of `crossfade_frames` frames centred on the boundary at frame
// `position` (which must start one of the shots after the first).
struct GradualSpan {
  std::size_t position = 0;
  std::size_t crossfade_frames = 0;
};

struct SyntheticSpec {
  std::vector<ShotSpec> shots;
  std::vector<GradualSpan> gradual_spans;
  std::uint64_t seed = 0;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 3;
  PixelType dtype = PixelType::byte;
};

struct SyntheticVideo {
  FrameSequence frames;
  ShotPartition labels;  // ground truth; crossfade frames are gradual
};

namespace detail {

// First frame of the crossfade window around `position`.
inline std::size_t crossfade_begin(const GradualSpan& g) noexcept { return g.position - g.crossfade_frames / 2; }

}  // namespace detail

// Frame t of shot s (local index u = t - start_s) has pixel value
//   base_s + u * drift_s + noise,  noise = a_s * (2 * U - 1)
// where U is output (t * frame_size + i) of CounterRng(spec.seed). Crossfade
// frames j = 0..k-1 of a span blend the two shots' noiseless signals with
// weight w = (j + 1) / (k + 1) on the incoming shot; the outgoing signal keeps
// counting frames past its end and the incoming one uses negative u. Values
// are rounded (bytes) and clamped to the dtype range.
inline SyntheticVideo gen_synthetic_multishot(const SyntheticSpec& spec) {
  if (spec.shots.empty()) throw ValidationError("synthetic spec needs at least one shot");
  if (spec.height == 0 || spec.width == 0 || spec.channels == 0) {
    throw ValidationError("synthetic frame dimensions must be positive");
  }
  const std::size_t C = spec.channels;
  std::vector<std::size_t> starts;
  std::size_t total = 0;
  for (const auto& s : spec.shots) {
    if (s.length_frames == 0) throw ValidationError("shot length must be positive");
    if (s.base_color.size() != C) throw ValidationError("base_color must have one value per channel");
    if (!s.drift_per_frame.empty() && s.drift_per_frame.size() != C) {
      throw ValidationError("drift_per_frame must be empty or have one value per channel");
    }
    if (!(s.noise_amplitude >= 0.0)) throw ValidationError("noise amplitude must be nonnegative");
    starts.push_back(total);
    total += s.length_frames;
  }
  if (total < 2) throw ValidationError("synthetic video must have at least 2 frames");

  // Per-frame blend description: outgoing shot, incoming shot, weight.
  struct Blend {
    std::size_t a = 0;
    std::size_t b = 0;
    double w = 0.0;
  };
  std::vector<Blend> blend(total);
  for (std::size_t s = 0; s < spec.shots.size(); ++s) {
    for (std::size_t t = starts[s]; t < starts[s] + spec.shots[s].length_frames; ++t) blend[t] = {s, s, 0.0};
  }
  std::vector<bool> gradual(total, false);
  auto spans = spec.gradual_spans;
  std::sort(spans.begin(), spans.end(), [](const auto& x, const auto& y) { return x.position < y.position; });
  for (const auto& g : spans) {
    auto it = std::find(starts.begin() + 1, starts.end(), g.position);
    if (g.position == 0 || it == starts.end()) {
      throw ValidationError("gradual span position " + std::to_string(g.position) + " is not a shot boundary");
    }
    if (g.crossfade_frames == 0) continue;
    std::size_t b = static_cast<std::size_t>(it - starts.begin());
    std::size_t a = b - 1;
    std::size_t min_len = std::min(spec.shots[a].length_frames, spec.shots[b].length_frames);
    if (g.crossfade_frames >= min_len) {
      throw ValidationError("crossfade must be shorter than both adjacent shots");
    }
    std::size_t begin = detail::crossfade_begin(g);
    for (std::size_t j = 0; j < g.crossfade_frames; ++j) {
      std::size_t t = begin + j;
      if (gradual[t]) throw ValidationError("gradual spans overlap");
      gradual[t] = true;
      blend[t] = {a, b, static_cast<double>(j + 1) / static_cast<double>(g.crossfade_frames + 1)};
    }
  }

  const double hi = spec.dtype == PixelType::byte ? 255.0 : 1.0;
  const std::size_t fs = spec.height * spec.width * C;
  const CounterRng rng(spec.seed);

  auto signal = [&](std::size_t s, std::size_t t, std::size_t c) {
    const auto& shot = spec.shots[s];
    double u = static_cast<double>(t) - static_cast<double>(starts[s]);
    double drift = shot.drift_per_frame.empty() ? 0.0 : shot.drift_per_frame[c];
    return shot.base_color[c] + u * drift;
  };

  std::vector<double> values(total * fs);
  for (std::size_t t = 0; t < total; ++t) {
    const auto& bl = blend[t];
    double amp = (1.0 - bl.w) * spec.shots[bl.a].noise_amplitude + bl.w * spec.shots[bl.b].noise_amplitude;
    for (std::size_t i = 0; i < fs; ++i) {
      std::size_t c = i % C;
      double v = (1.0 - bl.w) * signal(bl.a, t, c) + bl.w * signal(bl.b, t, c);
      if (amp > 0.0) v += amp * (2.0 * rng.uniform_at(t * fs + i) - 1.0);
      values[t * fs + i] = std::clamp(v, 0.0, hi);
    }
  }

  FrameShape shape{total, spec.height, spec.width, C};
  std::vector<Shot> shots;
  std::vector<std::size_t> gradual_frames;
  for (std::size_t t = 0; t < total; ++t) {
    if (gradual[t]) {
      gradual_frames.push_back(t);
      continue;
    }
    bool new_shot = shots.empty() || t == 0 || gradual[t - 1] || blend[t].a != blend[t - 1].b;
    if (new_shot) {
      shots.push_back({t, t + 1});
    } else {
      shots.back().end = t + 1;
    }
  }
  ShotPartition labels(total, std::move(shots), std::move(gradual_frames));

  if (spec.dtype == PixelType::byte) {
    std::vector<std::uint8_t> px(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) px[i] = static_cast<std::uint8_t>(std::lround(values[i]));
    return {FrameSequence(shape, std::move(px)), std::move(labels)};
  }
  std::vector<float> px(values.begin(), values.end());
  return {FrameSequence(shape, std::move(px)), std::move(labels)};
}

// ---------------------------------------------------------------------------
// Per-frame feature extraction
// ---------------------------------------------------------------------------

// One unit-norm feature vector per frame, stored row-major.
class FeatureSequence {
 public:
  FeatureSequence(std::size_t frame_count, std::size_t dim, std::vector<double> values)
      : frame_count_(frame_count), dim_(dim), values_(std::move(values)) {
    if (frame_count_ == 0 || dim_ == 0) throw ValidationError("feature sequence must be nonempty");
    if (values_.size() != frame_count_ * dim_) throw ShapeError("feature values do not match frame_count x dim");
    for (std::size_t f = 0; f < frame_count_; ++f) {
      double sq = 0.0;
      for (double v : (*this)[f]) sq += v * v;
      if (std::abs(std::sqrt(sq) - 1.0) > 1e-6) {
        throw ValidationError("feature vector " + std::to_string(f) + " is not unit norm");
      }
    }
  }

  std::size_t frame_count() const noexcept { return frame_count_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> operator[](std::size_t f) const { return {values_.data() + f * dim_, dim_}; }
  const std::vector<double>& values() const noexcept { return values_; }

 private:
  std::size_t frame_count_;
  std::size_t dim_;
  std::vector<double> values_;
};

inline void l2_normalize(std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  if (sq <= 0.0) throw DomainError("cannot normalize a zero vector");
  double inv = 1.0 / std::sqrt(sq);
  for (double& x : v) x *= inv;
}

// Pixel rectangle [y0, y1) x [x0, x1).
struct Region {
  std::size_t y0 = 0, y1 = 0, x0 = 0, x1 = 0;

  bool contains(std::size_t y, std::size_t x) const noexcept { return y >= y0 && y < y1 && x >= x0 && x < x1; }
  bool empty() const noexcept { return y1 <= y0 || x1 <= x0; }
  std::size_t area() const noexcept { return empty() ? 0 : (y1 - y0) * (x1 - x0); }
};

// The central 50% x 50% window (at least one pixel each way).
inline Region center_region(std::size_t height, std::size_t width) {
  std::size_t h = std::max<std::size_t>(1, height / 2);
  std::size_t w = std::max<std::size_t>(1, width / 2);
  std::size_t y0 = (height - h) / 2;
  std::size_t x0 = (width - w) / 2;
  return {y0, y0 + h, x0, x0 + w};
}

inline constexpr std::size_t kFeatureHistogramBins = 16;
inline constexpr std::size_t kFeatureGrid = 8;

// builtin-v1 over `window`, ignoring pixels inside `hole`:
//   - per channel, a 16-bin histogram of unit values over the window's pixels,
//     normalised to sum 1;
//   - an 8 x 8 x C bilinear resample of the window (hole pixels read as 0),
//     sampling pixel centres (i + 0.5) * size / 8 - 0.5 clamped to the edges;
// concatenated and L2-normalised.
inline std::vector<double> builtin_frame_features(const FrameSequence& seq, std::size_t frame, Region window,
                                                  Region hole = {}) {
  const std::size_t C = seq.channels();
  const std::size_t B = kFeatureHistogramBins;
  const std::size_t G = kFeatureGrid;
  std::vector<double> out(C * B + G * G * C, 0.0);

  auto px = [&](std::size_t y, std::size_t x, std::size_t c) {
    return hole.contains(y, x) ? 0.0 : std::clamp(seq.unit(frame, y, x, c), 0.0, 1.0);
  };

  std::size_t count = 0;
  for (std::size_t y = window.y0; y < window.y1; ++y) {
    for (std::size_t x = window.x0; x < window.x1; ++x) {
      if (hole.contains(y, x)) continue;
      ++count;
      for (std::size_t c = 0; c < C; ++c) {
        double v = std::clamp(seq.unit(frame, y, x, c), 0.0, 1.0);
        std::size_t bin = std::min(B - 1, static_cast<std::size_t>(v * static_cast<double>(B)));
        out[c * B + bin] += 1.0;
      }
    }
  }
  if (count > 0) {
    for (std::size_t i = 0; i < C * B; ++i) out[i] /= static_cast<double>(count);
  }

  const std::size_t wh = window.y1 - window.y0;
  const std::size_t ww = window.x1 - window.x0;
  auto sample_axis = [](std::size_t i, std::size_t size, std::size_t& lo, std::size_t& hi, double& frac) {
    double pos = (static_cast<double>(i) + 0.5) * static_cast<double>(size) / static_cast<double>(kFeatureGrid) - 0.5;
    pos = std::clamp(pos, 0.0, static_cast<double>(size - 1));
    lo = static_cast<std::size_t>(std::floor(pos));
    hi = std::min(lo + 1, size - 1);
    frac = pos - static_cast<double>(lo);
  };
  double* grid = out.data() + C * B;
  for (std::size_t gy = 0; gy < G; ++gy) {
    std::size_t y0, y1;
    double fy;
    sample_axis(gy, wh, y0, y1, fy);
    for (std::size_t gx = 0; gx < G; ++gx) {
      std::size_t x0, x1;
      double fx;
      sample_axis(gx, ww, x0, x1, fx);
      for (std::size_t c = 0; c < C; ++c) {
        double top = (1.0 - fx) * px(window.y0 + y0, window.x0 + x0, c) + fx * px(window.y0 + y0, window.x0 + x1, c);
        double bot = (1.0 - fx) * px(window.y0 + y1, window.x0 + x0, c) + fx * px(window.y0 + y1, window.x0 + x1, c);
        grid[(gy * G + gx) * C + c] = (1.0 - fy) * top + fy * bot;
      }
    }
  }
  l2_normalize(out);
  return out;
}

using FrameExtractor = std::function<std::vector<double>(const FrameSequence&, std::size_t frame)>;

// Named per-frame extractors. The three built-ins are always present:
//   builtin-v1      whole frame
//   builtin-center  central 50% x 50% crop (subject proxy)
//   builtin-border  everything outside that crop (background proxy); frames
//                   too small to have a border fall back to the whole frame
class ExtractorRegistry {
 public:
  ExtractorRegistry() {
    add("builtin-v1", [](const FrameSequence& s, std::size_t f) {
      return builtin_frame_features(s, f, {0, s.height(), 0, s.width()});
    });
    add("builtin-center", [](const FrameSequence& s, std::size_t f) {
      return builtin_frame_features(s, f, center_region(s.height(), s.width()));
    });
    add("builtin-border", [](const FrameSequence& s, std::size_t f) {
      Region full{0, s.height(), 0, s.width()};
      Region hole = center_region(s.height(), s.width());
      if (hole.area() == full.area()) hole = {};
      return builtin_frame_features(s, f, full, hole);
    });
  }

  void add(std::string id, FrameExtractor fn) { extractors_[std::move(id)] = std::move(fn); }

  bool contains(const std::string& id) const { return extractors_.count(id) != 0; }

  const FrameExtractor& get(const std::string& id) const {
    auto it = extractors_.find(id);
    if (it == extractors_.end()) throw ConfigError("unknown feature extractor \"" + id + "\"");
    return it->second;
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : extractors_) out.push_back(k);
    return out;
  }

 private:
  std::map<std::string, FrameExtractor> extractors_;
};

inline const ExtractorRegistry& default_extractors() {
  static const ExtractorRegistry registry;
  return registry;
}

inline FeatureSequence extract_features(const FrameSequence& seq, const std::string& extractor,
                                        const ExtractorRegistry& registry = default_extractors()) {
  const auto& fn = registry.get(extractor);
  std::vector<double> values;
  std::size_t dim = 0;
  for (std::size_t f = 0; f < seq.frame_count(); ++f) {
    auto v = fn(seq, f);
    if (f == 0) {
      dim = v.size();
      values.reserve(dim * seq.frame_count());
    } else if (v.size() != dim) {
      throw ShapeError("extractor \"" + extractor + "\" returned vectors of varying length");
    }
    values.insert(values.end(), v.begin(), v.end());
  }
  return FeatureSequence(seq.frame_count(), dim, std::move(values));
}

}  // namespace cinetrans
