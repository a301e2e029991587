#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cinetrans/attention.hpp"
#include "cinetrans/binary_io.hpp"
#include "cinetrans/error.hpp"
#include "cinetrans/partition.hpp"

namespace cinetrans {

// Correspondence between attention tokens and video frames. Frames are
// grouped into latent slices of `compression` frames (the last slice may be
// short) and each slice contributes `tokens_per_slice` consecutive tokens.
// compression = tokens_per_slice = 1 is the one-token-per-frame temporal
// attention case.
struct TokenLayout {
  std::size_t n_frames = 1;
  std::size_t compression = 1;
  std::size_t tokens_per_slice = 1;

  void validate() const {
    if (n_frames == 0 || compression == 0 || tokens_per_slice == 0) {
      throw ValidationError("token layout fields must be positive");
    }
  }

  std::size_t n_slices() const noexcept { return (n_frames + compression - 1) / compression; }
  std::size_t n_tokens() const noexcept { return n_slices() * tokens_per_slice; }

  std::size_t slice_of_token(std::size_t token) const {
    if (token >= n_tokens()) {
      throw IndexError("token " + std::to_string(token) + " out of range for " + std::to_string(n_tokens()) +
                       " tokens");
    }
    return token / tokens_per_slice;
  }

  Shot frames_of_slice(std::size_t slice) const {
    if (slice >= n_slices()) throw IndexError("slice out of range");
    return {slice * compression, std::min((slice + 1) * compression, n_frames)};
  }

  bool operator==(const TokenLayout&) const = default;
};

// First frame covered by the token's latent slice.
inline std::size_t frame_of_token(const TokenLayout& layout, std::size_t token) {
  layout.validate();
  return layout.slice_of_token(token) * layout.compression;
}

namespace detail {

inline void check_covers(const TokenLayout& layout, const ShotPartition& partition) {
  layout.validate();
  if (partition.n_frames() != layout.n_frames) {
    throw ValidationError("partition covers " + std::to_string(partition.n_frames()) + " frames but layout has " +
                          std::to_string(layout.n_frames));
  }
  partition.require_contiguous("token masks");
}

// Shot of each latent slice, assigned by the slice's first frame.
inline std::vector<std::size_t> slice_shots(const TokenLayout& layout, const ShotPartition& partition) {
  check_covers(layout, partition);
  std::vector<std::size_t> out(layout.n_slices());
  for (std::size_t s = 0; s < out.size(); ++s) out[s] = *partition.shot_of_frame(s * layout.compression);
  return out;
}

}  // namespace detail

// A slice straddling a shot boundary belongs to the shot of its first frame.
inline std::size_t shot_of_token(const TokenLayout& layout, const ShotPartition& partition, std::size_t token) {
  detail::check_covers(layout, partition);
  return *partition.shot_of_frame(frame_of_token(layout, token));
}

// The same partition expressed over latent slices (one "frame" per slice).
inline ShotPartition slice_partition(const ShotPartition& partition, const TokenLayout& layout) {
  auto shots = detail::slice_shots(layout, partition);
  std::vector<std::size_t> bounds{0};
  for (std::size_t s = 1; s < shots.size(); ++s) {
    if (shots[s] != shots[s - 1]) bounds.push_back(s);
  }
  bounds.push_back(shots.size());
  return ShotPartition::from_boundaries(bounds);
}

// allowed(i, j) iff tokens i and j belong to the same shot.
inline AttnMask build_block_diagonal_mask(const ShotPartition& partition, const TokenLayout& layout) {
  auto shots = detail::slice_shots(layout, partition);
  const std::size_t n = layout.n_tokens();
  const std::size_t p = layout.tokens_per_slice;
  AttnMask mask(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) mask.set(i, j, shots[i / p] == shots[j / p]);
  }
  return mask;
}

// Visible-First-Frame: every token of the first latent slice becomes visible
// as a key to every query. Other entries are unchanged.
inline AttnMask apply_visible_first_frame(AttnMask mask, const TokenLayout& layout) {
  layout.validate();
  if (mask.size() != layout.n_tokens()) throw ShapeError("mask size does not match layout");
  for (std::size_t i = 0; i < mask.size(); ++i) {
    for (std::size_t j = 0; j < layout.tokens_per_slice; ++j) mask.set(i, j, true);
  }
  return mask;
}

// Half-open range of text-token indices describing one shot.
struct TextSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool contains(std::size_t t) const noexcept { return t >= begin && t < end; }
  bool operator==(const TextSpan&) const = default;
};

struct TextVideoMask {
  AttnMask mask;  // (n_text + n_video) square; text tokens first
  std::size_t n_text = 0;
  std::vector<std::string> warnings;
};

// Cross-modal mask for text/video attention layers. Tokens [0, n_text) are
// text, the remaining ones are the layout's video tokens. A video token and a
// text token see each other iff the text token lies in the span of the video
// token's shot; text tokens outside every span are global and visible to all
// video tokens. Same-modality entries are all allowed.
inline TextVideoMask build_text_video_mask(const ShotPartition& partition, const TokenLayout& layout,
                                           const std::vector<TextSpan>& spans, std::size_t n_text) {
  auto shots = detail::slice_shots(layout, partition);
  if (spans.size() != partition.shot_count()) {
    throw ValidationError("need one text span per shot (" + std::to_string(partition.shot_count()) + "), got " +
                          std::to_string(spans.size()));
  }
  TextVideoMask out;
  out.n_text = n_text;
  std::vector<int> owner(n_text, -1);
  for (std::size_t m = 0; m < spans.size(); ++m) {
    const auto& s = spans[m];
    if (s.end < s.begin || s.end > n_text) throw ValidationError("text span outside text tokens");
    if (s.begin == s.end) out.warnings.push_back("shot " + std::to_string(m) + " has an empty text span");
    for (std::size_t t = s.begin; t < s.end; ++t) {
      if (owner[t] != -1) throw ValidationError("text spans overlap at token " + std::to_string(t));
      owner[t] = static_cast<int>(m);
    }
  }
  const std::size_t nv = layout.n_tokens();
  const std::size_t p = layout.tokens_per_slice;
  AttnMask mask(n_text + nv, true);
  for (std::size_t v = 0; v < nv; ++v) {
    auto shot = static_cast<int>(shots[v / p]);
    for (std::size_t t = 0; t < n_text; ++t) {
      bool ok = owner[t] == -1 || owner[t] == shot;
      mask.set(n_text + v, t, ok);
      mask.set(t, n_text + v, ok);
    }
  }
  out.mask = std::move(mask);
  return out;
}

// ---------------------------------------------------------------------------
// Layer policies
// ---------------------------------------------------------------------------

// Which transformer layers receive the shot mask. Presets:
//   unet-last6      the last six layers
//   dit-mid         layers [7, total - 2]; 7..28 for a 30-layer DiT
//   dit-mid:A-B     layers A..B inclusive
//   all, none
//   explicit list   comma-separated indices, e.g. "3,4,5"
class LayerPolicy {
 public:
  LayerPolicy(std::size_t total_layers, std::set<std::size_t> masked, std::string name = "explicit")
      : total_(total_layers), masked_(std::move(masked)), name_(std::move(name)) {
    if (total_ == 0) throw ConfigError("layer policy needs at least one layer");
    if (!masked_.empty() && *masked_.rbegin() >= total_) {
      throw ConfigError("masked layer " + std::to_string(*masked_.rbegin()) + " outside [0, " +
                        std::to_string(total_) + ")");
    }
  }

  static LayerPolicy preset(std::string_view spec, std::size_t total_layers) {
    if (total_layers == 0) throw ConfigError("layer policy needs at least one layer");
    std::set<std::size_t> masked;
    if (spec == "none") return LayerPolicy(total_layers, {}, "none");
    if (spec == "all") {
      for (std::size_t l = 0; l < total_layers; ++l) masked.insert(l);
      return LayerPolicy(total_layers, std::move(masked), "all");
    }
    if (spec == "unet-last6") {
      if (total_layers < 6) {
        throw ConfigError("unet-last6 needs at least 6 layers, model has " + std::to_string(total_layers));
      }
      for (std::size_t l = total_layers - 6; l < total_layers; ++l) masked.insert(l);
      return LayerPolicy(total_layers, std::move(masked), "unet-last6");
    }
    if (spec.starts_with("dit-mid")) {
      std::size_t lo = 7;
      std::size_t hi = 0;
      if (spec == "dit-mid") {
        if (total_layers < 9) throw ConfigError("dit-mid needs at least 9 layers");
        hi = total_layers - 2;
      } else if (spec.starts_with("dit-mid:")) {
        auto range = spec.substr(8);
        auto dash = range.find('-');
        if (dash == std::string_view::npos) throw ConfigError("dit-mid range must look like dit-mid:A-B");
        lo = parse_index(range.substr(0, dash));
        hi = parse_index(range.substr(dash + 1));
      } else {
        throw ConfigError("unknown layer policy \"" + std::string(spec) + "\"");
      }
      if (lo > hi || hi >= total_layers) throw ConfigError("dit-mid range outside the model's layers");
      for (std::size_t l = lo; l <= hi; ++l) masked.insert(l);
      return LayerPolicy(total_layers, std::move(masked), std::string(spec));
    }
    // explicit list
    std::size_t pos = 0;
    while (pos <= spec.size()) {
      auto comma = spec.find(',', pos);
      auto item = spec.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
      masked.insert(parse_index(item));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    return LayerPolicy(total_layers, std::move(masked), "explicit");
  }

  std::size_t total_layers() const noexcept { return total_; }
  const std::set<std::size_t>& masked_layers() const noexcept { return masked_; }
  const std::string& name() const noexcept { return name_; }

  bool operator==(const LayerPolicy&) const = default;

 private:
  static std::size_t parse_index(std::string_view s) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
      throw ConfigError("bad layer index \"" + std::string(s) + "\"");
    }
    return v;
  }

  std::size_t total_;
  std::set<std::size_t> masked_;
  std::string name_;
};

inline bool select_masked_layers(const LayerPolicy& policy, std::size_t layer) {
  if (layer >= policy.total_layers()) {
    throw IndexError("layer " + std::to_string(layer) + " outside model of " + std::to_string(policy.total_layers()) +
                     " layers");
  }
  return policy.masked_layers().count(layer) != 0;
}

// ---------------------------------------------------------------------------
// MSKv1: magic "MSKv1", u32 LE n, then n*n bytes (row-major, 1 = allowed).
// ---------------------------------------------------------------------------

inline constexpr std::string_view kMskMagic = "MSKv1";

inline binary::Bytes encode_msk(const AttnMask& mask) {
  binary::ByteWriter w;
  w.reserve(9 + mask.entries().size());
  w.magic(kMskMagic);
  w.u32(static_cast<std::uint32_t>(mask.size()));
  w.raw(mask.entries());
  return std::move(w).bytes();
}

inline AttnMask decode_msk(std::span<const std::uint8_t> data) {
  binary::ByteReader r(data, "MSK");
  r.expect_magic(kMskMagic);
  std::uint64_t n = r.u32();
  if (n == 0) throw FormatError("MSK: empty mask");
  r.expect_payload(n * n);
  auto raw = r.take(n * n);
  try {
    return AttnMask(n, std::vector<std::uint8_t>(raw.begin(), raw.end()));
  } catch (const ValidationError& e) {
    throw FormatError(std::string("MSK: ") + e.what());
  }
}

inline void write_msk(const AttnMask& mask, const std::filesystem::path& path) {
  binary::write_file_atomic(path, encode_msk(mask));
}

inline AttnMask read_msk(const std::filesystem::path& path) { return decode_msk(binary::read_file(path)); }

}  // namespace cinetrans
