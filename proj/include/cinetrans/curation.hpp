#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cinetrans/binary_io.hpp"
#include "cinetrans/error.hpp"
#include "cinetrans/frameio.hpp"
#include "cinetrans/partition.hpp"

namespace cinetrans {

// A split segment described by the embeddings of its first and last frames.
struct Segment {
  std::size_t id = 0;
  std::vector<double> first_embed;
  std::vector<double> end_embed;
  std::size_t length_frames = 1;

  void validate() const {
    if (first_embed.empty() || first_embed.size() != end_embed.size()) {
      throw ShapeError("segment " + std::to_string(id) + ": endpoint embeddings must share a nonzero dim");
    }
    for (const auto* v : {&first_embed, &end_embed}) {
      double sq = 0.0;
      for (double x : *v) sq += x * x;
      if (std::abs(std::sqrt(sq) - 1.0) > 1e-6) {
        throw ValidationError("segment " + std::to_string(id) + ": embeddings must be unit norm");
      }
    }
    if (length_frames == 0) throw ValidationError("segment length must be positive");
  }
};

// Where the gamma (beginning/end coherence) rule measures from.
enum class GammaAnchor {
  group_head,   // first frame of the open group's first segment
  predecessor,  // first frame of the immediately preceding segment
};

struct StitchConfig {
  double alpha = 0.9;  // max first/end distance inside one segment
  double beta = 0.7;   // max distance across the joint
  double gamma = 0.8;  // max distance from the clip's beginning to the new end
  GammaAnchor anchor = GammaAnchor::group_head;

  void validate() const {
    if (!(alpha > 0.0) || !(beta >= 0.0) || !(gamma >= 0.0)) {
      throw ConfigError("stitch thresholds must be positive");
    }
  }
};

struct StitchResult {
  std::vector<std::vector<std::size_t>> groups;  // positions in the input list
  std::vector<std::size_t> dropped;

  bool operator==(const StitchResult&) const = default;
};

inline double endpoint_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("embedding dims differ");
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    sq += d * d;
  }
  return std::sqrt(sq);
}

// Sequential split-stitch over segments in their original order:
//   R1  dis(first_i, end_i) > alpha       -> drop i; the open group closes
//   R2  no surviving predecessor          -> i opens a new group
//   R3  dis(end_{i-1}, first_i) < beta and dis(anchor, end_i) < gamma
//                                          -> i joins the open group
//       otherwise                          -> i opens a new group
// The anchor is the open group's first segment's first frame (or the
// predecessor's, see GammaAnchor). Per-segment embeddings are never updated
// after merging.
inline StitchResult split_stitch(const std::vector<Segment>& segments, const StitchConfig& config = {}) {
  config.validate();
  for (const auto& s : segments) s.validate();
  if (!segments.empty()) {
    for (const auto& s : segments) {
      if (s.first_embed.size() != segments.front().first_embed.size()) throw ShapeError("embedding dims differ");
    }
  }

  StitchResult out;
  bool open = false;
  std::size_t head = 0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& seg = segments[i];
    if (endpoint_distance(seg.first_embed, seg.end_embed) > config.alpha) {
      out.dropped.push_back(i);
      open = false;
      continue;
    }
    if (open) {
      const auto& prev = segments[i - 1];
      const auto& anchor = config.anchor == GammaAnchor::group_head ? segments[head] : prev;
      bool joint = endpoint_distance(prev.end_embed, seg.first_embed) < config.beta;
      bool coherent = endpoint_distance(anchor.first_embed, seg.end_embed) < config.gamma;
      if (joint && coherent) {
        out.groups.back().push_back(i);
        continue;
      }
    }
    out.groups.push_back({i});
    head = i;
    open = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset records
// ---------------------------------------------------------------------------

struct DatasetRecord {
  std::string id;
  ShotPartition shots;
  std::string general_caption;
  std::vector<std::string> shot_captions;
  std::optional<double> aesthetic_score;

  std::size_t duration_frames() const noexcept { return shots.n_frames(); }

  void validate() const {
    if (shot_captions.size() != shots.shot_count()) {
      throw ValidationError("record " + id + ": " + std::to_string(shot_captions.size()) + " shot captions for " +
                            std::to_string(shots.shot_count()) + " shots");
    }
  }

  bool operator==(const DatasetRecord&) const = default;
};

struct Captions {
  std::string general;
  std::vector<std::string> per_shot;
};

// Caption slots stay empty when no captions are supplied.
inline DatasetRecord build_dataset_record(std::string id, const FrameSequence& seq, const ShotPartition& partition,
                                          const std::optional<Captions>& captions = std::nullopt,
                                          std::optional<double> aesthetic_score = std::nullopt) {
  if (partition.n_frames() != seq.frame_count()) {
    throw ValidationError("partition covers " + std::to_string(partition.n_frames()) + " frames, video has " +
                          std::to_string(seq.frame_count()));
  }
  DatasetRecord r{std::move(id), partition, {}, std::vector<std::string>(partition.shot_count()), aesthetic_score};
  if (captions) {
    if (captions->per_shot.size() != partition.shot_count()) {
      throw ValidationError("expected " + std::to_string(partition.shot_count()) + " shot captions, got " +
                            std::to_string(captions->per_shot.size()));
    }
    r.general_caption = captions->general;
    r.shot_captions = captions->per_shot;
  }
  return r;
}

struct ClipFilter {
  std::size_t min_duration = 0;
  std::size_t max_duration = SIZE_MAX;
  std::size_t min_shots = 1;
  std::size_t max_shots = SIZE_MAX;
  std::optional<double> min_aesthetic;

  void validate() const {
    if (min_shots < 1) throw ConfigError("shot range lower bound must be at least 1");
    if (min_shots > max_shots) throw ConfigError("shot range is empty");
    if (min_duration > max_duration) throw ConfigError("duration range is empty");
  }

  bool accepts(const DatasetRecord& r) const {
    auto d = r.duration_frames();
    auto m = r.shots.shot_count();
    if (d < min_duration || d > max_duration || m < min_shots || m > max_shots) return false;
    if (min_aesthetic) return r.aesthetic_score && *r.aesthetic_score >= *min_aesthetic;
    return true;
  }
};

inline std::vector<DatasetRecord> filter_clips(const std::vector<DatasetRecord>& records, const ClipFilter& filter) {
  filter.validate();
  std::vector<DatasetRecord> out;
  for (const auto& r : records) {
    if (filter.accepts(r)) out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// EMBv1: magic "EMBv1", u32 LE count, u32 LE dim, then count*dim float32 LE.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kEmbMagic = "EMBv1";

struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<float> values;  // count x dim, row-major

  std::size_t count() const noexcept { return dim == 0 ? 0 : values.size() / dim; }
  std::span<const float> operator[](std::size_t i) const { return {values.data() + i * dim, dim}; }

  // Row i as doubles, renormalised to unit length. float32 rounding leaves
  // stored unit vectors a few ulps off; anything further off is rejected.
  std::vector<double> unit_row(std::size_t i) const {
    auto row = (*this)[i];
    std::vector<double> v(row.begin(), row.end());
    double sq = 0.0;
    for (double x : v) sq += x * x;
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-4) {
      throw ValidationError("embedding " + std::to_string(i) + " is not unit norm");
    }
    l2_normalize(v);
    return v;
  }

  bool operator==(const EmbeddingTable&) const = default;
};

inline binary::Bytes encode_emb(const EmbeddingTable& t) {
  if (t.dim == 0 || t.values.size() % t.dim != 0) throw ShapeError("embedding table size is not a multiple of dim");
  binary::ByteWriter w;
  w.reserve(13 + 4 * t.values.size());
  w.magic(kEmbMagic);
  w.u32(static_cast<std::uint32_t>(t.count()));
  w.u32(static_cast<std::uint32_t>(t.dim));
  for (float v : t.values) w.f32(v);
  return std::move(w).bytes();
}

inline EmbeddingTable decode_emb(std::span<const std::uint8_t> data) {
  binary::ByteReader r(data, "EMB");
  r.expect_magic(kEmbMagic);
  std::uint64_t count = r.u32();
  std::uint64_t dim = r.u32();
  if (dim == 0) throw FormatError("EMB: dim must be positive");
  r.expect_payload(count * dim * 4);
  EmbeddingTable t;
  t.dim = dim;
  t.values.resize(count * dim);
  for (auto& v : t.values) {
    v = r.f32();
    if (!std::isfinite(v)) throw FormatError("EMB: non-finite value");
  }
  return t;
}

inline void write_emb(const EmbeddingTable& t, const std::filesystem::path& path) {
  binary::write_file_atomic(path, encode_emb(t));
}

inline EmbeddingTable read_emb(const std::filesystem::path& path) { return decode_emb(binary::read_file(path)); }

// Segments from an EMB table holding (first, end) pairs in order.
inline std::vector<Segment> segments_from_embeddings(const EmbeddingTable& table) {
  if (table.count() % 2 != 0) throw ValidationError("segment embeddings come in (first, end) pairs");
  std::vector<Segment> out;
  for (std::size_t i = 0; i < table.count() / 2; ++i) {
    out.push_back({i, table.unit_row(2 * i), table.unit_row(2 * i + 1), 1});
  }
  return out;
}

// EMB rows as a FeatureSequence, for swapping precomputed embeddings in for
// the built-in extractors.
inline FeatureSequence features_from_embeddings(const EmbeddingTable& table) {
  std::vector<double> values;
  values.reserve(table.values.size());
  for (std::size_t i = 0; i < table.count(); ++i) {
    auto row = table.unit_row(i);
    values.insert(values.end(), row.begin(), row.end());
  }
  return FeatureSequence(table.count(), table.dim, std::move(values));
}

}  // namespace cinetrans
