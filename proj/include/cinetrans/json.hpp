#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cinetrans/analysis.hpp"
#include "cinetrans/binary_io.hpp"
#include "cinetrans/curation.hpp"
#include "cinetrans/error.hpp"
#include "cinetrans/frameio.hpp"
#include "cinetrans/metrics.hpp"
#include "cinetrans/partition.hpp"
#include "cinetrans/shotmask.hpp"

// JSON sidecars. Keys are written in schema order; every writer is the exact
// inverse of its reader, so parse -> dump reproduces the file byte for byte.
namespace cinetrans {

using Json = nlohmann::ordered_json;

namespace json_detail {

template <typename T>
T get(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(std::string("JSON: missing key \"") + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("JSON: bad value for \"") + key + "\": " + e.what());
  }
}

inline const Json& at(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(std::string("JSON: missing key \"") + key + "\"");
  return j.at(key);
}

template <typename T>
std::optional<T> get_optional(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return get<T>(j, key);
}

template <typename T>
Json optional_value(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

inline Json shots_json(const ShotPartition& p) {
  Json shots = Json::array();
  for (const auto& s : p.shots()) shots.push_back(Json{{"start", s.start}, {"end", s.end}});
  return shots;
}

inline ShotPartition partition_from(const Json& j, const char* n_key) {
  auto n = get<std::size_t>(j, n_key);
  std::vector<Shot> shots;
  const auto& arr = at(j, "shots");
  if (!arr.is_array()) throw ValidationError("JSON: \"shots\" must be an array");
  for (const auto& s : arr) shots.push_back({get<std::size_t>(s, "start"), get<std::size_t>(s, "end")});
  std::vector<std::size_t> gradual;
  if (j.contains("gradual_frames")) gradual = get<std::vector<std::size_t>>(j, "gradual_frames");
  return ShotPartition(n, std::move(shots), std::move(gradual));
}

}  // namespace json_detail

// {"n_frames": N, "shots": [{"start": i, "end": j}, ...], "gradual_frames": [...]}
inline Json to_json(const ShotPartition& p) {
  return Json{{"n_frames", p.n_frames()}, {"shots", json_detail::shots_json(p)}, {"gradual_frames", p.gradual_frames()}};
}

inline ShotPartition partition_from_json(const Json& j) { return json_detail::partition_from(j, "n_frames"); }

inline Json to_json(const DatasetRecord& r) {
  return Json{{"id", r.id},
              {"n_frames", r.shots.n_frames()},
              {"shots", json_detail::shots_json(r.shots)},
              {"gradual_frames", r.shots.gradual_frames()},
              {"general_caption", r.general_caption},
              {"shot_captions", r.shot_captions},
              {"aesthetic_score", json_detail::optional_value(r.aesthetic_score)}};
}

inline DatasetRecord record_from_json(const Json& j) {
  DatasetRecord r;
  r.id = json_detail::get<std::string>(j, "id");
  r.shots = json_detail::partition_from(j, "n_frames");
  r.general_caption = json_detail::get<std::string>(j, "general_caption");
  r.shot_captions = json_detail::get<std::vector<std::string>>(j, "shot_captions");
  r.aesthetic_score = json_detail::get_optional<double>(j, "aesthetic_score");
  r.validate();
  return r;
}

// {"bins": n, "epsilon": e, "masses": [...]}
inline Json to_json(const Histogram& h) {
  return Json{{"bins", h.bin_count()}, {"epsilon", h.epsilon()}, {"masses", h.masses()}};
}

inline Histogram histogram_from_json(const Json& j) {
  auto bins = json_detail::get<std::size_t>(j, "bins");
  Histogram h(json_detail::get<std::vector<double>>(j, "masses"), json_detail::get<double>(j, "epsilon"));
  if (h.bin_count() != bins) throw ValidationError("histogram: \"bins\" does not match masses");
  return h;
}

inline Json to_json(const MetricReport& r) {
  using json_detail::optional_value;
  return Json{{"detected_shots", r.detected_shots},
              {"specified_shots", r.specified_shots},
              {"transition_control", r.transition_control},
              {"intra_subject", r.intra_subject},
              {"intra_background", r.intra_background},
              {"inter_semantic", optional_value(r.inter_semantic)},
              {"inter_visual", optional_value(r.inter_visual)},
              {"gap_semantic", optional_value(r.gap_semantic)},
              {"gap_visual", optional_value(r.gap_visual)},
              {"aesthetic_quality", optional_value(r.aesthetic_quality)},
              {"semantic_consistency", optional_value(r.semantic_consistency)}};
}

inline MetricReport report_from_json(const Json& j) {
  using namespace json_detail;
  MetricReport r;
  r.detected_shots = get<std::size_t>(j, "detected_shots");
  r.specified_shots = get<std::size_t>(j, "specified_shots");
  r.transition_control = get<double>(j, "transition_control");
  r.intra_subject = get<double>(j, "intra_subject");
  r.intra_background = get<double>(j, "intra_background");
  r.inter_semantic = get_optional<double>(j, "inter_semantic");
  r.inter_visual = get_optional<double>(j, "inter_visual");
  r.gap_semantic = get_optional<double>(j, "gap_semantic");
  r.gap_visual = get_optional<double>(j, "gap_visual");
  r.aesthetic_quality = get_optional<double>(j, "aesthetic_quality");
  r.semantic_consistency = get_optional<double>(j, "semantic_consistency");
  return r;
}

inline Json to_json(const StitchResult& s) { return Json{{"groups", s.groups}, {"dropped", s.dropped}}; }

inline StitchResult stitch_result_from_json(const Json& j) {
  return {json_detail::get<std::vector<std::vector<std::size_t>>>(j, "groups"),
          json_detail::get<std::vector<std::size_t>>(j, "dropped")};
}

// {"segments": [{"id": 0, "first": [...], "end": [...], "length_frames": n}, ...]}
inline Json to_json(const std::vector<Segment>& segments) {
  Json arr = Json::array();
  for (const auto& s : segments) {
    arr.push_back(Json{{"id", s.id}, {"first", s.first_embed}, {"end", s.end_embed}, {"length_frames", s.length_frames}});
  }
  return Json{{"segments", arr}};
}

inline std::vector<Segment> segments_from_json(const Json& j) {
  const Json& arr = j.is_array() ? j : json_detail::at(j, "segments");
  if (!arr.is_array()) throw ValidationError("JSON: \"segments\" must be an array");
  std::vector<Segment> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& s = arr[i];
    Segment seg;
    seg.id = s.contains("id") ? json_detail::get<std::size_t>(s, "id") : i;
    seg.first_embed = json_detail::get<std::vector<double>>(s, "first");
    seg.end_embed = json_detail::get<std::vector<double>>(s, "end");
    seg.length_frames = s.contains("length_frames") ? json_detail::get<std::size_t>(s, "length_frames") : 1;
    seg.validate();
    out.push_back(std::move(seg));
  }
  return out;
}

inline Json to_json(const LayerPolicy& p) {
  return Json{{"name", p.name()}, {"total_layers", p.total_layers()}, {"masked_layers", p.masked_layers()}};
}

inline LayerPolicy layer_policy_from_json(const Json& j) {
  auto masked = json_detail::get<std::set<std::size_t>>(j, "masked_layers");
  return LayerPolicy(json_detail::get<std::size_t>(j, "total_layers"), std::move(masked),
                     json_detail::get<std::string>(j, "name"));
}

// Non-finite ratios are written as null with "ratio_infinite": true.
inline Json to_json(const IntraInterStats& s) {
  return Json{{"intra_mean", s.intra_mean},
              {"inter_mean", s.inter_mean},
              {"ratio", s.ratio_infinite() ? Json(nullptr) : Json(s.ratio)},
              {"ratio_infinite", s.ratio_infinite()}};
}

inline Json to_json(const CaptureReport& r) {
  Json heads = Json::array();
  for (const auto& h : r.heads) {
    Json e{{"layer", h.layer}, {"head", h.head}};
    Json stats = to_json(h.ratio);
    for (auto& [k, v] : stats.items()) e[k] = v;
    e["correlation"] = json_detail::optional_value(h.correlation);
    heads.push_back(std::move(e));
  }
  bool inf = std::isinf(r.mean_ratio);
  return Json{{"heads", heads},
              {"mean_intra", r.mean_intra},
              {"mean_inter", r.mean_inter},
              {"mean_ratio", inf ? Json(nullptr) : Json(r.mean_ratio)},
              {"mean_ratio_infinite", inf},
              {"mean_correlation", json_detail::optional_value(r.mean_correlation)}};
}

namespace json_detail {

inline std::string dtype_name(PixelType t) { return t == PixelType::byte ? "byte" : "float32"; }

inline PixelType dtype_from(const std::string& s) {
  if (s == "byte") return PixelType::byte;
  if (s == "float32") return PixelType::float32;
  throw ValidationError("unknown dtype \"" + s + "\"");
}

}  // namespace json_detail

inline Json to_json(const SyntheticSpec& spec) {
  Json shots = Json::array();
  for (const auto& s : spec.shots) {
    shots.push_back(Json{{"length", s.length_frames},
                         {"color", s.base_color},
                         {"noise", s.noise_amplitude},
                         {"drift", s.drift_per_frame}});
  }
  Json gradual = Json::array();
  for (const auto& g : spec.gradual_spans) gradual.push_back(Json{{"position", g.position}, {"frames", g.crossfade_frames}});
  return Json{{"height", spec.height},          {"width", spec.width}, {"channels", spec.channels},
              {"dtype", json_detail::dtype_name(spec.dtype)}, {"seed", spec.seed},   {"shots", shots},
              {"gradual", gradual}};
}

inline SyntheticSpec synthetic_spec_from_json(const Json& j) {
  using json_detail::get;
  SyntheticSpec spec;
  if (j.contains("height")) spec.height = get<std::size_t>(j, "height");
  if (j.contains("width")) spec.width = get<std::size_t>(j, "width");
  if (j.contains("channels")) spec.channels = get<std::size_t>(j, "channels");
  if (j.contains("dtype")) spec.dtype = json_detail::dtype_from(get<std::string>(j, "dtype"));
  if (j.contains("seed")) spec.seed = get<std::uint64_t>(j, "seed");
  for (const auto& s : json_detail::at(j, "shots")) {
    ShotSpec shot;
    shot.length_frames = get<std::size_t>(s, "length");
    shot.base_color = get<std::vector<double>>(s, "color");
    if (s.contains("noise")) shot.noise_amplitude = get<double>(s, "noise");
    if (s.contains("drift")) shot.drift_per_frame = get<std::vector<double>>(s, "drift");
    spec.shots.push_back(std::move(shot));
  }
  if (j.contains("gradual")) {
    for (const auto& g : json_detail::at(j, "gradual")) {
      spec.gradual_spans.push_back({get<std::size_t>(g, "position"), get<std::size_t>(g, "frames")});
    }
  }
  return spec;
}

// Canonical text form: two-space indent plus trailing newline.
inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

inline Json parse_json(std::string_view text, const std::string& what = "JSON") {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(what + ": " + e.what());
  }
}

inline Json read_json(const std::filesystem::path& path) {
  auto bytes = binary::read_file(path);
  return parse_json(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), path.string());
}

inline void write_json(const Json& j, const std::filesystem::path& path) { binary::write_file_atomic(path, dump(j)); }

}  // namespace cinetrans
