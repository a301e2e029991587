#pragma once

#include <cstdint>
#include <string>

#include "cinetrans/curation.hpp"
#include "cinetrans/error.hpp"
#include "cinetrans/json.hpp"
#include "cinetrans/metrics.hpp"
#include "cinetrans/shotdetect.hpp"
#include "cinetrans/shotmask.hpp"

namespace cinetrans {

// Every tunable of the command-line tools. Defaults are the dataset
// construction thresholds (cut 27, single 0.45, all 0.50, alpha 0.9, beta 0.7,
// gamma 0.8) and the consistency-gap binning (50 bins, epsilon 1e-9).
struct RunConfig {
  SegmentConfig segment;
  StitchConfig stitch;
  std::string subject_extractor = "builtin-center";
  std::string background_extractor = "builtin-border";
  std::string semantic_extractor = "builtin-v1";
  std::string layer_policy = "dit-mid";
  std::size_t total_layers = 30;
  std::size_t bins = kDefaultBins;
  double epsilon = kDefaultEpsilon;
  std::uint64_t seed = 7;

  bool operator==(const RunConfig& o) const {
    return to_json(*this) == to_json(o);
  }

  void validate() const {
    if (!(segment.cut_threshold > 0.0)) throw ConfigError("cut threshold must be positive");
    for (double t : {segment.single_threshold, segment.all_threshold}) {
      if (!(t > 0.0 && t < 1.0)) throw ConfigError("gradual thresholds must lie in (0, 1)");
    }
    stitch.validate();
    if (bins == 0) throw ConfigError("bins must be positive");
    if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be nonnegative");
    LayerPolicy::preset(layer_policy, total_layers);
    for (const auto* id : {&subject_extractor, &background_extractor, &semantic_extractor}) {
      if (!default_extractors().contains(*id)) throw ConfigError("unknown feature extractor \"" + *id + "\"");
    }
  }

  friend Json to_json(const RunConfig& c) {
    return Json{{"cut_threshold", c.segment.cut_threshold},
                {"single_threshold", c.segment.single_threshold},
                {"all_threshold", c.segment.all_threshold},
                {"alpha", c.stitch.alpha},
                {"beta", c.stitch.beta},
                {"gamma", c.stitch.gamma},
                {"gamma_anchor", c.stitch.anchor == GammaAnchor::group_head ? "group_head" : "predecessor"},
                {"subject_extractor", c.subject_extractor},
                {"background_extractor", c.background_extractor},
                {"semantic_extractor", c.semantic_extractor},
                {"layer_policy", c.layer_policy},
                {"total_layers", c.total_layers},
                {"bins", c.bins},
                {"epsilon", c.epsilon},
                {"seed", c.seed}};
  }
};

inline GammaAnchor gamma_anchor_from(const std::string& s) {
  if (s == "group_head") return GammaAnchor::group_head;
  if (s == "predecessor") return GammaAnchor::predecessor;
  throw ConfigError("gamma_anchor must be group_head or predecessor");
}

// Missing keys keep their defaults; unknown keys are rejected.
inline RunConfig run_config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "cut_threshold") c.segment.cut_threshold = value.get<double>();
      else if (key == "single_threshold") c.segment.single_threshold = value.get<double>();
      else if (key == "all_threshold") c.segment.all_threshold = value.get<double>();
      else if (key == "alpha") c.stitch.alpha = value.get<double>();
      else if (key == "beta") c.stitch.beta = value.get<double>();
      else if (key == "gamma") c.stitch.gamma = value.get<double>();
      else if (key == "gamma_anchor") c.stitch.anchor = gamma_anchor_from(value.get<std::string>());
      else if (key == "subject_extractor") c.subject_extractor = value.get<std::string>();
      else if (key == "background_extractor") c.background_extractor = value.get<std::string>();
      else if (key == "semantic_extractor") c.semantic_extractor = value.get<std::string>();
      else if (key == "layer_policy") c.layer_policy = value.get<std::string>();
      else if (key == "total_layers") c.total_layers = value.get<std::size_t>();
      else if (key == "bins") c.bins = value.get<std::size_t>();
      else if (key == "epsilon") c.epsilon = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else throw ConfigError("unknown config key \"" + key + "\"");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config key \"" + key + "\": " + e.what());
    }
  }
  c.validate();
  return c;
}

}  // namespace cinetrans
