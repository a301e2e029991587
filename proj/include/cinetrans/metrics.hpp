#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cinetrans/error.hpp"
#include "cinetrans/frameio.hpp"
#include "cinetrans/partition.hpp"

namespace cinetrans {

// ---------------------------------------------------------------------------
// Transition control
// ---------------------------------------------------------------------------

inline constexpr double kTransitionUnderK = 2.0;  // x < 1
inline constexpr double kTransitionOverK = 1.6;   // x >= 1

// x = detected / specified, score = x^k / e^{k (x - 1)} with k = 2 below the
// target and 1.6 at or above it. A single detected shot scores 0.
inline double transition_control_score(std::size_t detected, std::size_t specified) {
  if (specified < 2) throw DomainError("specified shot count must be at least 2");
  if (detected <= 1) return 0.0;
  if (detected == specified) return 1.0;
  double x = static_cast<double>(detected) / static_cast<double>(specified);
  double k = x < 1.0 ? kTransitionUnderK : kTransitionOverK;
  return std::pow(x, k) * std::exp(-k * (x - 1.0));
}

inline std::size_t middle_frame(const Shot& shot) {
  if (shot.end <= shot.start) throw ValidationError("middle frame of an empty shot");
  return shot.start + (shot.end - shot.start - 1) / 2;
}

// ---------------------------------------------------------------------------
// Consistency scores
// ---------------------------------------------------------------------------

inline double cosine_unit(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("feature dims differ");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return dot;
}

inline double clamp_unit(double v) { return std::clamp(v, 0.0, 1.0); }

namespace detail {

inline void check_features(const FeatureSequence& f, const ShotPartition& p) {
  if (f.frame_count() != p.n_frames()) {
    throw ShapeError("features cover " + std::to_string(f.frame_count()) + " frames, partition " +
                     std::to_string(p.n_frames()));
  }
}

// Mean over shots of the mean cosine between consecutive frames; one-frame
// shots count as 1.
inline double adjacent_consistency(const FeatureSequence& f, const ShotPartition& p) {
  check_features(f, p);
  double total = 0.0;
  for (const auto& s : p.shots()) {
    if (s.length() < 2) {
      total += 1.0;
      continue;
    }
    double acc = 0.0;
    for (std::size_t t = s.start + 1; t < s.end; ++t) acc += cosine_unit(f[t - 1], f[t]);
    total += clamp_unit(acc / static_cast<double>(s.length() - 1));
  }
  return total / static_cast<double>(p.shot_count());
}

inline void require_multishot(const ShotPartition& p) {
  if (p.shot_count() < 2) throw NotComputableError("inter-shot consistency needs at least two shots");
}

}  // namespace detail

struct IntraShotConsistency {
  double subject = 0.0;
  double background = 0.0;
};

inline IntraShotConsistency intra_shot_consistency(const FeatureSequence& subject, const FeatureSequence& background,
                                                   const ShotPartition& partition) {
  return {detail::adjacent_consistency(subject, partition), detail::adjacent_consistency(background, partition)};
}

inline IntraShotConsistency intra_shot_consistency(const FrameSequence& seq, const ShotPartition& partition,
                                                   const std::string& subject_extractor = "builtin-center",
                                                   const std::string& background_extractor = "builtin-border",
                                                   const ExtractorRegistry& registry = default_extractors()) {
  return intra_shot_consistency(extract_features(seq, subject_extractor, registry),
                                extract_features(seq, background_extractor, registry), partition);
}

// Shot feature = renormalised mean of its frame features; score = mean cosine
// over unordered shot pairs, clamped to [0, 1].
inline double inter_shot_semantic_consistency(const FeatureSequence& features, const ShotPartition& partition) {
  detail::check_features(features, partition);
  detail::require_multishot(partition);
  std::vector<std::vector<double>> shot_features;
  for (const auto& s : partition.shots()) {
    std::vector<double> mean(features.dim(), 0.0);
    for (std::size_t t = s.start; t < s.end; ++t) {
      auto v = features[t];
      for (std::size_t i = 0; i < v.size(); ++i) mean[i] += v[i];
    }
    l2_normalize(mean);
    shot_features.push_back(std::move(mean));
  }
  double acc = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < shot_features.size(); ++a) {
    for (std::size_t b = a + 1; b < shot_features.size(); ++b) {
      acc += cosine_unit(shot_features[a], shot_features[b]);
      ++pairs;
    }
  }
  return clamp_unit(acc / static_cast<double>(pairs));
}

inline double inter_shot_semantic_consistency(const FrameSequence& seq, const ShotPartition& partition,
                                              const std::string& extractor = "builtin-v1",
                                              const ExtractorRegistry& registry = default_extractors()) {
  detail::require_multishot(partition);
  return inter_shot_semantic_consistency(extract_features(seq, extractor, registry), partition);
}

// Mean over unordered shot pairs of the middle-frame cosine, clamped.
inline double middle_frame_pair_similarity(const FeatureSequence& f, const ShotPartition& p) {
  detail::check_features(f, p);
  detail::require_multishot(p);
  std::vector<std::size_t> mids;
  for (const auto& s : p.shots()) mids.push_back(middle_frame(s));
  double acc = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < mids.size(); ++a) {
    for (std::size_t b = a + 1; b < mids.size(); ++b) {
      acc += cosine_unit(f[mids[a]], f[mids[b]]);
      ++pairs;
    }
  }
  return clamp_unit(acc / static_cast<double>(pairs));
}

// Average of the subject and background middle-frame similarities.
inline double inter_shot_visual_consistency(const FeatureSequence& subject, const FeatureSequence& background,
                                            const ShotPartition& partition) {
  return 0.5 * (middle_frame_pair_similarity(subject, partition) + middle_frame_pair_similarity(background, partition));
}

inline double inter_shot_visual_consistency(const FrameSequence& seq, const ShotPartition& partition,
                                            const std::string& subject_extractor = "builtin-center",
                                            const std::string& background_extractor = "builtin-border",
                                            const ExtractorRegistry& registry = default_extractors()) {
  detail::require_multishot(partition);
  return inter_shot_visual_consistency(extract_features(seq, subject_extractor, registry),
                                       extract_features(seq, background_extractor, registry), partition);
}

// ---------------------------------------------------------------------------
// Score distributions and the consistency gap
// ---------------------------------------------------------------------------

inline constexpr std::size_t kDefaultBins = 50;
inline constexpr double kDefaultEpsilon = 1e-9;

// Equal-width histogram over [0, 1] (last bin closed on the right) with
// additive smoothing: mass_i = (count_i / n + eps) / (1 + bins * eps).
class Histogram {
 public:
  Histogram() = default;

  Histogram(std::vector<double> masses, double epsilon) : masses_(std::move(masses)), epsilon_(epsilon) {
    if (masses_.empty()) throw ValidationError("histogram needs at least one bin");
    if (!(epsilon_ >= 0.0)) throw ValidationError("histogram epsilon must be nonnegative");
    double sum = 0.0;
    for (double m : masses_) {
      if (!(m >= 0.0)) throw ValidationError("histogram masses must be nonnegative");
      sum += m;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("histogram masses must sum to 1");
  }

  static std::size_t bin_of(double score, std::size_t bins) {
    return std::min(bins - 1, static_cast<std::size_t>(score * static_cast<double>(bins)));
  }

  std::size_t bin_count() const noexcept { return masses_.size(); }
  double epsilon() const noexcept { return epsilon_; }
  const std::vector<double>& masses() const noexcept { return masses_; }
  double operator[](std::size_t i) const { return masses_.at(i); }

  bool operator==(const Histogram&) const = default;

 private:
  std::vector<double> masses_;
  double epsilon_ = 0.0;
};

inline Histogram build_reference_distribution(std::span<const double> scores, std::size_t bins = kDefaultBins,
                                              double epsilon = kDefaultEpsilon) {
  if (scores.empty()) throw ValidationError("reference distribution needs at least one score");
  if (bins == 0) throw ConfigError("bin count must be positive");
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be nonnegative");
  std::vector<double> counts(bins, 0.0);
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("scores must lie in [0, 1]");
    counts[Histogram::bin_of(s, bins)] += 1.0;
  }
  const double n = static_cast<double>(scores.size());
  const double norm = 1.0 + static_cast<double>(bins) * epsilon;
  for (double& c : counts) c = (c / n + epsilon) / norm;
  return Histogram(std::move(counts), epsilon);
}

// Jensen-Shannon distance in base 2:
//   Mix = (P + Q) / 2,  JS = D(P || Mix) / 2 + D(Q || Mix) / 2,  JSD = sqrt(JS).
// Each bin's two terms are added in a fixed role-independent order, so
// jsd(p, q) and jsd(q, p) are bitwise equal.
inline double jsd(const Histogram& p, const Histogram& q) {
  if (p.bin_count() != q.bin_count()) throw ShapeError("histograms have different bin counts");
  auto term = [](double a, double mix) { return a > 0.0 ? a * std::log2(a / mix) : 0.0; };
  double js = 0.0;
  for (std::size_t i = 0; i < p.bin_count(); ++i) {
    double a = p[i];
    double b = q[i];
    double mix = 0.5 * (a + b);
    double ta = term(a, mix);
    double tb = term(b, mix);
    js += 0.5 * (std::min(ta, tb) + std::max(ta, tb));
  }
  return std::sqrt(std::clamp(js, 0.0, 1.0));
}

// Bins the generated scores like the reference and returns their JSD.
inline double consistency_gap(std::span<const double> generated_scores, const Histogram& reference) {
  if (generated_scores.empty()) throw ValidationError("consistency gap needs at least one generated score");
  return jsd(build_reference_distribution(generated_scores, reference.bin_count(), reference.epsilon()), reference);
}

struct ConvergencePoint {
  std::size_t n = 0;
  double cumulative_mean = 0.0;
  double ci95_width = 0.0;  // 2 * 1.96 * s_n / sqrt(n)
};

inline std::vector<ConvergencePoint> convergence_report(std::span<const double> scores, std::size_t step) {
  if (step == 0) throw ConfigError("step must be positive");
  if (scores.size() < 2 * step) throw ValidationError("convergence report needs at least 2 * step scores");
  // Shifted by the first score so constant input gives exactly zero spread.
  const double x0 = scores[0];
  std::vector<ConvergencePoint> out;
  for (std::size_t n = step; n <= scores.size(); n += step) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += scores[i] - x0;
    double shift = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (scores[i] - x0 - shift) * (scores[i] - x0 - shift);
    double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    out.push_back({n, x0 + shift, 2.0 * 1.96 * sd / std::sqrt(static_cast<double>(n))});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Per-video report
// ---------------------------------------------------------------------------

struct MetricReport {
  std::size_t detected_shots = 0;
  std::size_t specified_shots = 0;
  double transition_control = 0.0;
  double intra_subject = 0.0;
  double intra_background = 0.0;
  std::optional<double> inter_semantic;  // absent for single-shot videos
  std::optional<double> inter_visual;
  std::optional<double> gap_semantic;    // absent without a reference or inter score
  std::optional<double> gap_visual;
  std::optional<double> aesthetic_quality;     // external scorer slot
  std::optional<double> semantic_consistency;  // external scorer slot

  bool operator==(const MetricReport&) const = default;
};

// Learned-model scores that need a model outside this library. Unset slots
// leave the corresponding report fields absent.
using VideoScorer = std::function<double(const FrameSequence&)>;

struct EvalOptions {
  std::string subject_extractor = "builtin-center";
  std::string background_extractor = "builtin-border";
  std::string semantic_extractor = "builtin-v1";
  std::optional<Histogram> reference_semantic;
  std::optional<Histogram> reference_visual;
  VideoScorer aesthetic_scorer;
  VideoScorer semantic_scorer;
  const ExtractorRegistry* registry = nullptr;
};

inline MetricReport eval_report(const FrameSequence& seq, const ShotPartition& detected, std::size_t specified_shots,
                                const EvalOptions& options = {}) {
  if (detected.n_frames() != seq.frame_count()) throw ValidationError("partition does not cover the video");
  const auto& registry = options.registry ? *options.registry : default_extractors();
  MetricReport r;
  r.detected_shots = detected.shot_count();
  r.specified_shots = specified_shots;
  r.transition_control = transition_control_score(r.detected_shots, specified_shots);

  auto subject = extract_features(seq, options.subject_extractor, registry);
  auto background = extract_features(seq, options.background_extractor, registry);
  auto intra = intra_shot_consistency(subject, background, detected);
  r.intra_subject = intra.subject;
  r.intra_background = intra.background;

  if (detected.shot_count() >= 2) {
    auto semantic = extract_features(seq, options.semantic_extractor, registry);
    r.inter_semantic = inter_shot_semantic_consistency(semantic, detected);
    r.inter_visual = inter_shot_visual_consistency(subject, background, detected);
    if (options.reference_semantic) {
      double s = *r.inter_semantic;
      r.gap_semantic = consistency_gap(std::span(&s, 1), *options.reference_semantic);
    }
    if (options.reference_visual) {
      double s = *r.inter_visual;
      r.gap_visual = consistency_gap(std::span(&s, 1), *options.reference_visual);
    }
  }
  if (options.aesthetic_scorer) r.aesthetic_quality = options.aesthetic_scorer(seq);
  if (options.semantic_scorer) r.semantic_consistency = options.semantic_scorer(seq);
  return r;
}

}  // namespace cinetrans
