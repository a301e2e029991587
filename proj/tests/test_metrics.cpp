#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace cinetrans;

namespace {

FeatureSequence random_features(oracle::Gen& g, std::size_t n, std::size_t d) {
  std::vector<double> v;
  for (std::size_t f = 0; f < n; ++f) {
    auto u = g.unit_vector(d);
    v.insert(v.end(), u.begin(), u.end());
  }
  return FeatureSequence(n, d, v);
}

// Householder reflection I - 2uu^T applied to every frame.
FeatureSequence reflect(const FeatureSequence& f, const std::vector<double>& u) {
  std::vector<double> out;
  for (std::size_t t = 0; t < f.frame_count(); ++t) {
    auto x = f[t];
    double dot = 0;
    for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * u[i];
    for (std::size_t i = 0; i < x.size(); ++i) out.push_back(x[i] - 2 * dot * u[i]);
  }
  return FeatureSequence(f.frame_count(), f.dim(), out);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double intra_oracle(const FeatureSequence& f, const std::vector<std::size_t>& b) {
  double total = 0;
  for (std::size_t m = 0; m + 1 < b.size(); ++m) {
    if (b[m + 1] - b[m] < 2) {
      total += 1;
      continue;
    }
    double acc = 0;
    for (std::size_t t = b[m] + 1; t < b[m + 1]; ++t) acc += dot(f[t - 1], f[t]);
    total += std::clamp(acc / double(b[m + 1] - b[m] - 1), 0.0, 1.0);
  }
  return total / double(b.size() - 1);
}

double inter_semantic_oracle(const FeatureSequence& f, const std::vector<std::size_t>& b) {
  std::vector<std::vector<double>> means;
  for (std::size_t m = 0; m + 1 < b.size(); ++m) {
    std::vector<double> mu(f.dim(), 0);
    for (std::size_t t = b[m]; t < b[m + 1]; ++t)
      for (std::size_t i = 0; i < f.dim(); ++i) mu[i] += f[t][i];
    double n = std::sqrt(dot(mu, mu));
    for (auto& v : mu) v /= n;
    means.push_back(mu);
  }
  double acc = 0;
  int pairs = 0;
  for (std::size_t a = 0; a < means.size(); ++a)
    for (std::size_t c = a + 1; c < means.size(); ++c, ++pairs) acc += dot(means[a], means[c]);
  return std::clamp(acc / pairs, 0.0, 1.0);
}

double middle_oracle(const FeatureSequence& f, const std::vector<std::size_t>& b) {
  double acc = 0;
  int pairs = 0;
  for (std::size_t a = 0; a + 1 < b.size(); ++a)
    for (std::size_t c = a + 1; c + 1 < b.size(); ++c, ++pairs)
      acc += dot(f[(b[a] + b[a + 1] - 1) / 2], f[(b[c] + b[c + 1] - 1) / 2]);
  return std::clamp(acc / pairs, 0.0, 1.0);
}

Histogram hist(const std::vector<double>& raw, double eps = 0.0) {
  double s = 0;
  for (double v : raw) s += v;
  std::vector<double> m;
  for (double v : raw) m.push_back((v / s + eps) / (1 + raw.size() * eps));
  return Histogram(m, eps);
}

}  // namespace

TEST(TransitionControl, Examples) {
  EXPECT_EQ(transition_control_score(3, 3), 1.0);
  for (std::size_t k = 2; k <= 6; ++k) EXPECT_EQ(transition_control_score(1, k), 0.0);
  EXPECT_NEAR(transition_control_score(4, 2), 0.612, 5e-4);
  EXPECT_NEAR(transition_control_score(2, 4), 0.680, 5e-4);
  EXPECT_THROW(transition_control_score(2, 1), DomainError);
  EXPECT_THROW(transition_control_score(2, 0), DomainError);
}

TEST(TransitionControl, MatchesHighPrecision) {
  for (std::size_t s = 2; s <= 8; ++s)
    for (std::size_t d = 1; d <= 20; ++d) EXPECT_NEAR(transition_control_score(d, s), oracle::tcs(d, s), 1e-12);
}

TEST(TransitionControl, UnimodalAroundTarget) {
  for (std::size_t s = 2; s <= 6; ++s) {
    double prev = 0;
    for (std::size_t d = 2; d <= 4 * s; ++d) {
      double v = transition_control_score(d, s);
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      if (d <= s) {
        EXPECT_GT(v, prev) << d << "/" << s;
      } else {
        EXPECT_LT(v, prev) << d << "/" << s;
      }
      EXPECT_EQ(v == 1.0, d == s);
      prev = v;
    }
  }
}

TEST(MiddleFrame, Examples) {
  EXPECT_EQ(middle_frame({0, 5}), 2u);
  EXPECT_EQ(middle_frame({0, 1}), 0u);
  EXPECT_EQ(middle_frame({10, 14}), 11u);
  EXPECT_THROW(middle_frame({3, 3}), ValidationError);
}

TEST(Consistency, ConstantVideo) {
  FrameSequence seq({6, 8, 8, 3}, std::vector<std::uint8_t>(6 * 192, 77));
  auto r = intra_shot_consistency(seq, ShotPartition::from_boundaries({0, 3, 6}));
  EXPECT_NEAR(r.subject, 1.0, 1e-12);
  EXPECT_NEAR(r.background, 1.0, 1e-12);
  EXPECT_NEAR(inter_shot_semantic_consistency(seq, ShotPartition::from_boundaries({0, 3, 6})), 1.0, 1e-12);
  EXPECT_NEAR(inter_shot_visual_consistency(seq, ShotPartition::from_boundaries({0, 3, 6})), 1.0, 1e-12);
}

TEST(Consistency, SingleShotNotComputable) {
  FrameSequence seq({4, 8, 8, 3}, std::vector<std::uint8_t>(4 * 192, 77));
  EXPECT_THROW(inter_shot_semantic_consistency(seq, ShotPartition::single_shot(4)), NotComputableError);
  EXPECT_THROW(inter_shot_visual_consistency(seq, ShotPartition::single_shot(4)), NotComputableError);
}

TEST(Consistency, OrthogonalShotsClampToZero) {
  FeatureSequence f(4, 2, {1, 0, 1, 0, 0, 1, 0, 1});
  auto p = ShotPartition::from_boundaries({0, 2, 4});
  EXPECT_EQ(inter_shot_semantic_consistency(f, p), 0.0);
  FeatureSequence opp(2, 1, {1, -1});
  EXPECT_EQ(inter_shot_semantic_consistency(opp, ShotPartition::from_boundaries({0, 1, 2})), 0.0);
}

TEST(Consistency, VisualIsMeanOfSubjectAndBackground) {
  // subject middle-frame cosine 0.8, background 0.6
  FeatureSequence subj(2, 2, {1, 0, 0.8, 0.6});
  FeatureSequence bg(2, 2, {1, 0, 0.6, 0.8});
  EXPECT_NEAR(inter_shot_visual_consistency(subj, bg, ShotPartition::from_boundaries({0, 1, 2})), 0.7, 1e-12);
}

TEST(Consistency, MatchesBruteForce) {
  oracle::Gen g(1);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = g.index(2, 30), d = g.index(1, 8);
    auto bounds = g.boundaries(n, g.index(2, std::min<std::size_t>(n, 5)));
    auto p = ShotPartition::from_boundaries(bounds);
    // bias toward a shared direction so the clamp does not flatten everything
    std::vector<double> v;
    auto base = g.unit_vector(d);
    for (std::size_t t = 0; t < n; ++t) {
      auto u = g.unit_vector(d);
      for (std::size_t i = 0; i < d; ++i) u[i] += 1.5 * base[i];
      double s = std::sqrt(dot(u, u));
      for (auto& x : u) v.push_back(x / s);
    }
    FeatureSequence f(n, d, v);
    auto b2 = random_features(g, n, d);
    auto intra = intra_shot_consistency(f, b2, p);
    EXPECT_NEAR(intra.subject, intra_oracle(f, bounds), 1e-12);
    EXPECT_NEAR(intra.background, intra_oracle(b2, bounds), 1e-12);
    EXPECT_NEAR(inter_shot_semantic_consistency(f, p), inter_semantic_oracle(f, bounds), 1e-12);
    EXPECT_NEAR(inter_shot_visual_consistency(f, b2, p),
                0.5 * (middle_oracle(f, bounds) + middle_oracle(b2, bounds)), 1e-12);
  }
}

TEST(Consistency, InvariantUnderUniformRotation) {
  oracle::Gen g(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t n = g.index(4, 20), d = g.index(2, 6);
    auto p = ShotPartition::from_boundaries(g.boundaries(n, g.index(2, 4)));
    auto f = random_features(g, n, d);
    auto u = g.unit_vector(d);
    auto r = reflect(f, u);
    EXPECT_NEAR(intra_shot_consistency(f, f, p).subject, intra_shot_consistency(r, r, p).subject, 1e-12);
    EXPECT_NEAR(inter_shot_semantic_consistency(f, p), inter_shot_semantic_consistency(r, p), 1e-12);
    EXPECT_NEAR(inter_shot_visual_consistency(f, f, p), inter_shot_visual_consistency(r, r, p), 1e-12);
  }
}

TEST(Consistency, HardCutFixtureIntraNearOne) {
  auto v = gen_synthetic_multishot(oracle::hard_cut_spec({8, 8, 8}, 4, 0.0, 0.0));
  auto r = intra_shot_consistency(v.frames, v.labels);
  EXPECT_NEAR(r.subject, 1.0, 1e-12);
  EXPECT_NEAR(r.background, 1.0, 1e-12);
  auto whole = intra_shot_consistency(v.frames, ShotPartition::single_shot(24));
  EXPECT_LT(whole.subject, 1.0);
}

TEST(Consistency, ShapeMismatch) {
  oracle::Gen g(3);
  auto f = random_features(g, 5, 3);
  EXPECT_THROW(intra_shot_consistency(f, f, ShotPartition::from_boundaries({0, 2, 6})), ShapeError);
}

TEST(ReferenceDistribution, Examples) {
  std::vector<double> halves(10, 0.5);
  auto h = build_reference_distribution(halves, 2, 1e-9);
  double e = 1e-9 / (1 + 2e-9);
  EXPECT_NEAR(h[0], e, 1e-18);
  EXPECT_NEAR(h[1], 1 - e, 1e-15);
  EXPECT_THROW(build_reference_distribution(std::vector<double>{}), ValidationError);
  EXPECT_THROW(build_reference_distribution(std::vector<double>{1.5}), ValidationError);
  EXPECT_THROW(build_reference_distribution(std::vector<double>{-0.1}), ValidationError);
  EXPECT_THROW(build_reference_distribution(std::vector<double>{0.5}, 0), ConfigError);
}

TEST(ReferenceDistribution, MatchesDirectBinning) {
  oracle::Gen g(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t bins = g.index(1, 60);
    std::vector<double> s(g.index(1, 300));
    for (auto& v : s) v = g.coin(0.1) ? double(g.index(0, 1)) : g.real(0, 1);
    double eps = g.coin() ? 0.0 : 1e-6;
    auto h = build_reference_distribution(s, bins, eps);
    std::vector<double> counts(bins, 0);
    for (double v : s) {
      std::size_t b = 0;
      while (b + 1 < bins && v >= double(b + 1) / double(bins)) ++b;
      counts[b] += 1;
    }
    double sum = 0;
    for (std::size_t b = 0; b < bins; ++b) {
      double want = (counts[b] / double(s.size()) + eps) / (1 + bins * eps);
      EXPECT_NEAR(h[b], want, 1e-12);
      sum += h[b];
      if (eps > 0) {
        EXPECT_GT(h[b], 0.0);
      }
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(ReferenceDistribution, UniformGridIsFlat) {
  std::vector<double> s;
  for (int i = 0; i < 1000; ++i) s.push_back((i + 0.5) / 1000.0);
  auto h = build_reference_distribution(s);
  for (std::size_t b = 0; b < 50; ++b) EXPECT_NEAR(h[b], 0.02, 1e-9);
}

TEST(Jsd, BasicProperties) {
  oracle::Gen g(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t bins = g.index(1, 50);
    auto p = hist(g.histogram(bins), 1e-9), q = hist(g.histogram(bins), 1e-9);
    double a = jsd(p, q), b = jsd(q, p);
    EXPECT_EQ(a, b);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
    EXPECT_NEAR(a, oracle::jsd(p.masses(), q.masses()), 1e-9);
    EXPECT_NEAR(jsd(p, p), 0.0, 1e-12);
  }
}

TEST(Jsd, DisjointSupportNearOne) {
  auto p = build_reference_distribution(std::vector<double>{0.0, 0.01}, 50, 1e-9);
  auto q = build_reference_distribution(std::vector<double>{1.0, 0.99}, 50, 1e-9);
  double v = jsd(p, q);
  EXPECT_GE(v, 0.999);
  EXPECT_LE(v, 1.0);
  EXPECT_NEAR(v, oracle::jsd(p.masses(), q.masses()), 1e-9);
  EXPECT_EQ(jsd(hist({1, 0}), hist({0, 1})), 1.0);
}

TEST(Jsd, BinMismatch) { EXPECT_THROW(jsd(hist({1, 1}), hist({1, 1, 1})), ShapeError); }

TEST(ConsistencyGap, Examples) {
  oracle::Gen g(6);
  std::vector<double> ref;
  for (int i = 0; i < 5000; ++i) ref.push_back(std::clamp(0.6 + 0.1 * std::normal_distribution<double>()(g.eng), 0.0, 1.0));
  auto h = build_reference_distribution(ref);
  EXPECT_NEAR(consistency_gap(ref, h), 0.0, 1e-12);

  // resample from the histogram itself
  std::discrete_distribution<std::size_t> pick(h.masses().begin(), h.masses().end());
  std::vector<double> draw;
  for (int i = 0; i < 20000; ++i) draw.push_back((pick(g.eng) + g.real(0, 1)) / 50.0);
  EXPECT_LT(consistency_gap(draw, h), 0.05);

  auto zero = build_reference_distribution(std::vector<double>(100, 0.0));
  EXPECT_GT(consistency_gap(std::vector<double>(100, 1.0), zero), 0.999);
  EXPECT_THROW(consistency_gap(std::vector<double>{}, h), ValidationError);
}

TEST(Convergence, Examples) {
  auto c = convergence_report(std::vector<double>(40, 0.3), 10);
  ASSERT_EQ(c.size(), 4u);
  for (const auto& pt : c) {
    EXPECT_NEAR(pt.cumulative_mean, 0.3, 1e-15);
    EXPECT_EQ(pt.ci95_width, 0.0);
  }
  std::vector<double> alt;
  for (int i = 0; i < 200; ++i) alt.push_back(i % 2 ? 1.0 : 0.0);
  auto a = convergence_report(alt, 20);
  for (const auto& pt : a) EXPECT_DOUBLE_EQ(pt.cumulative_mean, 0.5);
  EXPECT_THROW(convergence_report(std::vector<double>(19, 0.0), 10), ValidationError);
  EXPECT_THROW(convergence_report(std::vector<double>(19, 0.0), 0), ConfigError);
}

TEST(Convergence, MatchesDirectFormula) {
  oracle::Gen g(7);
  std::vector<double> s(137);
  for (auto& v : s) v = g.real(0, 1);
  auto rep = convergence_report(s, 25);
  ASSERT_EQ(rep.size(), 5u);
  for (const auto& pt : rep) {
    oracle::hp sum = 0, ss = 0;
    for (std::size_t i = 0; i < pt.n; ++i) sum += s[i];
    oracle::hp mean = sum / pt.n;
    for (std::size_t i = 0; i < pt.n; ++i) ss += (s[i] - mean) * (s[i] - mean);
    double sd = static_cast<double>(boost::multiprecision::sqrt(ss / (pt.n - 1)));
    EXPECT_NEAR(pt.cumulative_mean, static_cast<double>(mean), 1e-12);
    EXPECT_NEAR(pt.ci95_width, 2 * 1.96 * sd / std::sqrt(double(pt.n)), 1e-12);
  }
}

TEST(EvalReport, ThreeShotFixture) {
  auto v = gen_synthetic_multishot(oracle::hard_cut_spec({8, 8, 8}, 11));
  auto base = eval_report(v.frames, v.labels, 3);
  EvalOptions opt;
  opt.reference_semantic = build_reference_distribution(std::vector<double>{*base.inter_semantic});
  opt.reference_visual = build_reference_distribution(std::vector<double>{*base.inter_visual});
  opt.aesthetic_scorer = [](const FrameSequence&) { return 0.42; };
  auto r = eval_report(v.frames, v.labels, 3, opt);
  EXPECT_EQ(r.detected_shots, 3u);
  EXPECT_EQ(r.transition_control, 1.0);
  EXPECT_NEAR(*r.gap_semantic, 0.0, 1e-12);
  EXPECT_NEAR(*r.gap_visual, 0.0, 1e-12);
  EXPECT_EQ(*r.aesthetic_quality, 0.42);
  EXPECT_FALSE(r.semantic_consistency.has_value());
  EXPECT_GT(r.intra_subject, 0.9);
  EXPECT_EQ(report_from_json(to_json(r)), r);
  EXPECT_EQ(dump(to_json(report_from_json(parse_json(dump(to_json(r)))))), dump(to_json(r)));
}

TEST(EvalReport, SingleShotFixture) {
  auto v = gen_synthetic_multishot(oracle::hard_cut_spec({12}, 2));
  auto r = eval_report(v.frames, ShotPartition::single_shot(12), 3);
  EXPECT_EQ(r.transition_control, 0.0);
  EXPECT_FALSE(r.inter_semantic.has_value());
  EXPECT_FALSE(r.inter_visual.has_value());
  EXPECT_FALSE(r.gap_semantic.has_value());
  auto j = to_json(r);
  EXPECT_TRUE(j["inter_semantic"].is_null());
  EXPECT_EQ(report_from_json(j), r);
  EXPECT_THROW(eval_report(v.frames, ShotPartition::single_shot(11), 3), ValidationError);
}

TEST(HistogramJson, RoundTrip) {
  oracle::Gen g(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(g.index(1, 100));
    for (auto& v : s) v = g.real(0, 1);
    auto h = build_reference_distribution(s, g.index(1, 64), 1e-9);
    auto text = dump(to_json(h));
    EXPECT_EQ(histogram_from_json(parse_json(text)), h);
    EXPECT_EQ(dump(to_json(histogram_from_json(parse_json(text)))), text);
  }
  EXPECT_THROW(histogram_from_json(parse_json(R"({"bins":3,"epsilon":0,"masses":[0.5,0.5]})")), ValidationError);
  EXPECT_THROW(histogram_from_json(parse_json(R"({"bins":2,"epsilon":0,"masses":[0.5,0.6]})")), ValidationError);
}
