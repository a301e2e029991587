#include <gtest/gtest.h>

#include <limits>

#include "oracles.hpp"

using namespace cinetrans;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

DenseMatrix row_matrix(std::vector<double> v) {
  DenseMatrix m(1, v.size());
  m.values() = std::move(v);
  return m;
}

DenseMatrix identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

}  // namespace

TEST(Softmax, Basics) {
  auto a = softmax_rows(row_matrix({0.0, 0.0}));
  EXPECT_EQ(a(0, 0), 0.5);
  EXPECT_EQ(a(0, 1), 0.5);
  auto b = softmax_rows(row_matrix({3.7, kNegInf}));
  EXPECT_EQ(b(0, 0), 1.0);
  EXPECT_EQ(b(0, 1), 0.0);
}

TEST(Softmax, HighPrecisionOracle) {
  auto got = softmax_rows(row_matrix({1.0, 2.0, 3.0}));
  auto want = oracle::softmax({1.0, 2.0, 3.0});
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(got(0, j), want[j], 1e-12);

  oracle::Gen g(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> row(g.index(1, 20));
    for (auto& v : row) v = g.real(-30.0, 30.0);
    auto s = softmax_rows(row_matrix(row));
    auto w = oracle::softmax(row);
    for (std::size_t j = 0; j < row.size(); ++j) EXPECT_NEAR(s(0, j), w[j], 1e-12);
  }
}

TEST(Softmax, DegenerateRow) {
  EXPECT_THROW(softmax_rows(row_matrix({kNegInf, kNegInf})), DegenerateRowError);
  EXPECT_THROW(softmax_rows(row_matrix({std::nan(""), 0.0})), DomainError);
}

TEST(Softmax, TranslationInvariance) {
  oracle::Gen g(2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> row(g.index(1, 16));
    for (auto& v : row) v = g.real(-5.0, 5.0);
    double c = g.real(-100.0, 100.0);
    auto shifted = row;
    for (auto& v : shifted) v += c;
    auto a = softmax_rows(row_matrix(row));
    auto b = softmax_rows(row_matrix(shifted));
    for (std::size_t j = 0; j < row.size(); ++j) EXPECT_NEAR(a(0, j), b(0, j), 1e-12);
  }
}

TEST(Attention, SingleToken) {
  auto one = identity(1);
  auto out = scaled_dot_product_attention(one, one, one);
  EXPECT_EQ(out.output(0, 0), 1.0);
  EXPECT_EQ(out.probs(0, 0), 1.0);
}

TEST(Attention, BlockMaskZeroesCrossBlock) {
  oracle::Gen g(3);
  auto q = g.matrix(4, 3), k = g.matrix(4, 3), v = g.matrix(4, 2);
  AttnMask mask(4, std::vector<std::uint8_t>{1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 0, 0, 1, 1});
  auto out = scaled_dot_product_attention(q, k, v, &mask);
  EXPECT_EQ(out.probs(0, 2), 0.0);
  EXPECT_EQ(out.probs(0, 3), 0.0);
  EXPECT_EQ(out.probs(3, 0), 0.0);
  EXPECT_EQ(out.probs(3, 1), 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) s += out.probs(i, j);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Attention, MatchesDirectFormula) {
  oracle::Gen g(4);
  auto q = g.matrix(5, 4), k = g.matrix(6, 4), v = g.matrix(6, 3);
  auto out = scaled_dot_product_attention(q, k, v);
  for (std::size_t i = 0; i < 5; ++i) {
    std::vector<double> scores;
    for (std::size_t j = 0; j < 6; ++j) {
      double dot = 0;
      for (std::size_t c = 0; c < 4; ++c) dot += q(i, c) * k(j, c);
      scores.push_back(dot / 2.0);
    }
    auto p = oracle::softmax(scores);
    for (std::size_t c = 0; c < 3; ++c) {
      double o = 0;
      for (std::size_t j = 0; j < 6; ++j) o += p[j] * v(j, c);
      EXPECT_NEAR(out.output(i, c), o, 1e-12);
    }
  }
}

TEST(Attention, ZeroMaskBitwiseEqualsUnmasked) {
  oracle::Gen g(5);
  for (int trial = 0; trial < 30; ++trial) {
    std::size_t n = g.index(1, 12), d = g.index(1, 6);
    auto q = g.matrix(n, d, 3.0), k = g.matrix(n, d, 3.0), v = g.matrix(n, g.index(1, 5));
    auto mask = AttnMask::all_allowed(n);
    auto a = scaled_dot_product_attention(q, k, v);
    auto b = scaled_dot_product_attention(q, k, v, &mask);
    EXPECT_EQ(a.output, b.output);
    EXPECT_EQ(a.probs, b.probs);
    auto c = scaled_dot_product_attention(q, k, v, std::optional<AttnMask>(mask));
    EXPECT_EQ(a.output, c.output);
  }
}

TEST(Attention, ParallelMatchesSequentialBitwise) {
  oracle::Gen g(6);
  auto q = g.matrix(64, 8), k = g.matrix(64, 8), v = g.matrix(64, 5);
  auto mask = build_block_diagonal_mask(ShotPartition::from_boundaries({0, 20, 41, 64}), {64, 1, 1});
  auto a = scaled_dot_product_attention(q, k, v, &mask, Execution::sequential);
  auto b = scaled_dot_product_attention(q, k, v, &mask, Execution::parallel);
  EXPECT_EQ(a.output, b.output);
  EXPECT_EQ(a.probs, b.probs);
  auto s = g.matrix(50, 7);
  EXPECT_EQ(softmax_rows(s, Execution::sequential), softmax_rows(s, Execution::parallel));
}

TEST(Attention, ShapeErrors) {
  oracle::Gen g(7);
  EXPECT_THROW(scaled_dot_product_attention(g.matrix(2, 3), g.matrix(2, 4), g.matrix(2, 1)), ShapeError);
  EXPECT_THROW(scaled_dot_product_attention(g.matrix(2, 3), g.matrix(2, 3), g.matrix(3, 1)), ShapeError);
  auto m = AttnMask::all_allowed(3);
  EXPECT_THROW(scaled_dot_product_attention(g.matrix(2, 3), g.matrix(2, 3), g.matrix(2, 1), &m), ShapeError);
  EXPECT_THROW(matmul(g.matrix(2, 3), g.matrix(2, 3)), ShapeError);
}

TEST(Attention, RowStochasticProperty) {
  oracle::Gen g(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = g.index(2, 16);
    auto bounds = g.boundaries(n, g.index(1, std::min<std::size_t>(n, 4)));
    auto mask = build_block_diagonal_mask(ShotPartition::from_boundaries(bounds), {n, 1, 1});
    auto out = scaled_dot_product_attention(g.matrix(n, 3, 10.0), g.matrix(n, 3, 10.0), g.matrix(n, 2), &mask);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < n; ++j) {
        double p = out.probs(i, j);
        ASSERT_GE(p, 0.0);
        ASSERT_LE(p, 1.0);
        if (!mask.allowed(i, j)) {
          ASSERT_EQ(p, 0.0);
        }
        s += p;
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(AttnMaskType, Validation) {
  EXPECT_THROW(AttnMask(2, std::vector<std::uint8_t>{1, 0, 0}), ShapeError);
  EXPECT_THROW(AttnMask(2, std::vector<std::uint8_t>{0, 1, 1, 1}), ValidationError);  // diagonal
  EXPECT_THROW(AttnMask(2, std::vector<std::uint8_t>{1, 2, 1, 1}), ValidationError);
  AttnMask m(2, std::vector<std::uint8_t>{1, 0, 1, 1});
  EXPECT_FALSE(m.is_symmetric());
  EXPECT_EQ(m.allowed_count(), 3u);
  auto add = m.additive();
  EXPECT_EQ(add(0, 0), 0.0);
  EXPECT_EQ(add(0, 1), std::numeric_limits<double>::lowest());
}

namespace {

MultiHeadParams random_params(oracle::Gen& g, std::size_t heads, std::size_t dm, std::size_t dk, std::size_t dv,
                              std::size_t dout) {
  MultiHeadParams p;
  for (std::size_t h = 0; h < heads; ++h) p.heads.push_back({g.matrix(dm, dk), g.matrix(dm, dk), g.matrix(dm, dv)});
  p.wo = g.matrix(heads * dv, dout);
  return p;
}

}  // namespace

TEST(MultiHead, OneIdentityHeadEqualsSdpa) {
  oracle::Gen g(9);
  auto x = g.matrix(5, 4);
  MultiHeadParams p;
  p.heads.push_back({identity(4), identity(4), identity(4)});
  p.wo = identity(4);
  auto mh = multi_head_attention(x, p);
  auto sd = scaled_dot_product_attention(x, x, x);
  EXPECT_EQ(mh.output, sd.output);
  ASSERT_EQ(mh.head_probs.size(), 1u);
  EXPECT_EQ(mh.head_probs[0], sd.probs);
}

TEST(MultiHead, ZeroMaskEquivalenceAndBlockZeros) {
  oracle::Gen g(10);
  auto x = g.matrix(9, 6);
  auto p = random_params(g, 3, 6, 4, 2, 5);
  auto all = AttnMask::all_allowed(9);
  EXPECT_EQ(multi_head_attention(x, p).output, multi_head_attention(x, p, &all).output);

  auto mask = build_block_diagonal_mask(ShotPartition::from_boundaries({0, 3, 9}), {9, 1, 1});
  auto out = multi_head_attention(x, p, &mask);
  for (const auto& probs : out.head_probs) {
    for (std::size_t i = 0; i < 9; ++i) {
      for (std::size_t j = 0; j < 9; ++j) {
        if (!mask.allowed(i, j)) {
          EXPECT_EQ(probs(i, j), 0.0);
        }
      }
    }
  }
}

TEST(MultiHead, ShapeChecks) {
  oracle::Gen g(11);
  auto x = g.matrix(4, 6);
  auto p = random_params(g, 2, 6, 4, 2, 5);
  p.wo = g.matrix(3, 5);
  EXPECT_THROW(multi_head_attention(x, p), ShapeError);
  EXPECT_THROW(multi_head_attention(x, MultiHeadParams{}), ShapeError);
  auto q = random_params(g, 2, 5, 4, 2, 5);
  EXPECT_THROW(multi_head_attention(x, q), ShapeError);
}
