#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cinetrans/error.hpp"

namespace cinetrans {

class DenseMatrix {
 public:
  DenseMatrix() = default;

  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {
    if (rows == 0 || cols == 0) throw ShapeError("matrix dimensions must be positive");
  }

  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (rows == 0 || cols == 0) throw ShapeError("matrix dimensions must be positive");
    if (values_.size() != rows * cols) throw ShapeError("matrix values do not match rows x cols");
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::vector<double>& values() noexcept { return values_; }
  double* row(std::size_t r) noexcept { return values_.data() + r * cols_; }
  const double* row(std::size_t r) const noexcept { return values_.data() + r * cols_; }

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " times " +
                     std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  DenseMatrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

// Boolean attention mask over n tokens: allowed(i, j) means query i may attend
// key j. The additive form is 0 where allowed and -inf where not.
class AttnMask {
 public:
  AttnMask() = default;

  explicit AttnMask(std::size_t n, bool fill = true) : n_(n), allowed_(n * n, fill ? 1 : 0) {
    if (n == 0) throw ShapeError("mask must cover at least one token");
  }

  AttnMask(std::size_t n, std::vector<std::uint8_t> entries) : n_(n), allowed_(std::move(entries)) {
    if (n == 0) throw ShapeError("mask must cover at least one token");
    if (allowed_.size() != n * n) throw ShapeError("mask entries do not match n x n");
    for (auto& a : allowed_) {
      if (a > 1) throw ValidationError("mask entries must be 0 or 1");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!allowed_[i * n_ + i]) throw ValidationError("mask diagonal must be allowed");
    }
  }

  static AttnMask all_allowed(std::size_t n) { return AttnMask(n, true); }

  std::size_t size() const noexcept { return n_; }
  bool allowed(std::size_t i, std::size_t j) const noexcept { return allowed_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v) noexcept { allowed_[i * n_ + j] = v ? 1 : 0; }
  const std::vector<std::uint8_t>& entries() const noexcept { return allowed_; }

  std::size_t allowed_count() const noexcept {
    return static_cast<std::size_t>(std::count(allowed_.begin(), allowed_.end(), std::uint8_t{1}));
  }

  bool is_symmetric() const noexcept {
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = i + 1; j < n_; ++j) {
        if (allowed(i, j) != allowed(j, i)) return false;
      }
    }
    return true;
  }

  // Every allowed entry of `other` is allowed here.
  bool includes(const AttnMask& other) const noexcept {
    if (other.n_ != n_) return false;
    for (std::size_t k = 0; k < allowed_.size(); ++k) {
      if (other.allowed_[k] && !allowed_[k]) return false;
    }
    return true;
  }

  // Additive form; disallowed entries use the most negative finite double so
  // that exp() underflows to exactly zero after max subtraction.
  DenseMatrix additive() const {
    DenseMatrix m(n_, n_);
    for (std::size_t k = 0; k < allowed_.size(); ++k) {
      m.values()[k] = allowed_[k] ? 0.0 : std::numeric_limits<double>::lowest();
    }
    return m;
  }

  bool operator==(const AttnMask&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> allowed_;
};

enum class Execution { sequential, parallel };

namespace detail {

template <typename RowFn>
void for_each_row(std::size_t rows, Execution exec, RowFn&& fn) {
  std::size_t workers = exec == Execution::parallel ? std::max(1u, std::thread::hardware_concurrency()) : 1;
  workers = std::min(workers, rows);
  if (workers <= 1) {
    for (std::size_t r = 0; r < rows; ++r) fn(r);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  std::size_t chunk = (rows + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t r = w * chunk; r < std::min(rows, (w + 1) * chunk); ++r) fn(r);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Stable softmax of one row in place. -inf entries become exactly 0.
inline void softmax_row(double* row, std::size_t n, std::size_t index) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, row[j]);
  if (mx == -std::numeric_limits<double>::infinity()) {
    throw DegenerateRowError("softmax row " + std::to_string(index) + " has no finite entry");
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    row[j] = std::exp(row[j] - mx);
    sum += row[j];
  }
  for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
}

}  // namespace detail

inline DenseMatrix softmax_rows(DenseMatrix scores, Execution exec = Execution::sequential) {
  for (double v : scores.values()) {
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
      throw DomainError("softmax scores must be finite or -inf");
    }
  }
  detail::for_each_row(scores.rows(), exec,
                       [&](std::size_t r) { detail::softmax_row(scores.row(r), scores.cols(), r); });
  return scores;
}

struct AttentionOutput {
  DenseMatrix output;  // n_queries x d_v
  DenseMatrix probs;   // n_queries x n_keys, row stochastic
};

// softmax(q k^T / sqrt(d_k) + M) v, with M the additive form of `mask`.
// Allowed entries leave the score untouched, so an all-allowed mask gives a
// result bitwise identical to the unmasked call.
inline AttentionOutput scaled_dot_product_attention(const DenseMatrix& q, const DenseMatrix& k, const DenseMatrix& v,
                                                    const AttnMask* mask = nullptr,
                                                    Execution exec = Execution::sequential) {
  if (q.cols() != k.cols()) throw ShapeError("attention: q and k must share d_k");
  if (k.rows() != v.rows()) throw ShapeError("attention: k and v must have the same number of rows");
  if (mask && (mask->size() != q.rows() || mask->size() != k.rows())) {
    throw ShapeError("attention: mask must be n_queries x n_keys");
  }
  const std::size_t nq = q.rows();
  const std::size_t nk = k.rows();
  const std::size_t dk = q.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  constexpr double kDisallowed = std::numeric_limits<double>::lowest();

  DenseMatrix probs(nq, nk);
  detail::for_each_row(nq, exec, [&](std::size_t i) {
    double* row = probs.row(i);
    bool any = false;
    for (std::size_t j = 0; j < nk; ++j) {
      if (mask && !mask->allowed(i, j)) {
        row[j] = kDisallowed;
        continue;
      }
      any = true;
      double dot = 0.0;
      for (std::size_t c = 0; c < dk; ++c) dot += q(i, c) * k(j, c);
      row[j] = dot * scale;
    }
    if (!any) throw DegenerateRowError("attention row " + std::to_string(i) + " has every key masked");
    detail::softmax_row(row, nk, i);
  });

  DenseMatrix out(nq, v.cols());
  detail::for_each_row(nq, exec, [&](std::size_t i) {
    for (std::size_t j = 0; j < nk; ++j) {
      double p = probs(i, j);
      if (p == 0.0) continue;
      for (std::size_t c = 0; c < v.cols(); ++c) out(i, c) += p * v(j, c);
    }
  });
  return {std::move(out), std::move(probs)};
}

inline AttentionOutput scaled_dot_product_attention(const DenseMatrix& q, const DenseMatrix& k, const DenseMatrix& v,
                                                    const std::optional<AttnMask>& mask,
                                                    Execution exec = Execution::sequential) {
  return scaled_dot_product_attention(q, k, v, mask ? &*mask : nullptr, exec);
}

struct HeadProjection {
  DenseMatrix wq;  // d_model x d_k
  DenseMatrix wk;  // d_model x d_k
  DenseMatrix wv;  // d_model x d_v
};

struct MultiHeadParams {
  std::vector<HeadProjection> heads;
  DenseMatrix wo;  // (heads * d_v) x d_out
};

struct MultiHeadOutput {
  DenseMatrix output;
  std::vector<DenseMatrix> head_probs;
};

// Every head sees the same mask; per-head probability maps are kept for analysis.
inline MultiHeadOutput multi_head_attention(const DenseMatrix& x, const MultiHeadParams& params,
                                            const AttnMask* mask = nullptr,
                                            Execution exec = Execution::sequential) {
  if (params.heads.empty()) throw ShapeError("multi-head attention needs at least one head");
  const std::size_t dv = params.heads.front().wv.cols();
  for (const auto& h : params.heads) {
    if (h.wq.rows() != x.cols() || h.wk.rows() != x.cols() || h.wv.rows() != x.cols()) {
      throw ShapeError("head projections must have d_model rows");
    }
    if (h.wq.cols() != h.wk.cols()) throw ShapeError("head query/key projections must share d_k");
    if (h.wv.cols() != dv) throw ShapeError("all heads must share d_v");
  }
  if (params.wo.rows() != params.heads.size() * dv) {
    throw ShapeError("output projection must have heads * d_v rows");
  }

  DenseMatrix concat(x.rows(), params.heads.size() * dv);
  MultiHeadOutput result;
  for (std::size_t h = 0; h < params.heads.size(); ++h) {
    const auto& p = params.heads[h];
    auto att = scaled_dot_product_attention(matmul(x, p.wq), matmul(x, p.wk), matmul(x, p.wv), mask, exec);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t c = 0; c < dv; ++c) concat(i, h * dv + c) = att.output(i, c);
    }
    result.head_probs.push_back(std::move(att.probs));
  }
  result.output = matmul(concat, params.wo);
  return result;
}

}  // namespace cinetrans
