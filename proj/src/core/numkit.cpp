// SPDX-License-Identifier: Apache-2.0
#include "core/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace actseq {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  require(rows > 0 && cols > 0, "matrix dimensions must be positive");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  require(rows > 0 && cols > 0, "matrix dimensions must be positive");
  require(data_.size() == rows * cols, "matrix value count does not match rows x cols");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

void gemv_acc(const Matrix& w, ConstSpan x, MutSpan y) {
  gemv_acc_cols(w, 0, x, y);
}

void gemv_acc_cols(const Matrix& w, std::size_t col_offset, ConstSpan x, MutSpan y) {
  const std::size_t n = x.size();
  const double* xp = x.data();
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double* wr = w.row(r).data() + col_offset;
    double acc = 0.0;
    for (std::size_t c = 0; c < n; ++c) acc += wr[c] * xp[c];
    y[r] += acc;
  }
}

void gemv_t_acc(const Matrix& w, ConstSpan y, MutSpan x) {
  gemv_t_acc_cols(w, 0, y, x);
}

void gemv_t_acc_cols(const Matrix& w, std::size_t col_offset, ConstSpan y, MutSpan x) {
  const std::size_t n = x.size();
  double* xp = x.data();
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double yr = y[r];
    if (yr == 0.0) continue;
    const double* wr = w.row(r).data() + col_offset;
    for (std::size_t c = 0; c < n; ++c) xp[c] += wr[c] * yr;
  }
}

void outer_acc(Matrix& w, ConstSpan y, ConstSpan x) { outer_acc_cols(w, 0, y, x); }

void outer_acc_cols(Matrix& w, std::size_t col_offset, ConstSpan y, ConstSpan x) {
  const std::size_t n = x.size();
  const double* xp = x.data();
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double yr = y[r];
    if (yr == 0.0) continue;
    double* wr = w.row(r).data() + col_offset;
    for (std::size_t c = 0; c < n; ++c) wr[c] += yr * xp[c];
  }
}

double dot(ConstSpan a, ConstSpan b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, ConstSpan x, MutSpan y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

Vec softmax(ConstSpan v) {
  require(!v.empty(), "softmax: empty input");
  const double mx = *std::max_element(v.begin(), v.end());
  Vec out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    sum += out[i];
  }
  for (double& o : out) o /= sum;
  return out;
}

double cross_entropy(ConstSpan scores, std::size_t target) {
  require(!scores.empty(), "cross_entropy: empty scores");
  if (target >= scores.size()) {
    fail(ErrorCode::kInvalidArgument, "cross_entropy: target " + std::to_string(target) +
                                          " out of range for " + std::to_string(scores.size()) +
                                          " scores");
  }
  const double mx = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (double s : scores) sum += std::exp(s - mx);
  return std::log(sum) - (scores[target] - mx);
}

Vec cross_entropy_grad(ConstSpan scores, std::size_t target) {
  require(target < scores.size(), "cross_entropy_grad: target out of range");
  Vec g = softmax(scores);
  g[target] -= 1.0;
  return g;
}

std::size_t argmax(ConstSpan v) {
  require(!v.empty(), "argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

GradCheckReport grad_check(const LossFn& loss_fn, ConstSpan params, double eps) {
  require(eps > 0.0 && eps <= 1e-3, "grad_check: eps must lie in (0, 1e-3]");
  Vec theta(params.begin(), params.end());
  Vec analytic(theta.size(), 0.0);
  const double base = loss_fn(theta, analytic);
  Vec scratch(theta.size(), 0.0);
  const double again = loss_fn(theta, scratch);
  if (base != again || scratch != analytic) {
    fail(ErrorCode::kInconsistency, "grad_check: loss function is not deterministic");
  }

  GradCheckReport report;
  Vec no_grad;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + eps;
    const double plus = loss_fn(theta, no_grad);
    theta[i] = saved - eps;
    const double minus = loss_fn(theta, no_grad);
    theta[i] = saved;
    const double numeric = (plus - minus) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (i == 0 || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
      report.worst_analytic = analytic[i];
      report.worst_numeric = numeric;
    }
  }
  return report;
}

void fill_uniform(Matrix& m, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (double& v : m.values()) v = dist(rng);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133cb111ULL;
  return x ^ (x >> 31);
}

}  // namespace actseq
