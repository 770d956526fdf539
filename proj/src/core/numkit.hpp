// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "core/error.hpp"

namespace actseq {

using Vec = std::vector<double>;
using ConstSpan = std::span<const double>;
using MutSpan = std::span<double>;

/// Dense row-major matrix. Weight matrices, biases (as n x 1) and stacked
/// hidden states all live in this type.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  MutSpan row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  ConstSpan row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  MutSpan values() { return data_; }
  ConstSpan values() const { return data_; }

  void set_zero();
  bool all_finite() const;

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);

// Kernels used by the recurrent cells. All accumulate into their output.

/// y += W x
void gemv_acc(const Matrix& w, ConstSpan x, MutSpan y);
/// y += W[:, col_offset : col_offset + x.size()] x
void gemv_acc_cols(const Matrix& w, std::size_t col_offset, ConstSpan x, MutSpan y);
/// x += W^T y
void gemv_t_acc(const Matrix& w, ConstSpan y, MutSpan x);
/// x += W[:, col_offset : col_offset + x.size()]^T y
void gemv_t_acc_cols(const Matrix& w, std::size_t col_offset, ConstSpan y, MutSpan x);
/// W += y x^T
void outer_acc(Matrix& w, ConstSpan y, ConstSpan x);
/// W[:, col_offset:] += y x^T
void outer_acc_cols(Matrix& w, std::size_t col_offset, ConstSpan y, ConstSpan x);

double dot(ConstSpan a, ConstSpan b);
void axpy(double alpha, ConstSpan x, MutSpan y);

inline double sigmoid(double x) {
  if (x >= 0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}

/// Max-subtracted softmax. Throws kInvalidArgument on empty input.
Vec softmax(ConstSpan v);

/// -log softmax(scores)[target], evaluated via log-sum-exp.
double cross_entropy(ConstSpan scores, std::size_t target);

/// Gradient of cross_entropy with respect to the scores: softmax - onehot.
Vec cross_entropy_grad(ConstSpan scores, std::size_t target);

/// Index of the largest value; ties resolve to the lowest index.
std::size_t argmax(ConstSpan v);

/// Evaluates the loss and, when `grad` is non-empty, writes the analytic
/// gradient into it.
using LossFn = std::function<double(ConstSpan params, MutSpan grad)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Central-difference check of an analytic gradient. The relative error per
/// coordinate is |a - n| / max(|a|, |n|, 1e-8); the maximum is reported.
GradCheckReport grad_check(const LossFn& loss_fn, ConstSpan params, double eps);

/// Uniform init in [-scale, scale] from the given generator.
void fill_uniform(Matrix& m, double scale, std::mt19937_64& rng);

/// 64-bit mixing function used to derive independent seeds.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace actseq
