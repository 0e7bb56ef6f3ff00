#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cslab/errors.hpp"

namespace cslab {

// When enabled, tensor construction rejects NaN/Inf entries and some kernels
// verify their mathematical preconditions (symmetry, theta >= 0). Off by
// default; tests and verifier runs switch it on.
void set_checked_mode(bool on);
bool checked_mode();

// Dense row-major tensor of doubles. Rank 1 (vector) or rank 2 (matrix);
// scalars are 1x1. Immutable by convention once handed to other components.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);  // zero-filled
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros(std::size_t rows, std::size_t cols);
  static Tensor full(std::size_t rows, std::size_t cols, double v);
  static Tensor row(std::vector<double> v);  // 1 x n

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Rank-1 tensors are treated as a single row.
  std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<const double> span() const { return {data_.data(), data_.size()}; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols() + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols() + j]; }

  // Value of a size-1 tensor; throws ShapeError otherwise.
  double item() const;

  bool all_finite() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// ---- dense kernels ---------------------------------------------------------
// Eager (non-recorded) implementations. The tape in tape.hpp reuses these for
// its forward pass so recorded and unrecorded execution are bit-identical.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double c);

// bias is 1 x C, added to every row of a (B x C).
Tensor add_row_broadcast(const Tensor& a, const Tensor& bias);

// s is B x 1 (one factor per row) or 1 x 1 (global factor).
Tensor scale_rows(const Tensor& a, const Tensor& s);

// sign(x) * max(0, |x| - theta). theta is 1x1, Bx1 or the same shape as x.
// Entries flagged in `exempt` (same length as x, row-major) pass through
// unchanged. A negative theta is applied as written.
Tensor soft_threshold(const Tensor& x, const Tensor& theta,
                      const std::vector<std::uint8_t>* exempt = nullptr);
Tensor soft_threshold(const Tensor& x, double theta);

// Per row, marks the `count` entries of largest |x|; ties at the cutoff are
// broken toward the lowest index.
std::vector<std::uint8_t> top_magnitude_mask(const Tensor& x, std::size_t count);

Tensor softsign(const Tensor& x);  // x / (1 + |x|)
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor relu(const Tensor& x);

// 1 / (1 + |x|/eps); the componentwise reweighting factor used by adaptive
// thresholds.
Tensor reweight(const Tensor& x, double eps);

Tensor row_l1(const Tensor& x);  // B x C -> B x 1
Tensor sum_all(const Tensor& x); // -> 1 x 1
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor broadcast_rows(const Tensor& r, std::size_t nrows);  // 1 x C -> B x C

double l1_norm(const Tensor& x);
double l2_norm(const Tensor& x);
double dot(const Tensor& a, const Tensor& b);

// Power-iteration estimate of the largest eigenvalue of a symmetric PSD
// matrix, started from a fixed-seed random vector. Throws ConvergenceError
// (carrying the last estimate) if the relative change has not dropped below
// tol after max_iter iterations.
double largest_eigenvalue(const Tensor& a, double tol = 1e-8, int max_iter = 10000);

}  // namespace cslab
