#include "cslab/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace cslab {

namespace {

std::atomic<bool> g_checked{false};

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMat>;
using CMap = Eigen::Map<const RowMat>;

CMap cmap(const Tensor& t) { return CMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())); }
Map map(Tensor& t) { return Map(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())); }

std::string shape_str(const Tensor& t) {
  std::string s = "(";
  for (std::size_t i = 0; i < t.shape().size(); ++i) {
    if (i) s += "x";
    s += std::to_string(t.shape()[i]);
  }
  return s + ")";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

double sign0(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

}  // namespace

void set_checked_mode(bool on) { g_checked.store(on); }
bool checked_mode() { return g_checked.load(); }

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
  if (shape_.empty() || shape_.size() > 2) throw ShapeError("tensor rank must be 1 or 2");
  std::size_t n = 1;
  for (auto d : shape_) n *= d;
  data_.assign(n, 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty() || shape_.size() > 2) throw ShapeError("tensor rank must be 1 or 2");
  std::size_t n = 1;
  for (auto d : shape_) n *= d;
  if (n != data_.size()) throw ShapeError("tensor data length does not match shape");
  if (checked_mode() && !all_finite()) throw NumericsError("tensor contains non-finite entries");
}

Tensor Tensor::scalar(double v) { return Tensor({1, 1}, {v}); }

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }

Tensor Tensor::full(std::size_t rows, std::size_t cols, double v) {
  Tensor t({rows, cols});
  std::fill(t.data_.begin(), t.data_.end(), v);
  return t;
}

Tensor Tensor::row(std::vector<double> v) {
  std::size_t n = v.size();
  return Tensor({1, n}, std::move(v));
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of size " + std::to_string(size()));
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul: operands must be rank-2");
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions disagree " + shape_str(a) + " vs " + shape_str(b));
  Tensor out({a.rows(), b.cols()});
  map(out).noalias() = cmap(a) * cmap(b);
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out({a.cols(), a.rows()});
  map(out) = cmap(a).transpose();
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
  return out;
}

Tensor add_row_broadcast(const Tensor& a, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols())
    throw ShapeError("add_row_broadcast: bias must be 1x" + std::to_string(a.cols()));
  Tensor out = a;
  const std::size_t c = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) += bias[j];
  return out;
}

Tensor scale_rows(const Tensor& a, const Tensor& s) {
  Tensor out = a;
  if (s.size() == 1) {
    const double c = s[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
  } else if (s.rows() == a.rows() && s.cols() == 1) {
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) *= s[i];
  } else {
    throw ShapeError("scale_rows: factor must be 1x1 or Bx1");
  }
  return out;
}

namespace {

enum class ThetaMode { global, per_row, full };

ThetaMode theta_mode(const Tensor& x, const Tensor& theta) {
  if (theta.size() == 1) return ThetaMode::global;
  if (theta.rows() == x.rows() && theta.cols() == 1) return ThetaMode::per_row;
  if (theta.same_shape(x)) return ThetaMode::full;
  throw ShapeError("soft_threshold: theta must be 1x1, Bx1 or match x");
}

}  // namespace

Tensor soft_threshold(const Tensor& x, const Tensor& theta, const std::vector<std::uint8_t>* exempt) {
  const ThetaMode mode = theta_mode(x, theta);
  if (exempt && exempt->size() != x.size())
    throw ShapeError("soft_threshold: exemption mask length mismatch");
  if (checked_mode()) {
    for (std::size_t i = 0; i < theta.size(); ++i)
      if (theta[i] < 0) throw NumericsError("soft_threshold: negative theta in checked mode");
  }
  Tensor out = x;
  const std::size_t c = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t idx = i * c + j;
      if (exempt && (*exempt)[idx]) continue;
      const double th = mode == ThetaMode::global ? theta[0]
                      : mode == ThetaMode::per_row ? theta[i]
                                                   : theta[idx];
      const double v = x[idx];
      out[idx] = sign0(v) * std::max(0.0, std::abs(v) - th);
    }
  }
  return out;
}

Tensor soft_threshold(const Tensor& x, double theta) {
  return soft_threshold(x, Tensor::scalar(theta));
}

std::vector<std::uint8_t> top_magnitude_mask(const Tensor& x, std::size_t count) {
  std::vector<std::uint8_t> mask(x.size(), 0);
  const std::size_t c = x.cols();
  count = std::min(count, c);
  if (count == 0) return mask;
  std::vector<std::size_t> idx(c);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const double* row = x.data() + i * c;
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(),
                      [row](std::size_t a, std::size_t b) {
                        const double fa = std::abs(row[a]), fb = std::abs(row[b]);
                        return fa > fb || (fa == fb && a < b);
                      });
    for (std::size_t k = 0; k < count; ++k) mask[i * c + idx[k]] = 1;
  }
  return mask;
}

Tensor softsign(const Tensor& x) {
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / (1.0 + std::abs(x[i]));
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
  return out;
}

Tensor tanh(const Tensor& x) {
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x[i]);
  return out;
}

Tensor sqrt(const Tensor& x) {
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(x[i]);
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, x[i]);
  return out;
}

Tensor reweight(const Tensor& x, double eps) {
  if (eps <= 0) throw ConfigError("reweight: eps must be positive");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::abs(x[i]) / eps);
  return out;
}

Tensor row_l1(const Tensor& x) {
  Tensor out({x.rows(), 1});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0;
    for (std::size_t j = 0; j < x.cols(); ++j) s += std::abs(x(i, j));
    out[i] = s;
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
  return Tensor::scalar(s);
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) throw ShapeError("concat_cols: row counts differ");
  Tensor out({a.rows(), a.cols() + b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j);
    for (std::size_t j = 0; j < b.cols(); ++j) out(i, a.cols() + j) = b(i, j);
  }
  return out;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  if (begin + count > x.cols()) throw ShapeError("slice_cols: range out of bounds");
  Tensor out({x.rows(), count});
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = x(i, begin + j);
  return out;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  if (begin + count > x.rows()) throw ShapeError("slice_rows: range out of bounds");
  const std::size_t c = x.cols();
  Tensor out({count, c});
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) = x(begin + i, j);
  return out;
}

Tensor broadcast_rows(const Tensor& r, std::size_t nrows) {
  if (r.rows() != 1) throw ShapeError("broadcast_rows: source must have a single row");
  Tensor out({nrows, r.cols()});
  for (std::size_t i = 0; i < nrows; ++i)
    for (std::size_t j = 0; j < r.cols(); ++j) out(i, j) = r[j];
  return out;
}

double l1_norm(const Tensor& x) {
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i]);
  return s;
}

double l2_norm(const Tensor& x) {
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * x[i];
  return std::sqrt(s);
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double largest_eigenvalue(const Tensor& a, double tol, int max_iter) {
  if (a.rank() != 2 || a.rows() != a.cols()) throw ShapeError("largest_eigenvalue: matrix must be square");
  if (checked_mode()) {
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = i + 1; j < a.cols(); ++j)
        if (std::abs(a(i, j) - a(j, i)) > 1e-10 * std::max(1.0, std::abs(a(i, j))))
          throw NumericsError("largest_eigenvalue: matrix is not symmetric");
  }
  const std::size_t n = a.rows();

  // Fixed-seed start vector keeps the estimate fully deterministic.
  std::mt19937_64 eng(0x9E3779B97F4A7C15ULL);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = gauss(eng);
  v.normalize();

  CMap am = cmap(a);
  double lambda = 0.0, prev = 0.0;
  for (int iter = 1; iter <= max_iter; ++iter) {
    Eigen::VectorXd w = am * v;
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    lambda = v.dot(w);
    v = w / nw;
    if (iter > 1 && std::abs(lambda - prev) <= tol * std::max(std::abs(lambda), 1e-300)) return lambda;
    prev = lambda;
  }
  throw ConvergenceError("largest_eigenvalue: no convergence after " + std::to_string(max_iter) +
                             " iterations (last estimate " + std::to_string(lambda) + ")",
                         lambda);
}

}  // namespace cslab
