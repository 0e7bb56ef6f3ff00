#pragma once

#include <cstddef>

#include "cslab/tape.hpp"
#include "cslab/tensor.hpp"

namespace cslab {

// The unrolled networks in models.hpp are written once against this engine
// interface. EagerEngine runs them as plain tensor arithmetic (inference,
// diagnostics); TapeEngine records the same kernels on a tape so the run can
// be differentiated. Both route through the kernels in tensor.hpp, so the
// two paths produce bit-identical forward values.

struct EagerEngine {
  using Value = Tensor;

  Value constant(Tensor t) { return t; }
  Value matmul(const Value& a, const Value& b) { return cslab::matmul(a, b); }
  Value add(const Value& a, const Value& b) { return cslab::add(a, b); }
  Value sub(const Value& a, const Value& b) { return cslab::sub(a, b); }
  Value mul(const Value& a, const Value& b) { return cslab::mul(a, b); }
  Value scale(const Value& a, double c) { return cslab::scale(a, c); }
  Value add_row_broadcast(const Value& a, const Value& bias) { return cslab::add_row_broadcast(a, bias); }
  Value scale_rows(const Value& a, const Value& s) { return cslab::scale_rows(a, s); }
  Value soft_threshold(const Value& x, const Value& theta, std::size_t exempt_per_row = 0) {
    if (exempt_per_row == 0) return cslab::soft_threshold(x, theta);
    auto mask = top_magnitude_mask(x, exempt_per_row);
    return cslab::soft_threshold(x, theta, &mask);
  }
  Value softsign(const Value& x) { return cslab::softsign(x); }
  Value sigmoid(const Value& x) { return cslab::sigmoid(x); }
  Value tanh(const Value& x) { return cslab::tanh(x); }
  Value relu(const Value& x) { return cslab::relu(x); }
  Value reweight(const Value& x, double eps) { return cslab::reweight(x, eps); }
  Value row_l1(const Value& x) { return cslab::row_l1(x); }
  Value sum_all(const Value& x) { return cslab::sum_all(x); }
  Value concat_cols(const Value& a, const Value& b) { return cslab::concat_cols(a, b); }
  Value slice_cols(const Value& x, std::size_t begin, std::size_t count) { return cslab::slice_cols(x, begin, count); }
  Value broadcast_rows(const Value& x, std::size_t nrows) { return cslab::broadcast_rows(x, nrows); }

  const Tensor& value(const Value& v) const { return v; }
};

struct TapeEngine {
  explicit TapeEngine(Tape& tape) : tape_(&tape) {}

  using Value = Tape::Id;

  Value constant(Tensor t) { return tape_->constant(std::move(t)); }
  Value leaf(Tensor t) { return tape_->leaf(std::move(t)); }
  Value matmul(Value a, Value b) { return tape_->matmul(a, b); }
  Value add(Value a, Value b) { return tape_->add(a, b); }
  Value sub(Value a, Value b) { return tape_->sub(a, b); }
  Value mul(Value a, Value b) { return tape_->mul(a, b); }
  Value scale(Value a, double c) { return tape_->scale(a, c); }
  Value add_row_broadcast(Value a, Value bias) { return tape_->add_row_broadcast(a, bias); }
  Value scale_rows(Value a, Value s) { return tape_->scale_rows(a, s); }
  Value soft_threshold(Value x, Value theta, std::size_t exempt_per_row = 0) {
    return tape_->soft_threshold(x, theta, exempt_per_row);
  }
  Value softsign(Value x) { return tape_->softsign(x); }
  Value sigmoid(Value x) { return tape_->sigmoid(x); }
  Value tanh(Value x) { return tape_->tanh(x); }
  Value relu(Value x) { return tape_->relu(x); }
  Value reweight(Value x, double eps) { return tape_->reweight(x, eps); }
  Value row_l1(Value x) { return tape_->row_l1(x); }
  Value sum_all(Value x) { return tape_->sum_all(x); }
  Value concat_cols(Value a, Value b) { return tape_->concat_cols(a, b); }
  Value slice_cols(Value x, std::size_t begin, std::size_t count) { return tape_->slice_cols(x, begin, count); }
  Value broadcast_rows(Value x, std::size_t nrows) { return tape_->broadcast_rows(x, nrows); }

  const Tensor& value(Value v) const { return tape_->value(v); }
  Tape& tape() { return *tape_; }

 private:
  Tape* tape_;
};

}  // namespace cslab
