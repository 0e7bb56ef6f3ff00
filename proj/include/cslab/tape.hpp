#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cslab/tensor.hpp"

namespace cslab {

// Reverse-mode differentiation over a dynamically recorded operation tape.
// Nodes are appended in execution order, so parent indices always precede
// their children; backward() walks the list once in reverse. A tape is
// rebuilt per forward pass and is confined to a single execution context.
class Tape {
 public:
  using Id = int;

  enum class Op : std::uint8_t {
    leaf, constant, matmul, add, sub, mul, scale, add_row_broadcast, scale_rows,
    soft_threshold, softsign, sigmoid, tanh, sqrt, relu, reweight,
    row_l1, sum_all, concat_cols, slice_cols, broadcast_rows,
  };

  Id leaf(Tensor t);
  Id constant(Tensor t);

  Id matmul(Id a, Id b);
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);
  Id scale(Id a, double c);
  Id add_row_broadcast(Id a, Id bias);
  Id scale_rows(Id a, Id s);
  // exempt_per_row > 0 applies support selection: that many largest-|x|
  // entries per row pass through unchanged (mask frozen at forward time).
  Id soft_threshold(Id x, Id theta, std::size_t exempt_per_row = 0);
  Id softsign(Id x);
  Id sigmoid(Id x);
  Id tanh(Id x);
  Id sqrt(Id x);
  Id relu(Id x);
  Id reweight(Id x, double eps);
  Id row_l1(Id x);
  Id sum_all(Id x);
  Id concat_cols(Id a, Id b);
  Id slice_cols(Id x, std::size_t begin, std::size_t count);
  Id broadcast_rows(Id x, std::size_t nrows);

  Id l1_norm(Id x) { return sum_all(row_l1(x)); }
  Id l2_norm(Id x) { return sqrt(sum_all(mul(x, x))); }

  const Tensor& value(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }

  // Reverse pass from a scalar root. Seeds the root adjoint with 1, then
  // accumulates into every reachable parent. Throws ShapeError if the root
  // is not a scalar.
  void backward(Id root);

  // Adjoint of a node after backward(); zero tensor if the node was not
  // reached.
  Tensor adjoint(Id id) const;

  // backward() + adjoint collection for a list of leaves.
  std::vector<Tensor> gradients(Id root, std::span<const Id> leaves);

  std::size_t size() const { return nodes_.size(); }
  void clear();

  // Debug view of the recorded graph: op names, shapes, parents.
  nlohmann::json dump_json() const;

 private:
  struct Node {
    Op op;
    std::array<Id, 2> parents{-1, -1};
    Tensor value;
    Tensor grad;          // allocated lazily during backward()
    double scalar = 0.0;  // scale factor / reweight eps
    std::size_t i0 = 0, i1 = 0;  // slice begin/count, broadcast row count
    std::shared_ptr<std::vector<std::uint8_t>> exempt;  // support-selection mask
  };

  Id push(Node n);
  Tensor& grad_of(Id id);

  std::vector<Node> nodes_;
};

const char* op_name(Tape::Op op);

}  // namespace cslab
