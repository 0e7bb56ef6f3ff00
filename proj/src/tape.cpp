#include "cslab/tape.hpp"

#include <cassert>
#include <cmath>

#include <nlohmann/json.hpp>

namespace cslab {

namespace {
double sign0(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }
}  // namespace

Tape::Id Tape::push(Node n) {
  assert(n.parents[0] < static_cast<Id>(nodes_.size()) &&
         n.parents[1] < static_cast<Id>(nodes_.size()));
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size()) - 1;
}

Tape::Id Tape::leaf(Tensor t) {
  Node n;
  n.op = Op::leaf;
  n.value = std::move(t);
  return push(std::move(n));
}

Tape::Id Tape::constant(Tensor t) {
  Node n;
  n.op = Op::constant;
  n.value = std::move(t);
  return push(std::move(n));
}

Tape::Id Tape::matmul(Id a, Id b) {
  Node n;
  n.op = Op::matmul;
  n.parents = {a, b};
  n.value = cslab::matmul(value(a), value(b));
  return push(std::move(n));
}

Tape::Id Tape::add(Id a, Id b) {
  Node n;
  n.op = Op::add;
  n.parents = {a, b};
  n.value = cslab::add(value(a), value(b));
  return push(std::move(n));
}

Tape::Id Tape::sub(Id a, Id b) {
  Node n;
  n.op = Op::sub;
  n.parents = {a, b};
  n.value = cslab::sub(value(a), value(b));
  return push(std::move(n));
}

Tape::Id Tape::mul(Id a, Id b) {
  Node n;
  n.op = Op::mul;
  n.parents = {a, b};
  n.value = cslab::mul(value(a), value(b));
  return push(std::move(n));
}

Tape::Id Tape::scale(Id a, double c) {
  Node n;
  n.op = Op::scale;
  n.parents = {a, -1};
  n.scalar = c;
  n.value = cslab::scale(value(a), c);
  return push(std::move(n));
}

Tape::Id Tape::add_row_broadcast(Id a, Id bias) {
  Node n;
  n.op = Op::add_row_broadcast;
  n.parents = {a, bias};
  n.value = cslab::add_row_broadcast(value(a), value(bias));
  return push(std::move(n));
}

Tape::Id Tape::scale_rows(Id a, Id s) {
  Node n;
  n.op = Op::scale_rows;
  n.parents = {a, s};
  n.value = cslab::scale_rows(value(a), value(s));
  return push(std::move(n));
}

Tape::Id Tape::soft_threshold(Id x, Id theta, std::size_t exempt_per_row) {
  Node n;
  n.op = Op::soft_threshold;
  n.parents = {x, theta};
  if (exempt_per_row > 0)
    n.exempt = std::make_shared<std::vector<std::uint8_t>>(
        top_magnitude_mask(value(x), exempt_per_row));
  n.value = cslab::soft_threshold(value(x), value(theta), n.exempt ? n.exempt.get() : nullptr);
  return push(std::move(n));
}

Tape::Id Tape::softsign(Id x) {
  Node n;
  n.op = Op::softsign;
  n.parents = {x, -1};
  n.value = cslab::softsign(value(x));
  return push(std::move(n));
}

Tape::Id Tape::sigmoid(Id x) {
  Node n;
  n.op = Op::sigmoid;
  n.parents = {x, -1};
  n.value = cslab::sigmoid(value(x));
  return push(std::move(n));
}

Tape::Id Tape::tanh(Id x) {
  Node n;
  n.op = Op::tanh;
  n.parents = {x, -1};
  n.value = cslab::tanh(value(x));
  return push(std::move(n));
}

Tape::Id Tape::sqrt(Id x) {
  Node n;
  n.op = Op::sqrt;
  n.parents = {x, -1};
  n.value = cslab::sqrt(value(x));
  return push(std::move(n));
}

Tape::Id Tape::relu(Id x) {
  Node n;
  n.op = Op::relu;
  n.parents = {x, -1};
  n.value = cslab::relu(value(x));
  return push(std::move(n));
}

Tape::Id Tape::reweight(Id x, double eps) {
  Node n;
  n.op = Op::reweight;
  n.parents = {x, -1};
  n.scalar = eps;
  n.value = cslab::reweight(value(x), eps);
  return push(std::move(n));
}

Tape::Id Tape::row_l1(Id x) {
  Node n;
  n.op = Op::row_l1;
  n.parents = {x, -1};
  n.value = cslab::row_l1(value(x));
  return push(std::move(n));
}

Tape::Id Tape::sum_all(Id x) {
  Node n;
  n.op = Op::sum_all;
  n.parents = {x, -1};
  n.value = cslab::sum_all(value(x));
  return push(std::move(n));
}

Tape::Id Tape::concat_cols(Id a, Id b) {
  Node n;
  n.op = Op::concat_cols;
  n.parents = {a, b};
  n.value = cslab::concat_cols(value(a), value(b));
  return push(std::move(n));
}

Tape::Id Tape::slice_cols(Id x, std::size_t begin, std::size_t count) {
  Node n;
  n.op = Op::slice_cols;
  n.parents = {x, -1};
  n.i0 = begin;
  n.i1 = count;
  n.value = cslab::slice_cols(value(x), begin, count);
  return push(std::move(n));
}

Tape::Id Tape::broadcast_rows(Id x, std::size_t nrows) {
  Node n;
  n.op = Op::broadcast_rows;
  n.parents = {x, -1};
  n.i0 = nrows;
  n.value = cslab::broadcast_rows(value(x), nrows);
  return push(std::move(n));
}

Tensor& Tape::grad_of(Id id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::backward(Id root) {
  if (root < 0 || root >= static_cast<Id>(nodes_.size())) throw ShapeError("backward: bad root id");
  if (value(root).size() != 1) throw ShapeError("backward: root must be a scalar");
  for (Node& n : nodes_) n.grad = Tensor();
  grad_of(root)[0] = 1.0;

  for (Id id = root; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) continue;  // not reachable from the root
    const Tensor& g = n.grad;
    const Id pa = n.parents[0], pb = n.parents[1];
    switch (n.op) {
      case Op::leaf:
      case Op::constant:
        break;
      case Op::matmul: {
        const Tensor& a = value(pa);
        const Tensor& b = value(pb);
        Tensor& ga = grad_of(pa);
        Tensor& gb = grad_of(pb);
        Tensor da = cslab::matmul(g, transpose(b));
        Tensor db = cslab::matmul(transpose(a), g);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += da[i];
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += db[i];
        break;
      }
      case Op::add: {
        Tensor& ga = grad_of(pa);
        Tensor& gb = grad_of(pb);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        break;
      }
      case Op::sub: {
        Tensor& ga = grad_of(pa);
        Tensor& gb = grad_of(pb);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        break;
      }
      case Op::mul: {
        const Tensor& a = value(pa);
        const Tensor& b = value(pb);
        Tensor& ga = grad_of(pa);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
        Tensor& gb = grad_of(pb);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
        break;
      }
      case Op::scale: {
        Tensor& ga = grad_of(pa);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.scalar * g[i];
        break;
      }
      case Op::add_row_broadcast: {
        Tensor& ga = grad_of(pa);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        Tensor& gb = grad_of(pb);
        const std::size_t c = g.cols();
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < c; ++j) gb[j] += g(i, j);
        break;
      }
      case Op::scale_rows: {
        const Tensor& a = value(pa);
        const Tensor& s = value(pb);
        Tensor& ga = grad_of(pa);
        Tensor& gs = grad_of(pb);
        if (s.size() == 1) {
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s[0] * g[i];
          double acc = 0;
          for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * a[i];
          gs[0] += acc;
        } else {
          for (std::size_t i = 0; i < a.rows(); ++i) {
            double acc = 0;
            for (std::size_t j = 0; j < a.cols(); ++j) {
              ga(i, j) += s[i] * g(i, j);
              acc += g(i, j) * a(i, j);
            }
            gs[i] += acc;
          }
        }
        break;
      }
      case Op::soft_threshold: {
        // d/dx = 1 where |x| > theta (and on exempt entries), 0 elsewhere
        // including the kink; d/dtheta = -sign(x) on active entries.
        const Tensor& x = value(pa);
        const Tensor& th = value(pb);
        Tensor& gx = grad_of(pa);
        Tensor& gt = grad_of(pb);
        const bool th_global = th.size() == 1;
        const bool th_per_row = !th_global && th.cols() == 1;
        const std::size_t c = x.cols();
        for (std::size_t i = 0; i < x.rows(); ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            const std::size_t idx = i * c + j;
            if (n.exempt && (*n.exempt)[idx]) {
              gx[idx] += g[idx];
              continue;
            }
            const double tv = th_global ? th[0] : th_per_row ? th[i] : th[idx];
            if (std::abs(x[idx]) > tv) {
              gx[idx] += g[idx];
              const double dtheta = -sign0(x[idx]) * g[idx];
              if (th_global)
                gt[0] += dtheta;
              else if (th_per_row)
                gt[i] += dtheta;
              else
                gt[idx] += dtheta;
            }
          }
        }
        break;
      }
      case Op::softsign: {
        const Tensor& x = value(pa);
        Tensor& ga = grad_of(pa);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double d = 1.0 + std::abs(x[i]);
          ga[i] += g[i] / (d * d);
        }
        break;
      }
      case Op::sigmoid: {
        Tensor& ga = grad_of(pa);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
        break;
      }
      case Op::tanh: {
        Tensor& ga = grad_of(pa);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
        break;
      }
      case Op::sqrt: {
        Tensor& ga = grad_of(pa);
        for (std::size_t i = 0; i < g.size(); ++i)
          if (n.value[i] > 0) ga[i] += g[i] * 0.5 / n.value[i];
        break;
      }
      case Op::relu: {
        const Tensor& x = value(pa);
        Tensor& ga = grad_of(pa);
        for (std::size_t i = 0; i < g.size(); ++i)
          if (x[i] > 0) ga[i] += g[i];
        break;
      }
      case Op::reweight: {
        // v = 1/(1+|x|/eps);  dv/dx = -sign(x) v^2 / eps
        const Tensor& x = value(pa);
        Tensor& ga = grad_of(pa);
        for (std::size_t i = 0; i < g.size(); ++i)
          ga[i] += g[i] * (-sign0(x[i]) * n.value[i] * n.value[i] / n.scalar);
        break;
      }
      case Op::row_l1: {
        const Tensor& x = value(pa);
        Tensor& ga = grad_of(pa);
        for (std::size_t i = 0; i < x.rows(); ++i)
          for (std::size_t j = 0; j < x.cols(); ++j) ga(i, j) += g[i] * sign0(x(i, j));
        break;
      }
      case Op::sum_all: {
        Tensor& ga = grad_of(pa);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
        break;
      }
      case Op::concat_cols: {
        const std::size_t ca = value(pa).cols();
        Tensor& ga = grad_of(pa);
        Tensor& gb = grad_of(pb);
        for (std::size_t i = 0; i < g.rows(); ++i) {
          for (std::size_t j = 0; j < ca; ++j) ga(i, j) += g(i, j);
          for (std::size_t j = ca; j < g.cols(); ++j) gb(i, j - ca) += g(i, j);
        }
        break;
      }
      case Op::slice_cols: {
        Tensor& ga = grad_of(pa);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) ga(i, n.i0 + j) += g(i, j);
        break;
      }
      case Op::broadcast_rows: {
        Tensor& ga = grad_of(pa);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) ga[j] += g(i, j);
        break;
      }
    }
  }
}

Tensor Tape::adjoint(Id id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty()) return Tensor(n.value.shape());
  return n.grad;
}

std::vector<Tensor> Tape::gradients(Id root, std::span<const Id> leaves) {
  backward(root);
  std::vector<Tensor> out;
  out.reserve(leaves.size());
  for (Id id : leaves) out.push_back(adjoint(id));
  return out;
}

void Tape::clear() { nodes_.clear(); }

const char* op_name(Tape::Op op) {
  switch (op) {
    case Tape::Op::leaf: return "leaf";
    case Tape::Op::constant: return "constant";
    case Tape::Op::matmul: return "matmul";
    case Tape::Op::add: return "add";
    case Tape::Op::sub: return "sub";
    case Tape::Op::mul: return "mul";
    case Tape::Op::scale: return "scale";
    case Tape::Op::add_row_broadcast: return "add_row_broadcast";
    case Tape::Op::scale_rows: return "scale_rows";
    case Tape::Op::soft_threshold: return "soft_threshold";
    case Tape::Op::softsign: return "softsign";
    case Tape::Op::sigmoid: return "sigmoid";
    case Tape::Op::tanh: return "tanh";
    case Tape::Op::sqrt: return "sqrt";
    case Tape::Op::relu: return "relu";
    case Tape::Op::reweight: return "reweight";
    case Tape::Op::row_l1: return "row_l1";
    case Tape::Op::sum_all: return "sum_all";
    case Tape::Op::concat_cols: return "concat_cols";
    case Tape::Op::slice_cols: return "slice_cols";
    case Tape::Op::broadcast_rows: return "broadcast_rows";
  }
  return "?";
}

nlohmann::json Tape::dump_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    nlohmann::json j;
    j["id"] = i;
    j["op"] = op_name(n.op);
    j["shape"] = n.value.shape();
    nlohmann::json parents = nlohmann::json::array();
    for (Id p : n.parents)
      if (p >= 0) parents.push_back(p);
    j["parents"] = std::move(parents);
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace cslab
