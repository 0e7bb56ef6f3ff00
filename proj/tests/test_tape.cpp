#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <nlohmann/json.hpp>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "cslab/errors.hpp"
#include "cslab/rng.hpp"
#include "cslab/tape.hpp"
#include "cslab/tensor.hpp"

using namespace cslab;

namespace {

using Builder = std::function<Tape::Id(Tape&, const std::vector<Tape::Id>&)>;

Tensor random_tensor(std::size_t r, std::size_t c, std::uint64_t seed, double lo = -1.0,
                     double hi = 1.0) {
  auto eng = make_engine(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t = Tensor::zeros(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(eng);
  return t;
}

// Max relative disagreement between tape gradients and central differences
// over every entry of every input.
double fd_max_rel_err(const Builder& build, const std::vector<Tensor>& inputs, double h = 1e-6) {
  Tape tape;
  std::vector<Tape::Id> ids;
  for (const auto& t : inputs) ids.push_back(tape.leaf(t));
  const Tape::Id root = build(tape, ids);
  auto grads = tape.gradients(root, ids);

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto eval = [&](double delta) {
        Tape t2;
        std::vector<Tape::Id> ids2;
        for (std::size_t m = 0; m < inputs.size(); ++m) {
          Tensor tm = inputs[m];
          if (m == k) tm[i] += delta;
          ids2.push_back(t2.leaf(std::move(tm)));
        }
        return t2.value(build(t2, ids2)).item();
      };
      const double fd = (eval(h) - eval(-h)) / (2.0 * h);
      const double an = grads[k][i];
      const double err = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// Scalarize a non-scalar node against a fixed weight so every output entry
// contributes a distinct term to the gradient.
Tape::Id weigh(Tape& t, Tape::Id v, std::uint64_t seed) {
  const Tensor& val = t.value(v);
  return t.sum_all(t.mul(v, t.constant(random_tensor(val.rows(), val.cols(), seed, 0.5, 1.5))));
}

}  // namespace

TEST_CASE("gradients: arithmetic ops") {
  auto a = random_tensor(3, 4, 11);
  auto b = random_tensor(3, 4, 12);

  CHECK(fd_max_rel_err([](Tape& t, const std::vector<Tape::Id>& in) {
          return weigh(t, t.add(in[0], in[1]), 1);
        }, {a, b}) < 1e-6);
  CHECK(fd_max_rel_err([](Tape& t, const std::vector<Tape::Id>& in) {
          return weigh(t, t.sub(in[0], in[1]), 2);
        }, {a, b}) < 1e-6);
  CHECK(fd_max_rel_err([](Tape& t, const std::vector<Tape::Id>& in) {
          return weigh(t, t.mul(in[0], in[1]), 3);
        }, {a, b}) < 1e-6);
  CHECK(fd_max_rel_err([](Tape& t, const std::vector<Tape::Id>& in) {
          return weigh(t, t.scale(in[0], -2.5), 4);
        }, {a}) < 1e-6);
}

TEST_CASE("gradients: matmul") {
  auto a = random_tensor(3, 5, 21);
  auto b = random_tensor(5, 2, 22);
  CHECK(fd_max_rel_err([](Tape& t, const std::vector<Tape::Id>& in) {
          return weigh(t, t.matmul(in[0], in[1]), 5);
        }, {a, b}) < 1e-6);
}

TEST_CASE("gradients: broadcasts") {
  auto a = random_tensor(4, 3, 31);
  auto bias = random_tensor(1, 3, 32);
  CHECK(fd_max_rel_err([](Tape& t, const std::vector<Tape::Id>& in) {
          return weigh(t, t.add_row_broadcast(in[0], in[1]), 6);
        }, {a, bias}) < 1e-6);

  auto s_col = random_tensor(4, 1, 33);
  CHECK(fd_max_rel_err([](Tape& t, const std::vector<Tape::Id>& in) {
          return weigh(t, t.scale_rows(in[0], in[1]), 7);
        }, {a, s_col}) < 1e-6);

  auto s_scalar = random_tensor(1, 1, 34);
  CHECK(fd_max_rel_err([](Tape& t, const std::vector<Tape::Id>& in) {
          return weigh(t, t.scale_rows(in[0], in[1]), 8);
        }, {a, s_scalar}) < 1e-6);

  auto r = random_tensor(1, 5, 35);
  CHECK(fd_max_rel_err([](Tape& t, const std::vector<Tape::Id>& in) {
          return weigh(t, t.broadcast_rows(in[0], 3), 9);
        }, {r}) < 1e-6);
}

TEST_CASE("gradients: nonlinearities") {
  auto x = random_tensor(2, 6, 41, -2.0, 2.0);
  for (std::size_t i = 0; i < x.size(); ++i)
    if (std::abs(x[i]) < 0.05) x[i] += 0.1;  // keep away from relu/|.| kinks

  CHECK(fd_max_rel_err([](Tape& t, const std::vector<Tape::Id>& in) {
          return weigh(t, t.softsign(in[0]), 10);
        }, {x}) < 1e-6);
  CHECK(fd_max_rel_err([](Tape& t, const std::vector<Tape::Id>& in) {
          return weigh(t, t.sigmoid(in[0]), 11);
        }, {x}) < 1e-6);
  CHECK(fd_max_rel_err([](Tape& t, const std::vector<Tape::Id>& in) {
          return weigh(t, t.tanh(in[0]), 12);
        }, {x}) < 1e-6);
  CHECK(fd_max_rel_err([](Tape& t, const std::vector<Tape::Id>& in) {
          return weigh(t, t.relu(in[0]), 13);
        }, {x}) < 1e-6);
  CHECK(fd_max_rel_err([](Tape& t, const std::vector<Tape::Id>& in) {
          return weigh(t, t.reweight(in[0], 0.7), 14);
        }, {x}) < 1e-6);

  auto pos = random_tensor(2, 4, 42, 0.5, 3.0);
  CHECK(fd_max_rel_err([](Tape& t, const std::vector<Tape::Id>& in) {
          return weigh(t, t.sqrt(in[0]), 15);
        }, {pos}) < 1e-6);
}

TEST_CASE("gradients: reductions and joins") {
  auto x = random_tensor(3, 4, 51);
  for (std::size_t i = 0; i < x.size(); ++i)
    if (std::abs(x[i]) < 0.05) x[i] = 0.2;  // row_l1 kink at 0

  CHECK(fd_max_rel_err([](Tape& t, const std::vector<Tape::Id>& in) {
          return weigh(t, t.row_l1(in[0]), 16);
        }, {x}) < 1e-6);
  CHECK(fd_max_rel_err([](Tape& t, const std::vector<Tape::Id>& in) {
          return t.sum_all(in[0]);
        }, {x}) < 1e-6);

  auto a = random_tensor(3, 2, 52);
  auto b = random_tensor(3, 3, 53);
  CHECK(fd_max_rel_err([](Tape& t, const std::vector<Tape::Id>& in) {
          return weigh(t, t.concat_cols(in[0], in[1]), 17);
        }, {a, b}) < 1e-6);
  CHECK(fd_max_rel_err([](Tape& t, const std::vector<Tape::Id>& in) {
          return weigh(t, t.slice_cols(in[0], 1, 2), 18);
        }, {x}) < 1e-6);

  CHECK(fd_max_rel_err([](Tape& t, const std::vector<Tape::Id>& in) {
          return t.l1_norm(in[0]);
        }, {x}) < 1e-6);
  CHECK(fd_max_rel_err([](Tape& t, const std::vector<Tape::Id>& in) {
          return t.l2_norm(in[0]);
        }, {x}) < 1e-6);
}

TEST_CASE("gradients: soft threshold, all theta shapes") {
  // keep |x| at distance >= 0.2 from theta so finite differences see no kink
  Tensor x({2, 4}, {1.3, -0.1, 0.9, -2.0, 0.1, 1.1, -0.7, 0.05});

  Tensor th_scalar = Tensor::scalar(0.5);
  CHECK(fd_max_rel_err([](Tape& t, const std::vector<Tape::Id>& in) {
          return weigh(t, t.soft_threshold(in[0], in[1]), 19);
        }, {x, th_scalar}) < 1e-6);

  Tensor th_row({2, 1}, {0.5, 0.4});
  CHECK(fd_max_rel_err([](Tape& t, const std::vector<Tape::Id>& in) {
          return weigh(t, t.soft_threshold(in[0], in[1]), 20);
        }, {x, th_row}) < 1e-6);

  Tensor th_full({2, 4}, {0.5, 0.3, 0.4, 0.6, 0.3, 0.5, 0.4, 0.3});
  CHECK(fd_max_rel_err([](Tape& t, const std::vector<Tape::Id>& in) {
          return weigh(t, t.soft_threshold(in[0], in[1]), 21);
        }, {x, th_full}) < 1e-6);
}

TEST_CASE("gradients: soft threshold with support selection") {
  // top-1 per row exempt; margins keep the frozen mask stable under +-h
  Tensor x({2, 4}, {2.0, -0.1, 0.9, -1.2, 0.1, 1.4, -0.7, 0.05});
  CHECK(fd_max_rel_err([](Tape& t, const std::vector<Tape::Id>& in) {
          return weigh(t, t.soft_threshold(in[0], in[1], 1), 22);
        }, {x, Tensor::scalar(0.5)}) < 1e-6);
}

TEST_CASE("soft threshold subgradient conventions at the kink") {
  Tensor x({1, 3}, {0.5, -0.5, 1.0});
  Tape t;
  auto xi = t.leaf(x);
  auto th = t.leaf(Tensor::scalar(0.5));
  auto y = t.soft_threshold(xi, th);
  auto root = t.sum_all(y);
  t.backward(root);
  auto gx = t.adjoint(xi);
  CHECK(gx[0] == 0.0);  // |x| == theta sits on the inactive side
  CHECK(gx[1] == 0.0);
  CHECK(gx[2] == 1.0);
  CHECK(t.adjoint(th)[0] == -1.0);  // only the active entry contributes
}

TEST_CASE("gradient of unreachable node is zero") {
  Tape t;
  auto a = t.leaf(Tensor::scalar(2.0));
  auto b = t.leaf(Tensor::scalar(3.0));
  auto root = t.scale(a, 2.0);
  t.backward(root);
  CHECK(t.adjoint(b).item() == 0.0);
  CHECK(t.adjoint(a).item() == 2.0);
}

TEST_CASE("backward requires scalar root") {
  Tape t;
  auto a = t.leaf(random_tensor(2, 2, 61));
  CHECK_THROWS_AS(t.backward(a), ShapeError);
}

TEST_CASE("repeated use of a node accumulates") {
  Tape t;
  auto a = t.leaf(Tensor::scalar(3.0));
  auto root = t.sum_all(t.mul(a, a));  // d/da a^2 = 2a
  t.backward(root);
  CHECK(t.adjoint(a).item() == doctest::Approx(6.0));
}

TEST_CASE("forward values are bit-identical to eager kernels") {
  auto a = random_tensor(3, 4, 71);
  auto b = random_tensor(4, 2, 72);
  Tensor eager = cslab::tanh(matmul(soft_threshold(a, 0.3), b));
  Tape t;
  auto ai = t.leaf(a);
  auto bi = t.leaf(b);
  auto out = t.tanh(t.matmul(t.soft_threshold(ai, t.constant(Tensor::scalar(0.3))), bi));
  const Tensor& taped = t.value(out);
  REQUIRE(taped.same_shape(eager));
  for (std::size_t i = 0; i < eager.size(); ++i) CHECK(taped[i] == eager[i]);
}

TEST_CASE("backward is deterministic") {
  auto x = random_tensor(4, 6, 81);
  auto run = [&] {
    Tape t;
    auto xi = t.leaf(x);
    auto root = t.l2_norm(t.softsign(t.soft_threshold(xi, t.constant(Tensor::scalar(0.2)))));
    t.backward(root);
    return t.adjoint(xi);
  };
  Tensor g1 = run(), g2 = run();
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("graph dump names ops and parents") {
  Tape t;
  auto a = t.leaf(Tensor::scalar(1.0));
  auto b = t.constant(Tensor::scalar(2.0));
  auto c = t.add(a, b);
  t.sum_all(c);
  auto j = t.dump_json();
  REQUIRE(j.size() == 4);
  CHECK(j[0]["op"] == "leaf");
  CHECK(j[1]["op"] == "constant");
  CHECK(j[2]["op"] == "add");
  CHECK(j[2]["parents"][0] == 0);
  CHECK(j[2]["parents"][1] == 1);
  CHECK(j[3]["op"] == "sum_all");
}
