#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "cslab/dictionary.hpp"
#include "cslab/errors.hpp"
#include "cslab/problems.hpp"
#include "cslab/rng.hpp"
#include "cslab/solvers.hpp"

using namespace cslab;

TEST_CASE("ista: zero observations stay at the zero fixed point") {
  Tensor phi = gen_measurement_matrix(5, 12, 1);
  Tensor y = Tensor::zeros(3, 5);
  auto t = ista_run(phi, y, 0.4, 6, {.keep_iterates = true});
  REQUIRE(t.rows.size() == 6);
  for (const auto& row : t.rows)
    for (std::size_t i = 0; i < row.x.size(); ++i) CHECK(row.x[i] == 0.0);
}

TEST_CASE("ista: scalar lasso fixed point") {
  // phi = [1], y = 1, lambda = 0.5: minimizer of 0.5(1-x)^2 + 0.5|x| is 0.5
  Tensor phi({1, 1}, {1.0});
  Tensor y({1, 1}, {1.0});
  auto t = ista_run(phi, y, 0.5, 20, {});
  CHECK(t.x_final.item() == doctest::Approx(0.5).epsilon(1e-12));
  auto f = fista_run(phi, y, 0.5, 40, {});
  CHECK(f.x_final.item() == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("ista objective decreases monotonically") {
  Tensor phi = gen_measurement_matrix(20, 50, 2);
  for (std::uint64_t seed : {10, 11, 12}) {
    auto ens = ProblemEnsemble::create(20, 50, 4.0, 40.0, 3);
    Batch b = gen_batch(ens, 4, seed);
    auto t = ista_run(ens.phi, b.y, 0.4, 60, {});
    for (std::size_t i = 0; i < b.size(); ++i) {
      double half_y_sq = 0.0;
      for (std::size_t j = 0; j < 20; ++j) half_y_sq += 0.5 * b.y(i, j) * b.y(i, j);
      double prev = half_y_sq;  // objective of x^(0) = 0
      for (const auto& row : t.rows) {
        CHECK(row.objective[i] <= prev + 1e-12);
        prev = row.objective[i];
      }
    }
  }
}

TEST_CASE("fista reaches at least ista's final objective") {
  auto ens = ProblemEnsemble::create(20, 50, 4.0, 40.0, 5);
  Batch b = gen_batch(ens, 6, 77);
  auto ti = ista_run(ens.phi, b.y, 0.4, 200, {});
  auto tf = fista_run(ens.phi, b.y, 0.4, 200, {});
  for (std::size_t i = 0; i < b.size(); ++i)
    CHECK(tf.rows.back().objective[i] <= ti.rows.back().objective[i] + 1e-9);
}

TEST_CASE("classical runs record residual norms and objective against an oracle") {
  auto ens = ProblemEnsemble::create(8, 20, 3.0, std::nullopt, 6);
  Batch b = gen_batch(ens, 2, 8);
  auto t = ista_run(ens.phi, b.y, 0.4, 3, {.keep_iterates = true, .x_star = &b.x_star});
  // r^(1) is the residual at x^(0) = 0
  for (std::size_t i = 0; i < 2; ++i) {
    double l1 = 0.0;
    for (std::size_t j = 0; j < 8; ++j) l1 += std::abs(b.y(i, j));
    CHECK(t.rows[0].r(i, 0) == doctest::Approx(l1).epsilon(1e-14));
  }
  auto obj = lasso_objectives(ens.phi, b.y, t.rows[1].x, 0.4);
  for (std::size_t i = 0; i < 2; ++i)
    CHECK(t.rows[1].objective[i] == doctest::Approx(obj[i]).epsilon(1e-14));
}

TEST_CASE("alista: trivial degenerations") {
  Tensor phi = gen_measurement_matrix(6, 15, 3);
  auto dict = compute_dictionary(phi, 0.0, 200);
  auto ss = SupportSelectionSchedule::zeros(4);

  auto params = AlistaParams::init(4, 0.1, 1.0);
  Tensor y0 = Tensor::zeros(2, 6);
  auto t0 = alista_forward(phi, dict.w, params, y0, ss, {.keep_iterates = true});
  for (const auto& row : t0.rows)
    for (std::size_t i = 0; i < row.x.size(); ++i) CHECK(row.x[i] == 0.0);

  AlistaParams frozen;
  frozen.theta.assign(4, 0.0);
  frozen.gamma.assign(4, 0.0);
  auto ens = ProblemEnsemble::create(6, 15, 2.0, std::nullopt, 9);
  Batch b = gen_batch(ens, 2, 31);
  auto tf = alista_forward(phi, dict.w, frozen, b.y, ss, {.keep_iterates = true});
  for (std::size_t i = 0; i < tf.x_final.size(); ++i) CHECK(tf.x_final[i] == 0.0);
}

TEST_CASE("alista single step matches a hand-rolled computation") {
  Tensor phi = gen_measurement_matrix(6, 15, 13);
  auto dict = compute_dictionary(phi, 0.0, 200);
  auto ens = ProblemEnsemble::create(6, 15, 2.0, std::nullopt, 14);
  Batch b = gen_batch(ens, 3, 15);

  AlistaParams p1;
  p1.theta = {0.07};
  p1.gamma = {0.9};
  auto t = alista_forward(phi, dict.w, p1, b.y, SupportSelectionSchedule::zeros(1),
                          {.keep_iterates = true});

  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 15; ++j) {
      // x^(1)_j = eta_theta(gamma * w_j . y_i)
      double wy = 0.0;
      for (std::size_t r = 0; r < 6; ++r) wy += dict.w(r, j) * b.y(i, r);
      const double pre = 0.9 * wy;
      const double expect = pre > 0.07 ? pre - 0.07 : (pre < -0.07 ? pre + 0.07 : 0.0);
      CHECK(t.rows[0].x(i, j) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("support selection exempts the largest entries") {
  Tensor x({1, 3}, {3.0, -2.0, 1.0});
  auto mask = top_magnitude_mask(x, 1);
  Tensor out = soft_threshold(x, Tensor::scalar(1.5), &mask);
  CHECK(out[0] == 3.0);
  CHECK(out[1] == doctest::Approx(-0.5));
  CHECK(out[2] == 0.0);
}

TEST_CASE("adaptive-threshold variant reweights componentwise") {
  Tensor phi = gen_measurement_matrix(6, 15, 23);
  auto dict = compute_dictionary(phi, 0.0, 200);
  auto ens = ProblemEnsemble::create(6, 15, 2.0, std::nullopt, 24);
  Batch b = gen_batch(ens, 2, 25);
  auto ss = SupportSelectionSchedule::zeros(2);

  AlistaParams p;
  p.theta = {0.1, 0.08};
  p.gamma = {0.8, 0.8};
  const double eps = 0.5;
  auto t = alista_at_forward(phi, dict.w, p, eps, b.y, ss, {.keep_iterates = true});
  auto plain = alista_forward(phi, dict.w, p, b.y, ss, {.keep_iterates = true});

  // first step: x^(0) = 0, so reweighting changes nothing
  for (std::size_t i = 0; i < t.rows[0].x.size(); ++i)
    CHECK(t.rows[0].x[i] == plain.rows[0].x[i]);

  // second step verified against the componentwise formula
  const Tensor& x1 = t.rows[0].x;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 15; ++j) {
      double resr[6];
      for (std::size_t r = 0; r < 6; ++r) {
        double px = 0.0;
        for (std::size_t jj = 0; jj < 15; ++jj) px += phi(r, jj) * x1(i, jj);
        resr[r] = px - b.y(i, r);
      }
      double v = 0.0;
      for (std::size_t r = 0; r < 6; ++r) v += dict.w(r, j) * resr[r];
      const double pre = x1(i, j) - 0.8 * v;
      const double th = 0.08 / (1.0 + std::abs(x1(i, j)) / eps);
      const double expect = pre > th ? pre - th : (pre < -th ? pre + th : 0.0);
      CHECK(t.rows[1].x(i, j) == doctest::Approx(expect).epsilon(1e-10));
    }

  // theta column records the layer scalar for the adaptive variant
  CHECK(t.rows[1].theta(0, 0) == 0.08);
  CHECK_THROWS_AS(alista_at_forward(phi, dict.w, p, 0.0, b.y, ss, {}), ConfigError);

  // huge epsilon reduces to the plain model
  auto wide = alista_at_forward(phi, dict.w, p, 1e12, b.y, ss, {.keep_iterates = true});
  for (std::size_t i = 0; i < wide.x_final.size(); ++i)
    CHECK(wide.x_final[i] == doctest::Approx(plain.x_final[i]).epsilon(1e-9));
}

TEST_CASE("gated solver: zero input symmetry and determinism") {
  Tensor phi = gen_measurement_matrix(6, 15, 33);
  auto dict = compute_dictionary(phi, 0.0, 200);
  auto cell = RecurrentCellParams::init(5, 2, 71);
  auto ss = SupportSelectionSchedule::zeros(3);

  Tensor y0 = Tensor::zeros(4, 6);
  auto t0 = na_alista_forward(phi, dict.w, cell, FeatureSet::both, 3, y0, ss,
                              {.keep_iterates = true});
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(t0.rows[0].r(i, 0) == 0.0);
    CHECK(t0.rows[0].u(i, 0) == 0.0);
    // identical (theta, gamma) across batch at every step: input is all-zero
    CHECK(t0.rows[2].theta(i, 0) == t0.rows[2].theta(0, 0));
    CHECK(t0.rows[2].gamma(i, 0) == t0.rows[2].gamma(0, 0));
  }

  auto ens = ProblemEnsemble::create(6, 15, 2.0, 40.0, 34);
  Batch b = gen_batch(ens, 4, 35);
  auto t1 = na_alista_forward(phi, dict.w, cell, FeatureSet::both, 3, b.y, ss, {});
  auto t2 = na_alista_forward(phi, dict.w, cell, FeatureSet::both, 3, b.y, ss, {});
  for (std::size_t i = 0; i < t1.x_final.size(); ++i) CHECK(t1.x_final[i] == t2.x_final[i]);
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(t1.rows[k].theta(i, 0) == t2.rows[k].theta(i, 0));

  // distinct observations produce distinct predicted thresholds
  bool theta_varies = false;
  for (std::size_t k = 0; k < 3; ++k)
    if (t1.rows[k].theta(0, 0) != t1.rows[k].theta(1, 0)) theta_varies = true;
  CHECK(theta_varies);
}

TEST_CASE("batch permutation permutes outputs with no cross-talk") {
  Tensor phi = gen_measurement_matrix(6, 15, 43);
  auto dict = compute_dictionary(phi, 0.0, 200);
  auto cell = RecurrentCellParams::init(4, 2, 44);
  auto ss = SupportSelectionSchedule::linear(3, 10.0);
  auto ens = ProblemEnsemble::create(6, 15, 2.0, 40.0, 45);
  Batch b = gen_batch(ens, 5, 46);

  const std::size_t perm[5] = {3, 0, 4, 1, 2};
  Tensor y_perm = Tensor::zeros(5, 6);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 6; ++j) y_perm(i, j) = b.y(perm[i], j);

  auto t = na_alista_forward(phi, dict.w, cell, FeatureSet::both, 3, b.y, ss, {});
  auto tp = na_alista_forward(phi, dict.w, cell, FeatureSet::both, 3, y_perm, ss, {});
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 15; ++j)
      CHECK(tp.x_final(i, j) == t.x_final(perm[i], j));
}

TEST_CASE("sharded and unsharded forwards agree bitwise") {
  Tensor phi = gen_measurement_matrix(5, 12, 53);
  auto dict = compute_dictionary(phi, 0.0, 100);
  auto cell = RecurrentCellParams::init(4, 2, 54);
  auto ss = SupportSelectionSchedule::zeros(2);
  auto ens = ProblemEnsemble::create(5, 12, 2.0, 40.0, 55);
  Batch b = gen_batch(ens, 300, 56);  // crosses the internal shard width

  auto full = na_alista_forward(phi, dict.w, cell, FeatureSet::both, 2, b.y, ss, {});
  auto head = na_alista_forward(phi, dict.w, cell, FeatureSet::both, 2,
                                slice_rows(b.y, 0, 256), ss, {});
  auto tail = na_alista_forward(phi, dict.w, cell, FeatureSet::both, 2,
                                slice_rows(b.y, 256, 44), ss, {});
  for (std::size_t i = 0; i < 256; ++i)
    for (std::size_t j = 0; j < 12; ++j) CHECK(full.x_final(i, j) == head.x_final(i, j));
  for (std::size_t i = 0; i < 44; ++i)
    for (std::size_t j = 0; j < 12; ++j) CHECK(full.x_final(256 + i, j) == tail.x_final(i, j));
}

TEST_CASE("oracle-threshold runs satisfy the support and error guarantees") {
  Tensor phi = gen_measurement_matrix(30, 40, 63);
  auto dict = compute_dictionary(phi, 0.0, 1500);
  const double mu = dict.achieved_coherence;
  const int s_max = max_admissible_sparsity(mu);
  REQUIRE(s_max >= 1);
  const std::size_t s = static_cast<std::size_t>(std::min(s_max, 2));

  auto eng = make_engine(64);
  const double gamma_hi = 2.0 / (2.0 * mu * static_cast<double>(s) - mu + 1.0);
  std::uniform_real_distribution<double> gdist(0.05 * gamma_hi, 0.95 * gamma_hi);
  std::vector<double> gammas(8);
  for (auto& g : gammas) g = gdist(eng);

  Tensor x_star = gen_exact_sparse_batch(40, s, 20, 65);
  auto trace = oracle_threshold_run(phi, dict.w, mu, x_star, gammas);

  auto lem = verify_lemma1(trace, x_star);
  for (bool ok : lem) CHECK(ok);
  auto rep = verify_error_bound(trace, x_star, mu, s);
  CHECK(rep.l2_le_l1);
  for (double sl : rep.slack) CHECK(sl >= -1e-9);
}

TEST_CASE("verifiers demand kept iterates and flag violations") {
  Tensor phi = gen_measurement_matrix(5, 12, 73);
  auto dict = compute_dictionary(phi, 0.0, 100);
  auto ens = ProblemEnsemble::create(5, 12, 2.0, std::nullopt, 74);
  Batch b = gen_batch(ens, 2, 75);
  auto params = AlistaParams::init(3, 0.001, 1.0);
  auto ss = SupportSelectionSchedule::zeros(3);

  auto nokeep = alista_forward(phi, dict.w, params, b.y, ss, {});
  CHECK_THROWS_AS(verify_lemma1(nokeep, b.x_star), NumericsError);
  CHECK_THROWS_AS(verify_error_bound(nokeep, b.x_star, 0.5, 2), NumericsError);

  // a tiny threshold will generally leak off-support entries
  auto keep = alista_forward(phi, dict.w, params, b.y, ss, {.keep_iterates = true});
  auto lem = verify_lemma1(keep, b.x_star);
  bool any_false = false;
  for (bool ok : lem)
    if (!ok) any_false = true;
  CHECK(any_false);
}

TEST_CASE("assumption series: constant parameters, zero step, perfect recovery") {
  Tensor phi = gen_measurement_matrix(5, 12, 83);
  auto dict = compute_dictionary(phi, 0.0, 100);
  auto ens = ProblemEnsemble::create(5, 12, 2.0, std::nullopt, 84);
  Batch b = gen_batch(ens, 3, 85);
  auto ss = SupportSelectionSchedule::zeros(3);

  auto params = AlistaParams::init(3, 0.2, 0.8);
  auto t = alista_forward(phi, dict.w, params, b.y, ss, {.x_star = &b.x_star});
  auto series = assumption_ratio(t, dict.achieved_coherence);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(series.ratio_mean[k] == doctest::Approx(0.25));
    CHECK(series.ratio_std[k] == doctest::Approx(0.0));
    CHECK(series.err_mean[k] >= 0.0);
  }
  // the first error entry is mu * mean ||x*||_1
  double acc = 0.0;
  for (double v : t.x_star_l1) acc += v;
  CHECK(series.err_mean[0] ==
        doctest::Approx(dict.achieved_coherence * acc / 3.0).epsilon(1e-12));

  AlistaParams zero_gamma;
  zero_gamma.theta = {0.1};
  zero_gamma.gamma = {0.0};
  auto tz = alista_forward(phi, dict.w, zero_gamma, b.y, SupportSelectionSchedule::zeros(1),
                           {.x_star = &b.x_star});
  auto sz = assumption_ratio(tz, 0.5);
  CHECK(std::isnan(sz.ratio_mean[0]));

  auto no_err = alista_forward(phi, dict.w, params, b.y, ss, {});
  CHECK_THROWS_AS(assumption_ratio(no_err, 0.5), NumericsError);
}

TEST_CASE("normalized error conversion") {
  CHECK(nmse_db_from_sums(1e-4, 1.0) == doctest::Approx(-40.0));
  CHECK(nmse_db_from_sums(2.0, 2.0) == doctest::Approx(0.0));
  CHECK(nmse_db_from_sums(0.0, 5.0) == -150.0);
  CHECK(nmse_db_from_sums(1e-300, 1.0) == -150.0);
  CHECK_THROWS_AS(nmse_db_from_sums(1.0, 0.0), NumericsError);
}

TEST_CASE("trace table is stable and well formed") {
  Tensor phi = gen_measurement_matrix(5, 12, 93);
  auto dict = compute_dictionary(phi, 0.0, 100);
  auto ens = ProblemEnsemble::create(5, 12, 2.0, 40.0, 94);
  Batch b = gen_batch(ens, 4, 95);
  auto params = AlistaParams::init(3, 0.05, 0.9);
  auto ss = SupportSelectionSchedule::zeros(3);

  auto t = alista_forward(phi, dict.w, params, b.y, ss, {.x_star = &b.x_star});
  auto tab = trace_table(t);
  REQUIRE(tab.columns.size() == 11);
  REQUIRE(tab.rows.size() == 3);
  for (const auto& row : tab.rows) CHECK(row.size() == tab.columns.size());
  CHECK(tab.rows[0][0] == "1");

  auto t2 = alista_forward(phi, dict.w, params, b.y, ss, {.x_star = &b.x_star});
  CHECK(csv_body(trace_table(t2)) == csv_body(tab));
}
