#include "cslab/problems.hpp"

#include <cmath>
#include <filesystem>
#include <random>

#include "cslab/container.hpp"
#include "cslab/errors.hpp"
#include "cslab/rng.hpp"

namespace cslab {

namespace {

// Stream tags keep the independent randomness sources of one seed apart.
constexpr std::uint64_t kStreamMatrix = 1;
constexpr std::uint64_t kStreamTargets = 2;
constexpr std::uint64_t kStreamNoise = 3;

}  // namespace

ProblemEnsemble ProblemEnsemble::create(std::size_t m, std::size_t n, double s,
                                        std::optional<double> snr_db, std::uint64_t seed) {
  if (s <= 0.0 || s > static_cast<double>(n))
    throw ConfigError("expected sparsity must satisfy 0 < s <= n");
  ProblemEnsemble ens;
  ens.m = m;
  ens.n = n;
  ens.s = s;
  ens.snr_db = snr_db;
  ens.seed = seed;
  ens.phi = gen_measurement_matrix(m, n, mix_seed(seed, 0, kStreamMatrix));
  ens.phi_t = transpose(ens.phi);
  return ens;
}

Tensor gen_measurement_matrix(std::size_t m, std::size_t n, std::uint64_t seed) {
  if (m < 1 || m > n) throw ConfigError("measurement matrix requires 1 <= m <= n");
  Tensor phi = Tensor::zeros(m, n);
  for (std::size_t j = 0; j < n; ++j) {
    auto eng = make_engine(mix_seed(seed, j));
    std::normal_distribution<double> normal(0.0, 1.0);
    double sq = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double v = normal(eng);
      phi(i, j) = v;
      sq += v * v;
    }
    if (sq == 0.0) throw NumericsError("degenerate zero column in measurement matrix");
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t i = 0; i < m; ++i) phi(i, j) *= inv;
  }
  return phi;
}

Tensor gen_sparse_batch(std::size_t n, double s, std::size_t batch, std::uint64_t seed,
                        std::size_t first_row) {
  if (s <= 0.0 || s > static_cast<double>(n))
    throw ConfigError("expected sparsity must satisfy 0 < s <= n");
  if (batch < 1) throw ConfigError("batch size must be positive");
  const double p = s / static_cast<double>(n);
  Tensor x = Tensor::zeros(batch, n);
  for (std::size_t i = 0; i < batch; ++i) {
    auto eng = make_engine(mix_seed(seed, first_row + i));
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t j = 0; j < n; ++j)
      if (coin(eng) < p) x(i, j) = normal(eng);
  }
  return x;
}

Tensor gen_exact_sparse_batch(std::size_t n, std::size_t s, std::size_t batch,
                              std::uint64_t seed, std::size_t first_row) {
  if (s < 1 || s > n) throw ConfigError("exact sparsity must satisfy 1 <= s <= n");
  Tensor x = Tensor::zeros(batch, n);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < batch; ++i) {
    auto eng = make_engine(mix_seed(seed, first_row + i));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t j = 0; j < n; ++j) idx[j] = j;
    for (std::size_t k = 0; k < s; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, n - 1);
      std::swap(idx[k], idx[pick(eng)]);
      double v = 0.0;
      while (v == 0.0) v = normal(eng);
      x(i, idx[k]) = v;
    }
  }
  return x;
}

Tensor add_noise(const Tensor& y_clean, double snr_db, std::uint64_t seed,
                 std::size_t first_row) {
  const std::size_t b = y_clean.rows();
  const std::size_t m = y_clean.cols();
  double energy = 0.0;
  for (std::size_t i = 0; i < y_clean.size(); ++i) energy += y_clean[i] * y_clean[i];
  if (energy == 0.0) throw NumericsError("cannot scale noise to an all-zero batch");
  const double mean_sq = energy / static_cast<double>(b);
  const double sigma2 = mean_sq / (static_cast<double>(m) * std::pow(10.0, snr_db / 10.0));
  const double sigma = std::sqrt(sigma2);

  Tensor y = y_clean;
  for (std::size_t i = 0; i < b; ++i) {
    auto eng = make_engine(mix_seed(seed, first_row + i));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t j = 0; j < m; ++j) y(i, j) += sigma * normal(eng);
  }
  return y;
}

Batch measure(const ProblemEnsemble& ens, Tensor x_star, std::uint64_t noise_seed,
              std::size_t first_row) {
  Batch b;
  b.y = matmul(x_star, ens.phi_t);
  if (ens.snr_db) b.y = add_noise(b.y, *ens.snr_db, noise_seed, first_row);
  b.x_star = std::move(x_star);
  return b;
}

Batch gen_batch(const ProblemEnsemble& ens, std::size_t batch, std::uint64_t seed,
                std::size_t first_row) {
  Tensor x = gen_sparse_batch(ens.n, ens.s, batch, mix_seed(seed, 0, kStreamTargets), first_row);
  return measure(ens, std::move(x), mix_seed(seed, 0, kStreamNoise), first_row);
}

void save_test_set(const std::string& path, const ProblemEnsemble& ens, const Batch& b,
                   std::uint64_t seed) {
  Container c;
  c.kind = "dataset";
  c.push("x_star", b.x_star);
  c.push("y", b.y);
  c.meta["m"] = ens.m;
  c.meta["n"] = ens.n;
  c.meta["s"] = ens.s;
  if (ens.snr_db)
    c.meta["snr_db"] = *ens.snr_db;
  else
    c.meta["snr_db"] = nullptr;
  c.meta["ensemble_seed"] = ens.seed;
  c.meta["data_seed"] = seed;
  c.meta["size"] = b.x_star.rows();
  save_container(path, c);
}

Batch load_test_set(const std::string& path, const ProblemEnsemble& ens) {
  Container c = load_container(path);
  if (c.kind != "dataset") throw IoError(path + " is not a dataset container");
  auto mismatch = [&](const char* what) {
    throw IoError("test set " + path + " was generated for a different " + what);
  };
  if (c.meta.at("m").get<std::size_t>() != ens.m) mismatch("measurement count");
  if (c.meta.at("n").get<std::size_t>() != ens.n) mismatch("ambient dimension");
  if (c.meta.at("s").get<double>() != ens.s) mismatch("sparsity");
  if (c.meta.at("ensemble_seed").get<std::uint64_t>() != ens.seed) mismatch("ensemble seed");
  const auto& snr = c.meta.at("snr_db");
  if (snr.is_null() != !ens.snr_db ||
      (ens.snr_db && snr.get<double>() != *ens.snr_db))
    mismatch("noise level");
  Batch b;
  b.x_star = c.get("x_star");
  b.y = c.get("y");
  if (b.x_star.rows() != b.y.rows() || b.x_star.cols() != ens.n || b.y.cols() != ens.m)
    throw IoError("test set " + path + " has inconsistent shapes");
  return b;
}

Batch fixed_test_set(const ProblemEnsemble& ens, std::size_t size, std::uint64_t seed,
                     const std::string& path) {
  if (size < 1) throw ConfigError("test set size must be positive");
  if (std::filesystem::exists(path)) return load_test_set(path, ens);
  Batch b = gen_batch(ens, size, seed);
  save_test_set(path, ens, b, seed);
  return b;
}

}  // namespace cslab
