#include "cslab/dictionary.hpp"

#include <cmath>
#include <sstream>

#include "cslab/container.hpp"
#include "cslab/errors.hpp"

namespace cslab {

namespace {

void require_unit_columns(const Tensor& phi) {
  const std::size_t m = phi.rows(), n = phi.cols();
  for (std::size_t j = 0; j < n; ++j) {
    double sq = 0.0;
    for (std::size_t i = 0; i < m; ++i) sq += phi(i, j) * phi(i, j);
    if (std::abs(sq - 1.0) > 1e-9)
      throw ConfigError("matrix column " + std::to_string(j) + " is not unit-norm");
  }
}

// w_j <- w_j + (1 - w_j . phi_j) phi_j, the orthogonal projection onto
// {w : w . phi_j = 1} for unit-norm phi_j.
void project_columns(Tensor& w, const Tensor& phi) {
  const std::size_t m = w.rows(), n = w.cols();
  for (std::size_t j = 0; j < n; ++j) {
    double d = 0.0;
    for (std::size_t i = 0; i < m; ++i) d += w(i, j) * phi(i, j);
    const double corr = 1.0 - d;
    for (std::size_t i = 0; i < m; ++i) w(i, j) += corr * phi(i, j);
  }
}

}  // namespace

AnalyticDictionary compute_dictionary(const Tensor& phi, double step, std::size_t iters) {
  if (phi.rank() != 2 || phi.rows() > phi.cols())
    throw ConfigError("dictionary needs an m x n matrix with m <= n");
  require_unit_columns(phi);

  const Tensor gram = matmul(phi, transpose(phi));  // m x m
  if (step <= 0.0) {
    const double lmax = largest_eigenvalue(gram);
    if (lmax <= 0.0) throw NumericsError("measurement matrix has no positive spectrum");
    step = 1.0 / (2.0 * lmax);
  }

  Tensor w = phi;
  double prev = -1.0;
  int rising = 0;
  std::vector<double> recent;
  std::size_t it = 0;
  for (; it < iters; ++it) {
    const Tensor gw = matmul(gram, w);         // m x n, half the gradient
    const double surrogate = dot(w, gw);       // ||W^T Phi||_F^2
    if (it > 0 && surrogate > prev) {
      if (++rising >= 10) {
        std::ostringstream msg;
        msg << "dictionary surrogate diverging; last values:";
        for (double v : recent) msg << ' ' << v;
        msg << ' ' << surrogate;
        throw ConvergenceError(msg.str(), surrogate);
      }
    } else {
      rising = 0;
    }
    prev = surrogate;
    recent.push_back(surrogate);
    if (recent.size() > 10) recent.erase(recent.begin());

    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= 2.0 * step * gw[i];
    project_columns(w, phi);
  }

  AnalyticDictionary out;
  out.surrogate_value = dot(w, matmul(gram, w));
  out.w = std::move(w);
  out.achieved_coherence = generalized_coherence(out.w, phi);
  out.iterations_run = it;
  return out;
}

double generalized_coherence(const Tensor& w, const Tensor& phi) {
  if (!w.same_shape(phi)) throw ShapeError("coherence needs matrices of equal shape");
  const Tensor products = matmul(transpose(w), phi);  // n x n, entry (i,j) = w_i . phi_j
  const std::size_t n = products.rows();
  double mu = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) mu = std::max(mu, std::abs(products(i, j)));
  return mu;
}

double welch_bound(std::size_t m, std::size_t n) {
  if (m < 1 || m > n) throw ConfigError("welch bound requires 1 <= m <= n");
  if (m == n) return 0.0;
  const double md = static_cast<double>(m), nd = static_cast<double>(n);
  return std::sqrt((nd - md) / (md * (nd - 1.0)));
}

int max_admissible_sparsity(double mu) {
  if (mu <= 0.0) throw ConfigError("coherence must be positive");
  const double bound = (1.0 + 1.0 / mu) / 2.0;
  int s = static_cast<int>(std::floor(bound));
  if (static_cast<double>(s) >= bound) --s;  // strict inequality
  return s < 0 ? 0 : s;
}

void save_dictionary(const std::string& path, const AnalyticDictionary& dict,
                     const Tensor& phi) {
  Container c;
  c.kind = "dictionary";
  c.push("w", dict.w);
  c.meta["m"] = dict.w.rows();
  c.meta["n"] = dict.w.cols();
  c.meta["achieved_coherence"] = dict.achieved_coherence;
  c.meta["surrogate_value"] = dict.surrogate_value;
  c.meta["iterations_run"] = dict.iterations_run;
  c.meta["phi_checksum"] = checksum_hex(payload_checksum({phi}));
  save_container(path, c);
}

AnalyticDictionary load_dictionary(const std::string& path, const Tensor& phi) {
  Container c = load_container(path);
  if (c.kind != "dictionary") throw IoError(path + " is not a dictionary container");
  const std::string want = checksum_hex(payload_checksum({phi}));
  const std::string got = c.meta.at("phi_checksum").get<std::string>();
  if (want != got)
    throw IoError("dictionary " + path + " was computed for a different measurement matrix");
  AnalyticDictionary out;
  out.w = c.get("w");
  out.achieved_coherence = c.meta.at("achieved_coherence").get<double>();
  out.surrogate_value = c.meta.at("surrogate_value").get<double>();
  out.iterations_run = c.meta.at("iterations_run").get<std::size_t>();
  if (!out.w.same_shape(phi)) throw IoError("dictionary shape does not match measurement matrix");
  return out;
}

}  // namespace cslab
