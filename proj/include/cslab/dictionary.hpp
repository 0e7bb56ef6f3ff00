#pragma once

#include <cstddef>
#include <string>

#include "cslab/tensor.hpp"

namespace cslab {

// Analytic weight matrix paired with a measurement matrix: columns satisfy
// w_i . phi_i = 1 and the off-diagonal products are pushed toward the Welch
// bound.
struct AnalyticDictionary {
  Tensor w;  // m x n
  double achieved_coherence = 0.0;  // max_{i != j} |w_i . phi_j|
  double surrogate_value = 0.0;     // ||W^T Phi||_F^2 at the solution
  std::size_t iterations_run = 0;
};

// Projected gradient descent on ||W^T Phi||_F^2 over the affine constraint
// set {W : w_i . phi_i = 1}, started at W = Phi. step <= 0 selects the
// guaranteed-descent default 1 / (2 lambda_max(Phi Phi^T)). Raises an error
// when the surrogate rises for 10 consecutive iterations.
AnalyticDictionary compute_dictionary(const Tensor& phi, double step = 0.0,
                                      std::size_t iters = 10000);

// max_{i != j} |w_i . phi_j| over columns.
double generalized_coherence(const Tensor& w, const Tensor& phi);

// sqrt((n - m) / (m (n - 1))), the coherence lower bound for m x n unit-norm
// frames; 0 for square frames.
double welch_bound(std::size_t m, std::size_t n);

// Largest integer s with s < (1 + 1/mu) / 2.
int max_admissible_sparsity(double mu);

// Dictionary persistence; the file records a checksum of the matrix it was
// computed for, and loading against a different one is an error.
void save_dictionary(const std::string& path, const AnalyticDictionary& dict,
                     const Tensor& phi);
AnalyticDictionary load_dictionary(const std::string& path, const Tensor& phi);

}  // namespace cslab
