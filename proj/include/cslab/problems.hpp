#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "cslab/tensor.hpp"

namespace cslab {

// A synthetic compressed-sensing setup: measurement matrix with unit-norm
// columns plus the distribution parameters for targets and noise.
struct ProblemEnsemble {
  std::size_t m = 0;               // measurements
  std::size_t n = 0;               // ambient dimension
  double s = 0.0;                  // expected sparsity (Bernoulli s/n)
  std::optional<double> snr_db;    // empty = noiseless observations
  std::uint64_t seed = 0;
  Tensor phi;    // m x n
  Tensor phi_t;  // n x m, cached transpose

  static ProblemEnsemble create(std::size_t m, std::size_t n, double s,
                                std::optional<double> snr_db, std::uint64_t seed);
};

struct Batch {
  Tensor x_star;  // B x N
  Tensor y;       // B x M
  std::size_t size() const { return x_star.rows(); }
};

// i.i.d. N(0,1) entries, then each column rescaled to unit l2 norm. Columns
// use independent counter-derived streams.
Tensor gen_measurement_matrix(std::size_t m, std::size_t n, std::uint64_t seed);

// Each entry nonzero with probability s/n, nonzero amplitudes i.i.d. N(0,1).
// Row i draws from a stream derived from (seed, first_row + i), so shards
// generated separately concatenate to the same batch.
Tensor gen_sparse_batch(std::size_t n, double s, std::size_t batch, std::uint64_t seed,
                        std::size_t first_row = 0);

// Exactly s nonzeros per row at uniformly chosen positions; used by the
// theory verifiers, which need a hard sparsity level.
Tensor gen_exact_sparse_batch(std::size_t n, std::size_t s, std::size_t batch,
                              std::uint64_t seed, std::size_t first_row = 0);

// Adds white Gaussian noise with variance sigma^2 = mean_i ||y_i||^2 /
// (m * 10^(snr_db/10)), the batch-empirical reading of SNR = E||Phi x||^2 /
// E||z||^2. Row streams are counter-derived as above.
Tensor add_noise(const Tensor& y_clean, double snr_db, std::uint64_t seed,
                 std::size_t first_row = 0);

// y = x Phi^T, plus noise when the ensemble declares an SNR.
Batch measure(const ProblemEnsemble& ens, Tensor x_star, std::uint64_t noise_seed,
              std::size_t first_row = 0);

// Sparse targets plus measurements in one call; sub-streams for targets and
// noise are derived from `seed`.
Batch gen_batch(const ProblemEnsemble& ens, std::size_t batch, std::uint64_t seed,
                std::size_t first_row = 0);

// Persistence: dataset container with the generation parameters in the meta
// block so a load can be validated against the ensemble that requests it.
void save_test_set(const std::string& path, const ProblemEnsemble& ens, const Batch& b,
                   std::uint64_t seed);
Batch load_test_set(const std::string& path, const ProblemEnsemble& ens);

// Generates `size` samples from streams derived from `seed`, persisting them
// at `path`; if the file already exists it is loaded and validated instead,
// so the set stays fixed across runs.
Batch fixed_test_set(const ProblemEnsemble& ens, std::size_t size, std::uint64_t seed,
                     const std::string& path);

}  // namespace cslab
