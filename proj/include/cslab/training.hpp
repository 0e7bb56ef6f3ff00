#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cslab/csvio.hpp"
#include "cslab/models.hpp"
#include "cslab/problems.hpp"
#include "cslab/solvers.hpp"
#include "cslab/tensor.hpp"

namespace cslab {

// Batch mean of ||x_i - x*_i||_2^2.
double mse_loss(const Tensor& x, const Tensor& x_star);

// 10 log10(E||x - x*||^2 / E||x*||^2) with batch means, floored at -150 dB.
double nmse(const Tensor& x, const Tensor& x_star);

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m, v;
  std::size_t t = 0;
  static AdamState init(const ParamSet& params);
};

// Standard bias-corrected update; increments t.
void adam_step(ParamSet& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamConfig& cfg);

struct TrainConfig {
  ModelKind model = ModelKind::na_alista;
  FeatureSet features = FeatureSet::both;
  std::size_t epochs = 20;
  std::size_t samples_per_epoch = 5000;
  std::size_t batch_size = 128;
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  std::size_t k_steps = 12;
  std::size_t hidden = 32;
  double p_max = 1.2;      // support-selection maximum percentage at the last layer
  double at_epsilon = 0.1; // adaptive-threshold reweighting scale
  std::size_t eval_every = 1;

  void validate() const;  // throws ConfigError
};

// A trainable solver: its kind, structure and flat parameter set.
struct LearnedModel {
  ModelKind kind = ModelKind::alista;
  FeatureSet features = FeatureSet::both;
  std::size_t k_steps = 0;
  std::size_t hidden = 0;
  double at_epsilon = 0.0;
  SupportSelectionSchedule schedule;
  ParamSet params;

  static LearnedModel create(const TrainConfig& cfg);

  // Eager forward over a batch; r/u and applied (theta, gamma) come along in
  // the trace columns.
  IterationTrace infer(const Tensor& phi, const Tensor& w, const Tensor& y,
                       const TraceOptions& opt = {}) const;
};

// Loss (batch-mean squared error of the final iterate) and its gradients
// w.r.t. every parameter tensor, computed on a fresh tape per fixed-width
// shard and accumulated in shard order, so the result is independent of
// thread count and caller batching.
std::pair<double, std::vector<Tensor>> batch_loss_and_gradients(const LearnedModel& model,
                                                                const Tensor& phi_t,
                                                                const Tensor& w,
                                                                const Batch& batch);

struct Checkpoint {
  LearnedModel model;
  AdamState adam;
  std::size_t epochs_done = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

struct TrainResult {
  LearnedModel model;
  AdamState adam;
  std::size_t epochs_done = 0;
  CsvTable curve;  // epoch, train_loss, test_nmse_db
  double final_nmse_db = 0.0;
};

// Streams fresh seeded data every epoch, evaluates on the fixed test set at
// the configured cadence, halves the learning rate at 50% and 75% of the
// epoch budget. `resume` continues a paused run of the same configuration
// bitwise (batch seeds derive from the epoch and batch indices, so the
// optimizer state is the entire RNG state); `stop_after_epochs` pauses early
// (0 runs to cfg.epochs). A non-finite loss aborts with a diagnostic
// checkpoint at `abort_checkpoint_path` when that is non-empty.
TrainResult train(const TrainConfig& cfg, const ProblemEnsemble& ens, const Tensor& w,
                  const Batch& test_set, const Checkpoint* resume = nullptr,
                  const std::string& abort_checkpoint_path = "",
                  std::size_t stop_after_epochs = 0);

// Pearson correlations of ||x*||_1 with the observable proxies r = ||Phi x*||_1
// and u = ||W^T Phi x*||_1, at the ensemble's sparsity and at full density.
// All-zero targets are excluded.
struct CorrelationReport {
  double sparse_r = 0.0, sparse_u = 0.0;
  double dense_r = 0.0, dense_u = 0.0;
  std::size_t samples_used = 0;
};
CorrelationReport correlation_l1_proxies(const ProblemEnsemble& ens, const Tensor& w,
                                         std::size_t samples, std::uint64_t seed);

// Pearson correlation between u^(i) and ||x^(j) - x*||_1 across a batch, for
// requested 1-based iteration pairs (i, j).
struct PairCorrelation {
  std::size_t i = 0, j = 0;
  double corr = 0.0;
};
std::vector<PairCorrelation> update_error_correlation(
    const LearnedModel& model, const Tensor& phi, const Tensor& w, const Batch& data,
    std::span<const std::pair<std::size_t, std::size_t>> pairs);

double pearson(std::span<const double> a, std::span<const double> b);

}  // namespace cslab
