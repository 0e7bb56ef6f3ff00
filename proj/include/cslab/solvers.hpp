#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cslab/csvio.hpp"
#include "cslab/models.hpp"
#include "cslab/tensor.hpp"

namespace cslab {

struct TraceOptions {
  // Store the full iterate x^(k) at every step. Off by default: the theory
  // verifiers need it, bulk evaluation must not pay for it.
  bool keep_iterates = false;
  // When set, per-sample l1/l2 errors and support sizes are recorded.
  const Tensor* x_star = nullptr;
};

// One iteration of a batched run. Columns are per-sample (B x 1); theta and
// gamma are expanded from layer scalars where the model has no per-sample
// values. For the adaptive-threshold variant the theta column records the
// layer scalar; the componentwise thresholds follow from it, x^(k-1) and
// epsilon.
struct TraceRow {
  std::size_t k = 0;  // 1-based
  Tensor x;           // B x N iterate, kept on request
  Tensor r;           // ||Phi x^(k-1) - y||_1
  Tensor u;           // ||W^T (Phi x^(k-1) - y)||_1; empty when no W exists
  Tensor theta;
  Tensor gamma;
  std::vector<std::size_t> support_size;
  std::vector<double> err_l1, err_l2;  // vs x*, when supplied
  std::vector<double> objective;       // per-sample LASSO value, classical solvers only
};

struct IterationTrace {
  std::vector<TraceRow> rows;
  Tensor x_final;  // B x N
  // ||x*||_1 and ||x*||_2^2 per sample, when x* was supplied; the former is
  // the error of the all-zero starting iterate.
  std::vector<double> x_star_l1, x_star_sq;
  std::size_t iterations() const { return rows.size(); }
  std::size_t batch() const { return x_final.rows(); }
};

// Proximal gradient on the LASSO objective 0.5||y - Phi x||^2 + lambda||x||_1
// with step 1/L, L = lambda_max(Phi^T Phi), from x^(0) = 0. Per-sample
// objective values are recorded at every iterate.
IterationTrace ista_run(const Tensor& phi, const Tensor& y, double lambda,
                        std::size_t k_steps, const TraceOptions& opt = {});

// Same objective with momentum: the gradient step is taken at the
// extrapolated point z^(k) = x^(k) + ((t_k - 1)/t_{k+1})(x^(k) - x^(k-1)),
// t_1 = 1, t_{k+1} = (1 + sqrt(1 + 4 t_k^2))/2.
IterationTrace fista_run(const Tensor& phi, const Tensor& y, double lambda,
                         std::size_t k_steps, const TraceOptions& opt = {});

// Unrolled analytic-weight solvers (eager inference). Batches are processed
// in fixed-size shards so memory stays bounded and results do not depend on
// the caller's batching.
IterationTrace alista_forward(const Tensor& phi, const Tensor& w, const AlistaParams& params,
                              const Tensor& y, const SupportSelectionSchedule& ss,
                              const TraceOptions& opt = {});

IterationTrace alista_at_forward(const Tensor& phi, const Tensor& w, const AlistaParams& params,
                                 double epsilon, const Tensor& y,
                                 const SupportSelectionSchedule& ss,
                                 const TraceOptions& opt = {});

IterationTrace na_alista_forward(const Tensor& phi, const Tensor& w,
                                 const RecurrentCellParams& cell, FeatureSet feats,
                                 std::size_t k_steps, const Tensor& y,
                                 const SupportSelectionSchedule& ss,
                                 const TraceOptions& opt = {});

// True at k iff supp(x^(k)) is contained in supp(x*) for every sample.
// Requires kept iterates.
std::vector<bool> verify_lemma1(const IterationTrace& t, const Tensor& x_star);

struct BoundReport {
  // Per iteration, min over samples of
  //   mu gamma (s-1) e^(k-1) + theta s + |1 - gamma| e^(k-1) - e^(k),
  // where e^(k) = ||x^(k) - x*||_1. Nonnegative when the run satisfies the
  // step-size and threshold assumptions.
  std::vector<double> slack;
  bool l2_le_l1 = true;
};
BoundReport verify_error_bound(const IterationTrace& t, const Tensor& x_star, double mu,
                               std::size_t s);

// Batch statistics of theta^(k)/gamma^(k) against mu * ||x^(k-1) - x*||_1,
// the two sides of the threshold assumption. Requires errors recorded at
// trace time. A zero step size anywhere at an iteration marks its ratio
// columns nan.
struct AssumptionSeries {
  std::vector<double> ratio_mean, ratio_std;
  std::vector<double> err_mean, err_std;
};
AssumptionSeries assumption_ratio(const IterationTrace& t, double mu);

// Constructed run with oracle thresholds: noiseless y = Phi x*, no support
// selection, and theta^(k) set per sample to gamma^(k) mu ||x^(k-1) - x*||_1
// plus a tiny margin, the smallest value the support guarantee admits.
IterationTrace oracle_threshold_run(const Tensor& phi, const Tensor& w, double mu,
                                    const Tensor& x_star, std::span<const double> gammas,
                                    double margin = 1e-12);

// Per-sample LASSO objective values for an arbitrary iterate.
std::vector<double> lasso_objectives(const Tensor& phi, const Tensor& y, const Tensor& x,
                                     double lambda);

// 10 log10(err_sq_sum / sig_sq_sum), floored at -150 dB; errors on
// zero-energy targets.
double nmse_db_from_sums(double err_sq_sum, double sig_sq_sum);

// Per-iteration batch summary: k, nmse_db, r/u means, theta/gamma mean and
// spread, support size, plus bound slack when a report is supplied.
CsvTable trace_table(const IterationTrace& t, const BoundReport* bound = nullptr);

}  // namespace cslab
