#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cslab/engine.hpp"
#include "cslab/rng.hpp"
#include "cslab/tensor.hpp"

namespace cslab {

enum class ModelKind { zero, ista, fista, alista, alista_at, na_alista };
enum class FeatureSet { residual, update, both };  // r, u, or [r, u] as cell inputs

std::string to_string(ModelKind k);
std::string to_string(FeatureSet f);
ModelKind model_kind_from_string(const std::string& s);
FeatureSet feature_set_from_string(const std::string& s);
inline std::size_t feature_dim(FeatureSet f) { return f == FeatureSet::both ? 2 : 1; }

// Per-layer exemption percentages for support selection.
struct SupportSelectionSchedule {
  std::vector<double> percent;  // in [0, 100], length K

  static SupportSelectionSchedule zeros(std::size_t k) { return {std::vector<double>(k, 0.0)}; }
  // 0 at the first layer rising linearly to p_max at the last.
  static SupportSelectionSchedule linear(std::size_t k, double p_max);

  std::size_t layers() const { return percent.size(); }
  // ceil(p * n / 100) entries exempt at layer k (0-based).
  std::size_t exempt_count(std::size_t k, std::size_t n) const;
};

// Per-layer scalar thresholds and step sizes.
struct AlistaParams {
  std::vector<double> theta;
  std::vector<double> gamma;

  std::size_t layers() const { return theta.size(); }
  static AlistaParams init(std::size_t k, double theta0 = 0.1, double gamma0 = 1.0);
};

// Gating cell (LSTM-style) plus the cell-state-to-output map. Layouts are
// chosen so the batched forward needs no transposes: inputs are row vectors.
// Gate order in the packed 4H dimension is [input, forget, candidate, output].
struct RecurrentCellParams {
  std::size_t hidden = 0;
  std::size_t input_dim = 2;
  Tensor w_in;     // input_dim x 4H
  Tensor w_rec;    // H x 4H
  Tensor bias;     // 1 x 4H, forget block initialized to 1
  Tensor c0;       // 1 x H
  Tensor h0;       // 1 x H
  Tensor out_map;  // H x 2, maps cell state to [theta, gamma]

  static RecurrentCellParams init(std::size_t hidden, std::size_t input_dim, std::uint64_t seed);
};

// Flat named parameter list; the unit the optimizer and checkpoints work on.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  void push(std::string name, Tensor t);
  std::size_t size() const { return tensors.size(); }
};

ParamSet pack_params(const AlistaParams& p);
ParamSet pack_params(const RecurrentCellParams& p);
AlistaParams unpack_alista(const ParamSet& p);
RecurrentCellParams unpack_cell(const ParamSet& p, std::size_t hidden, std::size_t input_dim);

struct UnrollOptions {
  SupportSelectionSchedule schedule;  // length K
  bool compute_ru = false;            // record r/u even when the model does not need them
  bool clamp_theta = false;           // clamp predicted thresholds at 0 (verifier runs)
};

// Everything produced by one unrolled forward pass. Values are engine
// handles: Tensors for EagerEngine, tape node ids for TapeEngine.
template <class E>
struct UnrolledRun {
  using V = typename E::Value;
  std::size_t batch = 0;
  V x_final{};
  std::vector<V> iterates;     // x^(1..K)
  std::vector<V> residual_l1;  // r^(k) = ||Phi x^(k-1) - y||_1, B x 1
  std::vector<V> update_l1;    // u^(k) = ||W^T (Phi x^(k-1) - y)||_1, B x 1
  std::vector<V> thetas;       // threshold used at step k (1x1, Bx1 or BxN)
  std::vector<V> gammas;       // step size used at step k (1x1 or Bx1)
};

// x^(k) = eta_theta(x^(k-1) - gamma^(k) W^T (Phi x^(k-1) - y)), batched with
// x as B x N rows. phi_t is Phi^T (N x M) and w is W (M x N) so that row i of
// matmul(res, w) equals W^T (Phi x_i - y_i). With at_epsilon > 0 the
// threshold is reweighted componentwise: theta_ij = theta^(k) / (1 + |x_ij^(k-1)|/eps).
template <class E>
UnrolledRun<E> alista_unroll(E& eng, const typename E::Value& phi_t, const typename E::Value& w,
                             std::span<const typename E::Value> thetas,
                             std::span<const typename E::Value> gammas,
                             const typename E::Value& y, std::size_t n,
                             const UnrollOptions& opt, double at_epsilon = 0.0) {
  const std::size_t k_steps = thetas.size();
  const std::size_t batch = eng.value(y).rows();
  UnrolledRun<E> run;
  run.batch = batch;
  auto x = eng.constant(Tensor::zeros(batch, n));
  for (std::size_t k = 0; k < k_steps; ++k) {
    auto res = eng.sub(eng.matmul(x, phi_t), y);  // B x M
    auto v = eng.matmul(res, w);                  // B x N
    if (opt.compute_ru) {
      run.residual_l1.push_back(eng.row_l1(res));
      run.update_l1.push_back(eng.row_l1(v));
    }
    auto theta = thetas[k];
    if (opt.clamp_theta) theta = eng.relu(theta);
    if (at_epsilon > 0.0) theta = eng.scale_rows(eng.reweight(x, at_epsilon), theta);
    auto upd = eng.sub(x, eng.scale_rows(v, gammas[k]));
    x = eng.soft_threshold(upd, theta, opt.schedule.exempt_count(k, n));
    run.iterates.push_back(x);
    run.thetas.push_back(theta);
    run.gammas.push_back(gammas[k]);
  }
  run.x_final = x;
  return run;
}

template <class E>
struct CellValues {
  typename E::Value w_in, w_rec, bias, c0, h0, out_map;
  std::size_t hidden = 0;
};

// The neurally augmented iteration: a gating cell consumes the l1 norms of
// the residual (r) and of the update direction (u), predicts per-sample
// (theta, gamma) through softsign of the mapped cell state, and the usual
// thresholded update is applied with those values.
template <class E>
UnrolledRun<E> na_alista_unroll(E& eng, const typename E::Value& phi_t,
                                const typename E::Value& w, const CellValues<E>& cell,
                                FeatureSet feats, std::size_t k_steps,
                                const typename E::Value& y, std::size_t n,
                                const UnrollOptions& opt) {
  const std::size_t batch = eng.value(y).rows();
  const std::size_t hidden = cell.hidden;
  UnrolledRun<E> run;
  run.batch = batch;
  auto x = eng.constant(Tensor::zeros(batch, n));
  auto c = eng.broadcast_rows(cell.c0, batch);
  auto h = eng.broadcast_rows(cell.h0, batch);
  for (std::size_t k = 0; k < k_steps; ++k) {
    auto res = eng.sub(eng.matmul(x, phi_t), y);
    auto v = eng.matmul(res, w);
    auto r_col = eng.row_l1(res);
    auto u_col = eng.row_l1(v);
    run.residual_l1.push_back(r_col);
    run.update_l1.push_back(u_col);

    auto in = feats == FeatureSet::residual ? r_col
            : feats == FeatureSet::update   ? u_col
                                            : eng.concat_cols(r_col, u_col);
    auto pre = eng.add_row_broadcast(
        eng.add(eng.matmul(in, cell.w_in), eng.matmul(h, cell.w_rec)), cell.bias);
    auto gate_i = eng.sigmoid(eng.slice_cols(pre, 0, hidden));
    auto gate_f = eng.sigmoid(eng.slice_cols(pre, hidden, hidden));
    auto cand = eng.tanh(eng.slice_cols(pre, 2 * hidden, hidden));
    auto gate_o = eng.sigmoid(eng.slice_cols(pre, 3 * hidden, hidden));
    c = eng.add(eng.mul(gate_f, c), eng.mul(gate_i, cand));
    h = eng.mul(gate_o, eng.tanh(c));

    auto tg = eng.softsign(eng.matmul(c, cell.out_map));  // B x 2
    auto theta = eng.slice_cols(tg, 0, 1);
    auto gamma = eng.slice_cols(tg, 1, 1);
    if (opt.clamp_theta) theta = eng.relu(theta);

    auto upd = eng.sub(x, eng.scale_rows(v, gamma));
    x = eng.soft_threshold(upd, theta, opt.schedule.exempt_count(k, n));
    run.iterates.push_back(x);
    run.thetas.push_back(theta);
    run.gammas.push_back(gamma);
  }
  run.x_final = x;
  return run;
}

// Batch-mean squared l2 reconstruction error as a tape scalar.
template <class E>
typename E::Value mse_loss_value(E& eng, const typename E::Value& x,
                                 const typename E::Value& x_star) {
  auto diff = eng.sub(x, x_star);
  const double b = static_cast<double>(eng.value(x).rows());
  return eng.scale(eng.sum_all(eng.mul(diff, diff)), 1.0 / b);
}

}  // namespace cslab
