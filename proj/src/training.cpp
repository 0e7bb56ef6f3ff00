#include "cslab/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "cslab/container.hpp"
#include "cslab/engine.hpp"
#include "cslab/rng.hpp"
#include "cslab/tape.hpp"

namespace cslab {

namespace {

// Stream tags on the training seed; targets/noise inside gen_batch use their
// own tags on the batch seed.
constexpr std::uint64_t kStreamInit = 10;
constexpr std::uint64_t kStreamTrainData = 11;

// Tape width for gradient accumulation. Fixed so gradients are independent
// of the configured batch size modulo the final 1/B scale.
constexpr std::size_t kTrainShard = 64;

}  // namespace

double mse_loss(const Tensor& x, const Tensor& x_star) {
  if (!x.same_shape(x_star)) throw ShapeError("mse_loss: shape mismatch");
  const Tensor diff = sub(x, x_star);
  return sum_all(mul(diff, diff)).item() / static_cast<double>(x.rows());
}

double nmse(const Tensor& x, const Tensor& x_star) {
  if (!x.same_shape(x_star)) throw ShapeError("nmse: shape mismatch");
  const Tensor diff = sub(x, x_star);
  return nmse_db_from_sums(sum_all(mul(diff, diff)).item(),
                           sum_all(mul(x_star, x_star)).item());
}

AdamState AdamState::init(const ParamSet& params) {
  AdamState st;
  for (const auto& t : params.tensors) {
    st.m.push_back(Tensor(t.shape()));
    st.v.push_back(Tensor(t.shape()));
  }
  return st;
}

void adam_step(ParamSet& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size())
    throw ShapeError("adam_step: parameter/gradient/moment count mismatch");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.tensors[i];
    const Tensor& g = grads[i];
    if (!p.same_shape(g)) throw ShapeError("adam_step: gradient shape mismatch at " + params.names[i]);
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      p[j] -= cfg.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg.eps);
    }
  }
}

void TrainConfig::validate() const {
  if (model != ModelKind::alista && model != ModelKind::alista_at &&
      model != ModelKind::na_alista)
    throw ConfigError("train: " + to_string(model) + " has no trainable parameters");
  if (epochs > 100000) throw ConfigError("train: epochs out of range");
  if (samples_per_epoch == 0) throw ConfigError("train: samples_per_epoch must be positive");
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (batch_size > samples_per_epoch)
    throw ConfigError("train: batch_size exceeds samples_per_epoch");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("train: Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("train: adam_eps must be positive");
  if (k_steps == 0) throw ConfigError("train: k_steps must be positive");
  if (model == ModelKind::na_alista && hidden == 0)
    throw ConfigError("train: hidden must be positive for the gated model");
  if (model == ModelKind::alista_at && !(at_epsilon > 0.0))
    throw ConfigError("train: at_epsilon must be positive");
  if (p_max < 0.0 || p_max > 100.0) throw ConfigError("train: p_max must lie in [0, 100]");
  if (eval_every == 0) throw ConfigError("train: eval_every must be positive");
}

LearnedModel LearnedModel::create(const TrainConfig& cfg) {
  cfg.validate();
  LearnedModel m;
  m.kind = cfg.model;
  m.features = cfg.features;
  m.k_steps = cfg.k_steps;
  m.schedule = SupportSelectionSchedule::linear(cfg.k_steps, cfg.p_max);
  switch (cfg.model) {
    case ModelKind::alista:
      m.params = pack_params(AlistaParams::init(cfg.k_steps));
      break;
    case ModelKind::alista_at:
      m.at_epsilon = cfg.at_epsilon;
      m.params = pack_params(AlistaParams::init(cfg.k_steps));
      break;
    case ModelKind::na_alista:
      m.hidden = cfg.hidden;
      m.params = pack_params(RecurrentCellParams::init(
          cfg.hidden, feature_dim(cfg.features), mix_seed(cfg.seed, kStreamInit)));
      break;
    default:
      throw ConfigError("LearnedModel: " + to_string(cfg.model) + " is not trainable");
  }
  return m;
}

IterationTrace LearnedModel::infer(const Tensor& phi, const Tensor& w, const Tensor& y,
                                   const TraceOptions& opt) const {
  switch (kind) {
    case ModelKind::alista:
      return alista_forward(phi, w, unpack_alista(params), y, schedule, opt);
    case ModelKind::alista_at:
      return alista_at_forward(phi, w, unpack_alista(params), at_epsilon, y, schedule, opt);
    case ModelKind::na_alista:
      return na_alista_forward(phi, w, unpack_cell(params, hidden, feature_dim(features)),
                               features, k_steps, y, schedule, opt);
    default:
      throw ConfigError("LearnedModel: unsupported kind");
  }
}

namespace {

// Sum (not mean) of squared errors over one shard, plus adjoints of every
// parameter tensor, on a fresh tape.
std::pair<double, std::vector<Tensor>> shard_loss_grads(const LearnedModel& model,
                                                        const Tensor& phi_t, const Tensor& w,
                                                        const Tensor& y_shard,
                                                        const Tensor& xs_shard) {
  Tape tape;
  TapeEngine eng(tape);
  const auto phi_t_id = eng.constant(phi_t);
  const auto w_id = eng.constant(w);
  const auto y_id = eng.constant(y_shard);

  std::vector<Tape::Id> leaves;
  leaves.reserve(model.params.size());
  for (const auto& t : model.params.tensors) leaves.push_back(eng.leaf(t));

  UnrollOptions uo;
  uo.schedule = model.schedule;

  Tape::Id x_final;
  if (model.kind == ModelKind::na_alista) {
    CellValues<TapeEngine> cell;
    cell.w_in = leaves[0];
    cell.w_rec = leaves[1];
    cell.bias = leaves[2];
    cell.c0 = leaves[3];
    cell.h0 = leaves[4];
    cell.out_map = leaves[5];
    cell.hidden = model.hidden;
    x_final = na_alista_unroll(eng, phi_t_id, w_id, cell, model.features, model.k_steps,
                               y_id, phi_t.rows(), uo)
                  .x_final;
  } else {
    std::vector<Tape::Id> th(model.k_steps), ga(model.k_steps);
    for (std::size_t k = 0; k < model.k_steps; ++k) {
      th[k] = eng.slice_cols(leaves[0], k, 1);
      ga[k] = eng.slice_cols(leaves[1], k, 1);
    }
    x_final = alista_unroll(eng, phi_t_id, w_id, std::span<const Tape::Id>(th),
                            std::span<const Tape::Id>(ga), y_id, phi_t.rows(), uo,
                            model.at_epsilon)
                  .x_final;
  }

  const auto diff = eng.sub(x_final, eng.constant(xs_shard));
  const auto root = eng.sum_all(eng.mul(diff, diff));
  tape.backward(root);

  std::vector<Tensor> grads;
  grads.reserve(leaves.size());
  for (auto id : leaves) grads.push_back(tape.adjoint(id));
  return {tape.value(root).item(), std::move(grads)};
}

}  // namespace

std::pair<double, std::vector<Tensor>> batch_loss_and_gradients(const LearnedModel& model,
                                                                const Tensor& phi_t,
                                                                const Tensor& w,
                                                                const Batch& batch) {
  const std::size_t b = batch.size();
  if (b == 0) throw ShapeError("batch_loss_and_gradients: empty batch");
  double loss_sum = 0.0;
  std::vector<Tensor> grads;
  for (const auto& t : model.params.tensors) grads.push_back(Tensor(t.shape()));

  for (std::size_t start = 0; start < b; start += kTrainShard) {
    const std::size_t count = std::min(kTrainShard, b - start);
    auto [s, g] = shard_loss_grads(model, phi_t, w, slice_rows(batch.y, start, count),
                                   slice_rows(batch.x_star, start, count));
    loss_sum += s;
    for (std::size_t i = 0; i < grads.size(); ++i) grads[i] = add(grads[i], g[i]);
  }

  const double inv_b = 1.0 / static_cast<double>(b);
  for (auto& g : grads) g = scale(g, inv_b);
  return {loss_sum * inv_b, std::move(grads)};
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  Container c;
  c.kind = "checkpoint";
  auto names = nlohmann::json::array();
  for (std::size_t i = 0; i < ckpt.model.params.size(); ++i) {
    const auto& name = ckpt.model.params.names[i];
    names.push_back(name);
    c.push("p_" + name, ckpt.model.params.tensors[i]);
  }
  if (ckpt.adam.m.size() != ckpt.model.params.size())
    throw ShapeError("save_checkpoint: optimizer state does not match parameters");
  for (std::size_t i = 0; i < ckpt.adam.m.size(); ++i) {
    c.push("m_" + ckpt.model.params.names[i], ckpt.adam.m[i]);
    c.push("v_" + ckpt.model.params.names[i], ckpt.adam.v[i]);
  }
  c.push("support_percent", Tensor::row(ckpt.model.schedule.percent));
  c.meta["model"] = to_string(ckpt.model.kind);
  c.meta["features"] = to_string(ckpt.model.features);
  c.meta["k_steps"] = ckpt.model.k_steps;
  c.meta["hidden"] = ckpt.model.hidden;
  c.meta["at_epsilon"] = ckpt.model.at_epsilon;
  c.meta["param_names"] = names;
  c.meta["adam_t"] = ckpt.adam.t;
  c.meta["epochs_done"] = ckpt.epochs_done;
  c.meta["seed"] = ckpt.seed;
  c.meta["config_hash"] = ckpt.config_hash;
  save_container(path, c);
}

Checkpoint load_checkpoint(const std::string& path) {
  const Container c = load_container(path);
  if (c.kind != "checkpoint")
    throw IoError("load_checkpoint: " + path + " holds a '" + c.kind + "', not a checkpoint");
  Checkpoint ck;
  ck.model.kind = model_kind_from_string(c.meta.at("model").get<std::string>());
  ck.model.features = feature_set_from_string(c.meta.at("features").get<std::string>());
  ck.model.k_steps = c.meta.at("k_steps").get<std::size_t>();
  ck.model.hidden = c.meta.at("hidden").get<std::size_t>();
  ck.model.at_epsilon = c.meta.at("at_epsilon").get<double>();
  const Tensor& sched = c.get("support_percent");
  ck.model.schedule.percent.assign(sched.data(), sched.data() + sched.size());
  for (const auto& name : c.meta.at("param_names")) {
    const std::string n = name.get<std::string>();
    ck.model.params.push(n, c.get("p_" + n));
    ck.adam.m.push_back(c.get("m_" + n));
    ck.adam.v.push_back(c.get("v_" + n));
  }
  ck.adam.t = c.meta.at("adam_t").get<std::size_t>();
  ck.epochs_done = c.meta.at("epochs_done").get<std::size_t>();
  ck.seed = c.meta.at("seed").get<std::uint64_t>();
  ck.config_hash = c.meta.at("config_hash").get<std::string>();
  return ck;
}

namespace {

void check_resume_matches(const Checkpoint& ck, const TrainConfig& cfg) {
  if (ck.model.kind != cfg.model || ck.model.k_steps != cfg.k_steps ||
      ck.model.features != cfg.features)
    throw TrainingError("resume: checkpoint model does not match the configuration");
  if (cfg.model == ModelKind::na_alista && ck.model.hidden != cfg.hidden)
    throw TrainingError("resume: checkpoint hidden size does not match the configuration");
  if (cfg.model == ModelKind::alista_at && ck.model.at_epsilon != cfg.at_epsilon)
    throw TrainingError("resume: checkpoint at_epsilon does not match the configuration");
  if (ck.epochs_done > cfg.epochs)
    throw TrainingError("resume: checkpoint already past the requested epoch count");
  if (ck.seed != cfg.seed)
    throw TrainingError("resume: checkpoint was trained with a different seed");
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const ProblemEnsemble& ens, const Tensor& w,
                  const Batch& test_set, const Checkpoint* resume,
                  const std::string& abort_checkpoint_path, std::size_t stop_after_epochs) {
  cfg.validate();
  if (w.rows() != ens.m || w.cols() != ens.n)
    throw ShapeError("train: dictionary shape does not match the ensemble");
  const std::size_t stop =
      stop_after_epochs == 0 ? cfg.epochs : std::min(stop_after_epochs, cfg.epochs);

  TrainResult res;
  std::size_t start_epoch = 0;
  if (resume) {
    check_resume_matches(*resume, cfg);
    res.model = resume->model;
    res.adam = resume->adam;
    start_epoch = resume->epochs_done;
  } else {
    res.model = LearnedModel::create(cfg);
    res.adam = AdamState::init(res.model.params);
  }

  res.curve.columns = {"epoch", "train_loss", "test_nmse_db"};
  const auto eval_now = [&]() {
    return nmse(res.model.infer(ens.phi, w, test_set.y).x_final, test_set.x_star);
  };

  res.final_nmse_db = eval_now();
  res.curve.rows.push_back(
      {std::to_string(start_epoch), "", fmt_double(res.final_nmse_db)});

  const std::size_t batches = cfg.samples_per_epoch / cfg.batch_size;
  const std::uint64_t data_seed = mix_seed(cfg.seed, kStreamTrainData);

  for (std::size_t epoch = start_epoch; epoch < stop; ++epoch) {
    const double factor = 4 * epoch >= 3 * cfg.epochs ? 0.25
                        : 2 * epoch >= cfg.epochs     ? 0.5
                                                      : 1.0;
    const AdamConfig ac{cfg.learning_rate * factor, cfg.beta1, cfg.beta2, cfg.adam_eps};

    double epoch_loss = 0.0;
    for (std::size_t bi = 0; bi < batches; ++bi) {
      const Batch b = gen_batch(ens, cfg.batch_size, mix_seed(data_seed, epoch, bi));
      auto [loss, grads] = batch_loss_and_gradients(res.model, ens.phi_t, w, b);
      if (!std::isfinite(loss)) {
        std::string where = "epoch " + std::to_string(epoch + 1) + ", batch " + std::to_string(bi);
        if (!abort_checkpoint_path.empty()) {
          save_checkpoint(abort_checkpoint_path,
                          {res.model, res.adam, epoch, cfg.seed, ""});
          where += "; state written to " + abort_checkpoint_path;
        }
        throw TrainingError("train: non-finite loss at " + where);
      }
      adam_step(res.model.params, grads, res.adam, ac);
      epoch_loss += loss;
    }
    epoch_loss /= static_cast<double>(batches);

    res.epochs_done = epoch + 1;
    const bool last = epoch + 1 == stop;
    if (last || (epoch + 1 - start_epoch) % cfg.eval_every == 0) {
      res.final_nmse_db = eval_now();
      res.curve.rows.push_back(
          {std::to_string(epoch + 1), fmt_double(epoch_loss), fmt_double(res.final_nmse_db)});
    } else {
      res.curve.rows.push_back({std::to_string(epoch + 1), fmt_double(epoch_loss), ""});
    }
  }
  res.epochs_done = std::max(start_epoch, stop);
  return res;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("pearson: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) throw NumericsError("pearson: need at least two samples");
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double cab = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cab += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va <= 0.0 || vb <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return cab / std::sqrt(va * vb);
}

namespace {

struct ProxyColumns {
  std::vector<double> l1, r, u;
};

ProxyColumns proxy_columns(const Tensor& x, const Tensor& phi_t, const Tensor& w,
                           bool drop_zero) {
  const Tensor y = matmul(x, phi_t);
  const Tensor r = row_l1(y);
  const Tensor u = row_l1(matmul(y, w));
  const Tensor l1 = row_l1(x);
  ProxyColumns out;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (drop_zero && l1[i] == 0.0) continue;
    out.l1.push_back(l1[i]);
    out.r.push_back(r[i]);
    out.u.push_back(u[i]);
  }
  return out;
}

}  // namespace

CorrelationReport correlation_l1_proxies(const ProblemEnsemble& ens, const Tensor& w,
                                         std::size_t samples, std::uint64_t seed) {
  if (samples < 2) throw ConfigError("correlation_l1_proxies: need at least two samples");
  const Tensor xs =
      gen_sparse_batch(ens.n, static_cast<double>(ens.s), samples, mix_seed(seed, 1));
  const Tensor xd =
      gen_sparse_batch(ens.n, static_cast<double>(ens.n), samples, mix_seed(seed, 2));

  const ProxyColumns sp = proxy_columns(xs, ens.phi_t, w, true);
  const ProxyColumns de = proxy_columns(xd, ens.phi_t, w, false);

  CorrelationReport rep;
  rep.samples_used = sp.l1.size();
  rep.sparse_r = pearson(sp.l1, sp.r);
  rep.sparse_u = pearson(sp.l1, sp.u);
  rep.dense_r = pearson(de.l1, de.r);
  rep.dense_u = pearson(de.l1, de.u);
  return rep;
}

std::vector<PairCorrelation> update_error_correlation(
    const LearnedModel& model, const Tensor& phi, const Tensor& w, const Batch& data,
    std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  TraceOptions opt;
  opt.x_star = &data.x_star;
  const IterationTrace trace = model.infer(phi, w, data.y, opt);

  std::vector<PairCorrelation> out;
  for (const auto& [i, j] : pairs) {
    if (i == 0 || j == 0 || i > trace.iterations() || j > trace.iterations())
      throw ConfigError("update_error_correlation: iteration pair out of range");
    const Tensor& u = trace.rows[i - 1].u;
    if (u.empty()) throw NumericsError("update_error_correlation: no u recorded");
    out.push_back({i, j, pearson(u.span(), trace.rows[j - 1].err_l1)});
  }
  return out;
}

}  // namespace cslab
