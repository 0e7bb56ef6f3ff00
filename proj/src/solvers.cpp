#include "cslab/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "cslab/engine.hpp"
#include "cslab/errors.hpp"

namespace cslab {

namespace {

// Fixed shard width for the learned forwards: bounds memory and keeps
// results independent of how callers batch their data.
constexpr std::size_t kShard = 256;

void fill_col(Tensor& dst, std::size_t row0, const Tensor& src, std::size_t count) {
  if (src.size() == 1) {
    for (std::size_t i = 0; i < count; ++i) dst(row0 + i, 0) = src[0];
  } else {
    for (std::size_t i = 0; i < count; ++i) dst(row0 + i, 0) = src(i, 0);
  }
}

void fill_block(Tensor& dst, std::size_t row0, const Tensor& src) {
  for (std::size_t i = 0; i < src.rows(); ++i)
    for (std::size_t j = 0; j < src.cols(); ++j) dst(row0 + i, j) = src(i, j);
}

void init_trace(IterationTrace& t, std::size_t k_steps, std::size_t b, std::size_t n,
                bool keep_x, bool with_err, bool with_u, bool with_obj) {
  t.rows.resize(k_steps);
  for (std::size_t k = 0; k < k_steps; ++k) {
    TraceRow& row = t.rows[k];
    row.k = k + 1;
    if (keep_x) row.x = Tensor::zeros(b, n);
    row.r = Tensor::zeros(b, 1);
    if (with_u) row.u = Tensor::zeros(b, 1);
    row.theta = Tensor::zeros(b, 1);
    row.gamma = Tensor::zeros(b, 1);
    row.support_size.assign(b, 0);
    if (with_err) {
      row.err_l1.assign(b, 0.0);
      row.err_l2.assign(b, 0.0);
    }
    if (with_obj) row.objective.assign(b, 0.0);
  }
  t.x_final = Tensor::zeros(b, n);
}

void record_target_norms(IterationTrace& t, const Tensor& xs) {
  const std::size_t b = xs.rows(), n = xs.cols();
  t.x_star_l1.assign(b, 0.0);
  t.x_star_sq.assign(b, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    double l1 = 0.0, sq = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      l1 += std::abs(xs(i, j));
      sq += xs(i, j) * xs(i, j);
    }
    t.x_star_l1[i] = l1;
    t.x_star_sq[i] = sq;
  }
}

// Support counts and errors for a shard of an iterate; row0 offsets into the
// full-batch columns.
void record_sample_stats(TraceRow& row, std::size_t row0, const Tensor& x, const Tensor* xs) {
  const std::size_t b = x.rows(), n = x.cols();
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t nnz = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (x(i, j) != 0.0) ++nnz;
    row.support_size[row0 + i] = nnz;
    if (xs) {
      double l1 = 0.0, sq = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double d = x(i, j) - (*xs)(i, j);
        l1 += std::abs(d);
        sq += d * d;
      }
      row.err_l1[row0 + i] = l1;
      row.err_l2[row0 + i] = std::sqrt(sq);
    }
  }
}

// Shared shard-and-merge driver for the unrolled forwards. `fwd` runs one
// shard; when `theta_per_layer` is given its scalars are recorded instead of
// the (possibly componentwise) thresholds the run applied.
IterationTrace assemble_learned(const Tensor& y, std::size_t n, std::size_t k_steps,
                                const TraceOptions& opt,
                                const std::function<UnrolledRun<EagerEngine>(const Tensor&)>& fwd,
                                const std::vector<double>* theta_per_layer) {
  const std::size_t b = y.rows();
  if (opt.x_star && (opt.x_star->rows() != b || opt.x_star->cols() != n))
    throw ShapeError("x* shape does not match the run");
  IterationTrace t;
  init_trace(t, k_steps, b, n, opt.keep_iterates, opt.x_star != nullptr, true, false);
  if (opt.x_star) record_target_norms(t, *opt.x_star);

  for (std::size_t row0 = 0; row0 < b; row0 += kShard) {
    const std::size_t count = std::min(kShard, b - row0);
    const Tensor y_shard = slice_rows(y, row0, count);
    Tensor xs_shard;
    const Tensor* xsp = nullptr;
    if (opt.x_star) {
      xs_shard = slice_rows(*opt.x_star, row0, count);
      xsp = &xs_shard;
    }
    UnrolledRun<EagerEngine> run = fwd(y_shard);
    for (std::size_t k = 0; k < k_steps; ++k) {
      TraceRow& row = t.rows[k];
      fill_col(row.r, row0, run.residual_l1[k], count);
      fill_col(row.u, row0, run.update_l1[k], count);
      if (theta_per_layer) {
        for (std::size_t i = 0; i < count; ++i) row.theta(row0 + i, 0) = (*theta_per_layer)[k];
      } else {
        fill_col(row.theta, row0, run.thetas[k], count);
      }
      fill_col(row.gamma, row0, run.gammas[k], count);
      if (opt.keep_iterates) fill_block(row.x, row0, run.iterates[k]);
      record_sample_stats(row, row0, run.iterates[k], xsp);
    }
    fill_block(t.x_final, row0, run.x_final);
  }
  return t;
}

void check_learned_shapes(const Tensor& phi, const Tensor& w, const Tensor& y,
                          std::size_t k_steps, const SupportSelectionSchedule& ss) {
  if (!w.same_shape(phi)) throw ShapeError("weight matrix must match the measurement matrix shape");
  if (y.cols() != phi.rows()) throw ShapeError("observation width must equal measurement count");
  if (ss.layers() != k_steps) throw ShapeError("support selection schedule length must equal K");
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v, double mean) {
  if (v.empty()) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

}  // namespace

IterationTrace ista_run(const Tensor& phi, const Tensor& y, double lambda,
                        std::size_t k_steps, const TraceOptions& opt) {
  if (lambda <= 0.0) throw ConfigError("lasso weight must be positive");
  if (k_steps < 1) throw ConfigError("iteration count must be positive");
  const std::size_t m = phi.rows(), n = phi.cols(), b = y.rows();
  if (y.cols() != m) throw ShapeError("observation width must equal measurement count");
  const Tensor phi_t = transpose(phi);
  const double big_l = largest_eigenvalue(matmul(phi, phi_t));
  const double step = 1.0 / big_l;
  const double thr = lambda / big_l;

  IterationTrace t;
  init_trace(t, k_steps, b, n, opt.keep_iterates, opt.x_star != nullptr, false, true);
  if (opt.x_star) record_target_norms(t, *opt.x_star);

  Tensor x = Tensor::zeros(b, n);
  Tensor res = scale(y, -1.0);  // Phi x - y at x = 0
  for (std::size_t k = 0; k < k_steps; ++k) {
    TraceRow& row = t.rows[k];
    fill_col(row.r, 0, row_l1(res), b);
    x = soft_threshold(sub(x, scale(matmul(res, phi), step)), thr);
    res = sub(matmul(x, phi_t), y);
    for (std::size_t i = 0; i < b; ++i) {
      double sq = 0.0;
      for (std::size_t j = 0; j < m; ++j) sq += res(i, j) * res(i, j);
      double l1 = 0.0;
      for (std::size_t j = 0; j < n; ++j) l1 += std::abs(x(i, j));
      row.objective[i] = 0.5 * sq + lambda * l1;
      row.theta(i, 0) = thr;
      row.gamma(i, 0) = step;
    }
    if (opt.keep_iterates) row.x = x;
    record_sample_stats(row, 0, x, opt.x_star);
  }
  t.x_final = std::move(x);
  return t;
}

IterationTrace fista_run(const Tensor& phi, const Tensor& y, double lambda,
                         std::size_t k_steps, const TraceOptions& opt) {
  if (lambda <= 0.0) throw ConfigError("lasso weight must be positive");
  if (k_steps < 1) throw ConfigError("iteration count must be positive");
  const std::size_t m = phi.rows(), n = phi.cols(), b = y.rows();
  if (y.cols() != m) throw ShapeError("observation width must equal measurement count");
  const Tensor phi_t = transpose(phi);
  const double big_l = largest_eigenvalue(matmul(phi, phi_t));
  const double step = 1.0 / big_l;
  const double thr = lambda / big_l;

  IterationTrace t;
  init_trace(t, k_steps, b, n, opt.keep_iterates, opt.x_star != nullptr, false, true);
  if (opt.x_star) record_target_norms(t, *opt.x_star);

  Tensor x = Tensor::zeros(b, n);
  Tensor z = x;
  Tensor res_x = scale(y, -1.0);  // residual at the iterate (not the extrapolation)
  double t_mom = 1.0;
  for (std::size_t k = 0; k < k_steps; ++k) {
    TraceRow& row = t.rows[k];
    fill_col(row.r, 0, row_l1(res_x), b);
    const Tensor res_z = sub(matmul(z, phi_t), y);
    Tensor x_new = soft_threshold(sub(z, scale(matmul(res_z, phi), step)), thr);
    const double t_next = (1.0 + std::sqrt(1.0 + 4.0 * t_mom * t_mom)) / 2.0;
    const double beta = (t_mom - 1.0) / t_next;
    z = add(x_new, scale(sub(x_new, x), beta));
    x = std::move(x_new);
    t_mom = t_next;
    res_x = sub(matmul(x, phi_t), y);
    for (std::size_t i = 0; i < b; ++i) {
      double sq = 0.0;
      for (std::size_t j = 0; j < m; ++j) sq += res_x(i, j) * res_x(i, j);
      double l1 = 0.0;
      for (std::size_t j = 0; j < n; ++j) l1 += std::abs(x(i, j));
      row.objective[i] = 0.5 * sq + lambda * l1;
      row.theta(i, 0) = thr;
      row.gamma(i, 0) = step;
    }
    if (opt.keep_iterates) row.x = x;
    record_sample_stats(row, 0, x, opt.x_star);
  }
  t.x_final = std::move(x);
  return t;
}

IterationTrace alista_forward(const Tensor& phi, const Tensor& w, const AlistaParams& params,
                              const Tensor& y, const SupportSelectionSchedule& ss,
                              const TraceOptions& opt) {
  const std::size_t k_steps = params.layers();
  check_learned_shapes(phi, w, y, k_steps, ss);
  const std::size_t n = phi.cols();
  const Tensor phi_t = transpose(phi);
  auto fwd = [&](const Tensor& y_shard) {
    EagerEngine e;
    std::vector<Tensor> th, ga;
    for (std::size_t k = 0; k < k_steps; ++k) {
      th.push_back(Tensor::scalar(params.theta[k]));
      ga.push_back(Tensor::scalar(params.gamma[k]));
    }
    UnrollOptions uo;
    uo.schedule = ss;
    uo.compute_ru = true;
    return alista_unroll(e, phi_t, w, th, ga, y_shard, n, uo);
  };
  return assemble_learned(y, n, k_steps, opt, fwd, nullptr);
}

IterationTrace alista_at_forward(const Tensor& phi, const Tensor& w, const AlistaParams& params,
                                 double epsilon, const Tensor& y,
                                 const SupportSelectionSchedule& ss, const TraceOptions& opt) {
  if (epsilon <= 0.0) throw ConfigError("reweighting epsilon must be positive");
  const std::size_t k_steps = params.layers();
  check_learned_shapes(phi, w, y, k_steps, ss);
  const std::size_t n = phi.cols();
  const Tensor phi_t = transpose(phi);
  auto fwd = [&](const Tensor& y_shard) {
    EagerEngine e;
    std::vector<Tensor> th, ga;
    for (std::size_t k = 0; k < k_steps; ++k) {
      th.push_back(Tensor::scalar(params.theta[k]));
      ga.push_back(Tensor::scalar(params.gamma[k]));
    }
    UnrollOptions uo;
    uo.schedule = ss;
    uo.compute_ru = true;
    return alista_unroll(e, phi_t, w, th, ga, y_shard, n, uo, epsilon);
  };
  return assemble_learned(y, n, k_steps, opt, fwd, &params.theta);
}

IterationTrace na_alista_forward(const Tensor& phi, const Tensor& w,
                                 const RecurrentCellParams& cell, FeatureSet feats,
                                 std::size_t k_steps, const Tensor& y,
                                 const SupportSelectionSchedule& ss, const TraceOptions& opt) {
  check_learned_shapes(phi, w, y, k_steps, ss);
  if (cell.input_dim != feature_dim(feats))
    throw ShapeError("cell input width does not match the feature set");
  const std::size_t n = phi.cols();
  const Tensor phi_t = transpose(phi);
  auto fwd = [&](const Tensor& y_shard) {
    EagerEngine e;
    CellValues<EagerEngine> cv{cell.w_in, cell.w_rec, cell.bias,
                               cell.c0,   cell.h0,    cell.out_map, cell.hidden};
    UnrollOptions uo;
    uo.schedule = ss;
    uo.compute_ru = true;
    return na_alista_unroll(e, phi_t, w, cv, feats, k_steps, y_shard, n, uo);
  };
  return assemble_learned(y, n, k_steps, opt, fwd, nullptr);
}

std::vector<bool> verify_lemma1(const IterationTrace& t, const Tensor& x_star) {
  std::vector<bool> ok(t.rows.size(), true);
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const Tensor& x = t.rows[k].x;
    if (x.empty()) throw NumericsError("support check requires kept iterates");
    if (!x.same_shape(x_star)) throw ShapeError("x* shape does not match the trace");
    for (std::size_t i = 0; i < x.size() && ok[k]; ++i)
      if (x[i] != 0.0 && x_star[i] == 0.0) ok[k] = false;
  }
  return ok;
}

BoundReport verify_error_bound(const IterationTrace& t, const Tensor& x_star, double mu,
                               std::size_t s) {
  const std::size_t b = x_star.rows(), n = x_star.cols();
  std::vector<double> prev(b, 0.0), cur(b, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    double l1 = 0.0;
    for (std::size_t j = 0; j < n; ++j) l1 += std::abs(x_star(i, j));
    prev[i] = l1;  // error of x^(0) = 0
  }
  BoundReport rep;
  for (const TraceRow& row : t.rows) {
    if (row.x.empty()) throw NumericsError("bound check requires kept iterates");
    if (!row.x.same_shape(x_star)) throw ShapeError("x* shape does not match the trace");
    double min_slack = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < b; ++i) {
      double e1 = 0.0, sq = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double d = row.x(i, j) - x_star(i, j);
        e1 += std::abs(d);
        sq += d * d;
      }
      if (std::sqrt(sq) > e1 + 1e-12) rep.l2_le_l1 = false;
      const double th = row.theta(i, 0);
      const double ga = row.gamma(i, 0);
      const double rhs = mu * ga * (static_cast<double>(s) - 1.0) * prev[i] +
                         th * static_cast<double>(s) + std::abs(1.0 - ga) * prev[i];
      min_slack = std::min(min_slack, rhs - e1);
      cur[i] = e1;
    }
    rep.slack.push_back(min_slack);
    std::swap(prev, cur);
  }
  return rep;
}

AssumptionSeries assumption_ratio(const IterationTrace& t, double mu) {
  if (t.x_star_l1.empty()) throw NumericsError("assumption series requires errors recorded vs x*");
  const std::size_t b = t.x_star_l1.size();
  AssumptionSeries out;
  std::vector<double> ratios(b), errs(b);
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const TraceRow& row = t.rows[k];
    const std::vector<double>& prev_err = k == 0 ? t.x_star_l1 : t.rows[k - 1].err_l1;
    bool missing = false;
    for (std::size_t i = 0; i < b; ++i) {
      const double ga = row.gamma(i, 0);
      if (ga == 0.0) missing = true;
      ratios[i] = missing ? 0.0 : row.theta(i, 0) / ga;
      errs[i] = mu * prev_err[i];
    }
    const double em = mean_of(errs);
    out.err_mean.push_back(em);
    out.err_std.push_back(std_of(errs, em));
    if (missing) {
      out.ratio_mean.push_back(std::numeric_limits<double>::quiet_NaN());
      out.ratio_std.push_back(std::numeric_limits<double>::quiet_NaN());
    } else {
      const double rm = mean_of(ratios);
      out.ratio_mean.push_back(rm);
      out.ratio_std.push_back(std_of(ratios, rm));
    }
  }
  return out;
}

IterationTrace oracle_threshold_run(const Tensor& phi, const Tensor& w, double mu,
                                    const Tensor& x_star, std::span<const double> gammas,
                                    double margin) {
  if (!w.same_shape(phi)) throw ShapeError("weight matrix must match the measurement matrix shape");
  const std::size_t b = x_star.rows(), n = phi.cols();
  if (x_star.cols() != n) throw ShapeError("x* width must equal the ambient dimension");
  const std::size_t k_steps = gammas.size();
  const Tensor phi_t = transpose(phi);
  const Tensor y = matmul(x_star, phi_t);

  IterationTrace t;
  init_trace(t, k_steps, b, n, true, true, true, false);
  record_target_norms(t, x_star);

  Tensor x = Tensor::zeros(b, n);
  for (std::size_t k = 0; k < k_steps; ++k) {
    TraceRow& row = t.rows[k];
    const Tensor res = sub(matmul(x, phi_t), y);
    const Tensor v = matmul(res, w);
    Tensor theta_col = Tensor::zeros(b, 1);
    for (std::size_t i = 0; i < b; ++i) {
      double e1 = 0.0;
      for (std::size_t j = 0; j < n; ++j) e1 += std::abs(x(i, j) - x_star(i, j));
      theta_col(i, 0) = gammas[k] * mu * e1 + margin;
    }
    x = soft_threshold(sub(x, scale(v, gammas[k])), theta_col);
    fill_col(row.r, 0, row_l1(res), b);
    fill_col(row.u, 0, row_l1(v), b);
    row.theta = theta_col;
    for (std::size_t i = 0; i < b; ++i) row.gamma(i, 0) = gammas[k];
    row.x = x;
    record_sample_stats(row, 0, x, &x_star);
  }
  t.x_final = std::move(x);
  return t;
}

std::vector<double> lasso_objectives(const Tensor& phi, const Tensor& y, const Tensor& x,
                                     double lambda) {
  const Tensor res = sub(matmul(x, transpose(phi)), y);
  const std::size_t b = x.rows();
  std::vector<double> out(b, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    double sq = 0.0, l1 = 0.0;
    for (std::size_t j = 0; j < res.cols(); ++j) sq += res(i, j) * res(i, j);
    for (std::size_t j = 0; j < x.cols(); ++j) l1 += std::abs(x(i, j));
    out[i] = 0.5 * sq + lambda * l1;
  }
  return out;
}

double nmse_db_from_sums(double err_sq_sum, double sig_sq_sum) {
  if (sig_sq_sum <= 0.0) throw NumericsError("targets have zero energy; ratio undefined");
  if (err_sq_sum <= 0.0) return -150.0;
  return std::max(10.0 * std::log10(err_sq_sum / sig_sq_sum), -150.0);
}

CsvTable trace_table(const IterationTrace& t, const BoundReport* bound) {
  CsvTable tab;
  tab.columns = {"k",          "nmse_db",    "r_mean",      "u_mean",
                 "theta_mean", "theta_std",  "gamma_mean",  "gamma_std",
                 "support_mean", "err_l1_mean", "slack_min"};
  const bool have_err = !t.x_star_sq.empty();
  double sig_sq = 0.0;
  for (double v : t.x_star_sq) sig_sq += v;

  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const TraceRow& row = t.rows[k];
    const std::size_t b = row.r.rows();
    std::vector<std::string> rec;
    rec.push_back(std::to_string(row.k));

    if (have_err) {
      double err_sq = 0.0;
      for (double e : row.err_l2) err_sq += e * e;
      rec.push_back(fmt_double(nmse_db_from_sums(err_sq, sig_sq)));
    } else {
      rec.push_back("");
    }

    auto col_mean = [b](const Tensor& c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < c.size(); ++i) acc += c[i];
      return acc / static_cast<double>(b);
    };
    auto col_std = [b](const Tensor& c, double mean) {
      double acc = 0.0;
      for (std::size_t i = 0; i < c.size(); ++i) acc += (c[i] - mean) * (c[i] - mean);
      return std::sqrt(acc / static_cast<double>(b));
    };

    rec.push_back(fmt_double(col_mean(row.r)));
    rec.push_back(row.u.empty() ? "" : fmt_double(col_mean(row.u)));
    const double tm = col_mean(row.theta);
    rec.push_back(fmt_double(tm));
    rec.push_back(fmt_double(col_std(row.theta, tm)));
    const double gm = col_mean(row.gamma);
    rec.push_back(fmt_double(gm));
    rec.push_back(fmt_double(col_std(row.gamma, gm)));

    double smean = 0.0;
    for (std::size_t v : row.support_size) smean += static_cast<double>(v);
    rec.push_back(fmt_double(smean / static_cast<double>(b)));

    rec.push_back(row.err_l1.empty() ? "" : fmt_double(mean_of(row.err_l1)));
    rec.push_back(bound && k < bound->slack.size() ? fmt_double(bound->slack[k]) : "");
    tab.rows.push_back(std::move(rec));
  }
  return tab;
}

}  // namespace cslab
