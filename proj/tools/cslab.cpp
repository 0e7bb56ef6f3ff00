#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cslab/config.hpp"
#include "cslab/container.hpp"
#include "cslab/csvio.hpp"
#include "cslab/dictionary.hpp"
#include "cslab/errors.hpp"
#include "cslab/problems.hpp"
#include "cslab/rng.hpp"
#include "cslab/solvers.hpp"
#include "cslab/training.hpp"

namespace fs = std::filesystem;
using namespace cslab;

namespace {

struct CliOptions {
  std::string config_path;
  std::string profile = "desk";
  std::string out = "out";
  std::int64_t seed = -1;  // negative: keep the config's seeds
  bool force = false;
};

ExperimentConfig load_cfg(const CliOptions& o) {
  ExperimentConfig cfg = o.config_path.empty()
                             ? profile_config(o.profile)
                             : load_config_file(o.config_path, o.profile);
  if (o.seed >= 0) {
    cfg.train.seed = static_cast<std::uint64_t>(o.seed);
    cfg.sweep.seeds = {static_cast<std::uint64_t>(o.seed)};
  }
  cfg.validate();
  return cfg;
}

ProblemEnsemble make_ensemble(const ExperimentConfig& cfg) {
  return ProblemEnsemble::create(cfg.ensemble.m, cfg.ensemble.n, cfg.ensemble.s,
                                 cfg.ensemble.snr_db, cfg.ensemble.seed);
}

std::string dataset_path(const std::string& out) { return (fs::path(out) / "dataset.csl").string(); }
std::string dictionary_path(const std::string& out) {
  return (fs::path(out) / "dictionary.csl").string();
}
std::string checkpoint_path(const std::string& out, const std::string& tag) {
  return (fs::path(out) / ("checkpoint_" + tag + ".csl")).string();
}

bool dataset_matches(const std::string& path, const ExperimentConfig& cfg) {
  const Container c = load_container(path);
  return c.kind == "dataset" && c.meta.at("m").get<std::size_t>() == cfg.ensemble.m &&
         c.meta.at("n").get<std::size_t>() == cfg.ensemble.n &&
         c.meta.at("s").get<double>() == cfg.ensemble.s &&
         !c.meta.at("snr_db").is_null() &&
         c.meta.at("snr_db").get<double>() == cfg.ensemble.snr_db &&
         c.meta.at("ensemble_seed").get<std::uint64_t>() == cfg.ensemble.seed &&
         c.meta.at("data_seed").get<std::uint64_t>() == cfg.ensemble.test_seed &&
         c.meta.at("size").get<std::size_t>() == cfg.ensemble.test_size;
}

Batch require_dataset(const ExperimentConfig& cfg, const ProblemEnsemble& ens,
                      const std::string& out) {
  const std::string path = dataset_path(out);
  if (!fs::exists(path))
    throw ConfigError("no dataset at " + path + "; run gen-data first");
  Batch b = load_test_set(path, ens);
  if (b.size() != cfg.ensemble.test_size)
    throw ConfigError("dataset at " + path + " has " + std::to_string(b.size()) +
                      " samples, config expects " + std::to_string(cfg.ensemble.test_size) +
                      "; regenerate with gen-data --force");
  return b;
}

AnalyticDictionary require_dictionary(const ProblemEnsemble& ens, const std::string& out) {
  const std::string path = dictionary_path(out);
  if (!fs::exists(path))
    throw ConfigError("no dictionary at " + path + "; run compute-dict first");
  return load_dictionary(path, ens.phi);
}

void write_table(const std::string& out, const std::string& stem, const CsvTable& t,
                 const ExperimentConfig& cfg, nlohmann::json sidecar) {
  const fs::path base = fs::path(out) / stem;
  write_csv(base.string() + ".csv", t, cfg.hash());
  sidecar["config"] = cfg.hash();
  sidecar["csv"] = stem + ".csv";
  write_json(base.string() + ".json", sidecar);
}

nlohmann::json axis_sidecar(const std::string& title, const std::string& x,
                            const std::vector<std::string>& y) {
  nlohmann::json j;
  j["title"] = title;
  j["x"] = x;
  j["y"] = y;
  return j;
}

// ---- commands ---------------------------------------------------------------

int cmd_gen_data(const CliOptions& o) {
  const auto cfg = load_cfg(o);
  fs::create_directories(o.out);
  const auto ens = make_ensemble(cfg);
  const std::string path = dataset_path(o.out);

  if (fs::exists(path) && !o.force) {
    if (dataset_matches(path, cfg)) {
      std::printf("dataset up to date at %s\n", path.c_str());
      return 0;
    }
    throw ConfigError("dataset at " + path +
                      " was generated under different settings; pass --force to overwrite");
  }
  if (fs::exists(path)) fs::remove(path);
  const Batch b = fixed_test_set(ens, cfg.ensemble.test_size, cfg.ensemble.test_seed, path);
  std::printf("wrote %s: %zu samples, m=%zu n=%zu s=%g snr=%gdB\n", path.c_str(), b.size(),
              cfg.ensemble.m, cfg.ensemble.n, cfg.ensemble.s, cfg.ensemble.snr_db);
  return 0;
}

int cmd_compute_dict(const CliOptions& o) {
  const auto cfg = load_cfg(o);
  const auto ens = make_ensemble(cfg);
  require_dataset(cfg, ens, o.out);
  const std::string path = dictionary_path(o.out);

  if (fs::exists(path) && !o.force) {
    const auto dict = load_dictionary(path, ens.phi);
    std::printf("dictionary up to date at %s (coherence %.6f)\n", path.c_str(),
                dict.achieved_coherence);
    return 0;
  }
  const auto dict =
      compute_dictionary(ens.phi, cfg.dictionary.step, cfg.dictionary.max_iters);
  save_dictionary(path, dict, ens.phi);
  std::printf("wrote %s: coherence %.6f (welch bound %.6f), %zu iterations\n", path.c_str(),
              dict.achieved_coherence, welch_bound(cfg.ensemble.m, cfg.ensemble.n),
              dict.iterations_run);
  std::printf("admissible sparsity for this coherence: %d\n",
              max_admissible_sparsity(dict.achieved_coherence));
  return 0;
}

struct RunArtifacts {
  ProblemEnsemble ens;
  Batch test;
  AnalyticDictionary dict;
};

RunArtifacts load_artifacts(const ExperimentConfig& cfg, const std::string& out) {
  RunArtifacts a{make_ensemble(cfg), {}, {}};
  a.test = require_dataset(cfg, a.ens, out);
  a.dict = require_dictionary(a.ens, out);
  return a;
}

double train_one(const ExperimentConfig& cfg, const RunArtifacts& art, const std::string& out,
                 FeatureSet features, const std::string& tag, bool force) {
  TrainConfig tc = cfg.train_config();
  tc.features = features;
  const std::string ck_path = checkpoint_path(out, tag);
  if (fs::exists(ck_path) && !force)
    throw ConfigError("checkpoint " + ck_path + " exists; pass --force to retrain");

  const std::string abort_path = (fs::path(out) / ("abort_" + tag + ".csl")).string();
  const TrainResult res = train(tc, art.ens, art.dict.w, art.test, nullptr, abort_path);
  save_checkpoint(ck_path, {res.model, res.adam, res.epochs_done, tc.seed, cfg.hash()});
  write_table(out, "train_curve_" + tag, res.curve, cfg,
              axis_sidecar("learning curve " + tag, "epoch", {"train_loss", "test_nmse_db"}));
  std::printf("trained %s: %zu epochs, final nmse %.3f dB -> %s\n", tag.c_str(),
              res.epochs_done, res.final_nmse_db, ck_path.c_str());
  return res.final_nmse_db;
}

int cmd_train(const CliOptions& o) {
  const auto cfg = load_cfg(o);
  const auto art = load_artifacts(cfg, o.out);

  if (cfg.train.ablation) {
    if (cfg.model.kind != ModelKind::na_alista)
      throw ConfigError("train.ablation applies to the na-alista model only");
    CsvTable table;
    table.columns = {"features", "nmse_db"};
    for (auto f : {FeatureSet::residual, FeatureSet::update, FeatureSet::both}) {
      const std::string tag = to_string(cfg.model.kind) + "_" + to_string(f);
      const double db = train_one(cfg, art, o.out, f, tag, o.force);
      table.rows.push_back({to_string(f), fmt_double(db)});
    }
    write_table(o.out, "ablation", table, cfg,
                axis_sidecar("gate input ablation", "features", {"nmse_db"}));
    return 0;
  }

  train_one(cfg, art, o.out, cfg.model.features, to_string(cfg.model.kind), o.force);
  return 0;
}

double classical_nmse(ModelKind kind, const RunArtifacts& art, double lambda,
                      std::size_t k_steps) {
  switch (kind) {
    case ModelKind::zero:
      return nmse(Tensor::zeros(art.test.size(), art.test.x_star.cols()), art.test.x_star);
    case ModelKind::ista:
      return nmse(ista_run(art.ens.phi, art.test.y, lambda, k_steps).x_final, art.test.x_star);
    case ModelKind::fista:
      return nmse(fista_run(art.ens.phi, art.test.y, lambda, k_steps).x_final,
                  art.test.x_star);
    default:
      throw ConfigError(to_string(kind) + " needs a trained checkpoint");
  }
}

int cmd_eval(const CliOptions& o) {
  const auto cfg = load_cfg(o);
  const auto art = load_artifacts(cfg, o.out);

  CsvTable table;
  table.columns = {"model", "features", "iterations", "origin", "nmse_db"};
  for (auto kind : cfg.eval.baselines) {
    const double db = classical_nmse(kind, art, cfg.eval.lambda, cfg.model.k_steps);
    table.rows.push_back({to_string(kind), "", std::to_string(cfg.model.k_steps), "baseline",
                          fmt_double(db)});
    std::printf("%-12s %8.3f dB\n", to_string(kind).c_str(), db);
  }

  std::vector<std::string> tags = {to_string(cfg.model.kind)};
  for (auto f : {FeatureSet::residual, FeatureSet::update, FeatureSet::both})
    tags.push_back(to_string(ModelKind::na_alista) + "_" + to_string(f));
  for (const auto& tag : tags) {
    const std::string path = checkpoint_path(o.out, tag);
    if (!fs::exists(path)) continue;
    const Checkpoint ck = load_checkpoint(path);
    const double db =
        nmse(ck.model.infer(art.ens.phi, art.dict.w, art.test.y).x_final, art.test.x_star);
    table.rows.push_back({to_string(ck.model.kind), to_string(ck.model.features),
                          std::to_string(ck.model.k_steps), "checkpoint", fmt_double(db)});
    std::printf("%-12s %8.3f dB  (%s)\n", tag.c_str(), db, path.c_str());
  }
  if (table.rows.empty()) throw ConfigError("nothing to evaluate: no baselines, no checkpoints");

  write_table(o.out, "eval", table, cfg,
              axis_sidecar("test-set reconstruction error", "model", {"nmse_db"}));
  return 0;
}

ExperimentConfig sweep_point_config(const ExperimentConfig& base, SweepAxis axis,
                                    std::size_t value) {
  ExperimentConfig c = base;
  switch (axis) {
    case SweepAxis::K: c.model.k_steps = value; break;
    case SweepAxis::N: c.ensemble.n = value; break;
    case SweepAxis::H: c.model.hidden = value; break;
    case SweepAxis::none: break;
  }
  c.diagnose.pair_i = {1};
  c.diagnose.pair_j = {1};
  c.validate();
  return c;
}

int cmd_sweep(const CliOptions& o) {
  const auto cfg = load_cfg(o);
  const SweepAxis axis = cfg.sweep.axis;
  const std::vector<std::size_t> values =
      axis == SweepAxis::none ? std::vector<std::size_t>{cfg.model.k_steps} : cfg.sweep.values;
  const std::string axis_name = axis == SweepAxis::none ? "K" : to_string(axis);

  CsvTable table;
  table.columns = {axis_name, "model", "seed", "nmse_db"};
  std::vector<std::pair<std::string, std::string>> failures;

  for (const std::size_t value : values) {
    const std::string point_name = axis_name + "=" + std::to_string(value);
    try {
      const ExperimentConfig pc = sweep_point_config(cfg, axis, value);
      const fs::path pdir = fs::path(o.out) / "sweep" / point_name;
      fs::create_directories(pdir);

      const auto ens = make_ensemble(pc);
      const Batch test = fixed_test_set(ens, pc.ensemble.test_size, pc.ensemble.test_seed,
                                        dataset_path(pdir.string()));
      AnalyticDictionary dict;
      const std::string dpath = dictionary_path(pdir.string());
      if (fs::exists(dpath)) {
        dict = load_dictionary(dpath, ens.phi);
      } else {
        dict = compute_dictionary(ens.phi, pc.dictionary.step, pc.dictionary.max_iters);
        save_dictionary(dpath, dict, ens.phi);
      }
      const RunArtifacts art{ens, test, dict};
      if (axis == SweepAxis::H)
        std::printf("%s: cell cost ratio H^2/(MN) = %g\n", point_name.c_str(),
                    static_cast<double>(value * value) /
                        static_cast<double>(pc.ensemble.m * pc.ensemble.n));

      for (const ModelKind kind : pc.sweep.models) {
        for (const std::uint64_t seed : pc.sweep.seeds) {
          const std::string run_name = point_name + "/" + to_string(kind) + "/seed=" +
                                       std::to_string(seed);
          try {
            double db = 0.0;
            if (kind == ModelKind::zero || kind == ModelKind::ista ||
                kind == ModelKind::fista) {
              db = classical_nmse(kind, art, pc.eval.lambda, pc.model.k_steps);
            } else {
              ExperimentConfig rc = pc;
              rc.model.kind = kind;
              rc.train.seed = seed;
              const fs::path rdir = pdir / ("seed=" + std::to_string(seed));
              fs::create_directories(rdir);
              db = train_one(rc, art, rdir.string(), rc.model.features, to_string(kind),
                             o.force);
            }
            table.rows.push_back({std::to_string(value), to_string(kind),
                                  std::to_string(seed), fmt_double(db)});
          } catch (const std::exception& e) {
            failures.emplace_back(run_name, e.what());
          }
        }
      }
    } catch (const std::exception& e) {
      failures.emplace_back(point_name, e.what());
    }
  }

  auto sidecar = axis_sidecar("nmse over " + axis_name, axis_name, {"nmse_db"});
  sidecar["seeds"] = cfg.sweep.seeds;
  auto fail_json = nlohmann::json::array();
  for (const auto& [where, what] : failures) fail_json.push_back({{"run", where}, {"error", what}});
  sidecar["failures"] = fail_json;
  write_table(o.out, "sweep", table, cfg, sidecar);

  std::printf("sweep: %zu rows, %zu failures -> %s\n", table.rows.size(), failures.size(),
              (fs::path(o.out) / "sweep.csv").string().c_str());
  for (const auto& [where, what] : failures)
    std::fprintf(stderr, "failed %s: %s\n", where.c_str(), what.c_str());
  return failures.empty() ? 0 : 2;
}

int cmd_diagnose(const CliOptions& o) {
  const auto cfg = load_cfg(o);
  const auto art = load_artifacts(cfg, o.out);

  LearnedModel model;
  std::string origin;
  const std::string ck_path = checkpoint_path(o.out, to_string(cfg.model.kind));
  if (fs::exists(ck_path)) {
    const Checkpoint ck = load_checkpoint(ck_path);
    if (ck.config_hash != cfg.hash())
      throw ConfigError("checkpoint " + ck_path + " was trained under config " +
                        ck.config_hash + ", current config is " + cfg.hash());
    model = ck.model;
    origin = "checkpoint";
  } else {
    model = LearnedModel::create(cfg.train_config());
    origin = "untrained";
  }

  // observable-proxy correlations at the ensemble sparsity and at full density
  const auto rep = correlation_l1_proxies(art.ens, art.dict.w, cfg.diagnose.proxy_samples,
                                          mix_seed(cfg.ensemble.seed, 77));
  CsvTable corr;
  corr.columns = {"sparsity", "proxy", "pearson", "samples"};
  const std::string s_str = fmt_double(cfg.ensemble.s), n_str = std::to_string(cfg.ensemble.n);
  corr.rows = {{s_str, "r", fmt_double(rep.sparse_r), std::to_string(rep.samples_used)},
               {s_str, "u", fmt_double(rep.sparse_u), std::to_string(rep.samples_used)},
               {n_str, "r", fmt_double(rep.dense_r), std::to_string(cfg.diagnose.proxy_samples)},
               {n_str, "u", fmt_double(rep.dense_u), std::to_string(cfg.diagnose.proxy_samples)}};
  write_table(o.out, "correlations", corr,
              cfg, axis_sidecar("l1 norm vs observable proxies", "sparsity", {"pearson"}));

  // per-iteration trace statistics on the fixed test set
  TraceOptions topt;
  topt.x_star = &art.test.x_star;
  const IterationTrace trace = model.infer(art.ens.phi, art.dict.w, art.test.y, topt);
  auto iter_sidecar = axis_sidecar("per-iteration trace statistics", "k",
                                   {"nmse_db", "theta_mean", "theta_std", "gamma_mean",
                                    "gamma_std"});
  iter_sidecar["model"] = to_string(model.kind);
  iter_sidecar["origin"] = origin;
  write_table(o.out, "iterations", trace_table(trace), cfg, iter_sidecar);

  // threshold assumption: theta/gamma against mu * l1 error
  const double mu = generalized_coherence(art.dict.w, art.ens.phi);
  const AssumptionSeries as = assumption_ratio(trace, mu);
  CsvTable ratio;
  ratio.columns = {"k", "ratio_mean", "ratio_std", "mu_err_mean", "mu_err_std"};
  for (std::size_t k = 0; k < as.ratio_mean.size(); ++k)
    ratio.rows.push_back({std::to_string(k + 1), fmt_double(as.ratio_mean[k]),
                          fmt_double(as.ratio_std[k]), fmt_double(mu * as.err_mean[k]),
                          fmt_double(mu * as.err_std[k])});
  auto ratio_sidecar =
      axis_sidecar("threshold-to-step ratio vs scaled l1 error", "k",
                   {"ratio_mean", "mu_err_mean"});
  ratio_sidecar["coherence"] = mu;
  write_table(o.out, "assumption_ratio", ratio, cfg, ratio_sidecar);

  // correlation between picked update norms and later errors
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < cfg.diagnose.pair_i.size(); ++i)
    pairs.emplace_back(cfg.diagnose.pair_i[i], cfg.diagnose.pair_j[i]);
  const auto pcs =
      update_error_correlation(model, art.ens.phi, art.dict.w, art.test, pairs);
  CsvTable pc_table;
  pc_table.columns = {"i", "j", "pearson"};
  for (const auto& p : pcs)
    pc_table.rows.push_back({std::to_string(p.i), std::to_string(p.j), fmt_double(p.corr)});
  write_table(o.out, "pair_correlations", pc_table, cfg,
              axis_sidecar("update norm u^(i) vs l1 error at iteration j", "i", {"pearson"}));

  std::printf("diagnose (%s %s): proxies r %.3f/%.3f u %.3f/%.3f, coherence %.4f\n",
              origin.c_str(), to_string(model.kind).c_str(), rep.sparse_r, rep.dense_r,
              rep.sparse_u, rep.dense_u, mu);
  return 0;
}

void add_common(CLI::App* sub, CliOptions& o) {
  sub->add_option("--config", o.config_path, "TOML experiment configuration");
  sub->add_option("--profile", o.profile, "base profile: desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  sub->add_option("--out", o.out, "output directory (default: out)");
  sub->add_option("--seed", o.seed, "override the training/run seed");
  sub->add_flag("--force", o.force, "overwrite existing outputs");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"compressed-sensing solver unrolling lab"};
  app.require_subcommand(1);

  CliOptions o;
  int (*run)(const CliOptions&) = nullptr;
  const std::vector<std::pair<const char*, int (*)(const CliOptions&)>> cmds = {
      {"gen-data", cmd_gen_data},   {"compute-dict", cmd_compute_dict},
      {"train", cmd_train},         {"eval", cmd_eval},
      {"sweep", cmd_sweep},         {"diagnose", cmd_diagnose}};
  const std::vector<const char*> descs = {
      "generate the measurement matrix and fixed test set",
      "minimize generalized coherence for the analytic weight matrix",
      "train the configured model (or the input ablation set)",
      "evaluate baselines and checkpoints on the fixed test set",
      "train and evaluate across the configured sweep axis",
      "emit correlation, trace and assumption diagnostics"};
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    auto* sub = app.add_subcommand(cmds[i].first, descs[i]);
    add_common(sub, o);
    auto fn = cmds[i].second;
    sub->callback([&run, fn] { run = fn; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    return run(o);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
