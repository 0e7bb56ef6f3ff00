#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cslab/models.hpp"
#include "cslab/training.hpp"

namespace cslab {

enum class SweepAxis { none, K, N, H };
std::string to_string(SweepAxis a);
SweepAxis sweep_axis_from_string(const std::string& s);

struct EnsembleConfig {
  std::size_t m = 50;
  std::size_t n = 200;
  double s = 8;
  double snr_db = 40.0;
  std::uint64_t seed = 1;
  std::size_t test_size = 1000;
  std::uint64_t test_seed = 1000;
};

struct ModelConfig {
  ModelKind kind = ModelKind::na_alista;
  std::size_t k_steps = 12;
  std::size_t hidden = 32;
  FeatureSet features = FeatureSet::both;
  double p_max = 1.2;
  double at_epsilon = 0.1;
};

struct TrainSection {
  std::size_t epochs = 20;
  std::size_t samples_per_epoch = 5000;
  std::size_t batch_size = 64;
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t eval_every = 1;
  std::uint64_t seed = 1;
  bool ablation = false;  // train {r}, {u}, {r,u} variants and tabulate
};

struct DictionarySection {
  std::size_t max_iters = 10000;
  double step = 0.0;  // 0: derived from the Gram spectrum
};

struct EvalSection {
  double lambda = 0.4;  // classical solvers
  std::vector<ModelKind> baselines = {ModelKind::zero, ModelKind::ista, ModelKind::fista};
};

struct SweepSection {
  SweepAxis axis = SweepAxis::none;
  std::vector<std::size_t> values;
  std::vector<ModelKind> models = {ModelKind::ista, ModelKind::fista, ModelKind::alista,
                                   ModelKind::na_alista};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
};

struct DiagnoseSection {
  std::vector<std::size_t> pair_i = {5};
  std::vector<std::size_t> pair_j = {8};
  std::size_t proxy_samples = 10000;
};

struct ExperimentConfig {
  EnsembleConfig ensemble;
  ModelConfig model;
  TrainSection train;
  DictionarySection dictionary;
  EvalSection eval;
  SweepSection sweep;
  DiagnoseSection diagnose;

  // Canonical resolved form: every field spelled out with normalized number
  // types, independent of how the input file wrote them. The hash is FNV-1a
  // of its compact dump and is embedded in every output this config produces.
  nlohmann::json resolved() const;
  std::string hash() const;

  TrainConfig train_config() const;
  void validate() const;  // cross-field checks (s <= n, positive sizes)
};

// Minimal TOML subset: [section] headers, key = value with strings, integers,
// floats, booleans and flat arrays, # comments. Returns one JSON object per
// section. Anything else is a ConfigError naming the line.
nlohmann::json parse_toml_text(const std::string& text);
std::string emit_toml(const nlohmann::json& sections);

// Base profile ("desk" or "paper"), optionally overlaid with user sections
// (already schema-validated shape); unknown sections/keys/types throw
// ConfigError with the offending name.
ExperimentConfig resolve_config(const nlohmann::json& user_sections,
                                const std::string& profile = "desk");
ExperimentConfig load_config_file(const std::string& path, const std::string& profile = "desk");
ExperimentConfig profile_config(const std::string& profile);

// JSON-schema mirror of the accepted TOML surface, kept in sync with the
// committed configs/schema.json by a test.
nlohmann::json config_schema_json();

}  // namespace cslab
