#include "cslab/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "cslab/container.hpp"
#include "cslab/csvio.hpp"
#include "cslab/errors.hpp"

namespace cslab {

std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::none: return "none";
    case SweepAxis::K: return "K";
    case SweepAxis::N: return "N";
    case SweepAxis::H: return "H";
  }
  throw ConfigError("unknown sweep axis");
}

SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "none") return SweepAxis::none;
  if (s == "K") return SweepAxis::K;
  if (s == "N") return SweepAxis::N;
  if (s == "H") return SweepAxis::H;
  throw ConfigError("sweep axis must be one of none, K, N, H; got '" + s + "'");
}

namespace {

// ---- TOML subset ------------------------------------------------------------

bool valid_bare_key(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  return true;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

nlohmann::json parse_scalar(const std::string& raw, std::size_t lineno) {
  const std::string v = trim(raw);
  if (v.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty value");
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"' ||
        v.find('"', 1) != v.size() - 1)
      throw ConfigError("config line " + std::to_string(lineno) + ": malformed string " + v);
    return v.substr(1, v.size() - 2);
  }
  if (v == "true") return true;
  if (v == "false") return false;

  bool integral = !v.empty();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const char c = v[i];
    if (i == 0 && (c == '+' || c == '-')) continue;
    if (!std::isdigit(static_cast<unsigned char>(c))) integral = false;
  }
  if (v == "+" || v == "-") integral = false;
  try {
    std::size_t used = 0;
    if (integral) {
      const long long x = std::stoll(v, &used);
      if (used == v.size()) return x;
    } else {
      const double x = std::stod(v, &used);
      if (used == v.size()) return x;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("config line " + std::to_string(lineno) + ": cannot parse value '" + v + "'");
}

nlohmann::json parse_value(const std::string& raw, std::size_t lineno) {
  const std::string v = trim(raw);
  if (!v.empty() && v.front() == '[') {
    if (v.back() != ']')
      throw ConfigError("config line " + std::to_string(lineno) + ": unterminated array");
    auto arr = nlohmann::json::array();
    const std::string body = v.substr(1, v.size() - 2);
    std::string elem;
    bool in_string = false;
    bool any = false;
    for (char c : body) {
      if (c == '"') in_string = !in_string;
      if (c == ',' && !in_string) {
        arr.push_back(parse_scalar(elem, lineno));
        elem.clear();
        any = true;
        continue;
      }
      elem += c;
    }
    if (!trim(elem).empty())
      arr.push_back(parse_scalar(elem, lineno));
    else if (any && trim(elem).empty() && !body.empty() && trim(body).back() != ',')
      throw ConfigError("config line " + std::to_string(lineno) + ": empty array element");
    return arr;
  }
  return parse_scalar(v, lineno);
}

}  // namespace

nlohmann::json parse_toml_text(const std::string& text) {
  auto out = nlohmann::json::object();
  std::string section;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(strip_comment(line));
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) + ": malformed section header");
      const std::string name = trim(t.substr(1, t.size() - 2));
      if (!valid_bare_key(name))
        throw ConfigError("config line " + std::to_string(lineno) + ": bad section name '" +
                          name + "'");
      if (out.contains(name))
        throw ConfigError("config line " + std::to_string(lineno) + ": section [" + name +
                          "] opened twice");
      out[name] = nlohmann::json::object();
      section = name;
      continue;
    }
    const std::size_t eq = [&] {
      bool in_string = false;
      for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] == '"') in_string = !in_string;
        if (t[i] == '=' && !in_string) return i;
      }
      return std::string::npos;
    }();
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    if (!valid_bare_key(key))
      throw ConfigError("config line " + std::to_string(lineno) + ": bad key '" + key + "'");
    if (section.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": key '" + key +
                        "' appears before any [section]");
    if (out[section].contains(key))
      throw ConfigError("config line " + std::to_string(lineno) + ": key '" + key +
                        "' set twice in [" + section + "]");
    out[section][key] = parse_value(t.substr(eq + 1), lineno);
  }
  return out;
}

namespace {

std::string render_toml_value(const nlohmann::json& v) {
  if (v.is_string()) return "\"" + v.get<std::string>() + "\"";
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_float()) return fmt_double(v.get<double>());
  if (v.is_number()) return v.dump();
  if (v.is_array()) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += ", ";
      out += render_toml_value(v[i]);
    }
    return out + "]";
  }
  throw ConfigError("emit_toml: unsupported value type");
}

}  // namespace

std::string emit_toml(const nlohmann::json& sections) {
  std::string out;
  bool first = true;
  for (auto it = sections.begin(); it != sections.end(); ++it) {
    if (!first) out += "\n";
    first = false;
    out += "[" + it.key() + "]\n";
    for (auto kv = it.value().begin(); kv != it.value().end(); ++kv)
      out += kv.key() + " = " + render_toml_value(kv.value()) + "\n";
  }
  return out;
}

// ---- schema -----------------------------------------------------------------

namespace {

struct KeySpec {
  const char* key;
  const char* type;  // integer | number | boolean | string | array-integer | array-string
};

struct SectionSpec {
  const char* name;
  std::vector<KeySpec> keys;
};

const std::vector<SectionSpec>& schema_table() {
  static const std::vector<SectionSpec> table = {
      {"ensemble",
       {{"m", "integer"},
        {"n", "integer"},
        {"s", "number"},
        {"snr_db", "number"},
        {"seed", "integer"},
        {"test_size", "integer"},
        {"test_seed", "integer"}}},
      {"model",
       {{"kind", "string"},
        {"k_steps", "integer"},
        {"hidden", "integer"},
        {"features", "string"},
        {"p_max", "number"},
        {"at_epsilon", "number"}}},
      {"train",
       {{"epochs", "integer"},
        {"samples_per_epoch", "integer"},
        {"batch_size", "integer"},
        {"learning_rate", "number"},
        {"beta1", "number"},
        {"beta2", "number"},
        {"adam_eps", "number"},
        {"eval_every", "integer"},
        {"seed", "integer"},
        {"ablation", "boolean"}}},
      {"dictionary", {{"max_iters", "integer"}, {"step", "number"}}},
      {"eval", {{"lambda", "number"}, {"baselines", "array-string"}}},
      {"sweep",
       {{"axis", "string"},
        {"values", "array-integer"},
        {"models", "array-string"},
        {"seeds", "array-integer"}}},
      {"diagnose",
       {{"pair_i", "array-integer"},
        {"pair_j", "array-integer"},
        {"proxy_samples", "integer"}}},
  };
  return table;
}

bool json_matches(const nlohmann::json& v, const std::string& type) {
  if (type == "integer") return v.is_number_integer();
  if (type == "number") return v.is_number();
  if (type == "boolean") return v.is_boolean();
  if (type == "string") return v.is_string();
  if (type == "array-integer") {
    if (!v.is_array()) return false;
    for (const auto& e : v)
      if (!e.is_number_integer()) return false;
    return true;
  }
  if (type == "array-string") {
    if (!v.is_array()) return false;
    for (const auto& e : v)
      if (!e.is_string()) return false;
    return true;
  }
  return false;
}

void check_against_schema(const nlohmann::json& user) {
  if (!user.is_object()) throw ConfigError("config root must be a table of sections");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const SectionSpec* sec = nullptr;
    for (const auto& s : schema_table())
      if (it.key() == s.name) sec = &s;
    if (!sec) throw ConfigError("unknown config section [" + it.key() + "]");
    if (!it.value().is_object())
      throw ConfigError("config section [" + it.key() + "] must be a table");
    for (auto kv = it.value().begin(); kv != it.value().end(); ++kv) {
      const KeySpec* ks = nullptr;
      for (const auto& k : sec->keys)
        if (kv.key() == k.key) ks = &k;
      if (!ks)
        throw ConfigError("unknown config key '" + kv.key() + "' in [" + it.key() + "]");
      if (!json_matches(kv.value(), ks->type))
        throw ConfigError("config key '" + std::string(sec->name) + "." + kv.key() +
                          "' must be a " + ks->type);
    }
  }
}

std::size_t to_size(const nlohmann::json& v, const std::string& name) {
  const long long x = v.get<long long>();
  if (x < 0) throw ConfigError("config key '" + name + "' must be non-negative");
  return static_cast<std::size_t>(x);
}

std::uint64_t to_u64(const nlohmann::json& v, const std::string& name) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  const long long x = v.get<long long>();
  if (x < 0) throw ConfigError("config key '" + name + "' must be non-negative");
  return static_cast<std::uint64_t>(x);
}

template <class T, class F>
std::vector<T> to_vector(const nlohmann::json& arr, F&& f) {
  std::vector<T> out;
  for (const auto& e : arr) out.push_back(f(e));
  return out;
}

void apply_section(ExperimentConfig& cfg, const std::string& sec, const nlohmann::json& obj) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const std::string& k = it.key();
    const nlohmann::json& v = it.value();
    const std::string full = sec + "." + k;
    if (sec == "ensemble") {
      if (k == "m") cfg.ensemble.m = to_size(v, full);
      else if (k == "n") cfg.ensemble.n = to_size(v, full);
      else if (k == "s") cfg.ensemble.s = v.get<double>();
      else if (k == "snr_db") cfg.ensemble.snr_db = v.get<double>();
      else if (k == "seed") cfg.ensemble.seed = to_u64(v, full);
      else if (k == "test_size") cfg.ensemble.test_size = to_size(v, full);
      else if (k == "test_seed") cfg.ensemble.test_seed = to_u64(v, full);
    } else if (sec == "model") {
      if (k == "kind") cfg.model.kind = model_kind_from_string(v.get<std::string>());
      else if (k == "k_steps") cfg.model.k_steps = to_size(v, full);
      else if (k == "hidden") cfg.model.hidden = to_size(v, full);
      else if (k == "features") cfg.model.features = feature_set_from_string(v.get<std::string>());
      else if (k == "p_max") cfg.model.p_max = v.get<double>();
      else if (k == "at_epsilon") cfg.model.at_epsilon = v.get<double>();
    } else if (sec == "train") {
      if (k == "epochs") cfg.train.epochs = to_size(v, full);
      else if (k == "samples_per_epoch") cfg.train.samples_per_epoch = to_size(v, full);
      else if (k == "batch_size") cfg.train.batch_size = to_size(v, full);
      else if (k == "learning_rate") cfg.train.learning_rate = v.get<double>();
      else if (k == "beta1") cfg.train.beta1 = v.get<double>();
      else if (k == "beta2") cfg.train.beta2 = v.get<double>();
      else if (k == "adam_eps") cfg.train.adam_eps = v.get<double>();
      else if (k == "eval_every") cfg.train.eval_every = to_size(v, full);
      else if (k == "seed") cfg.train.seed = to_u64(v, full);
      else if (k == "ablation") cfg.train.ablation = v.get<bool>();
    } else if (sec == "dictionary") {
      if (k == "max_iters") cfg.dictionary.max_iters = to_size(v, full);
      else if (k == "step") cfg.dictionary.step = v.get<double>();
    } else if (sec == "eval") {
      if (k == "lambda") cfg.eval.lambda = v.get<double>();
      else if (k == "baselines")
        cfg.eval.baselines = to_vector<ModelKind>(
            v, [](const nlohmann::json& e) { return model_kind_from_string(e.get<std::string>()); });
    } else if (sec == "sweep") {
      if (k == "axis") cfg.sweep.axis = sweep_axis_from_string(v.get<std::string>());
      else if (k == "values")
        cfg.sweep.values = to_vector<std::size_t>(
            v, [&](const nlohmann::json& e) { return to_size(e, full); });
      else if (k == "models")
        cfg.sweep.models = to_vector<ModelKind>(
            v, [](const nlohmann::json& e) { return model_kind_from_string(e.get<std::string>()); });
      else if (k == "seeds")
        cfg.sweep.seeds = to_vector<std::uint64_t>(
            v, [&](const nlohmann::json& e) { return to_u64(e, full); });
    } else if (sec == "diagnose") {
      if (k == "pair_i")
        cfg.diagnose.pair_i = to_vector<std::size_t>(
            v, [&](const nlohmann::json& e) { return to_size(e, full); });
      else if (k == "pair_j")
        cfg.diagnose.pair_j = to_vector<std::size_t>(
            v, [&](const nlohmann::json& e) { return to_size(e, full); });
      else if (k == "proxy_samples") cfg.diagnose.proxy_samples = to_size(v, full);
    }
  }
}

}  // namespace

nlohmann::json ExperimentConfig::resolved() const {
  nlohmann::json j;
  j["ensemble"] = {{"m", ensemble.m},           {"n", ensemble.n},
                   {"s", ensemble.s},           {"snr_db", ensemble.snr_db},
                   {"seed", ensemble.seed},     {"test_size", ensemble.test_size},
                   {"test_seed", ensemble.test_seed}};
  j["model"] = {{"kind", to_string(model.kind)},
                {"k_steps", model.k_steps},
                {"hidden", model.hidden},
                {"features", to_string(model.features)},
                {"p_max", model.p_max},
                {"at_epsilon", model.at_epsilon}};
  j["train"] = {{"epochs", train.epochs},
                {"samples_per_epoch", train.samples_per_epoch},
                {"batch_size", train.batch_size},
                {"learning_rate", train.learning_rate},
                {"beta1", train.beta1},
                {"beta2", train.beta2},
                {"adam_eps", train.adam_eps},
                {"eval_every", train.eval_every},
                {"seed", train.seed},
                {"ablation", train.ablation}};
  j["dictionary"] = {{"max_iters", dictionary.max_iters}, {"step", dictionary.step}};
  auto baselines = nlohmann::json::array();
  for (auto b : eval.baselines) baselines.push_back(to_string(b));
  j["eval"] = {{"lambda", eval.lambda}, {"baselines", baselines}};
  auto models = nlohmann::json::array();
  for (auto m : sweep.models) models.push_back(to_string(m));
  j["sweep"] = {{"axis", to_string(sweep.axis)},
                {"values", sweep.values},
                {"models", models},
                {"seeds", sweep.seeds}};
  j["diagnose"] = {{"pair_i", diagnose.pair_i},
                   {"pair_j", diagnose.pair_j},
                   {"proxy_samples", diagnose.proxy_samples}};
  return j;
}

std::string ExperimentConfig::hash() const {
  const std::string dump = resolved().dump();
  return checksum_hex(fnv1a64(dump.data(), dump.size()));
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t;
  t.model = model.kind;
  t.features = model.features;
  t.epochs = train.epochs;
  t.samples_per_epoch = train.samples_per_epoch;
  t.batch_size = train.batch_size;
  t.learning_rate = train.learning_rate;
  t.beta1 = train.beta1;
  t.beta2 = train.beta2;
  t.adam_eps = train.adam_eps;
  t.seed = train.seed;
  t.k_steps = model.k_steps;
  t.hidden = model.hidden;
  t.p_max = model.p_max;
  t.at_epsilon = model.at_epsilon;
  t.eval_every = train.eval_every;
  return t;
}

void ExperimentConfig::validate() const {
  if (ensemble.m == 0 || ensemble.n == 0)
    throw ConfigError("ensemble dimensions must be positive");
  if (ensemble.m > ensemble.n)
    throw ConfigError("ensemble requires m <= n (got m=" + std::to_string(ensemble.m) +
                      ", n=" + std::to_string(ensemble.n) + ")");
  if (!(ensemble.s > 0.0))
    throw ConfigError("ensemble.s must be positive");
  if (ensemble.s > static_cast<double>(ensemble.n))
    throw ConfigError("ensemble.s exceeds n: expected sparsity cannot exceed the dimension");
  if (ensemble.test_size == 0) throw ConfigError("ensemble.test_size must be positive");
  if (model.k_steps == 0) throw ConfigError("model.k_steps must be positive");
  if (model.p_max < 0.0 || model.p_max > 100.0)
    throw ConfigError("model.p_max must lie in [0, 100]");
  if (!(eval.lambda > 0.0)) throw ConfigError("eval.lambda must be positive");
  if (sweep.axis != SweepAxis::none && sweep.values.empty())
    throw ConfigError("sweep.values must be non-empty for axis " + to_string(sweep.axis));
  for (std::size_t v : sweep.values)
    if (v == 0) throw ConfigError("sweep.values must be positive");
  if (sweep.seeds.empty()) throw ConfigError("sweep.seeds must be non-empty");
  if (sweep.models.empty()) throw ConfigError("sweep.models must be non-empty");
  if (diagnose.pair_i.size() != diagnose.pair_j.size())
    throw ConfigError("diagnose.pair_i and diagnose.pair_j must have equal length");
  for (std::size_t i = 0; i < diagnose.pair_i.size(); ++i)
    if (diagnose.pair_i[i] == 0 || diagnose.pair_j[i] == 0 ||
        diagnose.pair_i[i] > model.k_steps || diagnose.pair_j[i] > model.k_steps)
      throw ConfigError("diagnose iteration pairs must lie in [1, k_steps]");
  if (diagnose.proxy_samples < 2)
    throw ConfigError("diagnose.proxy_samples must be at least 2");
}

ExperimentConfig profile_config(const std::string& profile) {
  ExperimentConfig cfg;
  if (profile == "desk") {
    // the short schedule needs larger steps and a fast-adapting second
    // moment; both unrolled models train stably under this pair
    cfg.train.learning_rate = 5e-3;
    cfg.train.beta2 = 0.9;
    return cfg;
  }
  if (profile == "paper") {
    cfg.ensemble.m = 250;
    cfg.ensemble.n = 1000;
    cfg.ensemble.s = 50;
    cfg.ensemble.test_size = 10000;
    cfg.model.k_steps = 16;
    cfg.model.hidden = 128;
    cfg.train.epochs = 400;
    cfg.train.samples_per_epoch = 50000;
    cfg.train.batch_size = 512;
    cfg.train.learning_rate = 2e-4;
    cfg.diagnose.pair_i = {5};
    cfg.diagnose.pair_j = {8};
    return cfg;
  }
  throw ConfigError("unknown profile '" + profile + "' (expected desk or paper)");
}

ExperimentConfig resolve_config(const nlohmann::json& user_sections, const std::string& profile) {
  check_against_schema(user_sections);
  ExperimentConfig cfg = profile_config(profile);
  for (auto it = user_sections.begin(); it != user_sections.end(); ++it)
    apply_section(cfg, it.key(), it.value());
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path, const std::string& profile) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return resolve_config(parse_toml_text(ss.str()), profile);
}

nlohmann::json config_schema_json() {
  nlohmann::json props = nlohmann::json::object();
  for (const auto& sec : schema_table()) {
    nlohmann::json keys = nlohmann::json::object();
    for (const auto& k : sec.keys) {
      const std::string t = k.type;
      if (t == "array-integer")
        keys[k.key] = {{"type", "array"}, {"items", {{"type", "integer"}}}};
      else if (t == "array-string")
        keys[k.key] = {{"type", "array"}, {"items", {{"type", "string"}}}};
      else
        keys[k.key] = {{"type", t}};
    }
    props[sec.name] = {{"type", "object"},
                       {"additionalProperties", false},
                       {"properties", keys}};
  }
  return {{"$schema", "http://json-schema.org/draft-07/schema#"},
          {"title", "experiment configuration"},
          {"type", "object"},
          {"additionalProperties", false},
          {"properties", props}};
}

}  // namespace cslab
