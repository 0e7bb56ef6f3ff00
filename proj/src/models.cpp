#include "cslab/models.hpp"

#include <cmath>
#include <random>

#include "cslab/errors.hpp"

namespace cslab {

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::zero: return "zero";
    case ModelKind::ista: return "ista";
    case ModelKind::fista: return "fista";
    case ModelKind::alista: return "alista";
    case ModelKind::alista_at: return "alista-at";
    case ModelKind::na_alista: return "na-alista";
  }
  throw ConfigError("unknown model kind");
}

std::string to_string(FeatureSet f) {
  switch (f) {
    case FeatureSet::residual: return "residual";
    case FeatureSet::update: return "update";
    case FeatureSet::both: return "both";
  }
  throw ConfigError("unknown feature set");
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "zero") return ModelKind::zero;
  if (s == "ista") return ModelKind::ista;
  if (s == "fista") return ModelKind::fista;
  if (s == "alista") return ModelKind::alista;
  if (s == "alista-at") return ModelKind::alista_at;
  if (s == "na-alista") return ModelKind::na_alista;
  throw ConfigError("unknown model kind: " + s);
}

FeatureSet feature_set_from_string(const std::string& s) {
  if (s == "residual") return FeatureSet::residual;
  if (s == "update") return FeatureSet::update;
  if (s == "both") return FeatureSet::both;
  throw ConfigError("unknown feature set: " + s);
}

SupportSelectionSchedule SupportSelectionSchedule::linear(std::size_t k, double p_max) {
  if (p_max < 0.0 || p_max > 100.0) throw ConfigError("support selection p_max must be in [0, 100]");
  SupportSelectionSchedule s;
  s.percent.resize(k, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    s.percent[i] = k > 1 ? p_max * static_cast<double>(i) / static_cast<double>(k - 1) : 0.0;
  return s;
}

std::size_t SupportSelectionSchedule::exempt_count(std::size_t k, std::size_t n) const {
  if (k >= percent.size()) throw ShapeError("support selection schedule has no layer " + std::to_string(k));
  const double p = percent[k];
  if (p <= 0.0) return 0;
  return static_cast<std::size_t>(std::ceil(p * static_cast<double>(n) / 100.0));
}

AlistaParams AlistaParams::init(std::size_t k, double theta0, double gamma0) {
  AlistaParams p;
  p.theta.assign(k, theta0);
  p.gamma.assign(k, gamma0);
  return p;
}

RecurrentCellParams RecurrentCellParams::init(std::size_t hidden, std::size_t input_dim,
                                              std::uint64_t seed) {
  if (hidden == 0) throw ConfigError("cell hidden size must be positive");
  RecurrentCellParams p;
  p.hidden = hidden;
  p.input_dim = input_dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  auto fill_uniform = [bound](Tensor& t, std::mt19937_64& eng) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(eng);
  };
  auto e_in = make_engine(mix_seed(seed, 1));
  auto e_rec = make_engine(mix_seed(seed, 2));
  auto e_out = make_engine(mix_seed(seed, 3));
  p.w_in = Tensor::zeros(input_dim, 4 * hidden);
  p.w_rec = Tensor::zeros(hidden, 4 * hidden);
  p.out_map = Tensor::zeros(hidden, 2);
  fill_uniform(p.w_in, e_in);
  fill_uniform(p.w_rec, e_rec);
  fill_uniform(p.out_map, e_out);
  p.bias = Tensor::zeros(1, 4 * hidden);
  for (std::size_t j = hidden; j < 2 * hidden; ++j) p.bias(0, j) = 1.0;
  p.c0 = Tensor::zeros(1, hidden);
  p.h0 = Tensor::zeros(1, hidden);
  return p;
}

void ParamSet::push(std::string name, Tensor t) {
  names.push_back(std::move(name));
  tensors.push_back(std::move(t));
}

ParamSet pack_params(const AlistaParams& p) {
  ParamSet out;
  out.push("theta", Tensor({1, p.theta.size()}, p.theta));
  out.push("gamma", Tensor({1, p.gamma.size()}, p.gamma));
  return out;
}

ParamSet pack_params(const RecurrentCellParams& p) {
  ParamSet out;
  out.push("w_in", p.w_in);
  out.push("w_rec", p.w_rec);
  out.push("bias", p.bias);
  out.push("c0", p.c0);
  out.push("h0", p.h0);
  out.push("out_map", p.out_map);
  return out;
}

AlistaParams unpack_alista(const ParamSet& p) {
  if (p.names.size() != 2 || p.names[0] != "theta" || p.names[1] != "gamma")
    throw ShapeError("parameter set is not a threshold/step table");
  AlistaParams out;
  const auto& th = p.tensors[0];
  const auto& ga = p.tensors[1];
  out.theta.assign(th.data(), th.data() + th.size());
  out.gamma.assign(ga.data(), ga.data() + ga.size());
  if (out.theta.size() != out.gamma.size()) throw ShapeError("theta/gamma length mismatch");
  return out;
}

RecurrentCellParams unpack_cell(const ParamSet& p, std::size_t hidden, std::size_t input_dim) {
  if (p.names.size() != 6) throw ShapeError("parameter set is not a recurrent cell");
  RecurrentCellParams out;
  out.hidden = hidden;
  out.input_dim = input_dim;
  auto expect = [&](std::size_t i, const char* name, std::size_t r, std::size_t c) {
    if (p.names[i] != name) throw ShapeError("unexpected parameter name: " + p.names[i]);
    const auto& t = p.tensors[i];
    if (t.rows() != r || t.cols() != c) throw ShapeError(std::string("bad shape for ") + name);
    return t;
  };
  out.w_in = expect(0, "w_in", input_dim, 4 * hidden);
  out.w_rec = expect(1, "w_rec", hidden, 4 * hidden);
  out.bias = expect(2, "bias", 1, 4 * hidden);
  out.c0 = expect(3, "c0", 1, hidden);
  out.h0 = expect(4, "h0", 1, hidden);
  out.out_map = expect(5, "out_map", hidden, 2);
  return out;
}

}  // namespace cslab
