#include "mfcmc/problems.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mfcmc/errors.hpp"

namespace mfcmc {

namespace {

class ZeroField : public VectorField {
 public:
  void velocity(double, std::span<const double>, std::span<const double>, std::span<const double>,
                std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
  }
};

class ConstantField : public VectorField {
 public:
  explicit ConstantField(std::vector<double> c) : c_(std::move(c)) {}
  void velocity(double, std::span<const double>, std::span<const double>, std::span<const double>,
                std::span<double> out) const override {
    std::copy(c_.begin(), c_.end(), out.begin());
  }

 private:
  std::vector<double> c_;
};

// C-infinity step: 0 for s <= 0, 1 for s >= 1.
double smooth_step(double s) {
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  const double a = std::exp(-1.0 / s);
  const double b = std::exp(-1.0 / (1.0 - s));
  return a / (a + b);
}

double smooth_step_max_slope() {
  double best = 0.0;
  const int n = 20000;
  for (int k = 0; k < n; ++k) {
    const double s0 = static_cast<double>(k) / n, s1 = static_cast<double>(k + 1) / n;
    best = std::max(best, (smooth_step(s1) - smooth_step(s0)) * n);
  }
  return best * 1.01;
}

class AttractionField : public VectorField {
 public:
  AttractionField(const AttractionParams& p, Box box) : p_(p), box_(std::move(box)) {}

  std::vector<double> features(double, const WeightedCloud& m) const override { return m.mean(); }

  void velocity(double, std::span<const double> x, std::span<const double> mean, std::span<const double> u,
                std::span<double> out) const override {
    double cutoff = 1.0;
    for (int i = 0; i < p_.dim; ++i) {
      const double dist = std::min(x[i] - box_.lo[i], box_.hi[i] - x[i]);
      cutoff *= smooth_step(dist / p_.margin);
    }
    for (int i = 0; i < p_.dim; ++i) out[i] = cutoff * (p_.gain * (mean[i] - x[i]) + p_.control_gain * u[0]);
  }

 private:
  AttractionParams p_;
  Box box_;
};

class UserField : public VectorField {
 public:
  explicit UserField(FieldFunction f, int dim) : f_(std::move(f)), dim_(dim) {}

  // The whole cloud is passed through: weights first, then coordinates.
  std::vector<double> features(double, const WeightedCloud& m) const override {
    std::vector<double> out(m.weights());
    out.insert(out.end(), m.coords().begin(), m.coords().end());
    return out;
  }

  void velocity(double t, std::span<const double> x, std::span<const double> feats, std::span<const double> u,
                std::span<double> out) const override {
    const std::size_t n = feats.size() / static_cast<std::size_t>(dim_ + 1);
    std::vector<double> w(feats.begin(), feats.begin() + static_cast<std::ptrdiff_t>(n));
    std::vector<double> c(feats.begin() + static_cast<std::ptrdiff_t>(n), feats.end());
    f_(t, x, WeightedCloud::normalized(dim_, std::move(c), std::move(w)), u, out);
  }

 private:
  FieldFunction f_;
  int dim_;
};

double vector_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double c : v) s += c * c;
  return std::sqrt(s);
}

}  // namespace

VectorFieldProblem make_zero_problem(int dim, const Box& box, double horizon, const ControlAtomSet& atoms) {
  if (box.dim() != dim) throw ArgumentError("box dimension differs from the problem dimension");
  VectorFieldProblem p;
  p.name = "zero";
  p.dim = dim;
  p.box = box;
  p.bound = 0.0;
  p.lipschitz = 0.0;
  p.atoms = atoms;
  p.horizon = horizon;
  p.constants_verified = true;
  p.field = std::make_shared<ZeroField>();
  return p;
}

VectorFieldProblem make_constant_problem(std::vector<double> velocity, const Box& box, double horizon,
                                         const ControlAtomSet& atoms) {
  if (box.dim() != static_cast<int>(velocity.size())) throw ArgumentError("velocity dimension differs from the box");
  VectorFieldProblem p;
  p.name = "constant";
  p.dim = box.dim();
  p.box = box;
  p.bound = vector_norm(velocity);
  p.lipschitz = 0.0;
  p.atoms = atoms;
  p.horizon = horizon;
  p.constants_verified = true;
  p.field = std::make_shared<ConstantField>(std::move(velocity));
  return p;
}

VectorFieldProblem make_attraction_problem(const AttractionParams& params) {
  if (params.dim <= 0 || !(params.half_width > 0.0) || !(params.margin > 0.0) ||
      !(params.margin <= params.half_width) || params.atoms == 0 || !(params.horizon > 0.0)) {
    throw ArgumentError("invalid attraction problem parameters");
  }
  VectorFieldProblem p;
  p.name = "attraction";
  p.dim = params.dim;
  p.box = Box::cube(params.dim, -params.half_width, params.half_width);
  p.atoms = ControlAtomSet::uniform_scalar(params.atoms, -1.0, 1.0);
  p.horizon = params.horizon;
  const double sqrt_d = std::sqrt(static_cast<double>(params.dim));
  p.bound = params.gain * p.box.diameter() + std::abs(params.control_gain) * p.atoms.max_norm() * sqrt_d;
  // |grad phi| |g| + phi gain in x; gain * W1 <= gain * W2 in m.
  p.lipschitz = std::abs(params.gain) + sqrt_d * smooth_step_max_slope() / params.margin * p.bound;
  p.constants_verified = true;
  p.field = std::make_shared<AttractionField>(params, p.box);
  return p;
}

VectorFieldProblem make_user_problem(std::string name, int dim, const Box& box, double bound, double lipschitz,
                                     const ControlAtomSet& atoms, double horizon, FieldFunction f) {
  VectorFieldProblem p;
  p.name = std::move(name);
  p.dim = dim;
  p.box = box;
  p.bound = bound;
  p.lipschitz = lipschitz;
  p.atoms = atoms;
  p.horizon = horizon;
  p.constants_verified = false;
  p.field = std::make_shared<UserField>(std::move(f), dim);
  return p;
}

std::vector<std::string> problem_names() { return {"attraction", "constant", "zero"}; }

namespace {

void reject_unknown(const nlohmann::json& params, const std::set<std::string>& allowed) {
  if (!params.is_object()) throw ConfigError("problem.params", "must be an object");
  for (const auto& [key, value] : params.items()) {
    if (!allowed.count(key)) throw ConfigError("problem.params." + key, "unknown parameter");
  }
}

template <typename T>
T get_or(const nlohmann::json& params, const std::string& key, T fallback) {
  if (!params.contains(key)) return fallback;
  try {
    return params.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("problem.params." + key, "wrong type");
  }
}

}  // namespace

VectorFieldProblem make_problem(const std::string& name, const nlohmann::json& params) {
  if (name == "attraction") {
    reject_unknown(params, {"dim", "half_width", "margin", "gain", "control_gain", "atoms", "horizon"});
    AttractionParams p;
    p.dim = get_or(params, "dim", p.dim);
    p.half_width = get_or(params, "half_width", p.half_width);
    p.margin = get_or(params, "margin", p.margin);
    p.gain = get_or(params, "gain", p.gain);
    p.control_gain = get_or(params, "control_gain", p.control_gain);
    p.atoms = get_or(params, "atoms", p.atoms);
    p.horizon = get_or(params, "horizon", p.horizon);
    try {
      return make_attraction_problem(p);
    } catch (const ArgumentError& e) {
      throw ConfigError("problem.params", e.what());
    }
  }
  if (name == "zero" || name == "constant") {
    reject_unknown(params, {"dim", "half_width", "horizon", "atoms", "velocity"});
    const double half = get_or(params, "half_width", 1.0);
    const double horizon = get_or(params, "horizon", 1.0);
    const auto atoms = ControlAtomSet::uniform_scalar(get_or<std::size_t>(params, "atoms", 1), -1.0, 1.0);
    if (!(half > 0.0)) throw ConfigError("problem.params.half_width", "must be positive");
    if (!(horizon > 0.0)) throw ConfigError("problem.params.horizon", "must be positive");
    if (name == "zero") {
      if (params.contains("velocity")) throw ConfigError("problem.params.velocity", "not used by the zero problem");
      const int dim = get_or(params, "dim", 1);
      if (dim <= 0) throw ConfigError("problem.params.dim", "must be positive");
      return make_zero_problem(dim, Box::cube(dim, -half, half), horizon, atoms);
    }
    const auto velocity = get_or(params, "velocity", std::vector<double>{1.0});
    if (velocity.empty()) throw ConfigError("problem.params.velocity", "must be nonempty");
    if (params.contains("dim") && params.at("dim").get<int>() != static_cast<int>(velocity.size())) {
      throw ConfigError("problem.params.dim", "disagrees with the velocity length");
    }
    return make_constant_problem(velocity, Box::cube(static_cast<int>(velocity.size()), -half, half), horizon, atoms);
  }
  throw ConfigError("problem.name", "unknown problem '" + name + "'");
}

}  // namespace mfcmc
