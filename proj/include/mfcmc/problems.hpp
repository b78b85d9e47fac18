#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>
#include "mfcmc/dynamics.hpp"

namespace mfcmc {

// f = 0.
VectorFieldProblem make_zero_problem(int dim, const Box& box, double horizon, const ControlAtomSet& atoms);

// f = c inside K, 0 outside.
VectorFieldProblem make_constant_problem(std::vector<double> velocity, const Box& box, double horizon,
                                         const ControlAtomSet& atoms);

struct AttractionParams {
  int dim = 1;
  double half_width = 1.0;    // K = [-L, L]^d
  double margin = 0.2;        // cutoff band inside the boundary of K
  double gain = 1.0;          // pull towards the mean
  double control_gain = 0.5;  // scalar atoms act on every axis
  std::size_t atoms = 3;      // evenly spaced on [-1, 1]
  double horizon = 1.0;
};

// f(t, x, m, u) = phi(x) (gain (mean(m) - x) + control_gain u), where phi is
// a smooth cutoff equal to 1 at distance >= margin from the boundary of K and
// vanishing on it, so mass never leaves K.
VectorFieldProblem make_attraction_problem(const AttractionParams& params);

// Wraps an arbitrary f. Constants are declared by the caller and unverified.
using FieldFunction = std::function<void(double t, std::span<const double> x, const WeightedCloud& m,
                                         std::span<const double> u, std::span<double> out)>;
VectorFieldProblem make_user_problem(std::string name, int dim, const Box& box, double bound, double lipschitz,
                                     const ControlAtomSet& atoms, double horizon, FieldFunction f);

// Registry lookup: "zero", "constant", "attraction". Unknown names or
// parameter keys raise ConfigError with the offending field path.
VectorFieldProblem make_problem(const std::string& name, const nlohmann::json& params);
std::vector<std::string> problem_names();

}  // namespace mfcmc
