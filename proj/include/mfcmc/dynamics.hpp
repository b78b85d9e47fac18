#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mfcmc/controls.hpp"
#include "mfcmc/measures.hpp"

namespace mfcmc {

// Right-hand side f(t, x, m, u) of the agent dynamics. The measure enters
// only through a vector of statistics computed once per (t, m), so an
// ensemble evaluation costs O(N) instead of O(N^2).
class VectorField {
 public:
  virtual ~VectorField() = default;

  virtual std::vector<double> features(double /*t*/, const WeightedCloud& /*m*/) const { return {}; }
  virtual void velocity(double t, std::span<const double> x, std::span<const double> features,
                        std::span<const double> u, std::span<double> out) const = 0;
};

// f, the state constraint box K, the declared bounds R (|f| <= R) and C_f
// (Lipschitz constant in x and m), the control atoms and the horizon T.
struct VectorFieldProblem {
  std::string name;
  int dim = 1;
  Box box;
  double bound = 0.0;
  double lipschitz = 0.0;
  ControlAtomSet atoms;
  double horizon = 1.0;
  // Built-in problems carry analytic constants; user problems only sampled ones.
  bool constants_verified = false;
  std::shared_ptr<const VectorField> field;

  std::vector<double> features(double t, const WeightedCloud& m) const;
  // f(t, x, m, u_atom), zero outside K.
  std::vector<double> evaluate(double t, std::span<const double> x, const WeightedCloud& m, std::size_t atom) const;
  void evaluate_with(double t, std::span<const double> x, std::span<const double> features, std::size_t atom,
                     std::span<double> out) const;
};

// Sampled motion of a distribution of controls: the state of every item at
// every sample time. clouds are the empirical measures m(t).
class MFCFlow {
 public:
  MFCFlow() = default;
  MFCFlow(int dim, std::vector<double> times, std::vector<std::vector<double>> states, std::vector<double> weights,
          ControlDistribution source);

  int dim() const { return dim_; }
  std::size_t item_count() const { return weights_.size(); }
  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& weights() const { return weights_; }
  const ControlDistribution& source() const { return source_; }
  // Flat item-major state buffer at sample k.
  const std::vector<double>& states(std::size_t k) const { return states_[k]; }
  std::span<const double> state(std::size_t k, std::size_t item) const {
    return {states_[k].data() + item * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }

  WeightedCloud cloud(std::size_t k) const;
  // Index of the sample at time t; throws ArgumentError if t is not sampled.
  std::size_t index_of(double t) const;
  WeightedCloud cloud_at(double t) const { return cloud(index_of(t)); }
  bool has_time(double t) const;

 private:
  int dim_ = 0;
  std::vector<double> times_;
  std::vector<std::vector<double>> states_;
  std::vector<double> weights_;
  ControlDistribution source_;
};

// Sorted time grid on [s, r]: uniform steps of dt merged with the given
// breakpoints; uniform points closer than 1e-6 dt to a breakpoint are dropped.
std::vector<double> merge_time_grid(double s, double r, double dt, std::vector<double> breakpoints);

// Per item: sum_atoms weight(u) f(t, x, m, u), zero outside K. cell_weights
// holds one probability vector per item.
std::vector<double> rhs_relaxed(const VectorFieldProblem& problem, double t, std::span<const double> states,
                                const WeightedCloud& cloud, std::span<const double> cell_weights);

// Classical RK4 on the coupled system of all items. Samples at every step of
// the merged grid (dt, control breakpoints, extra_times).
MFCFlow integrate_mfc(const VectorFieldProblem& problem, const ControlDistribution& alpha, double dt,
                      std::vector<double> extra_times = {});

struct ConstantsReport {
  double bound_hat = 0.0;
  double lipschitz_hat = 0.0;
  bool bound_ok = true;
  bool lipschitz_ok = true;
  std::size_t samples = 0;
};

// Randomized check of |f| <= R and the Lipschitz bound via finite-difference
// quotients in x and in m. Never throws on violation; flags it instead.
ConstantsReport estimate_constants(const VectorFieldProblem& problem, std::size_t sample_budget, std::uint64_t seed);

}  // namespace mfcmc
