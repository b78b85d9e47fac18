#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "mfcmc/controls.hpp"
#include "mfcmc/dynamics.hpp"
#include "mfcmc/measures.hpp"

namespace mfcmc {

struct RateEntry {
  std::size_t target;
  double rate;
};

// One sparse row per node, diagonal included, entries sorted by target.
using RateMatrix = std::vector<std::vector<RateEntry>>;

// Kolmogorov matrix Q(t, mu, u): nonnegative off-diagonal rates, zero row sums.
class GeneratorSpec {
 public:
  virtual ~GeneratorSpec() = default;
  virtual std::size_t node_count() const = 0;
  virtual std::size_t atom_count() const = 0;
  // Upper bound on nonzeros of a relaxed (atom-mixed) row, diagonal included.
  virtual std::size_t fan_out() const = 0;
  // mu may carry tiny negative drift from an integrator stage; implementations
  // clamp it before use.
  virtual RateMatrix rates(double t, std::span<const double> mu, std::size_t atom) const = 0;
};

// Lattice construction: rate |f_i| / h to x + h sgn(f_i) e_i, diagonal minus
// the sum. Rates towards neighbors outside the grid are dropped.
class LatticeGenerator : public GeneratorSpec {
 public:
  LatticeGenerator(VectorFieldProblem problem, LatticeGrid grid);
  std::size_t node_count() const override { return grid_.size(); }
  std::size_t atom_count() const override { return problem_.atoms.size(); }
  std::size_t fan_out() const override { return 2 * static_cast<std::size_t>(grid_.dim()) + 1; }
  RateMatrix rates(double t, std::span<const double> mu, std::size_t atom) const override;

 private:
  VectorFieldProblem problem_;
  LatticeGrid grid_;
};

// Fixed rate matrix per atom, independent of t and mu.
class TableGenerator : public GeneratorSpec {
 public:
  explicit TableGenerator(std::vector<RateMatrix> per_atom);
  std::size_t node_count() const override { return per_atom_.front().size(); }
  std::size_t atom_count() const override { return per_atom_.size(); }
  std::size_t fan_out() const override { return fan_out_; }
  RateMatrix rates(double, std::span<const double>, std::size_t atom) const override { return per_atom_.at(atom); }

 private:
  std::vector<RateMatrix> per_atom_;
  std::size_t fan_out_ = 1;
};

struct LatticeChain {
  LatticeGrid grid;
  std::shared_ptr<const GeneratorSpec> generator;
  double rate_bound = 0.0;    // B_Q
  double approx_error = 0.0;  // epsilon of the approximation assumptions
  double horizon = 1.0;
  // Present for chains built from a vector field; used for drift checks.
  std::optional<VectorFieldProblem> problem;
};

// S = (K + [-h, h]^d) ∩ hZ^d with B_Q = d R / h and eps = max(h, sqrt(h d R)).
LatticeChain build_lattice_chain(const VectorFieldProblem& problem, double h, std::size_t max_nodes = 1000000);

// Two-node chain A -> B with constant rate (single control atom).
LatticeChain make_two_node_chain(double rate, double horizon = 1.0);

// Relaxed rates: rows of Q(t, mu, u) averaged over each node's control
// measure at control_time (defaults to t).
RateMatrix relaxed_rates(const LatticeChain& chain, double t, std::span<const double> mu, const FeedbackPolicy& policy,
                         std::optional<double> control_time = std::nullopt);

// Sampled motion of the chain.
class ChainFlow {
 public:
  ChainFlow() = default;
  ChainFlow(std::vector<double> times, std::vector<std::vector<double>> mu, FeedbackPolicy policy);

  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& raw(std::size_t k) const { return mu_[k]; }
  LatticeDistribution at(std::size_t k) const;
  std::size_t index_of(double t) const;
  bool has_time(double t) const;
  // Linear interpolation between samples.
  std::vector<double> interpolate(double t) const;
  const FeedbackPolicy& policy() const { return policy_; }
  std::size_t node_count() const { return mu_.empty() ? 0 : mu_.front().size(); }

 private:
  std::vector<double> times_;
  std::vector<std::vector<double>> mu_;
  FeedbackPolicy policy_;
};

// Largest allowed step for the explicit integrator: dt * B_Q * fan_out <= 0.5.
double max_stable_step(const LatticeChain& chain);

// RK4 on d mu / dt = mu Q(t, mu, zeta) over [s, r]. Throws
// ConfigurationError when dt violates the stability bound or a step produces
// mass below -1e-12.
ChainFlow integrate_kolmogorov(const LatticeChain& chain, const LatticeDistribution& mu0, const FeedbackPolicy& policy,
                               double s, double r, double dt, std::vector<double> extra_times = {});

// max over sampled pairs s < t and nodes of |mu_x(t) - mu_x(s)| - B_Q (t - s).
double rate_bound_violation(const ChainFlow& flow, double rate_bound);

struct AssumptionReport {
  double rate_bound_declared = 0.0;
  double rate_bound_sampled = 0.0;
  double approx_error_declared = 0.0;
  double eps_space = 0.0;
  double eps_drift_interior = 0.0;
  double eps_drift_boundary = 0.0;
  double eps_var = 0.0;  // sqrt of the largest jump second moment
  double row_sum_error = 0.0;
  double min_off_diagonal = 0.0;
  std::size_t samples = 0;
};

// Samples (t, mu, u) and scans every node for each sample.
AssumptionReport verify_assumptions(const LatticeChain& chain, std::size_t sample_budget, std::uint64_t seed);

struct JumpSampleOptions {
  std::vector<double> record_times;  // defaults to the flow's sample times
  bool keep_paths = false;
  std::size_t threads = 1;
};

struct JumpPath {
  std::size_t start_node = 0;
  std::vector<double> jump_times;
  std::vector<std::size_t> nodes;  // node entered at each jump
};

struct JumpSampleResult {
  std::vector<double> record_times;
  std::vector<std::vector<double>> occupancy;  // [time][node] frequencies
  std::vector<double> mean_sq_displacement;    // E|X(t) - X(s)|^2
  std::vector<double> msd_std_error;
  std::size_t samples = 0;
  std::size_t jumps = 0;
  std::vector<JumpPath> paths;
};

// Jump process with generator L_t[mu(t), zeta] where mu(.) is the given
// deterministic flow. Thinning with majorant B_Q * fan_out; rates are frozen
// on each flow step at the step midpoint. Sample i uses its own stream
// derived from seed, so results do not depend on the thread count.
JumpSampleResult sample_jump_process(const LatticeChain& chain, const ChainFlow& flow, std::size_t n_samples,
                                     std::uint64_t seed, const JumpSampleOptions& options = {});

JumpSampleResult sample_jump_process(const LatticeChain& chain, const LatticeDistribution& mu0,
                                     const FeedbackPolicy& policy, double s, double r, double dt,
                                     std::size_t n_samples, std::uint64_t seed, const JumpSampleOptions& options = {});

}  // namespace mfcmc
