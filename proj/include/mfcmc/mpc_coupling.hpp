#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "mfcmc/controls.hpp"
#include "mfcmc/dynamics.hpp"
#include "mfcmc/markov_chain.hpp"
#include "mfcmc/transport.hpp"

namespace mfcmc {

// 0 = s_0 < s_1 < ... < s_n = T.
class Partition {
 public:
  explicit Partition(std::vector<double> times);
  static Partition uniform(double horizon, std::size_t steps);

  const std::vector<double>& times() const { return times_; }
  std::size_t steps() const { return times_.size() - 1; }
  double fineness() const;

 private:
  std::vector<double> times_;
};

struct StepRecord {
  double time = 0.0;
  TransportPlan plan;
  double w2 = 0.0;  // W2 between the two step clouds
  std::size_t particles = 0;
  std::size_t nodes = 0;  // lattice atoms with positive mass
  std::size_t zero_mass_nodes = 0;
  double seconds = 0.0;  // wall time; never written to run artifacts
};

struct CouplingTrace {
  std::vector<StepRecord> steps;
};

struct DiscrepancyReport {
  std::vector<double> times;
  std::vector<double> w2;
  double sup = 0.0;  // sup_t W2(m(t), I(mu(t)))
  double eps = 0.0;
  double rate_bound = 0.0;
  double fineness = 0.0;
  double w2_initial = 0.0;
};

// Piecewise flow of a particle system whose particle set changes at step
// boundaries. Segment k covers [s_k, s_{k+1}]; start_clouds[k] is the
// measure handed to segment k.
struct SegmentedFlow {
  std::vector<MFCFlow> segments;
  std::vector<WeightedCloud> start_clouds;
  std::vector<double> starts;

  SegmentedFlow() = default;
  SegmentedFlow(const MFCFlow& flow);  // NOLINT: single segment

  WeightedCloud cloud_at(double t) const;
  double start() const { return starts.front(); }
  double end() const { return segments.back().times().back(); }
};

struct MpcOptions {
  double dt = 1e-3;
  std::size_t eval_points = 101;   // uniform evaluation grid, partition times added
  double coalesce_tol = -1.0;      // negative: h * 1e-3
  std::size_t max_particles = 200000;
  bool record_concatenation = false;  // rebuild alpha_0 ⋄ ... ⋄ alpha_{n-1}
  std::size_t max_lineages = 200000;
};

struct ForwardMpcResult {
  SegmentedFlow flow;
  ChainFlow chain_flow;
  CouplingTrace trace;
  DiscrepancyReport report;
  // Present when MpcOptions::record_concatenation is set.
  std::optional<ControlDistribution> concatenated;
};

struct ReverseMpcResult {
  ChainFlow chain_flow;
  MFCFlow flow;
  FeedbackPolicy policy;  // concatenation of the per-step feedback controls
  CouplingTrace trace;
  DiscrepancyReport report;
};

std::vector<double> evaluation_times(const Partition& partition, std::size_t eval_points);

// Deterministic system driven by chain feedback: at each s_k couple m_k with
// I(mu(s_k)) optimally and give every plan entry (x, node, q) a particle at x
// of mass q steered by that node's control on [s_k, s_{k+1}].
ForwardMpcResult mpc_deterministic_from_chain(const VectorFieldProblem& problem, const LatticeChain& chain,
                                              const WeightedCloud& m0, const LatticeDistribution& mu0,
                                              const FeedbackPolicy& policy, const Partition& partition,
                                              const MpcOptions& options = {});

// Chain driven by a distribution of controls: at each s_k couple I(mu(s_k))
// with m(s_k) optimally and give every node the plan-conditional average of
// the transferred item controls. Nodes without mass get the uniform control.
ReverseMpcResult mpc_chain_from_deterministic(const VectorFieldProblem& problem, const LatticeChain& chain,
                                              const LatticeDistribution& mu0, const ControlDistribution& alpha,
                                              const Partition& partition, const MpcOptions& options = {});

// W2(m(t), I(mu(t))) at every evaluation time and its supremum.
DiscrepancyReport discrepancy(const SegmentedFlow& mfc, const ChainFlow& chain_flow, const LatticeGrid& grid,
                              const std::vector<double>& eval_times);

struct HausdorffRow {
  char side;  // 'a': deterministic sample answered by the chain, 'b': policy sample answered by the particles
  std::size_t index;
  double distance;
};

struct HausdorffEstimate {
  double estimate = 0.0;
  double one_sided_a = 0.0;
  double one_sided_b = 0.0;
  std::vector<HausdorffRow> table;
};

// Upper estimate of the Hausdorff distance between the two bundles of
// motions, restricted to the sampled strategies.
HausdorffEstimate hausdorff_estimate(const VectorFieldProblem& problem, const LatticeChain& chain,
                                     const WeightedCloud& m0, const LatticeDistribution& mu0,
                                     const std::vector<ControlDistribution>& deterministic_samples,
                                     const std::vector<FeedbackPolicy>& policy_samples, const Partition& partition,
                                     const MpcOptions& options = {}, std::size_t threads = 1);

}  // namespace mfcmc
