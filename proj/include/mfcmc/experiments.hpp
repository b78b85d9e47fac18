#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfcmc/controls.hpp"
#include "mfcmc/dynamics.hpp"
#include "mfcmc/markov_chain.hpp"
#include "mfcmc/mpc_coupling.hpp"

namespace mfcmc {

// Particles drawn from a Gaussian truncated to [-clip, clip]^d (resampled,
// never clamped), equal weights. on_lattice replaces m0 by I(project(m0)).
struct InitialSpec {
  std::vector<double> center{-0.3};  // length 1 is broadcast to every axis
  double sd = 0.25;
  double clip = 0.7;
  std::size_t particles = 500;
  bool on_lattice = false;
};

// kind "steer": u = clamp(gain (target(t) - x)) realized as a mix of the two
// neighbouring scalar atoms, piecewise constant on `cells` equal cells; the
// target runs through `targets` in equal time slices. For a feedback policy x
// is the node, for a distribution it is the item's initial state.
// kind "dirac": every control is the Dirac mass at atom `atom`.
// kind "uniform": every control is the uniform measure on the atoms.
struct StrategySpec {
  std::string kind = "steer";
  std::vector<double> targets{0.4, -0.2};
  double gain = 2.0;
  std::size_t atom = 0;
  std::size_t cells = 20;
};

struct ExperimentConfig {
  std::string problem = "attraction";
  nlohmann::json params = nlohmann::json::object();
  std::vector<double> h{0.05};
  std::vector<std::size_t> steps{20};
  double dt = 0.002;
  std::string direction = "forward";  // forward: particles follow the chain, reverse: chain follows the particles
  std::string sweep = "h";            // h or steps
  InitialSpec initial;
  StrategySpec strategy;
  std::size_t samples = 3;  // strategies per side for hausdorff
  std::uint64_t seed = 1;
  std::size_t eval_points = 101;
  std::size_t max_nodes = 1000000;
  std::size_t max_particles = 200000;
  std::size_t verify_budget = 64;
  std::size_t jump_samples = 0;
};

// Throws ConfigError naming the offending field (unknown keys included).
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json config_schema();

// Named seed derivation paths.
enum SeedTag : std::uint64_t { kTagInitial = 1, kTagStrategy = 2, kTagVerify = 3, kTagJumps = 4 };

WeightedCloud sample_initial_cloud(const InitialSpec& spec, int dim, std::uint64_t seed);

RelaxedControl strategy_control(const StrategySpec& spec, const VectorFieldProblem& problem,
                                 std::span<const double> x);
FeedbackPolicy strategy_policy(const StrategySpec& spec, const VectorFieldProblem& problem, const LatticeGrid& grid);
ControlDistribution strategy_distribution(const StrategySpec& spec, const VectorFieldProblem& problem,
                                          const WeightedCloud& m0);
// Random steering parameters for stream `index`; independent of h.
StrategySpec sample_strategy(const StrategySpec& base, std::uint64_t seed, std::uint64_t index);

struct RunSetup {
  VectorFieldProblem problem;
  LatticeChain chain;
  WeightedCloud m0;
  LatticeDistribution mu0;
  Partition partition{std::vector<double>{0.0, 1.0}};
  MpcOptions options;
};
RunSetup make_setup(const ExperimentConfig& cfg, double h, std::size_t steps);

ForwardMpcResult run_forward(const RunSetup& setup, const StrategySpec& strategy);
ReverseMpcResult run_reverse(const RunSetup& setup, const StrategySpec& strategy);

struct ConvergenceRow {
  double h = 0.0;
  std::size_t steps = 0;
  double d_delta = 0.0;
  double eps = 0.0;
  double rate_bound = 0.0;
  double w2_initial = 0.0;
  double sup_w2 = 0.0;
};
struct ConvergenceResult {
  std::vector<ConvergenceRow> rows;
  std::optional<double> slope;  // log sup W2 against log eps; unset when undefined
};
ConvergenceResult run_convergence(const ExperimentConfig& cfg, std::size_t threads);

struct HausdorffSweepRow {
  double h = 0.0;
  double eps = 0.0;
  HausdorffEstimate estimate;
};
struct HausdorffSweep {
  std::vector<HausdorffSweepRow> rows;
  std::optional<double> slope;
};
HausdorffSweep run_hausdorff(const ExperimentConfig& cfg, std::size_t threads);

// Least-squares slope of log y against log x. Unset unless there are two
// distinct x and every value is positive.
std::optional<double> loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// Command-line entry point. Exit codes: 0 ok, 2 config, 3 resource, 4 runtime.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mfcmc
