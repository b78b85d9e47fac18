#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mfcmc/measures.hpp"

namespace mfcmc {

struct PlanEntry {
  std::size_t source;
  std::size_t target;
  double mass;
};

// Sparse coupling between two finite-support measures.
struct TransportPlan {
  std::vector<PlanEntry> entries;
  std::size_t n_source = 0;
  std::size_t n_target = 0;
  double p = 2.0;
  // sum mass * |x_i - y_j|^p
  double cost = 0.0;
  std::string source_ref;
  std::string target_ref;

  std::vector<double> row_sums() const;
  std::vector<double> column_sums() const;
};

// Exact optimal plan for the cost |x - y|^p, p in {1, 2}, solved with the
// transportation simplex (network simplex on the bipartite graph). The result
// is a basic solution: at most n_a + n_b - 1 positive entries.
TransportPlan optimal_plan(const WeightedCloud& a, const WeightedCloud& b, double p = 2.0);

// cost(optimal_plan)^{1/p}
double wasserstein(const WeightedCloud& a, const WeightedCloud& b, double p = 2.0);

// Exhaustive search over spanning trees of the bipartite support graph, i.e.
// over every vertex of the transportation polytope. Supports up to 5 x 5.
TransportPlan brute_force_plan(const WeightedCloud& a, const WeightedCloud& b, double p = 2.0);

enum class PlanSide { source, target };

// Conditional distribution of a plan given one atom of the chosen side.
struct ConditionalRow {
  std::size_t atom;       // conditioning atom
  double marginal;        // its mass under the plan
  std::vector<std::size_t> others;
  std::vector<double> probabilities;
};

// Rows for atoms with zero marginal are omitted. Rows are ordered by atom.
std::vector<ConditionalRow> disintegrate(const TransportPlan& plan, PlanSide side);

// Rebuilds a plan from conditional rows (inverse of disintegrate).
std::vector<PlanEntry> recombine(const std::vector<ConditionalRow>& rows, PlanSide side);

// Recomputes sum mass * |x_i - y_j|^p for the plan's entries.
double plan_cost(const TransportPlan& plan, const WeightedCloud& a, const WeightedCloud& b);

// Throws CouplingError when row/column sums differ from the clouds' weights
// by more than tol.
void check_marginals(const TransportPlan& plan, const WeightedCloud& a, const WeightedCloud& b, double tol = 1e-9);

}  // namespace mfcmc
