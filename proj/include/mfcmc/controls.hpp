#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mfcmc/measures.hpp"

namespace mfcmc {

// Finite discretization of the compact control set U.
class ControlAtomSet {
 public:
  ControlAtomSet() = default;
  // Each atom is a control vector; all atoms share one length.
  explicit ControlAtomSet(std::vector<std::vector<double>> atoms);
  // n evenly spaced scalar atoms on [lo, hi] (a single atom sits at the midpoint).
  static ControlAtomSet uniform_scalar(std::size_t n, double lo, double hi);

  std::size_t size() const { return atoms_.size(); }
  std::size_t control_dim() const { return atoms_.empty() ? 0 : atoms_.front().size(); }
  std::span<const double> atom(std::size_t k) const { return atoms_[k]; }
  double distance(std::size_t a, std::size_t b) const { return distances_[a * atoms_.size() + b]; }
  double max_norm() const;

 private:
  std::vector<std::vector<double>> atoms_;
  std::vector<double> distances_;
};

// Relaxed control on [s, r]: piecewise constant in time, each cell carrying a
// probability vector over the control atoms. Cell k covers [t_k, t_{k+1});
// the last cell also covers r.
class RelaxedControl {
 public:
  RelaxedControl() = default;
  // cells is row-major, (time_grid.size() - 1) x n_atoms.
  RelaxedControl(std::vector<double> time_grid, std::size_t n_atoms, std::vector<double> cells);

  static RelaxedControl constant(double s, double r, std::vector<double> weights);
  static RelaxedControl dirac(double s, double r, std::size_t n_atoms, std::size_t atom);
  static RelaxedControl uniform(double s, double r, std::size_t n_atoms);

  double start() const { return grid_.front(); }
  double end() const { return grid_.back(); }
  std::size_t n_atoms() const { return n_atoms_; }
  std::size_t cell_count() const { return grid_.size() - 1; }
  const std::vector<double>& time_grid() const { return grid_; }
  const std::vector<double>& cells() const { return cells_; }
  std::span<const double> cell(std::size_t k) const { return {cells_.data() + k * n_atoms_, n_atoms_}; }

  // Cell containing t (t must lie in [start, end]).
  std::size_t cell_index(double t) const;
  std::span<const double> evaluate(double t) const { return cell(cell_index(t)); }

  // Adjacent cells with identical weights merged.
  RelaxedControl simplified() const;

  friend bool operator==(const RelaxedControl&, const RelaxedControl&) = default;

 private:
  std::vector<double> grid_;
  std::size_t n_atoms_ = 0;
  std::vector<double> cells_;
};

// Same control measure: identical after merging redundant breakpoints.
bool equivalent(const RelaxedControl& a, const RelaxedControl& b);

// xi0 on [s0, s1] followed by xi1 on [s1, s2]. Throws ArgumentError on a gap
// or overlap.
RelaxedControl concat_controls(const RelaxedControl& xi0, const RelaxedControl& xi1);

// Restriction to [s, r], splitting boundary cells.
RelaxedControl restrict(const RelaxedControl& xi, double s, double r);

// Cellwise convex combination on the union of the inputs' time grids.
RelaxedControl mix_controls(std::span<const double> weights, std::span<const RelaxedControl* const> controls);
RelaxedControl mix_controls(std::span<const double> weights, const std::vector<RelaxedControl>& controls);

struct ControlItem {
  double weight = 0.0;
  std::vector<double> state;  // initial state y
  RelaxedControl control;     // xi
};

// Distribution of controls: a weighted list of (initial state, relaxed
// control) pairs over a common horizon. Its state marginal is base_cloud().
class ControlDistribution {
 public:
  ControlDistribution() = default;
  ControlDistribution(int dim, std::vector<ControlItem> items);

  // Every atom of m paired with the same control.
  static ControlDistribution uniform_control(const WeightedCloud& m, const RelaxedControl& xi);

  int dim() const { return dim_; }
  std::size_t size() const { return items_.size(); }
  const std::vector<ControlItem>& items() const { return items_; }
  const ControlItem& item(std::size_t i) const { return items_[i]; }
  double start() const { return items_.front().control.start(); }
  double end() const { return items_.front().control.end(); }
  std::size_t n_atoms() const { return items_.front().control.n_atoms(); }

  WeightedCloud base_cloud() const;

 private:
  int dim_ = 0;
  std::vector<ControlItem> items_;
};

// One relaxed control per lattice node, all over the same horizon.
class FeedbackPolicy {
 public:
  FeedbackPolicy() = default;
  explicit FeedbackPolicy(std::vector<RelaxedControl> per_node);
  static FeedbackPolicy constant(std::size_t n_nodes, const RelaxedControl& xi);

  std::size_t size() const { return controls_.size(); }
  const RelaxedControl& at(std::size_t node) const { return controls_[node]; }
  const std::vector<RelaxedControl>& controls() const { return controls_; }
  double start() const { return controls_.front().start(); }
  double end() const { return controls_.front().end(); }
  std::size_t n_atoms() const { return controls_.front().n_atoms(); }
  // Union of all nodes' breakpoints.
  std::vector<double> breakpoints() const;

 private:
  std::vector<RelaxedControl> controls_;
};

FeedbackPolicy concat_policies(const FeedbackPolicy& p0, const FeedbackPolicy& p1);
FeedbackPolicy restrict(const FeedbackPolicy& policy, double s, double r);

}  // namespace mfcmc
