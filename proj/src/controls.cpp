#include "mfcmc/controls.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mfcmc/errors.hpp"

namespace mfcmc {

namespace {

constexpr double kTimeTol = 1e-12;

bool same_time(double a, double b) { return std::abs(a - b) <= kTimeTol * std::max(1.0, std::abs(a)); }

}  // namespace

ControlAtomSet::ControlAtomSet(std::vector<std::vector<double>> atoms) : atoms_(std::move(atoms)) {
  if (atoms_.empty()) throw ArgumentError("control atom set is empty");
  const std::size_t k = atoms_.front().size();
  for (const auto& a : atoms_) {
    if (a.size() != k || k == 0) throw StructuralError("control atoms have inconsistent length");
  }
  const std::size_t n = atoms_.size();
  distances_.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < k; ++c) s += (atoms_[i][c] - atoms_[j][c]) * (atoms_[i][c] - atoms_[j][c]);
      distances_[i * n + j] = distances_[j * n + i] = std::sqrt(s);
    }
  }
}

ControlAtomSet ControlAtomSet::uniform_scalar(std::size_t n, double lo, double hi) {
  if (n == 0) throw ArgumentError("need at least one control atom");
  std::vector<std::vector<double>> atoms;
  for (std::size_t k = 0; k < n; ++k) {
    atoms.push_back({n == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1)});
  }
  return ControlAtomSet(std::move(atoms));
}

double ControlAtomSet::max_norm() const {
  double best = 0.0;
  for (const auto& a : atoms_) {
    double s = 0.0;
    for (double c : a) s += c * c;
    best = std::max(best, std::sqrt(s));
  }
  return best;
}

RelaxedControl::RelaxedControl(std::vector<double> time_grid, std::size_t n_atoms, std::vector<double> cells)
    : grid_(std::move(time_grid)), n_atoms_(n_atoms), cells_(std::move(cells)) {
  if (grid_.size() < 2) throw StructuralError("relaxed control needs at least one time cell");
  if (n_atoms_ == 0) throw StructuralError("relaxed control needs at least one atom");
  for (std::size_t k = 0; k + 1 < grid_.size(); ++k) {
    if (!(grid_[k] < grid_[k + 1])) throw StructuralError("relaxed control time grid is not strictly increasing");
  }
  if (cells_.size() != cell_count() * n_atoms_) throw StructuralError("relaxed control cell table has wrong size");
  for (std::size_t k = 0; k < cell_count(); ++k) {
    double sum = 0.0;
    for (double w : cell(k)) {
      if (!(w >= 0.0)) throw StructuralError("relaxed control weight is negative");
      sum += w;
    }
    if (std::abs(sum - 1.0) > kWeightSumTol) throw StructuralError("relaxed control cell is not a probability vector");
  }
}

RelaxedControl RelaxedControl::constant(double s, double r, std::vector<double> weights) {
  const std::size_t n = weights.size();
  return RelaxedControl({s, r}, n, std::move(weights));
}

RelaxedControl RelaxedControl::dirac(double s, double r, std::size_t n_atoms, std::size_t atom) {
  std::vector<double> w(n_atoms, 0.0);
  w.at(atom) = 1.0;
  return constant(s, r, std::move(w));
}

RelaxedControl RelaxedControl::uniform(double s, double r, std::size_t n_atoms) {
  return constant(s, r, std::vector<double>(n_atoms, 1.0 / static_cast<double>(n_atoms)));
}

std::size_t RelaxedControl::cell_index(double t) const {
  if (t < grid_.front() - kTimeTol || t > grid_.back() + kTimeTol) {
    throw ArgumentError("time " + std::to_string(t) + " outside control horizon [" + std::to_string(grid_.front()) +
                        ", " + std::to_string(grid_.back()) + "]");
  }
  const auto it = std::upper_bound(grid_.begin(), grid_.end(), t);
  const auto k = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, it - grid_.begin() - 1));
  return std::min(k, cell_count() - 1);
}

RelaxedControl RelaxedControl::simplified() const {
  std::vector<double> grid{grid_.front()};
  std::vector<double> cells(cell(0).begin(), cell(0).end());
  for (std::size_t k = 1; k < cell_count(); ++k) {
    const auto c = cell(k);
    if (!std::equal(c.begin(), c.end(), cells.end() - static_cast<std::ptrdiff_t>(n_atoms_))) {
      grid.push_back(grid_[k]);
      cells.insert(cells.end(), c.begin(), c.end());
    }
  }
  grid.push_back(grid_.back());
  return RelaxedControl(std::move(grid), n_atoms_, std::move(cells));
}

bool equivalent(const RelaxedControl& a, const RelaxedControl& b) { return a.simplified() == b.simplified(); }

RelaxedControl concat_controls(const RelaxedControl& xi0, const RelaxedControl& xi1) {
  if (xi0.n_atoms() != xi1.n_atoms()) throw ArgumentError("concatenated controls use different atom sets");
  if (!same_time(xi0.end(), xi1.start())) {
    throw ArgumentError("control horizons do not abut: " + std::to_string(xi0.end()) + " vs " +
                        std::to_string(xi1.start()));
  }
  std::vector<double> grid = xi0.time_grid();
  grid.insert(grid.end(), xi1.time_grid().begin() + 1, xi1.time_grid().end());
  std::vector<double> cells = xi0.cells();
  cells.insert(cells.end(), xi1.cells().begin(), xi1.cells().end());
  return RelaxedControl(std::move(grid), xi0.n_atoms(), std::move(cells));
}

RelaxedControl restrict(const RelaxedControl& xi, double s, double r) {
  if (!(s < r)) throw ArgumentError("restriction interval is empty");
  if (s < xi.start() - kTimeTol || r > xi.end() + kTimeTol) throw ArgumentError("restriction interval leaves the horizon");
  const std::size_t first = xi.cell_index(s);
  // Last cell with t_k < r.
  const auto& g = xi.time_grid();
  std::size_t last = static_cast<std::size_t>(std::lower_bound(g.begin(), g.end(), r) - g.begin());
  last = std::clamp<std::size_t>(last, first + 1, xi.cell_count()) - 1;
  std::vector<double> grid{s};
  std::vector<double> cells;
  for (std::size_t k = first; k <= last; ++k) {
    if (k > first) grid.push_back(g[k]);
    const auto c = xi.cell(k);
    cells.insert(cells.end(), c.begin(), c.end());
  }
  grid.push_back(r);
  return RelaxedControl(std::move(grid), xi.n_atoms(), std::move(cells));
}

RelaxedControl mix_controls(std::span<const double> weights, std::span<const RelaxedControl* const> controls) {
  if (controls.empty() || weights.size() != controls.size()) throw ArgumentError("mix needs one weight per control");
  const RelaxedControl& ref = *controls.front();
  std::vector<double> grid;
  for (const RelaxedControl* c : controls) {
    if (!same_time(c->start(), ref.start()) || !same_time(c->end(), ref.end())) {
      throw ArgumentError("mixed controls have different horizons");
    }
    if (c->n_atoms() != ref.n_atoms()) throw ArgumentError("mixed controls use different atom sets");
    grid.insert(grid.end(), c->time_grid().begin() + 1, c->time_grid().end() - 1);
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  grid.insert(grid.begin(), ref.start());
  grid.push_back(ref.end());

  const std::size_t n = ref.n_atoms();
  std::vector<double> cells((grid.size() - 1) * n, 0.0);
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const double mid = 0.5 * (grid[k] + grid[k + 1]);
    for (std::size_t c = 0; c < controls.size(); ++c) {
      if (weights[c] == 0.0) continue;
      const auto w = controls[c]->evaluate(mid);
      for (std::size_t a = 0; a < n; ++a) cells[k * n + a] += weights[c] * w[a];
    }
    // Renormalize against rounding in the weights.
    double sum = 0.0;
    for (std::size_t a = 0; a < n; ++a) sum += cells[k * n + a];
    for (std::size_t a = 0; a < n; ++a) cells[k * n + a] /= sum;
  }
  return RelaxedControl(std::move(grid), n, std::move(cells));
}

RelaxedControl mix_controls(std::span<const double> weights, const std::vector<RelaxedControl>& controls) {
  std::vector<const RelaxedControl*> ptrs;
  ptrs.reserve(controls.size());
  for (const auto& c : controls) ptrs.push_back(&c);
  return mix_controls(weights, std::span<const RelaxedControl* const>(ptrs));
}

ControlDistribution::ControlDistribution(int dim, std::vector<ControlItem> items) : dim_(dim), items_(std::move(items)) {
  if (items_.empty()) throw StructuralError("control distribution is empty");
  double sum = 0.0;
  const auto& ref = items_.front().control;
  for (const auto& it : items_) {
    if (!(it.weight >= 0.0)) throw StructuralError("control distribution weight is negative");
    if (it.state.size() != static_cast<std::size_t>(dim_)) throw StructuralError("item state has wrong dimension");
    if (!same_time(it.control.start(), ref.start()) || !same_time(it.control.end(), ref.end())) {
      throw StructuralError("items of a control distribution must share the horizon");
    }
    if (it.control.n_atoms() != ref.n_atoms()) throw StructuralError("items use different atom sets");
    sum += it.weight;
  }
  if (std::abs(sum - 1.0) > kWeightSumTol) throw StructuralError("control distribution weights do not sum to 1");
}

ControlDistribution ControlDistribution::uniform_control(const WeightedCloud& m, const RelaxedControl& xi) {
  std::vector<ControlItem> items;
  items.reserve(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto x = m.point(i);
    items.push_back({m.weight(i), std::vector<double>(x.begin(), x.end()), xi});
  }
  return ControlDistribution(m.dim(), std::move(items));
}

WeightedCloud ControlDistribution::base_cloud() const {
  std::vector<double> coords;
  std::vector<double> weights;
  coords.reserve(items_.size() * dim_);
  for (const auto& it : items_) {
    coords.insert(coords.end(), it.state.begin(), it.state.end());
    weights.push_back(it.weight);
  }
  return WeightedCloud::normalized(dim_, std::move(coords), std::move(weights));
}

FeedbackPolicy::FeedbackPolicy(std::vector<RelaxedControl> per_node) : controls_(std::move(per_node)) {
  if (controls_.empty()) throw StructuralError("feedback policy has no nodes");
  const auto& ref = controls_.front();
  for (const auto& c : controls_) {
    if (!same_time(c.start(), ref.start()) || !same_time(c.end(), ref.end())) {
      throw StructuralError("feedback policy controls must share the horizon");
    }
    if (c.n_atoms() != ref.n_atoms()) throw StructuralError("feedback policy controls use different atom sets");
  }
}

FeedbackPolicy FeedbackPolicy::constant(std::size_t n_nodes, const RelaxedControl& xi) {
  return FeedbackPolicy(std::vector<RelaxedControl>(n_nodes, xi));
}

std::vector<double> FeedbackPolicy::breakpoints() const {
  std::vector<double> t;
  for (const auto& c : controls_) t.insert(t.end(), c.time_grid().begin(), c.time_grid().end());
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

FeedbackPolicy concat_policies(const FeedbackPolicy& p0, const FeedbackPolicy& p1) {
  if (p0.size() != p1.size()) throw ArgumentError("concatenated policies cover different node sets");
  std::vector<RelaxedControl> out;
  out.reserve(p0.size());
  for (std::size_t n = 0; n < p0.size(); ++n) out.push_back(concat_controls(p0.at(n), p1.at(n)));
  return FeedbackPolicy(std::move(out));
}

FeedbackPolicy restrict(const FeedbackPolicy& policy, double s, double r) {
  std::vector<RelaxedControl> out;
  out.reserve(policy.size());
  for (const auto& c : policy.controls()) out.push_back(restrict(c, s, r));
  return FeedbackPolicy(std::move(out));
}

}  // namespace mfcmc
