#include "mfcmc/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "mfcmc/errors.hpp"
#include "mfcmc/transport.hpp"

namespace mfcmc {

std::vector<double> VectorFieldProblem::features(double t, const WeightedCloud& m) const {
  return field->features(t, m);
}

void VectorFieldProblem::evaluate_with(double t, std::span<const double> x, std::span<const double> feats,
                                       std::size_t atom, std::span<double> out) const {
  if (!box.contains(x)) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  field->velocity(t, x, feats, atoms.atom(atom), out);
}

std::vector<double> VectorFieldProblem::evaluate(double t, std::span<const double> x, const WeightedCloud& m,
                                                 std::size_t atom) const {
  std::vector<double> out(dim, 0.0);
  const auto feats = features(t, m);
  evaluate_with(t, x, feats, atom, out);
  return out;
}

MFCFlow::MFCFlow(int dim, std::vector<double> times, std::vector<std::vector<double>> states,
                 std::vector<double> weights, ControlDistribution source)
    : dim_(dim), times_(std::move(times)), states_(std::move(states)), weights_(std::move(weights)),
      source_(std::move(source)) {
  if (times_.size() != states_.size()) throw StructuralError("flow has mismatched time and state counts");
}

WeightedCloud MFCFlow::cloud(std::size_t k) const { return WeightedCloud::normalized(dim_, states_.at(k), weights_); }

bool MFCFlow::has_time(double t) const {
  const auto it = std::lower_bound(times_.begin(), times_.end(), t - 1e-12);
  return it != times_.end() && std::abs(*it - t) <= 1e-12;
}

std::size_t MFCFlow::index_of(double t) const {
  const auto it = std::lower_bound(times_.begin(), times_.end(), t - 1e-12);
  if (it == times_.end() || std::abs(*it - t) > 1e-12) {
    throw ArgumentError("time " + std::to_string(t) + " is not a sample of the flow");
  }
  return static_cast<std::size_t>(it - times_.begin());
}

std::vector<double> merge_time_grid(double s, double r, double dt, std::vector<double> breakpoints) {
  if (!(dt > 0.0)) throw ArgumentError("time step must be positive");
  if (!(s < r)) throw ArgumentError("empty integration interval");
  breakpoints.push_back(s);
  breakpoints.push_back(r);
  std::erase_if(breakpoints, [&](double t) { return t < s || t > r; });
  std::sort(breakpoints.begin(), breakpoints.end());
  breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end()), breakpoints.end());

  const double gap = 1e-6 * dt;
  std::vector<double> grid;
  const auto steps = static_cast<std::size_t>(std::ceil((r - s) / dt - 1e-9));
  std::size_t b = 0;
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = std::min(r, s + static_cast<double>(k) * dt);
    while (b < breakpoints.size() && breakpoints[b] < t - gap) grid.push_back(breakpoints[b++]);
    if (b < breakpoints.size() && std::abs(breakpoints[b] - t) <= gap) continue;
    grid.push_back(t);
  }
  while (b < breakpoints.size()) grid.push_back(breakpoints[b++]);
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

std::vector<double> rhs_relaxed(const VectorFieldProblem& problem, double t, std::span<const double> states,
                                const WeightedCloud& cloud, std::span<const double> cell_weights) {
  const auto d = static_cast<std::size_t>(problem.dim);
  const std::size_t n_atoms = problem.atoms.size();
  const std::size_t items = states.size() / d;
  const auto feats = problem.features(t, cloud);
  std::vector<double> out(states.size(), 0.0);
  std::vector<double> v(d);
  for (std::size_t i = 0; i < items; ++i) {
    const auto x = states.subspan(i * d, d);
    if (!problem.box.contains(x)) continue;
    for (std::size_t a = 0; a < n_atoms; ++a) {
      const double w = cell_weights[i * n_atoms + a];
      if (w == 0.0) continue;
      problem.field->velocity(t, x, feats, problem.atoms.atom(a), v);
      for (std::size_t k = 0; k < d; ++k) out[i * d + k] += w * v[k];
    }
  }
  return out;
}

MFCFlow integrate_mfc(const VectorFieldProblem& problem, const ControlDistribution& alpha, double dt,
                      std::vector<double> extra_times) {
  if (!(dt > 0.0)) throw ArgumentError("time step must be positive");
  if (alpha.dim() != problem.dim) throw ArgumentError("control distribution dimension differs from the problem");
  if (alpha.n_atoms() != problem.atoms.size()) throw ArgumentError("controls use a different atom set");
  const auto d = static_cast<std::size_t>(problem.dim);
  const std::size_t items = alpha.size();
  const std::size_t n_atoms = problem.atoms.size();

  std::vector<double> x(items * d);
  std::vector<double> weights(items);
  for (std::size_t i = 0; i < items; ++i) {
    const auto& it = alpha.item(i);
    if (!problem.box.contains(it.state)) {
      throw DomainError("initial state of item " + std::to_string(i) + " lies outside K");
    }
    std::copy(it.state.begin(), it.state.end(), x.begin() + static_cast<std::ptrdiff_t>(i * d));
    weights[i] = it.weight;
  }

  for (const auto& it : alpha.items()) {
    const auto& g = it.control.time_grid();
    extra_times.insert(extra_times.end(), g.begin(), g.end());
  }
  const auto grid = merge_time_grid(alpha.start(), alpha.end(), dt, std::move(extra_times));

  std::vector<std::vector<double>> samples;
  samples.reserve(grid.size());
  samples.push_back(x);

  auto stage = [&](double t, const std::vector<double>& state, const std::vector<double>& cells) {
    const auto cloud = WeightedCloud::normalized(problem.dim, state, weights);
    return rhs_relaxed(problem, t, state, cloud, cells);
  };

  std::vector<double> cells(items * n_atoms);
  std::vector<double> tmp(items * d);
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const double t0 = grid[k];
    const double h = grid[k + 1] - t0;
    // Controls are constant on each step: the grid contains every breakpoint.
    const double mid = t0 + 0.5 * h;
    for (std::size_t i = 0; i < items; ++i) {
      const auto w = alpha.item(i).control.evaluate(mid);
      std::copy(w.begin(), w.end(), cells.begin() + static_cast<std::ptrdiff_t>(i * n_atoms));
    }
    const auto k1 = stage(t0, x, cells);
    for (std::size_t j = 0; j < x.size(); ++j) tmp[j] = x[j] + 0.5 * h * k1[j];
    const auto k2 = stage(mid, tmp, cells);
    for (std::size_t j = 0; j < x.size(); ++j) tmp[j] = x[j] + 0.5 * h * k2[j];
    const auto k3 = stage(mid, tmp, cells);
    for (std::size_t j = 0; j < x.size(); ++j) tmp[j] = x[j] + h * k3[j];
    const auto k4 = stage(grid[k + 1], tmp, cells);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] += (h / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    // Hard clamp: a stage that crossed the boundary of K is stopped on it.
    for (std::size_t j = 0; j < x.size(); ++j) {
      const std::size_t axis = j % d;
      x[j] = std::clamp(x[j], problem.box.lo[axis], problem.box.hi[axis]);
    }
    samples.push_back(x);
  }
  return MFCFlow(problem.dim, grid, std::move(samples), std::move(weights), alpha);
}

ConstantsReport estimate_constants(const VectorFieldProblem& problem, std::size_t sample_budget, std::uint64_t seed) {
  ConstantsReport report;
  if (sample_budget == 0) return report;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int d = problem.dim;
  const double step = 1e-6 * std::max(1.0, problem.box.diameter());

  auto random_point = [&] {
    std::vector<double> x(d);
    for (int k = 0; k < d; ++k) x[k] = problem.box.lo[k] + (problem.box.hi[k] - problem.box.lo[k]) * unit(rng);
    return x;
  };
  auto perturb = [&](std::vector<double> x) {
    for (int k = 0; k < d; ++k) {
      x[k] = std::clamp(x[k] + step * (2.0 * unit(rng) - 1.0), problem.box.lo[k], problem.box.hi[k]);
    }
    return x;
  };
  auto norm = [](std::span<const double> v) {
    double s = 0.0;
    for (double c : v) s += c * c;
    return std::sqrt(s);
  };

  std::uniform_int_distribution<std::size_t> atom_pick(0, problem.atoms.size() - 1);
  std::uniform_int_distribution<std::size_t> size_pick(1, 5);
  for (std::size_t s = 0; s < sample_budget; ++s) {
    const double t = problem.horizon * unit(rng);
    const std::size_t n = size_pick(rng);
    std::vector<double> coords, coords2, weights;
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = random_point();
      const auto q = perturb(p);
      coords.insert(coords.end(), p.begin(), p.end());
      coords2.insert(coords2.end(), q.begin(), q.end());
      weights.push_back(unit(rng) + 1e-3);
    }
    const auto m = WeightedCloud::normalized(d, coords, weights);
    const auto m2 = WeightedCloud::normalized(d, coords2, weights);
    const std::size_t u = atom_pick(rng);
    const auto x = random_point();
    const auto x2 = perturb(x);

    const auto f = problem.evaluate(t, x, m, u);
    report.bound_hat = std::max(report.bound_hat, norm(f));

    std::vector<double> diff(d);
    const auto fx = problem.evaluate(t, x2, m, u);
    double dx = 0.0;
    for (int k = 0; k < d; ++k) {
      diff[k] = f[k] - fx[k];
      dx += (x[k] - x2[k]) * (x[k] - x2[k]);
    }
    if (dx > 0.0) report.lipschitz_hat = std::max(report.lipschitz_hat, norm(diff) / std::sqrt(dx));

    const auto fm = problem.evaluate(t, x, m2, u);
    for (int k = 0; k < d; ++k) diff[k] = f[k] - fm[k];
    const double w2 = wasserstein(m, m2);
    if (w2 > 0.0) report.lipschitz_hat = std::max(report.lipschitz_hat, norm(diff) / w2);
    ++report.samples;
  }
  report.bound_ok = report.bound_hat <= problem.bound * (1.0 + 1e-9) + 1e-12;
  report.lipschitz_ok = report.lipschitz_hat <= problem.lipschitz * (1.0 + 1e-6) + 1e-9;
  return report;
}

}  // namespace mfcmc
