#include "mfcmc/markov_chain.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>

#include "mfcmc/errors.hpp"
#include "mfcmc/util.hpp"

namespace mfcmc {

namespace {

WeightedCloud embed_raw(std::span<const double> mu, const LatticeGrid& grid) {
  std::vector<double> coords;
  std::vector<double> weights;
  for (std::size_t n = 0; n < grid.size(); ++n) {
    if (mu[n] > 0.0) {
      const auto x = grid.node(n);
      coords.insert(coords.end(), x.begin(), x.end());
      weights.push_back(mu[n]);
    }
  }
  return WeightedCloud::normalized(grid.dim(), std::move(coords), std::move(weights));
}

void sort_row(std::vector<RateEntry>& row) {
  std::sort(row.begin(), row.end(), [](const RateEntry& a, const RateEntry& b) { return a.target < b.target; });
}

}  // namespace

LatticeGenerator::LatticeGenerator(VectorFieldProblem problem, LatticeGrid grid)
    : problem_(std::move(problem)), grid_(std::move(grid)) {
  if (!grid_.is_regular()) throw ArgumentError("lattice generator needs a regular grid");
}

RateMatrix LatticeGenerator::rates(double t, std::span<const double> mu, std::size_t atom) const {
  const int d = grid_.dim();
  const double h = grid_.spacing();
  const auto feats = problem_.features(t, embed_raw(mu, grid_));
  RateMatrix q(grid_.size());
  std::vector<double> v(d);
  for (std::size_t n = 0; n < grid_.size(); ++n) {
    problem_.evaluate_with(t, grid_.node(n), feats, atom, v);
    auto& row = q[n];
    double out = 0.0;
    for (int i = 0; i < d; ++i) {
      if (v[i] == 0.0) continue;
      const auto nb = grid_.neighbor(n, i, v[i] > 0.0 ? 1 : -1);
      if (!nb) continue;
      const double r = std::abs(v[i]) / h;
      row.push_back({*nb, r});
      out += r;
    }
    row.push_back({n, -out});
    sort_row(row);
  }
  return q;
}

TableGenerator::TableGenerator(std::vector<RateMatrix> per_atom) : per_atom_(std::move(per_atom)) {
  if (per_atom_.empty() || per_atom_.front().empty()) throw StructuralError("rate table is empty");
  for (const auto& q : per_atom_) {
    if (q.size() != per_atom_.front().size()) throw StructuralError("rate tables differ in size");
  }
  // Nonzero pattern of the union over atoms bounds relaxed rows.
  for (std::size_t n = 0; n < per_atom_.front().size(); ++n) {
    std::set<std::size_t> targets;
    for (const auto& q : per_atom_) {
      for (const auto& e : q[n]) targets.insert(e.target);
    }
    fan_out_ = std::max(fan_out_, targets.size());
  }
}

LatticeChain build_lattice_chain(const VectorFieldProblem& problem, double h, std::size_t max_nodes) {
  if (!(h > 0.0)) throw ArgumentError("lattice spacing must be positive");
  LatticeChain chain;
  chain.grid = LatticeGrid::regular(problem.box, h, max_nodes);
  chain.generator = std::make_shared<LatticeGenerator>(problem, chain.grid);
  const double d = problem.dim;
  chain.rate_bound = d * problem.bound / h;
  chain.approx_error = std::max(h, std::sqrt(h * d * problem.bound));
  chain.horizon = problem.horizon;
  chain.problem = problem;
  return chain;
}

LatticeChain make_two_node_chain(double rate, double horizon) {
  LatticeChain chain;
  chain.grid = LatticeGrid::from_nodes(1, {0.0, 1.0}, 1.0);
  RateMatrix q(2);
  q[0] = {{0, -rate}, {1, rate}};
  q[1] = {{1, 0.0}};
  chain.generator = std::make_shared<TableGenerator>(std::vector<RateMatrix>{q});
  chain.rate_bound = rate;
  chain.horizon = horizon;
  return chain;
}

RateMatrix relaxed_rates(const LatticeChain& chain, double t, std::span<const double> mu, const FeedbackPolicy& policy,
                         std::optional<double> control_time) {
  const std::size_t n = chain.generator->node_count();
  if (policy.size() != n) throw ArgumentError("policy covers a different node set");
  if (mu.size() != n) throw ArgumentError("distribution size differs from the node count");
  const double tc = control_time.value_or(t);
  if (tc < policy.start() - 1e-12 || tc > policy.end() + 1e-12) {
    throw ArgumentError("time " + std::to_string(tc) + " outside the policy horizon");
  }
  const std::size_t atoms = chain.generator->atom_count();
  std::vector<std::optional<RateMatrix>> per_atom(atoms);
  RateMatrix out(n);
  std::map<std::size_t, double> acc;
  for (std::size_t x = 0; x < n; ++x) {
    const auto w = policy.at(x).evaluate(tc);
    acc.clear();
    for (std::size_t a = 0; a < atoms; ++a) {
      if (w[a] == 0.0) continue;
      if (!per_atom[a]) per_atom[a] = chain.generator->rates(t, mu, a);
      for (const auto& e : (*per_atom[a])[x]) acc[e.target] += w[a] * e.rate;
    }
    // Diagonal is minus the off-diagonal sum, so rows sum to zero exactly.
    double off = 0.0;
    for (const auto& [y, r] : acc) {
      if (y == x || r == 0.0) continue;
      out[x].push_back({y, r});
      off += r;
    }
    out[x].push_back({x, -off});
    sort_row(out[x]);
  }
  return out;
}

ChainFlow::ChainFlow(std::vector<double> times, std::vector<std::vector<double>> mu, FeedbackPolicy policy)
    : times_(std::move(times)), mu_(std::move(mu)), policy_(std::move(policy)) {
  if (times_.size() != mu_.size()) throw StructuralError("chain flow has mismatched time and mass counts");
}

LatticeDistribution ChainFlow::at(std::size_t k) const {
  auto v = mu_.at(k);
  for (double& x : v) x = std::max(x, 0.0);
  return LatticeDistribution(std::move(v));
}

bool ChainFlow::has_time(double t) const {
  const auto it = std::lower_bound(times_.begin(), times_.end(), t - 1e-12);
  return it != times_.end() && std::abs(*it - t) <= 1e-12;
}

std::size_t ChainFlow::index_of(double t) const {
  const auto it = std::lower_bound(times_.begin(), times_.end(), t - 1e-12);
  if (it == times_.end() || std::abs(*it - t) > 1e-12) {
    throw ArgumentError("time " + std::to_string(t) + " is not a sample of the chain flow");
  }
  return static_cast<std::size_t>(it - times_.begin());
}

std::vector<double> ChainFlow::interpolate(double t) const {
  if (t <= times_.front()) return mu_.front();
  if (t >= times_.back()) return mu_.back();
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  const std::size_t k = static_cast<std::size_t>(it - times_.begin()) - 1;
  const double lambda = (t - times_[k]) / (times_[k + 1] - times_[k]);
  std::vector<double> out(mu_[k].size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - lambda) * mu_[k][i] + lambda * mu_[k + 1][i];
  return out;
}

double max_stable_step(const LatticeChain& chain) {
  const double scale = chain.rate_bound * static_cast<double>(chain.generator->fan_out());
  return scale > 0.0 ? 0.5 / scale : INFINITY;
}

ChainFlow integrate_kolmogorov(const LatticeChain& chain, const LatticeDistribution& mu0, const FeedbackPolicy& policy,
                               double s, double r, double dt, std::vector<double> extra_times) {
  if (!(dt > 0.0)) throw ArgumentError("time step must be positive");
  const std::size_t n = chain.generator->node_count();
  if (mu0.size() != n) throw ArgumentError("initial distribution size differs from the node count");
  const double limit = max_stable_step(chain);
  if (dt > limit) {
    throw ConfigurationError("dt = " + std::to_string(dt) + " violates dt * B_Q * fan_out <= 0.5; use dt <= " +
                             std::to_string(limit));
  }
  if (s < policy.start() - 1e-12 || r > policy.end() + 1e-12) throw ArgumentError("interval outside the policy horizon");

  const auto bp = policy.breakpoints();
  extra_times.insert(extra_times.end(), bp.begin(), bp.end());
  const auto grid = merge_time_grid(s, r, dt, std::move(extra_times));

  auto apply = [&](const RateMatrix& q, const std::vector<double>& mu) {
    std::vector<double> out(n, 0.0);
    for (std::size_t x = 0; x < n; ++x) {
      if (mu[x] == 0.0) continue;
      for (const auto& e : q[x]) out[e.target] += mu[x] * e.rate;
    }
    return out;
  };

  std::vector<double> mu = mu0.values();
  std::vector<std::vector<double>> samples{mu};
  std::vector<double> tmp(n);
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const double t0 = grid[k];
    const double h = grid[k + 1] - t0;
    const double mid = t0 + 0.5 * h;
    const auto k1 = apply(relaxed_rates(chain, t0, mu, policy, mid), mu);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = mu[i] + 0.5 * h * k1[i];
    const auto k2 = apply(relaxed_rates(chain, mid, tmp, policy, mid), tmp);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = mu[i] + 0.5 * h * k2[i];
    const auto k3 = apply(relaxed_rates(chain, mid, tmp, policy, mid), tmp);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = mu[i] + h * k3[i];
    const auto k4 = apply(relaxed_rates(chain, grid[k + 1], tmp, policy, mid), tmp);
    double mass = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mu[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      if (mu[i] < -kNegativeMassTol) {
        throw ConfigurationError("negative mass " + std::to_string(mu[i]) + " at node " + std::to_string(i) +
                                 ", t = " + std::to_string(grid[k + 1]) + "; reduce dt");
      }
      mass += mu[i];
    }
    if (std::abs(mass - 1.0) > kLatticeSumTol) throw ConfigurationError("Kolmogorov integration lost mass");
    samples.push_back(mu);
  }
  return ChainFlow(grid, std::move(samples), policy);
}

double rate_bound_violation(const ChainFlow& flow, double rate_bound) {
  double worst = -INFINITY;
  const auto& t = flow.times();
  for (std::size_t a = 0; a < t.size(); ++a) {
    const auto& mu_a = flow.raw(a);
    for (std::size_t b = a + 1; b < t.size(); ++b) {
      const auto& mu_b = flow.raw(b);
      double change = 0.0;
      for (std::size_t x = 0; x < mu_a.size(); ++x) change = std::max(change, std::abs(mu_b[x] - mu_a[x]));
      worst = std::max(worst, change - rate_bound * (t[b] - t[a]));
    }
  }
  return worst;
}

AssumptionReport verify_assumptions(const LatticeChain& chain, std::size_t sample_budget, std::uint64_t seed) {
  AssumptionReport rep;
  rep.rate_bound_declared = chain.rate_bound;
  rep.approx_error_declared = chain.approx_error;
  const auto& grid = chain.grid;
  const std::size_t n = grid.size();
  const int d = grid.dim();

  // A1 on a regular sample of K with a quarter of the lattice spacing.
  if (chain.problem) {
    const Box& k = chain.problem->box;
    std::vector<std::size_t> counts(d);
    std::size_t total = 1;
    for (int i = 0; i < d; ++i) {
      counts[i] = static_cast<std::size_t>(std::ceil((k.hi[i] - k.lo[i]) / (0.25 * grid.spacing()))) + 1;
      total *= counts[i];
    }
    const double shrink = std::pow(200000.0 / static_cast<double>(total), 1.0 / d);
    if (shrink < 1.0) {
      total = 1;
      for (int i = 0; i < d; ++i) {
        counts[i] = std::max<std::size_t>(2, static_cast<std::size_t>(static_cast<double>(counts[i]) * shrink));
        total *= counts[i];
      }
    }
    std::vector<double> samples(total * d);
    for (std::size_t s = 0; s < total; ++s) {
      std::size_t rem = s;
      for (int i = d - 1; i >= 0; --i) {
        const std::size_t j = rem % counts[i];
        rem /= counts[i];
        samples[s * d + i] = k.lo[i] + (k.hi[i] - k.lo[i]) * static_cast<double>(j) / static_cast<double>(counts[i] - 1);
      }
    }
    rep.eps_space = lattice_covering_radius(grid, samples);
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> node_pick(0, n - 1);
  std::uniform_int_distribution<std::size_t> atom_pick(0, chain.generator->atom_count() - 1);
  double var_max = 0.0;
  std::vector<double> drift(d), f(d);
  for (std::size_t s = 0; s < sample_budget; ++s) {
    const double t = chain.horizon * unit(rng);
    // Alternate between point masses and spread distributions.
    std::vector<double> mu(n, 0.0);
    if (s % 2 == 0) {
      mu[node_pick(rng)] = 1.0;
    } else {
      double sum = 0.0;
      for (double& v : mu) {
        v = -std::log(1.0 - unit(rng));
        sum += v;
      }
      for (double& v : mu) v /= sum;
    }
    const std::size_t atom = atom_pick(rng);
    const auto q = chain.generator->rates(t, mu, atom);
    std::vector<double> feats;
    if (chain.problem) feats = chain.problem->features(t, embed_raw(mu, grid));
    for (std::size_t x = 0; x < n; ++x) {
      double row_sum = 0.0, var = 0.0;
      std::fill(drift.begin(), drift.end(), 0.0);
      const auto xbar = grid.node(x);
      for (const auto& e : q[x]) {
        row_sum += e.rate;
        rep.rate_bound_sampled = std::max(rep.rate_bound_sampled, std::abs(e.rate));
        if (e.target == x) continue;
        rep.min_off_diagonal = std::min(rep.min_off_diagonal, e.rate);
        const auto ybar = grid.node(e.target);
        double dist2 = 0.0;
        for (int i = 0; i < d; ++i) {
          drift[i] += (ybar[i] - xbar[i]) * e.rate;
          dist2 += (ybar[i] - xbar[i]) * (ybar[i] - xbar[i]);
        }
        var += dist2 * e.rate;
      }
      rep.row_sum_error = std::max(rep.row_sum_error, std::abs(row_sum));
      var_max = std::max(var_max, var);
      if (!chain.problem) continue;
      chain.problem->evaluate_with(t, xbar, feats, atom, f);
      double defect = 0.0;
      for (int i = 0; i < d; ++i) defect += (f[i] - drift[i]) * (f[i] - drift[i]);
      defect = std::sqrt(defect);
      bool interior = grid.is_regular();
      for (int i = 0; i < d && interior; ++i) {
        interior = grid.neighbor(x, i, 1).has_value() && grid.neighbor(x, i, -1).has_value();
      }
      double& slot = interior ? rep.eps_drift_interior : rep.eps_drift_boundary;
      slot = std::max(slot, defect);
    }
    ++rep.samples;
  }
  rep.eps_var = std::sqrt(var_max);
  return rep;
}

namespace {

constexpr std::uint64_t kJumpStream = 0x6a756d70;  // "jump"
constexpr std::size_t kChunk = 4096;

struct JumpAccumulator {
  std::vector<std::vector<double>> occupancy;
  std::vector<double> msd;
  std::vector<double> msd_sq;
  std::size_t jumps = 0;
};

}  // namespace

JumpSampleResult sample_jump_process(const LatticeChain& chain, const ChainFlow& flow, std::size_t n_samples,
                                     std::uint64_t seed, const JumpSampleOptions& options) {
  if (n_samples == 0) throw ArgumentError("need at least one sample path");
  const std::size_t n = chain.generator->node_count();
  const int d = chain.grid.dim();
  const auto& times = flow.times();
  const double s = times.front(), r = times.back();

  JumpSampleResult result;
  result.record_times = options.record_times.empty() ? times : options.record_times;
  std::sort(result.record_times.begin(), result.record_times.end());
  for (double t : result.record_times) {
    if (t < s - 1e-12 || t > r + 1e-12) throw ArgumentError("record time outside the flow");
  }
  const std::size_t n_rec = result.record_times.size();

  // Rates frozen on each flow step at its midpoint.
  std::vector<RateMatrix> step_rates;
  step_rates.reserve(times.size() - 1);
  for (std::size_t k = 0; k + 1 < times.size(); ++k) {
    const double mid = 0.5 * (times[k] + times[k + 1]);
    step_rates.push_back(relaxed_rates(chain, mid, flow.interpolate(mid), flow.policy(), mid));
  }
  const double majorant = chain.rate_bound * static_cast<double>(chain.generator->fan_out());

  const auto& mu0 = flow.raw(0);
  std::vector<double> cdf(n);
  double acc = 0.0;
  for (std::size_t x = 0; x < n; ++x) {
    acc += std::max(0.0, mu0[x]);
    cdf[x] = acc;
  }

  const std::size_t chunks = (n_samples + kChunk - 1) / kChunk;
  std::vector<JumpAccumulator> partial(chunks);
  if (options.keep_paths) result.paths.resize(n_samples);

  parallel_for(chunks, options.threads, [&](std::size_t c) {
    JumpAccumulator& a = partial[c];
    a.occupancy.assign(n_rec, std::vector<double>(n, 0.0));
    a.msd.assign(n_rec, 0.0);
    a.msd_sq.assign(n_rec, 0.0);
    const std::size_t begin = c * kChunk, end = std::min(n_samples, begin + kChunk);
    for (std::size_t i = begin; i < end; ++i) {
      std::mt19937_64 rng(derive_seed(seed, kJumpStream, i));
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      const double pick = unit(rng) * acc;
      std::size_t node = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), pick) - cdf.begin());
      node = std::min(node, n - 1);
      const std::size_t start = node;
      JumpPath* path = options.keep_paths ? &result.paths[i] : nullptr;
      if (path) path->start_node = start;

      double t = s;
      std::size_t step = 0, rec = 0;
      auto record_until = [&](double limit) {
        while (rec < n_rec && result.record_times[rec] < limit) {
          a.occupancy[rec][node] += 1.0;
          const auto x = chain.grid.node(node), x0 = chain.grid.node(start);
          double dist2 = 0.0;
          for (int k = 0; k < d; ++k) dist2 += (x[k] - x0[k]) * (x[k] - x0[k]);
          a.msd[rec] += dist2;
          a.msd_sq[rec] += dist2 * dist2;
          ++rec;
        }
      };
      while (majorant > 0.0) {
        t += -std::log(1.0 - unit(rng)) / majorant;
        if (t > r) break;
        record_until(t);
        while (step + 2 < times.size() && times[step + 1] <= t) ++step;
        const auto& row = step_rates[step][node];
        double out = 0.0;
        for (const auto& e : row) {
          if (e.target != node) out += e.rate;
        }
        double u = unit(rng) * majorant;
        if (u >= out) continue;
        for (const auto& e : row) {
          if (e.target == node) continue;
          if (u < e.rate) {
            node = e.target;
            break;
          }
          u -= e.rate;
        }
        ++a.jumps;
        if (path) {
          path->jump_times.push_back(t);
          path->nodes.push_back(node);
        }
      }
      record_until(INFINITY);
    }
  });

  result.samples = n_samples;
  result.occupancy.assign(n_rec, std::vector<double>(n, 0.0));
  result.mean_sq_displacement.assign(n_rec, 0.0);
  result.msd_std_error.assign(n_rec, 0.0);
  std::vector<double> sq(n_rec, 0.0);
  for (const auto& a : partial) {
    result.jumps += a.jumps;
    for (std::size_t k = 0; k < n_rec; ++k) {
      for (std::size_t x = 0; x < n; ++x) result.occupancy[k][x] += a.occupancy[k][x];
      result.mean_sq_displacement[k] += a.msd[k];
      sq[k] += a.msd_sq[k];
    }
  }
  const double ns = static_cast<double>(n_samples);
  for (std::size_t k = 0; k < n_rec; ++k) {
    for (double& v : result.occupancy[k]) v /= ns;
    const double mean = result.mean_sq_displacement[k] / ns;
    const double var = std::max(0.0, sq[k] / ns - mean * mean);
    result.mean_sq_displacement[k] = mean;
    result.msd_std_error[k] = std::sqrt(var / ns);
  }
  return result;
}

JumpSampleResult sample_jump_process(const LatticeChain& chain, const LatticeDistribution& mu0,
                                     const FeedbackPolicy& policy, double s, double r, double dt,
                                     std::size_t n_samples, std::uint64_t seed, const JumpSampleOptions& options) {
  const auto flow = integrate_kolmogorov(chain, mu0, policy, s, r, dt, options.record_times);
  return sample_jump_process(chain, flow, n_samples, seed, options);
}

}  // namespace mfcmc
