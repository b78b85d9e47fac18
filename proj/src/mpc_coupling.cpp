#include "mfcmc/mpc_coupling.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "mfcmc/control_transfer.hpp"
#include "mfcmc/errors.hpp"
#include "mfcmc/util.hpp"

namespace mfcmc {

Partition::Partition(std::vector<double> times) : times_(std::move(times)) {
  if (times_.size() < 2) throw ArgumentError("partition needs at least one step");
  if (times_.front() != 0.0) throw ArgumentError("partition must start at 0");
  for (std::size_t k = 0; k + 1 < times_.size(); ++k) {
    if (!(times_[k] < times_[k + 1])) throw ArgumentError("partition times must be strictly increasing");
  }
}

Partition Partition::uniform(double horizon, std::size_t steps) {
  if (steps == 0 || !(horizon > 0.0)) throw ArgumentError("uniform partition needs steps >= 1 and T > 0");
  std::vector<double> t(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) t[k] = horizon * static_cast<double>(k) / static_cast<double>(steps);
  t.back() = horizon;
  return Partition(std::move(t));
}

double Partition::fineness() const {
  double d = 0.0;
  for (std::size_t k = 0; k + 1 < times_.size(); ++k) d = std::max(d, times_[k + 1] - times_[k]);
  return d;
}

SegmentedFlow::SegmentedFlow(const MFCFlow& flow) {
  segments.push_back(flow);
  start_clouds.push_back(flow.cloud(0));
  starts.push_back(flow.times().front());
}

WeightedCloud SegmentedFlow::cloud_at(double t) const {
  if (t < start() - 1e-12 || t > end() + 1e-12) throw ArgumentError("time " + std::to_string(t) + " outside the flow");
  std::size_t k = static_cast<std::size_t>(std::upper_bound(starts.begin(), starts.end(), t + 1e-12) - starts.begin());
  k = std::max<std::size_t>(k, 1) - 1;
  if (std::abs(t - starts[k]) <= 1e-12) return start_clouds[k];
  return segments[k].cloud_at(t);
}

std::vector<double> evaluation_times(const Partition& partition, std::size_t eval_points) {
  const double horizon = partition.times().back();
  std::vector<double> t = partition.times();
  const std::size_t n = std::max<std::size_t>(eval_points, 2);
  for (std::size_t k = 0; k < n; ++k) t.push_back(horizon * static_cast<double>(k) / static_cast<double>(n - 1));
  std::sort(t.begin(), t.end());
  // Drop uniform points that duplicate a partition time up to rounding.
  std::vector<double> out;
  for (double x : t) {
    if (out.empty() || x - out.back() > 1e-12) {
      out.push_back(x);
    } else if (std::binary_search(partition.times().begin(), partition.times().end(), x)) {
      out.back() = x;
    }
  }
  return out;
}

namespace {

std::vector<double> times_in(const std::vector<double>& times, double s, double r) {
  std::vector<double> out;
  for (double t : times) {
    if (t >= s && t <= r) out.push_back(t);
  }
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// One lineage of alpha_0 ⋄ ... ⋄ alpha_k, carried by a particle.
struct Lineage {
  double weight;
  std::vector<double> origin;
  std::optional<RelaxedControl> control;
};

ChainFlow join_chain_segments(const std::vector<ChainFlow>& segments, FeedbackPolicy policy) {
  std::vector<double> times;
  std::vector<std::vector<double>> mu;
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const auto& seg = segments[k];
    for (std::size_t i = (k == 0 ? 0 : 1); i < seg.times().size(); ++i) {
      times.push_back(seg.times()[i]);
      mu.push_back(seg.raw(i));
    }
  }
  return ChainFlow(std::move(times), std::move(mu), std::move(policy));
}

}  // namespace

DiscrepancyReport discrepancy(const SegmentedFlow& mfc, const ChainFlow& chain_flow, const LatticeGrid& grid,
                              const std::vector<double>& eval_times) {
  DiscrepancyReport rep;
  rep.times = eval_times;
  rep.w2.reserve(eval_times.size());
  for (double t : eval_times) {
    if (!chain_flow.has_time(t)) throw ArgumentError("time " + std::to_string(t) + " is not covered by the chain flow");
    const auto m = mfc.cloud_at(t);
    const auto nu = embed_lattice(chain_flow.at(chain_flow.index_of(t)), grid);
    const double w = wasserstein(m, nu);
    rep.w2.push_back(w);
    rep.sup = std::max(rep.sup, w);
  }
  if (!rep.w2.empty()) rep.w2_initial = rep.w2.front();
  return rep;
}

ForwardMpcResult mpc_deterministic_from_chain(const VectorFieldProblem& problem, const LatticeChain& chain,
                                              const WeightedCloud& m0, const LatticeDistribution& mu0,
                                              const FeedbackPolicy& policy, const Partition& partition,
                                              const MpcOptions& options) {
  for (std::size_t i = 0; i < m0.size(); ++i) {
    if (!problem.box.contains(m0.point(i))) throw DomainError("initial cloud has mass outside K");
  }
  const auto& s = partition.times();
  const double horizon = s.back();
  const auto eval = evaluation_times(partition, options.eval_points);
  const double tol = options.coalesce_tol >= 0.0 ? options.coalesce_tol : chain.grid.spacing() * 1e-3;

  ForwardMpcResult result;
  // mu(.) does not depend on the particle side: integrate it once.
  result.chain_flow = integrate_kolmogorov(chain, mu0, policy, 0.0, horizon, options.dt, eval);

  WeightedCloud current = m0;
  std::vector<std::vector<Lineage>> lineages;
  if (options.record_concatenation) {
    for (std::size_t i = 0; i < m0.size(); ++i) {
      const auto x = m0.point(i);
      lineages.push_back({{m0.weight(i), std::vector<double>(x.begin(), x.end()), std::nullopt}});
    }
  }

  for (std::size_t k = 0; k + 1 < s.size(); ++k) {
    const auto clock = std::chrono::steady_clock::now();
    const double sk = s[k], sk1 = s[k + 1];
    std::vector<std::size_t> node_of;
    const auto target = embed_lattice(result.chain_flow.at(result.chain_flow.index_of(sk)), chain.grid, &node_of);
    auto plan = optimal_plan(current, target);
    check_marginals(plan, current, target);

    // alpha_k = (p1, zeta)# pi_k realized by splitting particles along the plan.
    std::vector<ControlItem> items;
    items.reserve(plan.entries.size());
    std::vector<std::vector<Lineage>> child_lineages;
    for (const auto& e : plan.entries) {
      const auto x = current.point(e.source);
      auto control = restrict(policy.at(node_of[e.target]), sk, sk1);
      if (options.record_concatenation) {
        const double share = e.mass / current.weight(e.source);
        std::vector<Lineage> ls;
        for (const auto& l : lineages[e.source]) {
          ls.push_back({l.weight * share, l.origin,
                        l.control ? concat_controls(*l.control, control) : control});
        }
        child_lineages.push_back(std::move(ls));
      }
      items.push_back({e.mass, std::vector<double>(x.begin(), x.end()), std::move(control)});
    }
    double total = 0.0;
    for (const auto& it : items) total += it.weight;
    if (!is_unit_total(total, items.size())) {
      for (auto& it : items) it.weight /= total;
    }
    const ControlDistribution alpha_k(problem.dim, std::move(items));

    auto segment = integrate_mfc(problem, alpha_k, options.dt, times_in(eval, sk, sk1));
    std::vector<std::size_t> cluster_of;
    auto next = coalesce(segment.cloud(segment.times().size() - 1), tol, &cluster_of);
    if (next.size() > options.max_particles) {
      throw ResourceError("step " + std::to_string(k) + " holds " + std::to_string(next.size()) +
                          " particles after coalescing, cap is " + std::to_string(options.max_particles));
    }
    if (options.record_concatenation) {
      std::vector<std::vector<Lineage>> merged(next.size());
      std::size_t count = 0;
      for (std::size_t c = 0; c < child_lineages.size(); ++c) {
        for (auto& l : child_lineages[c]) merged[cluster_of[c]].push_back(std::move(l));
        count += merged[cluster_of[c]].size();
      }
      if (count > options.max_lineages) throw ResourceError("lineage cap exceeded at step " + std::to_string(k));
      lineages = std::move(merged);
    }

    StepRecord rec;
    rec.time = sk;
    rec.w2 = std::sqrt(std::max(0.0, plan.cost));
    rec.particles = current.size();
    rec.nodes = target.size();
    rec.plan = std::move(plan);
    rec.seconds = seconds_since(clock);
    result.trace.steps.push_back(std::move(rec));

    result.flow.segments.push_back(std::move(segment));
    result.flow.start_clouds.push_back(current);
    result.flow.starts.push_back(sk);
    current = std::move(next);
  }

  if (options.record_concatenation) {
    std::vector<ControlItem> items;
    for (const auto& ls : lineages) {
      for (const auto& l : ls) items.push_back({l.weight, l.origin, *l.control});
    }
    double total = 0.0;
    for (const auto& it : items) total += it.weight;
    if (!is_unit_total(total, items.size())) {
      for (auto& it : items) it.weight /= total;
    }
    result.concatenated = ControlDistribution(problem.dim, std::move(items));
  }

  result.report = discrepancy(result.flow, result.chain_flow, chain.grid, eval);
  result.report.eps = chain.approx_error;
  result.report.rate_bound = chain.rate_bound;
  result.report.fineness = partition.fineness();
  return result;
}

ReverseMpcResult mpc_chain_from_deterministic(const VectorFieldProblem& problem, const LatticeChain& chain,
                                              const LatticeDistribution& mu0, const ControlDistribution& alpha,
                                              const Partition& partition, const MpcOptions& options) {
  const auto& s = partition.times();
  const double horizon = s.back();
  if (std::abs(alpha.start()) > 1e-12 || std::abs(alpha.end() - horizon) > 1e-12) {
    throw ArgumentError("control distribution must cover [0, T]");
  }
  const auto eval = evaluation_times(partition, options.eval_points);
  const std::size_t n_nodes = chain.grid.size();

  ReverseMpcResult result;
  // m(.) = m(., 0, alpha) does not depend on the chain: integrate it once.
  result.flow = integrate_mfc(problem, alpha, options.dt, eval);

  std::vector<ChainFlow> segments;
  std::optional<FeedbackPolicy> joined;
  LatticeDistribution mu = mu0;
  for (std::size_t k = 0; k + 1 < s.size(); ++k) {
    const auto clock = std::chrono::steady_clock::now();
    const double sk = s[k], sk1 = s[k + 1];
    const auto alpha_k = restrict_distribution(alpha, sk, sk1, result.flow);
    const auto m_k = result.flow.cloud_at(sk);
    std::vector<std::size_t> node_of;
    const auto source = embed_lattice(mu, chain.grid, &node_of);
    auto plan = optimal_plan(source, m_k);
    check_marginals(plan, source, m_k);

    // zeta_{x,k}: pi_k(.|x)-average of the item controls.
    std::vector<RelaxedControl> per_node(n_nodes, RelaxedControl::uniform(sk, sk1, problem.atoms.size()));
    std::vector<bool> covered(n_nodes, false);
    for (const auto& row : disintegrate(plan, PlanSide::source)) {
      std::vector<const RelaxedControl*> controls;
      controls.reserve(row.others.size());
      for (std::size_t item : row.others) controls.push_back(&alpha_k.item(item).control);
      const std::size_t node = node_of[row.atom];
      per_node[node] = mix_controls(row.probabilities, std::span<const RelaxedControl* const>(controls));
      covered[node] = true;
    }
    FeedbackPolicy step_policy(std::move(per_node));

    auto segment = integrate_kolmogorov(chain, mu, step_policy, sk, sk1, options.dt, times_in(eval, sk, sk1));
    mu = segment.at(segment.times().size() - 1);

    StepRecord rec;
    rec.time = sk;
    rec.w2 = std::sqrt(std::max(0.0, plan.cost));
    rec.particles = m_k.size();
    rec.nodes = source.size();
    rec.zero_mass_nodes = static_cast<std::size_t>(std::count(covered.begin(), covered.end(), false));
    rec.plan = std::move(plan);
    rec.seconds = seconds_since(clock);
    result.trace.steps.push_back(std::move(rec));

    joined = joined ? concat_policies(*joined, step_policy) : step_policy;
    segments.push_back(std::move(segment));
  }
  result.policy = *joined;
  result.chain_flow = join_chain_segments(segments, result.policy);

  result.report = discrepancy(SegmentedFlow(result.flow), result.chain_flow, chain.grid, eval);
  result.report.eps = chain.approx_error;
  result.report.rate_bound = chain.rate_bound;
  result.report.fineness = partition.fineness();
  return result;
}

HausdorffEstimate hausdorff_estimate(const VectorFieldProblem& problem, const LatticeChain& chain,
                                     const WeightedCloud& m0, const LatticeDistribution& mu0,
                                     const std::vector<ControlDistribution>& deterministic_samples,
                                     const std::vector<FeedbackPolicy>& policy_samples, const Partition& partition,
                                     const MpcOptions& options, std::size_t threads) {
  if (deterministic_samples.empty() || policy_samples.empty()) {
    throw ArgumentError("both strategy sample sets must be nonempty");
  }
  const std::size_t na = deterministic_samples.size();
  const std::size_t nb = policy_samples.size();
  std::vector<double> dist(na + nb, 0.0);
  parallel_for(na + nb, threads, [&](std::size_t i) {
    if (i < na) {
      dist[i] = mpc_chain_from_deterministic(problem, chain, mu0, deterministic_samples[i], partition, options).report.sup;
    } else {
      dist[i] = mpc_deterministic_from_chain(problem, chain, m0, mu0, policy_samples[i - na], partition, options)
                    .report.sup;
    }
  });
  HausdorffEstimate est;
  for (std::size_t i = 0; i < na + nb; ++i) {
    const bool side_a = i < na;
    est.table.push_back({side_a ? 'a' : 'b', side_a ? i : i - na, dist[i]});
    double& slot = side_a ? est.one_sided_a : est.one_sided_b;
    slot = std::max(slot, dist[i]);
  }
  est.estimate = std::max(est.one_sided_a, est.one_sided_b);
  return est;
}

}  // namespace mfcmc
