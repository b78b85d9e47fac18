// Acceptance checks. One PASS/FAIL line per criterion; nonzero exit if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "mfcmc/experiments.hpp"
#include "mfcmc/io.hpp"
#include "mfcmc/problems.hpp"
#include "mfcmc/transport.hpp"

using namespace mfcmc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

WeightedCloud random_cloud(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), w(0.05, 1.0);
  std::vector<double> coords(2 * n), weights(n);
  for (double& c : coords) c = u(rng);
  for (double& x : weights) x = w(rng);
  return WeightedCloud::normalized(2, coords, weights);
}

std::vector<VectorFieldProblem> builtin_problems() {
  std::vector<VectorFieldProblem> out;
  for (const auto& name : problem_names()) out.push_back(make_problem(name, json::object()));
  out.push_back(make_problem("attraction", {{"dim", 2}}));
  return out;
}

double kolmogorov_dt(const LatticeChain& chain) { return std::min(1e-3, max_stable_step(chain)); }

Outcome ot_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> size(1, 5);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const auto a = random_cloud(rng, size(rng)), b = random_cloud(rng, size(rng));
    const auto fast = optimal_plan(a, b), slow = brute_force_plan(a, b);
    worst = std::max(worst, std::abs(plan_cost(fast, a, b) - plan_cost(slow, a, b)));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && secs < 10.0, "max cost gap " + num(worst) + ", " + num(secs) + " s"};
}

Outcome generator_soundness() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::ostringstream detail;
  for (const auto& problem : builtin_problems()) {
    for (double h : {0.2, 0.1, 0.05}) {
      const auto chain = build_lattice_chain(problem, h);
      const auto r = verify_assumptions(chain, 64, 11);
      const double second_moment_cap = h * problem.dim * problem.bound + 1e-12;
      const bool good = r.row_sum_error <= 1e-12 && r.eps_drift_interior <= 1e-12 &&
                        r.eps_var * r.eps_var <= second_moment_cap && r.min_off_diagonal >= 0.0;
      if (!good) {
        ok = false;
        detail << problem.name << "/d" << problem.dim << " h " << h << ": rows " << num(r.row_sum_error) << " drift "
               << num(r.eps_drift_interior) << " jump^2 " << num(r.eps_var * r.eps_var) << "; ";
      }
    }
  }
  const double secs = seconds_since(t0);
  detail << num(secs) << " s";
  return {ok && secs < 30.0, detail.str()};
}

Outcome conservation() {
  bool ok = true;
  double mass_err = 0.0, min_entry = 0.0, lemma_excess = -1.0;
  StrategySpec steer;
  InitialSpec init;
  init.particles = 400;
  for (const auto& problem : builtin_problems()) {
    for (double h : {0.2, 0.1}) {
      const auto chain = build_lattice_chain(problem, h);
      const auto mu0 = LatticeDistribution::project(sample_initial_cloud(init, problem.dim, 5), chain.grid);
      const auto policy = strategy_policy(steer, problem, chain.grid);
      const auto flow = integrate_kolmogorov(chain, mu0, policy, 0.0, problem.horizon, kolmogorov_dt(chain));
      const auto& times = flow.times();
      for (std::size_t k = 0; k < times.size(); ++k) {
        double s = 0.0;
        for (double v : flow.raw(k)) {
          s += v;
          min_entry = std::min(min_entry, v);
        }
        mass_err = std::max(mass_err, std::abs(s - 1.0));
      }
      // every pair on a thinned set of sampled times
      const std::size_t stride = std::max<std::size_t>(1, times.size() / 150);
      for (std::size_t a = 0; a < times.size(); a += stride) {
        for (std::size_t b = a + stride; b < times.size(); b += stride) {
          double diff = 0.0;
          for (std::size_t x = 0; x < flow.node_count(); ++x) {
            diff = std::max(diff, std::abs(flow.raw(b)[x] - flow.raw(a)[x]));
          }
          lemma_excess = std::max(lemma_excess, diff - chain.rate_bound * (times[b] - times[a]));
        }
      }
    }
  }
  ok = mass_err <= 1e-9 && min_entry >= -1e-12 && lemma_excess <= 1e-8;
  return {ok, "mass err " + num(mass_err) + ", min entry " + num(min_entry) + ", rate bound excess " +
                  num(lemma_excess)};
}

Outcome two_node_chain() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto chain = make_two_node_chain(1.0);
  const auto policy = FeedbackPolicy::constant(2, RelaxedControl::uniform(0, 1, 1));
  const auto flow = integrate_kolmogorov(chain, LatticeDistribution::dirac(2, 0), policy, 0.0, 1.0, 1e-3);
  const double p = std::exp(-1.0);
  const double ode_err = std::abs(flow.raw(flow.times().size() - 1)[0] - p);
  const std::size_t n = 100000;
  const auto jumps = sample_jump_process(chain, LatticeDistribution::dirac(2, 0), policy, 0.0, 1.0, 1e-3, n, 4);
  const double sigma = std::sqrt(p * (1 - p) / n);
  const double mc_err = std::abs(jumps.occupancy.back()[0] - p);
  const double secs = seconds_since(t0);
  return {ode_err <= 1e-8 && mc_err <= 3 * sigma && secs < 60.0,
          "ode err " + num(ode_err) + ", sampler err " + num(mc_err / sigma) + " sigma, " + num(secs) + " s"};
}

Outcome jump_moment_bound() {
  const auto t0 = std::chrono::steady_clock::now();
  const double R = 1.0, T = 1.0, h = 0.1;
  const auto atoms = ControlAtomSet::uniform_scalar(2, -1.0, 1.0);
  const auto problem = make_constant_problem({R}, Box::cube(1, -2.0, 2.0), T, atoms);
  const auto chain = build_lattice_chain(problem, h);
  const auto mu0 = LatticeDistribution::dirac(chain.grid.size(), chain.grid.nearest(std::vector<double>{-1.0}));
  const auto policy = FeedbackPolicy::constant(chain.grid.size(), RelaxedControl::uniform(0, T, 2));
  JumpSampleOptions opt;
  opt.record_times = {0.0, 0.25, 0.5, 1.0};
  const auto res = sample_jump_process(chain, mu0, policy, 0.0, T, 0.01, 100000, 21, opt);
  const double eps = chain.approx_error;
  const double c1 = 4 * (R + 1) * std::exp(2 * (R + 1) * T) / 3;
  bool ok = true;
  std::ostringstream detail;
  for (std::size_t k = 1; k < opt.record_times.size(); ++k) {
    const double t = opt.record_times[k];
    const double msd = res.mean_sq_displacement[k], se = res.msd_std_error[k];
    const double bound = eps * eps * t + c1 * std::pow(t, 1.5);
    // X(t) - X(0) = h N, N Poisson(R t / h): spread h R t on top of the drift (R t)^2
    const double poisson = h * R * t + R * R * t * t;
    ok = ok && msd <= bound + 3 * se && std::abs(msd - poisson) <= 3 * se;
    detail << "t " << t << ": " << num(msd) << " vs " << num(poisson) << " (bound " << num(bound) << "); ";
  }
  const double secs = seconds_since(t0);
  detail << num(secs) << " s";
  return {ok && secs < 60.0, detail.str()};
}

Outcome ode_oracle() {
  AttractionParams p;
  p.half_width = 2.0;
  p.margin = 0.5;
  p.control_gain = 0.0;
  const auto problem = make_attraction_problem(p);
  const WeightedCloud m(1, {-1.0, 1.0}, {0.5, 0.5});
  const auto flow =
      integrate_mfc(problem, ControlDistribution::uniform_control(m, RelaxedControl::dirac(0, 1, 3, 0)), 1e-3);
  double err = 0.0;
  for (std::size_t k = 0; k < flow.times().size(); ++k) {
    const double e = std::exp(-flow.times()[k]);
    err = std::max({err, std::abs(flow.state(k, 0)[0] + e), std::abs(flow.state(k, 1)[0] - e)});
  }
  AttractionParams q;
  q.gain = 1.5;
  q.control_gain = 0.5;
  const auto smooth = make_attraction_problem(q);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<double> xs(20);
  for (double& x : xs) x = u(rng);
  const auto cloud = WeightedCloud::normalized(1, xs, std::vector<double>(xs.size(), 1.0));
  const auto alpha = ControlDistribution::uniform_control(cloud, RelaxedControl::constant(0, 1, {0.2, 0.3, 0.5}));
  const auto f1 = integrate_mfc(smooth, alpha, 0.1), f2 = integrate_mfc(smooth, alpha, 0.05),
             f3 = integrate_mfc(smooth, alpha, 0.025);
  double ratio = INFINITY;
  for (double t : {0.5, 1.0}) {
    ratio = std::min(ratio, wasserstein(f1.cloud_at(t), f2.cloud_at(t)) / wasserstein(f2.cloud_at(t), f3.cloud_at(t)));
  }
  return {err <= 1e-6 && ratio >= 8.0, "oracle err " + num(err) + ", halving ratio " + num(ratio)};
}

Outcome zero_case() {
  const auto problem = make_problem("zero", json::object());
  const auto chain = build_lattice_chain(problem, 0.1);
  InitialSpec init;
  init.particles = 300;
  const auto mu0 = LatticeDistribution::project(sample_initial_cloud(init, 1, 8), chain.grid);
  const auto m0 = embed_lattice(mu0, chain.grid);
  const auto partition = Partition::uniform(1.0, 10);
  MpcOptions opt;
  opt.dt = 0.002;
  StrategySpec steer;
  const auto fwd = mpc_deterministic_from_chain(problem, chain, m0, mu0, strategy_policy(steer, problem, chain.grid),
                                                partition, opt);
  const auto rev =
      mpc_chain_from_deterministic(problem, chain, mu0, strategy_distribution(steer, problem, m0), partition, opt);
  return {fwd.report.sup <= 1e-12 && rev.report.sup <= 1e-12,
          "forward " + num(fwd.report.sup) + ", reverse " + num(rev.report.sup)};
}

json attraction_config() {
  return {{"problem", {{"name", "attraction"}, {"params", {{"dim", 1}, {"horizon", 1.0}}}}},
          {"dt", 0.002},
          {"initial", {{"particles", 500}}},
          {"seed", 7}};
}

bool non_increasing(const std::vector<double>& v) {
  for (std::size_t k = 1; k < v.size(); ++k) {
    if (v[k] > 1.1 * v[k - 1]) return false;
  }
  return true;
}

Outcome h_sweep() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::ostringstream detail;
  for (const char* direction : {"forward", "reverse"}) {
    auto j = attraction_config();
    j["h"] = {0.2, 0.1, 0.05};
    j["steps"] = 20;
    j["direction"] = direction;
    const auto res = run_convergence(parse_config(j), 4);
    std::vector<double> sup;
    for (const auto& r : res.rows) sup.push_back(r.sup_w2);
    std::vector<double> eps;
    for (const auto& r : res.rows) eps.push_back(std::sqrt(r.h * r.rate_bound * r.h));  // sqrt(h d R)
    const auto slope = loglog_slope(eps, sup);
    ok = ok && non_increasing(sup) && slope && *slope >= 0.4;
    detail << direction << " sup W2";
    for (double s : sup) detail << " " << num(s);
    detail << " slope " << (slope ? num(*slope) : "undefined") << "; ";
  }
  const double secs = seconds_since(t0);
  detail << num(secs) << " s";
  return {ok && secs < 600.0, detail.str()};
}

Outcome steps_sweep() {
  bool ok = true;
  std::ostringstream detail;
  for (const char* direction : {"forward", "reverse"}) {
    auto j = attraction_config();
    j["h"] = 0.05;
    j["steps"] = {5, 10, 20, 40};
    j["sweep"] = "steps";
    j["direction"] = direction;
    const auto res = run_convergence(parse_config(j), 4);
    std::vector<double> sup;
    for (const auto& r : res.rows) sup.push_back(r.sup_w2);
    const auto& last = res.rows.back();
    const double envelope = 5 * (last.w2_initial + last.eps);
    ok = ok && non_increasing(sup) && sup.back() <= envelope;
    detail << direction << " sup W2";
    for (double s : sup) detail << " " << num(s);
    detail << " envelope " << num(envelope) << "; ";
  }
  return {ok, detail.str()};
}

Outcome hausdorff_sweep() {
  const auto t0 = std::chrono::steady_clock::now();
  auto j = attraction_config();
  j["h"] = {0.2, 0.1, 0.05};
  j["steps"] = 20;
  j["samples"] = 3;
  j["initial"]["on_lattice"] = true;
  const auto sweep = run_hausdorff(parse_config(j), 4);
  std::vector<double> est, eps;
  for (const auto& r : sweep.rows) {
    est.push_back(r.estimate.estimate);
    eps.push_back(r.eps);
  }
  bool decreasing = true;
  for (std::size_t k = 1; k < est.size(); ++k) decreasing = decreasing && est[k] < est[k - 1];
  const auto slope = loglog_slope(eps, est);
  const double secs = seconds_since(t0);
  std::ostringstream detail;
  detail << "H";
  for (double e : est) detail << " " << num(e);
  detail << " slope " << (slope ? num(*slope) : "undefined") << ", " << num(secs) << " s";
  return {decreasing && slope && *slope >= 0.4 && secs < 900.0, detail.str()};
}

Outcome reproducibility() {
  const auto root = fs::temp_directory_path() / "mfcmc_acceptance_repro";
  fs::remove_all(root);
  fs::create_directories(root);
  auto j = attraction_config();
  j["h"] = {0.2, 0.1, 0.05};
  j["steps"] = 10;
  j["samples"] = 2;
  j["jump_samples"] = 500;
  j["initial"]["particles"] = 200;
  const auto cfg = (root / "config.json").string();
  io::write_json(cfg, j);
  std::size_t compared = 0;
  std::vector<std::string> mismatched;
  for (const std::string cmd : {"build-chain", "simulate-mfc", "simulate-chain", "mpc-forward", "mpc-reverse",
                                "convergence", "hausdorff"}) {
    const auto a = root / (cmd + "_a"), b = root / (cmd + "_b");
    std::ostringstream out, err;
    if (run_cli({cmd, "--config", cfg, "--out", a.string(), "--threads", "1"}, out, err) != 0 ||
        run_cli({cmd, "--config", cfg, "--out", b.string(), "--threads", "4"}, out, err) != 0) {
      return {false, cmd + " failed: " + err.str()};
    }
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
      if (!entry.is_regular_file()) continue;
      const auto rel = fs::relative(entry.path(), a);
      ++compared;
      if (!fs::exists(b / rel) || io::read_text(entry.path().string()) != io::read_text((b / rel).string())) {
        mismatched.push_back(cmd + "/" + rel.string());
      }
    }
  }
  fs::remove_all(root);
  std::string detail = std::to_string(compared) + " files compared";
  for (const auto& m : mismatched) detail += ", differs: " + m;
  return {mismatched.empty() && compared > 0, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"ot-oracle", ot_oracle},
      {"generator-soundness", generator_soundness},
      {"conservation", conservation},
      {"two-node-chain", two_node_chain},
      {"jump-moment-bound", jump_moment_bound},
      {"ode-oracle", ode_oracle},
      {"mpc-zero-case", zero_case},
      {"h-sweep-trend", h_sweep},
      {"partition-trend", steps_sweep},
      {"hausdorff-trend", hausdorff_sweep},
      {"reproducibility", reproducibility},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
