#include "mfcmc/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <random>
#include <set>

#include <CLI11.hpp>

#include "mfcmc/errors.hpp"
#include "mfcmc/io.hpp"
#include "mfcmc/problems.hpp"
#include "mfcmc/util.hpp"

namespace mfcmc {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::string& path, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(path.empty() ? key : path + "." + key, "unknown key");
  }
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "must be a number");
  return j.get<double>();
}

std::size_t get_count(const json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() < 0) throw ConfigError(path, "must be a nonnegative integer");
  return j.get<std::size_t>();
}

double get_positive(const json& j, const std::string& path) {
  const double v = get_number(j, path);
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(path, "must be positive");
  return v;
}

std::vector<double> get_number_list(const json& j, const std::string& path) {
  if (j.is_number()) return {get_number(j, path)};
  if (!j.is_array() || j.empty()) throw ConfigError(path, "must be a number or a nonempty array");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_number(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

std::string get_string(const json& j, const std::string& path, const std::set<std::string>& allowed = {}) {
  if (!j.is_string()) throw ConfigError(path, "must be a string");
  auto s = j.get<std::string>();
  if (!allowed.empty() && !allowed.count(s)) throw ConfigError(path, "unsupported value '" + s + "'");
  return s;
}

InitialSpec parse_initial(const json& j, const std::string& path) {
  reject_unknown(j, path, {"center", "sd", "clip", "particles", "on_lattice"});
  InitialSpec s;
  if (j.contains("center")) s.center = get_number_list(j["center"], join(path, "center"));
  if (j.contains("sd")) s.sd = get_positive(j["sd"], join(path, "sd"));
  if (j.contains("clip")) s.clip = get_positive(j["clip"], join(path, "clip"));
  if (j.contains("particles")) s.particles = get_count(j["particles"], join(path, "particles"));
  if (j.contains("on_lattice")) {
    if (!j["on_lattice"].is_boolean()) throw ConfigError(join(path, "on_lattice"), "must be a boolean");
    s.on_lattice = j["on_lattice"].get<bool>();
  }
  if (s.particles == 0) throw ConfigError(join(path, "particles"), "must be positive");
  return s;
}

StrategySpec parse_strategy(const json& j, const std::string& path) {
  reject_unknown(j, path, {"kind", "targets", "gain", "atom", "cells"});
  StrategySpec s;
  if (j.contains("kind")) s.kind = get_string(j["kind"], join(path, "kind"), {"steer", "dirac", "uniform"});
  if (j.contains("targets")) s.targets = get_number_list(j["targets"], join(path, "targets"));
  if (j.contains("gain")) s.gain = get_number(j["gain"], join(path, "gain"));
  if (j.contains("atom")) s.atom = get_count(j["atom"], join(path, "atom"));
  if (j.contains("cells")) s.cells = get_count(j["cells"], join(path, "cells"));
  if (s.cells == 0) throw ConfigError(join(path, "cells"), "must be positive");
  return s;
}

// Sorted (value, atom) pairs of a scalar atom set.
std::vector<std::pair<double, std::size_t>> sorted_scalar_atoms(const ControlAtomSet& atoms) {
  std::vector<std::pair<double, std::size_t>> out;
  for (std::size_t k = 0; k < atoms.size(); ++k) out.emplace_back(atoms.atom(k)[0], k);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> relaxed_value(const std::vector<std::pair<double, std::size_t>>& sorted, std::size_t n,
                                  double u) {
  std::vector<double> w(n, 0.0);
  if (u <= sorted.front().first) {
    w[sorted.front().second] = 1.0;
    return w;
  }
  if (u >= sorted.back().first) {
    w[sorted.back().second] = 1.0;
    return w;
  }
  for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
    const double a = sorted[k].first, b = sorted[k + 1].first;
    if (u >= a && u <= b) {
      const double lam = b > a ? (u - a) / (b - a) : 0.0;
      w[sorted[k].second] += 1.0 - lam;
      w[sorted[k + 1].second] += lam;
      return w;
    }
  }
  w[sorted.back().second] = 1.0;
  return w;
}

std::vector<double> eval_grid(double horizon, std::size_t points) {
  std::vector<double> t(std::max<std::size_t>(points, 2));
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = horizon * static_cast<double>(k) / static_cast<double>(t.size() - 1);
  return t;
}

std::size_t node_cap(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv("MFC_MAX_NODES")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0' || v == 0) throw ConfigError("MFC_MAX_NODES", "must be a positive integer");
    return static_cast<std::size_t>(v);
  }
  return cfg.max_nodes;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  reject_unknown(j, "", {"problem", "h", "steps", "dt", "direction", "sweep", "initial", "strategy", "samples", "seed",
                         "eval_points", "max_nodes", "max_particles", "verify_budget", "jump_samples"});
  ExperimentConfig c;
  if (j.contains("problem")) {
    const auto& p = j["problem"];
    reject_unknown(p, "problem", {"name", "params"});
    if (p.contains("name")) c.problem = get_string(p["name"], "problem.name");
    if (p.contains("params")) c.params = p["params"];
  }
  if (j.contains("h")) {
    c.h = get_number_list(j["h"], "h");
    for (std::size_t i = 0; i < c.h.size(); ++i) {
      if (!(c.h[i] > 0.0)) throw ConfigError("h[" + std::to_string(i) + "]", "must be positive");
    }
  }
  if (j.contains("steps")) {
    const auto& s = j["steps"];
    c.steps.clear();
    if (s.is_array()) {
      if (s.empty()) throw ConfigError("steps", "must be nonempty");
      for (std::size_t i = 0; i < s.size(); ++i) c.steps.push_back(get_count(s[i], "steps[" + std::to_string(i) + "]"));
    } else {
      c.steps.push_back(get_count(s, "steps"));
    }
    for (std::size_t i = 0; i < c.steps.size(); ++i) {
      if (c.steps[i] == 0) throw ConfigError("steps[" + std::to_string(i) + "]", "must be positive");
    }
  }
  if (j.contains("dt")) c.dt = get_positive(j["dt"], "dt");
  if (j.contains("direction")) c.direction = get_string(j["direction"], "direction", {"forward", "reverse"});
  if (j.contains("sweep")) c.sweep = get_string(j["sweep"], "sweep", {"h", "steps"});
  if (j.contains("initial")) c.initial = parse_initial(j["initial"], "initial");
  if (j.contains("strategy")) c.strategy = parse_strategy(j["strategy"], "strategy");
  if (j.contains("samples")) c.samples = get_count(j["samples"], "samples");
  if (j.contains("seed")) {
    const auto& v = j["seed"];
    const bool ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    if (!ok) throw ConfigError("seed", "must be an unsigned 64-bit integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("eval_points")) c.eval_points = get_count(j["eval_points"], "eval_points");
  if (j.contains("max_nodes")) c.max_nodes = get_count(j["max_nodes"], "max_nodes");
  if (j.contains("max_particles")) c.max_particles = get_count(j["max_particles"], "max_particles");
  if (j.contains("verify_budget")) c.verify_budget = get_count(j["verify_budget"], "verify_budget");
  if (j.contains("jump_samples")) c.jump_samples = get_count(j["jump_samples"], "jump_samples");
  if (c.samples == 0) throw ConfigError("samples", "must be positive");
  if (c.eval_points < 2) throw ConfigError("eval_points", "must be at least 2");

  // Builds the problem once to surface parameter errors and check dt.
  const auto problem = make_problem(c.problem, c.params);
  if (c.initial.center.size() != 1 && static_cast<int>(c.initial.center.size()) != problem.dim) {
    throw ConfigError("initial.center", "length must be 1 or the problem dimension");
  }
  if (c.strategy.kind == "dirac" && c.strategy.atom >= problem.atoms.size()) {
    throw ConfigError("strategy.atom", "no such control atom");
  }
  for (std::size_t i = 0; i < c.h.size(); ++i) {
    const double rate = problem.dim * problem.bound / c.h[i];
    const double fan_out = 2.0 * problem.dim + 1.0;
    if (c.dt * rate * fan_out > 0.5) {
      throw ConfigError("dt", "violates the chain stability bound dt * B_Q * (2d + 1) <= 0.5 for h = " +
                                  io::format_double(c.h[i]));
    }
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = io::read_text(path);
  } catch (const Error& e) {
    throw ConfigError("--config", e.what());
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("malformed JSON: ") + e.what());
  }
  return parse_config(j);
}

json config_schema() {
  const json num = {{"type", "number"}};
  const json count = {{"type", "integer"}, {"minimum", 0}};
  const json num_or_list = {{"oneOf", json::array({num, {{"type", "array"}, {"items", num}, {"minItems", 1}}})}};
  const json count_or_list = {{"oneOf", json::array({count, {{"type", "array"}, {"items", count}, {"minItems", 1}}})}};
  return {
      {"$schema", "https://json-schema.org/draft/2020-12/schema"},
      {"type", "object"},
      {"additionalProperties", false},
      {"properties",
       {{"problem",
         {{"type", "object"},
          {"additionalProperties", false},
          {"properties", {{"name", {{"enum", problem_names()}}}, {"params", {{"type", "object"}}}}}}},
        {"h", num_or_list},
        {"steps", count_or_list},
        {"dt", num},
        {"direction", {{"enum", {"forward", "reverse"}}}},
        {"sweep", {{"enum", {"h", "steps"}}}},
        {"initial",
         {{"type", "object"},
          {"additionalProperties", false},
          {"properties",
           {{"center", num_or_list}, {"sd", num}, {"clip", num}, {"particles", count}, {"on_lattice", {{"type", "boolean"}}}}}}},
        {"strategy",
         {{"type", "object"},
          {"additionalProperties", false},
          {"properties",
           {{"kind", {{"enum", {"steer", "dirac", "uniform"}}}},
            {"targets", num_or_list},
            {"gain", num},
            {"atom", count},
            {"cells", count}}}}},
        {"samples", count},
        {"seed", count},
        {"eval_points", count},
        {"max_nodes", count},
        {"max_particles", count},
        {"verify_budget", count},
        {"jump_samples", count}}}};
}

WeightedCloud sample_initial_cloud(const InitialSpec& spec, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, kTagInitial, 0));
  std::normal_distribution<double> normal(0.0, spec.sd);
  std::vector<double> coords;
  coords.reserve(spec.particles * static_cast<std::size_t>(dim));
  for (std::size_t i = 0; i < spec.particles; ++i) {
    for (int a = 0; a < dim; ++a) {
      const double c = spec.center.size() == 1 ? spec.center[0] : spec.center[a];
      double x;
      int tries = 0;
      do {
        x = c + normal(rng);
        if (++tries > 10000) throw ArgumentError("initial clip window misses the Gaussian");
      } while (std::abs(x) > spec.clip);
      coords.push_back(x);
    }
  }
  std::vector<double> w(spec.particles, 1.0 / static_cast<double>(spec.particles));
  return WeightedCloud::normalized(dim, std::move(coords), std::move(w));
}

RelaxedControl strategy_control(const StrategySpec& spec, const VectorFieldProblem& problem,
                                std::span<const double> x) {
  const double horizon = problem.horizon;
  const std::size_t n = problem.atoms.size();
  if (spec.kind == "dirac") return RelaxedControl::dirac(0.0, horizon, n, spec.atom);
  if (spec.kind == "uniform" || problem.atoms.control_dim() != 1 || n == 1) {
    return RelaxedControl::uniform(0.0, horizon, n);
  }
  const auto sorted = sorted_scalar_atoms(problem.atoms);
  double centre = 0.0;
  for (double xi : x) centre += xi;
  centre /= static_cast<double>(x.size());
  std::vector<double> grid(spec.cells + 1);
  std::vector<double> cells;
  for (std::size_t k = 0; k <= spec.cells; ++k) grid[k] = horizon * static_cast<double>(k) / static_cast<double>(spec.cells);
  grid.back() = horizon;
  for (std::size_t k = 0; k < spec.cells; ++k) {
    const double mid = 0.5 * (grid[k] + grid[k + 1]);
    auto slice = static_cast<std::size_t>(mid / horizon * static_cast<double>(spec.targets.size()));
    slice = std::min(slice, spec.targets.size() - 1);
    const double u = spec.gain * (spec.targets[slice] - centre);
    const auto w = relaxed_value(sorted, n, u);
    cells.insert(cells.end(), w.begin(), w.end());
  }
  return RelaxedControl(std::move(grid), n, std::move(cells)).simplified();
}

FeedbackPolicy strategy_policy(const StrategySpec& spec, const VectorFieldProblem& problem, const LatticeGrid& grid) {
  std::vector<RelaxedControl> controls;
  controls.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) controls.push_back(strategy_control(spec, problem, grid.node(i)));
  return FeedbackPolicy(std::move(controls));
}

ControlDistribution strategy_distribution(const StrategySpec& spec, const VectorFieldProblem& problem,
                                          const WeightedCloud& m0) {
  std::vector<ControlItem> items;
  items.reserve(m0.size());
  for (std::size_t i = 0; i < m0.size(); ++i) {
    const auto x = m0.point(i);
    items.push_back({m0.weight(i), std::vector<double>(x.begin(), x.end()), strategy_control(spec, problem, x)});
  }
  return ControlDistribution(m0.dim(), std::move(items));
}

StrategySpec sample_strategy(const StrategySpec& base, std::uint64_t seed, std::uint64_t index) {
  std::mt19937_64 rng(derive_seed(seed, kTagStrategy, index));
  std::uniform_real_distribution<double> target(-0.5, 0.5), gain(1.0, 3.0);
  StrategySpec s = base;
  s.kind = "steer";
  s.targets = {target(rng), target(rng)};
  s.gain = gain(rng);
  return s;
}

RunSetup make_setup(const ExperimentConfig& cfg, double h, std::size_t steps) {
  RunSetup s;
  s.problem = make_problem(cfg.problem, cfg.params);
  s.chain = build_lattice_chain(s.problem, h, node_cap(cfg));
  const auto cloud = sample_initial_cloud(cfg.initial, s.problem.dim, cfg.seed);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!s.problem.box.contains(cloud.point(i))) throw ConfigError("initial.clip", "initial cloud leaves K");
  }
  s.mu0 = LatticeDistribution::project(cloud, s.chain.grid);
  s.m0 = cfg.initial.on_lattice ? embed_lattice(s.mu0, s.chain.grid) : cloud;
  s.partition = Partition::uniform(s.problem.horizon, steps);
  s.options.dt = cfg.dt;
  s.options.eval_points = cfg.eval_points;
  s.options.max_particles = cfg.max_particles;
  return s;
}

ForwardMpcResult run_forward(const RunSetup& setup, const StrategySpec& strategy) {
  const auto policy = strategy_policy(strategy, setup.problem, setup.chain.grid);
  return mpc_deterministic_from_chain(setup.problem, setup.chain, setup.m0, setup.mu0, policy, setup.partition,
                                      setup.options);
}

ReverseMpcResult run_reverse(const RunSetup& setup, const StrategySpec& strategy) {
  const auto alpha = strategy_distribution(strategy, setup.problem, setup.m0);
  return mpc_chain_from_deterministic(setup.problem, setup.chain, setup.mu0, alpha, setup.partition, setup.options);
}

std::optional<double> loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) return std::nullopt;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) return std::nullopt;
  }
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (sxx <= 0.0) return std::nullopt;
  return sxy / sxx;
}

namespace {

std::vector<std::pair<double, std::size_t>> sweep_points(const ExperimentConfig& cfg) {
  std::vector<std::pair<double, std::size_t>> pts;
  if (cfg.sweep == "h") {
    if (cfg.h.size() < 3) throw ConfigError("h", "a convergence sweep needs at least 3 values");
    for (double h : cfg.h) pts.emplace_back(h, cfg.steps.front());
  } else {
    if (cfg.steps.size() < 3) throw ConfigError("steps", "a convergence sweep needs at least 3 values");
    for (std::size_t n : cfg.steps) pts.emplace_back(cfg.h.front(), n);
  }
  return pts;
}

struct PointResult {
  ConvergenceRow row;
  DiscrepancyReport report;
  CouplingTrace trace;
};

PointResult run_point(const ExperimentConfig& cfg, double h, std::size_t steps) {
  const auto setup = make_setup(cfg, h, steps);
  PointResult r;
  if (cfg.direction == "forward") {
    auto res = run_forward(setup, cfg.strategy);
    r.report = std::move(res.report);
    r.trace = std::move(res.trace);
  } else {
    auto res = run_reverse(setup, cfg.strategy);
    r.report = std::move(res.report);
    r.trace = std::move(res.trace);
  }
  r.row = {h, steps, r.report.fineness, r.report.eps, r.report.rate_bound, r.report.w2_initial, r.report.sup};
  return r;
}

// Runs every point; rethrows the first failure in sweep order.
template <typename T, typename F>
std::vector<T> run_all(std::size_t n, std::size_t threads, F&& f) {
  std::vector<std::optional<T>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  parallel_for(n, threads, [&](std::size_t i) {
    try {
      slots[i] = f(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  std::vector<T> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    out.push_back(std::move(*slots[i]));
  }
  return out;
}

ConvergenceResult collect(const std::vector<PointResult>& pts) {
  ConvergenceResult res;
  std::vector<double> eps, sup;
  for (const auto& p : pts) {
    res.rows.push_back(p.row);
    eps.push_back(p.row.eps);
    sup.push_back(p.row.sup_w2);
  }
  res.slope = loglog_slope(eps, sup);
  return res;
}

}  // namespace

ConvergenceResult run_convergence(const ExperimentConfig& cfg, std::size_t threads) {
  const auto pts = sweep_points(cfg);
  return collect(run_all<PointResult>(pts.size(), threads,
                                      [&](std::size_t i) { return run_point(cfg, pts[i].first, pts[i].second); }));
}

HausdorffSweep run_hausdorff(const ExperimentConfig& cfg, std::size_t threads) {
  HausdorffSweep sweep;
  std::vector<double> eps, est;
  for (double h : cfg.h) {
    const auto setup = make_setup(cfg, h, cfg.steps.front());
    std::vector<ControlDistribution> det;
    std::vector<FeedbackPolicy> pol;
    for (std::size_t i = 0; i < cfg.samples; ++i) {
      det.push_back(strategy_distribution(sample_strategy(cfg.strategy, cfg.seed, i), setup.problem, setup.m0));
      pol.push_back(strategy_policy(sample_strategy(cfg.strategy, cfg.seed, cfg.samples + i), setup.problem,
                                    setup.chain.grid));
    }
    HausdorffSweepRow row;
    row.h = h;
    row.eps = setup.chain.approx_error;
    row.estimate = hausdorff_estimate(setup.problem, setup.chain, setup.m0, setup.mu0, det, pol, setup.partition,
                                      setup.options, threads);
    eps.push_back(row.eps);
    est.push_back(row.estimate.estimate);
    sweep.rows.push_back(std::move(row));
  }
  if (sweep.rows.size() >= 2) sweep.slope = loglog_slope(eps, est);
  return sweep;
}

namespace {

namespace fs = std::filesystem;

json slope_json(const std::optional<double>& s) { return s ? json(*s) : json("undefined"); }

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_run(const std::string& dir, const CouplingTrace& trace, const DiscrepancyReport& report) {
  io::write_json(path_in(dir, "trace.json"), io::trace_to_json(trace, report));
  io::write_text(path_in(dir, "discrepancy.csv"), io::discrepancy_csv(report));
  io::write_json(path_in(dir, "bounds.json"), io::bound_sheet(report));
}

void cmd_build_chain(const ExperimentConfig& cfg, const std::string& out, std::ostream& log) {
  const auto problem = make_problem(cfg.problem, cfg.params);
  const auto chain = build_lattice_chain(problem, cfg.h.front(), node_cap(cfg));
  const auto report = verify_assumptions(chain, cfg.verify_budget, derive_seed(cfg.seed, kTagVerify, 0));
  io::write_text(path_in(out, "grid.csv"), io::grid_csv(chain.grid));
  io::write_json(path_in(out, "generator.json"),
                 {{"problem", problem.name},
                  {"dim", problem.dim},
                  {"h", chain.grid.spacing()},
                  {"nodes", chain.grid.size()},
                  {"B_Q", chain.rate_bound},
                  {"eps", chain.approx_error},
                  {"fan_out", chain.generator->fan_out()},
                  {"max_stable_dt", max_stable_step(chain)}});
  io::write_json(path_in(out, "report.json"), io::report_to_json(report));
  log << "nodes " << chain.grid.size() << ", B_Q " << io::format_double(chain.rate_bound) << ", eps "
      << io::format_double(chain.approx_error) << "\n";
}

void cmd_simulate_mfc(const ExperimentConfig& cfg, const std::string& out, std::ostream& log) {
  const auto problem = make_problem(cfg.problem, cfg.params);
  const auto m0 = sample_initial_cloud(cfg.initial, problem.dim, cfg.seed);
  const auto alpha = strategy_distribution(cfg.strategy, problem, m0);
  const auto flow = integrate_mfc(problem, alpha, cfg.dt, eval_grid(problem.horizon, cfg.eval_points));
  io::write_cloud(path_in(out, "initial_cloud.csv"), m0);
  io::write_json(path_in(out, "distribution.json"), io::distribution_to_json(alpha, "initial_cloud.csv"));
  io::write_text(path_in(out, "flow.csv"), io::flow_csv(flow));
  io::write_json(path_in(out, "flow_summary.json"), io::flow_summary(flow));
  log << "items " << flow.item_count() << ", samples " << flow.times().size() << "\n";
}

void cmd_simulate_chain(const ExperimentConfig& cfg, const std::string& out, std::ostream& log) {
  const auto problem = make_problem(cfg.problem, cfg.params);
  const auto chain = build_lattice_chain(problem, cfg.h.front(), node_cap(cfg));
  const auto mu0 = LatticeDistribution::project(sample_initial_cloud(cfg.initial, problem.dim, cfg.seed), chain.grid);
  const auto policy = strategy_policy(cfg.strategy, problem, chain.grid);
  const auto grid_t = eval_grid(problem.horizon, cfg.eval_points);
  const auto flow = integrate_kolmogorov(chain, mu0, policy, 0.0, problem.horizon, cfg.dt, grid_t);
  double mass_error = 0.0, min_entry = 0.0;
  for (std::size_t k = 0; k < flow.times().size(); ++k) {
    const auto& mu = flow.raw(k);
    mass_error = std::max(mass_error, std::abs(std::accumulate(mu.begin(), mu.end(), 0.0) - 1.0));
    min_entry = std::min(min_entry, *std::min_element(mu.begin(), mu.end()));
  }
  io::write_text(path_in(out, "grid.csv"), io::grid_csv(chain.grid));
  io::write_text(path_in(out, "mu0.csv"), io::lattice_csv(mu0, chain.grid));
  io::write_json(path_in(out, "policy.json"), io::policy_to_json(policy));
  io::write_text(path_in(out, "chain_flow.csv"), io::chain_flow_csv(flow));
  json summary = {{"B_Q", chain.rate_bound},
                  {"eps", chain.approx_error},
                  {"mass_error", mass_error},
                  {"min_entry", min_entry},
                  {"rate_bound_violation", rate_bound_violation(flow, chain.rate_bound)}};
  if (cfg.jump_samples > 0) {
    JumpSampleOptions opt;
    opt.record_times = grid_t;
    const auto jumps = sample_jump_process(chain, flow, cfg.jump_samples, derive_seed(cfg.seed, kTagJumps, 0), opt);
    std::string csv = "t,node_id,frequency\n";
    for (std::size_t k = 0; k < jumps.record_times.size(); ++k) {
      for (std::size_t i = 0; i < jumps.occupancy[k].size(); ++i) {
        csv += io::format_double(jumps.record_times[k]) + "," + std::to_string(i) + "," +
               io::format_double(jumps.occupancy[k][i]) + "\n";
      }
    }
    io::write_text(path_in(out, "occupancy.csv"), csv);
    summary["jump_samples"] = jumps.samples;
    summary["jumps"] = jumps.jumps;
    summary["mean_sq_displacement"] = jumps.mean_sq_displacement;
  }
  io::write_json(path_in(out, "summary.json"), summary);
  log << "nodes " << chain.grid.size() << ", samples " << flow.times().size() << "\n";
}

void cmd_mpc(const ExperimentConfig& cfg, const std::string& out, bool forward, std::ostream& log) {
  const auto setup = make_setup(cfg, cfg.h.front(), cfg.steps.front());
  io::write_cloud(path_in(out, "m0.csv"), setup.m0);
  io::write_text(path_in(out, "mu0.csv"), io::lattice_csv(setup.mu0, setup.chain.grid));
  DiscrepancyReport report;
  if (forward) {
    const auto res = run_forward(setup, cfg.strategy);
    write_run(out, res.trace, res.report);
    io::write_text(path_in(out, "flow.csv"), io::flow_csv(res.flow, res.report.times));
    io::write_text(path_in(out, "chain_flow.csv"), io::chain_flow_csv(res.chain_flow));
    report = res.report;
  } else {
    const auto res = run_reverse(setup, cfg.strategy);
    write_run(out, res.trace, res.report);
    io::write_text(path_in(out, "flow.csv"), io::flow_csv(res.flow));
    io::write_text(path_in(out, "chain_flow.csv"), io::chain_flow_csv(res.chain_flow));
    report = res.report;
  }
  log << "sup W2 " << io::format_double(report.sup) << "\n";
}

void cmd_convergence(const ExperimentConfig& cfg, const std::string& out, std::size_t threads, std::ostream& log) {
  const auto pts = sweep_points(cfg);
  const auto results = run_all<PointResult>(pts.size(), threads,
                                            [&](std::size_t i) { return run_point(cfg, pts[i].first, pts[i].second); });
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto dir = path_in(out, "point_" + std::to_string(i));
    fs::create_directories(dir);
    write_run(dir, results[i].trace, results[i].report);
  }
  const auto res = collect(results);
  std::string csv = "h,d_Delta,eps,B_Q,W2_0,sup_W2\n";
  json rows = json::array();
  for (const auto& r : res.rows) {
    csv += io::format_double(r.h) + "," + io::format_double(r.d_delta) + "," + io::format_double(r.eps) + "," +
           io::format_double(r.rate_bound) + "," + io::format_double(r.w2_initial) + "," +
           io::format_double(r.sup_w2) + "\n";
    rows.push_back({{"h", r.h},
                    {"steps", r.steps},
                    {"d_Delta", r.d_delta},
                    {"eps", r.eps},
                    {"B_Q", r.rate_bound},
                    {"W2_0", r.w2_initial},
                    {"sup_W2", r.sup_w2}});
  }
  io::write_text(path_in(out, "convergence.csv"), csv);
  io::write_json(path_in(out, "convergence.json"),
                 {{"sweep", cfg.sweep}, {"direction", cfg.direction}, {"rows", rows}, {"slope", slope_json(res.slope)}});
  log << "slope " << (res.slope ? io::format_double(*res.slope) : std::string("undefined")) << "\n";
}

void cmd_hausdorff(const ExperimentConfig& cfg, const std::string& out, std::size_t threads, std::ostream& log) {
  const auto sweep = run_hausdorff(cfg, threads);
  std::string csv = "h,eps,side,index,distance\n";
  json rows = json::array();
  for (const auto& r : sweep.rows) {
    for (const auto& t : r.estimate.table) {
      csv += io::format_double(r.h) + "," + io::format_double(r.eps) + "," + std::string(1, t.side) + "," +
             std::to_string(t.index) + "," + io::format_double(t.distance) + "\n";
    }
    rows.push_back({{"h", r.h},
                    {"eps", r.eps},
                    {"estimate", r.estimate.estimate},
                    {"one_sided_a", r.estimate.one_sided_a},
                    {"one_sided_b", r.estimate.one_sided_b}});
  }
  io::write_text(path_in(out, "hausdorff.csv"), csv);
  io::write_json(path_in(out, "hausdorff.json"), {{"rows", rows}, {"slope", slope_json(sweep.slope)}});
  for (const auto& r : sweep.rows) log << "h " << io::format_double(r.h) << " H " << io::format_double(r.estimate.estimate) << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mean field control systems and their lattice Markov chain approximations"};
  std::string config_path, out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  app.add_option("--config", config_path, "JSON experiment config");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "64-bit seed, overrides the config");
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  app.require_subcommand(1);
  const std::vector<std::string> names = {"build-chain", "simulate-mfc", "simulate-chain", "mpc-forward",
                                          "mpc-reverse", "convergence",  "hausdorff",      "schema"};
  for (const auto& n : names) app.add_subcommand(n)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    if (cmd == "schema") {
      out << config_schema().dump(2) << "\n";
      return 0;
    }
    if (config_path.empty()) throw ConfigError("--config", "required");
    auto cfg = load_config(config_path);
    if (seed) cfg.seed = *seed;
    fs::create_directories(out_dir);
    if (cmd == "build-chain") cmd_build_chain(cfg, out_dir, out);
    else if (cmd == "simulate-mfc") cmd_simulate_mfc(cfg, out_dir, out);
    else if (cmd == "simulate-chain") cmd_simulate_chain(cfg, out_dir, out);
    else if (cmd == "mpc-forward") cmd_mpc(cfg, out_dir, true, out);
    else if (cmd == "mpc-reverse") cmd_mpc(cfg, out_dir, false, out);
    else if (cmd == "convergence") cmd_convergence(cfg, out_dir, threads, out);
    else cmd_hausdorff(cfg, out_dir, threads, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ResourceError& e) {
    err << "resource error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("mfcmc_cli");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace mfcmc
