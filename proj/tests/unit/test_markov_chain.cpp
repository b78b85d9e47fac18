#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mfcmc/errors.hpp"
#include "mfcmc/io.hpp"
#include "mfcmc/markov_chain.hpp"
#include "mfcmc/problems.hpp"

using namespace mfcmc;

namespace {

ControlAtomSet two_atoms() { return ControlAtomSet::uniform_scalar(2, -1.0, 1.0); }

double row_entry(const std::vector<RateEntry>& row, std::size_t target) {
  for (const auto& e : row) {
    if (e.target == target) return e.rate;
  }
  return 0.0;
}

std::vector<double> random_mu(std::mt19937_64& rng, std::size_t n) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> mu(n);
  double s = 0.0;
  for (double& v : mu) s += (v = e(rng));
  for (double& v : mu) v /= s;
  return mu;
}

std::size_t node_at(const LatticeGrid& grid, double x) { return grid.nearest(std::vector<double>{x}); }

}  // namespace

TEST(BuildChain, ZeroFieldHasNoRates) {
  const auto chain = build_lattice_chain(make_zero_problem(1, Box::cube(1, -1, 1), 1.0, two_atoms()), 0.25);
  const auto mu = LatticeDistribution::dirac(chain.grid.size(), 3);
  for (std::size_t a = 0; a < 2; ++a) {
    for (const auto& row : chain.generator->rates(0.0, mu.values(), a)) {
      for (const auto& e : row) EXPECT_EQ(e.rate, 0.0);
    }
  }
  EXPECT_EQ(chain.rate_bound, 0.0);
}

TEST(BuildChain, LatticeRateFormula) {
  const auto chain = build_lattice_chain(make_constant_problem({2.0}, Box::cube(1, -1, 1), 1.0, two_atoms()), 0.5);
  const auto mu = LatticeDistribution::dirac(chain.grid.size(), 0);
  const auto q = chain.generator->rates(0.0, mu.values(), 0);
  const auto x = node_at(chain.grid, 0.0), right = node_at(chain.grid, 0.5);
  EXPECT_EQ(row_entry(q[x], right), 4.0);
  EXPECT_EQ(row_entry(q[x], x), -4.0);
  double others = 0.0;
  for (const auto& e : q[x]) {
    if (e.target != x && e.target != right) others += std::abs(e.rate);
  }
  EXPECT_EQ(others, 0.0);
}

TEST(BuildChain, DeclaredConstants) {
  const auto chain = build_lattice_chain(make_constant_problem({1.0}, Box::cube(1, -1, 1), 1.0, two_atoms()), 0.01);
  EXPECT_NEAR(chain.rate_bound, 100.0, 1e-9);
  EXPECT_NEAR(chain.approx_error, 0.1, 1e-12);
  EXPECT_THROW(build_lattice_chain(make_zero_problem(1, Box::cube(1, -1, 1), 1.0, two_atoms()), 0.0), ArgumentError);
  EXPECT_THROW(build_lattice_chain(make_zero_problem(1, Box::cube(1, -1, 1), 1.0, two_atoms()), 0.01, 50),
               ResourceError);
}

TEST(Generator, RowsAreKolmogorov) {
  std::mt19937_64 rng(5);
  for (int d = 1; d <= 2; ++d) {
    AttractionParams p;
    p.dim = d;
    const auto chain = build_lattice_chain(make_attraction_problem(p), 0.2);
    for (int rep = 0; rep < 10; ++rep) {
      const auto mu = random_mu(rng, chain.grid.size());
      for (std::size_t a = 0; a < chain.generator->atom_count(); ++a) {
        const auto q = chain.generator->rates(0.3, mu, a);
        for (std::size_t x = 0; x < q.size(); ++x) {
          double s = 0.0;
          for (const auto& e : q[x]) {
            s += e.rate;
            if (e.target != x) EXPECT_GE(e.rate, 0.0);
            EXPECT_LE(std::abs(e.rate), chain.rate_bound + 1e-12);
          }
          EXPECT_NEAR(s, 0.0, 1e-12);
          EXPECT_LE(q[x].size(), chain.generator->fan_out());
        }
      }
    }
  }
}

TEST(RelaxedRates, DiracUniformRandom) {
  AttractionParams p;
  p.atoms = 2;
  const auto chain = build_lattice_chain(make_attraction_problem(p), 0.25);
  std::mt19937_64 rng(2);
  const auto mu = random_mu(rng, chain.grid.size());
  const std::size_t n = chain.grid.size();
  const auto q0 = chain.generator->rates(0.5, mu, 0), q1 = chain.generator->rates(0.5, mu, 1);

  const auto dirac = relaxed_rates(chain, 0.5, mu, FeedbackPolicy::constant(n, RelaxedControl::dirac(0, 1, 2, 1)));
  for (std::size_t x = 0; x < n; ++x) {
    for (const auto& e : q1[x]) EXPECT_EQ(row_entry(dirac[x], e.target), e.rate);
  }
  const auto uni = relaxed_rates(chain, 0.5, mu, FeedbackPolicy::constant(n, RelaxedControl::uniform(0, 1, 2)));
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t y = 0; y < n; ++y) {
      EXPECT_NEAR(row_entry(uni[x], y), 0.5 * (row_entry(q0[x], y) + row_entry(q1[x], y)), 1e-12);
    }
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<RelaxedControl> per_node;
  for (std::size_t x = 0; x < n; ++x) {
    const double w = u(rng);
    per_node.push_back(RelaxedControl::constant(0, 1, {w, 1.0 - w}));
  }
  const FeedbackPolicy policy(per_node);
  const auto mixed = relaxed_rates(chain, 0.5, mu, policy);
  for (std::size_t x = 0; x < n; ++x) {
    const auto w = policy.at(x).evaluate(0.5);
    double off = 0.0;
    for (std::size_t y = 0; y < n; ++y) {
      if (y == x) continue;
      const double expect = w[0] * row_entry(q0[x], y) + w[1] * row_entry(q1[x], y);
      EXPECT_NEAR(row_entry(mixed[x], y), expect, 1e-12);
      off += row_entry(mixed[x], y);
    }
    EXPECT_NEAR(row_entry(mixed[x], x), -off, 1e-12);
  }
  EXPECT_THROW(relaxed_rates(chain, 1.5, mu, policy), ArgumentError);
}

TEST(Kolmogorov, ZeroRatesKeepMu) {
  const auto chain = build_lattice_chain(make_zero_problem(1, Box::cube(1, -1, 1), 1.0, two_atoms()), 0.25);
  std::mt19937_64 rng(1);
  const LatticeDistribution mu0(random_mu(rng, chain.grid.size()));
  const auto flow = integrate_kolmogorov(chain, mu0, FeedbackPolicy::constant(chain.grid.size(),
                                                                              RelaxedControl::uniform(0, 1, 2)),
                                         0.0, 1.0, 0.01);
  for (std::size_t k = 0; k < flow.times().size(); ++k) EXPECT_EQ(flow.raw(k), mu0.values());
}

TEST(Kolmogorov, TwoNodeClosedForm) {
  const auto chain = make_two_node_chain(1.0);
  const auto policy = FeedbackPolicy::constant(2, RelaxedControl::uniform(0, 1, 1));
  const auto flow = integrate_kolmogorov(chain, LatticeDistribution::dirac(2, 0), policy, 0.0, 1.0, 1e-3, {0.5});
  for (std::size_t k = 0; k < flow.times().size(); ++k) {
    EXPECT_NEAR(flow.raw(k)[0], std::exp(-flow.times()[k]), 1e-8);
  }
  EXPECT_TRUE(flow.has_time(0.5));
}

TEST(Kolmogorov, StabilityBoundEnforced) {
  const auto chain = make_two_node_chain(10.0);
  const auto policy = FeedbackPolicy::constant(2, RelaxedControl::uniform(0, 1, 1));
  EXPECT_NEAR(max_stable_step(chain), 0.5 / (10.0 * chain.generator->fan_out()), 1e-15);
  EXPECT_THROW(integrate_kolmogorov(chain, LatticeDistribution::dirac(2, 0), policy, 0.0, 1.0, 0.1),
               ConfigurationError);
}

TEST(Kolmogorov, ConservationAndRateBound) {
  std::mt19937_64 rng(12);
  for (int d = 1; d <= 2; ++d) {
    AttractionParams p;
    p.dim = d;
    const auto problem = make_attraction_problem(p);
    const auto chain = build_lattice_chain(problem, d == 1 ? 0.05 : 0.2);
    const LatticeDistribution mu0(random_mu(rng, chain.grid.size()));
    const auto policy = FeedbackPolicy::constant(chain.grid.size(), RelaxedControl::constant(0, 1, {0.6, 0.3, 0.1}));
    const double dt = 0.4 * max_stable_step(chain);
    const auto flow = integrate_kolmogorov(chain, mu0, policy, 0.0, 1.0, dt);
    for (std::size_t k = 0; k < flow.times().size(); ++k) {
      double s = 0.0, lo = 0.0;
      for (double v : flow.raw(k)) {
        s += v;
        lo = std::min(lo, v);
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
      EXPECT_GE(lo, -1e-12);
    }
    EXPECT_LE(rate_bound_violation(flow, chain.rate_bound), 1e-8);
  }
}

TEST(Verify, ZeroFieldAllZero) {
  const auto chain = build_lattice_chain(make_zero_problem(1, Box::cube(1, -1, 1), 1.0, two_atoms()), 0.1);
  const auto r = verify_assumptions(chain, 32, 1);
  EXPECT_EQ(r.rate_bound_sampled, 0.0);
  EXPECT_EQ(r.eps_drift_interior, 0.0);
  EXPECT_EQ(r.eps_drift_boundary, 0.0);
  EXPECT_EQ(r.eps_var, 0.0);
  EXPECT_LE(r.eps_space, 0.05 + 1e-12);
}

TEST(Verify, ConstantDriftChain) {
  const auto chain = build_lattice_chain(make_constant_problem({1.0}, Box::cube(1, -1, 1), 1.0, two_atoms()), 0.1);
  const auto r = verify_assumptions(chain, 32, 2);
  EXPECT_LE(r.eps_var * r.eps_var, 0.1 + 1e-12);
  EXPECT_LE(r.rate_bound_sampled, r.rate_bound_declared + 1e-12);
  EXPECT_NEAR(r.rate_bound_sampled, 10.0, 1e-9);
  EXPECT_LE(r.eps_drift_interior, 1e-12);
  EXPECT_LE(r.row_sum_error, 1e-12);
}

TEST(Verify, AttractionChains) {
  for (int d = 1; d <= 2; ++d) {
    AttractionParams p;
    p.dim = d;
    const auto problem = make_attraction_problem(p);
    const double h = 0.1;
    const auto chain = build_lattice_chain(problem, h);
    const auto r = verify_assumptions(chain, 24, 3);
    EXPECT_LE(r.eps_drift_interior, 1e-12);
    EXPECT_LE(r.eps_var * r.eps_var, h * d * problem.bound + 1e-12);
    EXPECT_LE(r.rate_bound_sampled, chain.rate_bound + 1e-12);
    EXPECT_LE(r.eps_space, std::sqrt(static_cast<double>(d)) / 2 * h + 1e-12);
  }
}

TEST(Jumps, ZeroRatesNoJumps) {
  const auto chain = build_lattice_chain(make_zero_problem(1, Box::cube(1, -1, 1), 1.0, two_atoms()), 0.25);
  std::mt19937_64 rng(3);
  const LatticeDistribution mu0(random_mu(rng, chain.grid.size()));
  const auto res = sample_jump_process(chain, mu0,
                                       FeedbackPolicy::constant(chain.grid.size(), RelaxedControl::uniform(0, 1, 2)),
                                       0.0, 1.0, 0.05, 4000, 9);
  EXPECT_EQ(res.jumps, 0u);
  for (double m : res.mean_sq_displacement) EXPECT_EQ(m, 0.0);
  for (std::size_t i = 0; i < mu0.size(); ++i) EXPECT_NEAR(res.occupancy.back()[i], mu0[i], 0.05);
}

TEST(Jumps, TwoNodeBinomial) {
  const auto chain = make_two_node_chain(1.0);
  const auto policy = FeedbackPolicy::constant(2, RelaxedControl::uniform(0, 1, 1));
  const std::size_t n = 20000;
  const auto res = sample_jump_process(chain, LatticeDistribution::dirac(2, 0), policy, 0.0, 1.0, 1e-3, n, 42);
  const double p = std::exp(-1.0);
  const double sigma = std::sqrt(p * (1 - p) / n);
  EXPECT_NEAR(res.occupancy.back()[0], p, 3 * sigma);
}

TEST(Jumps, ThreadCountDoesNotChangeResults) {
  const auto chain = build_lattice_chain(make_constant_problem({1.0}, Box::cube(1, -1, 1), 1.0, two_atoms()), 0.1);
  const auto mu0 = LatticeDistribution::dirac(chain.grid.size(), node_at(chain.grid, -0.5));
  const auto policy = FeedbackPolicy::constant(chain.grid.size(), RelaxedControl::uniform(0, 1, 2));
  JumpSampleOptions one, four;
  four.threads = 4;
  const auto a = sample_jump_process(chain, mu0, policy, 0.0, 1.0, 0.01, 9000, 5, one);
  const auto b = sample_jump_process(chain, mu0, policy, 0.0, 1.0, 0.01, 9000, 5, four);
  EXPECT_EQ(a.occupancy, b.occupancy);
  EXPECT_EQ(a.mean_sq_displacement, b.mean_sq_displacement);
  EXPECT_EQ(a.jumps, b.jumps);
}

TEST(Jumps, PoissonSpreadOfConstantDrift) {
  const double c = 1.0, h = 0.1;
  const auto chain = build_lattice_chain(make_constant_problem({c}, Box::cube(1, -2, 2), 1.0, two_atoms()), h);
  const auto mu0 = LatticeDistribution::dirac(chain.grid.size(), node_at(chain.grid, -1.0));
  const auto policy = FeedbackPolicy::constant(chain.grid.size(), RelaxedControl::uniform(0, 1, 2));
  JumpSampleOptions opt;
  opt.record_times = {0.0, 0.25, 0.5, 1.0};
  const auto res = sample_jump_process(chain, mu0, policy, 0.0, 1.0, 0.01, 20000, 77, opt);
  // X(t) - X(0) = h N(t / h c), N Poisson: E|.|^2 = h c t + (c t)^2
  for (std::size_t k = 1; k < opt.record_times.size(); ++k) {
    const double t = opt.record_times[k];
    EXPECT_NEAR(res.mean_sq_displacement[k], h * c * t + c * c * t * t, 3 * res.msd_std_error[k]) << t;
  }
}

TEST(ChainFlowIo, CsvRoundTrip) {
  const auto chain = make_two_node_chain(1.0);
  const auto policy = FeedbackPolicy::constant(2, RelaxedControl::uniform(0, 1, 1));
  const auto flow = integrate_kolmogorov(chain, LatticeDistribution::dirac(2, 0), policy, 0.0, 1.0, 0.01);
  const auto back = io::chain_flow_from_csv(io::parse_csv(io::chain_flow_csv(flow)));
  ASSERT_EQ(back.times, flow.times());
  for (std::size_t k = 0; k < back.times.size(); ++k) EXPECT_EQ(back.mu[k], flow.raw(k));
  const auto j = io::report_to_json(verify_assumptions(chain, 4, 1));
  for (const char* key : {"B_Q", "eps_space", "eps_drift_interior", "eps_drift_boundary", "eps_var"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
}
