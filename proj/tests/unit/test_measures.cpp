#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "mfcmc/errors.hpp"
#include "mfcmc/io.hpp"
#include "mfcmc/measures.hpp"
#include "mfcmc/transport.hpp"

using namespace mfcmc;

namespace {

WeightedCloud random_cloud(std::mt19937_64& rng, int dim, std::size_t n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), w(0.01, 1.0);
  std::vector<double> coords, weights;
  for (std::size_t i = 0; i < n * static_cast<std::size_t>(dim); ++i) coords.push_back(u(rng));
  for (std::size_t i = 0; i < n; ++i) weights.push_back(w(rng));
  return WeightedCloud::normalized(dim, coords, weights);
}

LatticeGrid two_nodes() { return LatticeGrid::from_nodes(1, {0.0, 1.0}, 1.0); }

}  // namespace

TEST(Cloud, RejectsBadWeights) {
  EXPECT_THROW(WeightedCloud(1, {0.0, 1.0}, {0.6, 0.5}), StructuralError);
  EXPECT_THROW(WeightedCloud(1, {0.0, 1.0}, {1.5, -0.5}), StructuralError);
  EXPECT_THROW(WeightedCloud(2, {0.0, 1.0, 2.0}, {0.5, 0.5}), StructuralError);
  EXPECT_NO_THROW(WeightedCloud(1, {0.0, 1.0}, {0.5, 0.5}));
}

TEST(Cloud, NormalizeIsIdempotent) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const auto m = random_cloud(rng, 2, 50);
    const auto again = WeightedCloud::normalized(2, m.coords(), m.weights());
    EXPECT_EQ(again.weights(), m.weights());
  }
}

TEST(Embed, DiracAndSymmetric) {
  const auto grid = two_nodes();
  const auto a = embed_lattice(LatticeDistribution({1.0, 0.0}), grid);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a.point(0)[0], 0.0);
  EXPECT_EQ(a.weight(0), 1.0);
  const auto b = embed_lattice(LatticeDistribution({0.5, 0.5}), grid);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b.point(1)[0], 1.0);
  EXPECT_EQ(b.weight(1), 0.5);
}

TEST(Embed, RejectsExcessMassAndSizeMismatch) {
  EXPECT_THROW(LatticeDistribution({0.6, 0.5}), StructuralError);
  EXPECT_THROW(embed_lattice(LatticeDistribution({0.2, 0.3, 0.5}), two_nodes()), StructuralError);
}

TEST(Embed, MassSumsToOne) {
  std::mt19937_64 rng(11);
  const auto grid = LatticeGrid::regular(Box::cube(1, -1.0, 1.0), 0.1, 1000);
  std::exponential_distribution<double> e(1.0);
  std::bernoulli_distribution zero(0.3);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> mu(grid.size());
    double s = 0.0;
    for (double& v : mu) s += (v = zero(rng) ? 0.0 : e(rng));
    for (double& v : mu) v /= s;
    const auto m = embed_lattice(LatticeDistribution(mu), grid);
    double total = 0.0;
    for (double w : m.weights()) total += w;
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(SecondMoment, Examples) {
  EXPECT_EQ(second_moment(WeightedCloud(1, {0.0}, {1.0})), 0.0);
  EXPECT_EQ(second_moment(WeightedCloud(1, {3.0}, {1.0})), 3.0);
  EXPECT_NEAR(second_moment(WeightedCloud(1, {-1.0, 1.0}, {0.5, 0.5})), 1.0, 1e-15);
}

TEST(CoveringRadius, Examples) {
  const auto grid = two_nodes();
  const std::vector<double> s1{0.4};
  EXPECT_NEAR(lattice_covering_radius(grid, s1), 0.4, 1e-15);
  const std::vector<double> on{0.0, 1.0};
  EXPECT_EQ(lattice_covering_radius(grid, on), 0.0);
  EXPECT_THROW(lattice_covering_radius(grid, std::vector<double>{}), ArgumentError);
}

TEST(CoveringRadius, HalfSpacingBound) {
  for (int d = 1; d <= 2; ++d) {
    const double h = 0.1;
    const auto grid = LatticeGrid::regular(Box::cube(d, -1.0, 1.0), h, 100000);
    std::vector<double> samples;
    const int n = d == 1 ? 2001 : 201;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < (d == 1 ? 1 : n); ++j) {
        samples.push_back(-1.0 + 2.0 * i / (n - 1));
        if (d == 2) samples.push_back(-1.0 + 2.0 * j / (n - 1));
      }
    }
    EXPECT_LE(lattice_covering_radius(grid, samples), std::sqrt(static_cast<double>(d)) / 2 * h + 1e-12);
  }
}

TEST(Grid, RegularInvariants) {
  const double h = 0.25;
  const Box k = Box::cube(2, -1.0, 0.5);
  const auto grid = LatticeGrid::regular(k, h, 10000);
  const Box kh = k.inflated(h);
  std::set<std::pair<long, long>> seen;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto x = grid.node(i);
    EXPECT_TRUE(kh.contains(x, 1e-12));
    const long a = std::lround(x[0] / h), b = std::lround(x[1] / h);
    EXPECT_EQ(x[0], a * h);
    EXPECT_EQ(x[1], b * h);
    EXPECT_TRUE(seen.insert({a, b}).second);
    EXPECT_EQ(grid.nearest(x), i);
  }
  // [-1.25, 0.75] / 0.25 -> 9 points per axis
  EXPECT_EQ(grid.size(), 81u);
  EXPECT_THROW(LatticeGrid::regular(k, h, 80), ResourceError);
  EXPECT_THROW(LatticeGrid::regular(k, 0.0, 80), ArgumentError);
}

TEST(Grid, Neighbors) {
  const auto grid = LatticeGrid::regular(Box::cube(1, 0.0, 1.0), 0.5, 100);
  ASSERT_EQ(grid.size(), 5u);  // -0.5 .. 1.5
  EXPECT_EQ(*grid.neighbor(0, 0, +1), 1u);
  EXPECT_FALSE(grid.neighbor(0, 0, -1).has_value());
  EXPECT_FALSE(grid.neighbor(4, 0, +1).has_value());
}

TEST(Coalesce, Examples) {
  const WeightedCloud m(1, {0.0, 1e-9}, {0.5, 0.5});
  const auto c = coalesce(m, 1e-6);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_NEAR(c.point(0)[0], 5e-10, 1e-24);
  EXPECT_EQ(c.weight(0), 1.0);
  const WeightedCloud d(1, {0.0, 0.5, 1.0}, {0.2, 0.3, 0.5});
  const auto same = coalesce(d, 0.0);
  EXPECT_EQ(same.coords(), d.coords());
  EXPECT_EQ(same.weights(), d.weights());
}

TEST(Coalesce, Properties) {
  std::mt19937_64 rng(2024);
  for (int rep = 0; rep < 100; ++rep) {
    const int dim = 1 + rep % 3;
    const auto m = random_cloud(rng, dim, 40);
    const double tol = 0.05 * (rep % 5);
    std::vector<std::size_t> cluster;
    const auto c = coalesce(m, tol, &cluster);
    EXPECT_LE(c.size(), m.size());
    ASSERT_EQ(cluster.size(), m.size());
    double total = 0.0;
    for (double w : c.weights()) total += w;
    EXPECT_NEAR(total, 1.0, 1e-12);
    const auto a = m.mean(), b = c.mean();
    for (int i = 0; i < dim; ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
    EXPECT_LE(wasserstein(m, c), tol + 1e-12);
    // every input atom sits within tol of its cluster's barycenter
    for (std::size_t i = 0; i < m.size(); ++i) {
      double d2 = 0.0;
      for (int k = 0; k < dim; ++k) d2 += std::pow(m.point(i)[k] - c.point(cluster[i])[k], 2);
      EXPECT_LE(std::sqrt(d2), tol + 1e-12);
    }
  }
}

TEST(Project, NearestNode) {
  const auto grid = LatticeGrid::regular(Box::cube(1, -1.0, 1.0), 0.5, 100);
  const WeightedCloud m(1, {-0.2, 0.3, 0.9}, {0.25, 0.25, 0.5});
  const auto mu = LatticeDistribution::project(m, grid);
  const auto node = [&](double x) { return grid.nearest(std::vector<double>{x}); };
  EXPECT_EQ(mu[node(0.0)], 0.25);
  EXPECT_EQ(mu[node(0.5)], 0.25);
  EXPECT_EQ(mu[node(1.0)], 0.5);
}

TEST(CloudIo, CsvRoundTripIsBitExact) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const auto m = random_cloud(rng, 1 + rep % 3, 30);
    const auto back = io::cloud_from_csv(io::parse_csv(io::cloud_csv(m)));
    EXPECT_EQ(back.coords(), m.coords());
    EXPECT_EQ(back.weights(), m.weights());
    const auto j = io::cloud_from_json(nlohmann::json::parse(io::cloud_to_json(m).dump()));
    EXPECT_EQ(j.coords(), m.coords());
    EXPECT_EQ(j.weights(), m.weights());
  }
}

TEST(CloudIo, LatticeRoundTrip) {
  const auto grid = LatticeGrid::regular(Box::cube(2, -1.0, 1.0), 0.5, 1000);
  std::vector<double> mu(grid.size(), 0.0);
  mu[3] = 1.0 / 3.0;
  mu[7] = 2.0 / 3.0;
  const LatticeDistribution d(mu);
  const auto back = io::lattice_from_csv(io::parse_csv(io::lattice_csv(d, grid)), grid);
  EXPECT_EQ(back.values(), d.values());
  EXPECT_EQ(io::lattice_from_json(io::lattice_to_json(d)).values(), d.values());
}
