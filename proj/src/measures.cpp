#include "mfcmc/measures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>

#include "mfcmc/errors.hpp"
#include "mfcmc/util.hpp"

namespace mfcmc {

Box::Box(std::vector<double> lo_, std::vector<double> hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
  if (lo.size() != hi.size() || lo.empty()) throw ArgumentError("box bounds must have equal positive dimension");
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (!(lo[i] <= hi[i])) throw ArgumentError("box lower bound exceeds upper bound on axis " + std::to_string(i));
  }
}

Box Box::cube(int dim, double lo, double hi) {
  return Box(std::vector<double>(dim, lo), std::vector<double>(dim, hi));
}

bool Box::contains(std::span<const double> x, double tol) const {
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (x[i] < lo[i] - tol || x[i] > hi[i] + tol) return false;
  }
  return true;
}

double Box::distance(std::span<const double> x) const {
  double s = 0.0;
  for (std::size_t i = 0; i < lo.size(); ++i) {
    const double e = x[i] < lo[i] ? lo[i] - x[i] : (x[i] > hi[i] ? x[i] - hi[i] : 0.0);
    s += e * e;
  }
  return std::sqrt(s);
}

Box Box::inflated(double r) const {
  Box b = *this;
  for (std::size_t i = 0; i < lo.size(); ++i) {
    b.lo[i] -= r;
    b.hi[i] += r;
  }
  return b;
}

double Box::diameter() const {
  double s = 0.0;
  for (std::size_t i = 0; i < lo.size(); ++i) s += (hi[i] - lo[i]) * (hi[i] - lo[i]);
  return std::sqrt(s);
}

WeightedCloud::WeightedCloud(int dim, std::vector<double> coords, std::vector<double> weights)
    : dim_(dim), coords_(std::move(coords)), weights_(std::move(weights)) {
  if (dim_ <= 0) throw StructuralError("cloud dimension must be positive");
  if (coords_.size() != weights_.size() * static_cast<std::size_t>(dim_)) {
    throw StructuralError("cloud has " + std::to_string(weights_.size()) + " weights but " +
                          std::to_string(coords_.size()) + " coordinates for dimension " + std::to_string(dim_));
  }
  if (weights_.empty()) throw StructuralError("cloud must have at least one atom");
  double sum = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0)) throw StructuralError("cloud weight is negative or NaN");
    sum += w;
  }
  if (std::abs(sum - 1.0) > kWeightSumTol) {
    throw StructuralError("cloud weights sum to " + std::to_string(sum) + ", expected 1");
  }
  for (double c : coords_) {
    if (!std::isfinite(c)) throw StructuralError("cloud coordinate is not finite");
  }
}

WeightedCloud WeightedCloud::normalized(int dim, std::vector<double> coords, std::vector<double> weights) {
  double sum = 0.0;
  for (double& w : weights) {
    if (w < -kNegativeMassTol) throw StructuralError("weight below negative tolerance");
    w = std::max(w, 0.0);
    sum += w;
  }
  if (!(sum > 0.0)) throw StructuralError("cloud has no mass");
  if (!is_unit_total(sum, weights.size())) {
    for (double& w : weights) w /= sum;
  }
  return WeightedCloud(dim, std::move(coords), std::move(weights));
}

WeightedCloud WeightedCloud::dirac(std::span<const double> z) {
  return WeightedCloud(static_cast<int>(z.size()), std::vector<double>(z.begin(), z.end()), {1.0});
}

std::vector<double> WeightedCloud::mean() const {
  std::vector<double> m(dim_, 0.0);
  for (std::size_t i = 0; i < size(); ++i) {
    const auto x = point(i);
    for (int k = 0; k < dim_; ++k) m[k] += weights_[i] * x[k];
  }
  return m;
}

double second_moment(const WeightedCloud& m) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    double r2 = 0.0;
    for (double c : m.point(i)) r2 += c * c;
    s += m.weight(i) * r2;
  }
  return std::sqrt(s);
}

namespace {

double dist2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

}  // namespace

WeightedCloud coalesce(const WeightedCloud& m, double tol, std::vector<std::size_t>* cluster_of) {
  if (tol < 0.0) throw ArgumentError("coalesce tolerance must be nonnegative");
  const int d = m.dim();
  const std::size_t n = m.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto pa = m.point(a);
    const auto pb = m.point(b);
    return std::lexicographical_compare(pa.begin(), pa.end(), pb.begin(), pb.end());
  });

  const double radius = 0.5 * tol;
  const double radius2 = radius * radius;
  struct Cluster {
    std::size_t seed;
    double weight = 0.0;
    std::vector<double> moment;
  };
  std::vector<Cluster> clusters;
  std::vector<std::size_t> assignment(n);
  std::size_t window_start = 0;  // clusters with seed x_0 < current x_0 - radius are closed
  for (std::size_t idx : order) {
    const auto x = m.point(idx);
    while (window_start < clusters.size() && m.point(clusters[window_start].seed)[0] < x[0] - radius) {
      ++window_start;
    }
    Cluster* target = nullptr;
    for (std::size_t c = window_start; c < clusters.size(); ++c) {
      if (dist2(m.point(clusters[c].seed), x) <= radius2) {
        target = &clusters[c];
        assignment[idx] = c;
        break;
      }
    }
    if (target == nullptr) {
      assignment[idx] = clusters.size();
      clusters.push_back({idx, 0.0, std::vector<double>(d, 0.0)});
      target = &clusters.back();
    }
    const double w = m.weight(idx);
    target->weight += w;
    for (int k = 0; k < d; ++k) target->moment[k] += w * x[k];
  }
  if (clusters.size() == n) {
    if (cluster_of) {
      cluster_of->resize(n);
      std::iota(cluster_of->begin(), cluster_of->end(), 0);
    }
    return m;
  }
  if (cluster_of) *cluster_of = std::move(assignment);

  std::vector<double> coords;
  std::vector<double> weights;
  coords.reserve(clusters.size() * d);
  weights.reserve(clusters.size());
  for (const auto& c : clusters) {
    if (c.weight > 0.0) {
      for (int k = 0; k < d; ++k) coords.push_back(c.moment[k] / c.weight);
    } else {
      const auto s = m.point(c.seed);
      coords.insert(coords.end(), s.begin(), s.end());
    }
    weights.push_back(c.weight);
  }
  return WeightedCloud::normalized(d, std::move(coords), std::move(weights));
}

LatticeGrid LatticeGrid::regular(const Box& k, double h, std::size_t max_nodes) {
  if (!(h > 0.0)) throw ArgumentError("lattice spacing must be positive");
  LatticeGrid g;
  g.dim_ = k.dim();
  g.h_ = h;
  g.regular_ = true;
  g.kmin_.resize(g.dim_);
  g.extent_.resize(g.dim_);
  g.stride_.resize(g.dim_);
  const Box kh = k.inflated(h);
  double count = 1.0;
  for (int i = 0; i < g.dim_; ++i) {
    const long lo = static_cast<long>(std::ceil(kh.lo[i] / h - 1e-9));
    const long hi = static_cast<long>(std::floor(kh.hi[i] / h + 1e-9));
    g.kmin_[i] = lo;
    g.extent_[i] = hi - lo + 1;
    count *= static_cast<double>(g.extent_[i]);
  }
  if (count > static_cast<double>(max_nodes)) {
    throw ResourceError("lattice with spacing " + std::to_string(h) + " needs " + std::to_string(count) +
                        " nodes, cap is " + std::to_string(max_nodes));
  }
  g.count_ = static_cast<std::size_t>(count);
  std::size_t stride = 1;
  for (int i = g.dim_ - 1; i >= 0; --i) {
    g.stride_[i] = stride;
    stride *= static_cast<std::size_t>(g.extent_[i]);
  }
  g.coords_.resize(g.count_ * g.dim_);
  for (std::size_t n = 0; n < g.count_; ++n) {
    std::size_t rem = n;
    for (int i = 0; i < g.dim_; ++i) {
      const long ki = g.kmin_[i] + static_cast<long>(rem / g.stride_[i]);
      rem %= g.stride_[i];
      g.coords_[n * g.dim_ + i] = static_cast<double>(ki) * h;
    }
  }
  std::vector<double> lo(g.dim_), hi(g.dim_);
  for (int i = 0; i < g.dim_; ++i) {
    lo[i] = static_cast<double>(g.kmin_[i]) * h;
    hi[i] = static_cast<double>(g.kmin_[i] + g.extent_[i] - 1) * h;
  }
  g.box_ = Box(lo, hi);
  return g;
}

LatticeGrid LatticeGrid::from_nodes(int dim, std::vector<double> coords, double spacing) {
  if (dim <= 0 || coords.empty() || coords.size() % dim != 0) throw StructuralError("ragged node coordinates");
  if (!(spacing > 0.0)) throw ArgumentError("lattice spacing must be positive");
  LatticeGrid g;
  g.dim_ = dim;
  g.h_ = spacing;
  g.count_ = coords.size() / dim;
  g.coords_ = std::move(coords);
  std::set<std::vector<double>> seen;
  std::vector<double> lo(dim, INFINITY), hi(dim, -INFINITY);
  for (std::size_t n = 0; n < g.count_; ++n) {
    const auto x = g.node(n);
    if (!seen.emplace(x.begin(), x.end()).second) throw StructuralError("duplicate lattice node");
    for (int i = 0; i < dim; ++i) {
      lo[i] = std::min(lo[i], x[i]);
      hi[i] = std::max(hi[i], x[i]);
    }
  }
  g.box_ = Box(lo, hi);
  return g;
}

std::optional<std::size_t> LatticeGrid::neighbor(std::size_t node, int axis, int sign) const {
  if (!regular_) return std::nullopt;
  const long pos = static_cast<long>((node / stride_[axis]) % static_cast<std::size_t>(extent_[axis]));
  const long next = pos + sign;
  if (next < 0 || next >= extent_[axis]) return std::nullopt;
  return sign > 0 ? node + stride_[axis] : node - stride_[axis];
}

std::optional<std::size_t> LatticeGrid::find(std::span<const long> k) const {
  if (!regular_) return std::nullopt;
  std::size_t idx = 0;
  for (int i = 0; i < dim_; ++i) {
    const long rel = k[i] - kmin_[i];
    if (rel < 0 || rel >= extent_[i]) return std::nullopt;
    idx += static_cast<std::size_t>(rel) * stride_[i];
  }
  return idx;
}

std::size_t LatticeGrid::nearest(std::span<const double> x) const {
  if (regular_) {
    // The rectangular grid is a product set, so the per-axis nearest index is
    // the Euclidean nearest node.
    std::size_t idx = 0;
    for (int i = 0; i < dim_; ++i) {
      long rel = std::lround(x[i] / h_) - kmin_[i];
      rel = std::clamp(rel, 0L, extent_[i] - 1);
      idx += static_cast<std::size_t>(rel) * stride_[i];
    }
    return idx;
  }
  std::size_t best = 0;
  double best_d = INFINITY;
  for (std::size_t n = 0; n < count_; ++n) {
    const double d = dist2(node(n), x);
    if (d < best_d) {
      best_d = d;
      best = n;
    }
  }
  return best;
}

LatticeDistribution::LatticeDistribution(std::vector<double> mu) : mu_(std::move(mu)) {
  if (mu_.empty()) throw StructuralError("lattice distribution is empty");
  double sum = 0.0;
  for (double v : mu_) {
    if (!(v >= -kNegativeMassTol)) throw StructuralError("lattice distribution entry below -1e-12");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kLatticeSumTol) {
    throw StructuralError("lattice distribution mass is " + std::to_string(sum) + ", expected 1");
  }
}

LatticeDistribution LatticeDistribution::dirac(std::size_t n, std::size_t node) {
  std::vector<double> mu(n, 0.0);
  mu.at(node) = 1.0;
  return LatticeDistribution(std::move(mu));
}

LatticeDistribution LatticeDistribution::project(const WeightedCloud& m, const LatticeGrid& grid) {
  if (m.dim() != grid.dim()) throw StructuralError("cloud and grid dimensions differ");
  std::vector<double> mu(grid.size(), 0.0);
  for (std::size_t i = 0; i < m.size(); ++i) mu[grid.nearest(m.point(i))] += m.weight(i);
  return LatticeDistribution(std::move(mu));
}

std::vector<double> LatticeDistribution::clamped() const {
  std::vector<double> out(mu_);
  for (double& v : out) v = std::max(v, 0.0);
  return out;
}

WeightedCloud embed_lattice(const LatticeDistribution& mu, const LatticeGrid& grid,
                            std::vector<std::size_t>* node_index) {
  if (mu.size() != grid.size()) {
    throw StructuralError("lattice distribution has " + std::to_string(mu.size()) + " entries, grid has " +
                          std::to_string(grid.size()) + " nodes");
  }
  std::vector<double> coords;
  std::vector<double> weights;
  if (node_index) node_index->clear();
  for (std::size_t n = 0; n < grid.size(); ++n) {
    if (mu[n] > 0.0) {
      const auto x = grid.node(n);
      coords.insert(coords.end(), x.begin(), x.end());
      weights.push_back(mu[n]);
      if (node_index) node_index->push_back(n);
    }
  }
  return WeightedCloud::normalized(grid.dim(), std::move(coords), std::move(weights));
}

double lattice_covering_radius(const LatticeGrid& grid, std::span<const double> samples) {
  const auto d = static_cast<std::size_t>(grid.dim());
  if (samples.empty() || samples.size() % d != 0) throw ArgumentError("covering check needs a nonempty sample set");
  double worst = 0.0;
  for (std::size_t s = 0; s < samples.size(); s += d) {
    const auto x = samples.subspan(s, d);
    worst = std::max(worst, dist2(grid.node(grid.nearest(x)), x));
  }
  return std::sqrt(worst);
}

}  // namespace mfcmc
