#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace mfcmc {

inline constexpr double kWeightSumTol = 1e-12;
inline constexpr double kLatticeSumTol = 1e-9;
inline constexpr double kNegativeMassTol = 1e-12;

// Axis-aligned box [lo, hi] in R^d. All state constraint sets are boxes.
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  Box() = default;
  Box(std::vector<double> lo_, std::vector<double> hi_);
  static Box cube(int dim, double lo, double hi);

  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(std::span<const double> x, double tol = 0.0) const;
  // Euclidean distance from x to the box (0 inside).
  double distance(std::span<const double> x) const;
  Box inflated(double r) const;
  double diameter() const;
};

// Finite probability measure sum_i w_i delta_{x_i} on R^d. Points are stored
// row-major in one flat buffer.
class WeightedCloud {
 public:
  WeightedCloud() = default;
  // Validates: weights >= 0, sum to one within kWeightSumTol, coords.size()
  // == dim * weights.size(). Throws StructuralError otherwise.
  WeightedCloud(int dim, std::vector<double> coords, std::vector<double> weights);

  // Clamps weights above -kNegativeMassTol to zero and rescales to unit mass.
  // Weights already summing to one up to round-off are kept unchanged.
  static WeightedCloud normalized(int dim, std::vector<double> coords, std::vector<double> weights);
  static WeightedCloud dirac(std::span<const double> z);

  int dim() const { return dim_; }
  std::size_t size() const { return weights_.size(); }
  bool empty() const { return weights_.empty(); }

  std::span<const double> point(std::size_t i) const {
    return {coords_.data() + i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }
  double weight(std::size_t i) const { return weights_[i]; }
  const std::vector<double>& coords() const { return coords_; }
  const std::vector<double>& weights() const { return weights_; }

  std::vector<double> mean() const;

 private:
  int dim_ = 0;
  std::vector<double> coords_;
  std::vector<double> weights_;
};

// (sum_i w_i |x_i|^2)^{1/2}
double second_moment(const WeightedCloud& m);

// Merges points lying within tol/2 of a cluster seed into the cluster's
// weight-barycenter. Every point moves by at most tol, so W2(m, out) <= tol.
// Weight and mean are preserved; tol = 0 merges exact duplicates only.
// cluster_of (when given) receives the output index of every input atom.
WeightedCloud coalesce(const WeightedCloud& m, double tol, std::vector<std::size_t>* cluster_of = nullptr);

// Finite node set S. The regular construction is (K + [-h, h]^d) ∩ hZ^d with
// nodes ordered row-major (last axis fastest).
class LatticeGrid {
 public:
  LatticeGrid() = default;

  // Throws ArgumentError for h <= 0 and ResourceError above max_nodes.
  static LatticeGrid regular(const Box& k, double h, std::size_t max_nodes);
  // Arbitrary finite node set (no neighbor structure). Nodes must be distinct.
  static LatticeGrid from_nodes(int dim, std::vector<double> coords, double spacing);

  int dim() const { return dim_; }
  std::size_t size() const { return count_; }
  double spacing() const { return h_; }
  bool is_regular() const { return regular_; }
  const Box& box() const { return box_; }
  const std::vector<double>& coords() const { return coords_; }
  std::span<const double> node(std::size_t i) const {
    return {coords_.data() + i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }

  // Regular grids only: node reached by one step of sign (+1/-1) along axis.
  std::optional<std::size_t> neighbor(std::size_t node, int axis, int sign) const;
  // Node with the given integer lattice coordinates (x = h * k), if present.
  std::optional<std::size_t> find(std::span<const long> k) const;
  std::size_t nearest(std::span<const double> x) const;

 private:
  int dim_ = 0;
  std::size_t count_ = 0;
  double h_ = 0.0;
  bool regular_ = false;
  Box box_;
  std::vector<double> coords_;
  std::vector<long> kmin_;
  std::vector<long> extent_;
  std::vector<std::size_t> stride_;
};

// Probability vector indexed by grid nodes.
class LatticeDistribution {
 public:
  LatticeDistribution() = default;
  // Validates entries >= -kNegativeMassTol and sum within kLatticeSumTol.
  explicit LatticeDistribution(std::vector<double> mu);

  static LatticeDistribution dirac(std::size_t n, std::size_t node);
  // Assigns every atom of m to its nearest grid node.
  static LatticeDistribution project(const WeightedCloud& m, const LatticeGrid& grid);

  std::size_t size() const { return mu_.size(); }
  double operator[](std::size_t i) const { return mu_[i]; }
  const std::vector<double>& values() const { return mu_; }
  // Negative drift clamped to zero.
  std::vector<double> clamped() const;

 private:
  std::vector<double> mu_;
};

// I(mu) = sum_x mu_x delta_x. Zero-mass nodes are dropped; node_index (when
// given) receives the grid index of every returned atom.
WeightedCloud embed_lattice(const LatticeDistribution& mu, const LatticeGrid& grid,
                            std::vector<std::size_t>* node_index = nullptr);

// max over samples of the distance to the nearest node. Throws ArgumentError
// for an empty sample set.
double lattice_covering_radius(const LatticeGrid& grid, std::span<const double> samples);

}  // namespace mfcmc
