#include "mfcmc/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

#include "mfcmc/errors.hpp"

namespace mfcmc {

std::vector<double> TransportPlan::row_sums() const {
  std::vector<double> s(n_source, 0.0);
  for (const auto& e : entries) s[e.source] += e.mass;
  return s;
}

std::vector<double> TransportPlan::column_sums() const {
  std::vector<double> s(n_target, 0.0);
  for (const auto& e : entries) s[e.target] += e.mass;
  return s;
}

namespace {

double ground_cost(std::span<const double> x, std::span<const double> y, double p) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
  return p == 2.0 ? s : std::sqrt(s);
}

void validate_pair(const WeightedCloud& a, const WeightedCloud& b, double p) {
  if (p != 1.0 && p != 2.0) throw ArgumentError("only p = 1 and p = 2 are supported");
  if (a.dim() != b.dim()) {
    throw ArgumentError("cannot couple clouds of dimension " + std::to_string(a.dim()) + " and " +
                        std::to_string(b.dim()));
  }
  const double sa = std::accumulate(a.weights().begin(), a.weights().end(), 0.0);
  const double sb = std::accumulate(b.weights().begin(), b.weights().end(), 0.0);
  if (std::abs(sa - sb) > 1e-9) throw ArgumentError("unbalanced masses in transport problem");
}

std::vector<std::size_t> lexicographic_order(const WeightedCloud& m) {
  std::vector<std::size_t> order(m.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    const auto x = m.point(i);
    const auto y = m.point(j);
    return std::lexicographical_compare(x.begin(), x.end(), y.begin(), y.end());
  });
  return order;
}

struct BasicCell {
  std::size_t row;
  std::size_t col;
  double flow;
};

// Transportation simplex on a dense cost matrix. Rows and columns are the
// nodes of a bipartite spanning tree whose edges are the basic cells.
class TransportationSimplex {
 public:
  TransportationSimplex(std::vector<double> supply, std::vector<double> demand, std::vector<double> cost)
      : n_(supply.size()), m_(demand.size()), supply_(std::move(supply)), demand_(std::move(demand)),
        cost_(std::move(cost)) {}

  // North-west corner rule along the given row/column orders.
  void initialize(const std::vector<std::size_t>& row_order, const std::vector<std::size_t>& col_order) {
    basis_.clear();
    std::size_t i = 0, j = 0;
    double rem_row = supply_[row_order[0]];
    double rem_col = demand_[col_order[0]];
    while (true) {
      const double x = std::max(0.0, std::min(rem_row, rem_col));
      basis_.push_back({row_order[i], col_order[j], x});
      rem_row -= x;
      rem_col -= x;
      if (i + 1 == n_ && j + 1 == m_) break;
      if (j + 1 == m_ || (i + 1 < n_ && rem_row <= rem_col)) {
        ++i;
        rem_row = supply_[row_order[i]];
      } else {
        ++j;
        rem_col = demand_[col_order[j]];
      }
    }
  }

  void solve() {
    double max_cost = 0.0;
    for (double c : cost_) max_cost = std::max(max_cost, std::abs(c));
    const double tol = 1e-13 * std::max(1.0, max_cost);
    const std::size_t nodes = n_ + m_;
    const std::size_t max_iterations = 100 * nodes * nodes + 1000;
    std::size_t degenerate_run = 0;
    bool bland = false;

    std::vector<double> potential(nodes);
    std::vector<std::size_t> parent(nodes), parent_cell(nodes), depth(nodes);
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adjacency(nodes);
    std::vector<std::size_t> queue;
    queue.reserve(nodes);

    for (std::size_t iter = 0; iter < max_iterations; ++iter) {
      for (auto& a : adjacency) a.clear();
      for (std::size_t c = 0; c < basis_.size(); ++c) {
        adjacency[basis_[c].row].push_back({n_ + basis_[c].col, c});
        adjacency[n_ + basis_[c].col].push_back({basis_[c].row, c});
      }
      // Potentials u_i + v_j = c_ij on the tree, rooted at row 0.
      std::vector<bool> seen(nodes, false);
      queue.clear();
      queue.push_back(0);
      seen[0] = true;
      potential[0] = 0.0;
      parent[0] = nodes;
      depth[0] = 0;
      for (std::size_t q = 0; q < queue.size(); ++q) {
        const std::size_t u = queue[q];
        for (const auto& [v, c] : adjacency[u]) {
          if (seen[v]) continue;
          seen[v] = true;
          const double cij = cost_[basis_[c].row * m_ + basis_[c].col];
          potential[v] = cij - potential[u];
          parent[v] = u;
          parent_cell[v] = c;
          depth[v] = depth[u] + 1;
          queue.push_back(v);
        }
      }

      // Pricing: Dantzig's rule, Bland's rule after a long degenerate run.
      std::size_t enter_row = n_, enter_col = m_;
      double best = -tol;
      for (std::size_t i = 0; i < n_ && !(bland && enter_row < n_); ++i) {
        for (std::size_t j = 0; j < m_; ++j) {
          const double reduced = cost_[i * m_ + j] - potential[i] - potential[n_ + j];
          if (reduced < best) {
            best = bland ? -tol : reduced;
            enter_row = i;
            enter_col = j;
            if (bland) break;
          }
        }
      }
      if (enter_row == n_) return;

      // Tree path from the entering row to the entering column.
      std::vector<std::size_t> up_row, up_col;
      std::size_t a = enter_row, b = n_ + enter_col;
      while (depth[a] > depth[b]) {
        up_row.push_back(parent_cell[a]);
        a = parent[a];
      }
      while (depth[b] > depth[a]) {
        up_col.push_back(parent_cell[b]);
        b = parent[b];
      }
      while (a != b) {
        up_row.push_back(parent_cell[a]);
        a = parent[a];
        up_col.push_back(parent_cell[b]);
        b = parent[b];
      }
      std::vector<std::size_t> path = std::move(up_row);
      path.insert(path.end(), up_col.rbegin(), up_col.rend());

      // Odd positions along the path lose flow.
      double theta = std::numeric_limits<double>::infinity();
      std::size_t leaving = basis_.size();
      for (std::size_t k = 0; k < path.size(); k += 2) {
        const double x = basis_[path[k]].flow;
        if (x < theta || (bland && x == theta && path[k] < leaving)) {
          theta = x;
          leaving = path[k];
        }
      }
      theta = std::max(theta, 0.0);
      for (std::size_t k = 0; k < path.size(); ++k) {
        double& x = basis_[path[k]].flow;
        x = (k % 2 == 0) ? std::max(0.0, x - theta) : x + theta;
      }
      basis_[leaving] = {enter_row, enter_col, theta};

      if (theta == 0.0) {
        if (++degenerate_run > 2 * nodes) bland = true;
      } else {
        degenerate_run = 0;
        bland = false;
      }
    }
    throw Error("transportation simplex did not converge");
  }

  const std::vector<BasicCell>& basis() const { return basis_; }

 private:
  std::size_t n_, m_;
  std::vector<double> supply_, demand_, cost_;
  std::vector<BasicCell> basis_;
};

TransportPlan finish_plan(std::vector<PlanEntry> entries, const WeightedCloud& a, const WeightedCloud& b, double p) {
  std::sort(entries.begin(), entries.end(), [](const PlanEntry& x, const PlanEntry& y) {
    return x.source != y.source ? x.source < y.source : x.target < y.target;
  });
  TransportPlan plan;
  plan.entries = std::move(entries);
  plan.n_source = a.size();
  plan.n_target = b.size();
  plan.p = p;
  plan.cost = plan_cost(plan, a, b);
  return plan;
}

}  // namespace

double plan_cost(const TransportPlan& plan, const WeightedCloud& a, const WeightedCloud& b) {
  double c = 0.0;
  for (const auto& e : plan.entries) c += e.mass * ground_cost(a.point(e.source), b.point(e.target), plan.p);
  return c;
}

void check_marginals(const TransportPlan& plan, const WeightedCloud& a, const WeightedCloud& b, double tol) {
  if (plan.n_source != a.size() || plan.n_target != b.size()) throw CouplingError("plan shape does not match clouds");
  const auto rows = plan.row_sums();
  const auto cols = plan.column_sums();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (std::abs(rows[i] - a.weight(i)) > tol) {
      throw CouplingError("plan row " + std::to_string(i) + " misses its marginal by " +
                          std::to_string(std::abs(rows[i] - a.weight(i))));
    }
  }
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (std::abs(cols[j] - b.weight(j)) > tol) {
      throw CouplingError("plan column " + std::to_string(j) + " misses its marginal by " +
                          std::to_string(std::abs(cols[j] - b.weight(j))));
    }
  }
}

TransportPlan optimal_plan(const WeightedCloud& a, const WeightedCloud& b, double p) {
  validate_pair(a, b, p);
  const std::size_t n = a.size(), m = b.size();
  std::vector<double> cost(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) cost[i * m + j] = ground_cost(a.point(i), b.point(j), p);
  }
  TransportationSimplex simplex(a.weights(), b.weights(), std::move(cost));
  // Sorted north-west corner is already optimal in one dimension.
  simplex.initialize(lexicographic_order(a), lexicographic_order(b));
  simplex.solve();

  std::vector<PlanEntry> entries;
  for (const auto& c : simplex.basis()) {
    if (c.flow > 0.0) entries.push_back({c.row, c.col, c.flow});
  }
  return finish_plan(std::move(entries), a, b, p);
}

double wasserstein(const WeightedCloud& a, const WeightedCloud& b, double p) {
  const double c = std::max(0.0, optimal_plan(a, b, p).cost);
  return p == 2.0 ? std::sqrt(c) : c;
}

namespace {

struct TreeSearch {
  std::size_t n, m;
  const std::vector<double>& supply;
  const std::vector<double>& demand;
  const std::vector<double>& cost;
  std::vector<std::size_t> chosen;
  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<PlanEntry> best_plan;

  static std::size_t root(std::vector<std::size_t>& uf, std::size_t x) {
    while (uf[x] != x) x = uf[x];
    return x;
  }

  // Leaf peeling: a spanning tree determines its flows uniquely.
  void evaluate() {
    const std::size_t nodes = n + m;
    std::vector<double> residual(nodes);
    for (std::size_t i = 0; i < n; ++i) residual[i] = supply[i];
    for (std::size_t j = 0; j < m; ++j) residual[n + j] = demand[j];
    std::vector<std::size_t> degree(nodes, 0);
    for (std::size_t c : chosen) {
      ++degree[c / m];
      ++degree[n + c % m];
    }
    std::vector<bool> used(chosen.size(), false);
    std::vector<double> flow(chosen.size(), 0.0);
    for (std::size_t done = 0; done < chosen.size(); ++done) {
      std::size_t pick = chosen.size(), leaf = 0;
      for (std::size_t e = 0; e < chosen.size() && pick == chosen.size(); ++e) {
        if (used[e]) continue;
        const std::size_t r = chosen[e] / m, c = n + chosen[e] % m;
        if (degree[r] == 1) {
          pick = e;
          leaf = r;
        } else if (degree[c] == 1) {
          pick = e;
          leaf = c;
        }
      }
      const std::size_t r = chosen[pick] / m, c = n + chosen[pick] % m;
      const std::size_t other = leaf == r ? c : r;
      const double x = residual[leaf];
      if (x < -1e-12) return;
      flow[pick] = x;
      residual[leaf] = 0.0;
      residual[other] -= x;
      used[pick] = true;
      --degree[r];
      --degree[c];
    }
    double total = 0.0;
    for (std::size_t e = 0; e < chosen.size(); ++e) total += std::max(0.0, flow[e]) * cost[chosen[e]];
    if (total < best_cost) {
      best_cost = total;
      best_plan.clear();
      for (std::size_t e = 0; e < chosen.size(); ++e) {
        if (flow[e] > 0.0) best_plan.push_back({chosen[e] / m, chosen[e] % m, flow[e]});
      }
    }
  }

  void search(std::size_t next, std::vector<std::size_t>& uf) {
    const std::size_t needed = n + m - 1;
    if (chosen.size() == needed) {
      evaluate();
      return;
    }
    for (std::size_t c = next; c < n * m; ++c) {
      if (n * m - c < needed - chosen.size()) return;
      const std::size_t ra = root(uf, c / m), rb = root(uf, n + c % m);
      if (ra == rb) continue;
      std::vector<std::size_t> saved = uf;
      uf[ra] = rb;
      chosen.push_back(c);
      search(c + 1, uf);
      chosen.pop_back();
      uf = std::move(saved);
    }
  }
};

}  // namespace

TransportPlan brute_force_plan(const WeightedCloud& a, const WeightedCloud& b, double p) {
  validate_pair(a, b, p);
  if (a.size() > 5 || b.size() > 5) throw ArgumentError("brute-force plan supports at most 5 x 5 atoms");
  const std::size_t n = a.size(), m = b.size();
  std::vector<double> cost(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) cost[i * m + j] = ground_cost(a.point(i), b.point(j), p);
  }
  TreeSearch search{n, m, a.weights(), b.weights(), cost, {}, std::numeric_limits<double>::infinity(), {}};
  std::vector<std::size_t> uf(n + m);
  std::iota(uf.begin(), uf.end(), 0);
  search.search(0, uf);
  return finish_plan(std::move(search.best_plan), a, b, p);
}

std::vector<ConditionalRow> disintegrate(const TransportPlan& plan, PlanSide side) {
  std::map<std::size_t, ConditionalRow> rows;
  for (const auto& e : plan.entries) {
    if (!(e.mass > 0.0)) continue;
    const std::size_t atom = side == PlanSide::source ? e.source : e.target;
    const std::size_t other = side == PlanSide::source ? e.target : e.source;
    auto& row = rows[atom];
    row.atom = atom;
    row.marginal += e.mass;
    row.others.push_back(other);
    row.probabilities.push_back(e.mass);
  }
  std::vector<ConditionalRow> out;
  out.reserve(rows.size());
  for (auto& [atom, row] : rows) {
    for (double& q : row.probabilities) q /= row.marginal;
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<PlanEntry> recombine(const std::vector<ConditionalRow>& rows, PlanSide side) {
  std::vector<PlanEntry> entries;
  for (const auto& row : rows) {
    for (std::size_t k = 0; k < row.others.size(); ++k) {
      const double mass = row.marginal * row.probabilities[k];
      if (side == PlanSide::source) {
        entries.push_back({row.atom, row.others[k], mass});
      } else {
        entries.push_back({row.others[k], row.atom, mass});
      }
    }
  }
  return entries;
}

}  // namespace mfcmc
