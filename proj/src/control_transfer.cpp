#include "mfcmc/control_transfer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mfcmc/errors.hpp"
#include "mfcmc/transport.hpp"
#include "mfcmc/util.hpp"

namespace mfcmc {

namespace {

constexpr double kEndpointTol = 1e-9;

}  // namespace

ControlDistribution transfer(const ControlDistribution& alpha, double s, const MFCFlow& flow) {
  if (s < alpha.start() - 1e-12 || s >= alpha.end()) {
    throw ArgumentError("transfer time " + std::to_string(s) + " outside [" + std::to_string(alpha.start()) + ", " +
                        std::to_string(alpha.end()) + ")");
  }
  if (flow.item_count() != alpha.size()) throw ArgumentError("flow was not produced from this distribution");
  const std::size_t k = flow.index_of(s);
  std::vector<ControlItem> items;
  items.reserve(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    const auto x = flow.state(k, i);
    const auto& it = alpha.item(i);
    items.push_back({it.weight, std::vector<double>(x.begin(), x.end()), restrict(it.control, s, alpha.end())});
  }
  return ControlDistribution(alpha.dim(), std::move(items));
}

ControlDistribution restrict_distribution(const ControlDistribution& alpha, double s, double r, const MFCFlow& flow) {
  if (!(s < r)) throw ArgumentError("restriction interval is empty");
  const auto moved = transfer(alpha, s, flow);
  std::vector<ControlItem> items = moved.items();
  for (auto& it : items) it.control = restrict(it.control, s, r);
  return ControlDistribution(alpha.dim(), std::move(items));
}

ControlDistribution concat_distributions(const ControlDistribution& alpha0, const ControlDistribution& alpha1,
                                         double s1, const MFCFlow& flow) {
  if (flow.item_count() != alpha0.size()) throw ArgumentError("flow was not produced from alpha0");
  const std::size_t k = flow.index_of(s1);
  const double gap = wasserstein(alpha1.base_cloud(), flow.cloud(k));
  if (gap > kEndpointTol) {
    throw CouplingError("alpha1 does not start from the time-" + std::to_string(s1) + " cloud: W2 gap " +
                        std::to_string(gap));
  }

  // alpha1 items sorted by first coordinate for endpoint lookup.
  const int d = alpha0.dim();
  std::vector<std::size_t> order(alpha1.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return alpha1.item(a).state[0] < alpha1.item(b).state[0]; });

  std::vector<ControlItem> items;
  std::vector<std::size_t> match;
  for (std::size_t i = 0; i < alpha0.size(); ++i) {
    const auto x = flow.state(k, i);
    match.clear();
    auto lo = std::lower_bound(order.begin(), order.end(), x[0] - kEndpointTol,
                               [&](std::size_t j, double v) { return alpha1.item(j).state[0] < v; });
    double mass = 0.0;
    for (auto it = lo; it != order.end() && alpha1.item(*it).state[0] <= x[0] + kEndpointTol; ++it) {
      double dist2 = 0.0;
      for (int c = 0; c < d; ++c) dist2 += (alpha1.item(*it).state[c] - x[c]) * (alpha1.item(*it).state[c] - x[c]);
      if (std::sqrt(dist2) <= kEndpointTol && alpha1.item(*it).weight > 0.0) {
        match.push_back(*it);
        mass += alpha1.item(*it).weight;
      }
    }
    if (match.empty()) {
      if (alpha0.item(i).weight == 0.0) continue;
      throw CouplingError("no continuation in alpha1 for the endpoint of item " + std::to_string(i));
    }
    std::sort(match.begin(), match.end());
    const auto& first = alpha0.item(i);
    for (std::size_t j : match) {
      const auto& next = alpha1.item(j);
      items.push_back({first.weight * next.weight / mass, first.state, concat_controls(first.control, next.control)});
    }
  }
  double total = 0.0;
  for (const auto& it : items) total += it.weight;
  if (!is_unit_total(total, items.size())) {
    for (auto& it : items) it.weight /= total;
  }
  return ControlDistribution(d, std::move(items));
}

}  // namespace mfcmc
