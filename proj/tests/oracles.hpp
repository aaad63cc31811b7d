#pragma once

// Test-only oracles: independent recomputation paths used to freeze expected
// values. Nothing here may call into the library code paths it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mfbo/mfhoo.hpp"
#include "mfbo/objective.hpp"

namespace mfbo::testing {

/// Copy of an analytic objective with a different noise scale.
inline AnalyticObjective with_sigma(const AnalyticObjective& base, double sigma) {
  auto mean = [base](std::span<const double> x, double z) { return *base.mean(x, z); };
  return AnalyticObjective(base.domain(), mean, CostFunction([base](double z) { return base.cost(z); }),
                           sigma, base.optimum());
}

/// Derivative-free pattern-search refinement of the z=1 mean from one start.
/// Coordinate steps with halving radius; box-clipped.
inline std::pair<std::vector<double>, double> refine_maximum(const MultiFidelityObjective& objective,
                                                             std::vector<double> x) {
  const auto& bounds = objective.domain().bounds();
  const auto value_at = [&](const std::vector<double>& p) { return *objective.mean(p, 1.0); };
  double best = value_at(x);
  std::vector<double> radius(bounds.size());
  for (std::size_t k = 0; k < bounds.size(); ++k) radius[k] = 0.25 * bounds[k].width();

  bool any_radius = true;
  while (any_radius) {
    bool improved = false;
    for (std::size_t k = 0; k < bounds.size(); ++k) {
      for (double sign : {+1.0, -1.0}) {
        std::vector<double> trial = x;
        trial[k] = std::clamp(trial[k] + sign * radius[k], bounds[k].lo, bounds[k].hi);
        const double v = value_at(trial);
        if (v > best) {
          best = v;
          x = std::move(trial);
          improved = true;
        }
      }
    }
    if (!improved) {
      any_radius = false;
      for (std::size_t k = 0; k < bounds.size(); ++k) {
        radius[k] *= 0.5;
        if (radius[k] > 1e-13 * bounds[k].width()) any_radius = true;
      }
    }
  }
  return {x, best};
}

/// Multi-start refinement: seeded uniform starts plus any provided ones.
inline std::pair<std::vector<double>, double> multistart_maximum(
    const MultiFidelityObjective& objective, int starts, std::uint64_t seed,
    const std::vector<std::vector<double>>& extra_starts = {}) {
  Rng rng(seed);
  const auto& bounds = objective.domain().bounds();
  std::vector<std::vector<double>> points = extra_starts;
  for (int s = 0; s < starts; ++s) {
    std::vector<double> x(bounds.size());
    for (std::size_t k = 0; k < bounds.size(); ++k) x[k] = rng.uniform(bounds[k].lo, bounds[k].hi);
    points.push_back(std::move(x));
  }
  std::pair<std::vector<double>, double> best{{}, -kInf};
  for (const auto& start : points) {
    auto candidate = refine_maximum(objective, start);
    if (candidate.second > best.second) best = std::move(candidate);
  }
  return best;
}

/// Independent bookkeeping of per-subtree observation counts and sums, fed
/// one evaluation at a time. Keys are cell identities; an observation at a
/// cell contributes to the cell and all of its ancestors.
class SubtreeLedger {
 public:
  void record(const EvalRecord& rec) {
    // accumulate at every prefix depth, from the cell itself up to the root
    const auto& path = rec.cell.path();
    for (int h = rec.cell.depth(); h >= 0; --h) {
      auto& slot = totals_[prefix_key(path, h)];
      slot.first += 1;
      slot.second += rec.y;
    }
  }

  /// (T, mean) of the subtree rooted at the cell.
  std::pair<std::int64_t, double> stats(const Cell& cell) const {
    const auto it = totals_.find(prefix_key(cell.path(), cell.depth()));
    if (it == totals_.end()) return {0, 0.0};
    return {it->second.first, it->second.second / static_cast<double>(it->second.first)};
  }

 private:
  static std::string prefix_key(const std::vector<bool>& path, int depth) {
    std::string k = std::to_string(depth);
    k.push_back(':');
    for (int j = 0; j < depth; ++j) k.push_back(path[static_cast<std::size_t>(j)] ? '1' : '0');
    return k;
  }

  std::map<std::string, std::pair<std::int64_t, double>> totals_;
};

struct PathCheck {
  double max_upper_error = 0.0;
  double max_backed_error = 0.0;
};

/// From-scratch recomputation of U and B along an updated path: subtree means
/// come from the ledger, the fidelity schedule from the closed-form linear
/// bias inverse with known slope, and B is rebuilt bottom-up (stored values
/// are read only for off-path children).
inline PathCheck check_path(const std::vector<TreeNode*>& path, const SubtreeLedger& ledger,
                            std::int64_t rounds, double nu, double rho, double sigma, double bias_slope) {
  PathCheck out;
  double child_backed_oracle = kInf;  // the on-path child of the node being processed
  for (auto it = path.rbegin(); it != path.rend(); ++it) {
    const TreeNode& node = **it;
    const int h = node.cell.depth();
    const auto [count, mean] = ledger.stats(node.cell);
    const double resolution = nu * std::pow(rho, h);
    const double z_h = std::clamp(1.0 - resolution / bias_slope, 0.0, 1.0);
    const double zeta = bias_slope * (1.0 - z_h);
    const double log_n = std::max(std::log(static_cast<double>(rounds)), 0.0);
    const double width =
        sigma > 0.0 ? std::sqrt(2.0 * sigma * sigma * log_n / static_cast<double>(count)) : 0.0;
    const double upper_oracle = mean + width + resolution + zeta;

    double off_path_backed;
    if (it == path.rbegin()) {
      off_path_backed = kInf;  // fresh leaf: both children unexpanded
    } else {
      const TreeNode& deeper = **(it - 1);
      const TreeNode* sibling =
          node.left.get() == &deeper ? node.right.get() : node.left.get();
      off_path_backed = sibling != nullptr ? sibling->backed : kInf;
    }
    const double best_child = std::max(child_backed_oracle, off_path_backed);
    const double backed_oracle = std::min(upper_oracle, best_child);

    out.max_upper_error = std::max(out.max_upper_error, std::abs(upper_oracle - node.upper));
    out.max_backed_error = std::max(out.max_backed_error, std::abs(backed_oracle - node.backed));
    child_backed_oracle = backed_oracle;
  }
  return out;
}

/// Whole-tree structural check: for every visited node, B equals
/// min(U, max(children's B)) with missing children counting as +inf.
inline bool backed_values_consistent(const TreeNode& node) {
  if (!node.expanded) return true;
  const double bl = node.left ? node.left->backed : kInf;
  const double br = node.right ? node.right->backed : kInf;
  if (node.backed != std::min(node.upper, std::max(bl, br))) return false;
  if (node.left && !backed_values_consistent(*node.left)) return false;
  if (node.right && !backed_values_consistent(*node.right)) return false;
  return true;
}

inline std::int64_t count_expanded(const TreeNode& node) {
  if (!node.expanded) return 0;
  std::int64_t n = 1;
  if (node.left) n += count_expanded(*node.left);
  if (node.right) n += count_expanded(*node.right);
  return n;
}

}  // namespace mfbo::testing
