#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mfbo/fidelity.hpp"
#include "mfbo/objective.hpp"
#include "mfbo/partition.hpp"
#include "mfbo/rng.hpp"

namespace mfbo {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class RecommendationMode { kPractical, kTheoretical };

struct MfhooConfig {
  double nu = 1.0;                  // smoothness scale
  double rho = 0.5;                 // smoothness decay, in (0, 1)
  double sigma = 0.0;               // noise scale used in the confidence width
  double budget = 1.0;              // cost budget for this instance
  BiasRef bias;                     // known model or live shared estimator
  RecommendationMode recommendation = RecommendationMode::kPractical;
  std::uint64_t seed = 0;
  // Refresh U over the whole visited tree each round instead of only the
  // traversed path. The path-only variant follows the update rule literally;
  // the full refresh matches the assumption the regret analysis makes.
  bool full_tree_refresh = false;

  void validate() const {
    if (!(nu > 0.0)) throw std::invalid_argument("MfhooConfig: nu must be > 0");
    if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("MfhooConfig: rho must be in (0, 1)");
    if (!(budget > 0.0)) throw std::invalid_argument("MfhooConfig: budget must be > 0");
    if (sigma < 0.0) throw std::invalid_argument("MfhooConfig: sigma must be >= 0");
  }
};

/// One query performed by an instance. `cost` is what the instance was
/// charged: the evaluation price, or zero when served from a shared cache.
struct EvalRecord {
  std::int64_t t = 0;  // 1-based round index within the instance
  Cell cell;
  std::vector<double> x;
  double z = 1.0;
  double y = 0.0;
  double cost = 0.0;
  bool cache_hit = false;
};

/// Node statistics of the visited tree.
///
/// `expanded` marks membership in the visited tree T; children are
/// materialized lazily and carry B = +inf until they are themselves queried.
struct TreeNode {
  Cell cell;
  std::int64_t visits = 0;    // T: queries in this subtree
  double value_mean = 0.0;    // running mean of raw observed values
  double upper = kInf;        // U
  double backed = kInf;       // B
  bool expanded = false;
  std::unique_ptr<TreeNode> left, right;
};

struct QueryResult {
  Observation obs;
  double charged = 0.0;
  bool cache_hit = false;
};

/// Indirection point for evaluation reuse across instances (see mfpoo.hpp).
class QueryRouter {
 public:
  virtual ~QueryRouter() = default;
  virtual QueryResult query(const Cell& cell, std::span<const double> x, double z, Rng& rng) = 0;
};

struct RunResult {
  std::vector<double> recommended_x;
  double recommended_score = std::numeric_limits<double>::quiet_NaN();
  std::vector<EvalRecord> evaluations;
  double total_cost = 0.0;  // charged cost C
  std::int64_t rounds = 0;  // n
  bool aborted = false;
  std::string error;
};

/// Multi-fidelity hierarchical optimistic optimization.
///
/// Each round descends the visited tree along maximal B-values (ties broken
/// uniformly at random), queries the representative point of the first
/// unvisited node at the depth-matched fidelity z_h, pushes the observation
/// up the path, and backs B-values up to the root.
class Mfhoo {
 public:
  Mfhoo(MfhooConfig cfg, MultiFidelityObjective& objective, QueryRouter* router = nullptr)
      : cfg_(cfg), objective_(objective), router_(router), rng_(cfg.seed) {
    cfg_.validate();
    root_ = std::make_unique<TreeNode>();
    root_->cell = Cell::root(objective.domain());
    root_->expanded = true;  // the visited tree starts as {(0,1)}
  }

  const MfhooConfig& config() const { return cfg_; }
  const TreeNode& root() const { return *root_; }
  const std::vector<EvalRecord>& evals() const { return evals_; }
  double spent() const { return spent_; }
  std::int64_t rounds() const { return rounds_; }

  /// Fidelity schedule: the smallest z whose bias is at most nu * rho^h,
  /// re-read from the live bias source on every call.
  double fidelity_for_height(int h) const {
    return cfg_.bias.inverse(cfg_.nu * std::pow(cfg_.rho, h));
  }

  /// Bias term entering U at height h: zeta(z_h).
  double bias_at_height(int h) const { return cfg_.bias.bias(fidelity_for_height(h)); }

  /// One round. Returns the updated root-to-leaf path (the last entry is the
  /// node queried this round).
  const std::vector<TreeNode*>& step() {
    select_path();
    TreeNode* leaf = path_.back();

    const int height = leaf->cell.depth();
    const double z = fidelity_for_height(height);
    const std::vector<double> x = leaf->cell.representative();
    QueryResult qr;
    if (router_ != nullptr) {
      qr = router_->query(leaf->cell, x, z, rng_);
    } else {
      qr.obs = objective_.evaluate(x, z, rng_);
      qr.charged = qr.obs.cost;
      qr.cache_hit = false;
    }

    leaf->expanded = true;
    ++rounds_;
    spent_ += qr.charged;
    evals_.push_back(EvalRecord{rounds_, leaf->cell, x, z, qr.obs.y, qr.charged, qr.cache_hit});

    for (TreeNode* node : path_) {
      node->visits += 1;
      const double t = static_cast<double>(node->visits);
      node->value_mean = (1.0 - 1.0 / t) * node->value_mean + qr.obs.y / t;
    }
    for (TreeNode* node : path_) refresh_upper(*node);
    // Children of the new leaf keep B = +inf until queried themselves.
    for (auto it = path_.rbegin(); it != path_.rend(); ++it) backup(**it);

    if (cfg_.full_tree_refresh) refresh_subtree(*root_);
    return path_;
  }

  /// Runs rounds while the charged cost has not exceeded the budget (the
  /// final round may overshoot by at most one top-fidelity evaluation), then
  /// recommends.
  RunResult run() {
    RunResult result;
    while (spent_ <= cfg_.budget) {
      try {
        step();
      } catch (const EvaluationError& e) {
        result.aborted = true;
        result.error = e.what();
        break;
      }
    }
    result.evaluations = evals_;
    result.total_cost = spent_;
    result.rounds = rounds_;
    if (!evals_.empty()) {
      auto [x, score] = recommend(cfg_.recommendation);
      result.recommended_x = std::move(x);
      result.recommended_score = score;
    }
    return result;
  }

  /// Practical mode: the evaluation maximizing y - zeta(z), i.e. the best
  /// certified lower bound on f (ties go to the earliest evaluation).
  /// Theoretical mode: a uniformly random evaluated point.
  std::pair<std::vector<double>, double> recommend(RecommendationMode mode) {
    if (evals_.empty()) throw std::logic_error("recommend: no evaluations performed");
    if (mode == RecommendationMode::kTheoretical) {
      const EvalRecord& pick = evals_[rng_.below(evals_.size())];
      return {pick.x, pick.y};
    }
    std::size_t best = 0;
    double best_score = -kInf;
    for (std::size_t i = 0; i < evals_.size(); ++i) {
      const double score = evals_[i].y - cfg_.bias.bias(evals_[i].z);
      if (score > best_score) {
        best_score = score;
        best = i;
      }
    }
    return {evals_[best].x, best_score};
  }

 private:
  static double child_backed(const std::unique_ptr<TreeNode>& child) {
    return child ? child->backed : kInf;
  }

  void materialize_children(TreeNode& node) {
    if (node.left) return;
    auto [lo, hi] = node.cell.split();
    node.left = std::make_unique<TreeNode>();
    node.right = std::make_unique<TreeNode>();
    node.left->cell = std::move(lo);
    node.right->cell = std::move(hi);
  }

  void select_path() {
    path_.clear();
    TreeNode* node = root_.get();
    path_.push_back(node);
    while (node->expanded) {
      materialize_children(*node);
      const double bl = node->left->backed;
      const double br = node->right->backed;
      bool go_left;
      if (bl > br) {
        go_left = true;
      } else if (br > bl) {
        go_left = false;
      } else {
        go_left = rng_.coin();
      }
      node = go_left ? node->left.get() : node->right.get();
      path_.push_back(node);
    }
  }

  void refresh_upper(TreeNode& node) {
    const int h = node.cell.depth();
    const double t = static_cast<double>(node.visits);
    const double log_n = std::max(std::log(static_cast<double>(rounds_)), 0.0);
    const double confidence = cfg_.sigma > 0.0 ? std::sqrt(2.0 * cfg_.sigma * cfg_.sigma * log_n / t) : 0.0;
    node.upper = node.value_mean + confidence + cfg_.nu * std::pow(cfg_.rho, h) + bias_at_height(h);
  }

  void backup(TreeNode& node) {
    const double best_child = std::max(child_backed(node.left), child_backed(node.right));
    node.backed = std::min(node.upper, best_child);
  }

  void refresh_subtree(TreeNode& node) {
    if (!node.expanded) return;  // frontier: keeps U = B = +inf
    if (node.left) refresh_subtree(*node.left);
    if (node.right) refresh_subtree(*node.right);
    refresh_upper(node);
    backup(node);
  }

  MfhooConfig cfg_;
  MultiFidelityObjective& objective_;
  QueryRouter* router_;
  Rng rng_;
  std::unique_ptr<TreeNode> root_;
  std::vector<TreeNode*> path_;
  std::vector<EvalRecord> evals_;
  double spent_ = 0.0;
  std::int64_t rounds_ = 0;
};

}  // namespace mfbo
