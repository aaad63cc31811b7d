#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mfbo/mfhoo.hpp"

namespace mfbo {

/// Number of MFHOO instances spawned for a budget: N = round((1/2) D_max
/// ln(budget / ln budget)) with D_max = ln 2 / ln(1/rho_max), floored at one
/// instance (and forced to one when the budget is at most e, where the inner
/// logarithm stops being useful).
inline int instance_count(double budget, double rho_max) {
  if (!(rho_max > 0.0 && rho_max < 1.0)) throw std::invalid_argument("instance_count: rho_max must be in (0, 1)");
  if (budget <= std::numbers::e) return 1;
  const double d_max = std::numbers::ln2 / std::log(1.0 / rho_max);
  const long n = std::lround(0.5 * d_max * std::log(budget / std::log(budget)));
  return static_cast<int>(std::max(1L, n));
}

/// Smoothness decays for the spawned instances: rho_i = rho_max^(N/(N-i)) for
/// i = 0..N-1, which starts at rho_max and spaces 1/ln(1/rho_i) uniformly.
inline std::vector<double> rho_schedule(int n, double rho_max) {
  if (n < 1) throw std::invalid_argument("rho_schedule: need at least one instance");
  std::vector<double> rhos(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    rhos[static_cast<std::size_t>(i)] = std::pow(rho_max, static_cast<double>(n) / static_cast<double>(n - i));
  }
  return rhos;
}

/// Shared evaluation store. A query for a cell already evaluated at a nearby
/// fidelity (within tolerance) is served from the store at zero charged cost.
/// Fresh evaluations of a cell are cross-checked against the cell's stored
/// observations at other fidelities to drive the bias estimator.
class EvalCache final : public QueryRouter {
 public:
  static constexpr double kFidelityTolerance = 0.01;

  EvalCache(MultiFidelityObjective& objective, BiasEstimator* estimator, bool enabled)
      : objective_(objective), estimator_(estimator), enabled_(enabled) {}

  QueryResult query(const Cell& cell, std::span<const double> x, double z, Rng& rng) override {
    const std::string key = cell.key();
    if (enabled_) {
      std::lock_guard<std::mutex> lock(mutex_);
      auto it = entries_.find(key);
      if (it != entries_.end()) {
        for (const auto& [stored_z, stored] : it->second) {
          if (std::abs(stored_z - z) < kFidelityTolerance) {
            ++hits_;
            return QueryResult{stored, 0.0, true};
          }
        }
      }
    }
    Observation obs = objective_.evaluate(x, z, rng);
    if (enabled_) {
      std::lock_guard<std::mutex> lock(mutex_);
      auto& stored = entries_[key];
      if (estimator_ != nullptr) {
        // A miss guarantees every stored fidelity is at least the tolerance
        // away, so the slope ratio is never taken over a vanishing gap.
        for (const auto& [stored_z, prior] : stored) estimator_->update(z, obs.y, stored_z, prior.y);
      }
      stored.emplace_back(z, obs);
      ++misses_;
    }
    return QueryResult{std::move(obs), objective_.cost(z), false};
  }

  std::int64_t hits() const { return hits_; }
  std::int64_t misses() const { return misses_; }

 private:
  MultiFidelityObjective& objective_;
  BiasEstimator* estimator_;
  bool enabled_;
  std::mutex mutex_;
  std::unordered_map<std::string, std::vector<std::pair<double, Observation>>> entries_;
  std::int64_t hits_ = 0;
  std::int64_t misses_ = 0;
};

struct MfpooConfig {
  double nu_max = 1.0;
  bool auto_nu = false;  // take nu_max from the bias estimator after its probes
  double rho_max = 0.95;
  double sigma = 0.0;
  double budget = 1.0;
  bool bias_known = false;              // when true the estimator is bypassed
  BiasModel known_bias = BiasModel::linear(1.0);
  std::uint64_t seed = 0;
  bool parallel = false;                // run instances on threads (cache interleaving not reproducible)
  bool cache_enabled = true;
  bool full_tree_refresh = false;
  RecommendationMode recommendation = RecommendationMode::kPractical;  // used by per-instance runs

  void validate() const {
    if (!(rho_max > 0.0 && rho_max < 1.0)) throw std::invalid_argument("MfpooConfig: rho_max must be in (0, 1)");
    if (!(budget > 0.0)) throw std::invalid_argument("MfpooConfig: budget must be > 0");
    if (sigma < 0.0) throw std::invalid_argument("MfpooConfig: sigma must be >= 0");
    if (auto_nu && bias_known) throw std::invalid_argument("MfpooConfig: auto_nu requires an unknown bias");
    if (!auto_nu && !(nu_max > 0.0)) throw std::invalid_argument("MfpooConfig: nu_max must be > 0");
  }
};

struct InstanceOutcome {
  double rho = 0.0;
  RunResult result;
  Observation final_evaluation;  // the confirming z = 1 query of this instance's recommendation
};

struct MfpooResult {
  std::vector<double> recommended_x;
  double recommended_value = std::numeric_limits<double>::quiet_NaN();  // winning z=1 observation
  std::vector<InstanceOutcome> instances;
  std::vector<Observation> estimator_probes;
  int spawned = 0;                   // N after feasibility reduction
  double per_instance_budget = 0.0;
  double nu_max_used = 0.0;
  double estimator_spent = 0.0;
  double estimator_slope = 0.0;      // final c (0 when bias is known)
  double total_charged = 0.0;        // instances + final evaluations + probes
  std::int64_t cache_hits = 0;
  std::int64_t cache_misses = 0;
  bool aborted = false;
  std::string error;
};

/// Spawns a schedule of MFHOO instances over decreasing rho, splits the
/// budget evenly after reserving one top-fidelity confirmation per instance
/// (plus estimator probes), shares the evaluation cache and bias estimator,
/// and returns the candidate whose confirming z = 1 observation is largest.
inline MfpooResult run_mfpoo(const MfpooConfig& cfg, MultiFidelityObjective& objective) {
  cfg.validate();
  MfpooResult out;
  Rng master(cfg.seed);

  std::optional<BiasEstimator> estimator;
  if (!cfg.bias_known) {
    const double probe_cost = objective.cost(0.2) + objective.cost(0.8);
    if (cfg.budget < probe_cost) {
      throw std::invalid_argument("run_mfpoo: budget cannot cover the bias estimator probes");
    }
    const auto& bounds = objective.domain().bounds();
    std::vector<double> probe_x(bounds.size());
    for (std::size_t k = 0; k < bounds.size(); ++k) probe_x[k] = master.uniform(bounds[k].lo, bounds[k].hi);
    Observation hi = objective.evaluate(probe_x, 0.8, master);
    Observation lo = objective.evaluate(probe_x, 0.2, master);
    estimator.emplace(2.0 * std::abs(hi.y - lo.y) / std::abs(0.8 - 0.2), hi.cost + lo.cost);
    out.estimator_probes = {hi, lo};
    out.estimator_spent = estimator->spent();
  }
  const double nu_max = cfg.auto_nu ? estimator->nu_max() : cfg.nu_max;
  out.nu_max_used = nu_max;

  const double lambda_top = objective.cost(1.0);
  int n = instance_count(cfg.budget, cfg.rho_max);
  auto per_instance = [&](int k) {
    return (cfg.budget - out.estimator_spent - static_cast<double>(k) * lambda_top) / static_cast<double>(k);
  };
  while (n > 1 && per_instance(n) <= 0.0) --n;
  const double instance_budget = per_instance(n);
  if (instance_budget <= 0.0) {
    throw std::invalid_argument("run_mfpoo: budget cannot cover one instance plus its confirmation");
  }
  out.spawned = n;
  out.per_instance_budget = instance_budget;

  const std::vector<double> rhos = rho_schedule(n, cfg.rho_max);
  EvalCache cache(objective, estimator ? &*estimator : nullptr, cfg.cache_enabled);
  const BiasRef bias = estimator ? BiasRef::live(&*estimator) : BiasRef::known(cfg.known_bias);

  std::vector<RunResult> results(static_cast<std::size_t>(n));
  auto run_instance = [&](int i) {
    MfhooConfig inst;
    inst.nu = nu_max;
    inst.rho = rhos[static_cast<std::size_t>(i)];
    inst.sigma = cfg.sigma;
    inst.budget = instance_budget;
    inst.bias = bias;
    inst.recommendation = cfg.recommendation;
    inst.seed = master.derive(static_cast<std::uint64_t>(i)).seed();
    inst.full_tree_refresh = cfg.full_tree_refresh;
    Mfhoo search(inst, objective, &cache);
    results[static_cast<std::size_t>(i)] = search.run();
  };

  if (cfg.parallel) {
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) workers.emplace_back(run_instance, i);
    for (std::thread& w : workers) w.join();
  } else {
    for (int i = 0; i < n; ++i) {
      run_instance(i);
      if (results[static_cast<std::size_t>(i)].aborted) break;  // dead objective, stop spawning
    }
  }

  out.cache_hits = cache.hits();
  out.cache_misses = cache.misses();
  out.total_charged = out.estimator_spent;
  for (int i = 0; i < n; ++i) {
    const RunResult& r = results[static_cast<std::size_t>(i)];
    out.total_charged += r.total_cost;
    if (r.aborted) {
      out.aborted = true;
      out.error = r.error;
    }
    out.instances.push_back(InstanceOutcome{rhos[static_cast<std::size_t>(i)], r, Observation{}});
  }
  if (estimator) out.estimator_slope = estimator->slope();
  if (out.aborted) return out;

  // Confirm every candidate once at top fidelity and keep the best.
  int winner = -1;
  for (int i = 0; i < n; ++i) {
    InstanceOutcome& inst = out.instances[static_cast<std::size_t>(i)];
    inst.final_evaluation = objective.evaluate(inst.result.recommended_x, 1.0, master);
    out.total_charged += inst.final_evaluation.cost;
    if (winner < 0 || inst.final_evaluation.y > out.recommended_value) {
      winner = i;
      out.recommended_value = inst.final_evaluation.y;
    }
  }
  out.recommended_x = out.instances[static_cast<std::size_t>(winner)].result.recommended_x;
  return out;
}

/// The single-fidelity baseline: the same schedule with zero bias and every
/// query pinned to z = 1.
inline MfpooResult run_poo_baseline(MfpooConfig cfg, MultiFidelityObjective& objective) {
  cfg.bias_known = true;
  cfg.known_bias = BiasModel::zero();
  cfg.auto_nu = false;
  return run_mfpoo(cfg, objective);
}

}  // namespace mfbo
