#pragma once

#include <cmath>
#include <limits>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mfbo/fidelity.hpp"
#include "mfbo/objective.hpp"
#include "mfbo/partition.hpp"

namespace mfbo {

struct NearOptimalityParams {
  double nu = 1.0;
  double rho = 0.5;
  double d = 0.0;  // near-optimality dimension
  double c = 1.0;  // packing constant C(nu, rho)
};

/// Guaranteed number of rounds within a budget: the largest n such that the
/// worst-case cost chain sum_{h=1..n} lambda(zeta^{-1}(nu rho^h)) stays
/// strictly below the budget. Computed by direct summation.
inline std::int64_t n_lambda(double budget, const CostFunction& cost, const BiasModel& bias, double nu,
                             double rho) {
  if (!(budget > 0.0)) throw std::invalid_argument("n_lambda: budget must be > 0");
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("n_lambda: rho must be in (0, 1)");
  constexpr std::int64_t kMaxRounds = 100'000'000;
  double acc = 0.0;
  std::int64_t n = 0;
  double scale = nu;
  while (n < kMaxRounds) {
    scale *= rho;  // nu * rho^(n+1)
    const double step = cost(bias.inverse(scale));
    if (!(step > 0.0)) throw std::invalid_argument("n_lambda: cost function must be positive");
    if (acc + step >= budget) return n;
    acc += step;
    ++n;
  }
  throw std::invalid_argument("n_lambda: cost chain too small for the budget");
}

/// Simple-regret bound shape (C sigma^2 ln n / n)^(1/(d+2)) with all
/// universal constants set to one; meant for monotonicity and shape checks,
/// not absolute prediction. Accepts real n so the shape can be evaluated at
/// budget ratios as well as query counts.
inline double simple_regret_bound(double n, const NearOptimalityParams& params, double sigma) {
  if (!(n >= 2.0)) throw std::invalid_argument("simple_regret_bound: n must be >= 2");
  const double exponent = 1.0 / (params.d + 2.0);
  return std::pow(params.c, exponent) * std::pow(n, -exponent) *
         std::pow(sigma * sigma * std::log(n), exponent);
}

/// Cumulative-regret bound shape C^(1/(d+2)) n^((d+1)/(d+2)) (sigma^2 ln
/// n)^(1/(d+2)); n times the simple-regret bound.
inline double cumulative_regret_bound(double n, const NearOptimalityParams& params, double sigma) {
  if (!(n >= 2.0)) throw std::invalid_argument("cumulative_regret_bound: n must be >= 2");
  const double exponent = 1.0 / (params.d + 2.0);
  return std::pow(params.c, exponent) * std::pow(n, (params.d + 1.0) * exponent) *
         std::pow(sigma * sigma * std::log(n), exponent);
}

struct GeometricCondition {
  bool holds = true;
  int first_violation = -1;  // smallest violating height, -1 when none
};

/// Checks lambda(zeta^{-1}(nu* rho*^h)) <= min(beta h, lambda(1)) for
/// h = 1..h_max: the cheap-fidelity growth condition under which the
/// budget-vs-regret comparison against single-fidelity search sharpens.
inline GeometricCondition check_condition_geom(const CostFunction& cost, const BiasModel& bias,
                                               double nu_star, double rho_star, double beta, int h_max) {
  if (h_max < 1) throw std::invalid_argument("check_condition_geom: h_max must be >= 1");
  const double lambda_top = cost(1.0);
  for (int h = 1; h <= h_max; ++h) {
    const double z = bias.inverse(nu_star * std::pow(rho_star, h));
    if (cost(z) > std::min(beta * h, lambda_top)) return GeometricCondition{false, h};
  }
  return GeometricCondition{true, -1};
}

/// Query-count floor under the geometric condition: sqrt(2 (budget -
/// lambda(1)) / beta).
inline double geometric_query_lower_bound(double budget, double lambda_top, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("geometric_query_lower_bound: beta must be > 0");
  if (budget < lambda_top) throw std::invalid_argument("geometric_query_lower_bound: budget below lambda(1)");
  return std::sqrt(2.0 * (budget - lambda_top) / beta);
}

/// Empirical count of depth-h cells whose top-fidelity grid maximum reaches
/// within eps of the reference optimum. The grid places `grid_resolution`
/// points per coordinate at each cell's lower-closed lattice; exact for
/// Lipschitz means as the resolution grows. Uses the objective's stored
/// optimum as reference, falling back to the global grid maximum.
inline std::int64_t near_optimal_cell_count(const MultiFidelityObjective& objective, int depth, double eps,
                                            int grid_resolution) {
  if (depth < 0 || depth > 20) throw std::invalid_argument("near_optimal_cell_count: depth out of range");
  if (grid_resolution < 1) throw std::invalid_argument("near_optimal_cell_count: resolution must be >= 1");

  std::vector<Cell> level{Cell::root(objective.domain())};
  for (int h = 0; h < depth; ++h) {
    std::vector<Cell> next;
    next.reserve(level.size() * 2);
    for (const Cell& cell : level) {
      auto [lo, hi] = cell.split();
      next.push_back(std::move(lo));
      next.push_back(std::move(hi));
    }
    level = std::move(next);
  }

  const std::size_t dim = objective.domain().bounds().size();
  std::vector<double> cell_max(level.size(), -std::numeric_limits<double>::infinity());
  std::vector<double> point(dim);
  for (std::size_t ci = 0; ci < level.size(); ++ci) {
    const auto& bounds = level[ci].bounds();
    std::vector<int> idx(dim, 0);
    while (true) {
      for (std::size_t k = 0; k < dim; ++k) {
        point[k] = bounds[k].lo + static_cast<double>(idx[k]) * bounds[k].width() / grid_resolution;
      }
      const auto value = objective.mean(point, 1.0);
      if (!value) throw std::invalid_argument("near_optimal_cell_count: objective has no analytic mean");
      if (*value > cell_max[ci]) cell_max[ci] = *value;
      std::size_t k = 0;
      while (k < dim && ++idx[k] == grid_resolution) idx[k++] = 0;
      if (k == dim) break;
    }
  }

  double reference = -std::numeric_limits<double>::infinity();
  if (const auto opt = objective.optimum()) {
    reference = opt->value;
  } else {
    for (double v : cell_max) reference = std::max(reference, v);
  }

  std::int64_t count = 0;
  for (double v : cell_max) {
    if (v >= reference - eps) ++count;
  }
  return count;
}

}  // namespace mfbo
