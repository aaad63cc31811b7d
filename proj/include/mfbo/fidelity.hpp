#pragma once

#include <cmath>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <utility>

namespace mfbo {

/// Floor for the estimated bias slope. The online initializer can observe
/// Y1 == Y2 (flat region, or a genuinely single-fidelity objective), which
/// would make the bias inverse undefined; the floor keeps every schedule
/// well-defined.
inline constexpr double kBiasSlopeFloor = 1e-3;

/// Evaluation price lambda(z). Positive and nondecreasing on [0, 1]; both are
/// the caller's contract, not checked per call.
class CostFunction {
 public:
  CostFunction() : fn_([](double) { return 1.0; }) {}
  explicit CostFunction(std::function<double(double)> fn) : fn_(std::move(fn)) {
    if (!fn_) throw std::invalid_argument("CostFunction: empty function");
  }

  double operator()(double z) const { return fn_(z); }

  static CostFunction unit() { return CostFunction(); }

  /// lambda(z) = base + scale * z^power.
  static CostFunction poly(double base, double scale, double power) {
    return CostFunction([base, scale, power](double z) { return base + scale * std::pow(z, power); });
  }

 private:
  std::function<double(double)> fn_;
};

/// Parametric bias bound zeta(z) on |f_z(x) - f(x)|.
///
/// The linear form is zeta(z) = c(1-z). The zero form is the single-fidelity
/// configuration: zeta == 0 with the inverse pinned to z = 1, which turns the
/// fidelity schedule into constant top-fidelity queries.
class BiasModel {
 public:
  static BiasModel linear(double slope) {
    BiasModel m;
    m.c_ = slope >= kBiasSlopeFloor ? slope : kBiasSlopeFloor;  // also catches NaN
    return m;
  }

  static BiasModel zero() {
    BiasModel m;
    m.zero_ = true;
    m.c_ = 0.0;
    return m;
  }

  double bias(double z) const { return zero_ ? 0.0 : c_ * (1.0 - z); }

  /// Smallest z in [0, 1] with zeta(z) <= target.
  double inverse(double target) const {
    if (zero_) return 1.0;
    if (target <= 0.0) return 1.0;
    if (target >= c_) return 0.0;
    return 1.0 - target / c_;
  }

  bool is_zero() const { return zero_; }
  double slope() const { return c_; }

 private:
  bool zero_ = false;
  double c_ = 1.0;
};

/// Online estimate of the linear bias slope, shared by all search instances
/// of one run. Reads and updates are serialized; the slope never decreases.
class BiasEstimator {
 public:
  explicit BiasEstimator(double initial_slope, double spent = 0.0)
      : slope_(initial_slope >= kBiasSlopeFloor ? initial_slope : kBiasSlopeFloor), spent_(spent) {}

  double slope() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return slope_;
  }

  /// Current smoothness cap nu_max = 2c.
  double nu_max() const { return 2.0 * slope(); }

  /// Cost consumed by the initialization probes.
  double spent() const { return spent_; }

  double bias(double z) const { return slope() * (1.0 - z); }

  double inverse(double target) const { return BiasModel::linear(slope()).inverse(target); }

  /// Cross-fidelity check on two observations of the same point: if the
  /// observed slope exceeds the current estimate, double it. Returns whether
  /// a doubling happened.
  bool update(double z1, double y1, double z2, double y2) {
    const double dz = std::abs(z1 - z2);
    if (dz == 0.0) return false;
    const double ratio = std::abs(y1 - y2) / dz;
    std::lock_guard<std::mutex> lock(mutex_);
    if (ratio > slope_) {
      slope_ *= 2.0;
      return true;
    }
    return false;
  }

 private:
  mutable std::mutex mutex_;
  double slope_;
  double spent_;
};

/// A bias source for an optimizer instance: either a fixed known model or a
/// live shared estimator, re-read on every access.
struct BiasRef {
  BiasModel model = BiasModel::linear(1.0);
  BiasEstimator* estimator = nullptr;

  static BiasRef known(BiasModel m) { return BiasRef{m, nullptr}; }
  static BiasRef live(BiasEstimator* e) { return BiasRef{BiasModel::linear(1.0), e}; }

  double bias(double z) const { return estimator ? estimator->bias(z) : model.bias(z); }
  double inverse(double target) const { return estimator ? estimator->inverse(target) : model.inverse(target); }
  bool pinned_top_fidelity() const { return estimator == nullptr && model.is_zero(); }
};

}  // namespace mfbo
