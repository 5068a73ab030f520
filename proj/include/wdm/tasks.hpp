// Copyright 2026 The wdm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wdm/distances.hpp"
#include "wdm/distributions.hpp"

namespace wdm {

enum class TaskKind { mean_mse, median_mae, quantile_mpl, newsvendor };

// An estimation task: which parameter is fitted and how mismatch is scored.
// The mean task scores with squared error under the conventional K = 1;
// squared error is not Lipschitz on unbounded support, so bound violations
// are expected there and flagged by loss_gap.
struct TaskSpec {
  TaskKind kind{TaskKind::median_mae};
  double tau{0.5};           // quantile_mpl only
  double cost_under{0.9};    // newsvendor only
  double cost_over{0.1};     // newsvendor only
  double k_lipschitz{1.0};

  static TaskSpec mean_estimation() { return TaskSpec{TaskKind::mean_mse, 0.5, 0.9, 0.1, 1.0}; }
  static TaskSpec median_estimation() { return TaskSpec{TaskKind::median_mae, 0.5, 0.9, 0.1, 1.0}; }

  static TaskSpec quantile_estimation(double tau) {
    if (!(tau > 0.0 && tau < 1.0)) {
      throw std::invalid_argument("TaskSpec: tau must lie in (0,1)");
    }
    return TaskSpec{TaskKind::quantile_mpl, tau, 0.9, 0.1, std::max(tau, 1.0 - tau)};
  }

  static TaskSpec newsvendor_task(double cost_under = 0.9, double cost_over = 0.1) {
    if (!(cost_under > 0.0) || !(cost_over > 0.0)) {
      throw std::invalid_argument("TaskSpec: newsvendor costs must be positive");
    }
    return TaskSpec{TaskKind::newsvendor, 0.5, cost_under, cost_over,
                    std::max(cost_under, cost_over)};
  }

  double critical_fractile() const { return cost_under / (cost_under + cost_over); }

  std::string name() const {
    switch (kind) {
      case TaskKind::mean_mse: return "mse";
      case TaskKind::median_mae: return "mae";
      case TaskKind::quantile_mpl:
        return "mpl" + std::to_string(static_cast<int>(std::lround(tau * 100.0)));
      case TaskKind::newsvendor: return "nv";
    }
    return "?";
  }
};

// Slope bounds under the usual conventions (squared error is treated as 1).
inline double lipschitz_constant(const TaskSpec& task) {
  switch (task.kind) {
    case TaskKind::mean_mse: return 1.0;
    case TaskKind::median_mae: return 1.0;
    case TaskKind::quantile_mpl: return std::max(task.tau, 1.0 - task.tau);
    case TaskKind::newsvendor: return std::max(task.cost_under, task.cost_over);
  }
  throw std::logic_error("lipschitz_constant: bad kind");
}

// Left-continuous (type-1) order-statistic quantile: x_(ceil(n*tau)).
inline double empirical_quantile_sorted(std::span<const double> sorted, double tau) {
  if (sorted.empty()) throw std::invalid_argument("empirical_quantile: empty sample");
  if (!(tau > 0.0 && tau < 1.0)) {
    throw std::invalid_argument("empirical_quantile: tau must lie in (0,1)");
  }
  const auto n = static_cast<double>(sorted.size());
  auto idx = static_cast<std::size_t>(std::ceil(n * tau));
  idx = std::clamp<std::size_t>(idx, 1, sorted.size());
  return sorted[idx - 1];
}

inline double empirical_quantile(const EmpiricalSample& s, double tau) {
  return empirical_quantile_sorted(s.values(), tau);
}

inline double estimate_parameter_sorted(std::span<const double> sorted, const TaskSpec& task) {
  if (sorted.empty()) throw std::invalid_argument("estimate_parameter: empty sample");
  switch (task.kind) {
    case TaskKind::mean_mse: {
      double s = 0.0;
      for (double v : sorted) s += v;
      return s / static_cast<double>(sorted.size());
    }
    case TaskKind::median_mae:
      return empirical_quantile_sorted(sorted, 0.5);
    case TaskKind::quantile_mpl:
      return empirical_quantile_sorted(sorted, task.tau);
    case TaskKind::newsvendor:
      return empirical_quantile_sorted(sorted, task.critical_fractile());
  }
  throw std::logic_error("estimate_parameter: bad kind");
}

inline double estimate_parameter(const EmpiricalSample& s, const TaskSpec& task) {
  return estimate_parameter_sorted(s.values(), task);
}

// Expected loss of decision `param` scored against `target`:
//   mean_mse     -> mean((x - param)^2)
//   median_mae   -> mean|x - param|
//   quantile_mpl -> mean pinball loss at tau
//   newsvendor   -> mean(cu*(x-param)+ + co*(param-x)+)
inline double expected_loss(std::span<const double> target, const TaskSpec& task, double param) {
  if (target.empty()) throw std::invalid_argument("expected_loss: empty target");
  const auto n = static_cast<double>(target.size());
  double s = 0.0;
  switch (task.kind) {
    case TaskKind::mean_mse:
      for (double x : target) s += (x - param) * (x - param);
      return s / n;
    case TaskKind::median_mae:
      for (double x : target) s += std::abs(x - param);
      return s / n;
    case TaskKind::quantile_mpl:
      for (double x : target) {
        s += task.tau * std::max(x - param, 0.0) + (1.0 - task.tau) * std::max(param - x, 0.0);
      }
      return s / n;
    case TaskKind::newsvendor:
      for (double x : target) {
        s += task.cost_under * std::max(x - param, 0.0) +
             task.cost_over * std::max(param - x, 0.0);
      }
      return s / n;
  }
  throw std::logic_error("expected_loss: bad kind");
}

inline double expected_loss(const EmpiricalSample& target, const TaskSpec& task, double param) {
  return expected_loss(std::span<const double>(target.values()), task, param);
}

// Precomputed prefix sums over a fixed target; evaluates any task loss at a
// given parameter in O(log n). Agrees with expected_loss up to rounding and
// is what the coalition-table builder uses.
class TargetLossEvaluator {
 public:
  explicit TargetLossEvaluator(std::span<const double> target_sorted)
      : sorted_(target_sorted.begin(), target_sorted.end()) {
    if (sorted_.empty()) throw std::invalid_argument("TargetLossEvaluator: empty target");
    prefix_.resize(sorted_.size() + 1, 0.0);
    for (std::size_t i = 0; i < sorted_.size(); ++i) prefix_[i + 1] = prefix_[i] + sorted_[i];
    const double n = static_cast<double>(sorted_.size());
    mean_ = prefix_.back() / n;
    double v = 0.0;
    for (double x : sorted_) v += (x - mean_) * (x - mean_);
    variance_ = v / n;
  }

  explicit TargetLossEvaluator(const EmpiricalSample& target)
      : TargetLossEvaluator(std::span<const double>(target.values())) {}

  double loss(const TaskSpec& task, double param) const {
    if (task.kind == TaskKind::mean_mse) {
      return variance_ + (param - mean_) * (param - mean_);
    }
    const auto n = static_cast<double>(sorted_.size());
    const auto k_it = std::upper_bound(sorted_.begin(), sorted_.end(), param);
    const auto k = static_cast<double>(k_it - sorted_.begin());
    const double s_low = prefix_[static_cast<std::size_t>(k_it - sorted_.begin())];
    const double over = (param * k - s_low) / n;                     // E(param - x)+
    const double under = (prefix_.back() - s_low - param * (n - k)) / n;  // E(x - param)+
    switch (task.kind) {
      case TaskKind::median_mae: return under + over;
      case TaskKind::quantile_mpl: return task.tau * under + (1.0 - task.tau) * over;
      case TaskKind::newsvendor: return task.cost_under * under + task.cost_over * over;
      default: break;
    }
    throw std::logic_error("TargetLossEvaluator: bad kind");
  }

  double mean() const { return mean_; }

 private:
  std::vector<double> sorted_;
  std::vector<double> prefix_;
  double mean_{0.0};
  double variance_{0.0};
};

struct LossReport {
  double loss_p{0.0};        // loss of the coalition-estimated parameter on the target
  double loss_t{0.0};        // loss of the target-estimated parameter on the target
  double gap{0.0};           // loss_p - loss_t
  double lipschitz_rhs{0.0}; // k * W1(coalition, target)
  bool violated{false};      // gap > lipschitz_rhs + 1e-9
};

inline LossReport loss_gap(const EmpiricalSample& coalition, const EmpiricalSample& target,
                           const TaskSpec& task, double precomputed_wd) {
  LossReport r;
  const double param_p = estimate_parameter(coalition, task);
  const double param_t = estimate_parameter(target, task);
  r.loss_p = expected_loss(target, task, param_p);
  r.loss_t = expected_loss(target, task, param_t);
  r.gap = r.loss_p - r.loss_t;
  r.lipschitz_rhs = task.k_lipschitz * precomputed_wd;
  r.violated = r.gap > r.lipschitz_rhs + 1e-9;
  return r;
}

inline LossReport loss_gap(const EmpiricalSample& coalition, const EmpiricalSample& target,
                           const TaskSpec& task) {
  return loss_gap(coalition, target, task, wasserstein1(coalition, target));
}

}  // namespace wdm
