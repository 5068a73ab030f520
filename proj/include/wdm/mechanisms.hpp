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

#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "wdm/subsets.hpp"
#include "wdm/valuation.hpp"

namespace wdm {

// Per-owner reserve-price priors. The built-in family is uniform(lo, hi)
// with analytic CDF/PDF; arbitrary priors can be plugged in through CDF/PDF
// accessors and are checked for regularity (nondecreasing virtual cost) on a
// 1,024-point grid when added.
class PriorSpec {
 public:
  struct Uniform {
    double lo{0.0};
    double hi{1.0};
  };
  struct Custom {
    std::function<double(double)> cdf;
    std::function<double(double)> pdf;
    double lo{0.0};
    double hi{1.0};
  };

  PriorSpec() = default;

  static PriorSpec uniform(std::size_t n_owners, double theta_bar) {
    if (theta_bar < 0.0) throw std::invalid_argument("PriorSpec: theta_bar must be >= 0");
    PriorSpec p;
    p.owners_.assign(n_owners, OwnerPrior{Uniform{0.0, theta_bar}});
    return p;
  }

  static PriorSpec uniform(std::span<const double> theta_bar) {
    PriorSpec p;
    for (double hi : theta_bar) {
      if (hi < 0.0) throw std::invalid_argument("PriorSpec: theta_bar must be >= 0");
      p.owners_.push_back(OwnerPrior{Uniform{0.0, hi}});
    }
    return p;
  }

  void add_uniform(double lo, double hi) {
    if (!(lo <= hi)) throw std::invalid_argument("PriorSpec: lo must not exceed hi");
    owners_.push_back(OwnerPrior{Uniform{lo, hi}});
  }

  void add_custom(Custom c) {
    if (!(c.lo < c.hi)) throw std::invalid_argument("PriorSpec: lo must be below hi");
    if (!c.cdf || !c.pdf) throw std::invalid_argument("PriorSpec: custom prior needs cdf and pdf");
    check_regular(c);
    owners_.push_back(OwnerPrior{std::move(c)});
  }

  std::size_t size() const { return owners_.size(); }

  double lo(std::size_t i) const {
    return std::visit([](const auto& o) { return o.lo; }, at(i));
  }
  double hi(std::size_t i) const {
    return std::visit([](const auto& o) { return o.hi; }, at(i));
  }

  bool is_uniform(std::size_t i) const {
    return std::holds_alternative<Uniform>(at(i));
  }

  double uniform_hi(std::size_t i) const {
    if (!is_uniform(i)) throw std::invalid_argument("PriorSpec: owner prior is not uniform");
    return std::get<Uniform>(at(i)).hi;
  }

  double cdf(std::size_t i, double theta) const {
    return std::visit(
        [theta](const auto& o) -> double {
          using T = std::decay_t<decltype(o)>;
          if constexpr (std::is_same_v<T, Uniform>) {
            if (o.hi <= o.lo) return 1.0;  // point mass
            return (theta - o.lo) / (o.hi - o.lo);
          } else {
            return o.cdf(theta);
          }
        },
        at(i));
  }

  double pdf(std::size_t i, double theta) const {
    return std::visit(
        [theta](const auto& o) -> double {
          using T = std::decay_t<decltype(o)>;
          if constexpr (std::is_same_v<T, Uniform>) {
            if (o.hi <= o.lo) return std::numeric_limits<double>::infinity();
            return 1.0 / (o.hi - o.lo);
          } else {
            return o.pdf(theta);
          }
        },
        at(i));
  }

 private:
  using OwnerPrior = std::variant<Uniform, Custom>;

  const OwnerPrior& at(std::size_t i) const {
    if (i >= owners_.size()) throw std::invalid_argument("PriorSpec: owner index out of range");
    return owners_[i];
  }

  static void check_regular(const Custom& c) {
    constexpr int kGrid = 1024;
    double prev = -std::numeric_limits<double>::infinity();
    for (int g = 0; g < kGrid; ++g) {
      const double theta = c.lo + (c.hi - c.lo) * (g + 0.5) / kGrid;
      const double f = c.pdf(theta);
      if (!(f > 0.0)) {
        throw std::invalid_argument("PriorSpec: pdf must be positive on the support");
      }
      const double psi = theta + c.cdf(theta) / f;
      if (psi < prev - 1e-12) {
        throw std::invalid_argument("PriorSpec: prior is not regular (virtual cost decreases)");
      }
      prev = psi;
    }
  }

  std::vector<OwnerPrior> owners_;
};

// Myerson virtual cost psi_i(theta) = theta + F_i(theta)/f_i(theta).
// Uniform priors reduce to 2*theta - lo; a degenerate (point-mass) prior
// carries no information rent, psi = theta.
inline double virtual_cost(double theta, const PriorSpec& prior, std::size_t owner) {
  const double lo = prior.lo(owner);
  const double hi = prior.hi(owner);
  if (theta < lo || theta > hi) {
    throw std::invalid_argument("virtual_cost: theta outside the prior support");
  }
  if (prior.is_uniform(owner)) {
    if (hi <= lo) return theta;
    return 2.0 * theta - lo;
  }
  const double f = prior.pdf(owner, theta);
  if (!(f > 0.0)) throw std::invalid_argument("virtual_cost: pdf is zero at theta");
  return theta + prior.cdf(owner, theta) / f;
}

enum class MechanismKind { exogenous, endogenous, joint };

inline const char* to_string(MechanismKind k) {
  switch (k) {
    case MechanismKind::exogenous: return "exogenous";
    case MechanismKind::endogenous: return "endogenous";
    case MechanismKind::joint: return "joint";
  }
  return "?";
}

// One market to clear: owners (their w_effective is the W vector), priors,
// the mechanism flavour with its budget (B for exogenous, B_ref otherwise),
// and the concentration-bound parameters.
struct MarketInstance {
  std::vector<OwnerProfile> owners;
  PriorSpec prior;
  MechanismKind mechanism{MechanismKind::exogenous};
  double budget{0.0};
  double k_lipschitz{1.0};
  HoeffdingParams hoeffding{};

  void validate() const {
    if (owners.empty()) throw std::invalid_argument("MarketInstance: owners must be nonempty");
    if (budget < 0.0) throw std::invalid_argument("MarketInstance: budget must be >= 0");
    if (mechanism != MechanismKind::exogenous && !(k_lipschitz > 0.0)) {
      throw std::invalid_argument("MarketInstance: k_lipschitz must be positive");
    }
    if (prior.size() != owners.size()) {
      throw std::invalid_argument("MarketInstance: prior/owner count mismatch");
    }
    if (hoeffding.n_total != owners.size()) {
      throw std::invalid_argument("MarketInstance: hoeffding n_total must equal owner count");
    }
    hoeffding.validate();
  }

  std::vector<double> effective_w() const {
    std::vector<double> w(owners.size());
    for (std::size_t i = 0; i < owners.size(); ++i) w[i] = owners[i].w_effective;
    return w;
  }

  // Exogenous procurement is task-agnostic: its bound is unscaled.
  double effective_k() const {
    return mechanism == MechanismKind::exogenous ? 1.0 : k_lipschitz;
  }
};

namespace detail {

// Modelled-loss term of a selection with `k_selected` members and squared-W
// sum `sum_w2`:
//   finite:   K * sqrt(ln(2/(1-d)) / (2(N-1))) * sqrt((N-k) sum_w2) / k
//   infinite: K * sqrt(ln(2/(1-d)) / 2)        * sqrt(sum_w2) / k
inline double bound_term(double k_lip, const HoeffdingParams& hp, std::size_t n,
                         double sum_w2, int k_selected) {
  if (k_selected == 0) return 0.0;
  const double log_term = std::log(2.0 / (1.0 - hp.delta));
  const auto k = static_cast<double>(k_selected);
  if (hp.population == Population::infinite) {
    return k_lip * std::sqrt(log_term / 2.0) * std::sqrt(sum_w2) / k;
  }
  if (n == static_cast<std::size_t>(k_selected)) return 0.0;
  const double c_fin = k_lip * std::sqrt(log_term / (2.0 * (static_cast<double>(n) - 1.0)));
  return c_fin * std::sqrt((static_cast<double>(n) - k) * sum_w2) / k;
}

}  // namespace detail

// The point-wise objective for a full binary assignment q (length N+1,
// q[0] the outside option): q0*B + C*bound(q) + sum_i q_i*psi_i(theta_i).
// Rejects the all-zero assignment.
inline double pointwise_objective(std::span<const int> q, const MarketInstance& inst,
                                  std::span<const double> theta) {
  inst.validate();
  const std::size_t n = inst.owners.size();
  if (q.size() != n + 1) throw std::invalid_argument("pointwise_objective: q must have N+1 entries");
  if (theta.size() != n) throw std::invalid_argument("pointwise_objective: theta size mismatch");
  int total = 0;
  for (int qi : q) total += qi;
  if (total < 1) throw std::invalid_argument("pointwise_objective: all-zero assignment");

  double sum_psi = 0.0;
  double sum_w2 = 0.0;
  int k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (q[i + 1] != 0) {
      sum_psi += virtual_cost(theta[i], inst.prior, i);
      sum_w2 += inst.owners[i].w_effective * inst.owners[i].w_effective;
      ++k;
    }
  }
  const double bound = detail::bound_term(inst.effective_k(), inst.hoeffding, n, sum_w2, k);
  return (q[0] != 0 ? inst.budget : 0.0) + bound + sum_psi;
}

struct MechanismResult {
  std::vector<int> q;      // length N+1; q[0] = 1 iff no owner is selected
  std::vector<double> t;   // payments, zero for unselected owners
  double v_bound{0.0};     // modelled loss C * hoeffding term of the selection
  double objective{std::numeric_limits<double>::quiet_NaN()};
  bool feasible{false};
  SubsetMask selected_mask{0};
  std::size_t n_selected{0};
  double payments_total{0.0};
};

// Exact minimiser of the point-wise problem by exhaustive subset enumeration
// with incremental prefix sums (guarded at N <= 24).
//
//   exogenous:  min bound(q)           s.t. sum psi <= B, no outside option
//   endogenous: min K*bound(q)         s.t. K*bound + sum psi <= B_ref,
//               falling back to q0 = 1 when no nonempty subset is feasible
//   joint:      min q0*B_ref + K*bound(q) + sum psi; the outside option
//               candidate enforces the reference budget implicitly
//
// Payments follow the point-wise rule t_i = q_i * psi_i(theta_i), which pays
// virtual costs directly (not classical ex-post threshold payments) and so
// guarantees t_i >= theta_i for every selected owner.
inline MechanismResult solve(const MarketInstance& inst, std::span<const double> theta) {
  inst.validate();
  const std::size_t n = inst.owners.size();
  if (n > 24) {
    throw std::invalid_argument("solve: N > 24 is rejected (exhaustive enumeration guard)");
  }
  if (theta.size() != n) throw std::invalid_argument("solve: theta size mismatch");

  std::vector<double> psi(n);
  std::vector<double> w2(n);
  for (std::size_t i = 0; i < n; ++i) {
    psi[i] = virtual_cost(theta[i], inst.prior, i);
    w2[i] = inst.owners[i].w_effective * inst.owners[i].w_effective;
  }

  const std::uint32_t full = 1u << n;
  std::vector<double> sum_psi(full, 0.0);
  std::vector<double> sum_w2(full, 0.0);
  for (std::uint32_t mask = 1; mask < full; ++mask) {
    const int low = std::countr_zero(mask);
    const std::uint32_t parent = mask & (mask - 1);
    sum_psi[mask] = sum_psi[parent] + psi[static_cast<std::size_t>(low)];
    sum_w2[mask] = sum_w2[parent] + w2[static_cast<std::size_t>(low)];
  }

  const double k_eff = inst.effective_k();
  bool have = false;
  double best_obj = 0.0;
  double best_bound = 0.0;
  SubsetMask best_mask = 0;
  auto consider = [&](SubsetMask mask, double obj, double bound) {
    if (!have || subset_preferred(obj, mask, best_obj, best_mask)) {
      have = true;
      best_obj = obj;
      best_bound = bound;
      best_mask = mask;
    }
  };

  for (std::uint32_t mask = 1; mask < full; ++mask) {
    const int k = std::popcount(mask);
    const double bound = detail::bound_term(k_eff, inst.hoeffding, n, sum_w2[mask], k);
    switch (inst.mechanism) {
      case MechanismKind::exogenous:
        if (sum_psi[mask] <= inst.budget) consider(mask, bound, bound);
        break;
      case MechanismKind::endogenous:
        if (bound + sum_psi[mask] <= inst.budget) consider(mask, bound, bound);
        break;
      case MechanismKind::joint:
        consider(mask, bound + sum_psi[mask], bound);
        break;
    }
  }
  if (inst.mechanism != MechanismKind::exogenous) {
    consider(0, inst.budget, 0.0);  // outside option
  }

  MechanismResult r;
  r.q.assign(n + 1, 0);
  r.t.assign(n, 0.0);
  if (!have) {
    // Exogenous market with no budget-feasible nonempty subset.
    r.q[0] = 1;
    r.feasible = false;
    return r;
  }
  r.feasible = true;
  r.selected_mask = best_mask;
  r.v_bound = best_bound;
  r.objective = best_obj;
  if (best_mask == 0) {
    r.q[0] = 1;
    return r;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (subset_contains(best_mask, i)) {
      r.q[i + 1] = 1;
      r.t[i] = psi[i];
      r.payments_total += psi[i];
      ++r.n_selected;
    }
  }
  return r;
}

// Re-solves after a single reserve increase and reports whether the raised
// owner's allocation stayed monotone (never flips 0 -> 1). With a regular
// prior this always returns true; a false return indicates a tie-break bug.
inline bool check_monotonicity(const MarketInstance& inst, std::span<const double> theta,
                               std::size_t owner, double theta_increased) {
  if (owner >= inst.owners.size()) {
    throw std::invalid_argument("check_monotonicity: owner index out of range");
  }
  if (!(theta_increased > theta[owner])) {
    throw std::invalid_argument("check_monotonicity: theta_increased must exceed theta[owner]");
  }
  const MechanismResult before = solve(inst, theta);
  std::vector<double> bumped(theta.begin(), theta.end());
  bumped[owner] = theta_increased;
  const MechanismResult after = solve(inst, bumped);
  return after.q[owner + 1] <= before.q[owner + 1];
}

// Lower bound on the reference budget: the reference-vs-target loss gap less
// the bound-modelled loss of the procured data.
inline double reference_budget_lower_bound(double loss_ref_minus_target, double k,
                                           double hoeffding_term) {
  return loss_ref_minus_target - k * hoeffding_term;
}

// The natural upper-bound estimate K * W(X_R, X_T).
inline double reference_budget_upper_estimate(double k, double wd_ref_target) {
  return k * wd_ref_target;
}

}  // namespace wdm
