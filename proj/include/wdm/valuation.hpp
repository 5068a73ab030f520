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
#include <optional>
#include <span>
#include <stdexcept>

#include "wdm/distances.hpp"
#include "wdm/distributions.hpp"

namespace wdm {

// One data owner as seen by valuation and procurement: synthetic source
// distribution, noiseless individual distance to the target, privacy
// parameters, reserve price, and the effective distance used as W_i.
struct OwnerProfile {
  std::size_t id{0};
  DistributionSpec spec{Family::gaussian, 0.0, 1.0};
  double w_raw{0.0};
  DpParams dp{};
  double reserve{0.0};
  double w_effective{0.0};
};

enum class ValuationVariant { dp_only, non_iid_only, exact_dp_gaussian, upper_bound_dp };

inline const char* to_string(ValuationVariant v) {
  switch (v) {
    case ValuationVariant::dp_only: return "dp_only";
    case ValuationVariant::non_iid_only: return "non_iid_only";
    case ValuationVariant::exact_dp_gaussian: return "exact_dp_gaussian";
    case ValuationVariant::upper_bound_dp: return "upper_bound_dp";
  }
  return "?";
}

enum class Population { finite, infinite };

inline const char* to_string(Population p) {
  return p == Population::finite ? "finite" : "infinite";
}

struct HoeffdingParams {
  double delta{0.95};                      // confidence level, in [0, 1)
  Population population{Population::finite};
  std::size_t n_total{1};                  // N, the full owner count

  void validate() const {
    if (!(delta >= 0.0 && delta < 1.0)) {
      throw std::invalid_argument("HoeffdingParams: delta must lie in [0,1)");
    }
    if (n_total < 1) throw std::invalid_argument("HoeffdingParams: n_total must be >= 1");
  }
};

// W1 shift induced by local DP noise: W(X_DP, delta_0).
// laplace -> sensitivity/epsilon;
// gaussian -> (2*sensitivity/epsilon) * sqrt(ln(1.25/delta_dp)/pi).
inline double dp_wd_term(const DpParams& dp) {
  dp.validate();
  if (dp.mechanism == NoiseMechanism::laplace) {
    return dp.sensitivity / dp.epsilon;
  }
  return 2.0 * dp.sensitivity / dp.epsilon * std::sqrt(std::log(1.25 / dp.delta_dp) / M_PI);
}

struct GaussianTarget {
  double mu{0.0};
  double sigma{1.0};
};

// The effective individual distance W_i under the chosen valuation variant.
// exact_dp_gaussian compares N(mu_i, sigma_i^2 + sigma_dp^2) against the
// moment-matched gaussian target in closed form and is only admissible for
// gaussian owners with the gaussian noise mechanism.
inline double effective_wd(const OwnerProfile& owner, ValuationVariant variant,
                           std::optional<GaussianTarget> target = std::nullopt) {
  switch (variant) {
    case ValuationVariant::dp_only:
      owner.dp.validate();
      return 1.0 / owner.dp.epsilon;
    case ValuationVariant::non_iid_only:
      return owner.w_raw;
    case ValuationVariant::upper_bound_dp:
      return owner.w_raw + dp_wd_term(owner.dp);
    case ValuationVariant::exact_dp_gaussian: {
      if (owner.spec.family != Family::gaussian) {
        throw std::invalid_argument("effective_wd: exact_dp_gaussian needs a gaussian owner");
      }
      if (!target.has_value()) {
        throw std::invalid_argument("effective_wd: exact_dp_gaussian needs target parameters");
      }
      const double sd_dp = gaussian_dp_stddev(owner.dp);
      const double sigma = std::sqrt(owner.spec.scale * owner.spec.scale + sd_dp * sd_dp);
      return wasserstein1_gaussian(owner.spec.location, sigma, target->mu, target->sigma);
    }
  }
  throw std::logic_error("effective_wd: bad variant");
}

// Concentration bound on the aggregate distance of a coalition, from the
// members' individual distances alone.
//   finite:   sqrt( ((N-|P|)/N) * sum_{i in P} W_i^2 * ln(2/(1-delta)) / (2|P|^2) )
//   infinite: the same without the (N-|P|)/N correction factor.
inline double hoeffding_bound(std::span<const double> w, std::uint32_t selected_mask,
                              const HoeffdingParams& params) {
  params.validate();
  const std::size_t n = w.size();
  if (n != params.n_total) {
    throw std::invalid_argument("hoeffding_bound: w size must equal n_total");
  }
  if (n > 32 || (n < 32 && selected_mask >= (1u << n))) {
    throw std::invalid_argument("hoeffding_bound: selection outside {1..N}");
  }
  if (selected_mask == 0) {
    throw std::invalid_argument("hoeffding_bound: empty selection");
  }
  double sum_w2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (selected_mask & (1u << i)) sum_w2 += w[i] * w[i];
  }
  const auto k = static_cast<double>(std::popcount(selected_mask));
  const double log_term = std::log(2.0 / (1.0 - params.delta));
  double v = sum_w2 * log_term / (2.0 * k * k);
  if (params.population == Population::finite) {
    v *= (static_cast<double>(n) - k) / static_cast<double>(n);
  }
  return std::sqrt(v);
}

inline double hoeffding_bound(std::span<const double> w,
                              std::span<const std::size_t> selected,
                              const HoeffdingParams& params) {
  std::uint32_t mask = 0;
  for (std::size_t i : selected) {
    if (i >= w.size()) throw std::invalid_argument("hoeffding_bound: index out of range");
    mask |= 1u << i;
  }
  return hoeffding_bound(w, mask, params);
}

// Theorem-style translation of a distance guarantee into a loss guarantee.
inline double lipschitz_loss_bound(double k, double wd) {
  if (k < 0.0 || wd < 0.0) {
    throw std::invalid_argument("lipschitz_loss_bound: inputs must be non-negative");
  }
  return k * wd;
}

}  // namespace wdm
