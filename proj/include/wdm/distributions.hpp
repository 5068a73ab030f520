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
#include <utility>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "wdm/rng.hpp"

namespace wdm {

inline double standard_normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

inline double standard_normal_quantile(double u) {
  if (!(u > 0.0 && u < 1.0)) {
    throw std::invalid_argument("standard_normal_quantile: u must lie in (0,1)");
  }
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * u);
}

enum class Family { gaussian, uniform, exponential };

inline const char* to_string(Family f) {
  switch (f) {
    case Family::gaussian: return "gaussian";
    case Family::uniform: return "uniform";
    case Family::exponential: return "exponential";
  }
  return "?";
}

// One-dimensional location/scale family. `uniform` covers
// [location, location + scale]; `exponential` is location-shifted with
// mean location + scale, so all three families share one (location, scale)
// parameterisation.
struct DistributionSpec {
  Family family{Family::gaussian};
  double location{0.0};
  double scale{1.0};

  DistributionSpec(Family f, double loc, double sc)
      : family(f), location(loc), scale(sc) {
    if (!(scale > 0.0)) {
      throw std::invalid_argument("DistributionSpec: scale must be positive");
    }
  }

  // Exact analytic quantile; u must lie in (0,1).
  double quantile(double u) const {
    if (!(u > 0.0 && u < 1.0)) {
      throw std::invalid_argument("DistributionSpec::quantile: u must lie in (0,1)");
    }
    switch (family) {
      case Family::gaussian:
        return location + scale * standard_normal_quantile(u);
      case Family::uniform:
        return location + scale * u;
      case Family::exponential:
        return location - scale * std::log1p(-u);
    }
    throw std::logic_error("DistributionSpec: bad family");
  }

  double mean() const {
    switch (family) {
      case Family::gaussian: return location;
      case Family::uniform: return location + 0.5 * scale;
      case Family::exponential: return location + scale;
    }
    throw std::logic_error("DistributionSpec: bad family");
  }

  double stddev() const {
    switch (family) {
      case Family::gaussian: return scale;
      case Family::uniform: return scale / std::sqrt(12.0);
      case Family::exponential: return scale;
    }
    throw std::logic_error("DistributionSpec: bad family");
  }
};

// A real-valued sample with uniform weights. `values()` is the ascending
// order; `draws()` preserves the original draw order, which matters for
// Euclidean aggregation (averaging must pair independent draws, not order
// statistics, or the result would be artificially comonotone).
class EmpiricalSample {
 public:
  explicit EmpiricalSample(std::vector<double> draws) : draws_(std::move(draws)) {
    if (draws_.empty()) {
      throw std::invalid_argument("EmpiricalSample: needs at least one value");
    }
    for (double v : draws_) {
      if (!std::isfinite(v)) {
        throw std::invalid_argument("EmpiricalSample: entries must be finite");
      }
    }
    values_ = draws_;
    std::sort(values_.begin(), values_.end());
  }

  const std::vector<double>& values() const { return values_; }
  const std::vector<double>& draws() const { return draws_; }
  std::size_t size() const { return values_.size(); }

  double mean() const {
    double s = 0.0;
    for (double v : values_) s += v;
    return s / static_cast<double>(values_.size());
  }

 private:
  std::vector<double> draws_;
  std::vector<double> values_;
};

enum class NoiseMechanism { laplace, gaussian };

inline const char* to_string(NoiseMechanism m) {
  return m == NoiseMechanism::laplace ? "laplace" : "gaussian";
}

// Local differential-privacy noise parameters. delta_dp is only meaningful
// for the gaussian mechanism.
struct DpParams {
  NoiseMechanism mechanism{NoiseMechanism::laplace};
  double epsilon{1.0};
  double delta_dp{0.0};
  double sensitivity{1.0};

  static DpParams laplace(double epsilon, double sensitivity = 1.0) {
    DpParams p{NoiseMechanism::laplace, epsilon, 0.0, sensitivity};
    p.validate();
    return p;
  }

  static DpParams gaussian(double epsilon, double delta_dp, double sensitivity = 1.0) {
    DpParams p{NoiseMechanism::gaussian, epsilon, delta_dp, sensitivity};
    p.validate();
    return p;
  }

  void validate() const {
    if (!(epsilon > 0.0)) throw std::invalid_argument("DpParams: epsilon must be positive");
    if (!(sensitivity > 0.0)) throw std::invalid_argument("DpParams: sensitivity must be positive");
    if (mechanism == NoiseMechanism::gaussian && !(delta_dp > 0.0 && delta_dp < 1.0)) {
      throw std::invalid_argument("DpParams: gaussian mechanism needs delta_dp in (0,1)");
    }
  }
};

// Standard deviation of the calibrated gaussian-mechanism noise:
// (sensitivity/epsilon) * sqrt(2 ln(1.25/delta_dp)).
inline double gaussian_dp_stddev(const DpParams& dp) {
  dp.validate();
  if (dp.mechanism != NoiseMechanism::gaussian) {
    throw std::invalid_argument("gaussian_dp_stddev: laplace params given");
  }
  return dp.sensitivity / dp.epsilon * std::sqrt(2.0 * std::log(1.25 / dp.delta_dp));
}

// n i.i.d. inverse-CDF draws; deterministic for a fixed stream.
inline EmpiricalSample sample(const DistributionSpec& spec, std::size_t n, RngStream& stream) {
  if (n == 0) throw std::invalid_argument("sample: n must be at least 1");
  std::vector<double> draws(n);
  for (double& d : draws) d = spec.quantile(stream.uniform01());
  return EmpiricalSample(std::move(draws));
}

// Element-wise mean in original draw order, re-sorted on construction.
// Realises the Euclidean aggregate of the inputs as an average of
// independent draws (convolution, not mixture).
inline EmpiricalSample aggregate_euclidean(std::span<const EmpiricalSample> samples) {
  if (samples.empty()) {
    throw std::invalid_argument("aggregate_euclidean: empty sample list");
  }
  const std::size_t n = samples.front().size();
  for (const auto& s : samples) {
    if (s.size() != n) {
      throw std::invalid_argument("aggregate_euclidean: samples must have equal size");
    }
  }
  std::vector<double> out(n, 0.0);
  for (const auto& s : samples) {
    const auto& d = s.draws();
    for (std::size_t k = 0; k < n; ++k) out[k] += d[k];
  }
  const double inv = 1.0 / static_cast<double>(samples.size());
  for (double& v : out) v *= inv;
  return EmpiricalSample(std::move(out));
}

inline EmpiricalSample aggregate_euclidean(const std::vector<EmpiricalSample>& samples) {
  return aggregate_euclidean(std::span<const EmpiricalSample>(samples));
}

// Additive i.i.d. noise in draw order, re-sorted on construction. Laplace
// scale is sensitivity/epsilon; gaussian uses the calibrated stddev above.
inline EmpiricalSample add_dp_noise(const EmpiricalSample& s, const DpParams& dp,
                                    RngStream& stream) {
  dp.validate();
  std::vector<double> out = s.draws();
  if (dp.mechanism == NoiseMechanism::laplace) {
    const double b = dp.sensitivity / dp.epsilon;
    for (double& v : out) {
      const double u = stream.uniform01();
      v += (u < 0.5) ? b * std::log(2.0 * u) : -b * std::log(2.0 * (1.0 - u));
    }
  } else {
    const double sd = gaussian_dp_stddev(dp);
    for (double& v : out) v += sd * standard_normal_quantile(stream.uniform01());
  }
  return EmpiricalSample(std::move(out));
}

}  // namespace wdm
