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
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "wdm/distributions.hpp"

namespace wdm {

enum class DistanceKind { wd, kld, jsd, ks, tvd };

inline const char* to_string(DistanceKind k) {
  switch (k) {
    case DistanceKind::wd: return "wd";
    case DistanceKind::kld: return "kld";
    case DistanceKind::jsd: return "jsd";
    case DistanceKind::ks: return "ks";
    case DistanceKind::tvd: return "tvd";
  }
  return "?";
}

// Shared equal-width binning used by the density-based divergences. Both
// samples' supports must lie inside [lo, hi].
struct HistogramConfig {
  std::size_t bin_count{64};
  double lo{0.0};
  double hi{1.0};

  HistogramConfig(std::size_t bins, double lo_, double hi_)
      : bin_count(bins), lo(lo_), hi(hi_) {
    if (bin_count < 2) throw std::invalid_argument("HistogramConfig: need at least 2 bins");
    if (!(lo < hi)) throw std::invalid_argument("HistogramConfig: lo must be below hi");
  }

  // Bins spanning the pooled min/max of two sorted samples.
  static HistogramConfig covering(std::span<const double> a_sorted,
                                  std::span<const double> b_sorted,
                                  std::size_t bins = 64) {
    double lo = std::min(a_sorted.front(), b_sorted.front());
    double hi = std::max(a_sorted.back(), b_sorted.back());
    if (!(lo < hi)) hi = lo + 1.0;  // point-mass pair: one shared box
    return HistogramConfig(bins, lo, hi);
  }

  static HistogramConfig covering(const EmpiricalSample& a, const EmpiricalSample& b,
                                  std::size_t bins = 64) {
    return covering(std::span<const double>(a.values()), std::span<const double>(b.values()),
                    bins);
  }
};

// --- sorted-span kernels -----------------------------------------------
//
// The *_sorted functions are the computational core; they require ascending
// inputs and are what the coalition-table builder calls in its hot loop.
// The EmpiricalSample overloads below are the public entry points.

// Equal-size 1-Wasserstein: (1/n) * sum_k |a_(k) - b_(k)|.
inline double wasserstein1_sorted_equal(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  long double acc = 0.0L;
  for (std::size_t k = 0; k < n; ++k) acc += std::abs(a[k] - b[k]);
  return static_cast<double>(acc / static_cast<long double>(n));
}

// General 1-Wasserstein via exact integration of |Fa^{-1}(u) - Fb^{-1}(u)|
// over the merged quantile grid. Works for any sizes; exact up to rounding.
inline double wasserstein1_quantile_sorted(std::span<const double> a,
                                           std::span<const double> b) {
  const std::size_t n = a.size(), m = b.size();
  std::size_t i = 0, j = 0;
  long double acc = 0.0L;
  long double u_prev = 0.0L;
  while (i < n && j < m) {
    // Next breakpoint is min((i+1)/n, (j+1)/m); compare as integers.
    const unsigned long long lhs = static_cast<unsigned long long>(i + 1) * m;
    const unsigned long long rhs = static_cast<unsigned long long>(j + 1) * n;
    const bool adv_a = lhs <= rhs;
    const bool adv_b = rhs <= lhs;
    const long double u_next =
        adv_a ? static_cast<long double>(i + 1) / static_cast<long double>(n)
              : static_cast<long double>(j + 1) / static_cast<long double>(m);
    acc += (u_next - u_prev) * std::abs(static_cast<long double>(a[i]) - b[j]);
    u_prev = u_next;
    if (adv_a) ++i;
    if (adv_b) ++j;
  }
  return static_cast<double>(acc);
}

inline double wasserstein1_sorted(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() ? wasserstein1_sorted_equal(a, b)
                              : wasserstein1_quantile_sorted(a, b);
}

// sup_x |F_a(x) - F_b(x)| over right-continuous empirical CDFs.
inline double kolmogorov_smirnov_sorted(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size(), m = b.size();
  std::size_t i = 0, j = 0;
  double ks = 0.0;
  while (i < n && j < m) {
    const double v = std::min(a[i], b[j]);
    while (i < n && a[i] <= v) ++i;
    while (j < m && b[j] <= v) ++j;
    const double d = std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m);
    ks = std::max(ks, d);
  }
  return ks;
}

// Bin probabilities (masses summing to one) on the shared grid.
inline std::vector<double> histogram_probabilities_sorted(std::span<const double> sorted,
                                                          const HistogramConfig& cfg) {
  if (sorted.front() < cfg.lo || sorted.back() > cfg.hi) {
    throw std::invalid_argument("histogram_probabilities: sample outside histogram range");
  }
  std::vector<double> p(cfg.bin_count, 0.0);
  const double width = (cfg.hi - cfg.lo) / static_cast<double>(cfg.bin_count);
  for (double x : sorted) {
    auto b = static_cast<std::size_t>((x - cfg.lo) / width);
    if (b >= cfg.bin_count) b = cfg.bin_count - 1;  // right edge
    p[b] += 1.0;
  }
  const double inv = 1.0 / static_cast<double>(sorted.size());
  for (double& v : p) v *= inv;
  return p;
}

inline double tvd_hist(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

// KL(p || q), natural log. Undefined (nullopt) when some bin has q = 0 < p;
// no epsilon flooring, undefined cases are meant to surface.
inline std::optional<double> kld_hist(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) {
      if (q[i] <= 0.0) return std::nullopt;
      s += p[i] * std::log(p[i] / q[i]);
    }
  }
  return s;
}

// Metric (square-root) form of the Jensen-Shannon divergence with midpoint
// mixture; bounded by sqrt(ln 2).
inline double jsd_hist(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    // one commutative sum per bin keeps the metric exactly symmetric
    const double cp = p[i] > 0.0 ? 0.5 * p[i] * std::log(p[i] / m) : 0.0;
    const double cq = q[i] > 0.0 ? 0.5 * q[i] * std::log(q[i] / m) : 0.0;
    s += cp + cq;
  }
  return std::sqrt(std::max(s, 0.0));
}

// --- public sample-level API --------------------------------------------

inline double wasserstein1(const EmpiricalSample& a, const EmpiricalSample& b) {
  return wasserstein1_sorted(a.values(), b.values());
}

inline double wasserstein1_quantile(const EmpiricalSample& a, const EmpiricalSample& b) {
  return wasserstein1_quantile_sorted(a.values(), b.values());
}

// Closed-form W1 between two gaussians: the mean of |N(mu1-mu2, (s1-s2)^2)|.
inline double wasserstein1_gaussian(double mu1, double sigma1, double mu2, double sigma2) {
  if (!(sigma1 > 0.0) || !(sigma2 > 0.0)) {
    throw std::invalid_argument("wasserstein1_gaussian: sigmas must be positive");
  }
  const double d = mu1 - mu2;
  const double s = std::abs(sigma1 - sigma2);
  if (s < 1e-12) return std::abs(d);
  return s * std::sqrt(2.0 / M_PI) * std::exp(-d * d / (2.0 * s * s)) +
         d * (1.0 - 2.0 * standard_normal_cdf(-d / s));
}

inline double kolmogorov_smirnov(const EmpiricalSample& a, const EmpiricalSample& b) {
  return kolmogorov_smirnov_sorted(a.values(), b.values());
}

inline std::vector<double> histogram_probabilities(const EmpiricalSample& s,
                                                   const HistogramConfig& cfg) {
  return histogram_probabilities_sorted(s.values(), cfg);
}

inline double tvd(const EmpiricalSample& a, const EmpiricalSample& b,
                  const HistogramConfig& cfg) {
  return tvd_hist(histogram_probabilities(a, cfg), histogram_probabilities(b, cfg));
}

inline std::optional<double> kld(const EmpiricalSample& a, const EmpiricalSample& b,
                                 const HistogramConfig& cfg) {
  return kld_hist(histogram_probabilities(a, cfg), histogram_probabilities(b, cfg));
}

inline double jsd(const EmpiricalSample& a, const EmpiricalSample& b,
                  const HistogramConfig& cfg) {
  return jsd_hist(histogram_probabilities(a, cfg), histogram_probabilities(b, cfg));
}

// Uniform dispatch; kld may be undefined, the others always carry a value.
inline std::optional<double> distance(const EmpiricalSample& a, const EmpiricalSample& b,
                                      DistanceKind kind, std::size_t hist_bins = 64) {
  switch (kind) {
    case DistanceKind::wd: return wasserstein1(a, b);
    case DistanceKind::ks: return kolmogorov_smirnov(a, b);
    case DistanceKind::tvd: return tvd(a, b, HistogramConfig::covering(a, b, hist_bins));
    case DistanceKind::kld: return kld(a, b, HistogramConfig::covering(a, b, hist_bins));
    case DistanceKind::jsd: return jsd(a, b, HistogramConfig::covering(a, b, hist_bins));
  }
  throw std::logic_error("distance: bad kind");
}

}  // namespace wdm
