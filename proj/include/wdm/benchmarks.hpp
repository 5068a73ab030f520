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
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "wdm/distances.hpp"
#include "wdm/subsets.hpp"
#include "wdm/tasks.hpp"

namespace wdm {

enum class ApproximationLevel { shap, cen_ir, cen_ic, cen_w, cen_dp, fin, inf };

inline const char* to_string(ApproximationLevel l) {
  switch (l) {
    case ApproximationLevel::shap: return "SHAP";
    case ApproximationLevel::cen_ir: return "CEN_IR";
    case ApproximationLevel::cen_ic: return "CEN_IC";
    case ApproximationLevel::cen_w: return "CEN_W";
    case ApproximationLevel::cen_dp: return "CEN_DP";
    case ApproximationLevel::fin: return "FIN";
    case ApproximationLevel::inf: return "INF";
  }
  return "?";
}

struct CoalitionStats {
  double wd{std::numeric_limits<double>::quiet_NaN()};
  double ks{std::numeric_limits<double>::quiet_NaN()};
  double tvd{std::numeric_limits<double>::quiet_NaN()};
  double jsd{std::numeric_limits<double>::quiet_NaN()};
  std::optional<double> kld{};
  std::vector<double> loss_p;  // per table task, evaluated on the target
  std::vector<double> gap;     // loss_p - loss_t
  double sum_reserve{std::numeric_limits<double>::quiet_NaN()};
  double sum_virtual_cost{std::numeric_limits<double>::quiet_NaN()};
};

struct CoalitionTableConfig {
  bool all_distances{false};   // ks/tvd/kld/jsd in addition to wd
  std::size_t histogram_bins{64};
  std::vector<TaskSpec> tasks;
  unsigned workers{1};
};

// Every nonempty coalition's aggregate, scored against the target: actual
// distances, actual task losses, and (once prices are attached) reserve and
// virtual-cost totals. Construction is the expensive part and parallelises
// over subsets; everything afterwards is a lookup.
class CoalitionTable {
 public:
  static CoalitionTable build(const std::vector<EmpiricalSample>& owners,
                              const EmpiricalSample& target, const CoalitionTableConfig& cfg) {
    if (owners.empty()) throw std::invalid_argument("CoalitionTable: no owners");
    if (owners.size() > 16) throw std::invalid_argument("CoalitionTable: N must be <= 16");
    const std::size_t n_draw = owners.front().size();
    for (const auto& s : owners) {
      if (s.size() != n_draw) {
        throw std::invalid_argument("CoalitionTable: owner samples must have equal size");
      }
    }

    CoalitionTable table;
    table.n_ = owners.size();
    table.tasks_ = cfg.tasks;
    const std::uint32_t full = 1u << owners.size();
    table.stats_.resize(full);

    const TargetLossEvaluator evaluator(target);
    std::vector<double> loss_t(cfg.tasks.size());
    for (std::size_t t = 0; t < cfg.tasks.size(); ++t) {
      const double param_t = estimate_parameter(target, cfg.tasks[t]);
      loss_t[t] = evaluator.loss(cfg.tasks[t], param_t);
    }
    const std::span<const double> target_sorted(target.values());

    auto work = [&](std::uint32_t mask, std::vector<double>& buf) {
      const auto members = subset_members(mask);
      buf.assign(n_draw, 0.0);
      for (std::size_t m : members) {
        const auto& d = owners[m].draws();
        for (std::size_t k = 0; k < n_draw; ++k) buf[k] += d[k];
      }
      const double inv = 1.0 / static_cast<double>(members.size());
      for (double& v : buf) v *= inv;
      std::sort(buf.begin(), buf.end());

      CoalitionStats& st = table.stats_[mask];
      st.wd = wasserstein1_sorted(buf, target_sorted);
      if (cfg.all_distances) {
        st.ks = kolmogorov_smirnov_sorted(buf, target_sorted);
        const auto hist_cfg = HistogramConfig::covering(std::span<const double>(buf),
                                                        target_sorted, cfg.histogram_bins);
        const auto p = histogram_probabilities_sorted(buf, hist_cfg);
        const auto q = histogram_probabilities_sorted(target_sorted, hist_cfg);
        st.tvd = tvd_hist(p, q);
        st.jsd = jsd_hist(p, q);
        st.kld = kld_hist(p, q);
      }
      st.loss_p.resize(cfg.tasks.size());
      st.gap.resize(cfg.tasks.size());
      for (std::size_t t = 0; t < cfg.tasks.size(); ++t) {
        const double param = estimate_parameter_sorted(buf, cfg.tasks[t]);
        st.loss_p[t] = evaluator.loss(cfg.tasks[t], param);
        st.gap[t] = st.loss_p[t] - loss_t[t];
      }
    };

    const unsigned workers = std::max(1u, cfg.workers);
    if (workers == 1) {
      std::vector<double> buf;
      for (std::uint32_t mask = 1; mask < full; ++mask) work(mask, buf);
    } else {
      std::atomic<std::uint32_t> next{1};
      std::vector<std::thread> pool;
      pool.reserve(workers);
      for (unsigned wk = 0; wk < workers; ++wk) {
        pool.emplace_back([&]() {
          std::vector<double> buf;
          for (;;) {
            const std::uint32_t mask = next.fetch_add(1);
            if (mask >= full) return;
            work(mask, buf);
          }
        });
      }
      for (auto& th : pool) th.join();
    }
    return table;
  }

  std::size_t n_owners() const { return n_; }
  std::uint32_t n_subsets() const { return (1u << n_) - 1; }
  const std::vector<TaskSpec>& tasks() const { return tasks_; }

  const CoalitionStats& at(SubsetMask mask) const {
    if (mask == 0 || mask >= stats_.size()) {
      throw std::invalid_argument("CoalitionTable: mask out of range");
    }
    return stats_[mask];
  }

  void set_prices(std::span<const double> theta, std::span<const double> psi) {
    if (theta.size() != n_ || psi.size() != n_) {
      throw std::invalid_argument("CoalitionTable::set_prices: size mismatch");
    }
    for (std::uint32_t mask = 1; mask < stats_.size(); ++mask) {
      double st = 0.0, sp = 0.0;
      for (std::size_t i = 0; i < n_; ++i) {
        if (subset_contains(mask, i)) {
          st += theta[i];
          sp += psi[i];
        }
      }
      stats_[mask].sum_reserve = st;
      stats_[mask].sum_virtual_cost = sp;
    }
  }

  std::optional<double> distance_at(SubsetMask mask, DistanceKind kind) const {
    const auto& st = at(mask);
    switch (kind) {
      case DistanceKind::wd: return st.wd;
      case DistanceKind::ks: return st.ks;
      case DistanceKind::tvd: return st.tvd;
      case DistanceKind::jsd: return st.jsd;
      case DistanceKind::kld: return st.kld;
    }
    throw std::logic_error("CoalitionTable: bad kind");
  }

 private:
  std::size_t n_{0};
  std::vector<CoalitionStats> stats_;
  std::vector<TaskSpec> tasks_;
};

// --- centralised benchmarks ----------------------------------------------

struct CentralResult {
  SubsetMask mask{0};
  double objective{std::numeric_limits<double>::quiet_NaN()};
  bool feasible{false};
};

// Full-information selection: the budget-feasible coalition minimising the
// metric, under the shared deterministic tie-break. Coalitions whose metric
// is NaN (undefined divergences) are never selected.
inline CentralResult solve_central(const CoalitionTable& table,
                                   const std::function<double(SubsetMask)>& metric,
                                   const std::function<bool(SubsetMask)>& budget_ok) {
  CentralResult best;
  for (SubsetMask mask = 1; mask <= table.n_subsets(); ++mask) {
    if (!budget_ok(mask)) continue;
    const double m = metric(mask);
    if (std::isnan(m)) continue;
    if (!best.feasible || subset_preferred(m, mask, best.objective, best.mask)) {
      best.feasible = true;
      best.mask = mask;
      best.objective = m;
    }
  }
  return best;
}

struct RandomResult {
  double mean_metric{std::numeric_limits<double>::quiet_NaN()};
  std::size_t n_feasible{0};
  std::size_t n_counted{0};  // feasible subsets with a defined metric
};

// Expected value of the metric when a budget-feasible coalition is chosen
// uniformly at random.
inline RandomResult solve_random(const CoalitionTable& table,
                                 const std::function<double(SubsetMask)>& metric,
                                 const std::function<bool(SubsetMask)>& budget_ok) {
  RandomResult r;
  double sum = 0.0;
  for (SubsetMask mask = 1; mask <= table.n_subsets(); ++mask) {
    if (!budget_ok(mask)) continue;
    ++r.n_feasible;
    const double m = metric(mask);
    if (std::isnan(m)) continue;
    sum += m;
    ++r.n_counted;
  }
  if (r.n_counted > 0) r.mean_metric = sum / static_cast<double>(r.n_counted);
  return r;
}

// --- posted-price benchmark (take-it-or-leave-it offers) ------------------

struct SmqResult {
  std::vector<double> offers;    // p_i
  std::vector<double> payments;  // p_i when accepted, else 0
  SubsetMask accepted{0};
  double expected_spend{0.0};    // sum p_i^2 / theta_bar_i at the solution
};

// Water-filling offers maximising expected additive value subject to an
// expected-spend budget, for uniform(0, theta_bar) priors:
// p_i = min(theta_bar_i, V_i / (2 lambda)), lambda chosen by bisection so
// the budget binds (zero when it is slack). Owner i sells iff theta_i <= p_i.
inline SmqResult solve_smq(std::span<const double> values, std::span<const double> theta_bar,
                           double budget, std::span<const double> theta) {
  const std::size_t n = values.size();
  if (theta_bar.size() != n || theta.size() != n) {
    throw std::invalid_argument("solve_smq: size mismatch");
  }
  for (double v : values) {
    if (std::isnan(v) || v < 0.0) {
      throw std::invalid_argument("solve_smq: values must be non-negative");
    }
  }
  for (double tb : theta_bar) {
    if (!(tb >= 0.0)) throw std::invalid_argument("solve_smq: theta_bar must be >= 0");
  }

  SmqResult r;
  r.offers.assign(n, 0.0);
  r.payments.assign(n, 0.0);
  if (budget > 0.0) {
    auto offers_at = [&](double lambda, std::span<double> p) {
      for (std::size_t i = 0; i < n; ++i) {
        const double unclipped = values[i] >= std::numeric_limits<double>::infinity()
                                     ? theta_bar[i]
                                     : values[i] / (2.0 * lambda);
        p[i] = lambda > 0.0 ? std::min(theta_bar[i], unclipped) : theta_bar[i];
      }
    };
    auto spend_of = [&](std::span<const double> p) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (theta_bar[i] > 0.0) s += p[i] * p[i] / theta_bar[i];
      }
      return s;
    };
    offers_at(0.0, r.offers);
    if (spend_of(r.offers) > budget) {
      double lo = 0.0, hi = 1.0;
      offers_at(hi, r.offers);
      while (spend_of(r.offers) > budget) {
        hi *= 2.0;
        if (hi > 1e300) break;
        offers_at(hi, r.offers);
      }
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        offers_at(mid, r.offers);
        (spend_of(r.offers) > budget ? lo : hi) = mid;
      }
      offers_at(hi, r.offers);  // feasible side of the bisection
    }
    r.expected_spend = spend_of(r.offers);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (theta[i] <= r.offers[i]) {
      r.accepted |= SubsetMask{1} << i;
      r.payments[i] = r.offers[i];
    }
  }
  return r;
}

// --- greedy knapsack benchmark --------------------------------------------

struct PtasResult {
  SubsetMask selected{0};
  std::vector<double> payments;
  std::size_t k{0};
};

// Cost-per-unit-value greedy: sort ascending by g_i = theta_i * d_i, take the
// largest prefix k with g_k <= B / sum_{i<=k} 1/d_i, and pay
// p_i = min(B / sum_{i<=k} 1/d_i, g_{k+1}) / d_i with g_{N+1} = +infinity.
inline PtasResult solve_ptas(std::span<const double> theta, std::span<const double> d,
                             double budget) {
  const std::size_t n = theta.size();
  if (d.size() != n) throw std::invalid_argument("solve_ptas: size mismatch");
  for (double di : d) {
    if (!(di > 0.0)) throw std::invalid_argument("solve_ptas: distances must be positive");
  }
  if (budget < 0.0) throw std::invalid_argument("solve_ptas: budget must be >= 0");

  PtasResult r;
  r.payments.assign(n, 0.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ga = theta[a] * d[a];
    const double gb = theta[b] * d[b];
    if (ga != gb) return ga < gb;
    return a < b;
  });

  std::size_t best_k = 0;
  double best_rate = 0.0;
  double inv_sum = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    const std::size_t i = order[k - 1];
    inv_sum += 1.0 / d[i];
    const double rate = budget / inv_sum;
    if (theta[i] * d[i] <= rate) {
      best_k = k;
      best_rate = rate;
    }
  }
  if (best_k == 0) return r;
  r.k = best_k;
  const double g_next = best_k < n ? theta[order[best_k]] * d[order[best_k]]
                                   : std::numeric_limits<double>::infinity();
  const double rate = std::min(best_rate, g_next);
  for (std::size_t k = 0; k < best_k; ++k) {
    const std::size_t i = order[k];
    r.selected |= SubsetMask{1} << i;
    r.payments[i] = rate / d[i];
  }
  return r;
}

// --- cooperative-game allocations -----------------------------------------

// Exact Shapley values by coalition enumeration (n <= 12). The characteristic
// function is evaluated on every subset mask including the empty set.
inline std::vector<double> shapley(const std::function<double(SubsetMask)>& v, std::size_t n) {
  if (n == 0 || n > 12) throw std::invalid_argument("shapley: n must be in 1..12");
  const std::uint32_t full = 1u << n;
  std::vector<double> value(full);
  for (std::uint32_t mask = 0; mask < full; ++mask) value[mask] = v(mask);

  std::vector<double> fact(n + 1, 1.0);
  for (std::size_t k = 1; k <= n; ++k) fact[k] = fact[k - 1] * static_cast<double>(k);
  std::vector<double> weight(n);  // |S|! (n-|S|-1)! / n!
  for (std::size_t k = 0; k < n; ++k) weight[k] = fact[k] * fact[n - 1 - k] / fact[n];

  std::vector<double> phi(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t bit = 1u << i;
    for (std::uint32_t mask = 0; mask < full; ++mask) {
      if (mask & bit) continue;
      phi[i] += weight[static_cast<std::size_t>(std::popcount(mask))] *
                (value[mask | bit] - value[mask]);
    }
  }
  return phi;
}

inline std::vector<double> proportions(std::span<const double> phi) {
  double total = 0.0;
  for (double p : phi) total += p;
  std::vector<double> out(phi.begin(), phi.end());
  if (total != 0.0) {
    for (double& p : out) p /= total;
  }
  return out;
}

struct ShapCgResult {
  std::vector<double> owner_shares;
  double buyer_share{0.0};
  double total_cost{0.0};  // loss at the target plus the owners' shares
};

// Cooperative-game benchmark with the buyer as an additional player: the
// characteristic value is zero without the buyer, and the data value of the
// owner part otherwise. Owner payments are their Shapley shares.
inline ShapCgResult shap_cg_benchmark(const std::function<double(SubsetMask)>& data_value,
                                      std::size_t n_owners, double loss_target) {
  if (n_owners == 0 || n_owners > 11) {
    throw std::invalid_argument("shap_cg_benchmark: n_owners must be in 1..11");
  }
  const std::uint32_t buyer_bit = 1u << n_owners;
  const SubsetMask owner_mask = buyer_bit - 1;
  auto v = [&](SubsetMask s) -> double {
    if ((s & buyer_bit) == 0) return 0.0;
    const SubsetMask owners = s & owner_mask;
    return owners == 0 ? 0.0 : data_value(owners);
  };
  const auto phi = shapley(v, n_owners + 1);
  ShapCgResult r;
  r.owner_shares.assign(phi.begin(), phi.begin() + static_cast<long>(n_owners));
  r.buyer_share = phi[n_owners];
  double paid = 0.0;
  for (double s : r.owner_shares) paid += s;
  r.total_cost = loss_target + paid;
  return r;
}

}  // namespace wdm
