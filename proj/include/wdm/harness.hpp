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
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "wdm/benchmarks.hpp"
#include "wdm/distances.hpp"
#include "wdm/distributions.hpp"
#include "wdm/experiment_config.hpp"
#include "wdm/io.hpp"
#include "wdm/mechanisms.hpp"
#include "wdm/misocp.hpp"
#include "wdm/rng.hpp"
#include "wdm/tasks.hpp"
#include "wdm/valuation.hpp"

namespace wdm {

inline constexpr const char* kVersion = "wdm-0.1.0";

// --- correlation coupling --------------------------------------------------

// Draws N uniforms on (0, upper) and imposes the requested rank coupling with
// `values`: rho=+1 comonotone, rho=-1 antitone, rho=0 independent. The
// marginal stays exactly uniform in all three cases (a permutation of i.i.d.
// draws).
inline std::vector<double> couple_correlation(std::span<const double> values, double upper,
                                              int rho, RngStream& stream) {
  const std::size_t n = values.size();
  std::vector<double> draws(n);
  for (double& d : draws) d = stream.uniform(0.0, upper);
  if (rho == 0) return draws;
  if (rho != 1 && rho != -1) throw std::invalid_argument("couple_correlation: rho must be -1,0,+1");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] < values[b];
    return a < b;
  });
  std::vector<std::size_t> rank(n);
  for (std::size_t pos = 0; pos < n; ++pos) rank[order[pos]] = pos;

  std::vector<double> sorted = draws;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = rho > 0 ? sorted[rank[i]] : sorted[n - 1 - rank[i]];
  }
  return out;
}

// --- small statistics helpers ----------------------------------------------

struct MeanCi {
  double mean{std::numeric_limits<double>::quiet_NaN()};
  double lo{std::numeric_limits<double>::quiet_NaN()};
  double hi{std::numeric_limits<double>::quiet_NaN()};
  std::size_t n{0};
};

// Mean with a normal-approximation 95% interval; NaN entries are skipped.
inline MeanCi mean_ci(std::span<const double> xs) {
  MeanCi r;
  double sum = 0.0;
  for (double x : xs) {
    if (std::isnan(x)) continue;
    sum += x;
    ++r.n;
  }
  if (r.n == 0) return r;
  r.mean = sum / static_cast<double>(r.n);
  if (r.n == 1) {
    r.lo = r.hi = r.mean;
    return r;
  }
  double ss = 0.0;
  for (double x : xs) {
    if (std::isnan(x)) continue;
    ss += (x - r.mean) * (x - r.mean);
  }
  const double sd = std::sqrt(ss / static_cast<double>(r.n - 1));
  const double half = 1.96 * sd / std::sqrt(static_cast<double>(r.n));
  r.lo = r.mean - half;
  r.hi = r.mean + half;
  return r;
}

// Pearson correlation over pairs where both entries are defined.
inline double pearson(std::span<const double> a, std::span<const double> b) {
  double ma = 0.0, mb = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isnan(a[i]) || std::isnan(b[i])) continue;
    ma += a[i];
    mb += b[i];
    ++n;
  }
  if (n < 3) return std::numeric_limits<double>::quiet_NaN();
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isnan(a[i]) || std::isnan(b[i])) continue;
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

// Average ranks (ties share the mean rank); NaN entries keep NaN.
inline std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isnan(xs[i])) idx.push_back(i);
  }
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> r(xs.size(), std::numeric_limits<double>::quiet_NaN());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && xs[idx[j + 1]] == xs[idx[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double spearman(std::span<const double> a, std::span<const double> b) {
  // Rank only over jointly defined pairs.
  std::vector<double> aa, bb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isnan(a[i]) || std::isnan(b[i])) continue;
    aa.push_back(a[i]);
    bb.push_back(b[i]);
  }
  const auto ra = average_ranks(aa);
  const auto rb = average_ranks(bb);
  return pearson(ra, rb);
}

// --- trial generation under counter-derived substreams ----------------------

namespace stream_tag {
inline constexpr std::uint64_t owner_params = 1;
inline constexpr std::uint64_t draws = 2;
inline constexpr std::uint64_t dp_noise = 3;
inline constexpr std::uint64_t theta = 4;
inline constexpr std::uint64_t epsilon = 5;
}  // namespace stream_tag

inline std::size_t family_index(Family f) { return static_cast<std::size_t>(f); }

struct TrialData {
  std::vector<OwnerProfile> owners;
  std::vector<EmpiricalSample> raw;
  EmpiricalSample target;
  GaussianTarget gauss_target;
  std::vector<double> w_raw;
  std::size_t worst_owner{0};  // argmax w_raw
};

// One synthetic market: owner parameters, raw samples, their Euclidean
// aggregate as the target, and the individual distances. Entirely determined
// by (seed, family, trial); identical under any scheduling.
inline TrialData make_trial(const ExperimentConfig& cfg, Family family, std::size_t trial) {
  const std::size_t fam = family_index(family);
  const std::size_t n = cfg.n_owners;

  RngStream params(derive_seed(cfg.seed, {fam, trial, stream_tag::owner_params}));
  std::vector<DistributionSpec> specs;
  specs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double alpha = params.uniform(cfg.alpha_lo, cfg.alpha_hi);
    const double beta = params.uniform(cfg.beta_lo, cfg.beta_hi);
    specs.emplace_back(family, alpha, beta);
  }

  std::vector<EmpiricalSample> raw;
  raw.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream ds(derive_seed(cfg.seed, {fam, trial, stream_tag::draws, i}));
    raw.push_back(sample(specs[i], cfg.sample_size, ds));
  }
  EmpiricalSample target = aggregate_euclidean(raw);

  std::vector<double> w_raw(n);
  std::size_t worst = 0;
  for (std::size_t i = 0; i < n; ++i) {
    w_raw[i] = wasserstein1(raw[i], target);
    if (w_raw[i] > w_raw[worst]) worst = i;
  }

  double mu = 0.0, var = 0.0;
  for (const auto& s : specs) {
    mu += s.location;
    var += s.scale * s.scale;
  }
  mu /= static_cast<double>(n);
  const GaussianTarget gt{mu, std::sqrt(var) / static_cast<double>(n)};

  std::vector<OwnerProfile> owners(n);
  for (std::size_t i = 0; i < n; ++i) {
    owners[i] = OwnerProfile{i, specs[i], w_raw[i], DpParams{}, 0.0, w_raw[i]};
  }
  return TrialData{std::move(owners), std::move(raw), std::move(target), gt, std::move(w_raw),
                   worst};
}

// Uniform privacy budgets on (0, eps_bar), drawn once per trial as unit
// uniforms so a sweep over eps_bar rescales rather than redraws.
inline std::vector<double> draw_unit_epsilons(const ExperimentConfig& cfg, Family family,
                                              std::size_t trial) {
  RngStream es(derive_seed(cfg.seed, {family_index(family), trial, stream_tag::epsilon}));
  std::vector<double> u(cfg.n_owners);
  for (double& v : u) v = es.uniform01();
  return u;
}

inline DpParams make_dp_params(const ExperimentConfig& cfg, double epsilon) {
  return cfg.dp_mechanism == NoiseMechanism::gaussian
             ? DpParams::gaussian(epsilon, cfg.dp_delta, cfg.dp_sensitivity)
             : DpParams::laplace(epsilon, cfg.dp_sensitivity);
}

// Locally perturbed copies of the raw samples. The per-owner noise stream is
// re-derived on every call, so different sweep points reuse the same
// underlying uniforms scaled to their noise level.
inline std::vector<EmpiricalSample> make_noisy(const ExperimentConfig& cfg, Family family,
                                               std::size_t trial, const TrialData& td,
                                               std::span<const double> epsilons) {
  std::vector<EmpiricalSample> noisy;
  noisy.reserve(td.raw.size());
  for (std::size_t i = 0; i < td.raw.size(); ++i) {
    RngStream ns(derive_seed(cfg.seed, {family_index(family), trial, stream_tag::dp_noise, i}));
    noisy.push_back(add_dp_noise(td.raw[i], make_dp_params(cfg, epsilons[i]), ns));
  }
  return noisy;
}

inline std::vector<double> couple_theta(const ExperimentConfig& cfg, Family family,
                                        std::size_t trial, std::span<const double> values,
                                        double theta_bar, int rho) {
  RngStream ts(derive_seed(cfg.seed, {family_index(family), trial, stream_tag::theta}));
  // Draw on (0,1) and scale, so a theta_bar sweep rescales the same draws.
  auto theta = couple_correlation(values, 1.0, rho, ts);
  for (double& t : theta) t *= theta_bar;
  return theta;
}

// --- parallel trial driver ---------------------------------------------------

inline unsigned effective_workers(unsigned requested) {
  if (requested != 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

template <typename Fn>
void parallel_for(std::size_t count, unsigned workers, Fn&& fn) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  const unsigned n_threads = static_cast<unsigned>(std::min<std::size_t>(workers, count));
  pool.reserve(n_threads);
  for (unsigned t = 0; t < n_threads; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// --- run results -------------------------------------------------------------

struct RunSummary {
  ExperimentId experiment{ExperimentId::val_corr};
  std::vector<std::string> files;
  std::map<std::string, double> metrics;  // headline aggregates, keyed by name
  double wall_seconds{0.0};
};

// Per-trial record shared by the procurement experiments; one CSV row each.
struct TrialRecord {
  std::string task;
  int rho{0};
  std::string sweep_name;
  double sweep_value{0.0};
  std::string mechanism;
  std::size_t trial{0};
  int q0{0};
  std::size_t n_selected{0};
  SubsetMask mask{0};
  double v_bound{std::numeric_limits<double>::quiet_NaN()};
  double payments{std::numeric_limits<double>::quiet_NaN()};
  double omega_hat{std::numeric_limits<double>::quiet_NaN()};
  double omega{std::numeric_limits<double>::quiet_NaN()};
  double b_ref{std::numeric_limits<double>::quiet_NaN()};
  double actual_wd{std::numeric_limits<double>::quiet_NaN()};
  double actual_gap{std::numeric_limits<double>::quiet_NaN()};
  bool feasible{true};
};

namespace detail {

inline std::filesystem::path out_file(const ExperimentConfig& cfg, const std::string& name,
                                      RunSummary& summary) {
  const std::filesystem::path p = std::filesystem::path(cfg.out_dir) / name;
  summary.files.push_back(name);
  return p;
}

inline void write_records_csv(const ExperimentConfig& cfg, RunSummary& summary,
                              const std::string& name, const std::vector<TrialRecord>& records) {
  CsvWriter csv(out_file(cfg, name, summary),
                {"task", "rho", "sweep", "sweep_value", "mechanism", "trial", "q0", "n_selected",
                 "mask", "v_bound", "payments", "omega_hat", "omega", "b_ref", "actual_wd",
                 "actual_gap", "feasible"});
  for (const auto& r : records) {
    csv.row(r.task, r.rho, r.sweep_name, r.sweep_value, r.mechanism, r.trial, r.q0, r.n_selected,
            r.mask, r.v_bound, r.payments, r.omega_hat, r.omega, r.b_ref, r.actual_wd,
            r.actual_gap, r.feasible);
  }
  csv.close();
}

inline std::vector<Family> run_families(const ExperimentConfig& cfg) {
  if (cfg.all_families) {
    return {Family::gaussian, Family::uniform, Family::exponential};
  }
  return {cfg.family};
}

inline MarketInstance make_instance(const TrialData& td, std::span<const double> w,
                                    MechanismKind kind, double budget, double k_lipschitz,
                                    double delta, Population population, double theta_bar) {
  MarketInstance inst;
  inst.owners = td.owners;
  for (std::size_t i = 0; i < w.size(); ++i) inst.owners[i].w_effective = w[i];
  inst.prior = PriorSpec::uniform(inst.owners.size(), theta_bar);
  inst.mechanism = kind;
  inst.budget = budget;
  inst.k_lipschitz = k_lipschitz;
  inst.hoeffding = HoeffdingParams{delta, population, inst.owners.size()};
  return inst;
}

inline std::vector<double> virtual_costs(const PriorSpec& prior, std::span<const double> theta) {
  std::vector<double> psi(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) psi[i] = virtual_cost(theta[i], prior, i);
  return psi;
}

inline double subset_sum(std::span<const double> v, SubsetMask mask) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (subset_contains(mask, i)) s += v[i];
  }
  return s;
}

// --- val-lipschitz -----------------------------------------------------------

inline void run_val_lipschitz(const ExperimentConfig& cfg, unsigned workers, RunSummary& out) {
  const std::vector<TaskSpec> tasks = {TaskSpec::mean_estimation(), TaskSpec::median_estimation(),
                                       TaskSpec::quantile_estimation(0.9),
                                       TaskSpec::newsvendor_task()};
  const auto families = run_families(cfg);

  struct TrialOut {
    std::vector<double> wd;                              // per mask
    std::vector<std::vector<double>> gap;                // [task][mask]
    std::vector<std::size_t> violations;                 // per task
  };

  CsvWriter by_size(out_file(cfg, "lipschitz_by_size.csv", out),
                    {"family", "task", "size", "mean_wd", "mean_gap_over_k", "n"});
  CsvWriter viol(out_file(cfg, "lipschitz_violations.csv", out),
                 {"family", "task", "trial", "n_coalitions", "n_violations"});
  CsvWriter scatter(out_file(cfg, "lipschitz_scatter.csv", out),
                    {"family", "task", "mask", "size", "wd", "gap_over_k", "violated"});

  for (Family family : families) {
    std::vector<TrialOut> results(cfg.trials);
    parallel_for(cfg.trials, workers, [&](std::size_t trial) {
      const TrialData td = make_trial(cfg, family, trial);
      CoalitionTableConfig tcfg;
      tcfg.tasks = tasks;
      tcfg.histogram_bins = cfg.histogram_bins;
      const auto table = CoalitionTable::build(td.raw, td.target, tcfg);
      TrialOut to;
      const std::uint32_t subsets = table.n_subsets();
      to.wd.resize(subsets + 1, std::numeric_limits<double>::quiet_NaN());
      to.gap.assign(tasks.size(), to.wd);
      to.violations.assign(tasks.size(), 0);
      for (SubsetMask mask = 1; mask <= subsets; ++mask) {
        const auto& st = table.at(mask);
        to.wd[mask] = st.wd;
        for (std::size_t t = 0; t < tasks.size(); ++t) {
          to.gap[t][mask] = st.gap[t];
          if (st.gap[t] > tasks[t].k_lipschitz * st.wd + 1e-9) ++to.violations[t];
        }
      }
      results[trial] = std::move(to);
    });

    const std::uint32_t subsets = (1u << cfg.n_owners) - 1;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      std::size_t total_viol = 0;
      std::size_t trials_with_viol = 0;
      for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
        viol.row(to_string(family), tasks[t].name(), trial, subsets,
                 results[trial].violations[t]);
        total_viol += results[trial].violations[t];
        trials_with_viol += results[trial].violations[t] > 0 ? 1 : 0;
      }
      out.metrics["viol_total_" + std::string(to_string(family)) + "_" + tasks[t].name()] =
          static_cast<double>(total_viol);
      out.metrics["viol_trials_" + std::string(to_string(family)) + "_" + tasks[t].name()] =
          static_cast<double>(trials_with_viol);

      for (std::size_t size = 1; size <= cfg.n_owners; ++size) {
        double wd_sum = 0.0, gap_sum = 0.0;
        std::size_t n = 0;
        for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
          for (SubsetMask mask = 1; mask <= subsets; ++mask) {
            if (static_cast<std::size_t>(subset_size(mask)) != size) continue;
            wd_sum += results[trial].wd[mask];
            gap_sum += results[trial].gap[t][mask] / tasks[t].k_lipschitz;
            ++n;
          }
        }
        by_size.row(to_string(family), tasks[t].name(), size, wd_sum / static_cast<double>(n),
                    gap_sum / static_cast<double>(n), n);
      }
      for (SubsetMask mask = 1; mask <= subsets; ++mask) {
        const double wd = results[0].wd[mask];
        const double gap_over_k = results[0].gap[t][mask] / tasks[t].k_lipschitz;
        scatter.row(to_string(family), tasks[t].name(), mask, subset_size(mask), wd, gap_over_k,
                    results[0].gap[t][mask] > tasks[t].k_lipschitz * wd + 1e-9);
      }
    }
  }
  by_size.close();
  viol.close();
  scatter.close();
}

// --- val-corr ------------------------------------------------------------------

inline void run_val_corr(const ExperimentConfig& cfg, unsigned workers, RunSummary& out) {
  std::vector<TaskSpec> tasks = {TaskSpec::median_estimation(), TaskSpec::mean_estimation(),
                                 TaskSpec::newsvendor_task()};
  for (int q = 1; q <= 9; ++q) tasks.push_back(TaskSpec::quantile_estimation(q / 10.0));
  const std::vector<DistanceKind> kinds = {DistanceKind::wd, DistanceKind::kld, DistanceKind::jsd,
                                           DistanceKind::ks, DistanceKind::tvd};
  const auto families = run_families(cfg);

  CsvWriter pertrial(out_file(cfg, "corr_pertrial.csv", out),
                     {"family", "trial", "distance", "task", "pearson", "spearman", "n_defined"});
  CsvWriter matrix(out_file(cfg, "corr_matrix.csv", out),
                   {"family", "distance", "task", "mean_pearson", "ci_lo", "ci_hi",
                    "mean_spearman", "trials_defined"});
  CsvWriter wd_better(out_file(cfg, "corr_wd_better.csv", out),
                      {"family", "distance", "task", "frac_wd_higher"});

  for (Family family : families) {
    // corr[kind][task][trial]
    std::vector<std::vector<std::vector<double>>> pear(
        kinds.size(), std::vector<std::vector<double>>(
                          tasks.size(), std::vector<double>(cfg.trials,
                                                            std::numeric_limits<double>::quiet_NaN())));
    auto spear = pear;
    std::vector<std::vector<std::vector<double>>> ndef(
        kinds.size(),
        std::vector<std::vector<double>>(tasks.size(), std::vector<double>(cfg.trials, 0.0)));

    parallel_for(cfg.trials, workers, [&](std::size_t trial) {
      const TrialData td = make_trial(cfg, family, trial);
      CoalitionTableConfig tcfg;
      tcfg.tasks = tasks;
      tcfg.all_distances = true;
      tcfg.histogram_bins = cfg.histogram_bins;
      const auto table = CoalitionTable::build(td.raw, td.target, tcfg);
      const std::uint32_t subsets = table.n_subsets();
      std::vector<double> dist(subsets), gap(subsets);
      for (std::size_t k = 0; k < kinds.size(); ++k) {
        for (SubsetMask mask = 1; mask <= subsets; ++mask) {
          const auto d = table.distance_at(mask, kinds[k]);
          dist[mask - 1] = d.value_or(std::numeric_limits<double>::quiet_NaN());
        }
        for (std::size_t t = 0; t < tasks.size(); ++t) {
          for (SubsetMask mask = 1; mask <= subsets; ++mask) gap[mask - 1] = table.at(mask).gap[t];
          pear[k][t][trial] = pearson(dist, gap);
          spear[k][t][trial] = spearman(dist, gap);
          std::size_t nd = 0;
          for (double d : dist) nd += std::isnan(d) ? 0 : 1;
          ndef[k][t][trial] = static_cast<double>(nd);
        }
      }
    });

    for (std::size_t k = 0; k < kinds.size(); ++k) {
      for (std::size_t t = 0; t < tasks.size(); ++t) {
        for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
          pertrial.row(to_string(family), trial, to_string(kinds[k]), tasks[t].name(),
                       pear[k][t][trial], spear[k][t][trial],
                       static_cast<std::size_t>(ndef[k][t][trial]));
        }
        const auto mc = mean_ci(pear[k][t]);
        const auto ms = mean_ci(spear[k][t]);
        matrix.row(to_string(family), to_string(kinds[k]), tasks[t].name(), mc.mean, mc.lo, mc.hi,
                   ms.mean, mc.n);
        out.metrics["corr_" + std::string(to_string(family)) + "_" +
                    std::string(to_string(kinds[k])) + "_" + tasks[t].name()] = mc.mean;
        // fraction of trials where the wd correlation is at least as high
        std::size_t higher = 0, counted = 0;
        for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
          const double rw = pear[0][t][trial];
          const double rk = pear[k][t][trial];
          if (std::isnan(rw) || std::isnan(rk)) continue;
          ++counted;
          higher += rw >= rk ? 1 : 0;
        }
        wd_better.row(to_string(family), to_string(kinds[k]), tasks[t].name(),
                      counted == 0 ? std::numeric_limits<double>::quiet_NaN()
                                   : static_cast<double>(higher) / static_cast<double>(counted));
      }
    }
  }
  pertrial.close();
  matrix.close();
  wd_better.close();
}

// --- val-shapley -----------------------------------------------------------------

inline void run_val_shapley(const ExperimentConfig& cfg, unsigned workers, RunSummary& out) {
  const std::vector<TaskSpec> tasks = {TaskSpec::median_estimation(), TaskSpec::mean_estimation(),
                                       TaskSpec::quantile_estimation(0.9),
                                       TaskSpec::newsvendor_task()};
  const std::vector<DistanceKind> kinds = {DistanceKind::wd, DistanceKind::ks, DistanceKind::tvd,
                                           DistanceKind::jsd};
  const auto families = run_families(cfg);
  if (cfg.n_owners > 12) throw ConfigError("val-shapley needs owners <= 12");

  CsvWriter props(out_file(cfg, "shapley_proportions.csv", out),
                  {"family", "trial", "metric", "owner", "proportion"});
  CsvWriter misalloc(out_file(cfg, "shapley_misallocation.csv", out),
                     {"family", "distance", "task", "mean_abs_diff"});

  for (Family family : families) {
    // proportions[metric][trial][owner]; metrics: kinds then tasks
    const std::size_t n_metrics = kinds.size() + tasks.size();
    std::vector<std::vector<std::vector<double>>> prop(
        n_metrics, std::vector<std::vector<double>>(cfg.trials));
    std::vector<double> pairwise_max(cfg.trials, std::numeric_limits<double>::quiet_NaN());

    parallel_for(cfg.trials, workers, [&](std::size_t trial) {
      const TrialData td = make_trial(cfg, family, trial);
      CoalitionTableConfig tcfg;
      tcfg.tasks = tasks;
      tcfg.all_distances = true;
      tcfg.histogram_bins = cfg.histogram_bins;
      const auto table = CoalitionTable::build(td.raw, td.target, tcfg);
      const std::uint32_t subsets = table.n_subsets();

      auto shapley_for = [&](const std::function<double(SubsetMask)>& metric) {
        double max_m = -std::numeric_limits<double>::infinity();
        for (SubsetMask mask = 1; mask <= subsets; ++mask) {
          max_m = std::max(max_m, metric(mask));
        }
        auto v = [&](SubsetMask mask) { return mask == 0 ? 0.0 : max_m - metric(mask); };
        return proportions(shapley(v, cfg.n_owners));
      };

      for (std::size_t k = 0; k < kinds.size(); ++k) {
        bool all_defined = true;
        for (SubsetMask mask = 1; mask <= subsets && all_defined; ++mask) {
          all_defined = table.distance_at(mask, kinds[k]).has_value();
        }
        if (!all_defined) continue;  // undefined divergences leave the row empty
        prop[k][trial] = shapley_for(
            [&](SubsetMask mask) { return *table.distance_at(mask, kinds[k]); });
      }
      for (std::size_t t = 0; t < tasks.size(); ++t) {
        prop[kinds.size() + t][trial] =
            shapley_for([&](SubsetMask mask) { return table.at(mask).loss_p[t]; });
      }

      // worst pairwise owner difference across the distance-based allocations
      double worst = 0.0;
      bool any = true;
      for (std::size_t a = 0; a < kinds.size() && any; ++a) {
        for (std::size_t b = a + 1; b < kinds.size() && any; ++b) {
          if (prop[a][trial].empty() || prop[b][trial].empty()) {
            any = false;
            break;
          }
          for (std::size_t i = 0; i < cfg.n_owners; ++i) {
            worst = std::max(worst, std::abs(prop[a][trial][i] - prop[b][trial][i]));
          }
        }
      }
      if (any) pairwise_max[trial] = worst;
    });

    auto metric_name = [&](std::size_t m) {
      return m < kinds.size() ? std::string(to_string(kinds[m])) : tasks[m - kinds.size()].name();
    };
    for (std::size_t m = 0; m < n_metrics; ++m) {
      for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
        if (prop[m][trial].empty()) continue;
        for (std::size_t i = 0; i < cfg.n_owners; ++i) {
          props.row(to_string(family), trial, metric_name(m), i, prop[m][trial][i]);
        }
      }
    }
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      for (std::size_t t = 0; t < tasks.size(); ++t) {
        std::vector<double> diffs;
        for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
          const auto& pd = prop[k][trial];
          const auto& pt = prop[kinds.size() + t][trial];
          if (pd.empty() || pt.empty()) continue;
          double s = 0.0;
          for (std::size_t i = 0; i < cfg.n_owners; ++i) s += std::abs(pd[i] - pt[i]);
          diffs.push_back(s / static_cast<double>(cfg.n_owners));
        }
        misalloc.row(to_string(family), to_string(kinds[k]), tasks[t].name(),
                     mean_ci(diffs).mean);
      }
    }
    if (family == (cfg.all_families ? Family::gaussian : cfg.family)) {
      out.metrics["shapley_pairwise_maxdiff_mean"] = mean_ci(pairwise_max).mean;
    }
  }
  props.close();
  misalloc.close();
}

// --- val-hoeffding ----------------------------------------------------------------

inline void run_val_hoeffding(const ExperimentConfig& cfg, unsigned workers, RunSummary& out) {
  const Family family = cfg.family;
  const std::uint32_t subsets = (1u << cfg.n_owners) - 1;

  struct TrialOut {
    std::vector<double> wd, fin, inf;  // indexed by mask-1
    double rho_fin{0}, rho_inf{0}, dominance{0};
  };
  std::vector<TrialOut> results(cfg.trials);

  parallel_for(cfg.trials, workers, [&](std::size_t trial) {
    const TrialData td = make_trial(cfg, family, trial);
    CoalitionTableConfig tcfg;  // distances only
    const auto table = CoalitionTable::build(td.raw, td.target, tcfg);
    TrialOut to;
    to.wd.resize(subsets);
    to.fin.resize(subsets);
    to.inf.resize(subsets);
    const HoeffdingParams fin{cfg.delta, Population::finite, cfg.n_owners};
    const HoeffdingParams inf{cfg.delta, Population::infinite, cfg.n_owners};
    std::size_t dominated = 0;
    for (SubsetMask mask = 1; mask <= subsets; ++mask) {
      to.wd[mask - 1] = table.at(mask).wd;
      to.fin[mask - 1] = hoeffding_bound(td.w_raw, mask, fin);
      to.inf[mask - 1] = hoeffding_bound(td.w_raw, mask, inf);
      dominated += to.fin[mask - 1] >= to.wd[mask - 1] ? 1 : 0;
    }
    to.rho_fin = pearson(to.wd, to.fin);
    to.rho_inf = pearson(to.wd, to.inf);
    to.dominance = static_cast<double>(dominated) / static_cast<double>(subsets);
    results[trial] = std::move(to);
  });

  {
    CsvWriter csv(out_file(cfg, "hoeffding_by_size.csv", out),
                  {"size", "mean_wd", "mean_fin", "mean_inf"});
    bool envelope_ok = true;
    for (std::size_t size = 1; size <= cfg.n_owners; ++size) {
      double sw = 0, sf = 0, si = 0;
      std::size_t n = 0;
      for (const auto& to : results) {
        for (SubsetMask mask = 1; mask <= subsets; ++mask) {
          if (static_cast<std::size_t>(subset_size(mask)) != size) continue;
          sw += to.wd[mask - 1];
          sf += to.fin[mask - 1];
          si += to.inf[mask - 1];
          ++n;
        }
      }
      csv.row(size, sw / n, sf / n, si / n);
      if (sf < sw) envelope_ok = false;  // mean bound below mean actual
    }
    csv.close();
    out.metrics["envelope_mean_by_size_ok"] = envelope_ok ? 1.0 : 0.0;
  }
  {
    // Bounds depend on the W vector only, so the delta sweep reuses trials.
    CsvWriter csv(out_file(cfg, "hoeffding_delta_effect.csv", out),
                  {"delta", "size", "mean_fin", "mean_inf"});
    for (double delta : cfg.delta_sweep) {
      const double scale = std::sqrt(std::log(2.0 / (1.0 - delta)) /
                                     std::log(2.0 / (1.0 - cfg.delta)));
      for (std::size_t size = 1; size <= cfg.n_owners; ++size) {
        double sf = 0, si = 0;
        std::size_t n = 0;
        for (const auto& to : results) {
          for (SubsetMask mask = 1; mask <= subsets; ++mask) {
            if (static_cast<std::size_t>(subset_size(mask)) != size) continue;
            sf += to.fin[mask - 1] * scale;
            si += to.inf[mask - 1] * scale;
            ++n;
          }
        }
        csv.row(delta, size, sf / n, si / n);
      }
    }
    csv.close();
  }
  {
    CsvWriter csv(out_file(cfg, "hoeffding_minimizer.csv", out),
                  {"size", "mean_wd_of_fin_minimizer", "mean_wd_of_inf_minimizer", "mean_min_wd",
                   "mean_wd"});
    for (std::size_t size = 1; size <= cfg.n_owners; ++size) {
      double s_fin = 0, s_inf = 0, s_min = 0, s_avg = 0;
      for (const auto& to : results) {
        double best_fin = std::numeric_limits<double>::infinity();
        double best_inf = best_fin, best_wd = best_fin;
        double wd_fin = 0, wd_inf = 0, sum = 0;
        std::size_t n = 0;
        for (SubsetMask mask = 1; mask <= subsets; ++mask) {
          if (static_cast<std::size_t>(subset_size(mask)) != size) continue;
          const double wd = to.wd[mask - 1];
          if (to.fin[mask - 1] < best_fin) {
            best_fin = to.fin[mask - 1];
            wd_fin = wd;
          }
          if (to.inf[mask - 1] < best_inf) {
            best_inf = to.inf[mask - 1];
            wd_inf = wd;
          }
          best_wd = std::min(best_wd, wd);
          sum += wd;
          ++n;
        }
        s_fin += wd_fin;
        s_inf += wd_inf;
        s_min += best_wd;
        s_avg += sum / static_cast<double>(n);
      }
      const auto tn = static_cast<double>(cfg.trials);
      csv.row(size, s_fin / tn, s_inf / tn, s_min / tn, s_avg / tn);
    }
    csv.close();
  }
  {
    CsvWriter csv(out_file(cfg, "hoeffding_corr.csv", out),
                  {"trial", "pearson_fin", "pearson_inf", "dominance_frac"});
    std::vector<double> rf(cfg.trials), ri(cfg.trials), dom(cfg.trials);
    for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
      csv.row(trial, results[trial].rho_fin, results[trial].rho_inf, results[trial].dominance);
      rf[trial] = results[trial].rho_fin;
      ri[trial] = results[trial].rho_inf;
      dom[trial] = results[trial].dominance;
    }
    csv.close();
    CsvWriter sum(out_file(cfg, "hoeffding_corr_summary.csv", out),
                  {"mean_rho_fin", "rho_fin_ci_lo", "rho_fin_ci_hi", "mean_rho_inf",
                   "rho_inf_ci_lo", "rho_inf_ci_hi", "mean_dominance"});
    const auto mf = mean_ci(rf);
    const auto mi = mean_ci(ri);
    const auto md = mean_ci(dom);
    sum.row(mf.mean, mf.lo, mf.hi, mi.mean, mi.lo, mi.hi, md.mean);
    sum.close();
    out.metrics["rho_w_fin"] = mf.mean;
    out.metrics["rho_w_inf"] = mi.mean;
    out.metrics["dominance_mean_fin"] = md.mean;
  }
}

}  // namespace detail
}  // namespace wdm

#include "wdm/harness_proc.hpp"

namespace wdm {

// Runs one experiment end to end: trials in parallel under counter-derived
// substreams, deterministic sequential aggregation, CSV tables plus a JSON
// manifest in cfg.out_dir.
inline RunSummary run(const ExperimentConfig& cfg) {
  cfg.validate();
  ensure_directory(cfg.out_dir);
  const unsigned workers = effective_workers(cfg.workers);
  const auto start = std::chrono::steady_clock::now();

  RunSummary summary;
  summary.experiment = cfg.experiment;
  switch (cfg.experiment) {
    case ExperimentId::val_lipschitz: detail::run_val_lipschitz(cfg, workers, summary); break;
    case ExperimentId::val_corr: detail::run_val_corr(cfg, workers, summary); break;
    case ExperimentId::val_shapley: detail::run_val_shapley(cfg, workers, summary); break;
    case ExperimentId::val_hoeffding: detail::run_val_hoeffding(cfg, workers, summary); break;
    case ExperimentId::proc_exo: detail::run_proc_exo(cfg, workers, summary); break;
    case ExperimentId::proc_exo_dist: detail::run_proc_exo_dist(cfg, workers, summary); break;
    case ExperimentId::proc_dp: detail::run_proc_dp(cfg, workers, summary); break;
    case ExperimentId::proc_endo: detail::run_proc_endo(cfg, workers, summary); break;
    case ExperimentId::proc_joint: detail::run_proc_joint(cfg, workers, summary); break;
    case ExperimentId::proc_risk: detail::run_proc_risk(cfg, workers, summary); break;
    case ExperimentId::proc_approx: detail::run_proc_approx(cfg, workers, summary); break;
  }

  summary.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  nlohmann::json manifest;
  manifest["experiment"] = to_string(cfg.experiment);
  manifest["version"] = kVersion;
  manifest["seed"] = cfg.seed;
  manifest["wall_clock_seconds"] = summary.wall_seconds;
  manifest["workers"] = workers;
  manifest["files"] = summary.files;
  nlohmann::json c;
  c["trials"] = cfg.trials;
  c["owners"] = cfg.n_owners;
  c["sample_size"] = cfg.sample_size;
  c["family"] = cfg.all_families ? "all" : to_string(cfg.family);
  c["alpha_lo"] = cfg.alpha_lo;
  c["alpha_hi"] = cfg.alpha_hi;
  c["beta_lo"] = cfg.beta_lo;
  c["beta_hi"] = cfg.beta_hi;
  c["theta_bar"] = cfg.theta_bar;
  c["theta_bar_sweep"] = cfg.theta_bar_sweep;
  c["budget_multiples"] = cfg.budget_multiples;
  c["eps_bar"] = cfg.eps_bar;
  c["eps_bar_sweep"] = cfg.eps_bar_sweep;
  c["delta"] = cfg.delta;
  c["delta_sweep"] = cfg.delta_sweep;
  c["rho"] = cfg.rho_values;
  c["population"] = to_string(cfg.population);
  c["dp_mechanism"] = to_string(cfg.dp_mechanism);
  c["dp_delta"] = cfg.dp_delta;
  c["dp_sensitivity"] = cfg.dp_sensitivity;
  c["hist_bins"] = cfg.histogram_bins;
  c["risk_theta_bar"] = cfg.risk_theta_bar;
  c["approx_theta_bar"] = cfg.approx_theta_bar;
  c["reference_data"] = "worst-individual-distance owner";
  manifest["config"] = c;
  nlohmann::json m;
  for (const auto& [k, v] : summary.metrics) m[k] = v;
  manifest["metrics"] = m;

  const auto manifest_path = std::filesystem::path(cfg.out_dir) / "manifest.json";
  std::ofstream mo(manifest_path);
  if (!mo) throw IoError("cannot write manifest", manifest_path);
  mo << manifest.dump(2) << "\n";
  if (!mo) throw IoError("manifest write failed", manifest_path);
  return summary;
}

}  // namespace wdm
