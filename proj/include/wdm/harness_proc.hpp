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

// Procurement experiments of the harness. Internal: included by harness.hpp
// after the shared trial/statistics helpers are declared.

#pragma once

namespace wdm {
namespace detail {

inline std::string rho_label(int rho) {
  if (rho < 0) return "m1";
  return rho > 0 ? "p1" : "0";
}

inline constexpr double kBudgetTol = 1e-9;

inline std::size_t nan_safe_count(double n_sel) {
  return std::isnan(n_sel) ? 0 : static_cast<std::size_t>(std::max(0.0, n_sel));
}

// Aggregate of the selected owners' (possibly noisy) draws, scored against
// the trial target. Used where no full coalition table is needed.
struct SelectionScore {
  double wd{std::numeric_limits<double>::quiet_NaN()};
  double loss_p{std::numeric_limits<double>::quiet_NaN()};
  double gap{std::numeric_limits<double>::quiet_NaN()};
};

inline SelectionScore score_selection(const std::vector<EmpiricalSample>& samples,
                                      SubsetMask mask, const EmpiricalSample& target,
                                      const TargetLossEvaluator& evaluator, const TaskSpec& task,
                                      double loss_t) {
  SelectionScore s;
  if (mask == 0) return s;
  const std::size_t n_draw = target.size();
  std::vector<double> buf(n_draw, 0.0);
  int k = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!subset_contains(mask, i)) continue;
    const auto& d = samples[i].draws();
    for (std::size_t j = 0; j < n_draw; ++j) buf[j] += d[j];
    ++k;
  }
  const double inv = 1.0 / static_cast<double>(k);
  for (double& v : buf) v *= inv;
  std::sort(buf.begin(), buf.end());
  s.wd = wasserstein1_sorted(buf, target.values());
  const double param = estimate_parameter_sorted(buf, task);
  s.loss_p = evaluator.loss(task, param);
  s.gap = s.loss_p - loss_t;
  return s;
}

// --- proc-exo: exogenous-budget mechanisms vs benchmarks --------------------

inline void run_proc_exo(const ExperimentConfig& cfg, unsigned workers, RunSummary& out) {
  const Family family = cfg.family;
  const std::vector<std::string> mechs = {"CEN", "RAND", "FIN", "INF", "SMQ", "PTAS"};
  const double nan = std::numeric_limits<double>::quiet_NaN();

  struct Cell {
    double wd{std::numeric_limits<double>::quiet_NaN()};
    double n_sel{std::numeric_limits<double>::quiet_NaN()};
    double payments{std::numeric_limits<double>::quiet_NaN()};
    bool feasible{false};
    SubsetMask mask{0};
  };
  // cells[trial][rho][budget][mech]
  using TrialCells = std::vector<std::vector<std::vector<Cell>>>;
  std::vector<TrialCells> cells(cfg.trials);
  struct OwnerRow {
    double alpha, beta, w_raw;
  };
  std::vector<std::vector<OwnerRow>> owner_rows(cfg.trials);

  parallel_for(cfg.trials, workers, [&](std::size_t trial) {
    const TrialData td = make_trial(cfg, family, trial);
    CoalitionTableConfig tcfg;
    const auto table = CoalitionTable::build(td.raw, td.target, tcfg);
    const std::size_t n = cfg.n_owners;
    owner_rows[trial].resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      owner_rows[trial][i] = {td.owners[i].spec.location, td.owners[i].spec.scale, td.w_raw[i]};
    }

    TrialCells tc(cfg.rho_values.size(),
                  std::vector<std::vector<Cell>>(cfg.budget_multiples.size(),
                                                 std::vector<Cell>(mechs.size())));
    std::vector<double> values(n);  // SMQ per-owner value 1/W_i
    for (std::size_t i = 0; i < n; ++i) values[i] = 1.0 / std::max(td.w_raw[i], 1e-12);
    const std::vector<double> theta_bars(n, cfg.theta_bar);

    for (std::size_t r = 0; r < cfg.rho_values.size(); ++r) {
      const int rho = cfg.rho_values[r];
      const auto theta = couple_theta(cfg, family, trial, td.w_raw, cfg.theta_bar, rho);
      const auto prior = PriorSpec::uniform(n, cfg.theta_bar);
      const auto psi = virtual_costs(prior, theta);

      for (std::size_t b = 0; b < cfg.budget_multiples.size(); ++b) {
        const double budget =
            cfg.budget_multiples[b] * cfg.theta_bar * static_cast<double>(n);
        auto theta_ok = [&](SubsetMask mask) { return subset_sum(theta, mask) <= budget; };
        auto wd_of = [&](SubsetMask mask) { return table.at(mask).wd; };

        auto fill = [&](std::size_t m, SubsetMask mask, bool feasible, double payments) {
          Cell& c = tc[r][b][m];
          c.feasible = feasible;
          c.mask = mask;
          c.payments = payments;
          if (feasible && mask != 0) {
            c.wd = table.at(mask).wd;
            c.n_sel = subset_size(mask);
          } else if (feasible) {
            c.n_sel = 0;
          }
        };

        const auto cen = solve_central(table, wd_of, theta_ok);
        fill(0, cen.mask, cen.feasible,
             cen.feasible ? subset_sum(theta, cen.mask) : nan);

        const auto rnd = solve_random(table, wd_of, theta_ok);
        Cell& crand = tc[r][b][1];
        crand.feasible = rnd.n_feasible > 0;
        crand.wd = rnd.mean_metric;
        crand.n_sel = solve_random(
                          table, [&](SubsetMask mask) { return double(subset_size(mask)); },
                          theta_ok)
                          .mean_metric;

        for (std::size_t m = 2; m <= 3; ++m) {
          const Population pop = m == 2 ? Population::finite : Population::infinite;
          const auto inst = make_instance(td, td.w_raw, MechanismKind::exogenous, budget, 1.0,
                                          cfg.delta, pop, cfg.theta_bar);
          const auto res = solve(inst, theta);
          fill(m, res.selected_mask, res.feasible, res.payments_total);
        }

        const auto smq = solve_smq(values, theta_bars, budget, theta);
        double smq_paid = 0.0;
        for (double p : smq.payments) smq_paid += p;
        fill(4, smq.accepted, true, smq_paid);

        const auto ptas = solve_ptas(theta, td.w_raw, budget);
        double ptas_paid = 0.0;
        for (double p : ptas.payments) ptas_paid += p;
        fill(5, ptas.selected, true, ptas_paid);
      }
    }
    cells[trial] = std::move(tc);
  });

  std::vector<TrialRecord> records;
  for (std::size_t r = 0; r < cfg.rho_values.size(); ++r) {
    const int rho = cfg.rho_values[r];
    CsvWriter csv(out_file(cfg, "proc_exo_rho_" + rho_label(rho) + ".csv", out),
                  {"budget", "mechanism", "mean_wd", "ci_lo", "ci_hi", "mean_n_selected"});
    for (std::size_t b = 0; b < cfg.budget_multiples.size(); ++b) {
      const double budget = cfg.budget_multiples[b] * cfg.theta_bar * cfg.n_owners;
      for (std::size_t m = 0; m < mechs.size(); ++m) {
        std::vector<double> wds(cfg.trials), ns(cfg.trials);
        for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
          const Cell& c = cells[trial][r][b][m];
          wds[trial] = c.wd;
          ns[trial] = c.n_sel;
          records.push_back(TrialRecord{"-", rho, "budget", budget, mechs[m], trial,
                                        c.mask == 0 ? 1 : 0, nan_safe_count(c.n_sel), c.mask,
                                        nan, c.payments, nan, nan, nan, c.wd, nan, c.feasible});
        }
        const auto mw = mean_ci(wds);
        const auto mn = mean_ci(ns);
        csv.row(budget, mechs[m], mw.mean, mw.lo, mw.hi, mn.mean);
        if (rho == 0 && (m == 0 || m == 1 || m == 2)) {
          const std::string key = m == 0 ? "exo_cen_b" : m == 1 ? "exo_rand_b" : "exo_fin_b";
          out.metrics[key + std::to_string(b)] = mw.mean;
        }
      }
    }
    csv.close();
  }
  write_records_csv(cfg, out, "proc_exo_records.csv", records);

  CsvWriter owners(out_file(cfg, "proc_exo_owners.csv", out),
                   {"trial", "owner", "alpha", "beta", "w_raw"});
  for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
    for (std::size_t i = 0; i < cfg.n_owners; ++i) {
      const OwnerRow& o = owner_rows[trial][i];
      owners.row(trial, i, o.alpha, o.beta, o.w_raw);
    }
  }
  owners.close();
}

// --- proc-exo-dist: metric swap across statistical distances -----------------

inline void run_proc_exo_dist(const ExperimentConfig& cfg, unsigned workers, RunSummary& out) {
  const Family family = cfg.family;
  const std::vector<DistanceKind> kinds = {DistanceKind::wd, DistanceKind::kld, DistanceKind::jsd,
                                           DistanceKind::ks, DistanceKind::tvd};
  constexpr double kUndefinedPenalty = 1e6;

  struct Cell {
    double improvement{std::numeric_limits<double>::quiet_NaN()};
    double n_sel{std::numeric_limits<double>::quiet_NaN()};
    bool feasible{false};
  };
  // cells[trial][rho][kind][budget][mech CEN/FIN]
  using TrialCells = std::vector<std::vector<std::vector<std::vector<Cell>>>>;
  std::vector<TrialCells> cells(cfg.trials);

  parallel_for(cfg.trials, workers, [&](std::size_t trial) {
    const TrialData td = make_trial(cfg, family, trial);
    CoalitionTableConfig tcfg;
    tcfg.all_distances = true;
    tcfg.tasks = {TaskSpec::mean_estimation()};
    tcfg.histogram_bins = cfg.histogram_bins;
    const auto table = CoalitionTable::build(td.raw, td.target, tcfg);
    const std::size_t n = cfg.n_owners;

    double loss_max = 0.0;
    for (SubsetMask mask = 1; mask <= table.n_subsets(); ++mask) {
      loss_max = std::max(loss_max, table.at(mask).loss_p[0]);
    }
    auto improvement = [&](SubsetMask mask) {
      return 100.0 * (loss_max - table.at(mask).loss_p[0]) / loss_max;
    };

    // individual distances per kind, undefined mapped to a large penalty
    std::vector<std::vector<double>> owner_d(kinds.size(), std::vector<double>(n));
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto d = distance(td.raw[i], td.target, kinds[k], cfg.histogram_bins);
        owner_d[k][i] = d.value_or(kUndefinedPenalty);
      }
    }

    TrialCells tc(cfg.rho_values.size(),
                  std::vector<std::vector<std::vector<Cell>>>(
                      kinds.size(), std::vector<std::vector<Cell>>(
                                        cfg.budget_multiples.size(), std::vector<Cell>(2))));
    for (std::size_t r = 0; r < cfg.rho_values.size(); ++r) {
      const auto theta =
          couple_theta(cfg, family, trial, td.w_raw, cfg.theta_bar, cfg.rho_values[r]);
      for (std::size_t k = 0; k < kinds.size(); ++k) {
        for (std::size_t b = 0; b < cfg.budget_multiples.size(); ++b) {
          const double budget = cfg.budget_multiples[b] * cfg.theta_bar * static_cast<double>(n);
          auto theta_ok = [&](SubsetMask mask) { return subset_sum(theta, mask) <= budget; };
          const auto cen = solve_central(
              table,
              [&](SubsetMask mask) {
                const auto d = table.distance_at(mask, kinds[k]);
                return d.value_or(std::numeric_limits<double>::quiet_NaN());
              },
              theta_ok);
          if (cen.feasible) {
            tc[r][k][b][0] = Cell{improvement(cen.mask), double(subset_size(cen.mask)), true};
          }
          const auto inst = make_instance(td, owner_d[k], MechanismKind::exogenous, budget, 1.0,
                                          cfg.delta, Population::finite, cfg.theta_bar);
          const auto res = solve(inst, theta);
          if (res.feasible && res.selected_mask != 0) {
            tc[r][k][b][1] =
                Cell{improvement(res.selected_mask), double(res.n_selected), true};
          }
        }
      }
    }
    cells[trial] = std::move(tc);
  });

  CsvWriter csv(out_file(cfg, "proc_exo_dist.csv", out),
                {"rho", "distance", "budget", "mechanism", "mean_improvement_pct", "ci_lo",
                 "ci_hi", "mean_n_selected", "n_trials"});
  for (std::size_t r = 0; r < cfg.rho_values.size(); ++r) {
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      for (std::size_t b = 0; b < cfg.budget_multiples.size(); ++b) {
        const double budget = cfg.budget_multiples[b] * cfg.theta_bar * cfg.n_owners;
        for (std::size_t m = 0; m < 2; ++m) {
          std::vector<double> imp(cfg.trials), ns(cfg.trials);
          for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
            imp[trial] = cells[trial][r][k][b][m].improvement;
            ns[trial] = cells[trial][r][k][b][m].n_sel;
          }
          const auto mi = mean_ci(imp);
          const auto mn = mean_ci(ns);
          csv.row(cfg.rho_values[r], to_string(kinds[k]), budget, m == 0 ? "CEN" : "FIN",
                  mi.mean, mi.lo, mi.hi, mn.mean, mi.n);
        }
      }
    }
  }
  csv.close();
}

// --- proc-dp: unified valuation metric under a privacy-budget sweep ----------

inline void run_proc_dp(const ExperimentConfig& cfg, unsigned workers, RunSummary& out) {
  const Family family = cfg.family;
  const std::vector<ValuationVariant> variants = {
      ValuationVariant::dp_only, ValuationVariant::non_iid_only,
      ValuationVariant::exact_dp_gaussian, ValuationVariant::upper_bound_dp};
  const TaskSpec task = TaskSpec::mean_estimation();
  const double budget = 0.2 * cfg.theta_bar * static_cast<double>(cfg.n_owners);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  struct Cell {
    double loss{std::numeric_limits<double>::quiet_NaN()};
    double gap{std::numeric_limits<double>::quiet_NaN()};
    double wd{std::numeric_limits<double>::quiet_NaN()};
    double n_sel{std::numeric_limits<double>::quiet_NaN()};
    double payments{std::numeric_limits<double>::quiet_NaN()};
    SubsetMask mask{0};
    bool feasible{false};
  };
  // cells[trial][rho][eps][variant]
  using TrialCells = std::vector<std::vector<std::vector<Cell>>>;
  std::vector<TrialCells> cells(cfg.trials);

  parallel_for(cfg.trials, workers, [&](std::size_t trial) {
    const TrialData td = make_trial(cfg, family, trial);
    const auto unit_eps = draw_unit_epsilons(cfg, family, trial);
    const TargetLossEvaluator evaluator(td.target);
    const double loss_t = evaluator.loss(task, estimate_parameter(td.target, task));
    const std::size_t n = cfg.n_owners;

    TrialCells tc(cfg.rho_values.size(),
                  std::vector<std::vector<Cell>>(cfg.eps_bar_sweep.size(),
                                                 std::vector<Cell>(variants.size())));
    for (std::size_t e = 0; e < cfg.eps_bar_sweep.size(); ++e) {
      std::vector<double> eps(n);
      for (std::size_t i = 0; i < n; ++i) eps[i] = unit_eps[i] * cfg.eps_bar_sweep[e];
      const auto noisy = make_noisy(cfg, family, trial, td, eps);

      std::vector<std::vector<double>> w_eff(variants.size(), std::vector<double>(n));
      std::vector<bool> variant_ok(variants.size(), true);
      for (std::size_t v = 0; v < variants.size(); ++v) {
        for (std::size_t i = 0; i < n; ++i) {
          OwnerProfile o = td.owners[i];
          o.dp = make_dp_params(cfg, eps[i]);
          if (variants[v] == ValuationVariant::exact_dp_gaussian &&
              (family != Family::gaussian || cfg.dp_mechanism != NoiseMechanism::gaussian)) {
            variant_ok[v] = false;
            break;
          }
          w_eff[v][i] = effective_wd(o, variants[v], td.gauss_target);
        }
      }

      for (std::size_t r = 0; r < cfg.rho_values.size(); ++r) {
        const auto theta =
            couple_theta(cfg, family, trial, eps, cfg.theta_bar, cfg.rho_values[r]);
        for (std::size_t v = 0; v < variants.size(); ++v) {
          if (!variant_ok[v]) continue;
          const auto inst = make_instance(td, w_eff[v], MechanismKind::exogenous, budget, 1.0,
                                          cfg.delta, Population::finite, cfg.theta_bar);
          const auto res = solve(inst, theta);
          Cell& c = tc[r][e][v];
          c.feasible = res.feasible && res.selected_mask != 0;
          c.mask = res.selected_mask;
          c.payments = res.payments_total;
          if (c.feasible) {
            const auto score =
                score_selection(noisy, res.selected_mask, td.target, evaluator, task, loss_t);
            c.loss = score.loss_p;
            c.gap = score.gap;
            c.wd = score.wd;
            c.n_sel = static_cast<double>(res.n_selected);
          }
        }
      }
    }
    cells[trial] = std::move(tc);
  });

  CsvWriter csv(out_file(cfg, "proc_dp.csv", out),
                {"rho", "eps_bar", "variant", "mean_loss", "ci_lo", "ci_hi", "mean_gap",
                 "mean_wd", "mean_n_selected", "n_feasible"});
  std::vector<TrialRecord> records;
  for (std::size_t r = 0; r < cfg.rho_values.size(); ++r) {
    for (std::size_t e = 0; e < cfg.eps_bar_sweep.size(); ++e) {
      for (std::size_t v = 0; v < variants.size(); ++v) {
        std::vector<double> loss(cfg.trials), gap(cfg.trials), wd(cfg.trials), ns(cfg.trials);
        std::size_t feas = 0;
        for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
          const Cell& c = cells[trial][r][e][v];
          loss[trial] = c.loss;
          gap[trial] = c.gap;
          wd[trial] = c.wd;
          ns[trial] = c.n_sel;
          feas += c.feasible ? 1 : 0;
          records.push_back(TrialRecord{task.name(), cfg.rho_values[r], "eps_bar",
                                        cfg.eps_bar_sweep[e],
                                        std::string("FIN_") + to_string(variants[v]), trial,
                                        c.mask == 0 ? 1 : 0, nan_safe_count(c.n_sel), c.mask,
                                        nan, c.payments, nan, nan, nan, c.wd, c.gap, c.feasible});
        }
        const auto ml = mean_ci(loss);
        csv.row(cfg.rho_values[r], cfg.eps_bar_sweep[e], to_string(variants[v]), ml.mean, ml.lo,
                ml.hi, mean_ci(gap).mean, mean_ci(wd).mean, mean_ci(ns).mean, feas);
      }
    }
  }
  csv.close();
  write_records_csv(cfg, out, "proc_dp_records.csv", records);
}

// --- proc-endo: decision-dependent budgets for one task ----------------------

inline void run_proc_endo(const ExperimentConfig& cfg, unsigned workers, RunSummary& out) {
  const Family family = cfg.family;
  const TaskSpec task = TaskSpec::median_estimation();
  const std::vector<std::string> mechs = {"EXO", "ENDO", "JOINT"};
  const double nan = std::numeric_limits<double>::quiet_NaN();

  struct Cell {
    double v_bound{std::numeric_limits<double>::quiet_NaN()};
    double payments{std::numeric_limits<double>::quiet_NaN()};
    double omega_hat{std::numeric_limits<double>::quiet_NaN()};
    double omega{std::numeric_limits<double>::quiet_NaN()};
    double n_sel{std::numeric_limits<double>::quiet_NaN()};
    SubsetMask mask{0};
    int q0{0};
    bool feasible{false};
  };
  struct TrialOut {
    double b_ref{0.0};
    std::vector<std::vector<std::vector<Cell>>> cells;  // [rho][theta_bar][mech]
  };
  std::vector<TrialOut> results(cfg.trials);

  parallel_for(cfg.trials, workers, [&](std::size_t trial) {
    const TrialData td = make_trial(cfg, family, trial);
    CoalitionTableConfig tcfg;
    tcfg.tasks = {task};
    const auto table = CoalitionTable::build(td.raw, td.target, tcfg);
    const SubsetMask worst_mask = SubsetMask{1} << td.worst_owner;
    TrialOut to;
    to.b_ref = table.at(worst_mask).gap[0];
    to.cells.assign(cfg.rho_values.size(),
                    std::vector<std::vector<Cell>>(cfg.theta_bar_sweep.size(),
                                                   std::vector<Cell>(mechs.size())));

    for (std::size_t r = 0; r < cfg.rho_values.size(); ++r) {
      for (std::size_t s = 0; s < cfg.theta_bar_sweep.size(); ++s) {
        const double tb = cfg.theta_bar_sweep[s];
        const auto theta = couple_theta(cfg, family, trial, td.w_raw, tb, cfg.rho_values[r]);
        for (std::size_t m = 0; m < mechs.size(); ++m) {
          const MechanismKind kind = m == 0   ? MechanismKind::exogenous
                                     : m == 1 ? MechanismKind::endogenous
                                              : MechanismKind::joint;
          const auto inst = make_instance(td, td.w_raw, kind, to.b_ref, task.k_lipschitz,
                                          cfg.delta, cfg.population, tb);
          const auto res = solve(inst, theta);
          Cell& c = to.cells[r][s][m];
          c.feasible = res.feasible;
          c.mask = res.selected_mask;
          c.q0 = res.q[0];
          if (!res.feasible) continue;  // exogenous with no affordable subset
          c.v_bound = res.v_bound;
          c.payments = res.payments_total;
          c.n_sel = static_cast<double>(res.n_selected);
          if (res.selected_mask == 0) {
            c.omega_hat = to.b_ref;  // falls back to the reference data
            c.omega = to.b_ref;
          } else {
            c.omega_hat = res.v_bound + res.payments_total;
            c.omega = table.at(res.selected_mask).gap[0] + res.payments_total;
          }
        }
      }
    }
    results[trial] = std::move(to);
  });

  CsvWriter csv(out_file(cfg, "proc_endo.csv", out),
                {"rho", "theta_bar", "mechanism", "mean_v_bound", "mean_omega_hat", "oh_ci_lo",
                 "oh_ci_hi", "mean_omega", "o_ci_lo", "o_ci_hi", "mean_b_ref", "frac_q0",
                 "frac_omega_hat_le_bref", "frac_omega_le_bref", "mean_n_selected"});
  std::vector<TrialRecord> records;
  double qhat_viol = 0.0, omega_total = 0.0, omega_feasible = 0.0;
  for (std::size_t r = 0; r < cfg.rho_values.size(); ++r) {
    for (std::size_t s = 0; s < cfg.theta_bar_sweep.size(); ++s) {
      for (std::size_t m = 0; m < mechs.size(); ++m) {
        std::vector<double> vb(cfg.trials), oh(cfg.trials), om(cfg.trials), ns(cfg.trials),
            br(cfg.trials);
        double q0s = 0, oh_ok = 0, om_ok = 0, counted = 0;
        for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
          const auto& to = results[trial];
          const Cell& c = to.cells[r][s][m];
          vb[trial] = c.v_bound;
          oh[trial] = c.omega_hat;
          om[trial] = c.omega;
          ns[trial] = c.n_sel;
          br[trial] = to.b_ref;
          records.push_back(TrialRecord{task.name(), cfg.rho_values[r], "theta_bar",
                                        cfg.theta_bar_sweep[s], mechs[m], trial, c.q0, 0, c.mask,
                                        c.v_bound, c.payments, c.omega_hat, c.omega, to.b_ref,
                                        nan, nan, c.feasible});
          if (!c.feasible) continue;
          counted += 1;
          q0s += c.q0;
          oh_ok += c.omega_hat <= to.b_ref + kBudgetTol ? 1 : 0;
          om_ok += c.omega <= to.b_ref + kBudgetTol ? 1 : 0;
          if (m != 0) {  // proposed budget-feasible mechanisms only
            omega_total += 1;
            omega_feasible += c.omega <= to.b_ref + kBudgetTol ? 1 : 0;
            if (c.q0 == 0 && c.omega_hat > to.b_ref + kBudgetTol) qhat_viol += 1;
          }
        }
        const auto moh = mean_ci(oh);
        const auto mom = mean_ci(om);
        csv.row(cfg.rho_values[r], cfg.theta_bar_sweep[s], mechs[m], mean_ci(vb).mean, moh.mean,
                moh.lo, moh.hi, mom.mean, mom.lo, mom.hi, mean_ci(br).mean,
                counted > 0 ? q0s / counted : nan, counted > 0 ? oh_ok / counted : nan,
                counted > 0 ? om_ok / counted : nan, mean_ci(ns).mean);
      }
    }
  }
  csv.close();
  write_records_csv(cfg, out, "proc_endo_records.csv", records);
  out.metrics["bf_qhat_violations"] = qhat_viol;
  out.metrics["bf_omega_total"] = omega_total;
  out.metrics["bf_omega_feasible"] = omega_feasible;
}

// --- proc-joint: joint optimisation vs centralised benchmarks ----------------

inline void run_proc_joint(const ExperimentConfig& cfg, unsigned workers, RunSummary& out) {
  const Family family = cfg.family;
  const std::vector<TaskSpec> tasks = {TaskSpec::median_estimation(), TaskSpec::mean_estimation(),
                                       TaskSpec::quantile_estimation(0.9),
                                       TaskSpec::quantile_estimation(0.8)};
  const std::vector<std::string> mechs = {"FIN_W", "INF_W", "CEN_M", "CEN_W"};
  const double nan = std::numeric_limits<double>::quiet_NaN();

  struct Cell {
    double omega{std::numeric_limits<double>::quiet_NaN()};
    double omega_hat{std::numeric_limits<double>::quiet_NaN()};
    double v_bound{std::numeric_limits<double>::quiet_NaN()};
    double payments{std::numeric_limits<double>::quiet_NaN()};
    double n_sel{std::numeric_limits<double>::quiet_NaN()};
    SubsetMask mask{0};
    int q0{0};
  };
  struct TrialOut {
    std::vector<double> b_ref;                                        // per task
    std::vector<std::vector<std::vector<std::vector<Cell>>>> cells;  // [task][rho][tb][mech]
  };
  std::vector<TrialOut> results(cfg.trials);

  parallel_for(cfg.trials, workers, [&](std::size_t trial) {
    const TrialData td = make_trial(cfg, family, trial);
    CoalitionTableConfig tcfg;
    tcfg.tasks = tasks;
    const auto table = CoalitionTable::build(td.raw, td.target, tcfg);
    const SubsetMask worst_mask = SubsetMask{1} << td.worst_owner;

    TrialOut to;
    to.b_ref.resize(tasks.size());
    for (std::size_t t = 0; t < tasks.size(); ++t) to.b_ref[t] = table.at(worst_mask).gap[t];
    to.cells.assign(
        tasks.size(),
        std::vector<std::vector<std::vector<Cell>>>(
            cfg.rho_values.size(), std::vector<std::vector<Cell>>(
                                       cfg.theta_bar_sweep.size(), std::vector<Cell>(mechs.size()))));

    for (std::size_t r = 0; r < cfg.rho_values.size(); ++r) {
      for (std::size_t s = 0; s < cfg.theta_bar_sweep.size(); ++s) {
        const double tb = cfg.theta_bar_sweep[s];
        const auto theta = couple_theta(cfg, family, trial, td.w_raw, tb, cfg.rho_values[r]);
        const auto prior = PriorSpec::uniform(cfg.n_owners, tb);
        const auto psi = virtual_costs(prior, theta);
        for (std::size_t t = 0; t < tasks.size(); ++t) {
          const double b_ref = to.b_ref[t];
          const double k_lip = tasks[t].k_lipschitz;
          for (std::size_t m = 0; m < 2; ++m) {  // FIN_W / INF_W
            const auto inst = make_instance(
                td, td.w_raw, MechanismKind::joint, b_ref, k_lip, cfg.delta,
                m == 0 ? Population::finite : Population::infinite, tb);
            const auto res = solve(inst, theta);
            Cell& c = to.cells[t][r][s][m];
            c.mask = res.selected_mask;
            c.q0 = res.q[0];
            c.v_bound = res.v_bound;
            c.payments = res.payments_total;
            c.n_sel = static_cast<double>(res.n_selected);
            if (res.selected_mask == 0) {
              c.omega = b_ref;
              c.omega_hat = b_ref;
            } else {
              c.omega = table.at(res.selected_mask).gap[t] + res.payments_total;
              c.omega_hat = res.v_bound + res.payments_total;
            }
          }
          {  // CEN_M: full information on actual losses
            const auto cen = solve_central(
                table,
                [&](SubsetMask mask) { return table.at(mask).gap[t] + subset_sum(psi, mask); },
                [&](SubsetMask mask) {
                  return table.at(mask).gap[t] + subset_sum(psi, mask) <= b_ref;
                });
            Cell& c = to.cells[t][r][s][2];
            c.mask = cen.feasible ? cen.mask : 0;
            c.q0 = cen.feasible ? 0 : 1;
            c.payments = cen.feasible ? subset_sum(psi, cen.mask) : 0.0;
            c.n_sel = cen.feasible ? subset_size(cen.mask) : 0.0;
            c.omega = cen.feasible ? cen.objective : b_ref;
          }
          {  // CEN_W: full information on coalition distances
            const auto cen = solve_central(
                table,
                [&](SubsetMask mask) {
                  return k_lip * table.at(mask).wd + subset_sum(psi, mask);
                },
                [&](SubsetMask mask) {
                  return k_lip * table.at(mask).wd + subset_sum(psi, mask) <= b_ref;
                });
            Cell& c = to.cells[t][r][s][3];
            c.mask = cen.feasible ? cen.mask : 0;
            c.q0 = cen.feasible ? 0 : 1;
            c.payments = cen.feasible ? subset_sum(psi, cen.mask) : 0.0;
            c.n_sel = cen.feasible ? subset_size(cen.mask) : 0.0;
            c.omega =
                cen.feasible ? table.at(cen.mask).gap[t] + subset_sum(psi, cen.mask) : b_ref;
          }
        }
      }
    }
    results[trial] = std::move(to);
  });

  CsvWriter csv(out_file(cfg, "proc_joint.csv", out),
                {"task", "rho", "theta_bar", "mechanism", "mean_improvement_pct", "ci_lo",
                 "ci_hi", "mean_err_vs_cen_pct", "mean_omega", "frac_q0", "mean_n_selected"});
  std::vector<TrialRecord> records;
  double qhat_viol = 0.0, omega_total = 0.0, omega_feasible = 0.0;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    for (std::size_t r = 0; r < cfg.rho_values.size(); ++r) {
      for (std::size_t s = 0; s < cfg.theta_bar_sweep.size(); ++s) {
        for (std::size_t m = 0; m < mechs.size(); ++m) {
          std::vector<double> imp(cfg.trials), err(cfg.trials), omv(cfg.trials), ns(cfg.trials);
          double q0s = 0;
          for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
            const auto& to = results[trial];
            const Cell& c = to.cells[t][r][s][m];
            const double b_ref = to.b_ref[t];
            imp[trial] = 100.0 * (1.0 - c.omega / b_ref);
            err[trial] = 100.0 * (to.cells[t][r][s][2].omega - c.omega) / b_ref;
            omv[trial] = c.omega;
            ns[trial] = c.n_sel;
            q0s += c.q0;
            records.push_back(TrialRecord{tasks[t].name(), cfg.rho_values[r], "theta_bar",
                                          cfg.theta_bar_sweep[s], mechs[m], trial, c.q0,
                                          nan_safe_count(c.n_sel), c.mask, c.v_bound, c.payments,
                                          c.omega_hat, c.omega, b_ref, nan, nan, true});
            if (m < 2) {
              omega_total += 1;
              omega_feasible += c.omega <= b_ref + kBudgetTol ? 1 : 0;
              if (c.q0 == 0 && c.omega_hat > b_ref + kBudgetTol) qhat_viol += 1;
            }
          }
          const auto mi = mean_ci(imp);
          csv.row(tasks[t].name(), cfg.rho_values[r], cfg.theta_bar_sweep[s], mechs[m], mi.mean,
                  mi.lo, mi.hi, mean_ci(err).mean, mean_ci(omv).mean,
                  q0s / static_cast<double>(cfg.trials), mean_ci(ns).mean);
        }
      }
    }
  }
  csv.close();
  write_records_csv(cfg, out, "proc_joint_records.csv", records);
  out.metrics["bf_qhat_violations"] = qhat_viol;
  out.metrics["bf_omega_total"] = omega_total;
  out.metrics["bf_omega_feasible"] = omega_feasible;
}

// --- proc-risk: confidence-level adjustment -----------------------------------

inline void run_proc_risk(const ExperimentConfig& cfg, unsigned workers, RunSummary& out) {
  const Family family = cfg.family;
  const TaskSpec task = TaskSpec::median_estimation();
  const double tb = cfg.risk_theta_bar;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  struct Cell {
    double omega{std::numeric_limits<double>::quiet_NaN()};
    double omega_hat{std::numeric_limits<double>::quiet_NaN()};
    double payments{std::numeric_limits<double>::quiet_NaN()};
    double v_bound{std::numeric_limits<double>::quiet_NaN()};
    double n_sel{std::numeric_limits<double>::quiet_NaN()};
    SubsetMask mask{0};
    int q0{0};
  };
  struct TrialOut {
    double b_ref{0.0};
    std::vector<double> cen_omega;             // per rho
    std::vector<std::vector<Cell>> cells;      // [rho][delta]
  };
  std::vector<TrialOut> results(cfg.trials);

  parallel_for(cfg.trials, workers, [&](std::size_t trial) {
    const TrialData td = make_trial(cfg, family, trial);
    CoalitionTableConfig tcfg;
    tcfg.tasks = {task};
    const auto table = CoalitionTable::build(td.raw, td.target, tcfg);
    TrialOut to;
    to.b_ref = table.at(SubsetMask{1} << td.worst_owner).gap[0];
    to.cen_omega.assign(cfg.rho_values.size(), nan);
    to.cells.assign(cfg.rho_values.size(), std::vector<Cell>(cfg.delta_sweep.size()));

    for (std::size_t r = 0; r < cfg.rho_values.size(); ++r) {
      const auto theta = couple_theta(cfg, family, trial, td.w_raw, tb, cfg.rho_values[r]);
      const auto prior = PriorSpec::uniform(cfg.n_owners, tb);
      const auto psi = virtual_costs(prior, theta);
      const auto cen = solve_central(
          table,
          [&](SubsetMask mask) { return table.at(mask).gap[0] + subset_sum(psi, mask); },
          [&](SubsetMask mask) {
            return table.at(mask).gap[0] + subset_sum(psi, mask) <= to.b_ref;
          });
      to.cen_omega[r] = cen.feasible ? cen.objective : to.b_ref;

      for (std::size_t d = 0; d < cfg.delta_sweep.size(); ++d) {
        const auto inst = make_instance(td, td.w_raw, MechanismKind::joint, to.b_ref,
                                        task.k_lipschitz, cfg.delta_sweep[d], cfg.population, tb);
        const auto res = solve(inst, theta);
        Cell& c = to.cells[r][d];
        c.mask = res.selected_mask;
        c.q0 = res.q[0];
        c.v_bound = res.v_bound;
        c.payments = res.payments_total;
        c.n_sel = static_cast<double>(res.n_selected);
        if (res.selected_mask == 0) {
          c.omega = to.b_ref;
          c.omega_hat = to.b_ref;
        } else {
          c.omega = table.at(res.selected_mask).gap[0] + res.payments_total;
          c.omega_hat = res.v_bound + res.payments_total;
        }
      }
    }
    results[trial] = std::move(to);
  });

  CsvWriter csv(out_file(cfg, "proc_risk.csv", out),
                {"rho", "delta", "mean_omega", "o_ci_lo", "o_ci_hi", "mean_omega_hat",
                 "mean_cen_omega", "mean_b_ref", "mean_improvement_pct", "frac_omega_le_bref",
                 "frac_q0"});
  CsvWriter trace(out_file(cfg, "proc_risk_trace.csv", out),
                  {"rho", "delta", "omega", "omega_hat", "cen_omega", "b_ref"});
  std::vector<TrialRecord> records;
  for (std::size_t r = 0; r < cfg.rho_values.size(); ++r) {
    for (std::size_t d = 0; d < cfg.delta_sweep.size(); ++d) {
      std::vector<double> om(cfg.trials), oh(cfg.trials), cen(cfg.trials), br(cfg.trials),
          imp(cfg.trials), ns(cfg.trials);
      double q0s = 0, om_ok = 0;
      for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
        const auto& to = results[trial];
        const Cell& c = to.cells[r][d];
        om[trial] = c.omega;
        oh[trial] = c.omega_hat;
        cen[trial] = to.cen_omega[r];
        br[trial] = to.b_ref;
        imp[trial] = 100.0 * (1.0 - c.omega / to.b_ref);
        ns[trial] = c.n_sel;
        q0s += c.q0;
        om_ok += c.omega <= to.b_ref + kBudgetTol ? 1 : 0;
        records.push_back(TrialRecord{task.name(), cfg.rho_values[r], "delta",
                                      cfg.delta_sweep[d], "JOINT", trial, c.q0,
                                      nan_safe_count(c.n_sel), c.mask, c.v_bound, c.payments,
                                      c.omega_hat, c.omega, to.b_ref, nan, nan, true});
      }
      const auto mo = mean_ci(om);
      csv.row(cfg.rho_values[r], cfg.delta_sweep[d], mo.mean, mo.lo, mo.hi, mean_ci(oh).mean,
              mean_ci(cen).mean, mean_ci(br).mean, mean_ci(imp).mean,
              om_ok / static_cast<double>(cfg.trials), q0s / static_cast<double>(cfg.trials));
      trace.row(cfg.rho_values[r], cfg.delta_sweep[d], results[0].cells[r][d].omega,
                results[0].cells[r][d].omega_hat, results[0].cen_omega[r], results[0].b_ref);
    }
  }
  csv.close();
  trace.close();
  write_records_csv(cfg, out, "proc_risk_records.csv", records);
}

// --- proc-approx: the approximation waterfall ----------------------------------

inline double quantile_linear(std::vector<double> xs, double p) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const double pos = p * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return xs[lo] * (1.0 - frac) + xs[hi] * frac;
}

inline void run_proc_approx(const ExperimentConfig& cfg, unsigned workers, RunSummary& out) {
  const Family family = cfg.family;
  const std::vector<TaskSpec> tasks = {TaskSpec::median_estimation(), TaskSpec::mean_estimation(),
                                       TaskSpec::quantile_estimation(0.8)};
  const std::vector<ApproximationLevel> levels = {
      ApproximationLevel::shap,  ApproximationLevel::cen_ir, ApproximationLevel::cen_ic,
      ApproximationLevel::cen_w, ApproximationLevel::cen_dp, ApproximationLevel::fin,
      ApproximationLevel::inf};
  const double tb = cfg.approx_theta_bar;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  struct Cell {
    double omega{std::numeric_limits<double>::quiet_NaN()};
    double payments{std::numeric_limits<double>::quiet_NaN()};
    double gap{std::numeric_limits<double>::quiet_NaN()};
    double n_sel{0.0};
    SubsetMask mask{0};
    int q0{0};
  };
  struct TrialOut {
    std::vector<double> b_ref;                         // per task
    std::vector<std::vector<Cell>> cells;              // [task][level]
    std::vector<std::vector<double>> shap_abs;         // [task][owner]
    std::vector<std::vector<double>> shap_prop;        // [task][owner]
  };
  std::vector<TrialOut> results(cfg.trials);

  parallel_for(cfg.trials, workers, [&](std::size_t trial) {
    const TrialData td = make_trial(cfg, family, trial);
    const auto unit_eps = draw_unit_epsilons(cfg, family, trial);
    std::vector<double> eps(cfg.n_owners);
    for (std::size_t i = 0; i < cfg.n_owners; ++i) eps[i] = unit_eps[i] * cfg.eps_bar;
    const auto noisy = make_noisy(cfg, family, trial, td, eps);
    const auto theta = couple_theta(cfg, family, trial, eps, tb, 0);
    const auto prior = PriorSpec::uniform(cfg.n_owners, tb);
    const auto psi = virtual_costs(prior, theta);

    CoalitionTableConfig tcfg;
    tcfg.tasks = tasks;
    const auto raw_table = CoalitionTable::build(td.raw, td.target, tcfg);
    const auto dp_table = CoalitionTable::build(noisy, td.target, tcfg);
    const SubsetMask worst_mask = SubsetMask{1} << td.worst_owner;
    const SubsetMask full = raw_table.n_subsets();

    std::vector<double> w_dp(cfg.n_owners);  // unified upper-bound metric
    for (std::size_t i = 0; i < cfg.n_owners; ++i) {
      OwnerProfile o = td.owners[i];
      o.dp = make_dp_params(cfg, eps[i]);
      w_dp[i] = effective_wd(o, ValuationVariant::upper_bound_dp);
    }

    TrialOut to;
    to.b_ref.resize(tasks.size());
    to.cells.assign(tasks.size(), std::vector<Cell>(levels.size()));
    to.shap_abs.resize(tasks.size());
    to.shap_prop.resize(tasks.size());

    for (std::size_t t = 0; t < tasks.size(); ++t) {
      const double b_ref = raw_table.at(worst_mask).gap[t];
      to.b_ref[t] = b_ref;
      const double k_lip = tasks[t].k_lipschitz;
      const double loss_t = raw_table.at(full).loss_p[t];  // grand coalition equals the target

      {  // SHAP: cooperative-game payments, all data pooled
        double loss_max = 0.0;
        for (SubsetMask mask = 1; mask <= full; ++mask) {
          loss_max = std::max(loss_max, raw_table.at(mask).loss_p[t]);
        }
        const auto cg = shap_cg_benchmark(
            [&](SubsetMask owners) { return loss_max - raw_table.at(owners).loss_p[t]; },
            cfg.n_owners, loss_t);
        double paid = 0.0;
        for (double s : cg.owner_shares) paid += s;
        Cell& c = to.cells[t][0];
        c.omega = paid;  // gap is zero with the full dataset
        c.payments = paid;
        c.gap = 0.0;
        c.mask = full;
        c.n_sel = static_cast<double>(cfg.n_owners);
        to.shap_abs[t] = cg.owner_shares;
        to.shap_prop[t] = proportions(cg.owner_shares);
      }

      auto central_level = [&](std::size_t level_idx,
                               const std::function<double(SubsetMask)>& select_metric,
                               const std::function<double(SubsetMask)>& pay,
                               const CoalitionTable& eval_table) {
        const auto cen = solve_central(raw_table, select_metric, [&](SubsetMask mask) {
          return select_metric(mask) <= b_ref;
        });
        Cell& c = to.cells[t][level_idx];
        if (!cen.feasible) {
          c.omega = b_ref;
          c.q0 = 1;
          return;
        }
        c.mask = cen.mask;
        c.payments = pay(cen.mask);
        c.gap = eval_table.at(cen.mask).gap[t];
        c.omega = c.gap + c.payments;
        c.n_sel = static_cast<double>(subset_size(cen.mask));
      };

      auto theta_sum = [&](SubsetMask mask) { return subset_sum(theta, mask); };
      auto psi_sum = [&](SubsetMask mask) { return subset_sum(psi, mask); };

      central_level(
          1, [&](SubsetMask m) { return raw_table.at(m).gap[t] + theta_sum(m); }, theta_sum,
          raw_table);
      central_level(
          2, [&](SubsetMask m) { return raw_table.at(m).gap[t] + psi_sum(m); }, psi_sum,
          raw_table);
      central_level(
          3, [&](SubsetMask m) { return k_lip * raw_table.at(m).wd + psi_sum(m); }, psi_sum,
          raw_table);
      central_level(
          4, [&](SubsetMask m) { return k_lip * dp_table.at(m).wd + psi_sum(m); }, psi_sum,
          dp_table);

      for (std::size_t m = 0; m < 2; ++m) {  // FIN / INF joint mechanisms
        const auto inst =
            make_instance(td, w_dp, MechanismKind::joint, b_ref, k_lip, cfg.delta,
                          m == 0 ? Population::finite : Population::infinite, tb);
        const auto res = solve(inst, theta);
        Cell& c = to.cells[t][5 + m];
        c.mask = res.selected_mask;
        c.q0 = res.q[0];
        c.payments = res.payments_total;
        c.n_sel = static_cast<double>(res.n_selected);
        if (res.selected_mask == 0) {
          c.omega = b_ref;
        } else {
          c.gap = dp_table.at(res.selected_mask).gap[t];
          c.omega = c.gap + res.payments_total;
        }
      }
    }
    results[trial] = std::move(to);
  });

  CsvWriter csv(out_file(cfg, "proc_approx.csv", out),
                {"task", "level", "mean_omega", "ci_lo", "ci_hi", "min", "q1", "median", "q3",
                 "max", "frac_fallback"});
  std::vector<TrialRecord> records;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    for (std::size_t l = 0; l < levels.size(); ++l) {
      std::vector<double> om(cfg.trials);
      double q0s = 0;
      for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
        const Cell& c = results[trial].cells[t][l];
        om[trial] = c.omega;
        q0s += c.q0;
        records.push_back(TrialRecord{tasks[t].name(), 0, "level", static_cast<double>(l),
                                      to_string(levels[l]), trial, c.q0,
                                      static_cast<std::size_t>(c.n_sel), c.mask, nan, c.payments,
                                      nan, c.omega, results[trial].b_ref[t], nan, c.gap, true});
      }
      const auto mo = mean_ci(om);
      csv.row(tasks[t].name(), to_string(levels[l]), mo.mean, mo.lo, mo.hi,
              quantile_linear(om, 0.0), quantile_linear(om, 0.25), quantile_linear(om, 0.5),
              quantile_linear(om, 0.75), quantile_linear(om, 1.0),
              q0s / static_cast<double>(cfg.trials));
    }
  }
  csv.close();
  write_records_csv(cfg, out, "proc_approx_records.csv", records);

  CsvWriter shap(out_file(cfg, "proc_approx_shapley.csv", out),
                 {"task", "trial", "owner", "share_abs", "share_prop"});
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
      for (std::size_t i = 0; i < cfg.n_owners; ++i) {
        shap.row(tasks[t].name(), trial, i, results[trial].shap_abs[t][i],
                 results[trial].shap_prop[t][i]);
      }
    }
  }
  shap.close();
}

}  // namespace detail
}  // namespace wdm
