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

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wdm/harness.hpp"
#include "wdm/misocp.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

struct CliOverrides {
  std::string config_path;
  std::string out_dir;
  std::string family;
  std::string rho;
  std::string population;
  std::uint64_t seed{0};
  std::size_t trials{0};
  unsigned workers{0};
  double delta{0.0};

  CLI::Option* opt_out{nullptr};
  CLI::Option* opt_family{nullptr};
  CLI::Option* opt_rho{nullptr};
  CLI::Option* opt_population{nullptr};
  CLI::Option* opt_seed{nullptr};
  CLI::Option* opt_trials{nullptr};
  CLI::Option* opt_workers{nullptr};
  CLI::Option* opt_delta{nullptr};
};

void add_common_options(CLI::App* cmd, CliOverrides& o) {
  cmd->add_option("--config", o.config_path, "flat key = value config file");
  o.opt_out = cmd->add_option("--out", o.out_dir, "output directory");
  o.opt_seed = cmd->add_option("--seed", o.seed, "master seed");
  o.opt_trials = cmd->add_option("--trials", o.trials, "number of trials");
  o.opt_workers = cmd->add_option("--workers", o.workers, "worker threads (0 = hardware)");
  o.opt_family =
      cmd->add_option("--family", o.family, "gaussian | uniform | exponential | all");
  o.opt_rho = cmd->add_option("--rho", o.rho, "-1 | 0 | 1 | all");
  o.opt_delta = cmd->add_option("--delta", o.delta, "confidence level in [0,1)");
  o.opt_population = cmd->add_option("--population", o.population, "finite | infinite");
}

wdm::ExperimentConfig build_config(wdm::ExperimentId id, const CliOverrides& o) {
  wdm::ExperimentConfig cfg;
  cfg.experiment = id;
  cfg.out_dir = std::string("out/") + wdm::to_string(id);
  if (!o.config_path.empty()) wdm::load_config_file(cfg, o.config_path);
  cfg.experiment = id;  // the subcommand is authoritative
  if (o.opt_out->count() > 0) cfg.out_dir = o.out_dir;
  if (o.opt_seed->count() > 0) cfg.seed = o.seed;
  if (o.opt_trials->count() > 0) cfg.trials = o.trials;
  if (o.opt_workers->count() > 0) cfg.workers = o.workers;
  if (o.opt_family->count() > 0) wdm::apply_config_value(cfg, "family", o.family);
  if (o.opt_rho->count() > 0) wdm::apply_config_value(cfg, "rho", o.rho);
  if (o.opt_delta->count() > 0) cfg.delta = o.delta;
  if (o.opt_population->count() > 0) wdm::apply_config_value(cfg, "population", o.population);
  return cfg;
}

// Builds a small market from explicit vectors and writes the cone-program
// dump, for cross-checking against external solvers.
int run_misocp_dump(const std::vector<double>& w, const std::vector<double>& theta,
                    double theta_bar, double b_ref, double k, double delta,
                    const std::string& population, const std::string& out_path) {
  if (w.empty() || w.size() != theta.size()) {
    throw wdm::ConfigError("misocp-dump: --w and --theta must be nonempty and equal length");
  }
  wdm::MarketInstance inst;
  for (std::size_t i = 0; i < w.size(); ++i) {
    inst.owners.push_back(
        wdm::OwnerProfile{i, wdm::DistributionSpec(wdm::Family::gaussian, 0.0, 1.0), w[i],
                          wdm::DpParams{}, theta[i], w[i]});
  }
  inst.prior = wdm::PriorSpec::uniform(w.size(), theta_bar);
  inst.mechanism = wdm::MechanismKind::joint;
  inst.budget = b_ref;
  inst.k_lipschitz = k;
  inst.hoeffding = wdm::HoeffdingParams{delta, wdm::Population::finite, w.size()};
  wdm::Population pop;
  if (population == "finite") {
    pop = wdm::Population::finite;
  } else if (population == "infinite") {
    pop = wdm::Population::infinite;
  } else {
    throw wdm::ConfigError("misocp-dump: population must be finite or infinite");
  }
  const auto problem = wdm::build_misocp(inst, theta, pop);
  if (out_path.empty() || out_path == "-") {
    std::fputs(problem.dump().c_str(), stdout);
  } else {
    problem.write(out_path);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wdm: Wasserstein data-market valuation and procurement simulator"};
  app.require_subcommand(1);

  const std::vector<wdm::ExperimentId> ids = {
      wdm::ExperimentId::val_lipschitz, wdm::ExperimentId::val_corr,
      wdm::ExperimentId::val_shapley,   wdm::ExperimentId::val_hoeffding,
      wdm::ExperimentId::proc_exo,      wdm::ExperimentId::proc_exo_dist,
      wdm::ExperimentId::proc_dp,       wdm::ExperimentId::proc_endo,
      wdm::ExperimentId::proc_joint,    wdm::ExperimentId::proc_risk,
      wdm::ExperimentId::proc_approx};

  std::vector<CliOverrides> overrides(ids.size());
  std::vector<CLI::App*> cmds(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    cmds[i] = app.add_subcommand(wdm::to_string(ids[i]), "run this experiment");
    add_common_options(cmds[i], overrides[i]);
  }

  // misocp-dump subcommand
  std::vector<double> dump_w, dump_theta;
  double dump_theta_bar = 1.0, dump_bref = 1.0, dump_k = 1.0, dump_delta = 0.95;
  std::string dump_population = "finite", dump_out = "-";
  CLI::App* dump_cmd = app.add_subcommand("misocp-dump", "emit the cone-program text dump");
  dump_cmd->add_option("--w", dump_w, "individual distances")->required()->delimiter(',');
  dump_cmd->add_option("--theta", dump_theta, "realized reserve prices")
      ->required()
      ->delimiter(',');
  dump_cmd->add_option("--theta-bar", dump_theta_bar, "uniform prior upper bound");
  dump_cmd->add_option("--bref", dump_bref, "reference budget");
  dump_cmd->add_option("--k", dump_k, "Lipschitz constant");
  dump_cmd->add_option("--delta", dump_delta, "confidence level");
  dump_cmd->add_option("--population", dump_population, "finite | infinite");
  dump_cmd->add_option("--out", dump_out, "output path ('-' for stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (dump_cmd->parsed()) {
      return run_misocp_dump(dump_w, dump_theta, dump_theta_bar, dump_bref, dump_k, dump_delta,
                             dump_population, dump_out);
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!cmds[i]->parsed()) continue;
      const auto cfg = build_config(ids[i], overrides[i]);
      const auto summary = wdm::run(cfg);
      std::printf("%s: wrote %zu files to %s in %.2fs\n", wdm::to_string(cfg.experiment),
                  summary.files.size(), cfg.out_dir.c_str(), summary.wall_seconds);
      return kExitOk;
    }
    std::fprintf(stderr, "no subcommand selected\n");
    return kExitConfig;
  } catch (const wdm::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const wdm::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
