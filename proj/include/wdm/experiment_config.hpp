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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wdm/distributions.hpp"
#include "wdm/io.hpp"
#include "wdm/valuation.hpp"

namespace wdm {

enum class ExperimentId {
  val_lipschitz,
  val_corr,
  val_shapley,
  val_hoeffding,
  proc_exo,
  proc_exo_dist,
  proc_dp,
  proc_endo,
  proc_joint,
  proc_risk,
  proc_approx,
};

inline const char* to_string(ExperimentId id) {
  switch (id) {
    case ExperimentId::val_lipschitz: return "val-lipschitz";
    case ExperimentId::val_corr: return "val-corr";
    case ExperimentId::val_shapley: return "val-shapley";
    case ExperimentId::val_hoeffding: return "val-hoeffding";
    case ExperimentId::proc_exo: return "proc-exo";
    case ExperimentId::proc_exo_dist: return "proc-exo-dist";
    case ExperimentId::proc_dp: return "proc-dp";
    case ExperimentId::proc_endo: return "proc-endo";
    case ExperimentId::proc_joint: return "proc-joint";
    case ExperimentId::proc_risk: return "proc-risk";
    case ExperimentId::proc_approx: return "proc-approx";
  }
  return "?";
}

inline std::optional<ExperimentId> parse_experiment_id(const std::string& s) {
  for (ExperimentId id :
       {ExperimentId::val_lipschitz, ExperimentId::val_corr, ExperimentId::val_shapley,
        ExperimentId::val_hoeffding, ExperimentId::proc_exo, ExperimentId::proc_exo_dist,
        ExperimentId::proc_dp, ExperimentId::proc_endo, ExperimentId::proc_joint,
        ExperimentId::proc_risk, ExperimentId::proc_approx}) {
    if (s == to_string(id)) return id;
  }
  return std::nullopt;
}

// All knobs of the experiment driver, with defaults mirroring the synthetic
// case-study setup: 8 owners, 50 trials, locations U(10,16), scales U(1,3),
// 10,000 draws per distribution, confidence 0.95.
struct ExperimentConfig {
  ExperimentId experiment{ExperimentId::val_corr};

  std::size_t trials{50};
  std::size_t n_owners{8};
  std::size_t sample_size{10000};
  std::uint64_t seed{20260809};
  unsigned workers{0};  // 0 = hardware concurrency
  std::string out_dir{"out"};

  Family family{Family::gaussian};
  bool all_families{false};
  double alpha_lo{10.0}, alpha_hi{16.0};
  double beta_lo{1.0}, beta_hi{3.0};

  double theta_bar{1.0};
  std::vector<double> theta_bar_sweep{0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2,
                                      1.4, 1.6, 1.8, 2.0, 2.2, 2.4};
  std::vector<double> budget_multiples{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

  double eps_bar{5.0};
  std::vector<double> eps_bar_sweep{0.1, 0.316, 1.0, 3.16, 10.0, 31.6, 100.0};

  double delta{0.95};
  std::vector<double> delta_sweep{0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99};

  std::vector<int> rho_values{-1, 0, 1};

  Population population{Population::finite};

  NoiseMechanism dp_mechanism{NoiseMechanism::gaussian};
  double dp_delta{1e-15};
  double dp_sensitivity{1.0};

  std::size_t histogram_bins{64};
  double risk_theta_bar{1.4};       // proc-risk reserve-price cap
  double approx_theta_bar{0.8};     // proc-approx reserve-price cap

  void validate() const {
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (n_owners < 2 || n_owners > 16) throw ConfigError("owners must be in 2..16");
    if (sample_size < 2) throw ConfigError("sample_size must be >= 2");
    if (!(alpha_lo <= alpha_hi) || !(beta_lo > 0.0) || !(beta_lo <= beta_hi)) {
      throw ConfigError("invalid alpha/beta ranges");
    }
    if (theta_bar < 0.0) throw ConfigError("theta_bar must be >= 0");
    if (theta_bar_sweep.empty() || budget_multiples.empty() || eps_bar_sweep.empty() ||
        delta_sweep.empty() || rho_values.empty()) {
      throw ConfigError("sweeps must be nonempty");
    }
    for (double m : budget_multiples) {
      if (!(m > 0.0)) throw ConfigError("budget multiples must be positive");
    }
    for (double e : eps_bar_sweep) {
      if (!(e > 0.0)) throw ConfigError("eps_bar sweep values must be positive");
    }
    for (double d : delta_sweep) {
      if (!(d >= 0.0 && d < 1.0)) throw ConfigError("delta values must lie in [0,1)");
    }
    for (int r : rho_values) {
      if (r != -1 && r != 0 && r != 1) throw ConfigError("rho must be -1, 0 or +1");
    }
    if (!(delta >= 0.0 && delta < 1.0)) throw ConfigError("delta must lie in [0,1)");
    if (!(eps_bar > 0.0)) throw ConfigError("eps_bar must be positive");
    if (!(dp_delta > 0.0 && dp_delta < 1.0)) throw ConfigError("dp_delta must lie in (0,1)");
    if (!(dp_sensitivity > 0.0)) throw ConfigError("dp_sensitivity must be positive");
    if (histogram_bins < 2) throw ConfigError("hist_bins must be >= 2");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value for '" + key + "': " + v);
  }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long u = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return u;
  } catch (const std::exception&) {
    throw ConfigError("bad integer value for '" + key + "': " + v);
  }
}

inline std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_double(key, item));
  }
  if (out.empty()) throw ConfigError("empty list for '" + key + "'");
  return out;
}

}  // namespace detail

inline void apply_config_value(ExperimentConfig& cfg, const std::string& key,
                               const std::string& value) {
  using detail::parse_double;
  using detail::parse_double_list;
  using detail::parse_u64;
  if (key == "experiment") {
    const auto id = parse_experiment_id(value);
    if (!id) throw ConfigError("unknown experiment: " + value);
    cfg.experiment = *id;
  } else if (key == "trials") {
    cfg.trials = static_cast<std::size_t>(parse_u64(key, value));
  } else if (key == "owners" || key == "n_owners") {
    cfg.n_owners = static_cast<std::size_t>(parse_u64(key, value));
  } else if (key == "sample_size") {
    cfg.sample_size = static_cast<std::size_t>(parse_u64(key, value));
  } else if (key == "seed") {
    cfg.seed = parse_u64(key, value);
  } else if (key == "workers") {
    cfg.workers = static_cast<unsigned>(parse_u64(key, value));
  } else if (key == "out") {
    cfg.out_dir = value;
  } else if (key == "family") {
    if (value == "all") {
      cfg.all_families = true;
    } else if (value == "gaussian") {
      cfg.family = Family::gaussian;
      cfg.all_families = false;
    } else if (value == "uniform") {
      cfg.family = Family::uniform;
      cfg.all_families = false;
    } else if (value == "exponential") {
      cfg.family = Family::exponential;
      cfg.all_families = false;
    } else {
      throw ConfigError("unknown family: " + value);
    }
  } else if (key == "alpha_lo") {
    cfg.alpha_lo = parse_double(key, value);
  } else if (key == "alpha_hi") {
    cfg.alpha_hi = parse_double(key, value);
  } else if (key == "beta_lo") {
    cfg.beta_lo = parse_double(key, value);
  } else if (key == "beta_hi") {
    cfg.beta_hi = parse_double(key, value);
  } else if (key == "theta_bar") {
    cfg.theta_bar = parse_double(key, value);
  } else if (key == "theta_bar_sweep") {
    cfg.theta_bar_sweep = parse_double_list(key, value);
  } else if (key == "budget_multiples") {
    cfg.budget_multiples = parse_double_list(key, value);
  } else if (key == "eps_bar") {
    cfg.eps_bar = parse_double(key, value);
  } else if (key == "eps_bar_sweep") {
    cfg.eps_bar_sweep = parse_double_list(key, value);
  } else if (key == "delta") {
    cfg.delta = parse_double(key, value);
  } else if (key == "delta_sweep") {
    cfg.delta_sweep = parse_double_list(key, value);
  } else if (key == "rho") {
    if (value == "all") {
      cfg.rho_values = {-1, 0, 1};
    } else {
      const double r = parse_double(key, value);
      if (r != -1.0 && r != 0.0 && r != 1.0) throw ConfigError("rho must be -1, 0, 1 or all");
      cfg.rho_values = {static_cast<int>(r)};
    }
  } else if (key == "population") {
    if (value == "finite") {
      cfg.population = Population::finite;
    } else if (value == "infinite") {
      cfg.population = Population::infinite;
    } else {
      throw ConfigError("population must be finite or infinite");
    }
  } else if (key == "dp_mechanism") {
    if (value == "laplace") {
      cfg.dp_mechanism = NoiseMechanism::laplace;
    } else if (value == "gaussian") {
      cfg.dp_mechanism = NoiseMechanism::gaussian;
    } else {
      throw ConfigError("dp_mechanism must be laplace or gaussian");
    }
  } else if (key == "dp_delta") {
    cfg.dp_delta = parse_double(key, value);
  } else if (key == "dp_sensitivity") {
    cfg.dp_sensitivity = parse_double(key, value);
  } else if (key == "hist_bins") {
    cfg.histogram_bins = static_cast<std::size_t>(parse_u64(key, value));
  } else if (key == "risk_theta_bar") {
    cfg.risk_theta_bar = parse_double(key, value);
  } else if (key == "approx_theta_bar") {
    cfg.approx_theta_bar = parse_double(key, value);
  } else {
    throw ConfigError("unknown config key: " + key);
  }
}

// Flat key/value text: one `key = value` per line, `#` comments, blank lines
// allowed; list values are comma-separated. Unknown keys are errors.
inline void load_config_file(ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + " is not 'key = value'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + " is not 'key = value'");
    }
    apply_config_value(cfg, key, value);
  }
}

}  // namespace wdm
