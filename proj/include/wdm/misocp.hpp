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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wdm/mechanisms.hpp"

namespace wdm {

// Explicit mixed-integer second-order-cone form of the point-wise
// procurement problem, kept as a verifiable artifact: the structure can be
// dumped as plain text for off-the-shelf solvers and checked for exactness
// against the closed-form objective.
//
// Finite population: variables q in {0,1}^{N+1}, r in {0,1}^{N^2-N},
// s >= 0, z in R_+^N; objective q0*B + s + sum q_i psi_i with the cone row
// C_fin*||W r|| <= sum z_i and big-M linearisation of z_i = q_i * s.
// Infinite population: no r block; cone ||W q|| <= sum z_i and the constant
// C_inf moves onto s in the objective.
struct MisocpProblem {
  enum class VarKind { binary, continuous };

  struct Variable {
    std::string name;
    VarKind kind{VarKind::binary};
    double lo{0.0};
    double hi{1.0};
  };

  struct Term {
    std::size_t var{0};
    double coef{0.0};
  };

  // lo <= sum coef*var <= hi (one side may be infinite)
  struct LinearRow {
    std::string tag;
    double lo{-std::numeric_limits<double>::infinity()};
    double hi{std::numeric_limits<double>::infinity()};
    std::vector<Term> terms;
  };

  // ||norm_terms||_2 <= sum rhs_terms
  struct ConeRow {
    std::string tag;
    std::vector<Term> norm_terms;
    std::vector<Term> rhs_terms;
  };

  std::vector<Variable> vars;
  std::vector<Term> objective;
  std::vector<LinearRow> rows;
  std::vector<ConeRow> cones;
  double big_m{0.0};
  Population population{Population::finite};
  std::size_t n_owners{0};

  // Variable index map. Owners are 1-based in names to match q_0..q_N.
  std::size_t q_index(std::size_t i) const { return i; }  // i in 0..N
  std::size_t r_index(std::size_t i, std::size_t j) const {
    if (population != Population::finite) {
      throw std::invalid_argument("MisocpProblem: infinite form has no r variables");
    }
    if (i == j || i >= n_owners || j >= n_owners) {
      throw std::invalid_argument("MisocpProblem: bad r index");
    }
    return n_owners + 1 + i * (n_owners - 1) + (j < i ? j : j - 1);
  }
  std::size_t s_index() const {
    return population == Population::finite ? n_owners + 1 + n_owners * (n_owners - 1)
                                            : n_owners + 1;
  }
  std::size_t z_index(std::size_t i) const { return s_index() + 1 + i; }

  std::size_t n_binary() const {
    std::size_t c = 0;
    for (const auto& v : vars) c += v.kind == VarKind::binary ? 1 : 0;
    return c;
  }
  std::size_t n_continuous() const { return vars.size() - n_binary(); }

  std::string dump() const;
  void write(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("MisocpProblem::write: cannot open " + path.string());
    out << dump();
    if (!out) throw std::runtime_error("MisocpProblem::write: write failed " + path.string());
  }
};

inline MisocpProblem build_misocp(const MarketInstance& inst, std::span<const double> theta,
                                  Population population) {
  inst.validate();
  if (inst.mechanism == MechanismKind::exogenous) {
    throw std::invalid_argument("build_misocp: needs a joint or endogenous instance");
  }
  const std::size_t n = inst.owners.size();
  if (theta.size() != n) throw std::invalid_argument("build_misocp: theta size mismatch");

  std::vector<double> psi(n);
  std::vector<double> w(n);
  double w_max = 0.0;
  double w_norm2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    psi[i] = virtual_cost(theta[i], inst.prior, i);
    w[i] = inst.owners[i].w_effective;
    w_max = std::max(w_max, w[i]);
    w_norm2 += w[i] * w[i];
  }

  const double log_term = std::log(2.0 / (1.0 - inst.hoeffding.delta));
  const double k_lip = inst.k_lipschitz;
  const double c_sing = k_lip * std::sqrt(log_term / 2.0);

  MisocpProblem p;
  p.population = population;
  p.n_owners = n;
  p.big_m = population == Population::finite
                ? std::min(inst.budget, c_sing * w_max)
                : std::sqrt(w_norm2) * (1.0 + 1e-9);  // strictly above ||W||

  auto num = [](std::size_t v) { return std::to_string(v); };

  // q_0 .. q_N
  for (std::size_t i = 0; i <= n; ++i) {
    p.vars.push_back({"q" + num(i), MisocpProblem::VarKind::binary, 0.0, 1.0});
  }
  // r_{i,j}, finite form only
  if (population == Population::finite) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        p.vars.push_back({"r_" + num(i + 1) + "_" + num(j + 1),
                          MisocpProblem::VarKind::binary, 0.0, 1.0});
      }
    }
  }
  const double inf = std::numeric_limits<double>::infinity();
  p.vars.push_back({"s", MisocpProblem::VarKind::continuous, 0.0, inf});
  for (std::size_t i = 0; i < n; ++i) {
    p.vars.push_back({"z" + num(i + 1), MisocpProblem::VarKind::continuous, 0.0, inf});
  }

  // Objective.
  p.objective.push_back({p.q_index(0), inst.budget});
  const double c_fin =
      n >= 2 ? k_lip * std::sqrt(log_term / (2.0 * (static_cast<double>(n) - 1.0))) : 0.0;
  if (population == Population::finite) {
    p.objective.push_back({p.s_index(), 1.0});
  } else {
    p.objective.push_back({p.s_index(), c_sing});
  }
  for (std::size_t i = 0; i < n; ++i) {
    p.objective.push_back({p.q_index(i + 1), psi[i]});
  }

  // Cone row.
  MisocpProblem::ConeRow cone;
  cone.tag = "soc";
  if (population == Population::finite) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        cone.norm_terms.push_back({p.r_index(i, j), c_fin * w[i]});
      }
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      cone.norm_terms.push_back({p.q_index(i + 1), w[i]});
    }
  }
  for (std::size_t i = 0; i < n; ++i) cone.rhs_terms.push_back({p.z_index(i), 1.0});
  p.cones.push_back(std::move(cone));

  auto idx = [&num](std::size_t i) { return num(i + 1); };

  // r linearisation, finite form only.
  if (population == Population::finite) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const std::size_t r = p.r_index(i, j);
        p.rows.push_back({"r_le_qi[" + idx(i) + "," + idx(j) + "]", -inf, 0.0,
                          {{r, 1.0}, {p.q_index(i + 1), -1.0}}});
        p.rows.push_back({"r_le_1mqj[" + idx(i) + "," + idx(j) + "]", -inf, 1.0,
                          {{r, 1.0}, {p.q_index(j + 1), 1.0}}});
        p.rows.push_back({"r_ge_qi_m_qj[" + idx(i) + "," + idx(j) + "]", 0.0, inf,
                          {{r, 1.0}, {p.q_index(i + 1), -1.0}, {p.q_index(j + 1), 1.0}}});
      }
    }
  }

  // z_i <= M q_i and 0 <= s - z_i <= M (1 - q_i).
  for (std::size_t i = 0; i < n; ++i) {
    p.rows.push_back(
        {"z_le_Mq[" + idx(i) + "]", -inf, 0.0, {{p.z_index(i), 1.0}, {p.q_index(i + 1), -p.big_m}}});
  }
  for (std::size_t i = 0; i < n; ++i) {
    p.rows.push_back(
        {"s_ge_z[" + idx(i) + "]", 0.0, inf, {{p.s_index(), 1.0}, {p.z_index(i), -1.0}}});
    p.rows.push_back({"s_le_z_plus_M[" + idx(i) + "]", -inf, p.big_m,
                      {{p.s_index(), 1.0}, {p.z_index(i), -1.0}, {p.q_index(i + 1), p.big_m}}});
  }

  // Cardinality: 1 <= sum_{i=0..N} q_i <= N.
  MisocpProblem::LinearRow card;
  card.tag = "cardinality";
  card.lo = 1.0;
  card.hi = static_cast<double>(n);
  for (std::size_t i = 0; i <= n; ++i) card.terms.push_back({p.q_index(i), 1.0});
  p.rows.push_back(std::move(card));

  return p;
}

// Derives the implied minimal auxiliaries for a fixed binary assignment
// (r_{i,j} = q_i(1-q_j); s from the cone row at equality; z_i = q_i s) and
// reports whether the MISOCP objective matches the point-wise objective.
// Row feasibility is deliberately not part of the contract: big-M rows may
// cut off non-optimal assignments when the budget-capped M is small.
inline bool check_reformulation_exactness(const MisocpProblem& problem, std::span<const int> q,
                                          const MarketInstance& inst,
                                          std::span<const double> theta, double tol = 1e-9) {
  const std::size_t n = problem.n_owners;
  if (q.size() != n + 1) {
    throw std::invalid_argument("check_reformulation_exactness: q must have N+1 entries");
  }

  std::vector<double> x(problem.vars.size(), 0.0);
  int k = 0;
  for (std::size_t i = 0; i <= n; ++i) x[problem.q_index(i)] = q[i];
  for (std::size_t i = 0; i < n; ++i) k += q[i + 1] != 0 ? 1 : 0;
  if (problem.population == Population::finite) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        x[problem.r_index(i, j)] = q[i + 1] != 0 && q[j + 1] == 0 ? 1.0 : 0.0;
      }
    }
  }
  double norm2 = 0.0;
  for (const auto& t : problem.cones.front().norm_terms) {
    const double v = t.coef * x[t.var];
    norm2 += v * v;
  }
  const double s = k > 0 ? std::sqrt(norm2) / k : 0.0;
  x[problem.s_index()] = s;
  for (std::size_t i = 0; i < n; ++i) x[problem.z_index(i)] = q[i + 1] != 0 ? s : 0.0;

  double misocp_obj = 0.0;
  for (const auto& t : problem.objective) misocp_obj += t.coef * x[t.var];

  MarketInstance ref = inst;
  ref.hoeffding.population = problem.population;
  const double pointwise = pointwise_objective(q, ref, theta);
  return std::abs(misocp_obj - pointwise) <= tol;
}

inline std::string MisocpProblem::dump() const {
  auto fmt = [](double v) {
    if (v == std::numeric_limits<double>::infinity()) return std::string("inf");
    if (v == -std::numeric_limits<double>::infinity()) return std::string("-inf");
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  std::string out;
  out += "# wdm misocp dump v1\n";
  out += "population " + std::string(to_string(population)) + "\n";
  out += "owners " + std::to_string(n_owners) + "\n";
  out += "bigM " + fmt(big_m) + "\n";
  out += "vars " + std::to_string(vars.size()) + "\n";
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const auto& v = vars[i];
    out += "var " + std::to_string(i) + " " + v.name + " " +
           (v.kind == VarKind::binary ? "BIN " : "CONT ") + fmt(v.lo) + " " + fmt(v.hi) + "\n";
  }
  out += "objective min\n";
  for (const auto& t : objective) {
    out += "obj " + vars[t.var].name + " " + fmt(t.coef) + "\n";
  }
  auto terms_str = [&](const std::vector<Term>& ts) {
    std::string s;
    for (std::size_t i = 0; i < ts.size(); ++i) {
      if (i != 0) s += " + ";
      s += fmt(ts[i].coef) + "*" + vars[ts[i].var].name;
    }
    return s;
  };
  for (const auto& r : rows) {
    out += "row LIN " + r.tag + " " + fmt(r.lo) + " " + fmt(r.hi) + " : " + terms_str(r.terms) +
           "\n";
  }
  for (const auto& c : cones) {
    out += "row SOC " + c.tag + " : norm[ " + terms_str(c.norm_terms) + " ] <= " +
           terms_str(c.rhs_terms) + "\n";
  }
  for (std::size_t i = 0; i < vars.size(); ++i) {
    out += "row BOUND " + vars[i].name + " " + fmt(vars[i].lo) + " " + fmt(vars[i].hi) + "\n";
  }
  out += "end\n";
  return out;
}

}  // namespace wdm
