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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "wdm/rng.hpp"
#include "wdm/tasks.hpp"

using namespace wdm;

TEST_CASE("parameter estimators") {
  EmpiricalSample x({1.0, 2.0, 3.0});
  REQUIRE(estimate_parameter(x, TaskSpec::mean_estimation()) == Catch::Approx(2.0));
  REQUIRE(estimate_parameter(x, TaskSpec::median_estimation()) == 2.0);
  // symmetric newsvendor costs fall back to the median
  REQUIRE(estimate_parameter(x, TaskSpec::newsvendor_task(0.5, 0.5)) ==
          estimate_parameter(x, TaskSpec::median_estimation()));
  // type-1 quantile picks the lower middle order statistic
  EmpiricalSample y({1.0, 2.0, 3.0, 4.0});
  REQUIRE(estimate_parameter(y, TaskSpec::median_estimation()) == 2.0);
  REQUIRE(empirical_quantile(y, 0.75) == 3.0);
  REQUIRE_THROWS_AS(empirical_quantile(y, 1.0), std::invalid_argument);
}

TEST_CASE("expected losses") {
  EmpiricalSample constant({5.0, 5.0, 5.0});
  for (const auto& task :
       {TaskSpec::mean_estimation(), TaskSpec::median_estimation(),
        TaskSpec::quantile_estimation(0.9), TaskSpec::newsvendor_task()}) {
    REQUIRE(expected_loss(constant, task, 5.0) == 0.0);
  }
  EmpiricalSample two({0.0, 2.0});
  REQUIRE(expected_loss(two, TaskSpec::median_estimation(), 1.0) == Catch::Approx(1.0));
  REQUIRE(expected_loss(two, TaskSpec::quantile_estimation(0.9), 0.0) == Catch::Approx(0.9));
  REQUIRE(expected_loss(two, TaskSpec::mean_estimation(), 1.0) == Catch::Approx(1.0));
}

TEST_CASE("pinball loss at the median is half the absolute loss") {
  RngStream s(41);
  std::vector<double> v(257);
  for (double& x : v) x = s.uniform(-4, 4);
  EmpiricalSample target(v);
  const auto mpl = TaskSpec::quantile_estimation(0.5);
  const auto mae = TaskSpec::median_estimation();
  for (double p : {-1.0, 0.0, 0.7, 3.3}) {
    REQUIRE(expected_loss(target, mpl, p) ==
            Catch::Approx(0.5 * expected_loss(target, mae, p)).epsilon(1e-12));
  }
}

TEST_CASE("prefix-sum evaluator agrees with the direct loss") {
  RngStream s(42);
  std::vector<double> v(1000);
  for (double& x : v) x = s.uniform(-5, 5);
  EmpiricalSample target(v);
  const TargetLossEvaluator ev(target);
  const std::vector<TaskSpec> tasks = {TaskSpec::mean_estimation(),
                                       TaskSpec::median_estimation(),
                                       TaskSpec::quantile_estimation(0.8),
                                       TaskSpec::newsvendor_task(1.7, 0.4)};
  for (const auto& task : tasks) {
    for (int rep = 0; rep < 50; ++rep) {
      const double p = s.uniform(-6, 6);
      REQUIRE(ev.loss(task, p) == Catch::Approx(expected_loss(target, task, p)).margin(1e-9));
    }
  }
}

TEST_CASE("loss gap vanishes on identical inputs") {
  RngStream s(43);
  std::vector<double> v(400);
  for (double& x : v) x = s.uniform(0, 10);
  EmpiricalSample target(v);
  for (const auto& task :
       {TaskSpec::mean_estimation(), TaskSpec::median_estimation(),
        TaskSpec::quantile_estimation(0.9), TaskSpec::newsvendor_task()}) {
    const auto r = loss_gap(target, target, task);
    REQUIRE(r.gap == 0.0);
    REQUIRE_FALSE(r.violated);
  }
}

TEST_CASE("translation never violates the absolute-loss bound") {
  // For a pure shift the gap is the growth in mean absolute deviation, which
  // is at most |c| = W1. Exhaustive over small random samples and shifts.
  RngStream s(44);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 3 + (s.next_u64() % 30);
    std::vector<double> v(n);
    for (double& x : v) x = s.uniform(-3, 3);
    EmpiricalSample target(v);
    const double c = s.uniform(-2, 2);
    std::vector<double> shifted = v;
    for (double& x : shifted) x += c;
    EmpiricalSample coalition(shifted);

    const auto r = loss_gap(coalition, target, TaskSpec::median_estimation());
    REQUIRE(r.lipschitz_rhs == Catch::Approx(std::abs(c)).epsilon(1e-9));
    REQUIRE(r.gap <= std::abs(c) + 1e-9);
    REQUIRE_FALSE(r.violated);
    const double m = estimate_parameter(target, TaskSpec::median_estimation());
    const double direct = expected_loss(target, TaskSpec::median_estimation(), m + c) -
                          expected_loss(target, TaskSpec::median_estimation(), m);
    REQUIRE(r.gap == Catch::Approx(direct).margin(1e-12));
  }
}

TEST_CASE("squared-error gap can break the unit-slope bound") {
  // A mean shift of 2 with W1 = 2 gives gap = 4 > 1 * W1: squared error is
  // not Lipschitz on unbounded data, which is exactly what the flag reports.
  EmpiricalSample target({0.0, 0.0, 0.0, 0.0});
  EmpiricalSample coalition({2.0, 2.0, 2.0, 2.0});
  const auto r = loss_gap(coalition, target, TaskSpec::mean_estimation());
  REQUIRE(r.gap == Catch::Approx(4.0));
  REQUIRE(r.lipschitz_rhs == Catch::Approx(2.0));
  REQUIRE(r.violated);
}

TEST_CASE("lipschitz constants follow the conventions") {
  REQUIRE(lipschitz_constant(TaskSpec::median_estimation()) == 1.0);
  REQUIRE(lipschitz_constant(TaskSpec::mean_estimation()) == 1.0);
  REQUIRE(lipschitz_constant(TaskSpec::quantile_estimation(0.8)) == Catch::Approx(0.8));
  REQUIRE(lipschitz_constant(TaskSpec::quantile_estimation(0.3)) == Catch::Approx(0.7));
  REQUIRE(lipschitz_constant(TaskSpec::newsvendor_task(0.9, 0.1)) == Catch::Approx(0.9));
  REQUIRE(TaskSpec::quantile_estimation(0.8).k_lipschitz == Catch::Approx(0.8));
}

TEST_CASE("task names and validation") {
  REQUIRE(TaskSpec::mean_estimation().name() == "mse");
  REQUIRE(TaskSpec::median_estimation().name() == "mae");
  REQUIRE(TaskSpec::quantile_estimation(0.9).name() == "mpl90");
  REQUIRE(TaskSpec::newsvendor_task().name() == "nv");
  REQUIRE(TaskSpec::newsvendor_task().critical_fractile() == Catch::Approx(0.9));
  REQUIRE_THROWS_AS(TaskSpec::quantile_estimation(0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(TaskSpec::newsvendor_task(0.0, 1.0), std::invalid_argument);
}
