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

#include "wdm/distributions.hpp"

using namespace wdm;

TEST_CASE("quantiles are analytic") {
  REQUIRE(DistributionSpec(Family::gaussian, 0, 1).quantile(0.5) ==
          Catch::Approx(0.0).margin(1e-12));
  REQUIRE(DistributionSpec(Family::uniform, 10, 3).quantile(0.5) == Catch::Approx(11.5));
  REQUIRE(DistributionSpec(Family::exponential, 0, 2).quantile(1.0 - std::exp(-1.0)) ==
          Catch::Approx(2.0).epsilon(1e-12));
  // round trip through the normal cdf
  for (double u : {0.01, 0.2, 0.5, 0.77, 0.999}) {
    REQUIRE(standard_normal_cdf(standard_normal_quantile(u)) == Catch::Approx(u).epsilon(1e-10));
  }
  REQUIRE_THROWS_AS(DistributionSpec(Family::gaussian, 0, 1).quantile(0.0),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(DistributionSpec(Family::gaussian, 0, 1).quantile(1.0),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(DistributionSpec(Family::gaussian, 0, 0), std::invalid_argument);
}

TEST_CASE("sampling matches the law of large numbers") {
  RngStream s(11);
  const auto x = sample(DistributionSpec(Family::gaussian, 0, 1), 100000, s);
  REQUIRE(std::abs(x.mean()) < 0.02);
}

TEST_CASE("uniform samples stay on the support") {
  RngStream s(12);
  const auto x = sample(DistributionSpec(Family::uniform, 10, 3), 5000, s);
  REQUIRE(x.values().front() >= 10.0);
  REQUIRE(x.values().back() <= 13.0);
}

TEST_CASE("sampling is deterministic per seed and isolated across streams") {
  RngStream a(99), b(99);
  const auto xa = sample(DistributionSpec(Family::exponential, 1, 2), 1000, a);
  const auto xb = sample(DistributionSpec(Family::exponential, 1, 2), 1000, b);
  REQUIRE(xa.draws() == xb.draws());

  // consuming an unrelated stream does not disturb a fixed-seed draw
  RngStream noise(1234);
  for (int i = 0; i < 777; ++i) noise.next_u64();
  RngStream c(99);
  const auto xc = sample(DistributionSpec(Family::exponential, 1, 2), 1000, c);
  REQUIRE(xc.draws() == xa.draws());
}

TEST_CASE("empirical samples validate and sort") {
  EmpiricalSample s({3.0, 1.0, 2.0});
  REQUIRE(s.values() == std::vector<double>{1.0, 2.0, 3.0});
  REQUIRE(s.draws() == std::vector<double>{3.0, 1.0, 2.0});
  REQUIRE_THROWS_AS(EmpiricalSample({}), std::invalid_argument);
  REQUIRE_THROWS_AS(EmpiricalSample({1.0, std::nan("")}), std::invalid_argument);
}

TEST_CASE("euclidean aggregate on equal and constant inputs") {
  EmpiricalSample a({3.0, 1.0, 2.0});
  const auto same = aggregate_euclidean(std::vector<EmpiricalSample>{a, a});
  REQUIRE(same.values() == a.values());

  const auto mid = aggregate_euclidean(
      std::vector<EmpiricalSample>{EmpiricalSample({2.0}), EmpiricalSample({4.0})});
  REQUIRE(mid.values() == std::vector<double>{3.0});

  REQUIRE_THROWS_AS(aggregate_euclidean(std::vector<EmpiricalSample>{
                        EmpiricalSample({1.0}), EmpiricalSample({1.0, 2.0})}),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(aggregate_euclidean(std::vector<EmpiricalSample>{}), std::invalid_argument);
}

TEST_CASE("aggregate of independent gaussians has convolution moments") {
  // Monte-Carlo oracle: mean of the aggregate is the mean of locations and
  // the variance contracts as sum(beta^2)/N^2. A comonotone (sorted) pairing
  // would instead give the much larger (sum(beta)/N)^2.
  const std::vector<double> alpha = {10.0, 12.0, 14.0, 16.0};
  const std::vector<double> beta = {1.0, 1.5, 2.0, 3.0};
  const std::size_t n = 200000;
  std::vector<EmpiricalSample> xs;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    RngStream s(derive_seed(5, {i}));
    xs.push_back(sample(DistributionSpec(Family::gaussian, alpha[i], beta[i]), n, s));
  }
  const auto agg = aggregate_euclidean(xs);
  const double mean = agg.mean();
  double var = 0.0;
  for (double v : agg.values()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);

  const double want_mean = (10.0 + 12.0 + 14.0 + 16.0) / 4.0;
  const double want_var = (1.0 + 2.25 + 4.0 + 9.0) / 16.0;
  const double comonotone_var = std::pow((1.0 + 1.5 + 2.0 + 3.0) / 4.0, 2);
  REQUIRE(mean == Catch::Approx(want_mean).margin(0.02));
  REQUIRE(var == Catch::Approx(want_var).epsilon(0.03));
  REQUIRE(std::abs(var - comonotone_var) > 0.5);
}

TEST_CASE("dp noise vanishes as epsilon grows") {
  EmpiricalSample x({-1.0, 0.0, 2.0, 5.0});
  RngStream s(7);
  const auto noisy = add_dp_noise(x, DpParams::laplace(1e9, 1.0), s);
  for (std::size_t i = 0; i < x.size(); ++i) {
    REQUIRE(std::abs(noisy.draws()[i] - x.draws()[i]) < 1e-6);
  }
}

TEST_CASE("laplace noise has the calibrated absolute moment") {
  const std::size_t n = 1000000;
  EmpiricalSample zeros(std::vector<double>(n, 0.0));
  RngStream s(8);
  const auto noisy = add_dp_noise(zeros, DpParams::laplace(1.0, 1.0), s);
  double mean = 0.0, abs_mean = 0.0;
  for (double v : noisy.draws()) {
    mean += v;
    abs_mean += std::abs(v);
  }
  mean /= n;
  abs_mean /= n;
  REQUIRE(std::abs(mean) < 0.01);
  REQUIRE(abs_mean == Catch::Approx(1.0).epsilon(0.02));  // E|Laplace(b)| = b
}

TEST_CASE("gaussian noise has the calibrated standard deviation") {
  const std::size_t n = 400000;
  EmpiricalSample zeros(std::vector<double>(n, 0.0));
  RngStream s(9);
  const auto dp = DpParams::gaussian(1.0, 0.05, 1.0);
  REQUIRE(gaussian_dp_stddev(dp) == Catch::Approx(std::sqrt(2.0 * std::log(25.0))));
  const auto noisy = add_dp_noise(zeros, dp, s);
  double var = 0.0;
  for (double v : noisy.draws()) var += v * v;
  var /= n;
  REQUIRE(std::sqrt(var) == Catch::Approx(std::sqrt(2.0 * std::log(25.0))).epsilon(0.02));
}

TEST_CASE("dp params validate") {
  REQUIRE_THROWS_AS(DpParams::laplace(0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(DpParams::gaussian(1.0, 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(DpParams::gaussian(1.0, 1.0), std::invalid_argument);
  REQUIRE_THROWS_AS(DpParams::laplace(1.0, -1.0), std::invalid_argument);
  REQUIRE_THROWS_AS(gaussian_dp_stddev(DpParams::laplace(1.0)), std::invalid_argument);
}
