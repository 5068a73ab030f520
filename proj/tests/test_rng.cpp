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

#include "wdm/rng.hpp"

using namespace wdm;

TEST_CASE("identical seeds give identical streams") {
  RngStream a(42), b(42);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("derive_seed separates paths") {
  const auto s1 = derive_seed(7, {1, 2, 3});
  const auto s2 = derive_seed(7, {1, 2, 4});
  const auto s3 = derive_seed(7, {1, 2});
  REQUIRE(s1 != s2);
  REQUIRE(s1 != s3);
  REQUIRE(derive_seed(7, {1, 2, 3}) == s1);
}

TEST_CASE("uniform01 stays strictly inside (0,1)") {
  RngStream s(1);
  for (int i = 0; i < 100000; ++i) {
    const double u = s.uniform01();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("uniform respects bounds") {
  RngStream s(3);
  for (int i = 0; i < 10000; ++i) {
    const double x = s.uniform(2.0, 5.0);
    REQUIRE(x > 2.0);
    REQUIRE(x < 5.0);
  }
}
