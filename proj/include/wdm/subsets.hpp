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

#include <bit>
#include <cstdint>
#include <vector>

namespace wdm {

// Owner subsets are bitmasks: bit i set means owner i is selected.
using SubsetMask = std::uint32_t;

inline int subset_size(SubsetMask m) { return std::popcount(m); }

inline bool subset_contains(SubsetMask m, std::size_t owner) {
  return (m >> owner) & 1u;
}

inline std::vector<std::size_t> subset_members(SubsetMask m) {
  std::vector<std::size_t> out;
  while (m != 0) {
    out.push_back(static_cast<std::size_t>(std::countr_zero(m)));
    m &= m - 1;
  }
  return out;
}

// Lexicographic order on the ascending member lists: {0,3} < {1,2}.
inline bool subset_lex_less(SubsetMask a, SubsetMask b) {
  while (a != 0 && b != 0) {
    const int la = std::countr_zero(a);
    const int lb = std::countr_zero(b);
    if (la != lb) return la < lb;
    a &= a - 1;
    b &= b - 1;
  }
  return a == 0 && b != 0;
}

// Deterministic tie-break shared by every subset optimiser: lowest objective,
// then fewest members, then lexicographically smallest member set.
inline bool subset_preferred(double obj_a, SubsetMask a, double obj_b, SubsetMask b) {
  if (obj_a != obj_b) return obj_a < obj_b;
  const int sa = subset_size(a);
  const int sb = subset_size(b);
  if (sa != sb) return sa < sb;
  return subset_lex_less(a, b);
}

}  // namespace wdm
