// Copyright 2026 The Duet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <compare>
#include <cstdint>
#include <vector>

namespace duet {

/// Two-mode moment index (k, l, m, n) for
/// <C_e^dag^k C_e^l C_l^dag^m C_l^n> (normal order) or
/// <H_e^k H_e^dag^l H_l^m H_l^dag^n> (anti-normal order).
struct MultiIndex {
    int k = 0;
    int l = 0;
    int m = 0;
    int n = 0;

    constexpr int order() const { return k + l + m + n; }

    /// Index of the complex-conjugate moment.
    constexpr MultiIndex conjugate() const { return {l, k, n, m}; }

    constexpr bool is_self_conjugate() const { return k == l && m == n; }

    /// Componentwise partial order used by the multinomial expansion.
    constexpr bool componentwise_le(const MultiIndex& o) const {
        return k <= o.k && l <= o.l && m <= o.m && n <= o.n;
    }

    constexpr MultiIndex operator-(const MultiIndex& o) const {
        return {k - o.k, l - o.l, m - o.m, n - o.n};
    }

    constexpr bool operator==(const MultiIndex&) const = default;
};

/// Graded-lexicographic order: by total order, then (k, l, m, n) lexicographically.
constexpr bool graded_less(const MultiIndex& a, const MultiIndex& b) {
    if (a.order() != b.order()) {
        return a.order() < b.order();
    }
    if (a.k != b.k) return a.k < b.k;
    if (a.l != b.l) return a.l < b.l;
    if (a.m != b.m) return a.m < b.m;
    return a.n < b.n;
}

/// All multi-indices with total order <= max_order, in graded-lexicographic order.
std::vector<MultiIndex> graded_indices(int max_order);

/// Product of binomial coefficients binom(a.k, b.k) * ... * binom(a.n, b.n).
double multi_binomial(const MultiIndex& a, const MultiIndex& b);

}  // namespace duet
