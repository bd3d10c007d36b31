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

#include "duet/multi_index.hpp"

#include <algorithm>

namespace duet {

std::vector<MultiIndex> graded_indices(int max_order) {
    std::vector<MultiIndex> out;
    for (int total = 0; total <= max_order; ++total) {
        for (int k = 0; k <= total; ++k) {
            for (int l = 0; k + l <= total; ++l) {
                for (int m = 0; k + l + m <= total; ++m) {
                    out.push_back({k, l, m, total - k - l - m});
                }
            }
        }
    }
    return out;
}

namespace {

double binomial(int n, int r) {
    if (r < 0 || r > n) {
        return 0.0;
    }
    double result = 1.0;
    for (int i = 1; i <= std::min(r, n - r); ++i) {
        result = result * (n - std::min(r, n - r) + i) / i;
    }
    return result;
}

}  // namespace

double multi_binomial(const MultiIndex& a, const MultiIndex& b) {
    return binomial(a.k, b.k) * binomial(a.l, b.l) * binomial(a.m, b.m) * binomial(a.n, b.n);
}

}  // namespace duet
