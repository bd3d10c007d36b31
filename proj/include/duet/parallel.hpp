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

#include <cstddef>
#include <cstdint>
#include <random>

namespace duet {

/// Worker count for OpenMP kernels. 0 selects the OpenMP default.
struct Execution {
    int workers = 0;
};

/// Resolves an Execution to a concrete thread count.
int resolve_workers(const Execution& exec);

/// Fixed block size used by reductions so that results do not depend on the
/// thread count: partial sums are formed per block and combined in block order.
inline constexpr std::size_t kReductionBlock = 2048;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based substream: the engine for item `index` of stream `stream`
/// depends only on (master, stream, index), never on execution order.
inline std::mt19937_64 substream(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
    return std::mt19937_64(mix64(mix64(master ^ mix64(stream)) + index));
}

}  // namespace duet
