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


// Serial references against the OpenMP kernels. Both produce identical output,
// so the ratio of the two timings is the parallel speedup.

#include <benchmark/benchmark.h>

#include <vector>

#include "duet/heterodyne.hpp"
#include "duet/moments.hpp"
#include "duet/source_model.hpp"
#include "duet/tomography.hpp"

namespace {

using namespace duet;

const DensityMatrix& early_state() {
    static const DensityMatrix rho = conditional_state({}, {HeraldKind::early});
    return rho;
}

const std::vector<Amplitudes>& records(std::size_t n) {
    static std::vector<Amplitudes> cache;
    if (cache.size() != n) cache = sample_filtered_amplitudes(early_state(), {}, n, 1);
    return cache;
}

void BM_SampleSerial(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    for (auto _ : st) benchmark::DoNotOptimize(sample_filtered_amplitudes_serial(early_state(), {}, n, 1));
    st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_SampleParallel(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    for (auto _ : st) benchmark::DoNotOptimize(sample_filtered_amplitudes(early_state(), {}, n, 1));
    st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_MomentsSerial(benchmark::State& st) {
    const auto& rec = records(static_cast<std::size_t>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(estimate_moments_serial(rec, 4));
    st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_MomentsParallel(benchmark::State& st) {
    const auto& rec = records(static_cast<std::size_t>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(estimate_moments(rec, 4));
    st.SetItemsProcessed(st.iterations() * st.range(0));
}

struct BootstrapInput {
    HeraldTensors tensors;
    HeraldStates ml;
    ReconstructionConfig cfg;
};

HeraldTensors bootstrap_tensors() {
    const AmplifierModel amp;
    const auto cal = calibration_records(amp, 20000, 9);
    const MomentTensor h = noise_moments(cal, 4, amp.gain_db);
    const NoiseParams p;
    auto run = [&](HeraldKind k, std::uint64_t seed) {
        const auto rec = sample_filtered_amplitudes(conditional_state(p, {k}), amp, 20000, seed);
        return invert_moments(estimate_moments(rec, 4), h, amp.gain_db);
    };
    return {run(HeraldKind::early, 1), run(HeraldKind::late, 2), run(HeraldKind::plus, 3),
            run(HeraldKind::minus, 4)};
}

const BootstrapInput& bootstrap_input() {
    static const BootstrapInput in = [] {
        HeraldTensors t = bootstrap_tensors();
        const ReconstructionConfig cfg;
        HeraldStates ml = reconstruct_all(t, cfg);
        return BootstrapInput{std::move(t), std::move(ml), cfg};
    }();
    return in;
}

void BM_BootstrapSerial(benchmark::State& st) {
    const auto& in = bootstrap_input();
    for (auto _ : st) benchmark::DoNotOptimize(bootstrap_serial(in.tensors, in.ml, in.cfg, st.range(0), 0.0));
}

void BM_BootstrapParallel(benchmark::State& st) {
    const auto& in = bootstrap_input();
    for (auto _ : st) benchmark::DoNotOptimize(bootstrap(in.tensors, in.ml, in.cfg, st.range(0), 0.0));
}

}  // namespace

BENCHMARK(BM_SampleSerial)->Arg(20000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SampleParallel)->Arg(20000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_MomentsSerial)->Arg(200000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MomentsParallel)->Arg(200000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_BootstrapSerial)->Arg(8)->Unit(benchmark::kMillisecond)->Iterations(1);
BENCHMARK(BM_BootstrapParallel)->Arg(8)->Unit(benchmark::kMillisecond)->Iterations(1)->UseRealTime();

BENCHMARK_MAIN();
