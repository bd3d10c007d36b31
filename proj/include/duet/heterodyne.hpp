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

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "duet/coupled_mode.hpp"
#include "duet/fock.hpp"
#include "duet/moments.hpp"
#include "duet/parallel.hpp"
#include "duet/source_model.hpp"

namespace duet {

/// Phase-insensitive amplifier S = sqrt(G) (C + H^dag) in the G >> 1 limit,
/// with thermal H of <H H^dag> = n_add + 1 per mode.
struct AmplifierModel {
    double gain_db = 107.4;
    double n_add_e = 2.6;
    double n_add_l = 2.6;

    double gain() const { return linear_gain(gain_db); }
    void validate() const;
    bool operator==(const AmplifierModel&) const = default;
};

/// One trial: filtered amplitudes at heterodyne scale plus its herald.
struct VoltageRecord {
    std::optional<HeraldKind> herald;
    cplx s_e;
    cplx s_l;
    std::uint64_t seed_id = 0;
    std::optional<Waveform> waveform;

    Amplitudes amplitudes() const { return {s_e, s_l}; }
    bool operator==(const VoltageRecord&) const;
};

std::vector<Amplitudes> amplitudes_of(std::span<const VoltageRecord> records);

enum class SamplerKind {
    /// Rejection sampling of the two-mode Husimi function (exact).
    husimi,
    /// Gaussian with the state's first and second moments. Fast, but wrong for
    /// non-Gaussian states beyond second order; for smoke tests only.
    gaussian_approximation,
};

struct SamplerOptions {
    SamplerKind kind = SamplerKind::husimi;
    /// Proposal covariance = inflation x Husimi covariance.
    double proposal_inflation = 1.5;
    /// Envelope constant = safety x pilot maximum of Q / proposal.
    double bound_safety = 1.5;
    int pilot_draws = 20000;
    /// Substream family; distinct record sets drawn from one seed use distinct streams.
    std::uint64_t stream = 1;
    Execution exec;
};

struct SamplerDiagnostics {
    double envelope_bound = 0.0;
    std::uint64_t proposals = 0;
    std::uint64_t accepted = 0;
    /// Proposals where Q / (M g) exceeded 1; nonzero means the bound was too low.
    std::uint64_t bound_violations = 0;

    double acceptance() const { return proposals ? static_cast<double>(accepted) / proposals : 0.0; }
};

/// Draws n_records heterodyne outcomes for rho: Husimi samples of the device
/// field, plus amplifier noise CN(0, n_add) per mode, scaled by sqrt(G).
/// Record i depends only on (seed, options.stream, i).
std::vector<Amplitudes> sample_filtered_amplitudes(const DensityMatrix& rho, const AmplifierModel& amp,
                                                   std::size_t n_records, std::uint64_t seed,
                                                   const SamplerOptions& options = {},
                                                   SamplerDiagnostics* diagnostics = nullptr);
/// Single-threaded reference; identical output to the parallel version.
std::vector<Amplitudes> sample_filtered_amplitudes_serial(const DensityMatrix& rho, const AmplifierModel& amp,
                                                          std::size_t n_records, std::uint64_t seed,
                                                          const SamplerOptions& options = {},
                                                          SamplerDiagnostics* diagnostics = nullptr);

/// Two-mode Husimi function Q(alpha, beta) = <alpha, beta| rho |alpha, beta> / pi^2.
double husimi(const DensityMatrix& rho, cplx alpha, cplx beta);

/// Pure amplifier noise records (vacuum input), each mode CN(0, G (n_add + 1)).
std::vector<Amplitudes> calibration_records(const AmplifierModel& amp, std::size_t n_records, std::uint64_t seed,
                                            std::uint64_t stream = 3, Execution exec = {});

struct SynthesisOptions {
    /// One-sided white-noise level: each sample gets CN(0, noise_psd / dt).
    double noise_psd = 0.0;
    std::uint64_t seed = 0;
    /// When set, T_l - T_e must match it within one sample.
    std::optional<double> expected_delay;
};

/// V(t) = S_e f(t - T_e) + S_l f(t - T_l) + white noise, sampled on grid.
Waveform synthesize_waveform(cplx s_e, cplx s_l, const Envelope& f, double t_e, double t_l, const TimeGrid& grid,
                             const SynthesisOptions& options = {});

/// CSV columns: herald, re_Se, im_Se, re_Sl, im_Sl, seed_id.
void write_records_csv(const std::string& path, std::span<const VoltageRecord> records);
std::vector<VoltageRecord> read_records_csv(const std::string& path);

/// Little-endian binary: "DUET", version u16, count u64, then per record
/// re_Se, im_Se, re_Sl, im_Sl as f64 and a herald u8 (0 none, 1 early,
/// 2 late, 3 plus, 4 minus). seed_id is not stored and reads back as the
/// record position.
void write_records_binary(const std::string& path, std::span<const VoltageRecord> records);
std::vector<VoltageRecord> read_records_binary(const std::string& path);

}  // namespace duet
