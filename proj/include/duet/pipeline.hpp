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
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "duet/coupled_mode.hpp"
#include "duet/fock.hpp"
#include "duet/heterodyne.hpp"
#include "duet/parallel.hpp"
#include "duet/source_model.hpp"
#include "duet/tomography.hpp"

namespace duet {

/// Device rates as quoted, f/2pi in Hz.
struct CyclicRates {
    double f_m = 5.004e9;
    double g_pe = 1.2e6;
    double kappa_m = 0.15e6;
    double kappa_e = 1.2e6;
    double kappa_i = 0.55e6;

    CoupledModeRates angular() const;
    bool operator==(const CyclicRates&) const = default;
};

/// Everything a simulate/analyze run depends on. Phases are stored in units
/// of pi so that the TOML file reads like the lab notebook (0.56 = 0.56 pi).
struct ExperimentConfig {
    CyclicRates rates;
    NoiseParams noise;
    PairSourceParams source;
    AmplifierModel amplifier;
    FockDims dims;

    double t_d = 279e-9;
    double t_p = 96e-9;
    double t_r = 20e-6;

    std::uint64_t heralds_z = 300000;  // per mode (early, late)
    std::uint64_t heralds_x = 70000;   // per mode (plus, minus)
    std::uint64_t calibration_records = 300000;
    std::uint64_t unconditional_records = 300000;

    double phi_opt_pi = 0.56;
    double phi_m_pi = 0.56;
    int phase_scan_points = 180;

    bool imperfections = false;
    int max_pairs = 1;

    int max_order = 4;
    double tol_objective = 1e-8;
    /// Above the bare reconstruction default: rank-deficient ML states at
    /// this record count can need ~1e4 iterations.
    int max_iterations = 20000;
    int restarts = 3;
    int bootstrap_iterations = 1000;

    /// Records per herald for the waveform-level readout-delay scan; 0 skips it.
    std::uint64_t scan_records = 4000;
    double scan_step = 16e-9;

    std::uint64_t seed = 1;

    double phi_opt() const;
    double phi_m() const;
    ModelOptions model_options() const;
    ReconstructionConfig reconstruction() const;
    /// Throws ConfigError naming the offending field.
    void validate() const;
    bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig parse_config(const std::string& toml_text);
ExperimentConfig load_config(const std::string& path);
/// Canonical TOML; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& cfg);
/// FNV-1a 64 of the canonical TOML, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

/// Conditional and unconditional intensities against readout delay tau,
/// obtained by matched filtering synthesized waveforms.
struct ReadoutScan {
    std::vector<double> tau;
    std::vector<double> n_early_click;
    std::vector<double> n_late_click;
    std::vector<double> n_unconditional;
    std::vector<double> g2_early;
    std::vector<double> g2_late;
    /// Delays maximizing the heralded excess n_click - n_unconditional for
    /// early and late clicks; t_l - t_e should reproduce T_d.
    double t_e = 0.0;
    double t_l = 0.0;
};

struct SimulationMetadata {
    double p_click = 0.0;
    double herald_rate = 0.0;
    /// Lab time the heralded record sets would take at herald_rate.
    double wall_clock_equivalent = 0.0;
    double sampler_acceptance = 0.0;
};

struct SimulationOutput {
    /// Early/late heralds.
    std::vector<VoltageRecord> z;
    /// Plus/minus heralds.
    std::vector<VoltageRecord> x;
    std::vector<VoltageRecord> calibration;
    /// Unheralded trials, the noise baseline for g2.
    std::vector<VoltageRecord> unconditional;
    SimulationMetadata metadata;
    std::optional<ReadoutScan> scan;
};

/// Heralds are drawn directly from the conditional states instead of looping
/// over 20 us trials at p_click ~ 5e-6. Deterministic in cfg.seed.
SimulationOutput run_simulation(const ExperimentConfig& cfg, Execution exec = {});

/// Waveform-level scan: records are synthesized as V(t) = S_e f(t - T_e) +
/// S_l f(t - T_l) + amplifier noise and matched filtered at each tau.
ReadoutScan readout_scan(const ExperimentConfig& cfg, Execution exec = {});

/// Writes z/x/calibration/unconditional record files, config.toml,
/// metadata.json and (if present) scan.json into dir.
void save_simulation(const std::string& dir, const SimulationOutput& sim, const ExperimentConfig& cfg,
                     bool csv = false);
SimulationOutput load_simulation(const std::string& dir);

struct FringeFit {
    double amplitude = 0.0;
    double frequency = 0.0;
    double phase = 0.0;
    double offset = 0.0;
    /// Parameter order (A, k, phi_0, B); from the residual variance.
    Eigen::Matrix4d covariance = Eigen::Matrix4d::Zero();
    double rms_residual = 0.0;
    /// A is not resolved from zero, so k and phi_0 are meaningless.
    bool phase_undetermined = false;
};

/// Least-squares fit of y = A cos(k x + phi_0) + B, A >= 0. k is located by a
/// variable-projection grid search, then all four parameters are refined by
/// Levenberg-Marquardt.
FringeFit fit_fringe(const std::vector<double>& x, const std::vector<double>& y);

struct Estimate {
    double value = 0.0;
    double sigma = 0.0;
};

struct PhaseFringe {
    std::vector<double> phi_m;
    std::vector<double> plus;
    std::vector<double> minus;
    FringeFit fit_plus;
    FringeFit fit_minus;
    /// V_x(phi_m) and the phase of its maximum.
    std::vector<double> v_x;
    double best_phi_m = 0.0;
};

struct RunReport {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string version;
    SimulationMetadata metadata;
    std::uint64_t n_early = 0;
    std::uint64_t n_late = 0;
    std::uint64_t n_plus = 0;
    std::uint64_t n_minus = 0;
    std::uint64_t n_calibration = 0;
    std::uint64_t n_unconditional = 0;

    double phi_opt = 0.0;
    double phi_m = 0.0;
    /// n(i, j): microwave mode j given optical click i (Z basis).
    Eigen::Matrix2d n = Eigen::Matrix2d::Zero();
    Eigen::Matrix2d n_sigma = Eigen::Matrix2d::Zero();
    /// Same for the X basis at phi_m: rows plus/minus click, cols C_+/C_-.
    Eigen::Matrix2d n_x = Eigen::Matrix2d::Zero();
    Estimate v_z;
    Estimate v_x;
    Estimate g2_early;
    Estimate g2_late;
    PhaseFringe fringe;

    Eigen::Matrix2d pz = Eigen::Matrix2d::Zero();
    Eigen::Matrix2d px = Eigen::Matrix2d::Zero();
    double f_lb = 0.0;
    int bootstrap_iterations = 0;
    int bootstrap_failures = 0;
    /// Per quantity ML, mean, std and interval (samples dropped).
    std::vector<BootstrapQuantity> bootstrap;

    /// Closed-form model predictions for the same configuration.
    ModelSummary model;
    std::optional<ReadoutScan> scan;

    std::string to_json() const;
    static RunReport from_json(const std::string& text);
};

RunReport run_analysis(const SimulationOutput& sim, const ExperimentConfig& cfg, Execution exec = {});

enum class ReportFormat { json, csv, markdown };

ReportFormat parse_report_format(const std::string& name);

/// Deterministic serialization. Markdown includes the comparison against the
/// published reference values.
std::string report(const RunReport& run, ReportFormat format);

/// One row of the reference comparison.
struct ReferenceRow {
    std::string quantity;
    std::string kind;  // "measured" or "model"
    double reference = 0.0;
    double reference_sigma = 0.0;
    Estimate simulated;
    double tolerance = 0.0;
    bool pass = false;
};

/// Reference rows (V_z 0.633, V_x 0.611, g2 6.8/5.0, F_lb 0.794, V 0.70,
/// F_lb 0.83). Tolerance is 2 sqrt(sigma_ref^2 + sigma_sim^2); references
/// quoted without an uncertainty get 5% of their value.
std::vector<ReferenceRow> reference_comparison(const RunReport& run);

}  // namespace duet
