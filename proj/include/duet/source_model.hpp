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

#include <array>
#include <vector>

#include <Eigen/Dense>

#include "duet/fock.hpp"

namespace duet {

/// Conditional-state noise model of the transducer output.
struct NoiseParams {
    double eta_ext = 0.42;
    /// Pre-pulse thermal occupations of the early/late modes.
    double n_i_e = 0.05 / 0.42;
    double n_i_l = 0.10 / 0.42;
    /// Thermal occupation of the loss port modelling delayed heating. The
    /// quanta added to the output mode are (1 - eta_ext) * n_d.
    double n_d_e = 0.029 / (1.0 - 0.42);
    double n_d_l = 0.029 / (1.0 - 0.42);

    void validate() const;
    bool operator==(const NoiseParams&) const = default;
};

enum class HeraldKind { early, late, plus, minus };

const char* herald_name(HeraldKind kind);

struct HeraldMode {
    HeraldKind kind = HeraldKind::early;
    /// Microwave analysis phase used for plus/minus projections.
    double phi_m = 0.56 * 3.14159265358979323846;
    /// Optical phase phi_p + phi_o of the plus/minus heralds.
    double phi_opt = 0.56 * 3.14159265358979323846;

    /// Phases reduced to [0, 2 pi).
    HeraldMode normalized() const;
};

/// Amplitudes (c_e, c_l) of the microwave photon added by a herald.
std::array<cplx, 2> herald_coefficients(const HeraldMode& herald);

struct PairSourceParams {
    double p = 1.0e-4;
    double phi_p = 0.0;
    double eta_opt = 5.5e-2;
    double optical_visibility = 0.94;
    /// Expected dark counts per gate.
    double dark_rate = 0.0;

    void validate() const;
    bool operator==(const PairSourceParams&) const = default;
};

/// One branch of the optical-microwave pair state: amplitude of
/// |o_e o_l>_o |m_e m_l>_m. Pair sources lock o = m.
struct JointAmplitude {
    int o_e;
    int o_l;
    int m_e;
    int m_l;
    cplx amplitude;
};

/// Two-mode-squeezed pair state per time bin, truncated at max_pairs total
/// pairs and renormalized: amplitude of n_e early and n_l late pairs is
/// proportional to sqrt(p)^(n_e + n_l) e^{i n_l phi_p}.
std::vector<JointAmplitude> ideal_joint_state(double p, double phi_p, int max_pairs);

/// Photon-added thermal state sent through the thermal attenuator. Evaluated
/// in a padded working space and truncated to dims (see truncation_loss()).
DensityMatrix conditional_state(const NoiseParams& params, const HeraldMode& herald, FockDims dims = {});

/// State heralded by a click (POVM 1 - (1 - eta_opt)^N) on the optical mode
/// selected by the herald, including multi-pair branches up to max_pairs.
/// With max_pairs = 1 this reduces to conditional_state.
DensityMatrix heralded_state(const NoiseParams& params, const PairSourceParams& source, const HeraldMode& herald,
                             int max_pairs, FockDims dims = {});

/// Lossy thermal state seen without a pair (dark-count heralds, noise baseline).
DensityMatrix unconditional_state(const NoiseParams& params, FockDims dims = {});

struct ModelOptions {
    /// Mix in imperfect optical interference (plus/minus heralds) and dark
    /// counts, both taken from `source`.
    bool imperfections = false;
    /// > 1 includes multi-pair branches.
    int max_pairs = 1;
    PairSourceParams source;
};

/// Herald-conditioned state with every model option applied.
DensityMatrix model_state(const NoiseParams& params, const HeraldMode& herald, const ModelOptions& options,
                          FockDims dims = {});

/// n(i, j): mean quanta in microwave mode j given herald i (0 = early, 1 = late).
Eigen::Matrix2d conditional_intensities(const NoiseParams& params);

/// (n_ee - n_el - n_le + n_ll) / sum.
double visibility_z(const Eigen::Matrix2d& n);

struct Fringe {
    std::vector<double> phi_m;
    /// Intensity of (C_e + e^{i phi_m} C_l)/sqrt2 given plus and minus heralds.
    std::vector<double> plus;
    std::vector<double> minus;
    double visibility = 0.0;
};

/// Phase-swept X-basis fringe and V_x at phi_m = phi_opt.
Fringe visibility_x(const NoiseParams& params, const std::vector<double>& phi_m_grid,
                    double phi_opt = 0.56 * 3.14159265358979323846, const ModelOptions& options = {});

struct CrossCorrelation {
    double early = 0.0;
    double late = 0.0;
};

/// Conditional over unconditional intensity in the heralded mode.
CrossCorrelation cross_correlation(const NoiseParams& params);

enum class Basis { Z, X };

/// p_ij = Tr{Pi_j rho_i} / sum over i, j. States are (early, late) for Z and
/// (plus, minus) for X; X projectors use phi_m.
Eigen::Matrix2d conditional_probabilities(const DensityMatrix& first, const DensityMatrix& second, Basis basis,
                                          double phi_m = 0.0);

/// 1/2 (p_ee + p_ll - p_el - p_le + p_++ + p_-- - 2 sqrt(p_+- p_-+)).
double fidelity_lower_bound(const Eigen::Matrix2d& pz, const Eigen::Matrix2d& px);

struct HeraldStatistics {
    double p_click = 0.0;
    double rate = 0.0;
    double multi_photon_fraction = 0.0;
};

HeraldStatistics herald_statistics(const PairSourceParams& source, double repetition_period);

/// Every model observable at once.
struct ModelSummary {
    Eigen::Matrix2d n;
    double v_z = 0.0;
    double v_x = 0.0;
    CrossCorrelation g2;
    Eigen::Matrix2d pz;
    Eigen::Matrix2d px;
    double f_lb = 0.0;
};

ModelSummary summarize_model(const NoiseParams& params, double phi_opt, double phi_m, const ModelOptions& options = {},
                             FockDims dims = {});

}  // namespace duet
