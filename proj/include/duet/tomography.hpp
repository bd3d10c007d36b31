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

#include "duet/error.hpp"
#include "duet/fock.hpp"
#include "duet/moments.hpp"
#include "duet/parallel.hpp"
#include "duet/source_model.hpp"

namespace duet {

struct ReconstructionConfig {
    FockDims dims;
    int max_order = 4;
    /// Stop when the objective changes by less than tol * max(1, objective).
    double tol_objective = 1e-8;
    int max_iterations = 5000;
    std::uint64_t seed = 0;
    /// Seeded starts; the first is always the maximally mixed state.
    int restarts = 3;

    void validate() const;
};

struct ReconstructionResult {
    DensityMatrix state;
    /// Weighted least squares sum_b |C_b - P_b|^2 / sigma_b^2 (= -log L up to a constant).
    double objective = 0.0;
    int iterations = 0;
    /// Objective after every accepted step of the winning start; non-increasing.
    std::vector<double> objective_trace;
};

/// Raised when no start converges; carries the best iterate seen.
class ReconstructionError : public NumericalError {
   public:
    ReconstructionError(const std::string& what, DensityMatrix best, double objective)
        : NumericalError(what), best_(std::move(best)), objective_(objective) {}
    const DensityMatrix& best() const { return best_; }
    double objective() const { return objective_; }

   private:
    DensityMatrix best_;
    double objective_;
};

/// The weighted moment misfit over rho = A A^dag / Tr(A A^dag), A lower
/// triangular. Exposed for gradient checks.
class MomentObjective {
   public:
    MomentObjective(const MomentTensor& c, const ReconstructionConfig& cfg);

    int dimension() const { return dim_; }
    /// Number of real parameters (re and im of the lower triangle).
    int parameter_count() const { return dim_ * (dim_ + 1); }
    std::size_t moment_count() const { return ops_.size(); }

    Eigen::VectorXd pack(const CMatrix& a) const;
    CMatrix unpack(const Eigen::VectorXd& x) const;

    /// Objective value; fills the real gradient when grad is non-null.
    double evaluate(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const;

   private:
    int dim_;
    std::vector<MonomialOperator> ops_;
    std::vector<cplx> targets_;
    std::vector<double> weights_;
};

/// Constrained ML reconstruction (L-BFGS over the factorized parameterization).
ReconstructionResult reconstruct_detailed(const MomentTensor& c, const ReconstructionConfig& cfg,
                                          const DensityMatrix* warm_start = nullptr);
DensityMatrix reconstruct(const MomentTensor& c, const ReconstructionConfig& cfg);

/// Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.
double state_fidelity(const DensityMatrix& rho, const DensityMatrix& sigma);

/// p_ij from reconstructed states; same contract as the model version.
Eigen::Matrix2d conditional_probabilities_from_states(const DensityMatrix& first, const DensityMatrix& second,
                                                      Basis basis, double phi_m = 0.0);

/// Device-scale moment tensors for the four heralds.
struct HeraldTensors {
    MomentTensor early;
    MomentTensor late;
    MomentTensor plus;
    MomentTensor minus;
};

struct HeraldStates {
    DensityMatrix early;
    DensityMatrix late;
    DensityMatrix plus;
    DensityMatrix minus;
};

/// Reconstructs all four heralds.
HeraldStates reconstruct_all(const HeraldTensors& c, const ReconstructionConfig& cfg);

struct BootstrapQuantity {
    std::string name;
    double ml = 0.0;
    double mean = 0.0;
    double std = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    std::vector<double> samples;
};

struct BootstrapResult {
    int iterations = 0;
    int failures = 0;
    /// pz_ee, pz_el, pz_le, pz_ll, px_pp, px_pm, px_mp, px_mm, f_lb.
    std::vector<BootstrapQuantity> quantities;

    const BootstrapQuantity& get(const std::string& name) const;
    std::string to_csv() const;
};

/// p_ij (both bases) and F_lb as a 9-vector in BootstrapResult order.
Eigen::VectorXd bell_quantities(const HeraldStates& states, double phi_m);

/// Parametric bootstrap: each iteration perturbs every moment independently
/// (normal, conjugate symmetric), re-reconstructs warm-started from `ml`, and
/// records p_ij and F_lb. Intervals are [min(mean, ml) - std, max(mean, ml) + std].
BootstrapResult bootstrap(const HeraldTensors& c, const HeraldStates& ml, const ReconstructionConfig& cfg,
                          int iterations, double phi_m, Execution exec = {});
BootstrapResult bootstrap_serial(const HeraldTensors& c, const HeraldStates& ml, const ReconstructionConfig& cfg,
                                 int iterations, double phi_m);

/// JSON: {"dims": [d_e, d_l], "entries": [[re, im], ...]} row-major.
std::string state_to_json(const DensityMatrix& rho);

}  // namespace duet
