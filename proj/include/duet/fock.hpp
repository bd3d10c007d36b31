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

#include <complex>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "duet/multi_index.hpp"

namespace duet {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using SparseCMatrix = Eigen::SparseMatrix<std::complex<double>>;

enum class Mode { early, late };

/// Per-mode Fock truncation. Joint basis is |n_e> (x) |n_l> with n_l fastest,
/// so the joint index of (n_e, n_l) is n_e * late + n_l.
struct FockDims {
    int early = 6;
    int late = 6;

    int size() const { return early * late; }
    int index(int n_early, int n_late) const { return n_early * late + n_late; }
    int early_of(int idx) const { return idx / late; }
    int late_of(int idx) const { return idx % late; }

    void validate() const;
    bool operator==(const FockDims&) const = default;
};

struct FockOperator {
    FockDims dims;
    CMatrix entries;
};

/// Hermitian, unit-trace, positive semidefinite state on a FockDims basis.
/// Construction validates the invariants and throws DomainError otherwise.
class DensityMatrix {
   public:
    /// Tolerances enforced on construction.
    static constexpr double kHermitianTol = 1e-10;
    static constexpr double kTraceTol = 1e-10;
    static constexpr double kEigenTol = 1e-8;
    /// Population discarded by truncation above which a warning is raised.
    static constexpr double kTruncationWarning = 0.01;

    DensityMatrix(FockDims dims, CMatrix entries, double truncation_loss = 0.0);

    static DensityMatrix vacuum(FockDims dims);
    static DensityMatrix fock(FockDims dims, int n_early, int n_late);
    /// |psi><psi| / <psi|psi>.
    static DensityMatrix pure(FockDims dims, const CVector& psi);
    /// Hermitizes and renormalizes a numerically noisy matrix before validation.
    static DensityMatrix from_unnormalized(FockDims dims, CMatrix entries, double truncation_loss = 0.0);

    const FockDims& dims() const { return dims_; }
    const CMatrix& matrix() const { return entries_; }
    cplx operator()(int row, int col) const { return entries_(row, col); }
    double population(int n_early, int n_late) const;

    /// Fraction of population discarded by Fock truncation while building this state.
    double truncation_loss() const { return truncation_loss_; }
    bool truncation_warning() const { return truncation_loss_ > kTruncationWarning; }

    double min_eigenvalue() const;

    /// Projection onto a smaller (or equal) truncation, renormalized.
    DensityMatrix truncated(FockDims smaller) const;

    /// Convex combination w * this + (1 - w) * other.
    DensityMatrix mixed_with(const DensityMatrix& other, double weight_this) const;

   private:
    FockDims dims_;
    CMatrix entries_;
    double truncation_loss_ = 0.0;
};

/// C_e = a (x) I or C_l = I (x) a, with a[n-1, n] = sqrt(n).
FockOperator annihilation(FockDims dims, Mode which);

/// Sparse C_e^dag or C_l^dag (top Fock level maps to zero).
SparseCMatrix sparse_creation(FockDims dims, Mode which);

/// Product of truncated Bose-Einstein states, renormalized after truncation.
DensityMatrix thermal_state(FockDims dims, double n_early, double n_late);

/// C^dag rho C / Tr, where C^dag = c_early C_e^dag + c_late C_l^dag, i.e. the
/// coefficients are the amplitudes of the added photon: photon_add(vacuum, c)
/// is c_early |10> + c_late |01>. Requires |c_e|^2 + |c_l|^2 = 1.
DensityMatrix photon_add(const DensityMatrix& rho, cplx c_early, cplx c_late);

struct LossOptions {
    /// Ancilla truncation; 0 uses the system truncation of each mode and grows
    /// it until the discarded ancilla population is below the warning level.
    int ancilla_dim = 0;
};

/// Thermal attenuator on both modes: C -> sqrt(eta) C + sqrt(1 - eta) d with
/// <d^dag d> = n_env per mode, realized as a beamsplitter with a thermal
/// ancilla that is traced out. The output is renormalized; population pushed
/// above the truncation is recorded in truncation_loss().
DensityMatrix lossy_channel(const DensityMatrix& rho, double eta, double n_env_early, double n_env_late,
                            LossOptions options = {});

/// True when the normal-ordered moment has a nonzero truncated operator:
/// max(k, l) <= early - 1 and max(m, n) <= late - 1. For states supported in
/// the truncation, (a^k)^dag a^l built from truncated matrices is exact.
bool moment_representable(FockDims dims, const MultiIndex& alpha);

/// Tr{C_e^dag^k C_e^l C_l^dag^m C_l^n rho}. Throws DomainError when the index
/// is not representable in the truncation.
cplx normal_moment(const DensityMatrix& rho, const MultiIndex& alpha);

/// Sparse form of the monomial C_e^dag^k C_e^l C_l^dag^m C_l^n: each basis
/// column maps to at most one row. Used by moment evaluation and tomography.
struct MonomialOperator {
    MultiIndex alpha;
    std::vector<int> cols;
    std::vector<int> rows;
    std::vector<double> coeffs;

    /// Tr{M rho} for a dense matrix in the same basis.
    cplx expectation(const CMatrix& rho) const;
};

MonomialOperator monomial_operator(FockDims dims, const MultiIndex& alpha);

}  // namespace duet
