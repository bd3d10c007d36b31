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

#include "duet/fock.hpp"

#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "duet/error.hpp"

namespace duet {

namespace {

double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

// sqrt(a! / b!) for a >= b.
double sqrt_factorial_ratio(int a, int b) { return std::exp(0.5 * (log_factorial(a) - log_factorial(b))); }

CMatrix ladder(int d) {
    CMatrix a = CMatrix::Zero(d, d);
    for (int n = 1; n < d; ++n) {
        a(n - 1, n) = std::sqrt(static_cast<double>(n));
    }
    return a;
}

// Geometric populations x^n (x = nbar / (nbar + 1)) truncated to d levels;
// returns the normalized populations and the discarded tail x^d.
std::vector<double> bose_einstein(double nbar, int d, double* discarded) {
    std::vector<double> p(d, 0.0);
    if (nbar == 0.0) {
        p[0] = 1.0;
        *discarded = 0.0;
        return p;
    }
    const double x = nbar / (nbar + 1.0);
    double sum = 0.0;
    double term = 1.0;
    for (int n = 0; n < d; ++n) {
        p[n] = term;
        sum += term;
        term *= x;
    }
    for (double& v : p) {
        v /= sum;
    }
    *discarded = std::pow(x, d);
    return p;
}

void check_nonnegative_finite(double v, const char* name) {
    if (!std::isfinite(v) || v < 0.0) {
        throw DomainError(std::string(name) + " must be finite and nonnegative, got " + std::to_string(v));
    }
}

double combine_loss(double a, double b) { return 1.0 - (1.0 - a) * (1.0 - b); }

// Beamsplitter amplitudes <j, m| U |n, k> for U a^dag U^dag = t a^dag - r b^dag,
// U b^dag U^dag = r a^dag + t b^dag, with m = n + k - j implied.
// Indexed [j][n][k], j < j_max.
struct BeamsplitterTable {
    int j_max;
    int n_max;
    int k_max;
    std::vector<double> values;

    double operator()(int j, int n, int k) const { return values[(j * n_max + n) * k_max + k]; }
};

BeamsplitterTable beamsplitter_amplitudes(double eta, int j_max, int n_max, int k_max) {
    const double t = std::sqrt(eta);
    const double r = std::sqrt(1.0 - eta);
    BeamsplitterTable table{j_max, n_max, k_max, std::vector<double>(j_max * n_max * k_max, 0.0)};
    for (int n = 0; n < n_max; ++n) {
        for (int k = 0; k < k_max; ++k) {
            for (int j = 0; j < j_max && j <= n + k; ++j) {
                const int m = n + k - j;
                double amp = 0.0;
                for (int p = 0; p <= n; ++p) {
                    const int q = j - p;
                    if (q < 0 || q > k) {
                        continue;
                    }
                    const double log_binoms = log_factorial(n) - log_factorial(p) - log_factorial(n - p) +
                                              log_factorial(k) - log_factorial(q) - log_factorial(k - q);
                    const double sign = ((n - p) % 2 == 0) ? 1.0 : -1.0;
                    amp += sign * std::exp(log_binoms) * std::pow(t, p) * std::pow(r, n - p) * std::pow(r, q) *
                           std::pow(t, k - q);
                }
                amp *= std::exp(0.5 * (log_factorial(j) + log_factorial(m) - log_factorial(n) - log_factorial(k)));
                table.values[(j * n_max + n) * k_max + k] = amp;
            }
        }
    }
    return table;
}

// Applies the single-mode thermal attenuator to one tensor factor of rho.
CMatrix attenuate_mode(const CMatrix& rho, FockDims dims, Mode which, double eta, double n_env, int ancilla_dim) {
    const int d = which == Mode::early ? dims.early : dims.late;
    const int other = which == Mode::early ? dims.late : dims.early;
    double ancilla_tail = 0.0;
    const std::vector<double> q = bose_einstein(n_env, ancilla_dim, &ancilla_tail);
    const BeamsplitterTable amp = beamsplitter_amplitudes(eta, d, d, ancilla_dim);

    // Superoperator S[j, j', n, n'] is nonzero only for n - j = n' - j'.
    auto joint = [&](int mine, int theirs) {
        return which == Mode::early ? dims.index(mine, theirs) : dims.index(theirs, mine);
    };

    CMatrix out = CMatrix::Zero(rho.rows(), rho.cols());
    for (int j = 0; j < d; ++j) {
        for (int jp = 0; jp < d; ++jp) {
            for (int n = 0; n < d; ++n) {
                const int np = n - j + jp;
                if (np < 0 || np >= d) {
                    continue;
                }
                double s = 0.0;
                for (int k = 0; k < ancilla_dim; ++k) {
                    if (n + k - j < 0) {
                        continue;
                    }
                    s += q[k] * amp(j, n, k) * amp(jp, np, k);
                }
                if (s == 0.0) {
                    continue;
                }
                for (int a = 0; a < other; ++a) {
                    for (int b = 0; b < other; ++b) {
                        out(joint(j, a), joint(jp, b)) += s * rho(joint(n, a), joint(np, b));
                    }
                }
            }
        }
    }
    return out;
}

}  // namespace

void FockDims::validate() const {
    if (early < 2 || late < 2) {
        throw DomainError("Fock truncation must be >= 2 per mode, got (" + std::to_string(early) + ", " +
                          std::to_string(late) + ")");
    }
}

DensityMatrix::DensityMatrix(FockDims dims, CMatrix entries, double truncation_loss)
    : dims_(dims), entries_(std::move(entries)), truncation_loss_(truncation_loss) {
    dims_.validate();
    if (entries_.rows() != dims_.size() || entries_.cols() != dims_.size()) {
        throw DomainError("density matrix shape does not match Fock dims");
    }
    if (!entries_.allFinite()) {
        throw DomainError("density matrix has non-finite entries");
    }
    const double asym = (entries_ - entries_.adjoint()).cwiseAbs().maxCoeff();
    if (asym > kHermitianTol) {
        throw DomainError("density matrix is not Hermitian (max |rho - rho^dag| = " + std::to_string(asym) + ")");
    }
    entries_ = 0.5 * (entries_ + entries_.adjoint()).eval();
    const double tr = entries_.trace().real();
    if (std::abs(tr - 1.0) > kTraceTol) {
        throw DomainError("density matrix trace is " + std::to_string(tr));
    }
    // rho + tol I is positive definite iff every eigenvalue exceeds -tol.
    const CMatrix shifted = entries_ + kEigenTol * CMatrix::Identity(entries_.rows(), entries_.cols());
    if (Eigen::LLT<CMatrix>(shifted).info() != Eigen::Success) {
        const double lo = min_eigenvalue();
        if (lo < -kEigenTol) {
            throw DomainError("density matrix has negative eigenvalue " + std::to_string(lo));
        }
    }
}

DensityMatrix DensityMatrix::vacuum(FockDims dims) { return fock(dims, 0, 0); }

DensityMatrix DensityMatrix::fock(FockDims dims, int n_early, int n_late) {
    dims.validate();
    if (n_early < 0 || n_early >= dims.early || n_late < 0 || n_late >= dims.late) {
        throw DomainError("Fock state outside truncation");
    }
    CMatrix m = CMatrix::Zero(dims.size(), dims.size());
    m(dims.index(n_early, n_late), dims.index(n_early, n_late)) = 1.0;
    return DensityMatrix(dims, std::move(m));
}

DensityMatrix DensityMatrix::pure(FockDims dims, const CVector& psi) {
    const double norm2 = psi.squaredNorm();
    if (!(norm2 > 0.0)) {
        throw DomainError("cannot build a pure state from a zero vector");
    }
    return DensityMatrix(dims, psi * psi.adjoint() / norm2);
}

DensityMatrix DensityMatrix::from_unnormalized(FockDims dims, CMatrix entries, double truncation_loss) {
    entries = 0.5 * (entries + entries.adjoint()).eval();
    const double tr = entries.trace().real();
    if (!(tr > 0.0)) {
        throw NumericalError("cannot normalize a matrix with nonpositive trace");
    }
    entries /= tr;
    return DensityMatrix(dims, std::move(entries), truncation_loss);
}

double DensityMatrix::population(int n_early, int n_late) const {
    return entries_(dims_.index(n_early, n_late), dims_.index(n_early, n_late)).real();
}

double DensityMatrix::min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<CMatrix> solver(entries_, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
}

DensityMatrix DensityMatrix::truncated(FockDims smaller) const {
    smaller.validate();
    if (smaller.early > dims_.early || smaller.late > dims_.late) {
        throw DomainError("truncated() cannot enlarge the Fock space");
    }
    CMatrix out(smaller.size(), smaller.size());
    for (int r = 0; r < smaller.size(); ++r) {
        const int rr = dims_.index(smaller.early_of(r), smaller.late_of(r));
        for (int c = 0; c < smaller.size(); ++c) {
            out(r, c) = entries_(rr, dims_.index(smaller.early_of(c), smaller.late_of(c)));
        }
    }
    const double kept = out.trace().real();
    return from_unnormalized(smaller, std::move(out), combine_loss(truncation_loss_, 1.0 - kept));
}

DensityMatrix DensityMatrix::mixed_with(const DensityMatrix& other, double weight_this) const {
    if (!(dims_ == other.dims_)) {
        throw DomainError("cannot mix states with different dims");
    }
    if (weight_this < 0.0 || weight_this > 1.0) {
        throw DomainError("mixture weight must be in [0, 1]");
    }
    return DensityMatrix(dims_, weight_this * entries_ + (1.0 - weight_this) * other.entries_,
                         std::max(truncation_loss_, other.truncation_loss_));
}

SparseCMatrix sparse_creation(FockDims dims, Mode which) {
    dims.validate();
    std::vector<Eigen::Triplet<cplx>> t;
    for (int c = 0; c < dims.size(); ++c) {
        const int ne = dims.early_of(c);
        const int nl = dims.late_of(c);
        if (which == Mode::early && ne + 1 < dims.early) {
            t.emplace_back(dims.index(ne + 1, nl), c, std::sqrt(ne + 1.0));
        } else if (which == Mode::late && nl + 1 < dims.late) {
            t.emplace_back(dims.index(ne, nl + 1), c, std::sqrt(nl + 1.0));
        }
    }
    SparseCMatrix out(dims.size(), dims.size());
    out.setFromTriplets(t.begin(), t.end());
    return out;
}

FockOperator annihilation(FockDims dims, Mode which) {
    dims.validate();
    const CMatrix a_e = which == Mode::early ? ladder(dims.early) : CMatrix::Identity(dims.early, dims.early);
    const CMatrix a_l = which == Mode::late ? ladder(dims.late) : CMatrix::Identity(dims.late, dims.late);
    CMatrix out = CMatrix::Zero(dims.size(), dims.size());
    for (int r = 0; r < dims.size(); ++r) {
        for (int c = 0; c < dims.size(); ++c) {
            out(r, c) = a_e(dims.early_of(r), dims.early_of(c)) * a_l(dims.late_of(r), dims.late_of(c));
        }
    }
    return {dims, out};
}

DensityMatrix thermal_state(FockDims dims, double n_early, double n_late) {
    dims.validate();
    check_nonnegative_finite(n_early, "n_early");
    check_nonnegative_finite(n_late, "n_late");
    double tail_e = 0.0;
    double tail_l = 0.0;
    const auto pe = bose_einstein(n_early, dims.early, &tail_e);
    const auto pl = bose_einstein(n_late, dims.late, &tail_l);
    CMatrix m = CMatrix::Zero(dims.size(), dims.size());
    for (int a = 0; a < dims.early; ++a) {
        for (int b = 0; b < dims.late; ++b) {
            m(dims.index(a, b), dims.index(a, b)) = pe[a] * pl[b];
        }
    }
    return DensityMatrix(dims, std::move(m), combine_loss(tail_e, tail_l));
}

DensityMatrix photon_add(const DensityMatrix& rho, cplx c_early, cplx c_late) {
    const double norm = std::norm(c_early) + std::norm(c_late);
    if (std::abs(norm - 1.0) > 1e-10) {
        throw DomainError("photon_add coefficients must satisfy |c_e|^2 + |c_l|^2 = 1");
    }
    const FockDims dims = rho.dims();
    const SparseCMatrix create = c_early * sparse_creation(dims, Mode::early) + c_late * sparse_creation(dims, Mode::late);
    CMatrix out = create * (create * rho.matrix()).adjoint();
    out = out.adjoint().eval();
    const double kept = out.trace().real();

    // Untruncated norm Tr{C C^dag rho} = |c_e|^2 (<n_e> + 1) + |c_l|^2 (<n_l> + 1)
    // + 2 Re(c_e^* c_l <C_l^dag C_e>); these moments are exact on the truncated space.
    const CMatrix& m = rho.matrix();
    const double exact = std::norm(c_early) * (monomial_operator(dims, {1, 1, 0, 0}).expectation(m).real() + 1.0) +
                         std::norm(c_late) * (monomial_operator(dims, {0, 0, 1, 1}).expectation(m).real() + 1.0) +
                         2.0 * (std::conj(c_early) * c_late * monomial_operator(dims, {0, 1, 1, 0}).expectation(m)).real();
    if (exact < 1e-14 || kept < 1e-14) {
        throw NumericalError("photon_add: Tr{C^dag rho C} vanishes");
    }
    const double loss = std::max(0.0, 1.0 - kept / exact);
    return DensityMatrix::from_unnormalized(dims, std::move(out), combine_loss(rho.truncation_loss(), loss));
}

DensityMatrix lossy_channel(const DensityMatrix& rho, double eta, double n_env_early, double n_env_late,
                            LossOptions options) {
    if (!std::isfinite(eta) || eta < 0.0 || eta > 1.0) {
        throw DomainError("lossy_channel: eta must be in [0, 1]");
    }
    check_nonnegative_finite(n_env_early, "n_env_early");
    check_nonnegative_finite(n_env_late, "n_env_late");
    const FockDims dims = rho.dims();

    auto ancilla_for = [&](int system_dim, double n_env) {
        int da = options.ancilla_dim > 0 ? options.ancilla_dim : system_dim;
        if (options.ancilla_dim == 0 && n_env > 0.0) {
            // Grow past the default until the ancilla tail is negligible.
            const double x = n_env / (n_env + 1.0);
            while (std::pow(x, da) > 1e-12 && da < 4 * system_dim + 32) {
                ++da;
            }
        }
        return da;
    };

    CMatrix m = attenuate_mode(rho.matrix(), dims, Mode::early, eta, n_env_early, ancilla_for(dims.early, n_env_early));
    m = attenuate_mode(m, dims, Mode::late, eta, n_env_late, ancilla_for(dims.late, n_env_late));
    const double kept = m.trace().real();
    return DensityMatrix::from_unnormalized(dims, std::move(m),
                                            combine_loss(rho.truncation_loss(), std::max(0.0, 1.0 - kept)));
}

bool moment_representable(FockDims dims, const MultiIndex& alpha) {
    return alpha.k >= 0 && alpha.l >= 0 && alpha.m >= 0 && alpha.n >= 0 &&
           std::max(alpha.k, alpha.l) <= dims.early - 1 && std::max(alpha.m, alpha.n) <= dims.late - 1;
}

MonomialOperator monomial_operator(FockDims dims, const MultiIndex& alpha) {
    MonomialOperator op;
    op.alpha = alpha;
    for (int col = 0; col < dims.size(); ++col) {
        const int ne = dims.early_of(col);
        const int nl = dims.late_of(col);
        if (ne < alpha.l || nl < alpha.n) {
            continue;
        }
        const int te = ne - alpha.l + alpha.k;
        const int tl = nl - alpha.n + alpha.m;
        if (te >= dims.early || tl >= dims.late) {
            continue;
        }
        const double coeff = sqrt_factorial_ratio(ne, ne - alpha.l) * sqrt_factorial_ratio(te, ne - alpha.l) *
                             sqrt_factorial_ratio(nl, nl - alpha.n) * sqrt_factorial_ratio(tl, nl - alpha.n);
        op.cols.push_back(col);
        op.rows.push_back(dims.index(te, tl));
        op.coeffs.push_back(coeff);
    }
    return op;
}

cplx MonomialOperator::expectation(const CMatrix& rho) const {
    cplx acc = 0.0;
    for (std::size_t i = 0; i < cols.size(); ++i) {
        acc += coeffs[i] * rho(cols[i], rows[i]);
    }
    return acc;
}

cplx normal_moment(const DensityMatrix& rho, const MultiIndex& alpha) {
    if (!moment_representable(rho.dims(), alpha)) {
        throw DomainError("moment (" + std::to_string(alpha.k) + "," + std::to_string(alpha.l) + "," +
                          std::to_string(alpha.m) + "," + std::to_string(alpha.n) +
                          ") is not representable in the Fock truncation");
    }
    return monomial_operator(rho.dims(), alpha).expectation(rho.matrix());
}

}  // namespace duet
