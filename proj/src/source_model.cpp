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

#include "duet/source_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Eigenvalues>

#include "duet/error.hpp"

namespace duet {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double reduce_phase(double phi) {
    double r = std::fmod(phi, kTwoPi);
    return r < 0.0 ? r + kTwoPi : r;
}

// Working truncation large enough that the population above it is < 1e-10:
// the output number distribution is dominated by a one-photon-added thermal
// law with occupation at most n_i + n_d.
FockDims working_dims(FockDims dims, const NoiseParams& params) {
    const double n = std::max(params.n_i_e, params.n_i_l) + std::max(params.n_d_e, params.n_d_l);
    const double y = n / (n + 1.0);
    int d = std::max(dims.early, dims.late) + 2;
    while (d * std::pow(y, d - 1) > 1e-10 && d < 28) {
        ++d;
    }
    return {d, d};
}

DensityMatrix added_and_attenuated(const NoiseParams& params, std::array<cplx, 2> c, FockDims work) {
    const DensityMatrix th = thermal_state(work, params.n_i_e, params.n_i_l);
    const DensityMatrix added = photon_add(th, c[0], c[1]);
    return lossy_channel(added, params.eta_ext, params.n_d_e, params.n_d_l);
}

DensityMatrix working_unconditional(const NoiseParams& params, FockDims work) {
    return lossy_channel(thermal_state(work, params.n_i_e, params.n_i_l), params.eta_ext, params.n_d_e,
                         params.n_d_l);
}

SparseCMatrix creation_power(FockDims dims, int n_early, int n_late) {
    const SparseCMatrix ce = sparse_creation(dims, Mode::early);
    const SparseCMatrix cl = sparse_creation(dims, Mode::late);
    SparseCMatrix out(dims.size(), dims.size());
    out.setIdentity();
    for (int i = 0; i < n_early; ++i) out = (ce * out).pruned();
    for (int i = 0; i < n_late; ++i) out = (cl * out).pruned();
    return out / std::sqrt(std::tgamma(n_early + 1.0) * std::tgamma(n_late + 1.0));
}

DensityMatrix working_heralded(const NoiseParams& params, const PairSourceParams& source, const HeraldMode& herald,
                               int max_pairs, FockDims work) {
    if (max_pairs <= 1) {
        return added_and_attenuated(params, herald_coefficients(herald), work);
    }
    // Optical detection mode chosen so the single-pair branch adds the
    // microwave photon with amplitudes herald_coefficients().
    const auto c = herald_coefficients(herald);
    const cplx u_e = c[0];
    const cplx u_l = c[1] * std::exp(cplx(0.0, -source.phi_p));
    const FockDims od{max_pairs + 1, max_pairs + 1};
    const CMatrix a_u = u_e * annihilation(od, Mode::early).entries + u_l * annihilation(od, Mode::late).entries;
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(a_u.adjoint() * a_u);
    Eigen::VectorXd click = eig.eigenvalues();
    for (int i = 0; i < click.size(); ++i) {
        click(i) = 1.0 - std::pow(1.0 - source.eta_opt, std::max(0.0, click(i)));
    }
    const CMatrix povm = eig.eigenvectors() * click.asDiagonal() * eig.eigenvectors().adjoint();

    const auto branches = ideal_joint_state(source.p, source.phi_p, max_pairs);
    const DensityMatrix th = thermal_state(work, params.n_i_e, params.n_i_l);
    std::vector<SparseCMatrix> lift;
    lift.reserve(branches.size());
    for (const auto& b : branches) {
        lift.push_back(creation_power(work, b.m_e, b.m_l));
    }
    CMatrix acc = CMatrix::Zero(work.size(), work.size());
    for (std::size_t i = 0; i < branches.size(); ++i) {
        const int oi = od.index(branches[i].o_e, branches[i].o_l);
        for (std::size_t j = 0; j < branches.size(); ++j) {
            const int oj = od.index(branches[j].o_e, branches[j].o_l);
            const cplx m = branches[i].amplitude * std::conj(branches[j].amplitude) * povm(oj, oi);
            if (std::abs(m) < 1e-300) {
                continue;
            }
            const CMatrix left = lift[i] * th.matrix();
            acc += m * (lift[j] * left.adjoint()).adjoint();
        }
    }
    if (!(acc.trace().real() > 1e-300)) {
        throw NumericalError("heralded_state: herald probability vanishes");
    }
    const DensityMatrix added = DensityMatrix::from_unnormalized(work, std::move(acc), th.truncation_loss());
    return lossy_channel(added, params.eta_ext, params.n_d_e, params.n_d_l);
}

DensityMatrix working_model(const NoiseParams& params, const HeraldMode& herald, const ModelOptions& options,
                            FockDims work) {
    DensityMatrix rho = working_heralded(params, options.source, herald, options.max_pairs, work);
    if (!options.imperfections) {
        return rho;
    }
    const PairSourceParams& src = options.source;
    if (herald.kind == HeraldKind::plus || herald.kind == HeraldKind::minus) {
        // Distinguishable time bins herald which-bin information at random.
        HeraldMode e = herald;
        e.kind = HeraldKind::early;
        HeraldMode l = herald;
        l.kind = HeraldKind::late;
        const DensityMatrix which = working_heralded(params, src, e, options.max_pairs, work)
                                        .mixed_with(working_heralded(params, src, l, options.max_pairs, work), 0.5);
        rho = rho.mixed_with(which, src.optical_visibility);
    }
    const double signal = src.p * src.eta_opt;
    if (src.dark_rate > 0.0) {
        const double dark_fraction = src.dark_rate / (signal + src.dark_rate);
        rho = rho.mixed_with(working_unconditional(params, work), 1.0 - dark_fraction);
    }
    return rho;
}

double mode_intensity(const DensityMatrix& rho, Mode which) {
    return normal_moment(rho, which == Mode::early ? MultiIndex{1, 1, 0, 0} : MultiIndex{0, 0, 1, 1}).real();
}

// <(C_e + e^{i phi} C_l)^dag (C_e + e^{i phi} C_l)> / 2.
double superposition_intensity(const DensityMatrix& rho, double phi) {
    const cplx coherence = normal_moment(rho, {1, 0, 0, 1});
    return 0.5 * (mode_intensity(rho, Mode::early) + mode_intensity(rho, Mode::late)) +
           (std::exp(cplx(0.0, phi)) * coherence).real();
}

double projector_weight(const DensityMatrix& rho, cplx a10, cplx a01) {
    const FockDims& d = rho.dims();
    const int i10 = d.index(1, 0);
    const int i01 = d.index(0, 1);
    const cplx v = std::conj(a10) * rho(i10, i10) * a10 + std::conj(a10) * rho(i10, i01) * a01 +
                   std::conj(a01) * rho(i01, i10) * a10 + std::conj(a01) * rho(i01, i01) * a01;
    return v.real();
}

}  // namespace

void NoiseParams::validate() const {
    for (double v : {eta_ext, n_i_e, n_i_l, n_d_e, n_d_l}) {
        if (!std::isfinite(v) || v < 0.0) {
            throw DomainError("noise parameters must be finite and nonnegative");
        }
    }
    if (eta_ext > 1.0) {
        throw DomainError("eta_ext must not exceed 1");
    }
}

const char* herald_name(HeraldKind kind) {
    switch (kind) {
        case HeraldKind::early:
            return "early";
        case HeraldKind::late:
            return "late";
        case HeraldKind::plus:
            return "plus";
        case HeraldKind::minus:
            return "minus";
    }
    return "?";
}

HeraldMode HeraldMode::normalized() const { return {kind, reduce_phase(phi_m), reduce_phase(phi_opt)}; }

std::array<cplx, 2> herald_coefficients(const HeraldMode& herald) {
    const double s = 1.0 / std::numbers::sqrt2;
    switch (herald.kind) {
        case HeraldKind::early:
            return {1.0, 0.0};
        case HeraldKind::late:
            return {0.0, 1.0};
        case HeraldKind::plus:
            return {s, s * std::exp(cplx(0.0, -herald.phi_opt))};
        case HeraldKind::minus:
            return {s, -s * std::exp(cplx(0.0, -herald.phi_opt))};
    }
    throw DomainError("unknown herald kind");
}

void PairSourceParams::validate() const {
    if (!(p >= 0.0 && p < 0.01)) {
        throw DomainError("pair probability p must be in [0, 0.01)");
    }
    for (double v : {eta_opt, optical_visibility}) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw DomainError("eta_opt and optical_visibility must be in [0, 1]");
        }
    }
    if (!(dark_rate >= 0.0 && dark_rate <= 1.0)) {
        throw DomainError("dark_rate is a per-gate probability in [0, 1]");
    }
    if (!std::isfinite(phi_p)) {
        throw DomainError("phi_p must be finite");
    }
}

std::vector<JointAmplitude> ideal_joint_state(double p, double phi_p, int max_pairs) {
    if (!(p >= 0.0 && p < 0.01)) {
        throw DomainError("pair probability p must be in [0, 0.01)");
    }
    if (max_pairs < 0) {
        throw DomainError("max_pairs must be nonnegative");
    }
    const double lambda = std::sqrt(p);
    std::vector<JointAmplitude> out;
    double norm2 = 0.0;
    for (int total = 0; total <= max_pairs; ++total) {
        for (int ne = total; ne >= 0; --ne) {
            const int nl = total - ne;
            const cplx amp = std::pow(lambda, total) * std::exp(cplx(0.0, nl * phi_p));
            out.push_back({ne, nl, ne, nl, amp});
            norm2 += std::norm(amp);
        }
    }
    for (auto& b : out) {
        b.amplitude /= std::sqrt(norm2);
    }
    return out;
}

DensityMatrix conditional_state(const NoiseParams& params, const HeraldMode& herald, FockDims dims) {
    params.validate();
    dims.validate();
    return added_and_attenuated(params, herald_coefficients(herald), working_dims(dims, params)).truncated(dims);
}

DensityMatrix heralded_state(const NoiseParams& params, const PairSourceParams& source, const HeraldMode& herald,
                             int max_pairs, FockDims dims) {
    params.validate();
    source.validate();
    dims.validate();
    return working_heralded(params, source, herald, max_pairs, working_dims(dims, params)).truncated(dims);
}

DensityMatrix unconditional_state(const NoiseParams& params, FockDims dims) {
    params.validate();
    dims.validate();
    return working_unconditional(params, working_dims(dims, params)).truncated(dims);
}

DensityMatrix model_state(const NoiseParams& params, const HeraldMode& herald, const ModelOptions& options,
                          FockDims dims) {
    params.validate();
    options.source.validate();
    dims.validate();
    return working_model(params, herald, options, working_dims(dims, params)).truncated(dims);
}

Eigen::Matrix2d conditional_intensities(const NoiseParams& params) {
    params.validate();
    const FockDims work = working_dims({}, params);
    Eigen::Matrix2d n;
    const DensityMatrix re = added_and_attenuated(params, {1.0, 0.0}, work);
    const DensityMatrix rl = added_and_attenuated(params, {0.0, 1.0}, work);
    n << mode_intensity(re, Mode::early), mode_intensity(re, Mode::late), mode_intensity(rl, Mode::early),
        mode_intensity(rl, Mode::late);
    return n;
}

double visibility_z(const Eigen::Matrix2d& n) {
    if ((n.array() < 0.0).any() || !n.allFinite()) {
        throw DomainError("visibility_z: intensities must be finite and nonnegative");
    }
    const double total = n.sum();
    if (!(total > 0.0)) {
        throw DomainError("visibility_z: undefined for all-zero intensities");
    }
    return (n(0, 0) - n(0, 1) - n(1, 0) + n(1, 1)) / total;
}

Fringe visibility_x(const NoiseParams& params, const std::vector<double>& phi_m_grid, double phi_opt,
                    const ModelOptions& options) {
    params.validate();
    const FockDims work = working_dims({}, params);
    const DensityMatrix rp = working_model(params, {HeraldKind::plus, phi_opt, phi_opt}, options, work);
    const DensityMatrix rm = working_model(params, {HeraldKind::minus, phi_opt, phi_opt}, options, work);
    Fringe f;
    f.phi_m = phi_m_grid;
    for (double phi : phi_m_grid) {
        f.plus.push_back(superposition_intensity(rp, phi));
        f.minus.push_back(superposition_intensity(rm, phi));
    }
    const double pp = superposition_intensity(rp, phi_opt);
    const double pm = superposition_intensity(rp, phi_opt + std::numbers::pi);
    const double mp = superposition_intensity(rm, phi_opt);
    const double mm = superposition_intensity(rm, phi_opt + std::numbers::pi);
    f.visibility = (pp - pm - mp + mm) / (pp + pm + mp + mm);
    return f;
}

CrossCorrelation cross_correlation(const NoiseParams& params) {
    params.validate();
    const FockDims work = working_dims({}, params);
    const Eigen::Matrix2d n = conditional_intensities(params);
    const DensityMatrix u = working_unconditional(params, work);
    const double ue = mode_intensity(u, Mode::early);
    const double ul = mode_intensity(u, Mode::late);
    if (!(ue > 0.0) || !(ul > 0.0)) {
        throw DomainError("cross_correlation: unconditional intensity is zero");
    }
    return {n(0, 0) / ue, n(1, 1) / ul};
}

Eigen::Matrix2d conditional_probabilities(const DensityMatrix& first, const DensityMatrix& second, Basis basis,
                                          double phi_m) {
    Eigen::Matrix2d p;
    const DensityMatrix* states[2] = {&first, &second};
    const cplx rot = std::exp(cplx(0.0, -phi_m));
    const double s = 1.0 / std::numbers::sqrt2;
    for (int i = 0; i < 2; ++i) {
        if (basis == Basis::Z) {
            p(i, 0) = projector_weight(*states[i], 1.0, 0.0);
            p(i, 1) = projector_weight(*states[i], 0.0, 1.0);
        } else {
            p(i, 0) = projector_weight(*states[i], s, s * rot);
            p(i, 1) = projector_weight(*states[i], s, -s * rot);
        }
    }
    const double total = p.sum();
    if (!(total >= 1e-12)) {
        throw NumericalError("conditional_probabilities: no weight in the single-photon subspace");
    }
    return p / total;
}

double fidelity_lower_bound(const Eigen::Matrix2d& pz, const Eigen::Matrix2d& px) {
    for (const Eigen::Matrix2d* m : {&pz, &px}) {
        if ((m->array() < -1e-12).any() || std::abs(m->sum() - 1.0) > 1e-6) {
            throw DomainError("fidelity_lower_bound: probability matrices must be nonnegative and sum to 1");
        }
    }
    const double cross = std::max(0.0, px(0, 1)) * std::max(0.0, px(1, 0));
    return 0.5 * (pz(0, 0) + pz(1, 1) - pz(0, 1) - pz(1, 0) + px(0, 0) + px(1, 1) - 2.0 * std::sqrt(cross));
}

HeraldStatistics herald_statistics(const PairSourceParams& source, double repetition_period) {
    source.validate();
    if (!(repetition_period > 0.0)) {
        throw DomainError("repetition period must be positive");
    }
    HeraldStatistics h;
    h.p_click = source.p * source.eta_opt + source.dark_rate;
    h.rate = h.p_click / repetition_period;
    h.multi_photon_fraction = source.p;
    return h;
}

ModelSummary summarize_model(const NoiseParams& params, double phi_opt, double phi_m, const ModelOptions& options,
                             FockDims dims) {
    params.validate();
    options.source.validate();
    dims.validate();
    const FockDims work = working_dims(dims, params);
    ModelSummary s;
    const DensityMatrix re = working_model(params, {HeraldKind::early, phi_m, phi_opt}, options, work);
    const DensityMatrix rl = working_model(params, {HeraldKind::late, phi_m, phi_opt}, options, work);
    const DensityMatrix rp = working_model(params, {HeraldKind::plus, phi_m, phi_opt}, options, work);
    const DensityMatrix rm = working_model(params, {HeraldKind::minus, phi_m, phi_opt}, options, work);
    s.n << mode_intensity(re, Mode::early), mode_intensity(re, Mode::late), mode_intensity(rl, Mode::early),
        mode_intensity(rl, Mode::late);
    s.v_z = visibility_z(s.n);
    const double pp = superposition_intensity(rp, phi_m);
    const double pm = superposition_intensity(rp, phi_m + std::numbers::pi);
    const double mp = superposition_intensity(rm, phi_m);
    const double mm = superposition_intensity(rm, phi_m + std::numbers::pi);
    s.v_x = (pp - pm - mp + mm) / (pp + pm + mp + mm);
    const DensityMatrix u = working_unconditional(params, work);
    s.g2 = {s.n(0, 0) / mode_intensity(u, Mode::early), s.n(1, 1) / mode_intensity(u, Mode::late)};
    s.pz = conditional_probabilities(re.truncated(dims), rl.truncated(dims), Basis::Z);
    s.px = conditional_probabilities(rp.truncated(dims), rm.truncated(dims), Basis::X, phi_m);
    s.f_lb = fidelity_lower_bound(s.pz, s.px);
    return s;
}

}  // namespace duet
