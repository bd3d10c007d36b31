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


#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "duet/error.hpp"
#include "duet/source_model.hpp"

namespace duet {
namespace {

constexpr double kPi = std::numbers::pi;

NoiseParams noiseless() { return {1.0, 0.0, 0.0, 0.0, 0.0}; }

// eta (1 + 2 n_i) + (1 - eta) n_d for the heralded mode, eta n_i + (1 - eta) n_d for the other.
Eigen::Matrix2d closed_form_intensities(const NoiseParams& p) {
    const double de = (1.0 - p.eta_ext) * p.n_d_e, dl = (1.0 - p.eta_ext) * p.n_d_l;
    Eigen::Matrix2d n;
    n << p.eta_ext * (1.0 + 2.0 * p.n_i_e) + de, p.eta_ext * p.n_i_l + dl, p.eta_ext * p.n_i_e + de,
        p.eta_ext * (1.0 + 2.0 * p.n_i_l) + dl;
    return n;
}

DensityMatrix dual_rail(double a10, cplx a01) {
    const FockDims d{};
    CVector psi = CVector::Zero(d.size());
    psi(d.index(1, 0)) = a10;
    psi(d.index(0, 1)) = a01;
    return DensityMatrix::pure(d, psi);
}

TEST(JointState, VacuumLimit) {
    const auto amps = ideal_joint_state(0.0, 0.3, 1);
    double norm = 0.0;
    for (const auto& a : amps) {
        if (a.o_e + a.o_l + a.m_e + a.m_l == 0) EXPECT_NEAR(std::abs(a.amplitude), 1.0, 1e-15);
        else EXPECT_EQ(std::abs(a.amplitude), 0.0);
        norm += std::norm(a.amplitude);
    }
    EXPECT_NEAR(norm, 1.0, 1e-15);
}

TEST(JointState, PumpPhaseOnLateBranch) {
    const double phi = 0.81;
    cplx early = 0.0, late = 0.0;
    for (const auto& a : ideal_joint_state(1e-4, phi, 1)) {
        if (a.o_e == 1 && a.m_e == 1 && a.o_l == 0 && a.m_l == 0) early = a.amplitude;
        if (a.o_l == 1 && a.m_l == 1 && a.o_e == 0 && a.m_e == 0) late = a.amplitude;
    }
    ASSERT_GT(std::abs(early), 0.0);
    EXPECT_NEAR(std::abs(late / early - std::polar(1.0, phi)), 0.0, 1e-14);
    EXPECT_NEAR(std::norm(early), 1e-4, 1e-7);
}

TEST(ConditionalState, NoiselessEarlyHeraldIsSinglePhoton) {
    const DensityMatrix rho = conditional_state(noiseless(), {HeraldKind::early});
    EXPECT_NEAR(rho.population(1, 0), 1.0, 1e-12);
}

TEST(ConditionalState, TableIntensities) {
    const NoiseParams p;
    const DensityMatrix e = conditional_state(p, {HeraldKind::early});
    const DensityMatrix l = conditional_state(p, {HeraldKind::late});
    EXPECT_NEAR(normal_moment(e, {1, 1, 0, 0}).real(), 0.549, 1e-3);
    EXPECT_NEAR(normal_moment(e, {0, 0, 1, 1}).real(), 0.129, 1e-3);
    EXPECT_NEAR(normal_moment(l, {0, 0, 1, 1}).real(), 0.649, 1e-3);
    EXPECT_NEAR(normal_moment(l, {1, 1, 0, 0}).real(), 0.079, 1e-3);
}

TEST(ConditionalIntensities, MatchClosedFormOverParameterRange) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 20; ++t) {
        NoiseParams p;
        p.eta_ext = 0.3 + 0.3 * u(rng);
        p.n_i_e = 0.3 * u(rng);
        p.n_i_l = 0.3 * u(rng);
        p.n_d_e = 0.1 * u(rng);
        p.n_d_l = 0.1 * u(rng);
        EXPECT_LT((conditional_intensities(p) - closed_form_intensities(p)).cwiseAbs().maxCoeff(), 1e-6);
    }
    Eigen::Matrix2d table;
    table << 0.549, 0.129, 0.079, 0.649;
    EXPECT_LT((conditional_intensities({}) - table).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(ConditionalIntensities, BellLimitAndSymmetry) {
    EXPECT_LT((conditional_intensities(noiseless()) - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    NoiseParams sym{0.5, 0.2, 0.2, 0.07, 0.07};
    const Eigen::Matrix2d n = conditional_intensities(sym);
    EXPECT_NEAR(n(0, 0), n(1, 1), 1e-12);
    EXPECT_NEAR(n(0, 1), n(1, 0), 1e-12);
}

TEST(VisibilityZ, Limits) {
    EXPECT_NEAR(visibility_z(Eigen::Matrix2d::Identity()), 1.0, 1e-15);
    EXPECT_NEAR(visibility_z(Eigen::Matrix2d::Constant(0.3)), 0.0, 1e-15);
    EXPECT_NEAR(visibility_z(conditional_intensities({})), 0.70, 0.005);
    EXPECT_THROW(visibility_z(Eigen::Matrix2d::Zero()), DomainError);
}

TEST(VisibilityX, NoiselessFringeIsCosine) {
    std::vector<double> grid;
    for (int i = 0; i < 64; ++i) grid.push_back(2.0 * kPi * i / 64);
    const Fringe f = visibility_x(noiseless(), grid, 0.56 * kPi);
    Eigen::MatrixXd a(grid.size(), 3);
    Eigen::VectorXd y(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        a.row(i) << 1.0, std::cos(grid[i]), std::sin(grid[i]);
        y(i) = f.plus[i];
    }
    const Eigen::VectorXd c = a.colPivHouseholderQr().solve(y);
    EXPECT_LT((a * c - y).cwiseAbs().maxCoeff(), 1e-6);
    // Maximum at the optical phase.
    EXPECT_NEAR(std::atan2(c(2), c(1)), 0.56 * kPi, 1e-9);
    EXPECT_NEAR(f.visibility, 1.0, 1e-12);
}

TEST(VisibilityX, WhichBinMixtureIsFlat) {
    const DensityMatrix mix = DensityMatrix::fock({}, 1, 0).mixed_with(DensityMatrix::fock({}, 0, 1), 0.5);
    for (double phi : {0.0, 0.7, 2.1, 4.4}) {
        // <(C_e + e^{i phi} C_l)^dag (C_e + e^{i phi} C_l)> / 2
        const cplx v = 0.5 * (normal_moment(mix, {1, 1, 0, 0}) + normal_moment(mix, {0, 0, 1, 1}) +
                              std::polar(1.0, phi) * normal_moment(mix, {1, 0, 0, 1}) +
                              std::polar(1.0, -phi) * normal_moment(mix, {0, 1, 1, 0}));
        EXPECT_NEAR(v.real(), 0.5, 1e-15);
    }
    const Eigen::Matrix2d px = conditional_probabilities(mix, mix, Basis::X, 0.3);
    EXPECT_LT((px - Eigen::Matrix2d::Constant(0.25)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(VisibilityX, TableValue) {
    const Fringe f = visibility_x({}, {0.56 * kPi});
    EXPECT_NEAR(f.visibility, 0.70, 0.005);
}

TEST(CrossCorrelation, TableValues) {
    const CrossCorrelation g = cross_correlation({});
    EXPECT_NEAR(g.early, 6.95, 0.05);
    EXPECT_NEAR(g.late, 5.03, 0.05);
    EXPECT_GT(g.early, 2.0);
    EXPECT_GT(g.late, 2.0);
}

TEST(ConditionalProbabilities, BellStates) {
    const Eigen::Matrix2d pz =
        conditional_probabilities(DensityMatrix::fock({}, 1, 0), DensityMatrix::fock({}, 0, 1), Basis::Z);
    EXPECT_LT((pz - 0.5 * Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff(), 1e-15);
    const double s = 1.0 / std::numbers::sqrt2;
    const double phi = 0.56 * kPi;
    // Plus herald: (|10> + e^{-i phi}|01>)/sqrt2; minus: the orthogonal superposition.
    const Eigen::Matrix2d px = conditional_probabilities(dual_rail(s, s * std::polar(1.0, -phi)),
                                                         dual_rail(s, -s * std::polar(1.0, -phi)), Basis::X, phi);
    EXPECT_LT((px - 0.5 * Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_NEAR(fidelity_lower_bound(pz, px), 1.0, 1e-15);
}

TEST(ConditionalProbabilities, SumToOne) {
    const NoiseParams p;
    const DensityMatrix e = conditional_state(p, {HeraldKind::early});
    const DensityMatrix l = conditional_state(p, {HeraldKind::late});
    for (Basis b : {Basis::Z, Basis::X}) {
        EXPECT_NEAR(conditional_probabilities(e, l, b, 1.3).sum(), 1.0, 1e-15);
    }
    EXPECT_THROW(conditional_probabilities(DensityMatrix::vacuum({}), DensityMatrix::vacuum({}), Basis::Z),
                 NumericalError);
}

TEST(FidelityLowerBound, ClassicalLimit) {
    Eigen::Matrix2d pz = 0.5 * Eigen::Matrix2d::Identity();
    Eigen::Matrix2d px = Eigen::Matrix2d::Constant(0.25);
    EXPECT_EQ(fidelity_lower_bound(pz, px), 0.5);
    EXPECT_THROW(fidelity_lower_bound(pz, Eigen::Matrix2d::Constant(0.3)), DomainError);
}

TEST(FidelityLowerBound, TableModel) {
    const ModelSummary s = summarize_model({}, 0.56 * kPi, 0.56 * kPi);
    EXPECT_NEAR(s.f_lb, 0.83, 0.01);
}

TEST(FidelityLowerBound, NoiselessChainIsOne) {
    const ModelSummary s = summarize_model(noiseless(), 0.56 * kPi, 0.56 * kPi);
    EXPECT_NEAR(s.f_lb, 1.0, 1e-10);
    EXPECT_NEAR(s.v_z, 1.0, 1e-10);
    EXPECT_NEAR(s.v_x, 1.0, 1e-10);
}

TEST(FidelityLowerBound, GlobalPhaseInvariance) {
    const double base = summarize_model({}, 0.56 * kPi, 0.56 * kPi).f_lb;
    for (double shift : {0.3, 1.1, 2.9, -0.7}) {
        EXPECT_NEAR(summarize_model({}, 0.56 * kPi + shift, 0.56 * kPi + shift).f_lb, base, 1e-12) << shift;
    }
}

TEST(Visibilities, BoundedAndNonIncreasingInNoise) {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 10; ++t) {
        NoiseParams p;
        p.eta_ext = 0.3 + 0.5 * u(rng);
        p.n_i_e = 0.2 * u(rng);
        p.n_i_l = 0.2 * u(rng);
        p.n_d_e = 0.1 * u(rng);
        p.n_d_l = 0.1 * u(rng);
        const ModelSummary s0 = summarize_model(p, 0.56 * kPi, 0.56 * kPi);
        EXPECT_GE(s0.v_z, 0.0);
        EXPECT_LE(s0.v_z, 1.0);
        EXPECT_GE(s0.v_x, 0.0);
        EXPECT_LE(s0.v_x, 1.0);
        for (int which = 0; which < 4; ++which) {
            NoiseParams q = p;
            double* field[4] = {&q.n_i_e, &q.n_i_l, &q.n_d_e, &q.n_d_l};
            *field[which] += 0.05;
            const ModelSummary s1 = summarize_model(q, 0.56 * kPi, 0.56 * kPi);
            EXPECT_LE(s1.v_z, s0.v_z + 1e-12);
            EXPECT_LE(s1.v_x, s0.v_x + 1e-12);
        }
    }
}

TEST(HeraldStatistics, Rates) {
    PairSourceParams src;
    const HeraldStatistics h = herald_statistics(src, 20e-6);
    EXPECT_NEAR(h.p_click, 5.5e-6, 1e-18);
    EXPECT_NEAR(h.p_click, 5.2e-6, 0.06 * 5.5e-6);
    EXPECT_NEAR(h.rate, 0.275, 1e-12);
    EXPECT_NEAR(h.multi_photon_fraction, 1e-4, 1e-18);
    src.p = 0.0;
    EXPECT_EQ(herald_statistics(src, 20e-6).p_click, 0.0);
}

TEST(TwoPairBranches, NegligibleAtNominalPumping) {
    ModelOptions one, two;
    two.max_pairs = 2;
    const double f1 = summarize_model({}, 0.56 * kPi, 0.56 * kPi, one).f_lb;
    const double f2 = summarize_model({}, 0.56 * kPi, 0.56 * kPi, two).f_lb;
    EXPECT_LT(std::abs(f1 - f2), 0.01);
    EXPECT_GT(std::abs(f1 - f2), 0.0);
}

TEST(Imperfections, LowerTheVisibilities) {
    ModelOptions opt;
    opt.imperfections = true;
    opt.source.dark_rate = 1e-6;
    const ModelSummary ideal = summarize_model({}, 0.56 * kPi, 0.56 * kPi);
    const ModelSummary real = summarize_model({}, 0.56 * kPi, 0.56 * kPi, opt);
    EXPECT_LT(real.v_x, ideal.v_x);
    EXPECT_LT(real.v_z, ideal.v_z);
    EXPECT_LT(real.f_lb, ideal.f_lb);
}

TEST(HeraldCoefficients, PlusMinusOrthogonal) {
    const auto p = herald_coefficients({HeraldKind::plus});
    const auto m = herald_coefficients({HeraldKind::minus});
    EXPECT_NEAR(std::abs(std::conj(p[0]) * m[0] + std::conj(p[1]) * m[1]), 0.0, 1e-15);
    EXPECT_NEAR(std::norm(p[0]) + std::norm(p[1]), 1.0, 1e-15);
}

}  // namespace
}  // namespace duet
