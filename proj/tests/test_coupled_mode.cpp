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
#include <complex>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "duet/coupled_mode.hpp"
#include "duet/error.hpp"
#include "duet/heterodyne.hpp"

namespace duet {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

TimeGrid envelope_grid() { return {0.0, 4e-9, 600}; }

// Random rate tuples in the strong-coupling regime 2 g > |kappa_m - kappa_mw| / 2.
CoupledModeRates random_strong_rates(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (;;) {
        const double g = 0.6e6 + 1.2e6 * u(rng);
        const double km = 0.05e6 + 0.5e6 * u(rng);
        const double ke = 0.3e6 + 1.5e6 * u(rng);
        const double ki = 0.1e6 + 0.8e6 * u(rng);
        const CoupledModeRates r = CoupledModeRates::from_cyclic(5.004e9, g, km, ke, ki);
        if (2.0 * r.g_pe > std::abs(r.kappa_m - r.kappa_mw()) / 2.0) return r;
    }
}

TEST(Eigenvalues, DegenerateWhenUncoupledAndSymmetric) {
    CoupledModeRates r = CoupledModeRates::from_cyclic(5e9, 0.0, 1e6, 0.6e6, 0.4e6);
    auto [lp, lm] = eigenvalues(r);
    const cplx expect(-r.kappa_m / 2.0, r.omega_m);
    EXPECT_NEAR(std::abs(lp - expect), 0.0, 1e-6);
    EXPECT_NEAR(std::abs(lm - expect), 0.0, 1e-6);
}

TEST(Eigenvalues, NominalSplittingMatchesCouplingMatrix) {
    const CoupledModeRates r = CoupledModeRates::nominal();
    auto [lp, lm] = eigenvalues(r);
    EXPECT_NEAR(std::abs((lp - lm).imag()) / kTwoPi / 1e6, 2.0 * std::sqrt(1.2 * 1.2 - 0.4 * 0.4), 1e-9);
    // Independent oracle: eigenvalues of the non-Hermitian 2x2 coupling matrix.
    Eigen::Matrix2cd m;
    m << cplx(-r.kappa_mw() / 2.0, r.omega_m), cplx(0.0, -r.g_pe), cplx(0.0, -r.g_pe),
        cplx(-r.kappa_m / 2.0, r.omega_m);
    const Eigen::Vector2cd ev = m.eigenvalues();
    const bool swapped = std::abs(ev(0) - lp) > std::abs(ev(1) - lp);
    EXPECT_NEAR(std::abs(ev(swapped ? 1 : 0) - lp), 0.0, 1e-9 * r.omega_m);
    EXPECT_NEAR(std::abs(ev(swapped ? 0 : 1) - lm), 0.0, 1e-9 * r.omega_m);
    EXPECT_GT(2.0 * r.g_pe, r.kappa_mw());
    EXPECT_GT(2.0 * r.g_pe, r.kappa_m);
}

TEST(Eigenvalues, DampingSumIsExact) {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 50; ++t) {
        const CoupledModeRates r = random_strong_rates(rng);
        auto [lp, lm] = eigenvalues(r);
        EXPECT_LT(lp.real(), 0.0);
        EXPECT_LT(lm.real(), 0.0);
        EXPECT_NEAR(lp.real() + lm.real(), -(r.kappa_m + r.kappa_mw()) / 2.0, 1e-9 * r.kappa_mw());
    }
}

TEST(Envelope, CausalAndNormalized) {
    const CoupledModeRates r = CoupledModeRates::nominal();
    const Envelope f = envelope(r, {-200e-9, 4e-9, 700});
    for (int i = 0; i < 700; ++i) {
        if (f.grid().time(i) < 0.0) {
            EXPECT_EQ(f.samples[i], cplx(0.0));
        }
    }
    EXPECT_NEAR(f.norm(), 1.0, 1e-6);
}

TEST(Envelope, NormalizedOverRandomRates) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 40; ++t) {
        const Envelope f = envelope(random_strong_rates(rng), {0.0, 2e-9, 3000});
        EXPECT_NEAR(f.norm(), 1.0, 1e-6);
    }
}

TEST(Envelope, FirstZeroAtPhaseCondition) {
    const CoupledModeRates r = CoupledModeRates::nominal();
    const TimeGrid g{0.0, 0.1e-9, 30000};
    const Envelope f = envelope(r, g);
    auto [lp, lm] = eigenvalues(r);
    const double expected = kTwoPi / std::abs((lp - lm).imag());
    // First interior local minimum of |f| after the rise.
    int idx = -1;
    for (int i = 2; i + 1 < g.n; ++i) {
        const double a = std::abs(f.samples[i - 1]), b = std::abs(f.samples[i]), c = std::abs(f.samples[i + 1]);
        if (b < a && b <= c) {
            idx = i;
            break;
        }
    }
    ASSERT_GE(idx, 0);
    EXPECT_NEAR(g.time(idx), expected, 2.0 * g.dt);
    EXPECT_LT(std::abs(f.samples[idx]), 1e-3 * std::sqrt(1.0 / g.dt));
}

TEST(Envelope, ShortGridIsRejected) { EXPECT_THROW(envelope(CoupledModeRates::nominal(), {0.0, 4e-9, 50}), DomainError); }

TEST(SwapDelay, SymmetricDampingReducesToHalfPiOverG) {
    const CoupledModeRates r = CoupledModeRates::from_cyclic(5e9, 1.2e6, 1e6, 0.6e6, 0.4e6);
    EXPECT_NEAR(swap_delay(r), std::numbers::pi / (2.0 * r.g_pe), 1e-15);
    EXPECT_NEAR(swap_delay(r), 208.3e-9, 0.05e-9);
}

TEST(SwapDelay, NominalOrthogonality) {
    const CoupledModeRates r = CoupledModeRates::nominal();
    EXPECT_LT(std::abs(envelope_overlap(r, swap_delay(r))), 0.02);
}

TEST(SwapDelay, OrthogonalityOverStrongCouplingSweep) {
    std::mt19937_64 rng(4);
    int violations = 0;
    for (int t = 0; t < 50; ++t) {
        const CoupledModeRates r = random_strong_rates(rng);
        if (std::abs(envelope_overlap(r, swap_delay(r))) >= 0.02) ++violations;
    }
    EXPECT_EQ(violations, 0);
}

TEST(OrthogonalDelay, ZeroOverlapOverStrongCouplingSweep) {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 50; ++t) {
        const CoupledModeRates r = random_strong_rates(rng);
        EXPECT_LT(std::abs(envelope_overlap(r, orthogonal_delay(r))), 1e-6);
    }
    EXPECT_NEAR(orthogonal_delay(CoupledModeRates::nominal()), 276.9e-9, 0.5e-9);
}

TEST(EnvelopeOverlap, MatchesQuadrature) {
    const CoupledModeRates r = CoupledModeRates::nominal();
    const TimeGrid g{0.0, 1e-9, 6000};
    const Envelope f = envelope(r, g);
    for (double delay : {50e-9, 150e-9, 279e-9}) {
        const int shift = static_cast<int>(std::lround(delay / g.dt));
        cplx acc = 0.0;
        for (int i = shift; i < g.n; ++i) acc += std::conj(f.samples[i]) * f.samples[i - shift];
        acc *= g.dt;
        EXPECT_NEAR(std::abs(acc - envelope_overlap(r, delay)), 0.0, 2e-3) << delay;
    }
}

// kappa_e * int |a|^2 dt from the Lyapunov equation M P + P M^dag = -x0 x0^dag.
double lyapunov_efficiency(const CoupledModeRates& r) {
    Eigen::Matrix2cd m;
    m << -0.5 * r.kappa_mw(), cplx(0.0, -r.g_pe), cplx(0.0, -r.g_pe), -0.5 * r.kappa_m;
    const Eigen::Matrix2cd id = Eigen::Matrix2cd::Identity();
    Eigen::Matrix4cd k;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            // vec(M P) = (I kron M) vec(P); vec(P M^dag) = (conj(M) kron I) vec(P).
            k.block<2, 2>(2 * j, 2 * i) = id(j, i) * m + std::conj(m(j, i)) * id;
        }
    Eigen::Vector4cd rhs = Eigen::Vector4cd::Zero();
    rhs(3) = -1.0;  // x0 = (0, 1): all energy starts in the acoustic mode.
    const Eigen::Vector4cd p = k.fullPivLu().solve(rhs);
    return r.kappa_e_mw * p(0).real();
}

TEST(ExtractionEfficiency, Limits) {
    EXPECT_NEAR(extraction_efficiency(CoupledModeRates::from_cyclic(5e9, 1.2e6, 0.0, 1.75e6, 0.0)), 1.0, 1e-5);
    EXPECT_NEAR(extraction_efficiency(CoupledModeRates::from_cyclic(5e9, 1.2e6, 0.15e6, 0.0, 1.75e6)), 0.0, 1e-12);
}

TEST(ExtractionEfficiency, NominalAgreesWithLyapunovOracle) {
    const CoupledModeRates r = CoupledModeRates::nominal();
    const double eta = extraction_efficiency(r);
    EXPECT_GE(eta, 0.55);
    EXPECT_LE(eta, 0.65);
    EXPECT_NEAR(eta, lyapunov_efficiency(r), 2e-5);
}

TEST(ExtractionEfficiency, MonotoneInExternalCoupling) {
    double prev = -1.0;
    for (double ke = 0.2e6; ke <= 3.0e6; ke += 0.2e6) {
        const double eta = extraction_efficiency(CoupledModeRates::from_cyclic(5e9, 1.2e6, 0.15e6, ke, 0.55e6));
        EXPECT_GT(eta, prev);
        prev = eta;
    }
}

struct FilterFixture : ::testing::Test {
    CoupledModeRates rates = CoupledModeRates::nominal();
    Envelope f = envelope(rates, envelope_grid());
    TimeGrid record{-100e-9, 4e-9, 1200};
};

TEST_F(FilterFixture, PeakRecoversInjectedAmplitude) {
    const cplx a(0.7, -1.3);
    const Waveform w = synthesize_waveform(a, 0.0, f, 200e-9, 200e-9 + 2400e-9, {-100e-9, 4e-9, 1400});
    EXPECT_NEAR(std::abs(matched_filter(w, f, 200e-9) - a), 0.0, 1e-9);
}

TEST_F(FilterFixture, CrossTalkAtSwapDelay) {
    const cplx a(1.0, 0.0);
    const double t0 = 100e-9;
    const Waveform w = synthesize_waveform(a, 0.0, f, t0, t0 + 1600e-9, {-100e-9, 4e-9, 1300});
    const double ratio = std::abs(matched_filter(w, f, t0 + swap_delay(rates))) / std::abs(matched_filter(w, f, t0));
    EXPECT_LT(ratio, 0.02);
}

TEST_F(FilterFixture, RoundTripAtOrthogonalPlacement) {
    const cplx se(0.9, 0.2), sl(-0.3, 0.5);
    const double te = 100e-9, tl = te + 279e-9;
    const Waveform w = synthesize_waveform(se, sl, f, te, tl, record, {.expected_delay = 279e-9});
    EXPECT_LT(std::abs(matched_filter(w, f, te) - se), 0.02 * std::abs(se));
    EXPECT_LT(std::abs(matched_filter(w, f, tl) - sl), 0.02 * std::abs(sl) + 0.02 * std::abs(se));
}

TEST_F(FilterFixture, Linearity) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    Waveform v1{record, {}}, v2{record, {}};
    for (int i = 0; i < record.n; ++i) {
        v1.samples.emplace_back(g(rng), g(rng));
        v2.samples.emplace_back(g(rng), g(rng));
    }
    const cplx a(0.3, -1.1), b(-2.0, 0.4);
    Waveform mix{record, {}};
    for (int i = 0; i < record.n; ++i) mix.samples.push_back(a * v1.samples[i] + b * v2.samples[i]);
    for (double tau : {0.0, 120e-9, 400e-9}) {
        const cplx lhs = matched_filter(mix, f, tau);
        const cplx rhs = a * matched_filter(v1, f, tau) + b * matched_filter(v2, f, tau);
        EXPECT_NEAR(std::abs(lhs - rhs), 0.0, 1e-10 * (1.0 + std::abs(lhs)));
    }
}

TEST_F(FilterFixture, WhiteNoiseOutputVariance) {
    const double psd = 0.25;
    const int n = 4000;
    double m2 = 0.0;
    cplx m1 = 0.0;
    for (int i = 0; i < n; ++i) {
        const Waveform w = synthesize_waveform(0.0, 0.0, f, 0.0, 279e-9, record,
                                               {.noise_psd = psd, .seed = static_cast<std::uint64_t>(i), .expected_delay = {}});
        const cplx s = matched_filter(w, f, 0.0);
        m1 += s;
        m2 += std::norm(s);
    }
    m1 /= n;
    m2 /= n;
    const double se = std::sqrt(psd / n);
    EXPECT_LT(std::abs(m1), 4.0 * se);
    EXPECT_NEAR(m2, psd, 4.0 * psd / std::sqrt(n));
}

TEST_F(FilterFixture, DoublingAmplitudesDoublesOutputs) {
    const Waveform w1 = synthesize_waveform({0.4, 0.1}, {0.2, -0.6}, f, 0.0, 279e-9, record);
    const Waveform w2 = synthesize_waveform({0.8, 0.2}, {0.4, -1.2}, f, 0.0, 279e-9, record);
    for (double tau : {0.0, 279e-9}) {
        EXPECT_NEAR(std::abs(matched_filter(w2, f, tau) - 2.0 * matched_filter(w1, f, tau)), 0.0, 1e-12);
    }
}

TEST(QuantaConversion, RoundTripAtUnitQuantum) {
    const double omega = kTwoPi * 5.004e9;
    const double s = amplitude_for_quanta(1.0, 107.4, omega);
    const double g = std::pow(10.0, 10.74);
    EXPECT_NEAR(s * s, 2.0 * kLineImpedance * g * kHbar * omega, 1e-12 * s * s);
    EXPECT_NEAR(quanta_from_amplitude(cplx(s, 0.0), 107.4, omega), 1.0, 1e-12);
}

TEST(EnvelopeCsv, RoundTrip) {
    const Envelope f = envelope(CoupledModeRates::nominal(), envelope_grid());
    const auto path = (std::filesystem::temp_directory_path() / "duet_envelope_test.csv").string();
    write_envelope_csv(path, f);
    const Envelope g = read_envelope_csv(path);
    std::filesystem::remove(path);
    ASSERT_EQ(g.samples.size(), f.samples.size());
    EXPECT_EQ(g.dt, f.dt);
    for (std::size_t i = 0; i < f.samples.size(); ++i) EXPECT_EQ(g.samples[i], f.samples[i]);
}

}  // namespace
}  // namespace duet
