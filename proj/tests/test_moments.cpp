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
#include <filesystem>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "duet/error.hpp"
#include "duet/heterodyne.hpp"
#include "duet/moments.hpp"
#include "duet/multi_index.hpp"
#include "test_util.hpp"

namespace duet {
namespace {

// Random device-scale tensor: moments of a random valid state plus a random
// non-physical perturbation, with random variances.
MomentTensor random_device_tensor(int order, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    MomentTensor c(order, Ordering::normal, Scale::device);
    for (const MultiIndex& a : c.indices()) {
        if (graded_less(a.conjugate(), a)) continue;
        if (a.order() == 0) {
            c.set(a, 1.0, 0.0);
            continue;
        }
        const cplx v = a.is_self_conjugate() ? cplx(std::abs(g(rng)), 0.0) : cplx(g(rng), g(rng));
        c.set(a, v, u(rng));
    }
    return c;
}

MomentTensor random_noise_tensor(int order, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.5, 4.0);
    MomentTensor h = thermal_noise_moments(u(rng), u(rng), order);
    std::normal_distribution<double> g;
    MomentTensor out(order, Ordering::anti_normal, Scale::device);
    for (const MultiIndex& a : h.indices()) {
        if (graded_less(a.conjugate(), a)) continue;
        const cplx jitter = a.order() == 0 ? cplx(0.0) : 0.05 * cplx(g(rng), a.is_self_conjugate() ? 0.0 : g(rng));
        out.set(a, h.value(a) + jitter, 0.01 * std::abs(g(rng)));
    }
    return out;
}

double max_diff(const MomentTensor& a, const MomentTensor& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d = std::max(d, std::abs(a.value_at(i) - b.value_at(i)) / (1.0 + std::abs(a.value_at(i))));
    }
    return d;
}

TEST(MultiIndex, GradedOrderAndCounts) {
    const auto idx = graded_indices(4);
    EXPECT_EQ(idx.size(), 70u);  // C(4 + 4, 4)
    for (std::size_t i = 1; i < idx.size(); ++i) EXPECT_TRUE(graded_less(idx[i - 1], idx[i]));
    EXPECT_EQ(idx.front(), (MultiIndex{0, 0, 0, 0}));
}

TEST(MultiIndex, BinomialSumIsPowerOfTwo) {
    for (const MultiIndex& a : graded_indices(6)) {
        double sum = 0.0;
        for (const MultiIndex& b : graded_indices(a.order())) {
            if (b.componentwise_le(a)) sum += multi_binomial(a, b);
        }
        EXPECT_EQ(sum, std::ldexp(1.0, a.order()));
    }
}

TEST(MomentTensor, SetKeepsConjugateSymmetry) {
    MomentTensor t(3, Ordering::normal, Scale::device);
    t.set({1, 0, 0, 2}, cplx(0.3, 0.4), 0.2);
    EXPECT_EQ(t.value({0, 1, 2, 0}), cplx(0.3, -0.4));
    EXPECT_EQ(t.variance({0, 1, 2, 0}), 0.2);
    EXPECT_THROW(MomentTensor(13, Ordering::normal, Scale::device), DomainError);
    EXPECT_THROW(t.value({4, 0, 0, 0}), DomainError);
}

TEST(MomentTensor, JsonRoundTrip) {
    std::mt19937_64 rng(2);
    const MomentTensor c = random_device_tensor(4, rng);
    const MomentTensor back = MomentTensor::from_json(c.to_json());
    ASSERT_EQ(back.size(), c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        EXPECT_EQ(back.value_at(i), c.value_at(i));
        EXPECT_EQ(back.variance_at(i), c.variance_at(i));
    }
    EXPECT_EQ(back.ordering(), c.ordering());
    EXPECT_EQ(back.scale(), c.scale());
}

TEST(EstimateMoments, FirstOrderOfConstantRecords) {
    const std::vector<Amplitudes> rec(10, Amplitudes{cplx(1.0, 0.0), cplx(0.0, 0.0)});
    const MomentTensor s = estimate_moments(rec, 1);
    EXPECT_EQ(s.value({0, 1, 0, 0}), cplx(1.0, 0.0));
    EXPECT_EQ(s.value({0, 0, 0, 1}), cplx(0.0, 0.0));
    EXPECT_EQ(s.value({0, 0, 0, 0}), cplx(1.0, 0.0));
}

TEST(EstimateMoments, TooFewRecordsIsAnError) {
    const std::vector<Amplitudes> rec(3, Amplitudes{cplx(1.0, 0.0), cplx(0.0, 0.0)});
    EXPECT_THROW(estimate_moments(rec, 2), DomainError);
}

TEST(EstimateMoments, ExactConjugateSymmetry) {
    const AmplifierModel amp;
    const auto rec = calibration_records(amp, 5000, 9);
    const MomentTensor s = estimate_moments(rec, 4);
    EXPECT_EQ(s.invariant_error(), 0.0);
}

TEST(EstimateMoments, ParallelMatchesSerialBitForBit) {
    const AmplifierModel amp;
    const auto rec = calibration_records(amp, 20000, 4);
    const MomentTensor a = estimate_moments(rec, 4, {4});
    const MomentTensor b = estimate_moments_serial(rec, 4);
    for (std::size_t i = 0; i < a.size(); ++i) {
        // Blocked and sequential sums differ only by association order.
        EXPECT_NEAR(std::abs(a.value_at(i) - b.value_at(i)), 0.0, 1e-12 * (1.0 + std::abs(b.value_at(i))));
    }
    const MomentTensor c = estimate_moments(rec, 4, {1});
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.value_at(i), c.value_at(i));
}

TEST(EstimateMoments, VarianceScalesAsInverseN) {
    const AmplifierModel amp;
    const auto rec = calibration_records(amp, 200000, 21);
    const std::span<const Amplitudes> all(rec);
    const MomentTensor half = estimate_moments(all.subspan(0, 100000), 2);
    const MomentTensor full = estimate_moments(all, 2);
    for (std::size_t i = 1; i < half.size(); ++i) {
        EXPECT_NEAR(full.variance_at(i) / half.variance_at(i), 0.5, 0.05);
    }
}

TEST(NoiseMoments, CalibrationRecordsGiveThermalNoise) {
    const AmplifierModel amp;
    const auto rec = calibration_records(amp, 100000, 5);
    const MomentTensor h = noise_moments(rec, 4, amp.gain_db);
    const auto within = [&](const MultiIndex& a, cplx expect, double k) {
        EXPECT_LT(std::abs(h.value(a) - expect), k * std::sqrt(h.variance(a)))
            << a.k << a.l << a.m << a.n << " value " << h.value(a);
    };
    within({1, 1, 0, 0}, 3.6, 3.0);
    within({0, 0, 1, 1}, 3.6, 3.0);
    within({2, 2, 0, 0}, 2.0 * 3.6 * 3.6, 4.0);
    within({1, 0, 0, 1}, 0.0, 3.0);
    within({0, 1, 0, 0}, 0.0, 3.0);
}

TEST(NoiseMoments, CalibrationIsGaussian) {
    const AmplifierModel amp;
    const auto rec = calibration_records(amp, 100000, 6);
    // Batch means for the uncertainty of <|S|^4> / <|S|^2>^2.
    const int batches = 20;
    const std::size_t per = rec.size() / batches;
    std::vector<double> ratio;
    cplx mean = 0.0;
    for (int b = 0; b < batches; ++b) {
        double m2 = 0.0, m4 = 0.0;
        for (std::size_t i = b * per; i < (b + 1) * per; ++i) {
            const double p = std::norm(rec[i].e);
            m2 += p;
            m4 += p * p;
            mean += rec[i].e;
        }
        m2 /= per;
        m4 /= per;
        ratio.push_back(m4 / (m2 * m2));
    }
    double mu = 0.0, var = 0.0;
    for (double r : ratio) mu += r / batches;
    for (double r : ratio) var += (r - mu) * (r - mu) / (batches - 1);
    EXPECT_NEAR(mu, 2.0, 3.0 * std::sqrt(var / batches));
    mean /= static_cast<double>(per * batches);
    const double sigma_mean = std::sqrt(3.6 * amp.gain() / (per * batches));
    EXPECT_LT(std::abs(mean), 3.0 * sigma_mean);
}

TEST(ThermalNoiseMoments, VacuumAndFactorization) {
    const MomentTensor vac = thermal_noise_moments(0.0, 0.0, 4);
    EXPECT_EQ(vac.value({1, 1, 0, 0}), cplx(1.0));
    const MomentTensor h = thermal_noise_moments(2.6, 1.7, 6);
    for (const MultiIndex& a : h.indices()) {
        const cplx prod = h.value({a.k, a.l, 0, 0}) * h.value({0, 0, a.m, a.n});
        EXPECT_NEAR(std::abs(h.value(a) - prod), 0.0, 1e-12 * (1.0 + std::abs(prod)));
    }
    EXPECT_NEAR(h.value({2, 2, 0, 0}).real(), 2.0 * 3.6 * 3.6, 1e-12);
}

TEST(MomentInversion, RoundTripRandomTensors) {
    std::mt19937_64 rng(100);
    for (int t = 0; t < 100; ++t) {
        const MomentTensor c = random_device_tensor(4, rng);
        const MomentTensor h = random_noise_tensor(4, rng);
        const double gain_db = 80.0 + 30.0 * (t % 3);
        const MomentTensor s = forward_moments(c, h, gain_db);
        EXPECT_LT(max_diff(invert_moments(s, h, gain_db), c), 1e-10);
        const MomentTensor s2 = forward_moments(invert_moments(s, h, gain_db), h, gain_db);
        for (std::size_t i = 0; i < s.size(); ++i) {
            EXPECT_NEAR(std::abs(s2.value_at(i) - s.value_at(i)), 0.0, 1e-10 * (1.0 + std::abs(s.value_at(i))));
        }
    }
}

TEST(MomentInversion, VacuumRecoversDelta) {
    const MomentTensor h = thermal_noise_moments(2.6, 2.6, 4);
    const MomentTensor vac = moments_of_state(DensityMatrix::vacuum({}), 4);
    const MomentTensor c = invert_moments(forward_moments(vac, h, 107.4), h, 107.4);
    for (const MultiIndex& a : c.indices()) {
        EXPECT_NEAR(std::abs(c.value(a) - (a.order() == 0 ? 1.0 : 0.0)), 0.0, 1e-10);
    }
}

TEST(MomentInversion, FirstOrderSubtractsNoise) {
    // Zero first moments: C_(1,1,0,0) = S_(1,1,0,0) / G - H_(1,1,0,0).
    const MomentTensor h = thermal_noise_moments(2.6, 2.6, 2);
    const MomentTensor s = forward_moments(moments_of_state(DensityMatrix::fock({}, 1, 0), 2), h, 107.4);
    const MomentTensor c = invert_moments(s, h, 107.4);
    EXPECT_NEAR(c.value({1, 1, 0, 0}).real(), s.value({1, 1, 0, 0}).real() / linear_gain(107.4) - 3.6, 1e-12);
    EXPECT_NEAR(c.value({1, 1, 0, 0}).real(), 1.0, 1e-12);

    // Sampled data carry first moments; the cross terms enter at this order too.
    const AmplifierModel amp;
    const auto cal = calibration_records(amp, 20000, 31);
    const auto rec = sample_filtered_amplitudes(DensityMatrix::fock({}, 1, 0), amp, 20000, 32);
    const MomentTensor hn = noise_moments(cal, 2, amp.gain_db);
    const MomentTensor sn = estimate_moments(rec, 2);
    const MomentTensor cn = invert_moments(sn, hn, amp.gain_db);
    const cplx expect = sn.value({1, 1, 0, 0}) / amp.gain() - hn.value({1, 1, 0, 0}) -
                        hn.value({0, 1, 0, 0}) * cn.value({1, 0, 0, 0}) -
                        hn.value({1, 0, 0, 0}) * cn.value({0, 1, 0, 0});
    EXPECT_NEAR(std::abs(cn.value({1, 1, 0, 0}) - expect), 0.0, 1e-12);
}

TEST(ForwardMoments, SinglePhotonAntiNormal) {
    const MomentTensor h = thermal_noise_moments(0.0, 0.0, 2);
    const MomentTensor s = forward_moments(moments_of_state(DensityMatrix::fock({}, 1, 0), 2), h, 107.4);
    EXPECT_NEAR(s.value({1, 1, 0, 0}).real() / linear_gain(107.4), 2.0, 1e-12);
}

TEST(ForwardMoments, VacuumGivesScaledNoise) {
    const MomentTensor h = thermal_noise_moments(2.6, 1.9, 4);
    const MomentTensor s = forward_moments(moments_of_state(DensityMatrix::vacuum({}), 4), h, 90.0);
    for (const MultiIndex& a : s.indices()) {
        const double scale = std::pow(linear_gain(90.0), 0.5 * a.order());
        EXPECT_NEAR(std::abs(s.value(a) - scale * h.value(a)), 0.0, 1e-12 * scale * (1.0 + std::abs(h.value(a))));
    }
}

TEST(ForwardMoments, LinearInDeviceMoments) {
    std::mt19937_64 rng(3);
    const MomentTensor c1 = random_device_tensor(4, rng);
    const MomentTensor c2 = random_device_tensor(4, rng);
    const MomentTensor h = random_noise_tensor(4, rng);
    const double w = 0.3;
    MomentTensor mix(4, Ordering::normal, Scale::device);
    for (const MultiIndex& a : mix.indices()) {
        if (!graded_less(a.conjugate(), a)) mix.set(a, w * c1.value(a) + (1.0 - w) * c2.value(a), 0.0);
    }
    const MomentTensor f1 = forward_moments(c1, h, 50.0), f2 = forward_moments(c2, h, 50.0);
    const MomentTensor fm = forward_moments(mix, h, 50.0);
    for (std::size_t i = 0; i < fm.size(); ++i) {
        const cplx expect = w * f1.value_at(i) + (1.0 - w) * f2.value_at(i);
        EXPECT_NEAR(std::abs(fm.value_at(i) - expect), 0.0, 1e-10 * (1.0 + std::abs(expect)));
    }
}

TEST(ForwardMoments, MissingNoiseOrderIsAnError) {
    const MomentTensor h = thermal_noise_moments(1.0, 1.0, 2);
    EXPECT_THROW(forward_moments(moments_of_state(DensityMatrix::vacuum({}), 4), h, 10.0), DomainError);
}

}  // namespace
}  // namespace duet
