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
#include <span>
#include <string>
#include <vector>

#include "duet/fock.hpp"
#include "duet/multi_index.hpp"
#include "duet/parallel.hpp"

namespace duet {

enum class Ordering { normal, anti_normal };
enum class Scale { device, heterodyne };

const char* ordering_name(Ordering o);
const char* scale_name(Scale s);

/// Filtered complex amplitudes (S_e, S_l) of one trial.
struct Amplitudes {
    cplx e;
    cplx l;
};

/// Moments over all multi-indices with |alpha| <= max_order, stored in
/// graded-lexicographic order with per-entry variances.
class MomentTensor {
   public:
    static constexpr int kMaxSupportedOrder = 12;

    MomentTensor(int max_order, Ordering ordering, Scale scale);

    int max_order() const { return max_order_; }
    Ordering ordering() const { return ordering_; }
    Scale scale() const { return scale_; }
    const std::vector<MultiIndex>& indices() const { return indices_; }
    std::size_t size() const { return indices_.size(); }

    bool contains(const MultiIndex& alpha) const;
    std::size_t position(const MultiIndex& alpha) const;
    cplx value(const MultiIndex& alpha) const { return values_[position(alpha)]; }
    double variance(const MultiIndex& alpha) const { return variances_[position(alpha)]; }
    cplx value_at(std::size_t i) const { return values_[i]; }
    double variance_at(std::size_t i) const { return variances_[i]; }

    /// Sets alpha and its conjugate partner (value conjugated) together.
    void set(const MultiIndex& alpha, cplx value, double variance);

    /// Largest violation of conjugate symmetry and of value(0,0,0,0) = 1.
    double invariant_error() const;

    std::string to_json() const;
    static MomentTensor from_json(const std::string& text);
    void save(const std::string& path) const;
    static MomentTensor load(const std::string& path);

   private:
    int max_order_;
    Ordering ordering_;
    Scale scale_;
    std::vector<MultiIndex> indices_;
    std::vector<int> lookup_;
    std::vector<cplx> values_;
    std::vector<double> variances_;
};

/// Sample means of (S_e^*)^k S_e^l (S_l^*)^m S_l^n with variance of the mean.
/// Reduction is blocked so the result is independent of the worker count.
MomentTensor estimate_moments(std::span<const Amplitudes> records, int max_order, Execution exec = {});
/// Plain single-threaded loop, kept as the reference for estimate_moments.
MomentTensor estimate_moments_serial(std::span<const Amplitudes> records, int max_order);

inline double linear_gain(double gain_db) { return std::pow(10.0, gain_db / 10.0); }

/// Anti-normal amplifier-noise moments H from calibration records, with the
/// gain divided out.
MomentTensor noise_moments(std::span<const Amplitudes> calibration, int max_order, double gain_db,
                           Execution exec = {});

/// Analytic H for independent thermal noise: <H^k H^dag^l> = delta_kl k! (n+1)^k per mode.
MomentTensor thermal_noise_moments(double n_add_e, double n_add_l, int max_order);

/// Solves S_a = G^{|a|/2} sum_{b <= a} binom(a, b) H_{a-b} C_b for C by forward
/// substitution in graded order; variances propagate to first order.
MomentTensor invert_moments(const MomentTensor& s, const MomentTensor& h, double gain_db);

/// S from C and H (inverse of invert_moments).
MomentTensor forward_moments(const MomentTensor& c, const MomentTensor& h, double gain_db);

/// Exact normal-ordered moments of a state (zero variance). Indices that do
/// not fit the truncation are left at 0 with infinite variance.
MomentTensor moments_of_state(const DensityMatrix& rho, int max_order);

}  // namespace duet
