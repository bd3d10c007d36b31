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

#include "duet/moments.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "duet/error.hpp"

namespace duet {

namespace {

int pack(const MultiIndex& a, int stride) { return ((a.k * stride + a.l) * stride + a.m) * stride + a.n; }

void check_order(int max_order) {
    if (max_order < 1 || max_order > MomentTensor::kMaxSupportedOrder) {
        throw DomainError("max_order must be in [1, " + std::to_string(MomentTensor::kMaxSupportedOrder) + "]");
    }
}

// Canonical member of each conjugate pair; the estimator evaluates only these.
bool canonical(const MultiIndex& a) { return !graded_less(a.conjugate(), a); }

// coef * var with an exact zero coefficient dropping an infinite variance.
double scaled_variance(double coef, double var) { return coef == 0.0 ? 0.0 : coef * var; }

// Powers z^0..z^order.
void powers(cplx z, int order, cplx* out) {
    out[0] = 1.0;
    for (int i = 1; i <= order; ++i) out[i] = out[i - 1] * z;
}

struct Monomials {
    std::vector<MultiIndex> alphas;
    std::vector<std::size_t> slots;
};

Monomials canonical_monomials(const MomentTensor& t) {
    Monomials m;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (canonical(t.indices()[i])) {
            m.alphas.push_back(t.indices()[i]);
            m.slots.push_back(i);
        }
    }
    return m;
}

// Adds sum X and sum |X|^2 over records[begin, end) into acc (2 entries per monomial).
void accumulate(std::span<const Amplitudes> records, std::size_t begin, std::size_t end, const Monomials& mono,
                int order, std::vector<cplx>& sum, std::vector<double>& sum2) {
    cplx pe_c[MomentTensor::kMaxSupportedOrder + 1], pe[MomentTensor::kMaxSupportedOrder + 1];
    cplx pl_c[MomentTensor::kMaxSupportedOrder + 1], pl[MomentTensor::kMaxSupportedOrder + 1];
    for (std::size_t r = begin; r < end; ++r) {
        powers(std::conj(records[r].e), order, pe_c);
        powers(records[r].e, order, pe);
        powers(std::conj(records[r].l), order, pl_c);
        powers(records[r].l, order, pl);
        for (std::size_t j = 0; j < mono.alphas.size(); ++j) {
            const MultiIndex& a = mono.alphas[j];
            const cplx x = pe_c[a.k] * pe[a.l] * pl_c[a.m] * pl[a.n];
            sum[j] += x;
            sum2[j] += std::norm(x);
        }
    }
}

MomentTensor finish(MomentTensor t, const Monomials& mono, const std::vector<cplx>& sum,
                    const std::vector<double>& sum2, std::size_t n) {
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < mono.alphas.size(); ++j) {
        const cplx mean = sum[j] * inv;
        const double var = std::max(0.0, sum2[j] * inv - std::norm(mean)) * inv;
        t.set(mono.alphas[j], mean, var);
    }
    t.set({0, 0, 0, 0}, 1.0, 0.0);
    return t;
}

void check_records(std::span<const Amplitudes> records) {
    if (records.size() < 10) {
        throw DomainError("insufficient data: moment estimation needs at least 10 records, got " +
                          std::to_string(records.size()));
    }
}

void check_gain(double gain_db) {
    if (!(gain_db > 0.0) || linear_gain(gain_db) <= 1e3) {
        throw DomainError("amplifier gain must exceed 30 dB for the high-gain moment relation");
    }
}

}  // namespace

const char* ordering_name(Ordering o) { return o == Ordering::normal ? "normal" : "anti_normal"; }
const char* scale_name(Scale s) { return s == Scale::device ? "device" : "heterodyne"; }

MomentTensor::MomentTensor(int max_order, Ordering ordering, Scale scale)
    : max_order_(max_order), ordering_(ordering), scale_(scale) {
    check_order(max_order);
    indices_ = graded_indices(max_order);
    const int stride = max_order + 1;
    lookup_.assign(stride * stride * stride * stride, -1);
    for (std::size_t i = 0; i < indices_.size(); ++i) {
        lookup_[pack(indices_[i], stride)] = static_cast<int>(i);
    }
    values_.assign(indices_.size(), 0.0);
    variances_.assign(indices_.size(), 0.0);
    values_[0] = 1.0;
}

bool MomentTensor::contains(const MultiIndex& a) const {
    return a.k >= 0 && a.l >= 0 && a.m >= 0 && a.n >= 0 && a.order() <= max_order_;
}

std::size_t MomentTensor::position(const MultiIndex& a) const {
    if (!contains(a)) {
        throw DomainError("moment index outside tensor of order " + std::to_string(max_order_));
    }
    return static_cast<std::size_t>(lookup_[pack(a, max_order_ + 1)]);
}

void MomentTensor::set(const MultiIndex& a, cplx value, double variance) {
    if (!(variance >= 0.0)) {
        throw DomainError("moment variance must be nonnegative");
    }
    const std::size_t i = position(a);
    const std::size_t j = position(a.conjugate());
    if (i == j) {
        value = value.real();
    }
    values_[i] = value;
    variances_[i] = variance;
    values_[j] = std::conj(value);
    variances_[j] = variance;
}

double MomentTensor::invariant_error() const {
    double err = std::abs(values_[0] - 1.0);
    for (std::size_t i = 0; i < indices_.size(); ++i) {
        err = std::max(err, std::abs(values_[i] - std::conj(values_[position(indices_[i].conjugate())])));
    }
    return err;
}

std::string MomentTensor::to_json() const {
    nlohmann::ordered_json j;
    j["max_order"] = max_order_;
    j["ordering"] = ordering_name(ordering_);
    j["scale"] = scale_name(scale_);
    j["entries"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < indices_.size(); ++i) {
        const MultiIndex& a = indices_[i];
        j["entries"].push_back({{"k", a.k},
                                {"l", a.l},
                                {"m", a.m},
                                {"n", a.n},
                                {"re", values_[i].real()},
                                {"im", values_[i].imag()},
                                {"var", variances_[i]}});
    }
    return j.dump(1);
}

MomentTensor MomentTensor::from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        const std::string ord = j.at("ordering").get<std::string>();
        const std::string sc = j.at("scale").get<std::string>();
        if ((ord != "normal" && ord != "anti_normal") || (sc != "device" && sc != "heterodyne")) {
            throw IoError("moment tensor JSON has unknown ordering or scale");
        }
        MomentTensor t(j.at("max_order").get<int>(), ord == "normal" ? Ordering::normal : Ordering::anti_normal,
                       sc == "device" ? Scale::device : Scale::heterodyne);
        std::vector<bool> seen(t.size(), false);
        for (const auto& e : j.at("entries")) {
            const MultiIndex a{e.at("k").get<int>(), e.at("l").get<int>(), e.at("m").get<int>(), e.at("n").get<int>()};
            const std::size_t i = t.position(a);
            t.values_[i] = cplx(e.at("re").get<double>(), e.at("im").get<double>());
            t.variances_[i] = e.at("var").get<double>();
            seen[i] = true;
        }
        for (bool s : seen) {
            if (!s) throw IoError("moment tensor JSON is missing entries");
        }
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed moment tensor JSON: ") + e.what());
    }
}

void MomentTensor::save(const std::string& path) const {
    std::ofstream out(path);
    out << to_json() << "\n";
    if (!out) throw IoError("cannot write " + path);
}

MomentTensor MomentTensor::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

MomentTensor estimate_moments(std::span<const Amplitudes> records, int max_order, Execution exec) {
    check_records(records);
    MomentTensor t(max_order, Ordering::normal, Scale::heterodyne);
    const Monomials mono = canonical_monomials(t);
    const std::size_t m = mono.alphas.size();
    const std::size_t blocks = (records.size() + kReductionBlock - 1) / kReductionBlock;
    std::vector<cplx> part(blocks * m, 0.0);
    std::vector<double> part2(blocks * m, 0.0);
#pragma omp parallel for schedule(static) num_threads(resolve_workers(exec))
    for (long b = 0; b < static_cast<long>(blocks); ++b) {
        std::vector<cplx> s(m, 0.0);
        std::vector<double> s2(m, 0.0);
        const std::size_t begin = b * kReductionBlock;
        accumulate(records, begin, std::min(records.size(), begin + kReductionBlock), mono, max_order, s, s2);
        std::copy(s.begin(), s.end(), part.begin() + b * m);
        std::copy(s2.begin(), s2.end(), part2.begin() + b * m);
    }
    std::vector<cplx> sum(m, 0.0);
    std::vector<double> sum2(m, 0.0);
    for (std::size_t b = 0; b < blocks; ++b) {
        for (std::size_t j = 0; j < m; ++j) {
            sum[j] += part[b * m + j];
            sum2[j] += part2[b * m + j];
        }
    }
    return finish(std::move(t), mono, sum, sum2, records.size());
}

MomentTensor estimate_moments_serial(std::span<const Amplitudes> records, int max_order) {
    check_records(records);
    MomentTensor t(max_order, Ordering::normal, Scale::heterodyne);
    const Monomials mono = canonical_monomials(t);
    std::vector<cplx> sum(mono.alphas.size(), 0.0);
    std::vector<double> sum2(mono.alphas.size(), 0.0);
    accumulate(records, 0, records.size(), mono, max_order, sum, sum2);
    return finish(std::move(t), mono, sum, sum2, records.size());
}

MomentTensor noise_moments(std::span<const Amplitudes> calibration, int max_order, double gain_db, Execution exec) {
    check_gain(gain_db);
    const MomentTensor s = estimate_moments(calibration, max_order, exec);
    const double g = linear_gain(gain_db);
    MomentTensor h(max_order, Ordering::anti_normal, Scale::device);
    for (const MultiIndex& a : s.indices()) {
        if (!canonical(a)) continue;
        const double scale = std::pow(g, -0.5 * a.order());
        h.set(a, s.value(a) * scale, s.variance(a) * scale * scale);
    }
    return h;
}

MomentTensor thermal_noise_moments(double n_add_e, double n_add_l, int max_order) {
    if (!(n_add_e >= 0.0) || !(n_add_l >= 0.0)) {
        throw DomainError("added noise must be nonnegative");
    }
    MomentTensor h(max_order, Ordering::anti_normal, Scale::device);
    for (const MultiIndex& a : h.indices()) {
        if (a.k != a.l || a.m != a.n) continue;
        const double v = std::tgamma(a.k + 1.0) * std::pow(n_add_e + 1.0, a.k) * std::tgamma(a.m + 1.0) *
                         std::pow(n_add_l + 1.0, a.m);
        h.set(a, v, 0.0);
    }
    return h;
}

namespace {

void check_pair(const MomentTensor& x, Scale x_scale, Ordering x_ordering, const MomentTensor& h) {
    if (x.scale() != x_scale || x.ordering() != x_ordering) {
        throw DomainError("moment tensor has the wrong ordering or scale for this transform");
    }
    if (h.ordering() != Ordering::anti_normal) {
        throw DomainError("noise tensor must be anti-normally ordered");
    }
    if (h.max_order() < x.max_order()) {
        throw DomainError("missing noise moments: noise tensor order " + std::to_string(h.max_order()) +
                          " is below " + std::to_string(x.max_order()));
    }
}

}  // namespace

MomentTensor invert_moments(const MomentTensor& s, const MomentTensor& h, double gain_db) {
    check_gain(gain_db);
    check_pair(s, Scale::heterodyne, Ordering::normal, h);
    const double g = linear_gain(gain_db);
    MomentTensor c(s.max_order(), Ordering::normal, Scale::device);
    for (const MultiIndex& a : s.indices()) {
        if (!canonical(a) || a.order() == 0) continue;
        const double scale = std::pow(g, -0.5 * a.order());
        cplx v = s.value(a) * scale;
        double var = s.variance(a) * scale * scale;
        for (const MultiIndex& b : s.indices()) {
            if (b.order() >= a.order()) break;
            if (!b.componentwise_le(a)) continue;
            const double w = multi_binomial(a, b);
            const cplx hv = h.value(a - b);
            const cplx cv = c.value(b);
            v -= w * hv * cv;
            var += w * w * (scaled_variance(std::norm(hv), c.variance(b)) +
                            scaled_variance(std::norm(cv), h.variance(a - b)));
        }
        c.set(a, v, var);
    }
    return c;
}

MomentTensor forward_moments(const MomentTensor& c, const MomentTensor& h, double gain_db) {
    check_gain(gain_db);
    check_pair(c, Scale::device, Ordering::normal, h);
    const double g = linear_gain(gain_db);
    MomentTensor s(c.max_order(), Ordering::normal, Scale::heterodyne);
    for (const MultiIndex& a : c.indices()) {
        if (!canonical(a) || a.order() == 0) continue;
        cplx v = 0.0;
        double var = 0.0;
        for (const MultiIndex& b : c.indices()) {
            if (b.order() > a.order()) break;
            if (!b.componentwise_le(a)) continue;
            const double w = multi_binomial(a, b);
            v += w * h.value(a - b) * c.value(b);
            var += w * w * (scaled_variance(std::norm(h.value(a - b)), c.variance(b)) +
                            scaled_variance(std::norm(c.value(b)), h.variance(a - b)));
        }
        const double scale = std::pow(g, 0.5 * a.order());
        s.set(a, v * scale, var * scale * scale);
    }
    return s;
}

MomentTensor moments_of_state(const DensityMatrix& rho, int max_order) {
    MomentTensor c(max_order, Ordering::normal, Scale::device);
    for (const MultiIndex& a : c.indices()) {
        if (!canonical(a)) continue;
        if (moment_representable(rho.dims(), a)) {
            c.set(a, normal_moment(rho, a), 0.0);
        } else {
            c.set(a, 0.0, std::numeric_limits<double>::infinity());
        }
    }
    return c;
}

}  // namespace duet
