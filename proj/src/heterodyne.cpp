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

#include "duet/heterodyne.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

#include "duet/error.hpp"

namespace duet {

namespace {

using Vec2 = Eigen::Vector2cd;
using Mat2 = Eigen::Matrix2cd;

constexpr std::uint64_t kPilotStreamOffset = 0x5049'4c4fULL;
constexpr double kMinAcceptance = 1e-4;

cplx standard_complex_normal(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, std::numbers::sqrt2 / 2.0);
    const double re = n(rng);
    const double im = n(rng);
    return {re, im};
}

// Evaluates v^dag rho v with v_(ne,nl) = alpha^ne beta^nl / sqrt(ne! nl!).
class HusimiEvaluator {
   public:
    explicit HusimiEvaluator(const DensityMatrix& rho) : rho_(rho.matrix()), dims_(rho.dims()) {
        inv_sqrt_fact_.resize(std::max(dims_.early, dims_.late));
        double f = 1.0;
        for (std::size_t n = 0; n < inv_sqrt_fact_.size(); ++n) {
            if (n > 0) f *= static_cast<double>(n);
            inv_sqrt_fact_[n] = 1.0 / std::sqrt(f);
        }
    }

    double operator()(cplx alpha, cplx beta) const {
        CVector v(dims_.size());
        std::vector<cplx> pa(dims_.early), pb(dims_.late);
        pa[0] = inv_sqrt_fact_[0];
        for (int n = 1; n < dims_.early; ++n) pa[n] = pa[n - 1] * alpha * (inv_sqrt_fact_[n] / inv_sqrt_fact_[n - 1]);
        pb[0] = inv_sqrt_fact_[0];
        for (int n = 1; n < dims_.late; ++n) pb[n] = pb[n - 1] * beta * (inv_sqrt_fact_[n] / inv_sqrt_fact_[n - 1]);
        for (int a = 0; a < dims_.early; ++a) {
            for (int b = 0; b < dims_.late; ++b) {
                v(dims_.index(a, b)) = pa[a] * pb[b];
            }
        }
        const double quad = v.dot(rho_ * v).real();
        return std::max(0.0, quad) * std::exp(-std::norm(alpha) - std::norm(beta)) / (std::numbers::pi * std::numbers::pi);
    }

   private:
    const CMatrix& rho_;
    FockDims dims_;
    std::vector<double> inv_sqrt_fact_;
};

// Proper complex Gaussian CN(mu, sigma) on C^2.
struct Proposal {
    Vec2 mu;
    Mat2 chol;
    Mat2 inv;
    double log_norm;

    Proposal(const Vec2& mean, const Mat2& cov) : mu(mean) {
        Eigen::LLT<Mat2> llt(cov);
        if (llt.info() != Eigen::Success) {
            throw NumericalError("proposal covariance is not positive definite");
        }
        chol = llt.matrixL();
        inv = cov.inverse();
        log_norm = -std::log(std::numbers::pi * std::numbers::pi * cov.determinant().real());
    }

    Vec2 draw(std::mt19937_64& rng) const {
        Vec2 w(standard_complex_normal(rng), standard_complex_normal(rng));
        return mu + chol * w;
    }

    double density(const Vec2& z) const {
        const Vec2 d = z - mu;
        return std::exp(log_norm - d.dot(inv * d).real());
    }
};

// Husimi mean <C> and covariance <C C^dag> - mu mu^dag.
std::pair<Vec2, Mat2> husimi_moments(const DensityMatrix& rho) {
    const Vec2 mu(normal_moment(rho, {0, 1, 0, 0}), normal_moment(rho, {0, 0, 0, 1}));
    Mat2 k;
    k(0, 0) = normal_moment(rho, {1, 1, 0, 0}).real() + 1.0;
    k(1, 1) = normal_moment(rho, {0, 0, 1, 1}).real() + 1.0;
    // <C_e C_l^dag> = <C_l^dag C_e>.
    k(0, 1) = normal_moment(rho, {0, 1, 1, 0});
    k(1, 0) = std::conj(k(0, 1));
    k -= mu * mu.adjoint();
    return {mu, k};
}

struct Sampler {
    HusimiEvaluator q;
    Proposal proposal;
    double bound = 0.0;

    double ratio(const Vec2& z) const { return q(z(0), z(1)) / proposal.density(z); }
};

double refine_maximum(const Sampler& s, Vec2 z) {
    // Compass search on the four real coordinates.
    double best = s.ratio(z);
    double step = 0.5;
    const std::array<cplx, 4> dirs{cplx(1, 0), cplx(-1, 0), cplx(0, 1), cplx(0, -1)};
    while (step > 1e-4) {
        bool improved = false;
        for (int mode = 0; mode < 2; ++mode) {
            for (cplx d : dirs) {
                Vec2 t = z;
                t(mode) += step * d;
                const double r = s.ratio(t);
                if (r > best) {
                    best = r;
                    z = t;
                    improved = true;
                }
            }
        }
        if (!improved) step *= 0.5;
    }
    return best;
}

Sampler build_sampler(const DensityMatrix& rho, std::uint64_t seed, const SamplerOptions& opt) {
    auto [mu, k] = husimi_moments(rho);
    Sampler s{HusimiEvaluator(rho), Proposal(mu, opt.proposal_inflation * k)};
    if (opt.kind == SamplerKind::gaussian_approximation) {
        s.proposal = Proposal(mu, k);
        return s;
    }
    std::mt19937_64 rng = substream(seed, opt.stream + kPilotStreamOffset, 0);
    std::vector<std::pair<double, int>> top;
    std::vector<Vec2> pts;
    double best = 0.0;
    for (int i = 0; i < opt.pilot_draws; ++i) {
        const Vec2 z = s.proposal.draw(rng);
        const double r = s.ratio(z);
        pts.push_back(z);
        top.emplace_back(r, i);
        best = std::max(best, r);
    }
    std::partial_sort(top.begin(), top.begin() + std::min<std::size_t>(8, top.size()), top.end(),
                      [](auto& a, auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; i < std::min<std::size_t>(8, top.size()); ++i) {
        best = std::max(best, refine_maximum(s, pts[top[i].second]));
    }
    best = std::max(best, refine_maximum(s, mu));
    if (!(best > 0.0)) {
        throw NumericalError("Husimi sampler: pilot found no support");
    }
    s.bound = opt.bound_safety * best;
    return s;
}

struct DrawStats {
    std::uint64_t proposals = 0;
    std::uint64_t accepted = 0;
    std::uint64_t violations = 0;
};

Amplitudes draw_record(const Sampler& s, const AmplifierModel& amp, const SamplerOptions& opt, std::uint64_t seed,
                       std::uint64_t index, DrawStats& stats) {
    std::mt19937_64 rng = substream(seed, opt.stream, index);
    Vec2 z;
    if (opt.kind == SamplerKind::gaussian_approximation) {
        z = s.proposal.draw(rng);
        ++stats.proposals;
        ++stats.accepted;
    } else {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const std::uint64_t cap = static_cast<std::uint64_t>(1.0 / kMinAcceptance) * 100;
        for (std::uint64_t tries = 0;; ++tries) {
            if (tries >= cap) {
                throw NumericalError("Husimi sampler: acceptance below 1e-4 (bound " + std::to_string(s.bound) + ")");
            }
            z = s.proposal.draw(rng);
            const double r = s.ratio(z) / s.bound;
            ++stats.proposals;
            if (r > 1.0) ++stats.violations;
            if (u(rng) < r) {
                ++stats.accepted;
                break;
            }
        }
    }
    const double ge = std::sqrt(amp.gain());
    const cplx he = amp.n_add_e > 0.0 ? std::sqrt(amp.n_add_e) * standard_complex_normal(rng) : 0.0;
    const cplx hl = amp.n_add_l > 0.0 ? std::sqrt(amp.n_add_l) * standard_complex_normal(rng) : 0.0;
    return {ge * (z(0) + he), ge * (z(1) + hl)};
}

void finish_diagnostics(const Sampler& s, const DrawStats& st, SamplerDiagnostics* d) {
    const double acc = st.proposals ? static_cast<double>(st.accepted) / st.proposals : 1.0;
    if (acc < kMinAcceptance) {
        throw NumericalError("Husimi sampler: acceptance " + std::to_string(acc) + " below 1e-4");
    }
    if (d) {
        *d = {s.bound, st.proposals, st.accepted, st.violations};
    }
}

void check_sampler_inputs(const AmplifierModel& amp, std::size_t n, const SamplerOptions& opt) {
    amp.validate();
    if (n < 1) throw DomainError("n_records must be >= 1");
    if (!(opt.proposal_inflation >= 1.0) || !(opt.bound_safety >= 1.0) || opt.pilot_draws < 1) {
        throw DomainError("sampler options: inflation and safety must be >= 1, pilot_draws >= 1");
    }
}

// Little-endian helpers.
void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

std::uint8_t herald_code(const std::optional<HeraldKind>& h) {
    if (!h) return 0;
    return static_cast<std::uint8_t>(static_cast<int>(*h) + 1);
}

std::optional<HeraldKind> herald_from_code(std::uint8_t c) {
    if (c == 0) return std::nullopt;
    if (c > 4) throw IoError("unknown herald code " + std::to_string(c));
    return static_cast<HeraldKind>(c - 1);
}

std::optional<HeraldKind> herald_from_name(const std::string& s) {
    for (HeraldKind k : {HeraldKind::early, HeraldKind::late, HeraldKind::plus, HeraldKind::minus}) {
        if (s == herald_name(k)) return k;
    }
    if (s == "none") return std::nullopt;
    throw IoError("unknown herald '" + s + "'");
}

}  // namespace

void AmplifierModel::validate() const {
    if (!(gain_db > 0.0) || !(gain() > 1e3)) {
        throw DomainError("amplifier gain must exceed 30 dB");
    }
    if (!(n_add_e >= 0.0) || !(n_add_l >= 0.0) || !std::isfinite(n_add_e) || !std::isfinite(n_add_l)) {
        throw DomainError("added noise must be finite and nonnegative");
    }
}

bool VoltageRecord::operator==(const VoltageRecord& o) const {
    return herald == o.herald && s_e == o.s_e && s_l == o.s_l && seed_id == o.seed_id;
}

std::vector<Amplitudes> amplitudes_of(std::span<const VoltageRecord> records) {
    std::vector<Amplitudes> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.amplitudes());
    return out;
}

double husimi(const DensityMatrix& rho, cplx alpha, cplx beta) { return HusimiEvaluator(rho)(alpha, beta); }

std::vector<Amplitudes> sample_filtered_amplitudes(const DensityMatrix& rho, const AmplifierModel& amp,
                                                   std::size_t n_records, std::uint64_t seed,
                                                   const SamplerOptions& options, SamplerDiagnostics* diagnostics) {
    check_sampler_inputs(amp, n_records, options);
    const Sampler s = build_sampler(rho, seed, options);
    std::vector<Amplitudes> out(n_records);
    std::uint64_t proposals = 0, accepted = 0, violations = 0;
    std::string failure;
#pragma omp parallel for schedule(dynamic, 256) num_threads(resolve_workers(options.exec)) \
    reduction(+ : proposals, accepted, violations)
    for (long i = 0; i < static_cast<long>(n_records); ++i) {
        DrawStats st;
        try {
            out[i] = draw_record(s, amp, options, seed, static_cast<std::uint64_t>(i), st);
        } catch (const NumericalError& e) {
#pragma omp critical
            failure = e.what();
        }
        proposals += st.proposals;
        accepted += st.accepted;
        violations += st.violations;
    }
    if (!failure.empty()) throw NumericalError(failure);
    finish_diagnostics(s, {proposals, accepted, violations}, diagnostics);
    return out;
}

std::vector<Amplitudes> sample_filtered_amplitudes_serial(const DensityMatrix& rho, const AmplifierModel& amp,
                                                          std::size_t n_records, std::uint64_t seed,
                                                          const SamplerOptions& options,
                                                          SamplerDiagnostics* diagnostics) {
    check_sampler_inputs(amp, n_records, options);
    const Sampler s = build_sampler(rho, seed, options);
    std::vector<Amplitudes> out;
    out.reserve(n_records);
    DrawStats st;
    for (std::size_t i = 0; i < n_records; ++i) {
        out.push_back(draw_record(s, amp, options, seed, i, st));
    }
    finish_diagnostics(s, st, diagnostics);
    return out;
}

std::vector<Amplitudes> calibration_records(const AmplifierModel& amp, std::size_t n_records, std::uint64_t seed,
                                            std::uint64_t stream, Execution exec) {
    amp.validate();
    std::vector<Amplitudes> out(n_records);
    const double ge = std::sqrt(amp.gain());
    const double se = std::sqrt(amp.n_add_e + 1.0);
    const double sl = std::sqrt(amp.n_add_l + 1.0);
#pragma omp parallel for schedule(static) num_threads(resolve_workers(exec))
    for (long i = 0; i < static_cast<long>(n_records); ++i) {
        std::mt19937_64 rng = substream(seed, stream, static_cast<std::uint64_t>(i));
        const cplx e = standard_complex_normal(rng);
        const cplx l = standard_complex_normal(rng);
        out[i] = {ge * se * e, ge * sl * l};
    }
    return out;
}

Waveform synthesize_waveform(cplx s_e, cplx s_l, const Envelope& f, double t_e, double t_l, const TimeGrid& grid,
                             const SynthesisOptions& options) {
    if (grid.n < 2 || std::abs(grid.dt - f.dt) > 1e-9 * grid.dt) {
        throw DomainError("synthesize_waveform: grid must share the envelope sample interval");
    }
    if (options.expected_delay && std::abs((t_l - t_e) - *options.expected_delay) > grid.dt) {
        throw DomainError("synthesize_waveform: T_l - T_e differs from the configured delay by more than a sample");
    }
    if (!(options.noise_psd >= 0.0)) {
        throw DomainError("noise_psd must be nonnegative");
    }
    const long nf = static_cast<long>(f.samples.size());
    Waveform w{grid, std::vector<cplx>(grid.n, 0.0)};
    for (auto [amp, t] : {std::pair{s_e, t_e}, std::pair{s_l, t_l}}) {
        const long off = std::lround((t + f.t0 - grid.t0) / grid.dt);
        if (off < 0 || off + nf > grid.n) {
            throw DomainError("synthesize_waveform: envelope placement exceeds the grid coverage");
        }
        for (long j = 0; j < nf; ++j) w.samples[off + j] += amp * f.samples[j];
    }
    if (options.noise_psd > 0.0) {
        std::mt19937_64 rng = substream(options.seed, 4, 0);
        const double sigma = std::sqrt(options.noise_psd / grid.dt);
        for (auto& v : w.samples) v += sigma * standard_complex_normal(rng);
    }
    return w;
}

void write_records_csv(const std::string& path, std::span<const VoltageRecord> records) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write records file " + path);
    out << "herald,re_Se,im_Se,re_Sl,im_Sl,seed_id\n";
    char line[256];
    for (const auto& r : records) {
        std::snprintf(line, sizeof line, "%s,%.17g,%.17g,%.17g,%.17g,%llu\n", r.herald ? herald_name(*r.herald) : "none",
                      r.s_e.real(), r.s_e.imag(), r.s_l.real(), r.s_l.imag(),
                      static_cast<unsigned long long>(r.seed_id));
        out << line;
    }
    if (!out) throw IoError("failed writing records file " + path);
}

std::vector<VoltageRecord> read_records_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read records file " + path);
    std::string line;
    std::getline(in, line);
    if (line != "herald,re_Se,im_Se,re_Sl,im_Sl,seed_id") {
        throw IoError("records file " + path + " has an unexpected header");
    }
    std::vector<VoltageRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        char name[16];
        double a, b, c, d;
        unsigned long long id;
        if (std::sscanf(line.c_str(), "%15[^,],%lf,%lf,%lf,%lf,%llu", name, &a, &b, &c, &d, &id) != 6) {
            throw IoError("malformed record row: " + line);
        }
        out.push_back({herald_from_name(name), {a, b}, {c, d}, id, std::nullopt});
    }
    return out;
}

void write_records_binary(const std::string& path, std::span<const VoltageRecord> records) {
    std::string buf = "DUET";
    buf.push_back(1);
    buf.push_back(0);
    put_u64(buf, records.size());
    for (const auto& r : records) {
        for (double v : {r.s_e.real(), r.s_e.imag(), r.s_l.real(), r.s_l.imag()}) {
            put_u64(buf, std::bit_cast<std::uint64_t>(v));
        }
        buf.push_back(static_cast<char>(herald_code(r.herald)));
    }
    std::ofstream out(path, std::ios::binary);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("cannot write records file " + path);
}

std::vector<VoltageRecord> read_records_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read records file " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    constexpr std::size_t header = 4 + 2 + 8;
    constexpr std::size_t stride = 4 * 8 + 1;
    if (buf.size() < header || std::memcmp(buf.data(), "DUET", 4) != 0) {
        throw IoError(path + " is not a DUET record file");
    }
    const unsigned version = buf[4] | (buf[5] << 8);
    if (version != 1) throw IoError("unsupported record file version " + std::to_string(version));
    const std::uint64_t count = get_u64(buf.data() + 6);
    if (buf.size() != header + count * stride) throw IoError(path + " is truncated or has trailing bytes");
    std::vector<VoltageRecord> out;
    out.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const unsigned char* p = buf.data() + header + i * stride;
        double v[4];
        for (int j = 0; j < 4; ++j) v[j] = std::bit_cast<double>(get_u64(p + 8 * j));
        out.push_back({herald_from_code(p[32]), {v[0], v[1]}, {v[2], v[3]}, i, std::nullopt});
    }
    return out;
}

}  // namespace duet
