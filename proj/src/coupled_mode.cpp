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

#include "duet/coupled_mode.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "duet/error.hpp"

namespace duet {

using cplx = std::complex<double>;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Amplitude decay rate shared by both eigenmodes.
double mean_decay(const CoupledModeRates& r) { return (r.kappa_m + r.kappa_mw()) / 4.0; }

// Baseband eigenvalues (the i omega_m term dropped).
std::array<cplx, 2> baseband_eigenvalues(const CoupledModeRates& r) {
    auto [lp, lm] = eigenvalues(r);
    const cplx rot(0.0, r.omega_m);
    return {lp - rot, lm - rot};
}

// int_0^inf |e^{l+ t} - e^{l- t}|^2 dt.
double unnormalized_energy(const std::array<cplx, 2>& lam) {
    const std::array<double, 2> sign{1.0, -1.0};
    cplx acc = 0.0;
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            acc += sign[a] * sign[b] * (-1.0 / (std::conj(lam[a]) + lam[b]));
        }
    }
    return acc.real();
}

}  // namespace

CoupledModeRates CoupledModeRates::from_cyclic(double f_m_hz, double g_hz, double kappa_m_hz, double kappa_e_hz,
                                               double kappa_i_hz) {
    return {kTwoPi * f_m_hz, kTwoPi * g_hz, kTwoPi * kappa_m_hz, kTwoPi * kappa_e_hz, kTwoPi * kappa_i_hz};
}

CoupledModeRates CoupledModeRates::nominal() { return from_cyclic(5.004e9, 1.2e6, 0.15e6, 1.2e6, 0.55e6); }

void CoupledModeRates::validate() const {
    for (double v : {omega_m, g_pe, kappa_m, kappa_e_mw, kappa_i_mw}) {
        if (!std::isfinite(v) || v < 0.0) {
            throw DomainError("coupled-mode rates must be finite and nonnegative");
        }
    }
}

double Envelope::norm() const {
    if (samples.size() < 2) {
        return 0.0;
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double w = (i == 0 || i + 1 == samples.size()) ? 0.5 : 1.0;
        acc += w * std::norm(samples[i]);
    }
    return acc * dt;
}

std::pair<cplx, cplx> eigenvalues(const CoupledModeRates& rates) {
    rates.validate();
    const double detune = (rates.kappa_m - rates.kappa_mw()) / 4.0;
    const cplx root = std::sqrt(cplx(detune * detune - rates.g_pe * rates.g_pe, 0.0));
    const cplx center(-mean_decay(rates), rates.omega_m);
    return {center + root, center - root};
}

Envelope envelope(const CoupledModeRates& rates, const TimeGrid& grid, EnvelopeOptions options) {
    rates.validate();
    if (grid.n < 2 || !(grid.dt > 0.0)) {
        throw DomainError("envelope grid needs n >= 2 and dt > 0");
    }
    const double gamma = mean_decay(rates);
    if (!(gamma > 0.0)) {
        throw DomainError("envelope needs a nonzero damping rate");
    }
    const auto lam = baseband_eigenvalues(rates);
    Envelope f{grid.t0, grid.dt, std::vector<cplx>(grid.n, 0.0)};
    for (int i = 0; i < grid.n; ++i) {
        const double t = grid.time(i);
        if (t <= 0.0) {
            continue;
        }
        cplx v = std::exp(lam[0] * t) - std::exp(lam[1] * t);
        if (!options.demodulated) {
            v *= std::exp(cplx(0.0, rates.omega_m * t));
        }
        f.samples[i] = v;
    }
    const double captured = f.norm();
    const double total = unnormalized_energy(lam);
    if (grid.end() < 5.0 / gamma) {
        char msg[200];
        std::snprintf(msg, sizeof msg,
                      "envelope grid ends at %.4g s, short of five decay times (%.4g s); captured norm fraction %.6f",
                      grid.end(), 5.0 / gamma, captured / total);
        throw DomainError(msg);
    }
    if (!(captured > 0.0)) {
        throw DomainError("envelope grid captures no emission (degenerate eigenvalues?)");
    }
    const double scale = 1.0 / std::sqrt(captured);
    for (auto& v : f.samples) {
        v *= scale;
    }
    return f;
}

double swap_delay(const CoupledModeRates& rates) {
    auto [lp, lm] = eigenvalues(rates);
    const double split = std::abs(lp - lm);
    if (split <= 1e-12 * std::max({rates.g_pe, rates.kappa_m, rates.kappa_mw(), 1.0})) {
        throw DomainError("degenerate eigenvalues: no swap oscillation, no orthogonality delay");
    }
    return std::numbers::pi / split;
}

cplx envelope_overlap(const CoupledModeRates& rates, double delay) {
    const auto lam = baseband_eigenvalues(rates);
    const double total = unnormalized_energy(lam);
    if (!(total > 0.0) || !std::isfinite(total)) {
        throw DomainError("envelope overlap undefined for these rates");
    }
    const double t = std::abs(delay);
    const std::array<double, 2> sign{1.0, -1.0};
    cplx acc = 0.0;
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            acc += sign[a] * sign[b] * (-std::exp(std::conj(lam[a]) * t) / (std::conj(lam[a]) + lam[b]));
        }
    }
    acc /= total;
    // <f(t), f(t+T)> is the conjugate of <f(t), f(t-T)>.
    return delay >= 0.0 ? acc : std::conj(acc);
}

double orthogonal_delay(const CoupledModeRates& rates) {
    const double t_swap = swap_delay(rates);
    auto mag = [&](double t) { return std::abs(envelope_overlap(rates, t)); };
    // |overlap| is 1 at T = 0 and first dips within ~2 swap delays.
    const int steps = 4000;
    const double h = 2.0 * t_swap / steps;
    int best = 1;
    for (int i = 1; i < steps; ++i) {
        if (mag(i * h) < mag(best * h)) {
            best = i;
        }
        if (mag((i + 1) * h) > mag(i * h) && mag(i * h) < 0.5) {
            best = i;
            break;
        }
    }
    double lo = (best - 1) * h;
    double hi = (best + 1) * h;
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double m1 = hi - phi * (hi - lo);
        const double m2 = lo + phi * (hi - lo);
        if (mag(m1) < mag(m2)) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    return 0.5 * (lo + hi);
}

double extraction_efficiency(const CoupledModeRates& rates) {
    rates.validate();
    const double ke = rates.kappa_e_mw;
    const double kmw = rates.kappa_mw();
    const double km = rates.kappa_m;
    const double g = rates.g_pe;
    if (kmw + km <= 0.0) {
        throw NumericalError("extraction_efficiency: undamped system never empties");
    }
    double h = std::numeric_limits<double>::infinity();
    if (g > 0.0) h = std::min(h, 1.0 / (50.0 * g));
    if (kmw > 0.0) h = std::min(h, 1.0 / (50.0 * kmw));
    if (!std::isfinite(h)) h = 1.0 / (50.0 * km);

    // State (a, b, emitted): electrical amplitude, acoustic amplitude, energy out of kappa_e.
    struct State {
        cplx a;
        cplx b;
        double out;
    };
    const cplx i1(0.0, 1.0);
    auto deriv = [&](const State& s) {
        return State{-0.5 * kmw * s.a - i1 * g * s.b, -0.5 * km * s.b - i1 * g * s.a, ke * std::norm(s.a)};
    };
    auto axpy = [](const State& s, double c, const State& d) {
        return State{s.a + c * d.a, s.b + c * d.b, s.out + c * d.out};
    };
    State s{0.0, 1.0, 0.0};
    const long max_steps = 200'000'000L;
    for (long step = 0; step < max_steps; ++step) {
        if (std::norm(s.a) + std::norm(s.b) < 1e-6) {
            return std::clamp(s.out, 0.0, 1.0);
        }
        const State k1 = deriv(s);
        const State k2 = deriv(axpy(s, 0.5 * h, k1));
        const State k3 = deriv(axpy(s, 0.5 * h, k2));
        const State k4 = deriv(axpy(s, h, k3));
        s.a += h / 6.0 * (k1.a + 2.0 * k2.a + 2.0 * k3.a + k4.a);
        s.b += h / 6.0 * (k1.b + 2.0 * k2.b + 2.0 * k3.b + k4.b);
        s.out += h / 6.0 * (k1.out + 2.0 * k2.out + 2.0 * k3.out + k4.out);
    }
    throw NumericalError("extraction_efficiency: residual energy did not fall below 1e-6 within the step budget");
}

cplx matched_filter(const Waveform& record, const Envelope& f, double tau) {
    const double dt = record.grid.dt;
    if (std::abs(f.dt - dt) > 1e-9 * dt) {
        throw DomainError("matched_filter: envelope and record sample intervals differ");
    }
    if (static_cast<int>(record.samples.size()) != record.grid.n) {
        throw DomainError("matched_filter: record size does not match its grid");
    }
    const long offset = std::lround((tau + f.t0 - record.grid.t0) / dt);
    const long nf = static_cast<long>(f.samples.size());
    if (offset < 0 || offset + nf > record.grid.n) {
        throw DomainError("matched_filter: envelope support at tau exceeds the record");
    }
    // Real arithmetic: std::complex products carry NaN recovery that costs ~4x here.
    double re = 0.0;
    double im = 0.0;
    for (long j = 0; j < nf; ++j) {
        const double w = (j == 0 || j + 1 == nf) ? 0.5 : 1.0;
        const cplx a = f.samples[j];
        const cplx b = record.samples[offset + j];
        re += w * (a.real() * b.real() + a.imag() * b.imag());
        im += w * (a.real() * b.imag() - a.imag() * b.real());
    }
    return cplx(re, im) * dt;
}

double quanta_from_amplitude(cplx s, double gain_db, double omega_m, double impedance) {
    const double gain = std::pow(10.0, gain_db / 10.0);
    return std::norm(s) / (2.0 * impedance * gain * kHbar * omega_m);
}

double amplitude_for_quanta(double n, double gain_db, double omega_m, double impedance) {
    const double gain = std::pow(10.0, gain_db / 10.0);
    return std::sqrt(n * 2.0 * impedance * gain * kHbar * omega_m);
}

void write_envelope_csv(const std::string& path, const Envelope& f) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write envelope file " + path);
    }
    out << "t,re,im\n";
    char line[128];
    for (std::size_t i = 0; i < f.samples.size(); ++i) {
        std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", f.t0 + i * f.dt, f.samples[i].real(),
                      f.samples[i].imag());
        out << line;
    }
    if (!out) {
        throw IoError("failed writing envelope file " + path);
    }
}

Envelope read_envelope_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read envelope file " + path);
    }
    std::string line;
    std::getline(in, line);
    if (line != "t,re,im") {
        throw IoError("envelope file " + path + " lacks the t,re,im header");
    }
    std::vector<double> ts;
    Envelope f;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        double t, re, im;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &t, &re, &im) != 3) {
            throw IoError("malformed envelope row: " + line);
        }
        ts.push_back(t);
        f.samples.emplace_back(re, im);
    }
    if (ts.size() < 2) {
        throw IoError("envelope file " + path + " has fewer than two samples");
    }
    f.t0 = ts.front();
    f.dt = (ts.back() - ts.front()) / static_cast<double>(ts.size() - 1);
    return f;
}

}  // namespace duet
