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
#include <string>
#include <utility>
#include <vector>

namespace duet {

/// Electro-acoustic rates. All fields are angular (rad/s); use from_cyclic()
/// to enter values quoted as f/2pi in Hz.
struct CoupledModeRates {
    double omega_m = 0.0;
    double g_pe = 0.0;
    double kappa_m = 0.0;
    double kappa_e_mw = 0.0;
    double kappa_i_mw = 0.0;

    double kappa_mw() const { return kappa_e_mw + kappa_i_mw; }

    static CoupledModeRates from_cyclic(double f_m_hz, double g_hz, double kappa_m_hz, double kappa_e_hz,
                                        double kappa_i_hz);
    /// Device values: omega_m/2pi = 5.004 GHz, g/2pi = 1.2 MHz, kappa_m/2pi = 0.15 MHz,
    /// kappa_e/2pi = 1.2 MHz, kappa_i/2pi = 0.55 MHz.
    static CoupledModeRates nominal();

    void validate() const;
};

/// Uniform sampling grid t_i = t0 + i * dt, i < n.
struct TimeGrid {
    double t0 = 0.0;
    double dt = 4e-9;
    int n = 0;

    double time(int i) const { return t0 + i * dt; }
    double end() const { return t0 + (n - 1) * dt; }
};

/// Sampled complex waveform (also used for envelopes).
struct Waveform {
    TimeGrid grid;
    std::vector<std::complex<double>> samples;
};

/// Unit-norm emission envelope, normalized with the trapezoidal rule on its grid.
struct Envelope {
    double t0 = 0.0;
    double dt = 0.0;
    std::vector<std::complex<double>> samples;

    TimeGrid grid() const { return {t0, dt, static_cast<int>(samples.size())}; }
    /// Trapezoidal integral of |f|^2.
    double norm() const;
};

/// lambda_pm = i omega_m - (kappa_m + kappa_mw)/4 +- sqrt(((kappa_m - kappa_mw)/4)^2 - g^2).
std::pair<std::complex<double>, std::complex<double>> eigenvalues(const CoupledModeRates& rates);

struct EnvelopeOptions {
    /// Drop the common i omega_m rotation (baseband convention).
    bool demodulated = true;
};

/// f(t) = c Theta(t) (e^{lambda_+ t} - e^{lambda_- t}). The grid must reach at
/// least five amplitude decay times 4/(kappa_m + kappa_mw) past t = 0.
Envelope envelope(const CoupledModeRates& rates, const TimeGrid& grid, EnvelopeOptions options = {});

/// pi / |lambda_+ - lambda_-|.
double swap_delay(const CoupledModeRates& rates);

/// Analytic overlap <f(t), f(t - T)> of the continuous-time unit-norm envelope.
std::complex<double> envelope_overlap(const CoupledModeRates& rates, double delay);

/// First delay T > 0 at which |envelope_overlap| has a local minimum (an exact
/// zero for strongly coupled rates).
double orthogonal_delay(const CoupledModeRates& rates);

/// Fraction of one initial phonon emitted through kappa_e_mw. Integrates the
/// damped two-mode dynamics with fixed-step RK4 until the residual energy is
/// below 1e-6.
double extraction_efficiency(const CoupledModeRates& rates);

/// S(tau) = int f*(t - tau) V(t) dt by trapezoidal quadrature; tau is snapped
/// to the nearest sample of the record grid.
std::complex<double> matched_filter(const Waveform& record, const Envelope& f, double tau);

/// Characteristic line impedance of the readout chain.
inline constexpr double kLineImpedance = 50.0;
inline constexpr double kHbar = 1.054571817e-34;

/// n = |S|^2 / (2 Z0 G hbar omega_m) with G = 10^(gain_db/10).
double quanta_from_amplitude(std::complex<double> s, double gain_db, double omega_m,
                             double impedance = kLineImpedance);
/// Magnitude |S| that corresponds to n quanta.
double amplitude_for_quanta(double n, double gain_db, double omega_m, double impedance = kLineImpedance);

/// CSV with columns t, re, im.
void write_envelope_csv(const std::string& path, const Envelope& f);
Envelope read_envelope_csv(const std::string& path);

}  // namespace duet
