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

#include "duet/tomography.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

namespace duet {

namespace {

constexpr std::uint64_t kRestartStream = 0x7265'7374ULL;
constexpr std::uint64_t kBootstrapStream = 0x626f'6f74ULL;

bool canonical(const MultiIndex& a) { return !graded_less(a.conjugate(), a); }

struct Minimum {
    Eigen::VectorXd x;
    double f = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> trace;
};

// Limited-memory BFGS with Armijo backtracking; every accepted step lowers f.
Minimum lbfgs(const MomentObjective& obj, Eigen::VectorXd x, const ReconstructionConfig& cfg) {
    constexpr int kMemory = 12;
    constexpr double kArmijo = 1e-4;
    Minimum out;
    Eigen::VectorXd g(x.size());
    double f = obj.evaluate(x, &g);
    out.trace.push_back(f);
    std::deque<Eigen::VectorXd> s_hist, y_hist;
    std::deque<double> rho_hist;
    int quiet = 0;
    for (int it = 0; it < cfg.max_iterations; ++it) {
        out.iterations = it + 1;
        // Two-loop recursion.
        Eigen::VectorXd q = g;
        std::vector<double> alpha(s_hist.size());
        for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
            alpha[i] = rho_hist[i] * s_hist[i].dot(q);
            q -= alpha[i] * y_hist[i];
        }
        double gamma = 1.0;
        if (!s_hist.empty()) {
            gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
        } else {
            gamma = 1.0 / std::max(1.0, g.norm());
        }
        q *= gamma;
        for (std::size_t i = 0; i < s_hist.size(); ++i) {
            const double beta = rho_hist[i] * y_hist[i].dot(q);
            q += s_hist[i] * (alpha[i] - beta);
        }
        Eigen::VectorXd d = -q;
        double slope = g.dot(d);
        if (!(slope < 0.0)) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            d = -g / std::max(1.0, g.norm());
            slope = g.dot(d);
        }
        if (!(slope < 0.0)) {
            out.converged = true;  // zero gradient
            break;
        }
        double step = 1.0;
        Eigen::VectorXd x_new, g_new(x.size());
        double f_new = f;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            x_new = x + step * d;
            f_new = obj.evaluate(x_new, &g_new);
            if (std::isfinite(f_new) && f_new <= f + kArmijo * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (!s_hist.empty()) {
                s_hist.clear();
                y_hist.clear();
                rho_hist.clear();
                continue;
            }
            out.converged = true;  // no descent available at working precision
            break;
        }
        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            s_hist.push_back(s);
            y_hist.push_back(y);
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > kMemory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        const double change = f - f_new;
        x = std::move(x_new);
        g = g_new;
        f = f_new;
        out.trace.push_back(f);
        quiet = change <= cfg.tol_objective * std::max(1.0, f) ? quiet + 1 : 0;
        if (quiet >= 3) {
            out.converged = true;
            break;
        }
    }
    out.x = std::move(x);
    out.f = f;
    return out;
}

CMatrix lower_factor(const DensityMatrix& rho) {
    const int n = rho.dims().size();
    const CMatrix shifted = rho.matrix() + 1e-9 * CMatrix::Identity(n, n);
    Eigen::LLT<CMatrix> llt(shifted);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("warm start state is not positive definite");
    }
    return llt.matrixL();
}

DensityMatrix state_from(const MomentObjective& obj, const Eigen::VectorXd& x, FockDims dims) {
    const CMatrix a = obj.unpack(x);
    return DensityMatrix::from_unnormalized(dims, a * a.adjoint());
}

}  // namespace

void ReconstructionConfig::validate() const {
    dims.validate();
    if (!(tol_objective > 0.0) || max_iterations < 1 || restarts < 1 || max_order < 1) {
        throw DomainError("reconstruction tolerances, iteration limit, restarts and order must be positive");
    }
}

MomentObjective::MomentObjective(const MomentTensor& c, const ReconstructionConfig& cfg) : dim_(cfg.dims.size()) {
    cfg.validate();
    if (c.ordering() != Ordering::normal || c.scale() != Scale::device) {
        throw DomainError("reconstruction needs normal-ordered device-scale moments");
    }
    const int order = std::min(cfg.max_order, c.max_order());
    for (const MultiIndex& a : c.indices()) {
        if (a.order() == 0 || a.order() > order || !canonical(a) || !moment_representable(cfg.dims, a)) continue;
        const cplx target = c.value(a);
        const double sigma = std::max(std::sqrt(c.variance(a)), 1e-6 * std::max(1.0, std::abs(target)));
        ops_.push_back(monomial_operator(cfg.dims, a));
        targets_.push_back(target);
        // Non-self-conjugate moments stand for their partner too.
        weights_.push_back((a.is_self_conjugate() ? 1.0 : 2.0) / (sigma * sigma));
    }
    if (ops_.empty()) {
        throw DomainError("no usable moments for reconstruction");
    }
}

Eigen::VectorXd MomentObjective::pack(const CMatrix& a) const {
    Eigen::VectorXd x(parameter_count());
    int p = 0;
    for (int c = 0; c < dim_; ++c) {
        for (int r = c; r < dim_; ++r) {
            x(p++) = a(r, c).real();
            x(p++) = a(r, c).imag();
        }
    }
    return x;
}

CMatrix MomentObjective::unpack(const Eigen::VectorXd& x) const {
    CMatrix a = CMatrix::Zero(dim_, dim_);
    int p = 0;
    for (int c = 0; c < dim_; ++c) {
        for (int r = c; r < dim_; ++r) {
            a(r, c) = cplx(x(p), x(p + 1));
            p += 2;
        }
    }
    return a;
}

double MomentObjective::evaluate(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const {
    const CMatrix a = unpack(x);
    const CMatrix aa = a * a.adjoint();
    const double t = aa.trace().real();
    if (!(t > 0.0)) {
        if (grad) grad->setZero(parameter_count());
        return std::numeric_limits<double>::infinity();
    }
    const CMatrix rho = aa / t;
    double f = 0.0;
    CMatrix y = CMatrix::Zero(dim_, dim_);
    for (std::size_t b = 0; b < ops_.size(); ++b) {
        const cplx r = ops_[b].expectation(rho) - targets_[b];
        f += weights_[b] * std::norm(r);
        if (grad) {
            // Y = sum w conj(r) M.
            const cplx wr = weights_[b] * std::conj(r);
            const MonomialOperator& m = ops_[b];
            for (std::size_t i = 0; i < m.cols.size(); ++i) {
                y(m.rows[i], m.cols[i]) += wr * m.coeffs[i];
            }
        }
    }
    if (grad) {
        const double tr_y_rho = (y.cwiseProduct(rho.transpose())).sum().real();
        const CMatrix g = (2.0 / t) * ((y + y.adjoint()) * a) - (4.0 / t) * tr_y_rho * a;
        *grad = pack(g);
    }
    return f;
}

ReconstructionResult reconstruct_detailed(const MomentTensor& c, const ReconstructionConfig& cfg,
                                          const DensityMatrix* warm_start) {
    const MomentObjective obj(c, cfg);
    const int n = obj.dimension();
    std::vector<Eigen::VectorXd> starts;
    if (warm_start) {
        if (!(warm_start->dims() == cfg.dims)) {
            throw DomainError("warm start dims differ from the reconstruction dims");
        }
        starts.push_back(obj.pack(lower_factor(*warm_start)));
    } else {
        const CMatrix mixed = CMatrix::Identity(n, n) / std::sqrt(static_cast<double>(n));
        starts.push_back(obj.pack(mixed));
        for (int r = 1; r < cfg.restarts; ++r) {
            std::mt19937_64 rng = substream(cfg.seed, kRestartStream, r);
            std::normal_distribution<double> nd(0.0, 0.3 / std::sqrt(static_cast<double>(n)));
            CMatrix a = mixed;
            for (int col = 0; col < n; ++col) {
                for (int row = col; row < n; ++row) {
                    const double re = nd(rng);
                    const double im = nd(rng);
                    a(row, col) += cplx(re, im);
                }
            }
            starts.push_back(obj.pack(a));
        }
    }
    std::optional<Minimum> best;
    std::optional<Minimum> best_any;
    for (auto& x0 : starts) {
        Minimum m = lbfgs(obj, x0, cfg);
        if (!best_any || m.f < best_any->f) best_any = m;
        if (m.converged && (!best || m.f < best->f)) best = std::move(m);
    }
    if (!best) {
        char msg[160];
        std::snprintf(msg, sizeof msg, "reconstruction did not converge within %d iterations (best objective %.6g)",
                      cfg.max_iterations, best_any->f);
        throw ReconstructionError(msg, state_from(obj, best_any->x, cfg.dims), best_any->f);
    }
    return {state_from(obj, best->x, cfg.dims), best->f, best->iterations, std::move(best->trace)};
}

DensityMatrix reconstruct(const MomentTensor& c, const ReconstructionConfig& cfg) {
    return reconstruct_detailed(c, cfg).state;
}

double state_fidelity(const DensityMatrix& rho, const DensityMatrix& sigma) {
    if (!(rho.dims() == sigma.dims())) {
        throw DomainError("state_fidelity: dims differ");
    }
    Eigen::SelfAdjointEigenSolver<CMatrix> er(rho.matrix());
    const Eigen::VectorXd lr = er.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const CMatrix sq = er.eigenvectors() * lr.asDiagonal() * er.eigenvectors().adjoint();
    CMatrix m = sq * sigma.matrix() * sq;
    m = 0.5 * (m + m.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<CMatrix> em(m, Eigen::EigenvaluesOnly);
    const double root = em.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    return std::clamp(root * root, 0.0, 1.0);
}

Eigen::Matrix2d conditional_probabilities_from_states(const DensityMatrix& first, const DensityMatrix& second,
                                                      Basis basis, double phi_m) {
    return conditional_probabilities(first, second, basis, phi_m);
}

HeraldStates reconstruct_all(const HeraldTensors& c, const ReconstructionConfig& cfg) {
    return {reconstruct(c.early, cfg), reconstruct(c.late, cfg), reconstruct(c.plus, cfg), reconstruct(c.minus, cfg)};
}

namespace {

const std::vector<std::string>& quantity_names() {
    static const std::vector<std::string> names{"pz_ee", "pz_el", "pz_le", "pz_ll", "px_pp",
                                                "px_pm", "px_mp", "px_mm", "f_lb"};
    return names;
}

MomentTensor perturb(const MomentTensor& c, std::mt19937_64& rng, bool* changed) {
    MomentTensor out = c;
    std::normal_distribution<double> nd(0.0, 1.0);
    for (const MultiIndex& a : c.indices()) {
        if (a.order() == 0 || !canonical(a)) continue;
        const double var = c.variance(a);
        if (var > 0.0) *changed = true;
        cplx v = c.value(a);
        if (a.is_self_conjugate()) {
            v += std::sqrt(var) * nd(rng);
        } else {
            const double s = std::sqrt(0.5 * var);
            const double re = nd(rng);
            const double im = nd(rng);
            v += cplx(s * re, s * im);
        }
        out.set(a, v, var);
    }
    return out;
}

// One bootstrap draw; returns false on non-convergence.
bool bootstrap_draw(const HeraldTensors& c, const HeraldStates& ml, const ReconstructionConfig& cfg, double phi_m,
                    int index, const Eigen::VectorXd& ml_values, Eigen::VectorXd& out) {
    std::mt19937_64 rng = substream(cfg.seed, kBootstrapStream, static_cast<std::uint64_t>(index));
    bool changed = false;
    const MomentTensor te = perturb(c.early, rng, &changed);
    const MomentTensor tl = perturb(c.late, rng, &changed);
    const MomentTensor tp = perturb(c.plus, rng, &changed);
    const MomentTensor tm = perturb(c.minus, rng, &changed);
    if (!changed) {
        out = ml_values;
        return true;
    }
    try {
        const HeraldStates s{reconstruct_detailed(te, cfg, &ml.early).state,
                             reconstruct_detailed(tl, cfg, &ml.late).state,
                             reconstruct_detailed(tp, cfg, &ml.plus).state,
                             reconstruct_detailed(tm, cfg, &ml.minus).state};
        out = bell_quantities(s, phi_m);
        return true;
    } catch (const NumericalError&) {
        return false;
    }
}

BootstrapResult aggregate(const std::vector<Eigen::VectorXd>& draws, const std::vector<char>& ok,
                          const Eigen::VectorXd& ml_values, int iterations) {
    BootstrapResult res;
    res.iterations = iterations;
    res.failures = static_cast<int>(std::count(ok.begin(), ok.end(), 0));
    if (res.failures > 0.05 * iterations) {
        throw NumericalError("bootstrap: " + std::to_string(res.failures) + " of " + std::to_string(iterations) +
                             " iterations failed to converge (limit 5%)");
    }
    const auto& names = quantity_names();
    for (std::size_t q = 0; q < names.size(); ++q) {
        BootstrapQuantity bq;
        bq.name = names[q];
        bq.ml = ml_values(q);
        for (int i = 0; i < iterations; ++i) {
            if (ok[i]) bq.samples.push_back(draws[i](q));
        }
        const double n = static_cast<double>(bq.samples.size());
        // Shifted by the first sample, so identical samples give exactly zero spread.
        const double shift = bq.samples.empty() ? 0.0 : bq.samples.front();
        double acc = 0.0;
        for (double v : bq.samples) acc += v - shift;
        const double mean = shift + acc / n;
        double ss = 0.0;
        for (double v : bq.samples) ss += (v - mean) * (v - mean);
        bq.mean = mean;
        bq.std = n > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
        bq.ci_lo = std::min(bq.mean, bq.ml) - bq.std;
        bq.ci_hi = std::max(bq.mean, bq.ml) + bq.std;
        res.quantities.push_back(std::move(bq));
    }
    return res;
}

void check_bootstrap(int iterations) {
    if (iterations < 1) throw DomainError("bootstrap needs at least one iteration");
}

}  // namespace

const BootstrapQuantity& BootstrapResult::get(const std::string& name) const {
    for (const auto& q : quantities) {
        if (q.name == name) return q;
    }
    throw DomainError("no bootstrap quantity named " + name);
}

std::string BootstrapResult::to_csv() const {
    std::string out = "quantity,ml,mean,std,ci_lo,ci_hi\n";
    char line[256];
    for (const auto& q : quantities) {
        std::snprintf(line, sizeof line, "%s,%.17g,%.17g,%.17g,%.17g,%.17g\n", q.name.c_str(), q.ml, q.mean, q.std,
                      q.ci_lo, q.ci_hi);
        out += line;
    }
    return out;
}

Eigen::VectorXd bell_quantities(const HeraldStates& s, double phi_m) {
    const Eigen::Matrix2d pz = conditional_probabilities(s.early, s.late, Basis::Z);
    const Eigen::Matrix2d px = conditional_probabilities(s.plus, s.minus, Basis::X, phi_m);
    Eigen::VectorXd v(9);
    v << pz(0, 0), pz(0, 1), pz(1, 0), pz(1, 1), px(0, 0), px(0, 1), px(1, 0), px(1, 1), fidelity_lower_bound(pz, px);
    return v;
}

BootstrapResult bootstrap(const HeraldTensors& c, const HeraldStates& ml, const ReconstructionConfig& cfg,
                          int iterations, double phi_m, Execution exec) {
    check_bootstrap(iterations);
    const Eigen::VectorXd ml_values = bell_quantities(ml, phi_m);
    std::vector<Eigen::VectorXd> draws(iterations);
    std::vector<char> ok(iterations, 0);
#pragma omp parallel for schedule(dynamic, 1) num_threads(resolve_workers(exec))
    for (int i = 0; i < iterations; ++i) {
        ok[i] = bootstrap_draw(c, ml, cfg, phi_m, i, ml_values, draws[i]) ? 1 : 0;
    }
    return aggregate(draws, ok, ml_values, iterations);
}

BootstrapResult bootstrap_serial(const HeraldTensors& c, const HeraldStates& ml, const ReconstructionConfig& cfg,
                                 int iterations, double phi_m) {
    check_bootstrap(iterations);
    const Eigen::VectorXd ml_values = bell_quantities(ml, phi_m);
    std::vector<Eigen::VectorXd> draws(iterations);
    std::vector<char> ok(iterations, 0);
    for (int i = 0; i < iterations; ++i) {
        ok[i] = bootstrap_draw(c, ml, cfg, phi_m, i, ml_values, draws[i]) ? 1 : 0;
    }
    return aggregate(draws, ok, ml_values, iterations);
}

std::string state_to_json(const DensityMatrix& rho) {
    nlohmann::ordered_json j;
    j["dims"] = {rho.dims().early, rho.dims().late};
    auto entries = nlohmann::ordered_json::array();
    const int n = rho.dims().size();
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            entries.push_back({rho(r, c).real(), rho(r, c).imag()});
        }
    }
    j["entries"] = std::move(entries);
    return j.dump();
}

}  // namespace duet
