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

// duet: simulate, analyze and report time-bin microwave-optical entanglement runs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "duet/coupled_mode.hpp"
#include "duet/error.hpp"
#include "duet/pipeline.hpp"
#include "duet/source_model.hpp"
#include "duet/version.hpp"

namespace {

using duet::ExperimentConfig;
using json = nlohmann::ordered_json;

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string format;
    int workers = 0;
    std::string input;
};

ExperimentConfig resolve_config(const Options& o, const std::string& fallback = {}) {
    ExperimentConfig cfg;
    if (!o.config.empty()) {
        cfg = duet::load_config(o.config);
    } else if (!fallback.empty() && std::filesystem::exists(fallback)) {
        cfg = duet::load_config(fallback);
    }
    if (o.seed) {
        cfg.seed = *o.seed;
        cfg.validate();
    }
    return cfg;
}

void emit(const std::string& text, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw duet::IoError("cannot write " + path);
    out << text;
    if (!out) throw duet::IoError("failed writing " + path);
}

std::string fixed(double v, int digits = 4) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

int run_simulate(const Options& o) {
    if (o.out.empty()) throw duet::ConfigError("simulate needs --out <dir>");
    const ExperimentConfig cfg = resolve_config(o);
    const bool csv = o.format == "csv";
    if (!o.format.empty() && o.format != "csv" && o.format != "binary") {
        throw duet::ConfigError("simulate --format is binary or csv");
    }
    const duet::SimulationOutput sim = duet::run_simulation(cfg, {o.workers});
    duet::save_simulation(o.out, sim, cfg, csv);
    std::cerr << "wrote " << sim.z.size() << " Z, " << sim.x.size() << " X, " << sim.calibration.size()
              << " calibration and " << sim.unconditional.size() << " unconditional records to " << o.out << "\n";
    return 0;
}

int run_analyze(const Options& o) {
    const std::string dir = o.input;
    const ExperimentConfig cfg = resolve_config(o, dir + "/config.toml");
    const duet::SimulationOutput sim = duet::load_simulation(dir);
    const duet::RunReport rep = duet::run_analysis(sim, cfg, {o.workers});
    const std::string out = o.out.empty() ? dir : o.out;
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) throw duet::IoError("cannot create " + out + ": " + ec.message());
    const std::string format = o.format.empty() ? "all" : o.format;
    if (format == "all") {
        emit(duet::report(rep, duet::ReportFormat::json), out + "/report.json");
        emit(duet::report(rep, duet::ReportFormat::csv), out + "/report.csv");
        emit(duet::report(rep, duet::ReportFormat::markdown), out + "/report.md");
    } else {
        const duet::ReportFormat f = duet::parse_report_format(format);
        const char* ext = f == duet::ReportFormat::json ? "json" : f == duet::ReportFormat::csv ? "csv" : "md";
        emit(duet::report(rep, f), out + "/report." + ext);
        if (f != duet::ReportFormat::json) emit(rep.to_json(), out + "/report.json");
    }
    std::cerr << "F_lb (ML) = " << fixed(rep.f_lb) << ", V_z = " << fixed(rep.v_z.value) << ", V_x = "
              << fixed(rep.v_x.value) << "; reports in " << out << "\n";
    return 0;
}

int run_model(const Options& o) {
    const ExperimentConfig cfg = resolve_config(o);
    const duet::ModelSummary m =
        duet::summarize_model(cfg.noise, cfg.phi_opt(), cfg.phi_m(), cfg.model_options(), cfg.dims);
    const duet::HeraldStatistics hs = duet::herald_statistics(cfg.source, cfg.t_r);
    const std::string format = o.format.empty() ? "markdown" : o.format;
    std::string text;
    if (format == "json") {
        auto mat = [](const Eigen::Matrix2d& a) {
            return json::array({json::array({a(0, 0), a(0, 1)}), json::array({a(1, 0), a(1, 1)})});
        };
        json j;
        j["config_hash"] = duet::config_hash(cfg);
        j["n"] = mat(m.n);
        j["v_z"] = m.v_z;
        j["v_x"] = m.v_x;
        j["g2"] = {{"early", m.g2.early}, {"late", m.g2.late}};
        j["pz"] = mat(m.pz);
        j["px"] = mat(m.px);
        j["f_lb"] = m.f_lb;
        j["herald_rate"] = hs.rate;
        text = j.dump(2) + "\n";
    } else if (format == "csv") {
        std::ostringstream s;
        s.precision(17);
        s << "quantity,value\n";
        const char* names[4] = {"ee", "el", "le", "ll"};
        for (int k = 0; k < 4; ++k) s << "n_" << names[k] << "," << m.n(k / 2, k % 2) << "\n";
        s << "v_z," << m.v_z << "\nv_x," << m.v_x << "\ng2_early," << m.g2.early << "\ng2_late," << m.g2.late << "\n";
        for (int k = 0; k < 4; ++k) s << "pz_" << names[k] << "," << m.pz(k / 2, k % 2) << "\n";
        const char* xn[4] = {"pp", "pm", "mp", "mm"};
        for (int k = 0; k < 4; ++k) s << "px_" << xn[k] << "," << m.px(k / 2, k % 2) << "\n";
        s << "f_lb," << m.f_lb << "\nherald_rate," << hs.rate << "\n";
        text = s.str();
    } else if (format == "markdown" || format == "md") {
        std::ostringstream s;
        s << "# Model prediction\n\nconfig hash `" << duet::config_hash(cfg) << "`\n\n";
        s << "| click \\ mode | early | late |\n|---|---|---|\n";
        s << "| early | " << fixed(m.n(0, 0)) << " | " << fixed(m.n(0, 1)) << " |\n";
        s << "| late | " << fixed(m.n(1, 0)) << " | " << fixed(m.n(1, 1)) << " |\n\n";
        s << "- V_z = " << fixed(m.v_z) << ", V_x = " << fixed(m.v_x) << "\n";
        s << "- g2 early = " << fixed(m.g2.early, 3) << ", late = " << fixed(m.g2.late, 3) << "\n";
        s << "- p_z = [[" << fixed(m.pz(0, 0)) << ", " << fixed(m.pz(0, 1)) << "], [" << fixed(m.pz(1, 0)) << ", "
          << fixed(m.pz(1, 1)) << "]]\n";
        s << "- p_x = [[" << fixed(m.px(0, 0)) << ", " << fixed(m.px(0, 1)) << "], [" << fixed(m.px(1, 0)) << ", "
          << fixed(m.px(1, 1)) << "]]\n";
        s << "- F_lb = " << fixed(m.f_lb) << "\n- herald rate = " << fixed(hs.rate, 3) << " /s\n";
        text = s.str();
    } else {
        throw duet::ConfigError("model --format is json, csv or markdown");
    }
    emit(text, o.out);
    return 0;
}

int run_envelope(const Options& o) {
    const ExperimentConfig cfg = resolve_config(o);
    const duet::CoupledModeRates rates = cfg.rates.angular();
    const double decay = 4.0 / (rates.kappa_m + rates.kappa_mw());
    const duet::TimeGrid grid{0.0, 1e-9, static_cast<int>(8.0 * decay / 1e-9) + 1};
    const duet::Envelope f = duet::envelope(rates, grid);
    const auto [lp, lm] = duet::eigenvalues(rates);
    const double swap = duet::swap_delay(rates);
    const double ortho = duet::orthogonal_delay(rates);
    const double eta = duet::extraction_efficiency(rates);
    json j;
    j["lambda_plus"] = {lp.real(), lp.imag()};
    j["lambda_minus"] = {lm.real(), lm.imag()};
    j["swap_delay_ns"] = swap * 1e9;
    j["orthogonal_delay_ns"] = ortho * 1e9;
    j["configured_delay_ns"] = cfg.t_d * 1e9;
    j["overlap_at_configured_delay"] = std::abs(duet::envelope_overlap(rates, cfg.t_d));
    j["overlap_at_swap_delay"] = std::abs(duet::envelope_overlap(rates, swap));
    j["extraction_efficiency"] = eta;
    j["envelope_norm"] = f.norm();
    if (!o.out.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(o.out, ec);
        if (ec) throw duet::IoError("cannot create " + o.out + ": " + ec.message());
        duet::write_envelope_csv(o.out + "/envelope.csv", f);
        emit(j.dump(2) + "\n", o.out + "/envelope.json");
    }
    if (o.format == "json" || (o.out.empty() && o.format.empty())) {
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << "swap delay " << fixed(swap * 1e9, 1) << " ns, orthogonal delay " << fixed(ortho * 1e9, 1)
                  << " ns, |overlap| at T_d = " << fixed(j["overlap_at_configured_delay"].get<double>())
                  << ", extraction efficiency " << fixed(eta) << "\n";
    }
    return 0;
}

int run_report(const Options& o) {
    std::ifstream in(o.input, std::ios::binary);
    if (!in) throw duet::IoError("cannot open " + o.input);
    std::ostringstream ss;
    ss << in.rdbuf();
    const duet::RunReport rep = duet::RunReport::from_json(ss.str());
    const duet::ReportFormat f = duet::parse_report_format(o.format.empty() ? "markdown" : o.format);
    emit(duet::report(rep, f), o.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Time-bin microwave-optical entanglement: model, simulation and analysis"};
    app.set_version_flag("--version", duet::kVersion);
    app.require_subcommand(1);
    Options o;
    std::uint64_t seed = 0;
    auto common = [&](CLI::App* sub, bool seeded) {
        sub->add_option("--config", o.config, "TOML experiment configuration");
        if (seeded) {
            sub->add_option("--seed", seed, "Master seed (overrides the config)")->each([&](const std::string&) {
                o.seed = seed;
            });
        }
        sub->add_option("--workers", o.workers, "Worker threads (0 = OpenMP default)")->check(CLI::NonNegativeNumber);
    };

    auto* simulate = app.add_subcommand("simulate", "Draw heralded, calibration and unconditional records");
    common(simulate, true);
    simulate->add_option("--out", o.out, "Output directory")->required();
    simulate->add_option("--format", o.format, "Record format: binary (default) or csv");

    auto* analyze = app.add_subcommand("analyze", "Moments, tomography, bootstrap and reports for a run directory");
    common(analyze, true);
    analyze->add_option("run_dir", o.input, "Directory written by simulate")->required();
    analyze->add_option("--out", o.out, "Report directory (default: the run directory)");
    analyze->add_option("--format", o.format, "json, csv, markdown or all (default)");

    auto* model = app.add_subcommand("model", "Closed-form model prediction");
    common(model, false);
    model->add_option("--out", o.out, "Output file (default stdout)");
    model->add_option("--format", o.format, "json, csv or markdown (default)");

    auto* env = app.add_subcommand("envelope", "Emission envelope and delay report");
    common(env, false);
    env->add_option("--out", o.out, "Directory for envelope.csv and envelope.json");
    env->add_option("--format", o.format, "json or text");

    auto* rep = app.add_subcommand("report", "Re-render a saved report.json");
    rep->add_option("report", o.input, "report.json written by analyze")->required();
    rep->add_option("--out", o.out, "Output file (default stdout)");
    rep->add_option("--format", o.format, "json, csv or markdown (default)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }
    try {
        if (*simulate) return run_simulate(o);
        if (*analyze) return run_analyze(o);
        if (*model) return run_model(o);
        if (*env) return run_envelope(o);
        if (*rep) return run_report(o);
    } catch (const duet::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const duet::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const duet::IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const duet::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
