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
#include <numbers>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "duet/error.hpp"
#include "duet/pipeline.hpp"
#include "duet/source_model.hpp"

namespace duet {
namespace {

constexpr double kPi = std::numbers::pi;

ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.seed = 7;
    cfg.heralds_z = 3000;
    cfg.heralds_x = 2000;
    cfg.calibration_records = 3000;
    cfg.unconditional_records = 3000;
    cfg.bootstrap_iterations = 4;
    cfg.scan_records = 200;
    cfg.scan_step = 48e-9;
    return cfg;
}

std::string temp_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(p);
    return p.string();
}

bool same_records(const std::vector<VoltageRecord>& a, const std::vector<VoltageRecord>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a[i] == b[i])) return false;
    }
    return true;
}

TEST(Config, DefaultsRoundTrip) {
    const ExperimentConfig cfg;
    EXPECT_EQ(parse_config(serialize_config(cfg)), cfg);
    EXPECT_NEAR(cfg.t_d, 279e-9, 0.0);
    EXPECT_NEAR(cfg.t_p, 96e-9, 0.0);
    EXPECT_NEAR(cfg.t_r, 20e-6, 0.0);
}

TEST(Config, RandomizedRoundTrip) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 20; ++t) {
        ExperimentConfig cfg;
        cfg.seed = rng() >> 2;
        cfg.noise.eta_ext = u(rng);
        cfg.noise.n_i_e = u(rng) / 3.0;
        cfg.source.p = 1e-3 * u(rng);
        cfg.source.phi_p = 6.0 * u(rng);
        cfg.amplifier.gain_db = 90.0 + 20.0 * u(rng);
        cfg.dims = {2 + static_cast<int>(rng() % 6), 2 + static_cast<int>(rng() % 6)};
        cfg.phi_opt_pi = 2.0 * u(rng);
        cfg.imperfections = rng() % 2;
        cfg.heralds_z = 100 + rng() % 100000;
        cfg.tol_objective = std::pow(10.0, -12.0 * u(rng));
        cfg.scan_step = 1e-9 + 1e-7 * u(rng);
        EXPECT_EQ(parse_config(serialize_config(cfg)), cfg);
        EXPECT_EQ(serialize_config(parse_config(serialize_config(cfg))), serialize_config(cfg));
    }
}

TEST(Config, HashIsStableAndSensitive) {
    ExperimentConfig a;
    const std::string h = config_hash(a);
    EXPECT_EQ(h, config_hash(ExperimentConfig{}));
    EXPECT_EQ(h, config_hash(parse_config(serialize_config(a))));
    a.noise.n_d_l += 1e-12;
    EXPECT_NE(h, config_hash(a));
}

TEST(Config, PartialFileKeepsDefaults) {
    const ExperimentConfig cfg = parse_config("seed = 11\n[records]\nheralds_z = 1234\n");
    EXPECT_EQ(cfg.seed, 11u);
    EXPECT_EQ(cfg.heralds_z, 1234u);
    EXPECT_EQ(cfg.heralds_x, ExperimentConfig{}.heralds_x);
    EXPECT_EQ(cfg.noise, NoiseParams{});
}

TEST(Config, Errors) {
    EXPECT_THROW(parse_config("[records]\nheraldz = 10\n"), ConfigError);
    EXPECT_THROW(parse_config("[records]\nheralds_z = 10\n"), ConfigError);
    EXPECT_THROW(parse_config("[noise]\neta_ext = 1.5\n"), ConfigError);
    EXPECT_THROW(parse_config("[noise]\neta_ext = \"high\"\n"), ConfigError);
    EXPECT_THROW(parse_config("seed = = 1"), ConfigError);
    EXPECT_THROW(parse_config("[timing]\nt_d = 30e-6\n"), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/duet.toml"), IoError);
}

TEST(Simulation, ZeroPumpingGivesNoHeralds) {
    ExperimentConfig cfg = small_config();
    cfg.source.p = 0.0;
    const SimulationOutput sim = run_simulation(cfg);
    EXPECT_TRUE(sim.z.empty());
    EXPECT_TRUE(sim.x.empty());
    EXPECT_EQ(sim.calibration.size(), cfg.calibration_records);
    EXPECT_EQ(sim.metadata.herald_rate, 0.0);
    EXPECT_FALSE(sim.scan.has_value());
}

TEST(Simulation, SizesAndMetadata) {
    const ExperimentConfig cfg = small_config();
    const SimulationOutput sim = run_simulation(cfg);
    EXPECT_EQ(sim.z.size(), 2 * cfg.heralds_z);
    EXPECT_EQ(sim.x.size(), 2 * cfg.heralds_x);
    EXPECT_EQ(sim.unconditional.size(), cfg.unconditional_records);
    EXPECT_EQ(sim.calibration.size(), cfg.calibration_records);
    EXPECT_NEAR(sim.metadata.herald_rate, 0.275, 1e-9);
    EXPECT_NEAR(sim.metadata.herald_rate, 0.26, 0.06 * 0.26);
    EXPECT_NEAR(sim.metadata.wall_clock_equivalent, 10000.0 / 0.275, 1e-6);
    EXPECT_GT(sim.metadata.sampler_acceptance, 0.0);
    ASSERT_TRUE(sim.scan.has_value());
}

TEST(Simulation, DeterministicAndScheduleIndependent) {
    const ExperimentConfig cfg = small_config();
    const SimulationOutput a = run_simulation(cfg, {1});
    const SimulationOutput b = run_simulation(cfg, {4});
    EXPECT_TRUE(same_records(a.z, b.z));
    EXPECT_TRUE(same_records(a.x, b.x));
    EXPECT_TRUE(same_records(a.calibration, b.calibration));
    EXPECT_TRUE(same_records(a.unconditional, b.unconditional));
    ExperimentConfig other = cfg;
    other.seed = 8;
    EXPECT_FALSE(same_records(a.z, run_simulation(other).z));
}

TEST(Simulation, ReadoutScanRecoversDelay) {
    ExperimentConfig cfg;
    // The located delay scatters by ~12 ns at 10k records.
    cfg.scan_records = 20000;
    cfg.scan_step = 16e-9;
    const ReadoutScan s = readout_scan(cfg);
    ASSERT_EQ(s.tau.size(), s.g2_early.size());
    EXPECT_NEAR(s.t_l - s.t_e, cfg.t_d, 2.0 * cfg.scan_step);
    double best = 0.0;
    for (double g : s.g2_early) best = std::max(best, g);
    EXPECT_GT(best, 2.0);
}

TEST(FitFringe, ExactCosine) {
    std::vector<double> x, y;
    for (int i = 0; i < 40; ++i) {
        x.push_back(0.1 * i);
        y.push_back(0.8 * std::cos(1.7 * x.back() + 0.4) + 1.3);
    }
    const FringeFit f = fit_fringe(x, y);
    EXPECT_NEAR(f.amplitude, 0.8, 1e-8);
    EXPECT_NEAR(f.frequency, 1.7, 1e-8);
    EXPECT_NEAR(f.phase, 0.4, 1e-8);
    EXPECT_NEAR(f.offset, 1.3, 1e-8);
    EXPECT_LT(f.rms_residual, 1e-8);
    EXPECT_FALSE(f.phase_undetermined);
}

TEST(FitFringe, FlatDataFlagsPhase) {
    std::vector<double> x, y;
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(0.0, 1e-3);
    for (int i = 0; i < 30; ++i) {
        x.push_back(0.2 * i);
        y.push_back(0.5 + g(rng));
    }
    const FringeFit f = fit_fringe(x, y);
    EXPECT_LT(f.amplitude, 5e-3);
    EXPECT_NEAR(f.offset, 0.5, 1e-3);
    EXPECT_TRUE(f.phase_undetermined);
    EXPECT_GT(f.covariance(2, 2), 1.0);
    const FringeFit exact = fit_fringe(x, std::vector<double>(x.size(), 0.5));
    EXPECT_TRUE(exact.phase_undetermined);
    EXPECT_NEAR(exact.amplitude, 0.0, 1e-12);
}

TEST(FitFringe, ModelFringeAmplitudeMatchesVisibility) {
    std::vector<double> grid;
    for (int i = 0; i < 72; ++i) grid.push_back(2.0 * kPi * i / 72);
    const Fringe fr = visibility_x({}, grid, 0.56 * kPi);
    const FringeFit f = fit_fringe(grid, fr.plus);
    EXPECT_NEAR(f.amplitude / f.offset, fr.visibility, 0.02);
    EXPECT_NEAR(fr.visibility, 0.70, 0.02);
    EXPECT_NEAR(f.frequency, 1.0, 1e-6);
}

TEST(FitFringe, InvalidInputs) {
    EXPECT_THROW(fit_fringe({1, 2, 3}, {1, 2, 3}), DomainError);
    EXPECT_THROW(fit_fringe({1, 2, 3, 4, 5, 6}, {1, 2, 3}), DomainError);
}

struct AnalysisFixture : ::testing::Test {
    static void SetUpTestSuite() {
        cfg_ = new ExperimentConfig(small_config());
        sim_ = new SimulationOutput(run_simulation(*cfg_));
        run_ = new RunReport(run_analysis(*sim_, *cfg_));
    }
    static void TearDownTestSuite() {
        delete run_;
        delete sim_;
        delete cfg_;
    }
    static ExperimentConfig* cfg_;
    static SimulationOutput* sim_;
    static RunReport* run_;
};
ExperimentConfig* AnalysisFixture::cfg_ = nullptr;
SimulationOutput* AnalysisFixture::sim_ = nullptr;
RunReport* AnalysisFixture::run_ = nullptr;

TEST_F(AnalysisFixture, ReportIsComplete) {
    const RunReport& r = *run_;
    EXPECT_EQ(r.config_hash, config_hash(*cfg_));
    EXPECT_EQ(r.seed, cfg_->seed);
    EXPECT_EQ(r.n_early, cfg_->heralds_z);
    EXPECT_EQ(r.n_plus, cfg_->heralds_x);
    EXPECT_EQ(r.bootstrap_iterations, cfg_->bootstrap_iterations);
    EXPECT_EQ(r.bootstrap.size(), 9u);
    EXPECT_NEAR(r.pz.sum(), 1.0, 1e-12);
    EXPECT_NEAR(r.px.sum(), 1.0, 1e-12);
    EXPECT_EQ(r.fringe.phi_m.size(), static_cast<std::size_t>(cfg_->phase_scan_points));
    EXPECT_TRUE(r.scan.has_value());
    EXPECT_NEAR(r.model.v_z, 0.70, 0.005);
}

TEST_F(AnalysisFixture, RepeatedRunsAreByteIdentical) {
    const RunReport again = run_analysis(run_simulation(*cfg_), *cfg_);
    for (ReportFormat f : {ReportFormat::json, ReportFormat::csv, ReportFormat::markdown}) {
        EXPECT_EQ(report(*run_, f), report(again, f));
    }
}

TEST_F(AnalysisFixture, FilesEqualMemory) {
    for (bool csv : {false, true}) {
        const std::string dir = temp_dir(csv ? "duet_stage_csv" : "duet_stage_bin");
        save_simulation(dir, *sim_, *cfg_, csv);
        const SimulationOutput loaded = load_simulation(dir);
        EXPECT_TRUE(same_records(loaded.z, sim_->z));
        EXPECT_TRUE(same_records(loaded.x, sim_->x));
        const ExperimentConfig cfg = load_config(dir + "/config.toml");
        EXPECT_EQ(cfg, *cfg_);
        EXPECT_EQ(run_analysis(loaded, cfg).to_json(), run_->to_json());
        std::filesystem::remove_all(dir);
    }
    EXPECT_THROW(load_simulation(temp_dir("duet_stage_missing")), IoError);
}

TEST_F(AnalysisFixture, JsonRoundTrip) {
    const RunReport back = RunReport::from_json(run_->to_json());
    EXPECT_EQ(back.to_json(), run_->to_json());
}

TEST_F(AnalysisFixture, ReferenceTable) {
    const std::string md = report(*run_, ReportFormat::markdown);
    for (const char* v : {"0.633", "0.014", "0.611", "0.034", "6.8", "5.0", "0.794", "0.70", "0.83"}) {
        EXPECT_NE(md.find(v), std::string::npos) << v;
    }
    const auto rows = reference_comparison(*run_);
    bool vz = false;
    for (const auto& row : rows) {
        const double sref = row.reference_sigma > 0.0 ? row.reference_sigma : 0.05 * std::abs(row.reference);
        EXPECT_NEAR(row.tolerance, 2.0 * std::hypot(sref, row.simulated.sigma), 1e-12) << row.quantity;
        if (row.quantity == "V_z" && row.kind == "measured") {
            vz = true;
            EXPECT_EQ(row.reference, 0.633);
            EXPECT_EQ(row.reference_sigma, 0.014);
        }
    }
    EXPECT_TRUE(vz);
    EXPECT_EQ(report(*run_, ReportFormat::csv).substr(0, 21), "quantity,value,sigma\n");
    EXPECT_THROW(parse_report_format("yaml"), ConfigError);
}

TEST(Analysis, PhaseScanPeaksAtOpticalPhase) {
    ExperimentConfig cfg = small_config();
    cfg.heralds_x = 20000;
    cfg.bootstrap_iterations = 0;
    cfg.scan_records = 0;
    const RunReport r = run_analysis(run_simulation(cfg), cfg);
    const double d = std::remainder(r.fringe.best_phi_m - cfg.phi_opt(), 2.0 * kPi);
    EXPECT_LT(std::abs(d), 0.1 * kPi);
}

TEST(Analysis, NoiselessBellRecords) {
    ExperimentConfig cfg;
    cfg.noise = {1.0, 0.0, 0.0, 0.0, 0.0};
    cfg.heralds_z = 100000;
    cfg.heralds_x = 100000;
    cfg.calibration_records = 100000;
    cfg.unconditional_records = 1000;
    cfg.bootstrap_iterations = 0;
    cfg.scan_records = 0;
    const RunReport r = run_analysis(run_simulation(cfg), cfg);
    EXPECT_GT(r.f_lb, 0.95);
}

}  // namespace
}  // namespace duet
