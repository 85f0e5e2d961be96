#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "sqz/commands.hpp"
#include "sqz/error.hpp"

using namespace sqz;
namespace fs = std::filesystem;

namespace {

const fs::path kDir = SQZ_SCENARIO_DIR;

ScenarioFile paper() { return load_scenario(kDir / "paper_fig3.scenario"); }

double value(const RunReport& r, std::string_view key) {
    const auto* v = r.find(key);
    if (v == nullptr) throw std::runtime_error("missing key " + std::string(key));
    return std::stod(*v);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("sqzkit_test_" + name);
    fs::remove_all(p);
    return p;
}

int run_tool(const std::string& args) {
    const int rc = std::system((std::string(SQZKIT_PATH) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Commands, SimulateLockedMean) {
    const auto r = run_command("simulate", paper(), {});
    EXPECT_NEAR(value(r, "trace_mean_db"), -8.30, 0.10);
    EXPECT_EQ(*r.find("lock_mode"), "locked");
    ASSERT_EQ(r.artifacts.size(), 2u);
    EXPECT_EQ(r.artifacts[0].first, "zero_span.csv");
    EXPECT_NE(r.artifacts[0].second.find("# digest=" + *r.find("trace_digest") + " seed=1"),
              std::string::npos);
}

TEST(Commands, SimulateScannedEnvelope) {
    const auto r = run_command("simulate", load_scenario(kDir / "paper_fig3_scanned.scenario"), {});
    EXPECT_NEAR(value(r, "envelope_antisqueezing_db"), value(r, "model_antisqueezing_db"), 0.2);
    EXPECT_NEAR(value(r, "envelope_squeezing_db"), value(r, "model_squeezing_db"), 0.2);
}

TEST(Commands, SeedOverride) {
    RunFlags f;
    f.seed = 5;
    const auto a = run_command("simulate", paper(), f);
    const auto b = run_command("simulate", paper(), {});
    EXPECT_EQ(a.seed, 5u);
    EXPECT_NE(a.digest, b.digest);
    EXPECT_NE(a.artifacts[0].second, b.artifacts[0].second);
}

TEST(Commands, Optimize) {
    const auto r = run_command("optimize", paper(), {});
    EXPECT_NEAR(value(r, "optimal_pump_w"), 0.556221, 1e-6);
    EXPECT_LT(value(r, "grid_agreement_mw"), 0.1);
    EXPECT_LT(value(r, "squeezing_gap_db"), 0.1);
}

TEST(Commands, Budget) {
    const auto r = run_command("budget", paper(), {});
    EXPECT_NEAR(value(r, "additive_loss_percent"), 12.3, 0.05);
    EXPECT_NEAR(value(r, "multiplicative_transmittance"), 0.880407, 1e-6);
    ASSERT_EQ(r.warnings.size(), 1u);
}

TEST(Commands, SelectFrequencyAndMargins) {
    const auto s = run_command("select-freq", paper(), {});
    EXPECT_DOUBLE_EQ(value(s, "selected_shift_hz"), 1e6);
    EXPECT_DOUBLE_EQ(value(s, "opa_probe.demod_hz"), 2e6);
    EXPECT_DOUBLE_EQ(value(s, "probe_lo.demod_hz"), 1e6);
    const auto m = run_command("margins", paper(), {});
    EXPECT_EQ(*m.find("opa_probe.stable"), "true");
    EXPECT_NEAR(value(m, "opa_probe.residual_jitter_deg"), 0.8, 1e-6);
}

TEST(Commands, BodeArtifacts) {
    const auto r = run_command("bode", paper(), {});
    EXPECT_NEAR(value(r, "opa_probe.system_crossover_hz"), 4e6, 1.0);
    EXPECT_NEAR(value(r, "probe_lo.system_crossover_hz"), 2e6, 1.0);
    ASSERT_EQ(r.artifacts.size(), 4u);
    EXPECT_EQ(r.artifacts[0].second.substr(0, 31), "frequency_hz,gain_db,phase_deg\n");
}

TEST(Commands, FitBundledData) {
    const auto r = run_command("fit", paper(), {});
    EXPECT_NEAR(value(r, "transmittance"), 0.88, 1e-6);
    EXPECT_NEAR(value(r, "shg_efficiency_per_w"), 8.2, 1e-5);
    EXPECT_NEAR(value(r, "jitter_deg"), 0.8, 1e-6);
    EXPECT_EQ(*r.find("converged"), "true");
}

TEST(Commands, FitWithoutDataIsValidationError) {
    auto s = paper();
    s.fit.data.reset();
    EXPECT_THROW(run_command("fit", s, {}), DomainError);
}

TEST(Commands, SweepAndReport) {
    const auto s = run_command("sweep", paper(), {});
    EXPECT_DOUBLE_EQ(value(s, "best_frequency_hz"), 11e6);
    const auto r = run_command("report", paper(), {});
    EXPECT_NE(r.find("budget.additive_loss_percent"), nullptr);
    EXPECT_NE(r.find("fit.transmittance"), nullptr);
    EXPECT_NE(r.find("select-freq.selected_shift_hz"), nullptr);
}

TEST(Commands, UnknownCommand) { EXPECT_THROW(run_command("explode", paper(), {}), DomainError); }

TEST(Commands, InfeasibleOptimum) {
    auto s = paper();
    s.scenario.jitter = PhaseJitter{};
    try {
        run_command("optimize", s, {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.category(), ErrorCategory::infeasible);
    }
}

TEST(Report, JsonIsVersionedAndTyped) {
    const auto r = run_command("budget", paper(), {});
    const auto j = nlohmann::json::parse(r.to_json());
    EXPECT_EQ(j["schema_version"], kReportSchemaVersion);
    EXPECT_EQ(j["version"], kToolVersion);
    EXPECT_EQ(j["scenario_digest"], r.digest);
    EXPECT_TRUE(j["results"]["additive_loss_percent"].is_number());
    EXPECT_TRUE(j["results"]["row0.label"].is_string());
    EXPECT_EQ(j["warnings"].size(), 1u);
}

TEST(Report, TextFormats) {
    const auto r = run_command("optimize", paper(), {});
    EXPECT_NE(r.to_text().find("optimal_pump_w = 0.556221"), std::string::npos);
    EXPECT_EQ(r.to_text(OutputFormat::csv).substr(0, 10), "key,value\n");
}

TEST(Cli, ByteIdenticalArtifacts) {
    const auto a = scratch("det_a");
    const auto b = scratch("det_b");
    const auto scen = (kDir / "paper_fig3.scenario").string();
    ASSERT_EQ(run_tool("simulate " + scen + " --seed 3 --out-dir " + a.string()), 0);
    ASSERT_EQ(run_tool("simulate " + scen + " --seed 3 --out-dir " + b.string()), 0);
    for (const char* f : {"zero_span.csv", "shot_reference.csv", "report_simulate.json"}) {
        const auto ca = slurp(a / f);
        EXPECT_FALSE(ca.empty()) << f;
        EXPECT_EQ(ca, slurp(b / f)) << f;
    }
}

TEST(Cli, ExitCodes) {
    const auto dir = scratch("codes");
    fs::create_directories(dir);
    const auto out = " --quiet --out-dir " + (dir / "out").string();
    EXPECT_EQ(run_tool("budget " + (kDir / "paper_fig3.scenario").string() + out), 0);

    std::ofstream(dir / "bad.scenario") << "[opa]\nwaveguide_transmittance = 130 %\n";
    EXPECT_EQ(run_tool("budget " + (dir / "bad.scenario").string() + out), 2);

    std::ofstream(dir / "empty.scenario") << "";
    EXPECT_EQ(run_tool("simulate " + (dir / "empty.scenario").string() + out), 2);

    std::ofstream(dir / "nojitter.scenario") << "[jitter]\ntheta = 0 deg\n";
    EXPECT_EQ(run_tool("optimize " + (dir / "nojitter.scenario").string() + out), 4);

    std::ofstream(dir / "unstable.scenario") << "[loop_opa_probe]\nkp = 2\nki = 251327.4 1/s\n";
    EXPECT_EQ(run_tool("margins " + (dir / "unstable.scenario").string() + out), 3);

    EXPECT_EQ(run_tool("simulate"), 2);
    EXPECT_EQ(run_tool("simulate " + (kDir / "paper_fig3.scenario").string() + " --format xml"), 2);

    std::ofstream(dir / "narrow.scenario") << "[shift]\ncandidates = 4 MHz, 8 MHz\n";
    EXPECT_EQ(run_tool("select-freq " + (dir / "narrow.scenario").string() + out), 4);
}

TEST(Cli, WritesReportPair) {
    const auto dir = scratch("pair");
    ASSERT_EQ(run_tool("optimize " + (kDir / "paper_fig3.scenario").string() + " --format csv --out-dir " +
                       dir.string()),
              0);
    EXPECT_TRUE(fs::exists(dir / "report_optimize.json"));
    EXPECT_EQ(slurp(dir / "report_optimize.txt").substr(0, 10), "key,value\n");
    EXPECT_TRUE(fs::exists(dir / "pump_curve.csv"));
}
