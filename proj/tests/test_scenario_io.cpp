#include <cmath>
#include <filesystem>
#include <numbers>

#include <gtest/gtest.h>

#include "sqz/error.hpp"
#include "sqz/scenario_io.hpp"

using namespace sqz;

namespace {

const std::filesystem::path kDir = SQZ_SCENARIO_DIR;

std::string error_of(std::string_view text) {
    try {
        parse_scenario(text);
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST(LoadScenario, BundledLockedScenario) {
    const auto f = load_scenario(kDir / "paper_fig3.scenario");
    const auto& s = f.scenario;
    EXPECT_DOUBLE_EQ(s.opa.pump_power, 0.66);
    EXPECT_DOUBLE_EQ(s.opa.shg_efficiency, 8.2);
    EXPECT_NEAR(s.jitter.degrees(), 0.8, 1e-14);
    ASSERT_EQ(s.detection_budget.elements.size(), 1u);
    EXPECT_DOUBLE_EQ(s.detection_budget.elements[0].loss, 0.08);
    EXPECT_DOUBLE_EQ(s.analyzer.center_frequency_hz, 11e6);
    EXPECT_DOUBLE_EQ(s.analyzer.rbw_hz, 1e6);
    EXPECT_DOUBLE_EQ(s.analyzer.vbw_hz, 1e3);
    EXPECT_EQ(s.lock_mode, LockMode::locked);
    ASSERT_TRUE(f.fit.data.has_value());
    EXPECT_TRUE(std::filesystem::exists(*f.fit.data));
}

TEST(LoadScenario, BundledScenariosMatchDefaults) {
    const auto f = load_scenario(kDir / "paper_fig3.scenario");
    auto expected = default_scenario_file();
    expected.fit.data = f.fit.data;
    EXPECT_EQ(f.scenario, expected.scenario);
    EXPECT_EQ(f.shift_candidates, expected.shift_candidates);
    EXPECT_EQ(f.shift, expected.shift);
    EXPECT_EQ(f.phase_noise, expected.phase_noise);
    ASSERT_EQ(f.loops.size(), 2u);
    EXPECT_NEAR(f.loops[0].delay_s, expected.loops[0].delay_s, 1e-22);
    EXPECT_NEAR(f.loops[1].delay_s, expected.loops[1].delay_s, 1e-22);

    const auto scanned = load_scenario(kDir / "paper_fig3_scanned.scenario");
    EXPECT_EQ(scanned.scenario.lock_mode, LockMode::scanned);
    EXPECT_DOUBLE_EQ(scanned.scenario.scan_rate_hz, 5.0);
}

TEST(LoadScenario, MissingFile) {
    EXPECT_THROW(load_scenario(kDir / "does_not_exist.scenario"), ParseError);
}

TEST(ParseScenario, EmptyFileIsParseError) {
    EXPECT_THROW(parse_scenario(""), ParseError);
    EXPECT_THROW(parse_scenario("# only a comment\n"), ParseError);
}

TEST(ParseScenario, SyntaxErrorCarriesLine) {
    const auto msg = error_of("[opa]\npump_power = 660 mW\n[broken\n");
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
}

TEST(ParseScenario, OmittedSectionsTakeDefaults) {
    const auto f = parse_scenario("[opa]\npump_power = 500 mW\n");
    EXPECT_DOUBLE_EQ(f.scenario.opa.pump_power, 0.5);
    EXPECT_DOUBLE_EQ(f.scenario.opa.shg_efficiency, 8.2);
    EXPECT_EQ(f.scenario.detector, DetectorModel{});
}

TEST(ParseScenario, OutOfRangeTransmittanceNamesField) {
    const auto msg = error_of("[opa]\nwaveguide_transmittance = 130 %\n");
    EXPECT_NE(msg.find("opa.waveguide_transmittance"), std::string::npos) << msg;
    EXPECT_THROW(parse_scenario("[opa]\nwaveguide_transmittance = 130 %\n"), DomainError);
}

TEST(ParseScenario, AllViolationsReported) {
    const auto msg = error_of(
        "[opa]\npump_power = 660\nshg_efficiency = 820 MHz\n[analyzer]\nrbw = -1 MHz\n"
        "[jitter]\ntheta = 100 deg\n");
    EXPECT_NE(msg.find("4 invalid"), std::string::npos) << msg;
    EXPECT_NE(msg.find("opa.pump_power"), std::string::npos);
    EXPECT_NE(msg.find("opa.shg_efficiency"), std::string::npos);
    EXPECT_NE(msg.find("analyzer.rbw"), std::string::npos);
    EXPECT_NE(msg.find("jitter.theta"), std::string::npos);
}

TEST(ParseScenario, UnknownKeysAndSectionsRejected) {
    EXPECT_NE(error_of("[opa]\npump = 1 W\n").find("opa.pump: unknown key"), std::string::npos);
    EXPECT_NE(error_of("[opamp]\ngain = 1\n").find("[opamp]: unknown section"), std::string::npos);
}

TEST(ParseScenario, ConflictingKeys) {
    EXPECT_NE(error_of("[opa]\nwaveguide_loss = 4 %\nwaveguide_transmittance = 96 %\n").find("either"),
              std::string::npos);
    EXPECT_NE(error_of("[loop_probe_lo]\ndelay = 200 ns\ncrossover = 2 MHz\n").find("either"),
              std::string::npos);
    EXPECT_NE(error_of("[detector]\ncircuit_floor = -90 dBm\nclearance = 25 dB\n").find("detector.clearance"),
              std::string::npos);
    EXPECT_NE(error_of("[fit]\ninitial_transmittance = 90 %\n").find("initial"), std::string::npos);
}

TEST(ParseScenario, BudgetEntryForms) {
    const auto f = parse_scenario(
        "[detection_budget]\npropagation = 3 %\nmode matching = visibility 98.5 %\n"
        "photodiode = efficiency 98 %\n");
    const auto& e = f.scenario.detection_budget.elements;
    ASSERT_EQ(e.size(), 3u);
    EXPECT_EQ(e[1].label, "mode matching");
    EXPECT_NEAR(e[0].loss, 0.03, 1e-16);
    EXPECT_NEAR(e[1].loss, 0.029775, 1e-15);
    EXPECT_NEAR(e[2].loss, 0.02, 1e-15);
}

TEST(ParseScenario, ExplicitDetector) {
    const auto f = parse_scenario(
        "[detector]\nshot_noise = -60 dBm\ncircuit_floor = -85 dBm\nlf_corner = 2 MHz\n"
        "analyzer_floor = -95 dBm\n");
    EXPECT_DOUBLE_EQ(f.scenario.detector.shot_noise_dbm, -60.0);
    EXPECT_DOUBLE_EQ(f.scenario.detector.lf_corner_hz, 2e6);
    EXPECT_NE(error_of("[detector]\ncircuit_floor = -85 dBm\n").find("lf_corner"), std::string::npos);
}

TEST(ParseScenario, LoopCrossoverCalibratesDelay) {
    const auto f = parse_scenario("[loop_opa_probe]\ncrossover = 3 MHz\n");
    EXPECT_NEAR(f.loops[0].delay_s, calibrated_delay(3e6, 10e6), 1e-22);
}

TEST(ParseScenario, PhaseNoiseTable) {
    const auto f = parse_scenario(
        "[phase_noise]\nkind = table\ntable = 100 Hz: 1e-6 rad2/Hz, 10 kHz: 1e-10 rad2/Hz\n"
        "calibrate = none\n");
    EXPECT_EQ(f.phase_noise.spectrum.kind, SpectrumKind::table);
    ASSERT_EQ(f.phase_noise.spectrum.table.size(), 2u);
    EXPECT_DOUBLE_EQ(f.phase_noise.spectrum.table[1].first, 1e4);
    EXPECT_FALSE(f.phase_noise.calibrate_to_rad.has_value());
}

TEST(ParseScenario, ChoiceErrorsListOptions) {
    const auto msg = error_of("[lock]\nmode = wobbling\n");
    EXPECT_NE(msg.find("locked, scanned"), std::string::npos) << msg;
}

TEST(RoundTrip, BundledScenarios) {
    for (const char* name : {"paper_fig3.scenario", "paper_fig3_scanned.scenario"}) {
        const auto f = load_scenario(kDir / name);
        const auto text = serialize_scenario(f);
        const auto g = parse_scenario(text);
        EXPECT_EQ(f, g) << name;
        EXPECT_EQ(serialize_scenario(g), text);
        EXPECT_EQ(scenario_file_digest(f), scenario_file_digest(g));
    }
}

TEST(RoundTrip, EditedValues) {
    auto f = default_scenario_file();
    f.scenario.opa.pump_power = 0.123456789012345;
    f.scenario.jitter = PhaseJitter::from_degrees(1.2345);
    f.scenario.composition = LossComposition::additive;
    f.scenario.fold_circuit_noise = true;
    f.scenario.detection_budget.elements = {{"a b c", 0.0123}, {"d", 0.2}};
    f.scenario.lock_mode = LockMode::scanned;
    f.scenario.jitter_model = JitterModel::gaussian;
    f.shift.min_phase_margin_deg = 52.5;
    f.phase_noise.spectrum.kind = SpectrumKind::table;
    f.phase_noise.spectrum.table = {{10.0, 1e-3}, {1e6, 1e-13}};
    f.phase_noise.calibrate_to_rad.reset();
    f.fit.initial = ModelParams{0.9, 7.0, 0.01};
    f.fit.data = "data.csv";
    f.loops[1].controller.kd = 1e-9;
    f.out_dir = "results";
    const auto g = parse_scenario(serialize_scenario(f));
    EXPECT_EQ(f, g);
}

TEST(RoundTrip, DigestTracksChanges) {
    auto f = default_scenario_file();
    const auto d0 = scenario_file_digest(f);
    EXPECT_EQ(d0.size(), 16u);
    f.scenario.analyzer.seed = 7;
    EXPECT_NE(scenario_file_digest(f), d0);
}

TEST(PumpSweepCsv, ParseAndRender) {
    const std::vector<PumpSweepPoint> pts{{0.15, -6.6, 9.1}, {0.3, -7.9, 13.1}};
    const auto text = pump_sweep_csv(pts, "comment");
    EXPECT_EQ(text.substr(0, 10), "# comment\n");
    const auto back = parse_pump_sweep_csv(text);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_DOUBLE_EQ(back[1].anti_squeezing_db, 13.1);
    EXPECT_THROW(parse_pump_sweep_csv("pump,sq\n"), ParseError);
    EXPECT_THROW(parse_pump_sweep_csv("pump_w,squeezing_db,antisqueezing_db\n1,2\n"), ParseError);
    EXPECT_THROW(parse_pump_sweep_csv("pump_w,squeezing_db,antisqueezing_db\n1,x,2\n"), ParseError);
    EXPECT_THROW(parse_pump_sweep_csv(""), ParseError);
}

TEST(PumpSweepCsv, BundledData) {
    const auto d = load_pump_sweep_csv(kDir / "paper_fig4b_synthetic.csv");
    ASSERT_EQ(d.size(), 8u);
    EXPECT_DOUBLE_EQ(d.front().pump_power, 0.15);
    EXPECT_DOUBLE_EQ(d.back().pump_power, 1.2);
}

TEST(TraceCsv, HeaderCarriesDigestAndSeed) {
    Trace t;
    t.axis_values = {0.0, 0.1};
    t.values_dbm = {-73.0, -73.5};
    t.digest = "0123456789abcdef";
    t.seed = 9;
    t.label = "locked";
    EXPECT_EQ(trace_csv(t),
              "# digest=0123456789abcdef seed=9 label=locked axis=time_s\naxis,value_dbm\n"
              "0,-73\n0.1,-73.5\n");
}

TEST(BodeCsv, Columns) {
    const std::vector<BodePoint> b{{1e3, -0.5, -10.25}};
    EXPECT_EQ(bode_csv(b), "frequency_hz,gain_db,phase_deg\n1000,-0.5,-10.25\n");
}
