#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "sqz/error.hpp"
#include "sqz/lock_loop.hpp"

using namespace sqz;

namespace {

constexpr double kPi = std::numbers::pi;

// Reference values from an independent numpy/scipy implementation of the
// default loops (brentq margins, adaptive quadrature for the jitter integral).
constexpr double kOpaDelay = 1.0986013230114457e-07;
constexpr double kLoDelay = 2.342917604527497e-07;
constexpr double kOpaPhaseCrossover = 3993227.5027961065;
constexpr double kOpaGainMargin = 8.600375042811384;
constexpr double kLoPhaseCrossover = 1993282.388045078;
constexpr double kLoGainMargin = 8.126706159444602;
constexpr double kGainCrossover = 8809.935539447097;
constexpr double kOpaPhaseMargin = 106.90839670414758;
constexpr double kLoPhaseMargin = 106.51375223983732;
constexpr double kOpaTheta2PerUnitAmplitude = 0.00013261618815172782;
constexpr double kLoTheta2PerUnitAmplitude = 0.00013373904976510186;

}  // namespace

TEST(TransferFunction, LowPassAtCorner) {
    const auto h = evaluate(TransferFunction::low_pass(1e6), 1e6);
    EXPECT_NEAR(20 * std::log10(std::abs(h)), -3.010299956639812, 1e-12);
    EXPECT_NEAR(std::arg(h), -kPi / 4, 1e-14);
}

TEST(TransferFunction, IntegratorAndDelay) {
    const auto i = evaluate(TransferFunction::integrator(2.0), 1.0 / (2 * kPi));
    EXPECT_NEAR(i.real(), 0.0, 1e-15);
    EXPECT_NEAR(i.imag(), -2.0, 1e-14);
    const auto d = evaluate(TransferFunction::delay(1e-7), 1e6);
    EXPECT_NEAR(std::abs(d), 1.0, 1e-15);
    EXPECT_NEAR(std::arg(d), -2 * kPi * 0.1, 1e-14);
}

TEST(TransferFunction, PoleOnAxisIsSingular) {
    // 1 / (s^2 + w0^2) has poles at +-i w0.
    const double w0 = 2 * kPi * 1e3;
    const TransferFunction tf{{1.0}, {w0 * w0, 0.0, 1.0}, 0.0, 1.0};
    EXPECT_THROW(evaluate(tf, 1e3), SingularityError);
    EXPECT_NO_THROW(evaluate(tf, 1.1e3));
}

TEST(TransferFunction, Validation) {
    EXPECT_THROW(evaluate(TransferFunction::low_pass(1e3), 0.0), DomainError);
    EXPECT_THROW(TransferFunction::low_pass(-1.0), DomainError);
    EXPECT_THROW((TransferFunction{{1.0}, {}, 0.0, 1.0}.validate()), DomainError);
    EXPECT_THROW((TransferFunction{{1.0}, {1.0}, -1e-9, 1.0}.validate()), DomainError);
}

TEST(Bode, ProductHomomorphism) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto grid = log_grid(10.0, 1e8, 50);
    for (int trial = 0; trial < 50; ++trial) {
        const auto a = TransferFunction::low_pass(std::pow(10.0, 2 + 5 * u(rng))) *
                       TransferFunction::constant(0.1 + 10 * u(rng));
        const auto b = TransferFunction::integrator(1e3 * u(rng) + 1.0) *
                       TransferFunction::delay(1e-8 * u(rng));
        const auto ba = bode(a, grid);
        const auto bb = bode(b, grid);
        const auto bab = bode(a * b, grid);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            ASSERT_NEAR(bab[i].gain_db, ba[i].gain_db + bb[i].gain_db, 1e-9);
            ASSERT_NEAR(bab[i].phase_deg, ba[i].phase_deg + bb[i].phase_deg, 1e-9);
        }
    }
}

TEST(Bode, PhaseIsUnwrapped) {
    const auto grid = log_grid(1e3, 1e8, 100);
    const auto b = bode(TransferFunction::delay(1e-7), grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        ASSERT_NEAR(b[i].phase_deg, -360.0 * grid[i] * 1e-7, 1e-8);
    }
}

TEST(LogGrid, EndpointsAndDensity) {
    const auto g = log_grid(1e3, 1e5, 10);
    ASSERT_EQ(g.size(), 21u);
    EXPECT_DOUBLE_EQ(g.front(), 1e3);
    EXPECT_DOUBLE_EQ(g.back(), 1e5);
    EXPECT_NEAR(g[10], 1e4, 1e-9);
    EXPECT_THROW(log_grid(1e5, 1e3, 10), DomainError);
}

TEST(Pid, TransferFunction) {
    const PidController pi{0.4, 0.4 * 2 * kPi * 20e3, 0.0, 1e6};
    const auto c = evaluate(pi.transfer_function(), 20e3);
    EXPECT_NEAR(c.real(), 0.4, 1e-14);
    EXPECT_NEAR(c.imag(), -0.4, 1e-14);
    EXPECT_THROW((PidController{0.0, 0.0, 0.0, 1e6}.validate()), DomainError);
    EXPECT_THROW((PidController{0.4, 0.0, 1e-9, 0.0}.validate()), DomainError);
}

TEST(Calibration, DelayPlacesCrossover) {
    EXPECT_NEAR(calibrated_delay(4e6, 10e6), kOpaDelay, 1e-20);
    EXPECT_NEAR(calibrated_delay(2e6, 10e6), kLoDelay, 1e-20);
    EXPECT_NEAR(default_opa_probe_loop().loop_delay, kOpaDelay, 1e-20);
    EXPECT_NEAR(default_probe_lo_loop().loop_delay, kLoDelay, 1e-20);
}

TEST(Calibration, SystemResponseCrossovers) {
    for (auto [loop, target] : {std::pair{default_opa_probe_loop(), 4e6},
                                std::pair{default_probe_lo_loop(), 2e6}}) {
        const auto x = phase_crossover([&](double f) { return loop.system_response(f); });
        ASSERT_TRUE(x.has_value());
        EXPECT_NEAR(*x / target, 1.0, 1e-9);
    }
}

TEST(Margins, DefaultLoopsMatchReference) {
    const auto m = stability_margins(default_opa_probe_loop());
    ASSERT_TRUE(m.stable());
    EXPECT_NEAR(*m.phase_crossover_hz / kOpaPhaseCrossover, 1.0, 1e-8);
    EXPECT_NEAR(*m.gain_margin_db, kOpaGainMargin, 1e-6);
    EXPECT_NEAR(*m.gain_crossover_hz / kGainCrossover, 1.0, 1e-8);
    EXPECT_NEAR(*m.phase_margin_deg, kOpaPhaseMargin, 1e-6);

    const auto l = stability_margins(default_probe_lo_loop());
    ASSERT_TRUE(l.stable());
    EXPECT_NEAR(*l.phase_crossover_hz / kLoPhaseCrossover, 1.0, 1e-8);
    EXPECT_NEAR(*l.gain_margin_db, kLoGainMargin, 1e-6);
    EXPECT_NEAR(*l.phase_margin_deg, kLoPhaseMargin, 1e-6);
}

TEST(Margins, HighGainLoopIsUnstable) {
    const auto loop = default_opa_probe_loop().scaled(4.0);
    const auto m = stability_margins(loop);
    EXPECT_FALSE(m.stable());
    ASSERT_TRUE(m.gain_margin_db.has_value());
    EXPECT_NEAR(*m.gain_margin_db, kOpaGainMargin - 20 * std::log10(4.0), 1e-6);
    EXPECT_THROW(residual_jitter(PhaseNoiseSpectrum{}, loop), InstabilityError);
}

TEST(Margins, NoCrossoverInRange) {
    // A pure low-pass never reaches -180 degrees.
    const auto x = phase_crossover([](double f) { return evaluate(TransferFunction::low_pass(1e4), f); });
    EXPECT_FALSE(x.has_value());
}

TEST(Shift, DemodulationMapping) {
    EXPECT_DOUBLE_EQ(demod_frequency(1e6, LoopKind::opa_probe), 2e6);
    EXPECT_DOUBLE_EQ(demod_frequency(1e6, LoopKind::probe_lo), 1e6);
    EXPECT_THROW(demod_frequency(0.0, LoopKind::probe_lo), DomainError);
}

TEST(Shift, SelectsOneMegahertz) {
    const std::vector<LoopModel> loops{default_opa_probe_loop(), default_probe_lo_loop()};
    const std::vector<double> candidates{0.25e6, 0.5e6, 1e6, 2e6, 4e6};
    EXPECT_DOUBLE_EQ(select_shift_frequency(loops, candidates), 1e6);
    // 2 MHz would put the OPA-loop demodulation on its own crossover.
    EXPECT_FALSE(assess_shift(loops[0], 2e6, {}).feasible);
    EXPECT_TRUE(assess_shift(loops[1], 1e6, {}).feasible);
}

TEST(Shift, StricterMarginsLowerTheChoice) {
    const std::vector<LoopModel> loops{default_opa_probe_loop(), default_probe_lo_loop()};
    const std::vector<double> candidates{0.25e6, 0.5e6, 1e6, 2e6, 4e6};
    ShiftCriteria c;
    c.min_phase_margin_deg = 100.0;
    EXPECT_DOUBLE_EQ(select_shift_frequency(loops, candidates, c), 0.5e6);
}

TEST(Shift, InfeasibleWhenNothingQualifies) {
    const std::vector<LoopModel> loops{default_opa_probe_loop(), default_probe_lo_loop()};
    EXPECT_THROW(select_shift_frequency(loops, std::vector<double>{4e6, 8e6}), InfeasibleError);
    EXPECT_THROW(select_shift_frequency(loops, std::vector<double>{}), InfeasibleError);
}

TEST(PhaseNoise, WhiteFreeRunningJitter) {
    PhaseNoiseSpectrum s;
    s.kind = SpectrumKind::white;
    s.amplitude = 1e-12;
    s.f_min = 10.0;
    s.f_max = 1e6;
    EXPECT_NEAR(free_running_jitter(s).radians(), std::sqrt(1e-12 * (1e6 - 10.0)), 1e-12);
}

TEST(PhaseNoise, InverseSquareFreeRunning) {
    PhaseNoiseSpectrum s;  // 1/f^2 from 10 Hz to 20 MHz
    EXPECT_NEAR(free_running_jitter(s).radians(), std::sqrt(0.1 - 1.0 / 20e6), 1e-9);
}

TEST(PhaseNoise, TableInterpolatesLogLog) {
    PhaseNoiseSpectrum s;
    s.kind = SpectrumKind::table;
    s.table = {{100.0, 1e-6}, {1e4, 1e-10}};
    s.f_min = 10.0;
    s.f_max = 1e5;
    EXPECT_NEAR(s.density(1e3) / 1e-8, 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(s.density(50.0), 0.0);
    // Same slope as 1/f^2 with A = 1e-2 between 100 Hz and 10 kHz.
    EXPECT_NEAR(free_running_jitter(s).radians(), std::sqrt(1e-2 * (1.0 / 100 - 1.0 / 1e4)), 1e-9);
}

TEST(PhaseNoise, ResidualJitterMatchesReference) {
    PhaseNoiseSpectrum s;
    EXPECT_NEAR(std::pow(residual_jitter(s, default_opa_probe_loop()).radians(), 2) /
                    kOpaTheta2PerUnitAmplitude, 1.0, 1e-7);
    EXPECT_NEAR(std::pow(residual_jitter(s, default_probe_lo_loop()).radians(), 2) /
                    kLoTheta2PerUnitAmplitude, 1.0, 1e-7);
}

TEST(PhaseNoise, CalibrationHitsTarget) {
    const auto loop = default_opa_probe_loop();
    const auto target = PhaseJitter::from_degrees(0.8);
    const auto s = calibrate_noise_amplitude(PhaseNoiseSpectrum{}, loop, target);
    EXPECT_NEAR(residual_jitter(s, loop).radians() / target.radians(), 1.0, 1e-12);
    EXPECT_NEAR(s.amplitude, std::pow(target.radians(), 2) / kOpaTheta2PerUnitAmplitude, 1e-6);
}

TEST(PhaseNoise, LoopSuppressesNoise) {
    PhaseNoiseSpectrum s;
    EXPECT_LT(residual_jitter(s, default_opa_probe_loop()).radians(),
              0.1 * free_running_jitter(s).radians());
}

TEST(PhaseNoise, Validation) {
    PhaseNoiseSpectrum s;
    s.f_max = 1.0;
    EXPECT_THROW(s.validate(), DomainError);
    PhaseNoiseSpectrum t;
    t.kind = SpectrumKind::table;
    EXPECT_THROW(t.validate(), DomainError);
}
