#pragma once

// Declarative scenario files: INI-style sections of `key = <number> <unit>`.
// Omitted sections take the paper-calibrated defaults. Unknown sections or keys
// are rejected, and all violations are reported together.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sqz/detection_sim.hpp"
#include "sqz/estimate_opt.hpp"
#include "sqz/lock_loop.hpp"

namespace sqz {

/// Parameters of one lock as written in a scenario file.
struct LoopSpec {
    LoopKind kind = LoopKind::opa_probe;
    PidController controller;
    double fast_gain = 1.0;
    double fast_corner_hz = 10e6;
    double slow_gain = 10.0;
    double slow_corner_hz = 100.0;
    double delay_s = 0.0;

    LoopModel build() const;
    friend bool operator==(const LoopSpec&, const LoopSpec&) = default;
};

LoopSpec default_loop_spec(LoopKind kind);

struct SweepSpec {
    double f_min_hz = 1e6;
    double f_max_hz = 40e6;
    int points = 391;

    friend bool operator==(const SweepSpec&, const SweepSpec&) = default;
};

struct FitSpec {
    std::optional<std::filesystem::path> data;
    FitBounds bounds;
    std::optional<ModelParams> initial;

    friend bool operator==(const FitSpec&, const FitSpec&) = default;
};

struct OptimizeSpec {
    double grid_max_w = 2.0;
    double grid_step_w = 1e-4;

    friend bool operator==(const OptimizeSpec&, const OptimizeSpec&) = default;
};

struct NoiseSpec {
    PhaseNoiseSpectrum spectrum;
    /// When set, the amplitude is rescaled so the OPA-probe loop leaves this residual.
    std::optional<double> calibrate_to_rad;

    friend bool operator==(const NoiseSpec&, const NoiseSpec&) = default;
};

struct ScenarioFile {
    Scenario scenario = default_scenario();
    std::vector<LoopSpec> loops{default_loop_spec(LoopKind::opa_probe),
                                default_loop_spec(LoopKind::probe_lo)};
    std::vector<double> shift_candidates{0.25e6, 0.5e6, 1e6, 2e6, 4e6};
    ShiftCriteria shift;
    GridSettings bode_grid;
    NoiseSpec phase_noise;
    SweepSpec sweep;
    FitSpec fit;
    OptimizeSpec optimize;
    std::filesystem::path out_dir = "out";

    friend bool operator==(const ScenarioFile&, const ScenarioFile&) = default;
};

ScenarioFile default_scenario_file();

/// Parses scenario text. `base_dir` resolves relative paths (fit data). Throws
/// ParseError for syntax problems and DomainError listing every invalid field.
ScenarioFile parse_scenario(std::string_view text, const std::filesystem::path& base_dir = {});
ScenarioFile load_scenario(const std::filesystem::path& path);

/// Renders every field in canonical units; parse_scenario reproduces the same values.
std::string serialize_scenario(const ScenarioFile& f);

/// SHA-256 of the serialized scenario, first 16 hex digits.
std::string scenario_file_digest(const ScenarioFile& f);

/// CSV with header `pump_w,squeezing_db,antisqueezing_db`; `#` lines are comments.
std::vector<PumpSweepPoint> parse_pump_sweep_csv(std::string_view text);
std::vector<PumpSweepPoint> load_pump_sweep_csv(const std::filesystem::path& path);
std::string pump_sweep_csv(std::span<const PumpSweepPoint> points, std::string_view comment = {});

std::string trace_csv(const Trace& t);
std::string bode_csv(std::span<const BodePoint> points);

}  // namespace sqz
