#pragma once

// Inverse problems on the squeezing model: fitting pump sweeps, choosing the pump
// power, and referring measured levels back through the detection loss.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sqz/detection_sim.hpp"
#include "sqz/error.hpp"
#include "sqz/noise_core.hpp"

namespace sqz {

struct PumpSweepPoint {
    double pump_power;         // W
    double squeezing_db;       // negative below shot noise
    double anti_squeezing_db;
};

struct ModelParams {
    double transmittance;
    double shg_efficiency;  // 1/W
    double jitter_rad;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Predicted (squeezing, anti-squeezing) in dB at one pump power.
std::pair<double, double> predict_levels_db(const ModelParams& p, double pump_power);

/// Noise-free model data at the given pump powers.
std::vector<PumpSweepPoint> synthesize_pump_sweep(const ModelParams& p,
                                                  std::span<const double> powers);

struct FitBounds {
    ModelParams lower{0.5, 1.0, 0.0};
    ModelParams upper{1.0, 20.0, 0.087266462599716474};  // 5 degrees

    void validate() const;

    friend bool operator==(const FitBounds&, const FitBounds&) = default;
};

struct FitOptions {
    int max_iterations = 200;
    double step_tolerance = 1e-9;
    /// Restart from a fixed set of starts when the projected gradient stays large.
    bool multi_start = true;
    double gradient_tolerance = 1e-6;
};

struct FitResult {
    ModelParams params;
    /// Sum of squared dB residuals over both branches.
    double residual = 0.0;
    /// Parameter covariance in (transmittance, shg_efficiency, jitter_rad) order.
    /// NaN entries when the Jacobian is rank deficient (e.g. jitter pinned at 0).
    std::array<std::array<double, 3>, 3> covariance{};
    int iterations = 0;
    double gradient_norm = 0.0;
    bool converged = false;
    std::string message;
};

/// Joint least squares of both branches in dB, Levenberg-Marquardt with an analytic
/// Jacobian and box bounds. Without `initial`, starts from a jitter-free pre-fit.
/// Throws DomainError for fewer than 3 points or fewer than 2 distinct pump powers.
/// A fit that hits max_iterations returns its best iterate with converged = false.
FitResult fit_pump_sweep(std::span<const PumpSweepPoint> data,
                         std::optional<ModelParams> initial = std::nullopt,
                         const FitBounds& bounds = {}, const FitOptions& options = {});

/// Residual vector (model - data, dB) and its Jacobian with respect to
/// (transmittance, shg_efficiency, jitter_rad). Exposed for derivative checks.
struct ResidualJacobian {
    std::vector<double> residuals;
    std::vector<std::array<double, 3>> jacobian;
};
ResidualJacobian fit_residuals(std::span<const PumpSweepPoint> data, const ModelParams& p);

struct OperatingPoint {
    double pump_power;
    double squeezing_db;
    double anti_squeezing_db;
    /// Squeezing with the detection loss inverted.
    double source_squeezing_db;
};

/// Signals that squeezing keeps improving with pump power (no jitter).
class UnboundedOptimumError : public InfeasibleError {
public:
    using InfeasibleError::InfeasibleError;
};

/// Pump power minimizing the jitter-mixed squeezed variance:
/// P* = (ln cot theta)^2 / (4 alpha), independent of transmittance.
OperatingPoint optimal_pump_power(double transmittance, double shg_efficiency, PhaseJitter jitter,
                                  double detection_transmittance = 1.0);

/// Forward-model levels at an arbitrary pump power.
OperatingPoint operating_point(double transmittance, double shg_efficiency, PhaseJitter jitter,
                               double pump_power, double detection_transmittance = 1.0);

/// Brute-force minimizer of the forward model on a `step` grid over (0, p_max],
/// refined by golden-section search around the best grid point.
double grid_search_optimum(double transmittance, double shg_efficiency, PhaseJitter jitter,
                           double p_max, double step);

/// Refers measured variances back to the OPA output through the detection chain.
QuadraturePair source_squeezing_estimate(const QuadraturePair& measured,
                                         double detection_transmittance);

struct LossBudgetRow {
    std::string label;
    double loss;
    double cumulative_transmittance;
};

struct LossBudgetReport {
    std::vector<LossBudgetRow> rows;
    std::optional<double> circuit_equivalent_loss;
    double multiplicative_transmittance = 1.0;
    double additive_loss = 0.0;
    /// additive_loss - (1 - multiplicative_transmittance), percentage points.
    double discrepancy_pp = 0.0;
    std::vector<std::string> warnings;
};

/// Differences above this (percentage points) raise a warning in the report.
inline constexpr double kLossDiscrepancyWarnPp = 0.1;

LossBudgetReport loss_budget_report(const LossBudget& budget);
/// Same with the detector's circuit noise at `f` appended as an equivalent loss.
LossBudgetReport loss_budget_report(const LossBudget& budget, const DetectorModel& detector,
                                    double f);

}  // namespace sqz
