#pragma once

// Linear models of the two phase locks: the OPA-probe lock (error signal from
// the tap photodiode) and the probe-LO lock (error signal from the homodyne
// detector). Each loop has a fast EOM path and a slow fiber-stretcher path.

#include <complex>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sqz/noise_core.hpp"

namespace sqz {

using Complex = std::complex<double>;

/// gain * num(s)/den(s) * exp(-s delay). Coefficients in ascending powers of s.
struct TransferFunction {
    std::vector<double> numerator{1.0};
    std::vector<double> denominator{1.0};
    double pure_delay = 0.0;
    double gain = 1.0;

    void validate() const;

    static TransferFunction constant(double k);
    static TransferFunction integrator(double k = 1.0);
    static TransferFunction delay(double seconds);
    /// Unity-DC first-order low-pass with the given -3 dB corner.
    static TransferFunction low_pass(double corner_hz);

    friend TransferFunction operator*(const TransferFunction& a, const TransferFunction& b);

    friend bool operator==(const TransferFunction&, const TransferFunction&) = default;
};

/// Response at s = i 2 pi f. Throws SingularityError at a pole, DomainError for f <= 0.
Complex evaluate(const TransferFunction& tf, double frequency_hz);

struct PidController {
    double kp = 0.0;
    double ki = 0.0;  // 1/s
    double kd = 0.0;  // s
    double derivative_corner_hz = 1e6;

    void validate() const;
    TransferFunction transfer_function() const;

    friend bool operator==(const PidController&, const PidController&) = default;
};

enum class LoopKind {
    /// Probe vs. squeezed light, locked on the tap photodiode.
    opa_probe,
    /// Probe vs. LO, locked on the homodyne signal.
    probe_lo,
};

const char* loop_kind_name(LoopKind k);

struct LoopModel {
    LoopKind kind = LoopKind::opa_probe;
    PidController controller;
    TransferFunction fast_plant;  // EOM path
    TransferFunction slow_plant;  // fiber-stretcher path, includes the second PID
    double loop_delay = 0.0;

    void validate() const;

    /// L(f) = C(f) (fast(f) + slow(f)) exp(-i 2 pi f delay).
    Complex open_loop(double frequency_hz) const;
    /// What a network analyzer sees in place of the fast PID: fast(f) exp(-i 2 pi f delay).
    Complex system_response(double frequency_hz) const;
    /// Same loop with the controller gains scaled by k.
    LoopModel scaled(double k) const;
};

struct BodePoint {
    double frequency_hz;
    double gain_db;
    double phase_deg;  // unwrapped
};

using FrequencyResponse = std::function<Complex(double)>;

/// Bode data with phase unwrapped along the (ascending) grid.
std::vector<BodePoint> bode(const FrequencyResponse& response, std::span<const double> frequencies);
std::vector<BodePoint> bode(const TransferFunction& tf, std::span<const double> frequencies);
/// Measured-style Bode spectrum of the loop (system_response).
std::vector<BodePoint> bode(const LoopModel& loop, std::span<const double> frequencies);

/// `per_decade` log-spaced points spanning [f_min, f_max], both ends included.
std::vector<double> log_grid(double f_min, double f_max, int per_decade);

struct GridSettings {
    double f_min = 1e3;
    double f_max = 20e6;
    int per_decade = 200;

    std::vector<double> frequencies() const { return log_grid(f_min, f_max, per_decade); }

    friend bool operator==(const GridSettings&, const GridSettings&) = default;
};

/// Lowest frequency at which the unwrapped phase reaches -180 degrees, bisection-refined.
std::optional<double> phase_crossover(const FrequencyResponse& response,
                                      const GridSettings& grid = {});

struct StabilityMargins {
    std::optional<double> phase_crossover_hz;
    std::optional<double> gain_margin_db;
    std::optional<double> gain_crossover_hz;
    std::optional<double> phase_margin_deg;

    /// Positive margins wherever the corresponding crossover exists.
    bool stable() const;
};

StabilityMargins stability_margins(const FrequencyResponse& open_loop, const GridSettings& grid = {});
StabilityMargins stability_margins(const LoopModel& loop, const GridSettings& grid = {});

/// Beat frequency used as the demodulation reference of a loop. Difference-frequency
/// generation in the OPA doubles the probe-squeezing beat.
double demod_frequency(double shift_hz, LoopKind kind);

struct ShiftCriteria {
    double min_gain_margin_db = 3.0;
    double min_phase_margin_deg = 45.0;
    double flat_band_db = 3.0;
    double flat_reference_hz = 10e3;
    GridSettings grid;

    friend bool operator==(const ShiftCriteria&, const ShiftCriteria&) = default;
};

struct ShiftAssessment {
    double demod_hz;
    double gain_deviation_db;
    double phase_headroom_deg;
    double gain_headroom_db;
    bool feasible;
};

/// Per-loop figures behind select_shift_frequency for one candidate.
ShiftAssessment assess_shift(const LoopModel& loop, double shift_hz, const ShiftCriteria& c);

/// Largest candidate whose demodulation frequency is usable on every loop.
/// Throws InfeasibleError when no candidate qualifies (or the list is empty).
double select_shift_frequency(std::span<const LoopModel> loops, std::span<const double> candidates,
                              const ShiftCriteria& c = {});

enum class SpectrumKind { white, inverse_square, table };

/// One-sided phase-noise PSD S(f) in rad^2/Hz.
struct PhaseNoiseSpectrum {
    SpectrumKind kind = SpectrumKind::inverse_square;
    /// white: S = A. inverse_square: S = A / f^2 (A is the density at 1 Hz).
    double amplitude = 1.0;
    /// table: (frequency Hz, density) pairs, log-log interpolated, zero outside.
    std::vector<std::pair<double, double>> table;
    double f_min = 10.0;
    double f_max = 20e6;

    void validate() const;
    double density(double frequency_hz) const;

    friend bool operator==(const PhaseNoiseSpectrum&, const PhaseNoiseSpectrum&) = default;
};

/// rms phase with no loop correction, integrated over the spectrum range.
PhaseJitter free_running_jitter(const PhaseNoiseSpectrum& noise);

/// sqrt(integral S(f) |1/(1+L)|^2 df). Throws InstabilityError for unstable loops.
PhaseJitter residual_jitter(const PhaseNoiseSpectrum& noise, const LoopModel& loop,
                            const GridSettings& grid = {});

/// Rescales the spectrum amplitude so that residual_jitter hits `target`.
PhaseNoiseSpectrum calibrate_noise_amplitude(PhaseNoiseSpectrum noise, const LoopModel& loop,
                                             PhaseJitter target);

/// Delay that puts the -180 degree crossover of a first-order low-pass (corner_hz)
/// times a pure delay exactly at crossover_hz.
double calibrated_delay(double crossover_hz, double corner_hz);

/// Default loop models calibrated to the measured crossovers (about 4 MHz for the
/// OPA-probe lock, about 2 MHz for the probe-LO lock).
LoopModel default_opa_probe_loop();
LoopModel default_probe_lo_loop();

}  // namespace sqz
