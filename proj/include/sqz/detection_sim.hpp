#pragma once

// Balanced-homodyne detector and electrical spectrum analyzer emulation.

#include <cstdint>
#include <string>
#include <vector>

#include "sqz/noise_core.hpp"

namespace sqz {

/// Noise levels at the analyzer input, all in dBm for the analyzer's RBW.
///
/// Circuit noise is a flat floor with a low-frequency excess and a high-frequency
/// rise, each a power law past its corner:
///   circuit(f) = floor * (1 + (lf_corner/f)^(lf_slope/10) + (f/hf_corner)^(hf_slope/10))
/// Shot noise is flat (the OPA bandwidth is far beyond the analyzer range).
/// Defaults equal calibrate_detector(-65, 25, 11e6).
struct DetectorModel {
    double shot_noise_dbm = -65.0;
    double circuit_floor_dbm = -91.03423594470505;
    double lf_corner_hz = 4033333.333333333;
    double lf_slope_db_per_decade = 20.0;
    double hf_corner_hz = 30e6;
    double hf_slope_db_per_decade = 20.0;
    double analyzer_floor_dbm = -101.03423594470505;
    double visibility = 0.985;
    double pd_quantum_efficiency = 0.98;

    void validate() const;

    double circuit_noise_dbm(double f) const;
    double clearance_db(double f) const { return shot_noise_dbm - circuit_noise_dbm(f); }
    /// Circuit-noise power relative to shot noise (linear).
    double circuit_ratio(double f) const;

    friend bool operator==(const DetectorModel&, const DetectorModel&) = default;
};

/// Detector whose clearance peaks at `design_hz` with `clearance_db` there. The
/// low-frequency corner is solved so that the clearance maximum sits at design_hz;
/// the analyzer floor is placed `floor_offset_db` below the circuit-noise floor.
DetectorModel calibrate_detector(double shot_noise_dbm, double clearance_db, double design_hz,
                                 double hf_corner_hz = 30e6, double lf_slope_db_per_decade = 20.0,
                                 double hf_slope_db_per_decade = 20.0,
                                 double floor_offset_db = 10.0);

struct AnalyzerSettings {
    double center_frequency_hz = 11e6;
    double span_hz = 0.0;
    double rbw_hz = 1e6;
    double vbw_hz = 1e3;
    double sweep_time_s = 0.1;
    int points = 500;
    std::uint64_t seed = 1;

    void validate() const;
    /// Independent power samples averaged into one displayed point: max(1, round(rbw/vbw)).
    int averages() const;

    friend bool operator==(const AnalyzerSettings&, const AnalyzerSettings&) = default;
};

enum class LockMode { locked, scanned };

struct Scenario {
    OpaParams opa;  // transmittance = 1 - waveguide-internal loss
    PhaseJitter jitter;
    JitterModel jitter_model = JitterModel::fixed_angle;
    LossBudget detection_budget;
    LossComposition composition = LossComposition::multiplicative;
    DetectorModel detector;
    AnalyzerSettings analyzer;
    LockMode lock_mode = LockMode::locked;
    /// LO phase ramp rate in turns per second, for scanned mode.
    double scan_rate_hz = 5.0;
    /// LO angle from the squeezed quadrature at t = 0, radians.
    double scan_start_rad = -1.5707963267948966;
    /// Fold circuit noise into the transmittance as an equivalent loss instead of
    /// adding it as electrical power.
    bool fold_circuit_noise = false;

    void validate() const;

    /// Waveguide-internal transmittance times the detection chain.
    double total_transmittance() const;
    /// Optical quadratures at the detector after loss and jitter (no circuit noise).
    QuadraturePair optical_variances() const;

    friend bool operator==(const Scenario&, const Scenario&) = default;
};

/// Paper-calibrated defaults: 660 mW pump, 820 %/W, 4 % waveguide loss, 8 % detection
/// loss, 0.8 degree jitter, 25 dB clearance at 11 MHz, 1 MHz RBW, 1 kHz VBW.
Scenario default_scenario();

/// SHA-256 over a canonical rendering of every field, first 16 hex digits.
std::string scenario_digest(const Scenario& s);

struct MeasuredNoise {
    NoiseRatio locked;       // squeezed quadrature, relative to pure shot noise
    NoiseRatio anti_locked;  // anti-squeezed quadrature
};

MeasuredNoise measured_noise_ratio(const Scenario& s, double f);

enum class TraceAxis { time_s, frequency_hz };

struct Trace {
    TraceAxis axis = TraceAxis::time_s;
    std::vector<double> axis_values;
    std::vector<double> values_dbm;
    std::string digest;
    std::uint64_t seed = 0;
    std::string label;

    double mean_dbm() const;
};

/// Zero-span trace of the squeezed signal (locked or LO-scanned per s.lock_mode).
Trace simulate_zero_span(const Scenario& s);
/// Zero-span trace with the OPA output blocked: shot plus circuit noise.
Trace simulate_shot_reference(const Scenario& s);

/// Linear LO angle at each time sample of a scanned trace.
std::vector<double> scan_angles(const Scenario& s);

struct ScanEnvelope {
    double anti_db;  // relative to shot noise, from the model fit
    double sq_db;
    double raw_max_db;
    double raw_min_db;
};

/// Envelope of a scanned trace from a least-squares fit of
/// 10 log10(A sin^2 phi + B cos^2 phi) over the known scan angles.
ScanEnvelope scan_envelope(const Trace& scanned, const Scenario& s);

struct FrequencySweep {
    Trace squeezed;
    Trace shot;
    Trace circuit;
    Trace floor;
};

/// Model noise levels on a linear grid of `points` frequencies (noise-free).
FrequencySweep sweep_frequency(const Scenario& s, double f_min, double f_max, int points);

/// Frequency of maximum shot-to-circuit clearance; ties go to the lower frequency.
double select_measurement_frequency(const FrequencySweep& sweep);

}  // namespace sqz
