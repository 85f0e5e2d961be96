#pragma once

// Closed-form quadrature-noise model of a single-pass OPA followed by loss and
// phase jitter. All variances are linear power ratios normalized to shot noise.

#include <string>
#include <vector>

namespace sqz {

/// Linear power ratio relative to shot noise (shot noise = 1).
class NoiseRatio {
public:
    explicit NoiseRatio(double value);
    double value() const noexcept { return value_; }

    friend bool operator==(NoiseRatio, NoiseRatio) = default;

private:
    double value_;
};

class Decibel {
public:
    explicit Decibel(double value);
    double value() const noexcept { return value_; }

    friend bool operator==(Decibel, Decibel) = default;

private:
    double value_;
};

Decibel to_db(NoiseRatio r);
NoiseRatio from_db(Decibel d);

/// OPA operating point. shg_efficiency in 1/W (820 %/W is 8.2), pump in W,
/// transmittance is the effective transmittance of the squeezed light.
struct OpaParams {
    double shg_efficiency = 0.0;
    double pump_power = 0.0;
    double transmittance = 1.0;

    /// Throws DomainError when any field leaves its physical range.
    void validate() const;

    friend bool operator==(const OpaParams&, const OpaParams&) = default;
};

/// Convert an SHG efficiency quoted in %/W to the canonical 1/W.
constexpr double percent_per_watt(double value) { return value / 100.0; }

struct QuadraturePair {
    NoiseRatio anti;
    NoiseRatio sq;

    friend bool operator==(const QuadraturePair&, const QuadraturePair&) = default;
};

/// RMS relative phase between LO and the squeezed quadrature, in [0, pi/2].
class PhaseJitter {
public:
    PhaseJitter() = default;
    static PhaseJitter from_radians(double theta);
    static PhaseJitter from_degrees(double theta_deg);

    double radians() const noexcept { return theta_; }
    double degrees() const noexcept;

    friend bool operator==(PhaseJitter, PhaseJitter) = default;

private:
    explicit PhaseJitter(double theta) : theta_(theta) {}
    double theta_ = 0.0;
};

enum class JitterModel {
    /// R' = R cos^2(theta) + R_conj sin^2(theta) evaluated at the rms angle.
    fixed_angle,
    /// Same mixing with cos^2/sin^2 averaged over a zero-mean Gaussian of that rms.
    gaussian,
};

QuadraturePair opa_output_variances(const OpaParams& p);

/// Mixes the conjugate quadrature into each branch. Preserves anti + sq.
QuadraturePair jitter_mix(const QuadraturePair& q, PhaseJitter j,
                          JitterModel model = JitterModel::fixed_angle);

/// Variance seen by a homodyne detector whose LO sits `lo_angle` radians away from
/// the squeezed quadrature.
double quadrature_at_angle(const QuadraturePair& q, double lo_angle);

struct LossElement {
    std::string label;
    double loss = 0.0;

    friend bool operator==(const LossElement&, const LossElement&) = default;
};

struct LossBudget {
    std::vector<LossElement> elements;

    void validate() const;

    friend bool operator==(const LossBudget&, const LossBudget&) = default;
};

enum class LossComposition {
    multiplicative,
    /// 1 - sum(loss), clamped at 0. Only for comparison with hand-summed budgets.
    additive,
};

double cascade_losses(const LossBudget& b,
                      LossComposition mode = LossComposition::multiplicative);

/// R -> (1 - eta) + eta R on a single variance.
NoiseRatio apply_loss(NoiseRatio r, double transmittance);
QuadraturePair apply_loss(const QuadraturePair& q, double transmittance);

/// Exact left inverse of apply_loss. Throws InfeasibleError when the measured
/// variance lies at or below the vacuum floor 1 - eta admitted by that loss.
NoiseRatio invert_loss(NoiseRatio measured, double transmittance);
QuadraturePair invert_loss(const QuadraturePair& measured, double transmittance);

/// Mode-mismatch loss 1 - V^2 of a fringe visibility V.
double visibility_to_loss(double visibility);

/// Optical loss equivalent to circuit noise sitting `clearance` dB below shot noise.
/// Values above 1 (circuit noise above shot) are returned as is.
double clearance_to_equiv_loss(Decibel clearance);

}  // namespace sqz
