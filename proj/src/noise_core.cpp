#include "sqz/noise_core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "sqz/error.hpp"

namespace sqz {

namespace {

void require_fraction(double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0)) {
        throw DomainError(fmt::format("{} must lie in [0, 1], got {}", what, v));
    }
}

}  // namespace

NoiseRatio::NoiseRatio(double value) : value_(value) {
    if (!std::isfinite(value) || value <= 0.0) {
        throw DomainError(fmt::format("noise ratio must be finite and > 0, got {}", value));
    }
}

Decibel::Decibel(double value) : value_(value) {
    if (!std::isfinite(value)) {
        throw DomainError("decibel value must be finite");
    }
}

Decibel to_db(NoiseRatio r) { return Decibel(10.0 * std::log10(r.value())); }

NoiseRatio from_db(Decibel d) { return NoiseRatio(std::pow(10.0, d.value() / 10.0)); }

void OpaParams::validate() const {
    if (!(std::isfinite(shg_efficiency) && shg_efficiency >= 0.0)) {
        throw DomainError(fmt::format("shg_efficiency must be >= 0, got {}", shg_efficiency));
    }
    if (!(std::isfinite(pump_power) && pump_power >= 0.0)) {
        throw DomainError(fmt::format("pump_power must be >= 0, got {}", pump_power));
    }
    require_fraction(transmittance, "transmittance");
}

PhaseJitter PhaseJitter::from_radians(double theta) {
    if (!(theta >= 0.0 && theta <= std::numbers::pi / 2)) {
        throw DomainError(fmt::format("phase jitter must lie in [0, pi/2] rad, got {}", theta));
    }
    return PhaseJitter(theta);
}

PhaseJitter PhaseJitter::from_degrees(double theta_deg) {
    return from_radians(theta_deg * std::numbers::pi / 180.0);
}

double PhaseJitter::degrees() const noexcept { return theta_ * 180.0 / std::numbers::pi; }

QuadraturePair opa_output_variances(const OpaParams& p) {
    p.validate();
    const double gain = 2.0 * std::sqrt(p.shg_efficiency * p.pump_power);
    const double eta = p.transmittance;
    return {NoiseRatio((1.0 - eta) + eta * std::exp(gain)),
            NoiseRatio((1.0 - eta) + eta * std::exp(-gain))};
}

QuadraturePair jitter_mix(const QuadraturePair& q, PhaseJitter j, JitterModel model) {
    double c2 = 0.0;
    double s2 = 0.0;
    if (model == JitterModel::fixed_angle) {
        const double c = std::cos(j.radians());
        const double s = std::sin(j.radians());
        c2 = c * c;
        s2 = s * s;
    } else {
        const double sigma = j.radians();
        const double e = std::exp(-2.0 * sigma * sigma);
        c2 = 0.5 * (1.0 + e);
        s2 = 0.5 * (1.0 - e);
    }
    const double a = q.anti.value();
    const double b = q.sq.value();
    return {NoiseRatio(a * c2 + b * s2), NoiseRatio(b * c2 + a * s2)};
}

double quadrature_at_angle(const QuadraturePair& q, double lo_angle) {
    const double c = std::cos(lo_angle);
    const double s = std::sin(lo_angle);
    return q.sq.value() * c * c + q.anti.value() * s * s;
}

void LossBudget::validate() const {
    for (const auto& e : elements) {
        if (!(e.loss >= 0.0 && e.loss <= 1.0)) {
            throw DomainError(
                fmt::format("loss element '{}' must lie in [0, 1], got {}", e.label, e.loss));
        }
    }
}

double cascade_losses(const LossBudget& b, LossComposition mode) {
    b.validate();
    if (mode == LossComposition::additive) {
        double total = 0.0;
        for (const auto& e : b.elements) total += e.loss;
        return std::max(0.0, 1.0 - total);
    }
    double t = 1.0;
    for (const auto& e : b.elements) t *= 1.0 - e.loss;
    return t;
}

NoiseRatio apply_loss(NoiseRatio r, double transmittance) {
    require_fraction(transmittance, "transmittance");
    return NoiseRatio((1.0 - transmittance) + transmittance * r.value());
}

QuadraturePair apply_loss(const QuadraturePair& q, double transmittance) {
    return {apply_loss(q.anti, transmittance), apply_loss(q.sq, transmittance)};
}

NoiseRatio invert_loss(NoiseRatio measured, double transmittance) {
    if (!(transmittance > 0.0 && transmittance <= 1.0)) {
        throw DomainError(
            fmt::format("transmittance for loss inversion must lie in (0, 1], got {}",
                        transmittance));
    }
    const double floor = 1.0 - transmittance;
    const double source = (measured.value() - floor) / transmittance;
    if (!(source > 0.0)) {
        throw InfeasibleError(fmt::format(
            "measured variance {} is not above the vacuum floor {} implied by transmittance {}",
            measured.value(), floor, transmittance));
    }
    return NoiseRatio(source);
}

QuadraturePair invert_loss(const QuadraturePair& measured, double transmittance) {
    return {invert_loss(measured.anti, transmittance), invert_loss(measured.sq, transmittance)};
}

double visibility_to_loss(double visibility) {
    require_fraction(visibility, "visibility");
    return 1.0 - visibility * visibility;
}

double clearance_to_equiv_loss(Decibel clearance) {
    return std::pow(10.0, -clearance.value() / 10.0);
}

}  // namespace sqz
