#include "sqz/estimate_opt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "sqz/error.hpp"

namespace sqz {

namespace {

constexpr double kDbPerNeper = 10.0 / std::numbers::ln10;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Internal fit coordinates: jitter enters through s = sin^2(theta), so the
/// Jacobian column stays nonzero at theta = 0.
using Vec3 = Eigen::Vector3d;

Vec3 to_internal(const ModelParams& p) {
    const double s = std::sin(p.jitter_rad);
    return {p.transmittance, p.shg_efficiency, s * s};
}

ModelParams from_internal(const Vec3& x) {
    return {x[0], x[1], std::asin(std::sqrt(std::clamp(x[2], 0.0, 1.0)))};
}

struct Evaluation {
    Eigen::VectorXd r;
    Eigen::MatrixXd j;  // d r / d (eta, alpha, s)
    double cost;
};

Evaluation evaluate_internal(std::span<const PumpSweepPoint> data, const Vec3& x) {
    const auto n = static_cast<Eigen::Index>(data.size());
    Evaluation e{Eigen::VectorXd(2 * n), Eigen::MatrixXd(2 * n, 3), 0.0};
    const double eta = x[0];
    const double alpha = x[1];
    const double s = x[2];
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& d = data[static_cast<std::size_t>(i)];
        const double g = std::sqrt(alpha * d.pump_power);
        const double ep = std::exp(2.0 * g);
        const double em = std::exp(-2.0 * g);
        const double rp = 1.0 - eta + eta * ep;
        const double rm = 1.0 - eta + eta * em;
        const double dg = alpha > 0.0 ? std::sqrt(d.pump_power / alpha) : 0.0;  // 2 dg/dalpha
        const double drp_deta = ep - 1.0, drm_deta = em - 1.0;
        const double drp_dalpha = eta * ep * dg, drm_dalpha = -eta * em * dg;

        const double sq = rm * (1.0 - s) + rp * s;
        const double an = rp * (1.0 - s) + rm * s;
        e.r[2 * i] = kDbPerNeper * std::log(sq) - d.squeezing_db;
        e.r[2 * i + 1] = kDbPerNeper * std::log(an) - d.anti_squeezing_db;

        e.j(2 * i, 0) = kDbPerNeper * (drm_deta * (1.0 - s) + drp_deta * s) / sq;
        e.j(2 * i, 1) = kDbPerNeper * (drm_dalpha * (1.0 - s) + drp_dalpha * s) / sq;
        e.j(2 * i, 2) = kDbPerNeper * (rp - rm) / sq;
        e.j(2 * i + 1, 0) = kDbPerNeper * (drp_deta * (1.0 - s) + drm_deta * s) / an;
        e.j(2 * i + 1, 1) = kDbPerNeper * (drp_dalpha * (1.0 - s) + drm_dalpha * s) / an;
        e.j(2 * i + 1, 2) = kDbPerNeper * (rm - rp) / an;
    }
    e.cost = e.r.squaredNorm();
    return e;
}

struct Box {
    Vec3 lo;
    Vec3 hi;
    Vec3 clamp(const Vec3& x) const { return x.cwiseMax(lo).cwiseMin(hi); }
};

/// Gradient with components that push against an active bound removed.
double projected_gradient_norm(const Evaluation& e, const Vec3& x, const Box& box) {
    Vec3 g = e.j.transpose() * e.r;
    for (int k = 0; k < 3; ++k) {
        const double span = box.hi[k] - box.lo[k];
        const bool at_lo = x[k] <= box.lo[k] + 1e-12 * span;
        const bool at_hi = x[k] >= box.hi[k] - 1e-12 * span;
        if ((at_lo && g[k] > 0.0) || (at_hi && g[k] < 0.0)) g[k] = 0.0;
    }
    // Scale by the box so the norm is comparable across parameters.
    return (g.array() * (box.hi - box.lo).array()).matrix().norm();
}

struct LmOutcome {
    Vec3 x;
    Evaluation eval;
    int iterations;
    bool converged;
};

LmOutcome levenberg_marquardt(std::span<const PumpSweepPoint> data, Vec3 x, const Box& box,
                              const FitOptions& opt, std::array<bool, 3> free) {
    x = box.clamp(x);
    Evaluation cur = evaluate_internal(data, x);
    double lambda = 1e-3;
    for (int it = 1; it <= opt.max_iterations; ++it) {
        Eigen::MatrixXd j = cur.j;
        for (int k = 0; k < 3; ++k) {
            if (!free[static_cast<std::size_t>(k)]) j.col(k).setZero();
        }
        const Eigen::Matrix3d jtj = j.transpose() * j;
        const Vec3 g = j.transpose() * cur.r;

        bool accepted = false;
        Vec3 step = Vec3::Zero();
        for (int tries = 0; tries < 40; ++tries) {
            Eigen::Matrix3d a = jtj;
            for (int k = 0; k < 3; ++k) {
                a(k, k) += lambda * std::max(jtj(k, k), 1e-12);
                if (!free[static_cast<std::size_t>(k)]) a(k, k) = 1.0;
            }
            const Vec3 trial = box.clamp(x + a.ldlt().solve(-g));
            step = trial - x;
            Evaluation next = evaluate_internal(data, trial);
            if (std::isfinite(next.cost) && next.cost <= cur.cost) {
                x = trial;
                cur = std::move(next);
                lambda = std::max(lambda / 10.0, 1e-15);
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!accepted) return {x, cur, it, true};  // no descent left: stationary at this precision
        const double rel = (step.array().abs() / (x.array().abs() + 1e-12)).maxCoeff();
        if (rel < opt.step_tolerance || cur.cost == 0.0) return {x, cur, it, true};
    }
    return {x, cur, opt.max_iterations, false};
}

void validate_data(std::span<const PumpSweepPoint> data) {
    if (data.size() < 3) {
        throw DomainError(fmt::format("fit needs at least 3 points, got {}", data.size()));
    }
    std::set<double> powers;
    for (const auto& d : data) {
        if (!(d.pump_power >= 0.0) || !std::isfinite(d.pump_power)) {
            throw DomainError(fmt::format("pump power must be >= 0, got {}", d.pump_power));
        }
        if (!std::isfinite(d.squeezing_db) || !std::isfinite(d.anti_squeezing_db)) {
            throw DomainError("pump-sweep levels must be finite");
        }
        powers.insert(d.pump_power);
    }
    if (powers.size() < 2) throw DomainError("fit needs at least 2 distinct pump powers");
}

std::array<std::array<double, 3>, 3> covariance_of(const Evaluation& e, const Vec3& x,
                                                   std::size_t points) {
    std::array<std::array<double, 3>, 3> out{};
    for (auto& row : out) row.fill(kNaN);
    const double theta = std::asin(std::sqrt(std::clamp(x[2], 0.0, 1.0)));
    Eigen::MatrixXd j = e.j;
    j.col(2) *= std::sin(2.0 * theta);  // ds/dtheta
    const Eigen::Matrix3d jtj = j.transpose() * j;
    Eigen::FullPivLU<Eigen::Matrix3d> lu(jtj);
    const auto dof = static_cast<double>(2 * points) - 3.0;
    if (!lu.isInvertible() || dof <= 0.0) return out;
    const Eigen::Matrix3d cov = lu.inverse() * (e.cost / dof);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) out[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = cov(r, c);
    }
    return out;
}

}  // namespace

std::pair<double, double> predict_levels_db(const ModelParams& p, double pump_power) {
    const auto q = jitter_mix(
        opa_output_variances({p.shg_efficiency, pump_power, p.transmittance}),
        PhaseJitter::from_radians(p.jitter_rad));
    return {to_db(q.sq).value(), to_db(q.anti).value()};
}

std::vector<PumpSweepPoint> synthesize_pump_sweep(const ModelParams& p,
                                                  std::span<const double> powers) {
    std::vector<PumpSweepPoint> out;
    out.reserve(powers.size());
    for (double pw : powers) {
        const auto [sq, an] = predict_levels_db(p, pw);
        out.push_back({pw, sq, an});
    }
    return out;
}

void FitBounds::validate() const {
    if (!(lower.transmittance >= 0.0 && upper.transmittance <= 1.0 &&
          lower.transmittance < upper.transmittance)) {
        throw DomainError("transmittance bounds must satisfy 0 <= lo < hi <= 1");
    }
    if (!(lower.shg_efficiency > 0.0 && lower.shg_efficiency < upper.shg_efficiency)) {
        throw DomainError("shg_efficiency bounds must satisfy 0 < lo < hi");
    }
    if (!(lower.jitter_rad >= 0.0 && lower.jitter_rad <= upper.jitter_rad &&
          upper.jitter_rad < std::numbers::pi / 2)) {
        throw DomainError("jitter bounds must satisfy 0 <= lo <= hi < pi/2");
    }
}

ResidualJacobian fit_residuals(std::span<const PumpSweepPoint> data, const ModelParams& p) {
    const Vec3 x = to_internal(p);
    Evaluation e = evaluate_internal(data, x);
    const double ds_dtheta = std::sin(2.0 * p.jitter_rad);
    ResidualJacobian out;
    out.residuals.assign(e.r.data(), e.r.data() + e.r.size());
    out.jacobian.resize(static_cast<std::size_t>(e.r.size()));
    for (Eigen::Index i = 0; i < e.r.size(); ++i) {
        out.jacobian[static_cast<std::size_t>(i)] = {e.j(i, 0), e.j(i, 1), e.j(i, 2) * ds_dtheta};
    }
    return out;
}

FitResult fit_pump_sweep(std::span<const PumpSweepPoint> data, std::optional<ModelParams> initial,
                         const FitBounds& bounds, const FitOptions& options) {
    validate_data(data);
    bounds.validate();
    const Box box{to_internal(bounds.lower), to_internal(bounds.upper)};
    constexpr std::array<bool, 3> all_free{true, true, true};

    Vec3 start;
    if (initial) {
        const auto& l = bounds.lower;
        const auto& u = bounds.upper;
        if (initial->transmittance < l.transmittance || initial->transmittance > u.transmittance ||
            initial->shg_efficiency < l.shg_efficiency || initial->shg_efficiency > u.shg_efficiency ||
            initial->jitter_rad < l.jitter_rad || initial->jitter_rad > u.jitter_rad) {
            throw DomainError("initial fit parameters lie outside the bounds");
        }
        start = to_internal(*initial);
    } else {
        // Jitter-free pre-fit of (eta, alpha), then release the jitter.
        Vec3 mid = 0.5 * (box.lo + box.hi);
        mid[2] = box.lo[2];
        start = levenberg_marquardt(data, mid, box, options, {true, true, false}).x;
    }
    LmOutcome best = levenberg_marquardt(data, start, box, options, all_free);

    const double tol = options.gradient_tolerance * (1.0 + best.eval.cost);
    if (options.multi_start && projected_gradient_norm(best.eval, best.x, box) > tol) {
        constexpr std::array<std::array<double, 3>, 5> fractions{{
            {0.2, 0.2, 0.1}, {0.8, 0.4, 0.3}, {0.5, 0.6, 0.05}, {0.9, 0.8, 0.5}, {0.35, 0.9, 0.2}}};
        for (const auto& f : fractions) {
            const Vec3 x0 = box.lo + Vec3(f[0], f[1], f[2]).cwiseProduct(box.hi - box.lo);
            LmOutcome trial = levenberg_marquardt(data, x0, box, options, all_free);
            if (trial.eval.cost < best.eval.cost) best = std::move(trial);
        }
    }

    FitResult r;
    r.params = from_internal(best.x);
    r.residual = best.eval.cost;
    r.iterations = best.iterations;
    r.gradient_norm = projected_gradient_norm(best.eval, best.x, box);
    r.converged = best.converged;
    r.covariance = covariance_of(best.eval, best.x, data.size());
    r.message = best.converged ? "converged"
                               : fmt::format("no convergence in {} iterations; best iterate returned",
                                             options.max_iterations);
    return r;
}

OperatingPoint operating_point(double transmittance, double shg_efficiency, PhaseJitter jitter,
                               double pump_power, double detection_transmittance) {
    const auto q = jitter_mix(
        opa_output_variances({shg_efficiency, pump_power, transmittance}), jitter);
    const auto src = invert_loss(q.sq, detection_transmittance);
    return {pump_power, to_db(q.sq).value(), to_db(q.anti).value(), to_db(src).value()};
}

OperatingPoint optimal_pump_power(double transmittance, double shg_efficiency, PhaseJitter jitter,
                                  double detection_transmittance) {
    if (!(shg_efficiency > 0.0)) throw DomainError("shg_efficiency must be > 0");
    if (jitter.radians() == 0.0) {
        throw UnboundedOptimumError(
            "without phase jitter squeezing improves monotonically with pump power");
    }
    if (!(jitter.radians() < std::numbers::pi / 2)) {
        throw DomainError("phase jitter must be below pi/2 for a pump optimum");
    }
    // d/dP [e^{-2x} cos^2 + e^{2x} sin^2] = 0 with x = sqrt(alpha P) gives e^{4x} = cot^2.
    const double l = std::log(1.0 / std::tan(jitter.radians()));
    const double p_star = l * l / (4.0 * shg_efficiency);
    return operating_point(transmittance, shg_efficiency, jitter, p_star, detection_transmittance);
}

double grid_search_optimum(double transmittance, double shg_efficiency, PhaseJitter jitter,
                           double p_max, double step) {
    if (!(p_max > 0.0) || !(step > 0.0) || step > p_max) {
        throw DomainError("grid search needs 0 < step <= p_max");
    }
    const OpaParams base{shg_efficiency, 0.0, transmittance};
    auto squeezed = [&](double p) {
        OpaParams o = base;
        o.pump_power = p;
        return jitter_mix(opa_output_variances(o), jitter).sq.value();
    };
    const auto n = static_cast<long>(std::floor(p_max / step + 1e-9));
    long best = 1;
    double best_value = squeezed(step);
    for (long i = 2; i <= n; ++i) {
        const double v = squeezed(static_cast<double>(i) * step);
        if (v < best_value) {
            best_value = v;
            best = i;
        }
    }
    // Golden-section refinement within one grid step of the best node.
    double a = std::max(step * 1e-6, static_cast<double>(best - 1) * step);
    double b = std::min(p_max, static_cast<double>(best + 1) * step);
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = squeezed(c);
    double fd = squeezed(d);
    while (b - a > 1e-12 * std::max(1.0, b)) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = squeezed(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = squeezed(d);
        }
    }
    return 0.5 * (a + b);
}

QuadraturePair source_squeezing_estimate(const QuadraturePair& measured,
                                         double detection_transmittance) {
    return invert_loss(measured, detection_transmittance);
}

LossBudgetReport loss_budget_report(const LossBudget& budget) {
    budget.validate();
    LossBudgetReport r;
    double t = 1.0;
    for (const auto& e : budget.elements) {
        t *= 1.0 - e.loss;
        r.additive_loss += e.loss;
        r.rows.push_back({e.label, e.loss, t});
    }
    r.multiplicative_transmittance = t;
    r.discrepancy_pp = 100.0 * (r.additive_loss - (1.0 - t));
    if (r.discrepancy_pp > kLossDiscrepancyWarnPp) {
        r.warnings.push_back(fmt::format(
            "additive total {:.3f}% overstates the multiplicative loss {:.3f}% by {:.3f} pp",
            100.0 * r.additive_loss, 100.0 * (1.0 - t), r.discrepancy_pp));
    }
    return r;
}

LossBudgetReport loss_budget_report(const LossBudget& budget, const DetectorModel& detector,
                                    double f) {
    detector.validate();
    const double circuit = clearance_to_equiv_loss(Decibel(detector.clearance_db(f)));
    LossBudget with_circuit = budget;
    std::vector<std::string> extra;
    if (circuit > 1.0) {
        extra.push_back(fmt::format(
            "circuit noise at {:.4g} Hz exceeds shot noise (equivalent loss {:.3f} > 1)", f, circuit));
    }
    with_circuit.elements.push_back(
        {fmt::format("circuit noise @ {:.4g} MHz", f / 1e6), std::min(circuit, 1.0)});
    LossBudgetReport r = loss_budget_report(with_circuit);
    r.circuit_equivalent_loss = circuit;
    r.warnings.insert(r.warnings.begin(), extra.begin(), extra.end());
    return r;
}

}  // namespace sqz
