#include "sqz/lock_loop.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <fmt/format.h>

#include "sqz/error.hpp"

namespace sqz {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

Complex polyval(const std::vector<double>& coeffs, Complex s) {
    Complex acc = 0.0;
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * s + *it;
    return acc;
}

double polyabs(const std::vector<double>& coeffs, double s_abs) {
    double acc = 0.0;
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * s_abs + std::abs(*it);
    return acc;
}

std::vector<double> convolve(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    }
    return out;
}

/// Wraps a degree difference into (-180, 180].
double wrap_deg(double d) {
    d = std::fmod(d, 360.0);
    if (d > 180.0) d -= 360.0;
    if (d <= -180.0) d += 360.0;
    return d;
}

double gain_db(Complex h) { return 20.0 * std::log10(std::abs(h)); }

double arg_deg(Complex h) { return std::arg(h) * kRadToDeg; }

/// Phase at f, continued from a known unwrapped phase at a nearby frequency.
double phase_from(const FrequencyResponse& response, double f, double ref_phase, Complex ref) {
    return ref_phase + wrap_deg(arg_deg(response(f)) - arg_deg(ref));
}

template <class Pred>
double bisect_log(double lo, double hi, Pred below) {
    // `below(lo)` is false and `below(hi)` is true.
    for (int i = 0; i < 200 && (hi - lo) > 1e-12 * lo; ++i) {
        const double mid = std::sqrt(lo * hi);
        if (below(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return std::sqrt(lo * hi);
}

double unwrapped_phase_at(const FrequencyResponse& response, double f, const GridSettings& grid) {
    const double start = std::min(grid.f_min, f);
    auto freqs = log_grid(start, std::max(f, start * 1.000001), grid.per_decade);
    freqs.back() = f;
    return bode(response, freqs).back().phase_deg;
}

}  // namespace

void TransferFunction::validate() const {
    if (numerator.empty() || denominator.empty()) {
        throw DomainError("transfer function needs non-empty numerator and denominator");
    }
    if (denominator.back() == 0.0) {
        throw DomainError("transfer function denominator has a zero leading coefficient");
    }
    if (!(pure_delay >= 0.0) || !std::isfinite(pure_delay)) {
        throw DomainError(fmt::format("pure delay must be >= 0, got {}", pure_delay));
    }
    if (!std::isfinite(gain)) throw DomainError("transfer function gain must be finite");
}

TransferFunction TransferFunction::constant(double k) { return {{1.0}, {1.0}, 0.0, k}; }

TransferFunction TransferFunction::integrator(double k) { return {{1.0}, {0.0, 1.0}, 0.0, k}; }

TransferFunction TransferFunction::delay(double seconds) { return {{1.0}, {1.0}, seconds, 1.0}; }

TransferFunction TransferFunction::low_pass(double corner_hz) {
    if (!(corner_hz > 0.0)) throw DomainError("low-pass corner must be > 0");
    return {{1.0}, {1.0, 1.0 / (kTwoPi * corner_hz)}, 0.0, 1.0};
}

TransferFunction operator*(const TransferFunction& a, const TransferFunction& b) {
    return {convolve(a.numerator, b.numerator), convolve(a.denominator, b.denominator),
            a.pure_delay + b.pure_delay, a.gain * b.gain};
}

Complex evaluate(const TransferFunction& tf, double frequency_hz) {
    if (!(frequency_hz > 0.0) || !std::isfinite(frequency_hz)) {
        throw DomainError(fmt::format("evaluation frequency must be > 0, got {}", frequency_hz));
    }
    const double w = kTwoPi * frequency_hz;
    const Complex s(0.0, w);
    const Complex den = polyval(tf.denominator, s);
    if (std::abs(den) <= 1e-13 * polyabs(tf.denominator, w)) {
        throw SingularityError(fmt::format("transfer function has a pole at {} Hz", frequency_hz));
    }
    return tf.gain * polyval(tf.numerator, s) / den * std::polar(1.0, -w * tf.pure_delay);
}

void PidController::validate() const {
    if (!std::isfinite(kp) || !std::isfinite(ki) || !std::isfinite(kd)) {
        throw DomainError("PID gains must be finite");
    }
    if (kp == 0.0 && ki == 0.0 && kd == 0.0) {
        throw DomainError("PID controller needs at least one nonzero gain");
    }
    if (kd != 0.0 && !(derivative_corner_hz > 0.0)) {
        throw DomainError("derivative filter corner must be > 0 when kd is nonzero");
    }
}

TransferFunction PidController::transfer_function() const {
    validate();
    const double tau_d = kd != 0.0 ? 1.0 / (kTwoPi * derivative_corner_hz) : 0.0;
    if (ki == 0.0 && kd == 0.0) return TransferFunction::constant(kp);
    if (kd == 0.0) return {{ki, kp}, {0.0, 1.0}, 0.0, 1.0};
    // kp + ki/s + kd s/(1 + s tau_d) over the common denominator s (1 + s tau_d)
    return {{ki, kp + ki * tau_d, kp * tau_d + kd}, {0.0, 1.0, tau_d}, 0.0, 1.0};
}

const char* loop_kind_name(LoopKind k) {
    return k == LoopKind::opa_probe ? "opa_probe" : "probe_lo";
}

void LoopModel::validate() const {
    controller.validate();
    fast_plant.validate();
    slow_plant.validate();
    if (!(loop_delay >= 0.0) || !std::isfinite(loop_delay)) {
        throw DomainError(fmt::format("loop delay must be >= 0, got {}", loop_delay));
    }
}

Complex LoopModel::open_loop(double frequency_hz) const {
    const Complex c = evaluate(controller.transfer_function(), frequency_hz);
    const Complex p = evaluate(fast_plant, frequency_hz) + evaluate(slow_plant, frequency_hz);
    return c * p * std::polar(1.0, -kTwoPi * frequency_hz * loop_delay);
}

Complex LoopModel::system_response(double frequency_hz) const {
    return evaluate(fast_plant, frequency_hz) *
           std::polar(1.0, -kTwoPi * frequency_hz * loop_delay);
}

LoopModel LoopModel::scaled(double k) const {
    LoopModel out = *this;
    out.controller.kp *= k;
    out.controller.ki *= k;
    out.controller.kd *= k;
    return out;
}

std::vector<BodePoint> bode(const FrequencyResponse& response,
                            std::span<const double> frequencies) {
    std::vector<BodePoint> out;
    out.reserve(frequencies.size());
    double prev_raw = 0.0;
    double prev_unwrapped = 0.0;
    for (std::size_t i = 0; i < frequencies.size(); ++i) {
        const double f = frequencies[i];
        if (!(f > 0.0)) throw DomainError("Bode frequencies must be > 0");
        if (i > 0 && !(f > frequencies[i - 1])) {
            throw DomainError("Bode frequencies must be strictly ascending");
        }
        const Complex h = response(f);
        const double raw = arg_deg(h);
        const double unwrapped = i == 0 ? raw : prev_unwrapped + wrap_deg(raw - prev_raw);
        out.push_back({f, gain_db(h), unwrapped});
        prev_raw = raw;
        prev_unwrapped = unwrapped;
    }
    return out;
}

std::vector<BodePoint> bode(const TransferFunction& tf, std::span<const double> frequencies) {
    tf.validate();
    return bode([&tf](double f) { return evaluate(tf, f); }, frequencies);
}

std::vector<BodePoint> bode(const LoopModel& loop, std::span<const double> frequencies) {
    loop.validate();
    return bode([&loop](double f) { return loop.system_response(f); }, frequencies);
}

std::vector<double> log_grid(double f_min, double f_max, int per_decade) {
    if (!(f_min > 0.0) || !(f_max > f_min) || per_decade < 1) {
        throw DomainError(fmt::format("invalid frequency grid [{}, {}] with {} points/decade",
                                      f_min, f_max, per_decade));
    }
    const double decades = std::log10(f_max / f_min);
    const auto n = static_cast<std::size_t>(std::ceil(decades * per_decade)) + 1;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = f_min * std::pow(10.0, decades * static_cast<double>(i) / static_cast<double>(n - 1));
    }
    out.front() = f_min;
    out.back() = f_max;
    return out;
}

std::optional<double> phase_crossover(const FrequencyResponse& response, const GridSettings& grid) {
    const auto freqs = grid.frequencies();
    const auto pts = bode(response, freqs);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (pts[i].phase_deg > -180.0) continue;
        if (i == 0) return pts[0].frequency_hz;
        const double f0 = pts[i - 1].frequency_hz;
        const double ph0 = pts[i - 1].phase_deg;
        const Complex h0 = response(f0);
        return bisect_log(f0, pts[i].frequency_hz, [&](double f) {
            return phase_from(response, f, ph0, h0) <= -180.0;
        });
    }
    return std::nullopt;
}

bool StabilityMargins::stable() const {
    if (gain_margin_db && !(*gain_margin_db > 0.0)) return false;
    if (phase_margin_deg && !(*phase_margin_deg > 0.0)) return false;
    return true;
}

StabilityMargins stability_margins(const FrequencyResponse& open_loop, const GridSettings& grid) {
    StabilityMargins m;
    m.phase_crossover_hz = phase_crossover(open_loop, grid);
    if (m.phase_crossover_hz) {
        m.gain_margin_db = -gain_db(open_loop(*m.phase_crossover_hz));
    }

    // Gains within this band of 0 dB are treated as sitting on unity, not crossing it.
    constexpr double kUnityBand = 1e-9;
    const auto freqs = grid.frequencies();
    const auto pts = bode(open_loop, freqs);
    for (std::size_t i = 1; i < pts.size(); ++i) {
        if (!(pts[i - 1].gain_db > kUnityBand && pts[i].gain_db < -kUnityBand)) continue;
        const double f0 = pts[i - 1].frequency_hz;
        const double ph0 = pts[i - 1].phase_deg;
        const Complex h0 = open_loop(f0);
        const double fc = bisect_log(f0, pts[i].frequency_hz,
                                     [&](double f) { return gain_db(open_loop(f)) < 0.0; });
        m.gain_crossover_hz = fc;
        m.phase_margin_deg = 180.0 + phase_from(open_loop, fc, ph0, h0);
        break;
    }
    return m;
}

StabilityMargins stability_margins(const LoopModel& loop, const GridSettings& grid) {
    loop.validate();
    return stability_margins([&loop](double f) { return loop.open_loop(f); }, grid);
}

double demod_frequency(double shift_hz, LoopKind kind) {
    if (!(shift_hz > 0.0)) throw DomainError(fmt::format("shift must be > 0, got {}", shift_hz));
    return kind == LoopKind::opa_probe ? 2.0 * shift_hz : shift_hz;
}

ShiftAssessment assess_shift(const LoopModel& loop, double shift_hz, const ShiftCriteria& c) {
    loop.validate();
    const FrequencyResponse response = [&loop](double f) { return loop.system_response(f); };
    ShiftAssessment a{};
    a.demod_hz = demod_frequency(shift_hz, loop.kind);
    a.gain_deviation_db = gain_db(response(a.demod_hz)) - gain_db(response(c.flat_reference_hz));
    a.phase_headroom_deg = 180.0 + unwrapped_phase_at(response, a.demod_hz, c.grid);
    const auto fpc = phase_crossover(response, c.grid);
    a.gain_headroom_db = fpc ? 20.0 * std::log10(*fpc / a.demod_hz)
                             : std::numeric_limits<double>::infinity();
    a.feasible = std::abs(a.gain_deviation_db) <= c.flat_band_db &&
                 a.phase_headroom_deg >= c.min_phase_margin_deg &&
                 a.gain_headroom_db >= c.min_gain_margin_db;
    return a;
}

double select_shift_frequency(std::span<const LoopModel> loops, std::span<const double> candidates,
                              const ShiftCriteria& c) {
    if (!(c.min_gain_margin_db >= 0.0) || !(c.min_phase_margin_deg >= 0.0)) {
        throw DomainError("minimum margins must be >= 0");
    }
    if (!std::is_sorted(candidates.begin(), candidates.end())) {
        throw DomainError("shift candidates must be sorted ascending");
    }
    if (candidates.empty()) throw InfeasibleError("no shift-frequency candidates given");

    for (const auto& loop : loops) {
        const auto m = stability_margins(loop, c.grid);
        const bool ok = (!m.gain_margin_db || *m.gain_margin_db >= c.min_gain_margin_db) &&
                        (!m.phase_margin_deg || *m.phase_margin_deg >= c.min_phase_margin_deg);
        if (!ok) {
            throw InfeasibleError(fmt::format("{} loop misses the required stability margins",
                                              loop_kind_name(loop.kind)));
        }
    }
    for (auto it = candidates.rbegin(); it != candidates.rend(); ++it) {
        const bool all = std::all_of(loops.begin(), loops.end(), [&](const LoopModel& loop) {
            return assess_shift(loop, *it, c).feasible;
        });
        if (all) return *it;
    }
    throw InfeasibleError("no shift-frequency candidate satisfies every loop");
}

void PhaseNoiseSpectrum::validate() const {
    if (!(f_min > 0.0) || !(f_max > f_min)) {
        throw DomainError(fmt::format("phase-noise range [{}, {}] is invalid", f_min, f_max));
    }
    if (kind == SpectrumKind::table) {
        if (table.size() < 2) throw DomainError("phase-noise table needs at least two rows");
        for (std::size_t i = 0; i < table.size(); ++i) {
            if (!(table[i].first > 0.0) || !(table[i].second >= 0.0)) {
                throw DomainError("phase-noise table rows need f > 0 and density >= 0");
            }
            if (i > 0 && !(table[i].first > table[i - 1].first)) {
                throw DomainError("phase-noise table frequencies must ascend");
            }
        }
    } else if (!(amplitude >= 0.0) || !std::isfinite(amplitude)) {
        throw DomainError("phase-noise amplitude must be >= 0");
    }
}

double PhaseNoiseSpectrum::density(double f) const {
    switch (kind) {
        case SpectrumKind::white: return amplitude;
        case SpectrumKind::inverse_square: return amplitude / (f * f);
        case SpectrumKind::table: break;
    }
    if (f < table.front().first || f > table.back().first) return 0.0;
    auto hi = std::lower_bound(table.begin(), table.end(), f,
                               [](const auto& row, double x) { return row.first < x; });
    if (hi == table.begin()) return hi->second;
    auto lo = hi - 1;
    if (lo->second <= 0.0 || hi->second <= 0.0) {
        const double t = (f - lo->first) / (hi->first - lo->first);
        return lo->second + t * (hi->second - lo->second);
    }
    const double t = std::log(f / lo->first) / std::log(hi->first / lo->first);
    return lo->second * std::pow(hi->second / lo->second, t);
}

namespace {

/// integral of S(f) w(f) df over the spectrum range, decade by decade in log f.
template <class Weight>
double integrate_spectrum(const PhaseNoiseSpectrum& noise, Weight weight) {
    noise.validate();
    double a = noise.f_min;
    double b = noise.f_max;
    if (noise.kind == SpectrumKind::table) {
        a = std::max(a, noise.table.front().first);
        b = std::min(b, noise.table.back().first);
        if (!(b > a)) return 0.0;
    }
    auto integrand = [&](double u) {
        const double f = std::exp(u);
        return noise.density(f) * weight(f) * f;
    };
    double total = 0.0;
    double lo = std::log(a);
    const double end = std::log(b);
    const double step = std::log(10.0);
    while (lo < end) {
        const double hi = std::min(end, lo + step);
        double err = 0.0;
        const double piece = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
            integrand, lo, hi, 15, 1e-9, &err);
        if (!std::isfinite(piece) || err > 1e-6 * std::abs(piece) + 1e-300) {
            throw NumericalError(fmt::format(
                "phase-noise integration did not converge on [{:.4g}, {:.4g}] Hz", std::exp(lo),
                std::exp(hi)));
        }
        total += piece;
        lo = hi;
    }
    return total;
}

PhaseJitter jitter_from_variance(double variance) {
    const double theta = std::sqrt(variance);
    if (!(theta <= std::numbers::pi / 2)) {
        throw NumericalError(fmt::format("integrated phase jitter {} rad exceeds pi/2", theta));
    }
    return PhaseJitter::from_radians(theta);
}

}  // namespace

PhaseJitter free_running_jitter(const PhaseNoiseSpectrum& noise) {
    return jitter_from_variance(integrate_spectrum(noise, [](double) { return 1.0; }));
}

PhaseJitter residual_jitter(const PhaseNoiseSpectrum& noise, const LoopModel& loop,
                            const GridSettings& grid) {
    if (!stability_margins(loop, grid).stable()) {
        throw InstabilityError(
            fmt::format("{} loop is unstable; residual jitter undefined", loop_kind_name(loop.kind)));
    }
    return jitter_from_variance(integrate_spectrum(noise, [&loop](double f) {
        return 1.0 / std::norm(1.0 + loop.open_loop(f));
    }));
}

PhaseNoiseSpectrum calibrate_noise_amplitude(PhaseNoiseSpectrum noise, const LoopModel& loop,
                                             PhaseJitter target) {
    const double current = residual_jitter(noise, loop).radians();
    if (!(current > 0.0)) throw NumericalError("cannot calibrate a zero phase-noise spectrum");
    // theta^2 is linear in the spectrum scale.
    const double scale = std::pow(target.radians() / current, 2);
    noise.amplitude *= scale;
    for (auto& row : noise.table) row.second *= scale;
    return noise;
}

double calibrated_delay(double crossover_hz, double corner_hz) {
    if (!(crossover_hz > 0.0) || !(corner_hz > 0.0)) {
        throw DomainError("crossover and corner frequencies must be > 0");
    }
    const double lag_deg = std::atan(crossover_hz / corner_hz) * kRadToDeg;
    return (180.0 - lag_deg) / (360.0 * crossover_hz);
}

namespace {

LoopModel default_loop(LoopKind kind, double crossover_hz) {
    constexpr double kFastCorner = 10e6;
    LoopModel m;
    m.kind = kind;
    m.controller = {.kp = 0.4, .ki = 0.4 * kTwoPi * 20e3, .kd = 0.0, .derivative_corner_hz = 1e6};
    m.fast_plant = TransferFunction::low_pass(kFastCorner);
    m.slow_plant = TransferFunction::low_pass(100.0) * TransferFunction::constant(10.0);
    m.loop_delay = calibrated_delay(crossover_hz, kFastCorner);
    return m;
}

}  // namespace

LoopModel default_opa_probe_loop() { return default_loop(LoopKind::opa_probe, 4e6); }

LoopModel default_probe_lo_loop() { return default_loop(LoopKind::probe_lo, 2e6); }

}  // namespace sqz
