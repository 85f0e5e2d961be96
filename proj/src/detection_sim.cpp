#include "sqz/detection_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "sqz/error.hpp"

namespace sqz {

namespace {

void require_fraction(double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0)) {
        throw DomainError(fmt::format("{} must lie in [0, 1], got {}", what, v));
    }
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

/// Mean of k exponential draws with the given mean. Inverse-CDF sampling keeps
/// traces identical across standard-library implementations.
double averaged_exponential(std::mt19937_64& rng, double mean, int k) {
    double acc = 0.0;
    for (int i = 0; i < k; ++i) {
        const double u = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
        acc -= std::log(u);
    }
    return mean * acc / k;
}

std::vector<double> time_axis(const AnalyzerSettings& a) {
    std::vector<double> t(static_cast<std::size_t>(a.points));
    for (int i = 0; i < a.points; ++i) {
        t[static_cast<std::size_t>(i)] = a.sweep_time_s * i / (a.points - 1);
    }
    return t;
}

Trace zero_span_trace(const Scenario& s, const std::vector<double>& means, std::uint64_t seed,
                      std::string label) {
    Trace tr;
    tr.axis = TraceAxis::time_s;
    tr.axis_values = time_axis(s.analyzer);
    tr.digest = scenario_digest(s);
    tr.seed = seed;
    tr.label = std::move(label);
    tr.values_dbm.reserve(means.size());
    std::mt19937_64 rng(seed);
    const int k = s.analyzer.averages();
    for (double m : means) {
        tr.values_dbm.push_back(s.detector.shot_noise_dbm +
                                10.0 * std::log10(averaged_exponential(rng, m, k)));
    }
    return tr;
}

/// Total transmittance and additive electrical noise once circuit noise is accounted.
std::pair<double, double> effective_chain(const Scenario& s, double f) {
    const double eta = s.total_transmittance();
    const double circuit = s.detector.circuit_ratio(f);
    if (s.fold_circuit_noise) return {eta * std::max(0.0, 1.0 - circuit), 0.0};
    return {eta, circuit};
}

QuadraturePair optical_at(const Scenario& s, double eta) {
    OpaParams p = s.opa;
    p.transmittance = eta;
    return jitter_mix(opa_output_variances(p), s.jitter, s.jitter_model);
}

}  // namespace

void DetectorModel::validate() const {
    for (double v : {shot_noise_dbm, circuit_floor_dbm, analyzer_floor_dbm, lf_slope_db_per_decade,
                     hf_slope_db_per_decade}) {
        if (!std::isfinite(v)) throw DomainError("detector levels must be finite");
    }
    if (!(lf_corner_hz > 0.0) || !(hf_corner_hz > 0.0)) {
        throw DomainError("detector noise corners must be > 0");
    }
    if (lf_slope_db_per_decade < 0.0 || hf_slope_db_per_decade < 0.0) {
        throw DomainError("detector noise slopes must be >= 0");
    }
    require_fraction(visibility, "visibility");
    require_fraction(pd_quantum_efficiency, "pd_quantum_efficiency");
}

double DetectorModel::circuit_noise_dbm(double f) const {
    const double excess = std::pow(lf_corner_hz / f, lf_slope_db_per_decade / 10.0) +
                          std::pow(f / hf_corner_hz, hf_slope_db_per_decade / 10.0);
    return circuit_floor_dbm + 10.0 * std::log10(1.0 + excess);
}

double DetectorModel::circuit_ratio(double f) const {
    return db_to_linear(circuit_noise_dbm(f) - shot_noise_dbm);
}

DetectorModel calibrate_detector(double shot_noise_dbm, double clearance_db, double design_hz,
                                 double hf_corner_hz, double lf_slope_db_per_decade,
                                 double hf_slope_db_per_decade, double floor_offset_db) {
    if (!(design_hz > 0.0) || !(hf_corner_hz > 0.0) || !(lf_slope_db_per_decade > 0.0) ||
        !(hf_slope_db_per_decade > 0.0)) {
        throw DomainError("detector calibration needs positive frequencies and slopes");
    }
    const double a = lf_slope_db_per_decade / 10.0;
    const double b = hf_slope_db_per_decade / 10.0;
    // d/df of the excess vanishes where a (fl/f)^a = b (f/fh)^b.
    const double hf_term = std::pow(design_hz / hf_corner_hz, b);
    const double lf_corner = design_hz * std::pow(b / a * hf_term, 1.0 / a);
    const double excess = std::pow(lf_corner / design_hz, a) + hf_term;

    DetectorModel d;
    d.shot_noise_dbm = shot_noise_dbm;
    d.lf_corner_hz = lf_corner;
    d.lf_slope_db_per_decade = lf_slope_db_per_decade;
    d.hf_corner_hz = hf_corner_hz;
    d.hf_slope_db_per_decade = hf_slope_db_per_decade;
    d.circuit_floor_dbm = shot_noise_dbm - clearance_db - 10.0 * std::log10(1.0 + excess);
    d.analyzer_floor_dbm = d.circuit_floor_dbm - floor_offset_db;
    return d;
}

void AnalyzerSettings::validate() const {
    if (!(center_frequency_hz > 0.0)) throw DomainError("analyzer center frequency must be > 0");
    if (!(span_hz >= 0.0)) throw DomainError("analyzer span must be >= 0");
    if (!(vbw_hz > 0.0) || !(rbw_hz >= vbw_hz)) {
        throw DomainError(fmt::format("analyzer needs rbw >= vbw > 0, got rbw {} vbw {}", rbw_hz,
                                      vbw_hz));
    }
    if (!(sweep_time_s > 0.0)) throw DomainError("analyzer sweep time must be > 0");
    if (points < 2) throw DomainError(fmt::format("analyzer needs >= 2 points, got {}", points));
}

int AnalyzerSettings::averages() const {
    return std::max(1, static_cast<int>(std::lround(rbw_hz / vbw_hz)));
}

void Scenario::validate() const {
    opa.validate();
    detection_budget.validate();
    detector.validate();
    analyzer.validate();
    if (!(scan_rate_hz > 0.0) || !std::isfinite(scan_rate_hz)) {
        throw DomainError("scan rate must be > 0");
    }
    if (!std::isfinite(scan_start_rad)) throw DomainError("scan start angle must be finite");
}

double Scenario::total_transmittance() const {
    return opa.transmittance * cascade_losses(detection_budget, composition);
}

QuadraturePair Scenario::optical_variances() const {
    return optical_at(*this, total_transmittance());
}

Scenario default_scenario() {
    Scenario s;
    s.opa = {.shg_efficiency = percent_per_watt(820.0), .pump_power = 0.66, .transmittance = 0.96};
    s.jitter = PhaseJitter::from_degrees(0.8);
    s.detection_budget.elements = {{"homodyne detection", 0.08}};
    s.detector = calibrate_detector(-65.0, 25.0, 11e6);
    s.analyzer = AnalyzerSettings{};
    return s;
}

std::string scenario_digest(const Scenario& s) {
    std::string text = fmt::format(
        "opa {:.17g} {:.17g} {:.17g}\njitter {:.17g} {}\n", s.opa.shg_efficiency,
        s.opa.pump_power, s.opa.transmittance, s.jitter.radians(),
        static_cast<int>(s.jitter_model));
    for (const auto& e : s.detection_budget.elements) {
        text += fmt::format("loss {} {:.17g}\n", e.label, e.loss);
    }
    const auto& d = s.detector;
    text += fmt::format("composition {}\ndetector {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} "
                        "{:.17g} {:.17g} {:.17g}\n",
                        static_cast<int>(s.composition), d.shot_noise_dbm, d.circuit_floor_dbm,
                        d.lf_corner_hz, d.lf_slope_db_per_decade, d.hf_corner_hz,
                        d.hf_slope_db_per_decade, d.analyzer_floor_dbm, d.visibility,
                        d.pd_quantum_efficiency);
    const auto& a = s.analyzer;
    text += fmt::format("analyzer {:.17g} {:.17g} {:.17g} {:.17g} {:.17g} {} {}\n",
                        a.center_frequency_hz, a.span_hz, a.rbw_hz, a.vbw_hz, a.sweep_time_s,
                        a.points, a.seed);
    text += fmt::format("lock {} {:.17g} {:.17g} {}\n", static_cast<int>(s.lock_mode),
                        s.scan_rate_hz, s.scan_start_rad, s.fold_circuit_noise);

    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw NumericalError("SHA-256 digest failed");
    }
    std::string hex;
    for (unsigned int i = 0; i < 8 && i < len; ++i) hex += fmt::format("{:02x}", md[i]);
    return hex;
}

MeasuredNoise measured_noise_ratio(const Scenario& s, double f) {
    s.validate();
    if (!(f > 0.0)) throw DomainError("measurement frequency must be > 0");
    const auto [eta, circuit] = effective_chain(s, f);
    const auto q = optical_at(s, eta);
    return {NoiseRatio(q.sq.value() + circuit), NoiseRatio(q.anti.value() + circuit)};
}

double Trace::mean_dbm() const {
    if (values_dbm.empty()) throw DomainError("mean of an empty trace");
    return std::accumulate(values_dbm.begin(), values_dbm.end(), 0.0) /
           static_cast<double>(values_dbm.size());
}

std::vector<double> scan_angles(const Scenario& s) {
    const auto t = time_axis(s.analyzer);
    std::vector<double> phi(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        phi[i] = s.scan_start_rad + 2.0 * std::numbers::pi * s.scan_rate_hz * t[i];
    }
    return phi;
}

Trace simulate_zero_span(const Scenario& s) {
    s.validate();
    if (s.analyzer.span_hz != 0.0) throw DomainError("zero-span simulation needs span = 0");
    const double f = s.analyzer.center_frequency_hz;
    const auto [eta, circuit] = effective_chain(s, f);
    const auto q = optical_at(s, eta);

    std::vector<double> means(static_cast<std::size_t>(s.analyzer.points));
    if (s.lock_mode == LockMode::locked) {
        std::fill(means.begin(), means.end(), q.sq.value() + circuit);
    } else {
        const auto phi = scan_angles(s);
        for (std::size_t i = 0; i < means.size(); ++i) {
            means[i] = quadrature_at_angle(q, phi[i]) + circuit;
        }
    }
    return zero_span_trace(s, means, s.analyzer.seed,
                           s.lock_mode == LockMode::locked ? "locked" : "scanned");
}

Trace simulate_shot_reference(const Scenario& s) {
    s.validate();
    if (s.analyzer.span_hz != 0.0) throw DomainError("zero-span simulation needs span = 0");
    const double circuit = s.detector.circuit_ratio(s.analyzer.center_frequency_hz);
    std::vector<double> means(static_cast<std::size_t>(s.analyzer.points), 1.0 + circuit);
    // Independent stream from the squeezed trace.
    return zero_span_trace(s, means, s.analyzer.seed ^ 0x9E3779B97F4A7C15ULL, "shot");
}

ScanEnvelope scan_envelope(const Trace& scanned, const Scenario& s) {
    const auto phi = scan_angles(s);
    if (phi.size() != scanned.values_dbm.size() || phi.size() < 2) {
        throw DomainError("scanned trace does not match the scenario's scan grid");
    }
    const std::size_t n = phi.size();
    std::vector<double> y(n), s2(n), c2(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = scanned.values_dbm[i] - s.detector.shot_noise_dbm;
        s2[i] = std::pow(std::sin(phi[i]), 2);
        c2[i] = std::pow(std::cos(phi[i]), 2);
    }
    const auto [mn, mx] = std::minmax_element(y.begin(), y.end());
    ScanEnvelope env{};
    env.raw_max_db = *mx;
    env.raw_min_db = *mn;

    constexpr double kDbPerNeper = 10.0 / std::numbers::ln10;
    double la = std::log(db_to_linear(*mx));
    double lb = std::log(db_to_linear(*mn));
    auto cost = [&](double pa, double pb) {
        double c = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = y[i] - kDbPerNeper * std::log(std::exp(pa) * s2[i] + std::exp(pb) * c2[i]);
            c += r * r;
        }
        return c;
    };
    double current = cost(la, lb);
    for (int it = 0; it < 100; ++it) {
        const double a = std::exp(la);
        const double b = std::exp(lb);
        double jaa = 0.0, jab = 0.0, jbb = 0.0, ga = 0.0, gb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double m = a * s2[i] + b * c2[i];
            const double r = y[i] - kDbPerNeper * std::log(m);
            const double da = kDbPerNeper * a * s2[i] / m;
            const double db = kDbPerNeper * b * c2[i] / m;
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        const double det = jaa * jbb - jab * jab;
        if (!(std::abs(det) > 0.0)) break;
        double step_a = (jbb * ga - jab * gb) / det;
        double step_b = (jaa * gb - jab * ga) / det;
        double next = cost(la + step_a, lb + step_b);
        for (int halve = 0; halve < 30 && next > current; ++halve) {
            step_a *= 0.5;
            step_b *= 0.5;
            next = cost(la + step_a, lb + step_b);
        }
        if (next > current) break;
        la += step_a;
        lb += step_b;
        current = next;
        if (std::max(std::abs(step_a), std::abs(step_b)) < 1e-12) break;
    }
    env.anti_db = kDbPerNeper * la;
    env.sq_db = kDbPerNeper * lb;
    return env;
}

FrequencySweep sweep_frequency(const Scenario& s, double f_min, double f_max, int points) {
    s.validate();
    if (!(f_min > 0.0)) throw DomainError("sweep start must be > 0");
    if (points < 1) throw DomainError("sweep needs at least one point");
    if (points > 1 && !(f_max > f_min)) throw DomainError("sweep needs f_min < f_max");

    std::vector<double> freqs(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) {
        freqs[static_cast<std::size_t>(i)] =
            points == 1 ? f_min : f_min + (f_max - f_min) * i / (points - 1);
    }
    auto make = [&](const char* label) {
        Trace t;
        t.axis = TraceAxis::frequency_hz;
        t.axis_values = freqs;
        t.digest = scenario_digest(s);
        t.seed = s.analyzer.seed;
        t.label = label;
        t.values_dbm.reserve(freqs.size());
        return t;
    };
    FrequencySweep out{make("squeezed"), make("shot"), make("circuit"), make("floor")};
    for (double f : freqs) {
        const auto m = measured_noise_ratio(s, f);
        out.squeezed.values_dbm.push_back(s.detector.shot_noise_dbm + to_db(m.locked).value());
        out.shot.values_dbm.push_back(s.detector.shot_noise_dbm);
        out.circuit.values_dbm.push_back(s.detector.circuit_noise_dbm(f));
        out.floor.values_dbm.push_back(s.detector.analyzer_floor_dbm);
    }
    return out;
}

double select_measurement_frequency(const FrequencySweep& sweep) {
    const auto& f = sweep.shot.axis_values;
    if (f.empty() || sweep.circuit.values_dbm.size() != f.size() ||
        sweep.shot.values_dbm.size() != f.size()) {
        throw DomainError("frequency sweep is empty or misaligned");
    }
    std::size_t best = 0;
    double best_clearance = sweep.shot.values_dbm[0] - sweep.circuit.values_dbm[0];
    for (std::size_t i = 1; i < f.size(); ++i) {
        const double c = sweep.shot.values_dbm[i] - sweep.circuit.values_dbm[i];
        if (c > best_clearance) {
            best_clearance = c;
            best = i;
        }
    }
    return f[best];
}

}  // namespace sqz
