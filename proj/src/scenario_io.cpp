#include "sqz/scenario_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <openssl/evp.h>

#include "sqz/error.hpp"
#include "sqz/units.hpp"

namespace sqz {

namespace pt = boost::property_tree;

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

/// Collects every problem in a scenario file before failing.
class Reader {
public:
    explicit Reader(const pt::ptree& root) {
        for (const auto& [name, node] : root) {
            if (node.empty() && !node.data().empty()) {
                errors_.push_back(fmt::format("{}: key outside of any section", name));
                continue;
            }
            auto& keys = sections_[name];
            for (const auto& [key, leaf] : node) keys.emplace_back(key, leaf.data());
        }
    }

    bool has_section(const std::string& s) const { return sections_.contains(s); }

    /// Ordered entries of a section; marks all of them consumed.
    std::vector<std::pair<std::string, std::string>> entries(const std::string& s) {
        known_sections_.insert(s);
        auto it = sections_.find(s);
        if (it == sections_.end()) return {};
        for (const auto& kv : it->second) consumed_.insert(s + "." + kv.first);
        return it->second;
    }

    std::optional<std::string> raw(const std::string& s, const std::string& key) {
        known_sections_.insert(s);
        auto it = sections_.find(s);
        if (it == sections_.end()) return std::nullopt;
        for (const auto& [k, v] : it->second) {
            if (k == key) {
                consumed_.insert(s + "." + key);
                return v;
            }
        }
        return std::nullopt;
    }

    bool has(const std::string& s, const std::string& key) const {
        auto it = sections_.find(s);
        if (it == sections_.end()) return false;
        for (const auto& kv : it->second) {
            if (kv.first == key) return true;
        }
        return false;
    }

    template <class Check>
    void quantity(const std::string& s, const std::string& key, Dimension dim, double& target,
                  Check check) {
        const auto text = raw(s, key);
        if (!text) return;
        try {
            const double v = parse_quantity(*text, dim);
            if (const char* problem = check(v)) {
                fail(s, key, fmt::format("{} (got '{}')", problem, *text));
                return;
            }
            target = v;
        } catch (const DomainError& e) {
            fail(s, key, e.what());
        }
    }

    void quantity(const std::string& s, const std::string& key, Dimension dim, double& target) {
        quantity(s, key, dim, target, [](double) -> const char* { return nullptr; });
    }

    /// Angle fields kept in degrees internally; degrees are taken verbatim.
    void degrees(const std::string& s, const std::string& key, double& target_deg) {
        const auto text = raw(s, key);
        if (!text) return;
        try {
            const auto t = trim(*text);
            if (t.size() > 4 && t.ends_with(" deg")) {
                target_deg = parse_quantity(t.substr(0, t.size() - 4), Dimension::dimensionless);
            } else {
                target_deg = parse_quantity(t, Dimension::angle) * kRadToDeg;
            }
        } catch (const DomainError& e) {
            fail(s, key, e.what());
        }
    }

    void integer(const std::string& s, const std::string& key, long long lo, long long hi,
                 auto& target) {
        const auto text = raw(s, key);
        if (!text) return;
        const auto t = trim(*text);
        long long v = 0;
        const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc() || ptr != t.data() + t.size()) {
            fail(s, key, fmt::format("'{}' is not an integer", t));
            return;
        }
        if (v < lo || v > hi) {
            fail(s, key, fmt::format("must lie in [{}, {}], got {}", lo, hi, v));
            return;
        }
        target = static_cast<std::remove_reference_t<decltype(target)>>(v);
    }

    void seed(const std::string& s, const std::string& key, std::uint64_t& target) {
        const auto text = raw(s, key);
        if (!text) return;
        const auto t = trim(*text);
        std::uint64_t v = 0;
        const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc() || ptr != t.data() + t.size()) {
            fail(s, key, fmt::format("'{}' is not an unsigned 64-bit integer", t));
            return;
        }
        target = v;
    }

    template <class Enum>
    void choice(const std::string& s, const std::string& key,
                std::initializer_list<std::pair<const char*, Enum>> options, Enum& target) {
        const auto text = raw(s, key);
        if (!text) return;
        const auto t = trim(*text);
        std::string names;
        for (const auto& [name, value] : options) {
            if (t == name) {
                target = value;
                return;
            }
            names += names.empty() ? name : fmt::format(", {}", name);
        }
        fail(s, key, fmt::format("'{}' is not one of: {}", t, names));
    }

    void boolean(const std::string& s, const std::string& key, bool& target) {
        choice<bool>(s, key, {{"true", true}, {"false", false}}, target);
    }

    void fail(const std::string& s, const std::string& key, const std::string& msg) {
        errors_.push_back(key.empty() ? fmt::format("{}: {}", s, msg)
                                      : fmt::format("{}.{}: {}", s, key, msg));
    }

    void finish() {
        for (const auto& [name, keys] : sections_) {
            if (!known_sections_.contains(name)) {
                errors_.push_back(fmt::format("[{}]: unknown section", name));
                continue;
            }
            for (const auto& kv : keys) {
                if (!consumed_.contains(name + "." + kv.first)) {
                    errors_.push_back(fmt::format("{}.{}: unknown key", name, kv.first));
                }
            }
        }
        if (!errors_.empty()) {
            std::string msg = fmt::format("scenario has {} invalid field(s):", errors_.size());
            for (const auto& e : errors_) msg += "\n  " + e;
            throw DomainError(msg);
        }
    }

private:
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections_;
    std::set<std::string> known_sections_;
    std::set<std::string> consumed_;
    std::vector<std::string> errors_;
};

const char* unit_interval(double v) {
    return v >= 0.0 && v <= 1.0 ? nullptr : "must lie in [0, 1]";
}
const char* positive(double v) { return v > 0.0 ? nullptr : "must be > 0"; }
const char* non_negative(double v) { return v >= 0.0 ? nullptr : "must be >= 0"; }

void read_opa(Reader& r, Scenario& s) {
    const std::string sec = "opa";
    r.quantity(sec, "shg_efficiency", Dimension::shg_efficiency, s.opa.shg_efficiency, non_negative);
    r.quantity(sec, "pump_power", Dimension::power, s.opa.pump_power, non_negative);
    if (r.has(sec, "waveguide_loss") && r.has(sec, "waveguide_transmittance")) {
        r.fail(sec, "waveguide_loss", "give either waveguide_loss or waveguide_transmittance");
    }
    double loss = 1.0 - s.opa.transmittance;
    if (r.has(sec, "waveguide_loss")) {
        r.quantity(sec, "waveguide_loss", Dimension::fraction, loss, unit_interval);
        s.opa.transmittance = 1.0 - loss;
    }
    r.quantity(sec, "waveguide_transmittance", Dimension::fraction, s.opa.transmittance,
               unit_interval);
}

void read_jitter(Reader& r, Scenario& s) {
    double theta = s.jitter.radians();
    r.quantity("jitter", "theta", Dimension::angle, theta, [](double v) -> const char* {
        return v >= 0.0 && v <= std::numbers::pi / 2 ? nullptr : "must lie in [0, 90] deg";
    });
    if (theta >= 0.0 && theta <= std::numbers::pi / 2) s.jitter = PhaseJitter::from_radians(theta);
    r.choice<JitterModel>("jitter", "model",
                          {{"fixed", JitterModel::fixed_angle}, {"gaussian", JitterModel::gaussian}},
                          s.jitter_model);
}

void read_detection(Reader& r, Scenario& s) {
    r.choice<LossComposition>(
        "detection", "composition",
        {{"multiplicative", LossComposition::multiplicative}, {"additive", LossComposition::additive}},
        s.composition);
    r.boolean("detection", "fold_circuit_noise", s.fold_circuit_noise);

    if (!r.has_section("detection_budget")) {
        r.entries("detection_budget");
        return;
    }
    s.detection_budget.elements.clear();
    for (const auto& [label, value] : r.entries("detection_budget")) {
        const auto v = trim(value);
        try {
            double loss = 0.0;
            if (v.starts_with("visibility ")) {
                loss = visibility_to_loss(parse_quantity(v.substr(11), Dimension::fraction));
            } else if (v.starts_with("efficiency ")) {
                const double eff = parse_quantity(v.substr(11), Dimension::fraction);
                if (unit_interval(eff)) throw DomainError("efficiency must lie in [0, 1]");
                loss = 1.0 - eff;
            } else {
                loss = parse_quantity(v, Dimension::fraction);
            }
            if (const char* p = unit_interval(loss)) throw DomainError(p);
            s.detection_budget.elements.push_back({label, loss});
        } catch (const DomainError& e) {
            r.fail("detection_budget", label, e.what());
        }
    }
}

void read_detector(Reader& r, Scenario& s) {
    const std::string sec = "detector";
    auto& d = s.detector;
    double shot = d.shot_noise_dbm;
    r.quantity(sec, "shot_noise", Dimension::level_dbm, shot);
    double hf_corner = d.hf_corner_hz;
    double lf_slope = d.lf_slope_db_per_decade;
    double hf_slope = d.hf_slope_db_per_decade;
    r.quantity(sec, "hf_corner", Dimension::frequency, hf_corner, positive);
    r.quantity(sec, "lf_slope", Dimension::slope, lf_slope, positive);
    r.quantity(sec, "hf_slope", Dimension::slope, hf_slope, positive);

    if (r.has(sec, "circuit_floor")) {
        for (const char* k : {"clearance", "design_frequency", "analyzer_floor_offset"}) {
            if (r.has(sec, k)) r.fail(sec, k, "not allowed together with circuit_floor");
            r.raw(sec, k);
        }
        d.shot_noise_dbm = shot;
        d.hf_corner_hz = hf_corner;
        d.lf_slope_db_per_decade = lf_slope;
        d.hf_slope_db_per_decade = hf_slope;
        r.quantity(sec, "circuit_floor", Dimension::level_dbm, d.circuit_floor_dbm);
        if (!r.has(sec, "lf_corner")) r.fail(sec, "lf_corner", "required with circuit_floor");
        r.quantity(sec, "lf_corner", Dimension::frequency, d.lf_corner_hz, positive);
        if (!r.has(sec, "analyzer_floor")) r.fail(sec, "analyzer_floor", "required with circuit_floor");
        r.quantity(sec, "analyzer_floor", Dimension::level_dbm, d.analyzer_floor_dbm);
    } else {
        for (const char* k : {"lf_corner", "analyzer_floor"}) {
            if (r.has(sec, k)) r.fail(sec, k, "only allowed together with circuit_floor");
            r.raw(sec, k);
        }
        double clearance = 25.0;
        double design = 11e6;
        double offset = 10.0;
        r.quantity(sec, "clearance", Dimension::level_db, clearance);
        r.quantity(sec, "design_frequency", Dimension::frequency, design, positive);
        r.quantity(sec, "analyzer_floor_offset", Dimension::level_db, offset);
        if (design > 0.0 && hf_corner > 0.0 && lf_slope > 0.0 && hf_slope > 0.0) {
            const double vis = d.visibility;
            const double qe = d.pd_quantum_efficiency;
            d = calibrate_detector(shot, clearance, design, hf_corner, lf_slope, hf_slope, offset);
            d.visibility = vis;
            d.pd_quantum_efficiency = qe;
        }
    }
    r.quantity(sec, "visibility", Dimension::fraction, d.visibility, unit_interval);
    r.quantity(sec, "pd_efficiency", Dimension::fraction, d.pd_quantum_efficiency, unit_interval);
}

void read_analyzer(Reader& r, Scenario& s) {
    const std::string sec = "analyzer";
    auto& a = s.analyzer;
    r.quantity(sec, "center", Dimension::frequency, a.center_frequency_hz, positive);
    r.quantity(sec, "span", Dimension::frequency, a.span_hz, non_negative);
    r.quantity(sec, "rbw", Dimension::frequency, a.rbw_hz, positive);
    r.quantity(sec, "vbw", Dimension::frequency, a.vbw_hz, positive);
    r.quantity(sec, "sweep_time", Dimension::time, a.sweep_time_s, positive);
    r.integer(sec, "points", 2, 10'000'000, a.points);
    r.seed(sec, "seed", a.seed);
    if (a.rbw_hz < a.vbw_hz) r.fail(sec, "vbw", "must not exceed rbw");
}

void read_lock(Reader& r, Scenario& s) {
    r.choice<LockMode>("lock", "mode", {{"locked", LockMode::locked}, {"scanned", LockMode::scanned}},
                       s.lock_mode);
    r.quantity("lock", "scan_rate", Dimension::frequency, s.scan_rate_hz, positive);
    r.quantity("lock", "scan_start", Dimension::angle, s.scan_start_rad);
}

void read_loop(Reader& r, LoopSpec& l) {
    const std::string sec = std::string("loop_") + loop_kind_name(l.kind);
    r.quantity(sec, "kp", Dimension::dimensionless, l.controller.kp);
    r.quantity(sec, "ki", Dimension::rate, l.controller.ki);
    r.quantity(sec, "kd", Dimension::time, l.controller.kd);
    r.quantity(sec, "derivative_corner", Dimension::frequency, l.controller.derivative_corner_hz,
               positive);
    r.quantity(sec, "fast_gain", Dimension::dimensionless, l.fast_gain);
    r.quantity(sec, "fast_corner", Dimension::frequency, l.fast_corner_hz, positive);
    r.quantity(sec, "slow_gain", Dimension::dimensionless, l.slow_gain);
    r.quantity(sec, "slow_corner", Dimension::frequency, l.slow_corner_hz, positive);
    if (r.has(sec, "delay") && r.has(sec, "crossover")) {
        r.fail(sec, "delay", "give either delay or crossover");
    }
    r.quantity(sec, "delay", Dimension::time, l.delay_s, non_negative);
    double crossover = 0.0;
    r.quantity(sec, "crossover", Dimension::frequency, crossover, positive);
    if (crossover > 0.0 && l.fast_corner_hz > 0.0) {
        l.delay_s = calibrated_delay(crossover, l.fast_corner_hz);
    }
    try {
        l.controller.validate();
    } catch (const DomainError& e) {
        r.fail(sec, "", e.what());
    }
}

void read_shift(Reader& r, ScenarioFile& f) {
    const std::string sec = "shift";
    if (const auto text = r.raw(sec, "candidates")) {
        std::vector<double> c;
        try {
            for (const auto& item : split(*text, ',')) {
                const double v = parse_quantity(item, Dimension::frequency);
                if (!(v > 0.0)) throw DomainError("candidates must be > 0");
                c.push_back(v);
            }
            if (!std::is_sorted(c.begin(), c.end())) throw DomainError("candidates must ascend");
            f.shift_candidates = std::move(c);
        } catch (const DomainError& e) {
            r.fail(sec, "candidates", e.what());
        }
    }
    r.quantity(sec, "min_gain_margin", Dimension::level_db, f.shift.min_gain_margin_db, non_negative);
    r.degrees(sec, "min_phase_margin", f.shift.min_phase_margin_deg);
    if (f.shift.min_phase_margin_deg < 0.0) r.fail(sec, "min_phase_margin", "must be >= 0");
    r.quantity(sec, "flat_band", Dimension::level_db, f.shift.flat_band_db, non_negative);
    r.quantity(sec, "flat_reference", Dimension::frequency, f.shift.flat_reference_hz, positive);
}

void read_grid(Reader& r, const std::string& sec, GridSettings& g) {
    r.quantity(sec, "f_min", Dimension::frequency, g.f_min, positive);
    r.quantity(sec, "f_max", Dimension::frequency, g.f_max, positive);
    r.integer(sec, "points_per_decade", 1, 100000, g.per_decade);
    if (!(g.f_max > g.f_min)) r.fail(sec, "f_max", "must exceed f_min");
}

void read_phase_noise(Reader& r, NoiseSpec& n) {
    const std::string sec = "phase_noise";
    auto& sp = n.spectrum;
    r.choice<SpectrumKind>(sec, "kind",
                           {{"white", SpectrumKind::white},
                            {"inverse_square", SpectrumKind::inverse_square},
                            {"table", SpectrumKind::table}},
                           sp.kind);
    r.quantity(sec, "amplitude", Dimension::psd, sp.amplitude, non_negative);
    if (const auto text = r.raw(sec, "table")) {
        try {
            sp.table.clear();
            for (const auto& row : split(*text, ',')) {
                const auto colon = row.find(':');
                if (colon == std::string::npos) throw DomainError("table rows are '<f> <unit>: <S> rad2/Hz'");
                sp.table.emplace_back(parse_quantity(row.substr(0, colon), Dimension::frequency),
                                      parse_quantity(row.substr(colon + 1), Dimension::psd));
            }
        } catch (const DomainError& e) {
            r.fail(sec, "table", e.what());
        }
    }
    r.quantity(sec, "f_min", Dimension::frequency, sp.f_min, positive);
    r.quantity(sec, "f_max", Dimension::frequency, sp.f_max, positive);
    if (r.has(sec, "calibrate_to")) {
        double target = 0.0;
        r.quantity(sec, "calibrate_to", Dimension::angle, target, [](double v) -> const char* {
            return v > 0.0 && v < std::numbers::pi / 2 ? nullptr : "must lie in (0, 90) deg";
        });
        n.calibrate_to_rad = target;
    }
    if (r.raw(sec, "calibrate").value_or("") == "none") n.calibrate_to_rad.reset();
    try {
        sp.validate();
    } catch (const DomainError& e) {
        r.fail(sec, "", e.what());
    }
}

void read_fit(Reader& r, FitSpec& f, const std::filesystem::path& base_dir) {
    const std::string sec = "fit";
    if (const auto text = r.raw(sec, "data")) {
        const std::filesystem::path p(trim(*text));
        f.data = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    }
    r.quantity(sec, "transmittance_min", Dimension::fraction, f.bounds.lower.transmittance, unit_interval);
    r.quantity(sec, "transmittance_max", Dimension::fraction, f.bounds.upper.transmittance, unit_interval);
    r.quantity(sec, "shg_efficiency_min", Dimension::shg_efficiency, f.bounds.lower.shg_efficiency, positive);
    r.quantity(sec, "shg_efficiency_max", Dimension::shg_efficiency, f.bounds.upper.shg_efficiency, positive);
    r.quantity(sec, "jitter_min", Dimension::angle, f.bounds.lower.jitter_rad, non_negative);
    r.quantity(sec, "jitter_max", Dimension::angle, f.bounds.upper.jitter_rad, non_negative);
    try {
        f.bounds.validate();
    } catch (const DomainError& e) {
        r.fail(sec, "", e.what());
    }
    const int given = r.has(sec, "initial_transmittance") + r.has(sec, "initial_shg_efficiency") +
                      r.has(sec, "initial_jitter");
    if (given != 0 && given != 3) {
        r.fail(sec, "initial_transmittance", "give all three initial_* values or none");
    }
    ModelParams init = f.initial.value_or(ModelParams{0.0, 0.0, 0.0});
    r.quantity(sec, "initial_transmittance", Dimension::fraction, init.transmittance, unit_interval);
    r.quantity(sec, "initial_shg_efficiency", Dimension::shg_efficiency, init.shg_efficiency, positive);
    r.quantity(sec, "initial_jitter", Dimension::angle, init.jitter_rad, non_negative);
    if (given == 3) f.initial = init;
}

void read_misc(Reader& r, ScenarioFile& f) {
    r.quantity("sweep", "f_min", Dimension::frequency, f.sweep.f_min_hz, positive);
    r.quantity("sweep", "f_max", Dimension::frequency, f.sweep.f_max_hz, positive);
    r.integer("sweep", "points", 1, 1'000'000, f.sweep.points);
    if (f.sweep.points > 1 && !(f.sweep.f_max_hz > f.sweep.f_min_hz)) {
        r.fail("sweep", "f_max", "must exceed f_min");
    }
    r.quantity("optimize", "grid_max", Dimension::power, f.optimize.grid_max_w, positive);
    r.quantity("optimize", "grid_step", Dimension::power, f.optimize.grid_step_w, positive);
    if (f.optimize.grid_step_w > f.optimize.grid_max_w) {
        r.fail("optimize", "grid_step", "must not exceed grid_max");
    }
    if (const auto dir = r.raw("output", "dir")) f.out_dir = trim(*dir);
}

std::string sha256_prefix(const std::string& text) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw NumericalError("SHA-256 digest failed");
    }
    std::string hex;
    for (unsigned int i = 0; i < 8 && i < len; ++i) hex += fmt::format("{:02x}", md[i]);
    return hex;
}

std::string q(double v, Dimension d) { return format_quantity(v, d); }

}  // namespace

LoopModel LoopSpec::build() const {
    LoopModel m;
    m.kind = kind;
    m.controller = controller;
    m.fast_plant = TransferFunction::low_pass(fast_corner_hz) * TransferFunction::constant(fast_gain);
    m.slow_plant = TransferFunction::low_pass(slow_corner_hz) * TransferFunction::constant(slow_gain);
    m.loop_delay = delay_s;
    return m;
}

LoopSpec default_loop_spec(LoopKind kind) {
    const LoopModel m = kind == LoopKind::opa_probe ? default_opa_probe_loop() : default_probe_lo_loop();
    LoopSpec s;
    s.kind = kind;
    s.controller = m.controller;
    s.fast_gain = 1.0;
    s.fast_corner_hz = 10e6;
    s.slow_gain = 10.0;
    s.slow_corner_hz = 100.0;
    s.delay_s = m.loop_delay;
    return s;
}

ScenarioFile default_scenario_file() {
    ScenarioFile f;
    f.phase_noise.calibrate_to_rad = PhaseJitter::from_degrees(0.8).radians();
    return f;
}

ScenarioFile parse_scenario(std::string_view text, const std::filesystem::path& base_dir) {
    std::istringstream in{std::string(text)};
    pt::ptree root;
    try {
        pt::read_ini(in, root);
    } catch (const pt::ini_parser_error& e) {
        throw ParseError(fmt::format("line {}: {}", e.line(), e.message()));
    }
    if (root.empty()) throw ParseError("scenario file is empty");

    ScenarioFile f = default_scenario_file();
    Reader r(root);
    read_opa(r, f.scenario);
    read_jitter(r, f.scenario);
    read_detection(r, f.scenario);
    read_detector(r, f.scenario);
    read_analyzer(r, f.scenario);
    read_lock(r, f.scenario);
    for (auto& loop : f.loops) read_loop(r, loop);
    read_shift(r, f);
    read_grid(r, "bode", f.bode_grid);
    f.shift.grid = f.bode_grid;
    read_phase_noise(r, f.phase_noise);
    read_fit(r, f.fit, base_dir);
    read_misc(r, f);
    r.finish();
    f.scenario.validate();
    return f;
}

ScenarioFile load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(fmt::format("cannot read scenario file '{}'", path.string()));
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_scenario(buf.str(), path.parent_path());
    } catch (const ParseError& e) {
        throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

std::string serialize_scenario(const ScenarioFile& f) {
    using D = Dimension;
    const auto& s = f.scenario;
    std::string out;
    auto line = [&out](std::string_view key, const std::string& value) {
        out += fmt::format("{} = {}\n", key, value);
    };

    out += "[opa]\n";
    line("shg_efficiency", q(s.opa.shg_efficiency, D::shg_efficiency));
    line("pump_power", q(s.opa.pump_power, D::power));
    line("waveguide_transmittance", q(s.opa.transmittance, D::fraction));

    out += "\n[jitter]\n";
    line("theta", q(s.jitter.radians(), D::angle));
    line("model", s.jitter_model == JitterModel::fixed_angle ? "fixed" : "gaussian");

    out += "\n[detection]\n";
    line("composition", s.composition == LossComposition::multiplicative ? "multiplicative" : "additive");
    line("fold_circuit_noise", s.fold_circuit_noise ? "true" : "false");

    out += "\n[detection_budget]\n";
    for (const auto& e : s.detection_budget.elements) line(e.label, q(e.loss, D::fraction));

    const auto& d = s.detector;
    out += "\n[detector]\n";
    line("shot_noise", q(d.shot_noise_dbm, D::level_dbm));
    line("circuit_floor", q(d.circuit_floor_dbm, D::level_dbm));
    line("lf_corner", q(d.lf_corner_hz, D::frequency));
    line("lf_slope", q(d.lf_slope_db_per_decade, D::slope));
    line("hf_corner", q(d.hf_corner_hz, D::frequency));
    line("hf_slope", q(d.hf_slope_db_per_decade, D::slope));
    line("analyzer_floor", q(d.analyzer_floor_dbm, D::level_dbm));
    line("visibility", q(d.visibility, D::fraction));
    line("pd_efficiency", q(d.pd_quantum_efficiency, D::fraction));

    const auto& a = s.analyzer;
    out += "\n[analyzer]\n";
    line("center", q(a.center_frequency_hz, D::frequency));
    line("span", q(a.span_hz, D::frequency));
    line("rbw", q(a.rbw_hz, D::frequency));
    line("vbw", q(a.vbw_hz, D::frequency));
    line("sweep_time", q(a.sweep_time_s, D::time));
    line("points", fmt::format("{}", a.points));
    line("seed", fmt::format("{}", a.seed));

    out += "\n[lock]\n";
    line("mode", s.lock_mode == LockMode::locked ? "locked" : "scanned");
    line("scan_rate", q(s.scan_rate_hz, D::frequency));
    line("scan_start", q(s.scan_start_rad, D::angle));

    for (const auto& l : f.loops) {
        out += fmt::format("\n[loop_{}]\n", loop_kind_name(l.kind));
        line("kp", q(l.controller.kp, D::dimensionless));
        line("ki", q(l.controller.ki, D::rate));
        line("kd", q(l.controller.kd, D::time));
        line("derivative_corner", q(l.controller.derivative_corner_hz, D::frequency));
        line("fast_gain", q(l.fast_gain, D::dimensionless));
        line("fast_corner", q(l.fast_corner_hz, D::frequency));
        line("slow_gain", q(l.slow_gain, D::dimensionless));
        line("slow_corner", q(l.slow_corner_hz, D::frequency));
        line("delay", q(l.delay_s, D::time));
    }

    out += "\n[shift]\n";
    std::string cands;
    for (double c : f.shift_candidates) cands += (cands.empty() ? "" : ", ") + q(c, D::frequency);
    line("candidates", cands);
    line("min_gain_margin", q(f.shift.min_gain_margin_db, D::level_db));
    line("min_phase_margin", fmt::format("{} deg", f.shift.min_phase_margin_deg));
    line("flat_band", q(f.shift.flat_band_db, D::level_db));
    line("flat_reference", q(f.shift.flat_reference_hz, D::frequency));

    out += "\n[bode]\n";
    line("f_min", q(f.bode_grid.f_min, D::frequency));
    line("f_max", q(f.bode_grid.f_max, D::frequency));
    line("points_per_decade", fmt::format("{}", f.bode_grid.per_decade));

    const auto& sp = f.phase_noise.spectrum;
    out += "\n[phase_noise]\n";
    line("kind", sp.kind == SpectrumKind::white            ? "white"
                 : sp.kind == SpectrumKind::inverse_square ? "inverse_square"
                                                           : "table");
    line("amplitude", q(sp.amplitude, D::psd));
    if (!sp.table.empty()) {
        std::string rows;
        for (const auto& [fr, dens] : sp.table) {
            rows += (rows.empty() ? "" : ", ") + q(fr, D::frequency) + ": " + q(dens, D::psd);
        }
        line("table", rows);
    }
    line("f_min", q(sp.f_min, D::frequency));
    line("f_max", q(sp.f_max, D::frequency));
    if (f.phase_noise.calibrate_to_rad) {
        line("calibrate_to", q(*f.phase_noise.calibrate_to_rad, D::angle));
    } else {
        line("calibrate", "none");
    }

    out += "\n[sweep]\n";
    line("f_min", q(f.sweep.f_min_hz, D::frequency));
    line("f_max", q(f.sweep.f_max_hz, D::frequency));
    line("points", fmt::format("{}", f.sweep.points));

    out += "\n[fit]\n";
    if (f.fit.data) line("data", f.fit.data->string());
    line("transmittance_min", q(f.fit.bounds.lower.transmittance, D::fraction));
    line("transmittance_max", q(f.fit.bounds.upper.transmittance, D::fraction));
    line("shg_efficiency_min", q(f.fit.bounds.lower.shg_efficiency, D::shg_efficiency));
    line("shg_efficiency_max", q(f.fit.bounds.upper.shg_efficiency, D::shg_efficiency));
    line("jitter_min", q(f.fit.bounds.lower.jitter_rad, D::angle));
    line("jitter_max", q(f.fit.bounds.upper.jitter_rad, D::angle));
    if (f.fit.initial) {
        line("initial_transmittance", q(f.fit.initial->transmittance, D::fraction));
        line("initial_shg_efficiency", q(f.fit.initial->shg_efficiency, D::shg_efficiency));
        line("initial_jitter", q(f.fit.initial->jitter_rad, D::angle));
    }

    out += "\n[optimize]\n";
    line("grid_max", q(f.optimize.grid_max_w, D::power));
    line("grid_step", q(f.optimize.grid_step_w, D::power));

    out += "\n[output]\n";
    line("dir", f.out_dir.string());
    return out;
}

std::string scenario_file_digest(const ScenarioFile& f) { return sha256_prefix(serialize_scenario(f)); }

std::vector<PumpSweepPoint> parse_pump_sweep_csv(std::string_view text) {
    std::vector<PumpSweepPoint> out;
    bool header_seen = false;
    int line_no = 0;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto cols = split(t, ',');
        if (!header_seen) {
            if (cols != std::vector<std::string>{"pump_w", "squeezing_db", "antisqueezing_db"}) {
                throw ParseError(fmt::format(
                    "line {}: expected header 'pump_w,squeezing_db,antisqueezing_db'", line_no));
            }
            header_seen = true;
            continue;
        }
        if (cols.size() != 3) {
            throw ParseError(fmt::format("line {}: expected 3 columns, got {}", line_no, cols.size()));
        }
        std::array<double, 3> v{};
        for (std::size_t i = 0; i < 3; ++i) {
            const auto& c = cols[i];
            const auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), v[i]);
            if (ec != std::errc() || ptr != c.data() + c.size()) {
                throw ParseError(fmt::format("line {}: '{}' is not a number", line_no, c));
            }
        }
        out.push_back({v[0], v[1], v[2]});
    }
    if (!header_seen) throw ParseError("pump-sweep CSV is empty");
    return out;
}

std::vector<PumpSweepPoint> load_pump_sweep_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(fmt::format("cannot read pump-sweep data '{}'", path.string()));
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_pump_sweep_csv(buf.str());
    } catch (const ParseError& e) {
        throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

std::string pump_sweep_csv(std::span<const PumpSweepPoint> points, std::string_view comment) {
    std::string out;
    if (!comment.empty()) out += fmt::format("# {}\n", comment);
    out += "pump_w,squeezing_db,antisqueezing_db\n";
    for (const auto& p : points) {
        out += fmt::format("{},{},{}\n", p.pump_power, p.squeezing_db, p.anti_squeezing_db);
    }
    return out;
}

std::string trace_csv(const Trace& t) {
    std::string out = fmt::format("# digest={} seed={} label={} axis={}\naxis,value_dbm\n", t.digest,
                                  t.seed, t.label,
                                  t.axis == TraceAxis::time_s ? "time_s" : "frequency_hz");
    for (std::size_t i = 0; i < t.values_dbm.size(); ++i) {
        out += fmt::format("{},{}\n", t.axis_values[i], t.values_dbm[i]);
    }
    return out;
}

std::string bode_csv(std::span<const BodePoint> points) {
    std::string out = "frequency_hz,gain_db,phase_deg\n";
    for (const auto& p : points) out += fmt::format("{},{},{}\n", p.frequency_hz, p.gain_db, p.phase_deg);
    return out;
}

}  // namespace sqz
