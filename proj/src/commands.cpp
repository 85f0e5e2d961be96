#include "sqz/commands.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "sqz/error.hpp"

namespace sqz {

namespace {

std::string num(double v) { return fmt::format("{:.6g}", v); }
std::string db(double v) { return fmt::format("{:.4f}", v); }

class Builder {
public:
    Builder(RunReport& r, std::string prefix = {}) : r_(r), prefix_(std::move(prefix)) {}

    void put(std::string_view key, std::string value) {
        r_.values.emplace_back(prefix_ + std::string(key), std::move(value));
    }
    void warn(std::string w) { r_.warnings.push_back(std::move(w)); }
    void artifact(std::string name, std::string content) {
        r_.artifacts.emplace_back(std::move(name), std::move(content));
    }

private:
    RunReport& r_;
    std::string prefix_;
};

struct Context {
    ScenarioFile file;
    std::vector<LoopModel> loops;
    std::optional<std::filesystem::path> data;
};

Context make_context(const ScenarioFile& f, const RunFlags& flags) {
    Context c{f, {}, flags.data ? flags.data : f.fit.data};
    if (flags.seed) c.file.scenario.analyzer.seed = *flags.seed;
    for (const auto& spec : c.file.loops) c.loops.push_back(spec.build());
    return c;
}

const LoopModel& loop_of(const Context& c, LoopKind kind) {
    for (const auto& l : c.loops) {
        if (l.kind == kind) return l;
    }
    throw DomainError(fmt::format("scenario has no {} loop", loop_kind_name(kind)));
}

std::string optional_num(const std::optional<double>& v) { return v ? num(*v) : "none"; }

void cmd_simulate(const Context& c, Builder& b) {
    const Scenario& s = c.file.scenario;
    const double f = s.analyzer.center_frequency_hz;
    const auto model = measured_noise_ratio(s, f);
    const Trace trace = simulate_zero_span(s);
    const Trace shot = simulate_shot_reference(s);

    b.put("trace_digest", trace.digest);
    b.put("lock_mode", s.lock_mode == LockMode::locked ? "locked" : "scanned");
    b.put("center_hz", num(f));
    b.put("averages_per_point", fmt::format("{}", s.analyzer.averages()));
    b.put("total_transmittance", num(s.total_transmittance()));
    b.put("clearance_db", db(s.detector.clearance_db(f)));
    b.put("model_squeezing_db", db(to_db(model.locked).value()));
    b.put("model_antisqueezing_db", db(to_db(model.anti_locked).value()));
    b.put("shot_reference_mean_dbm", db(shot.mean_dbm()));
    if (s.lock_mode == LockMode::locked) {
        b.put("trace_mean_db", db(trace.mean_dbm() - s.detector.shot_noise_dbm));
        b.put("trace_mean_vs_reference_db", db(trace.mean_dbm() - shot.mean_dbm()));
    } else {
        const auto env = scan_envelope(trace, s);
        b.put("envelope_antisqueezing_db", db(env.anti_db));
        b.put("envelope_squeezing_db", db(env.sq_db));
        b.put("raw_max_db", db(env.raw_max_db));
        b.put("raw_min_db", db(env.raw_min_db));
    }
    b.artifact("zero_span.csv", trace_csv(trace));
    b.artifact("shot_reference.csv", trace_csv(shot));
}

std::vector<double> pump_grid(double p_max, int points) {
    std::vector<double> p;
    for (int i = 1; i <= points; ++i) p.push_back(p_max * i / points);
    return p;
}

ModelParams scenario_params(const Scenario& s) {
    return {s.total_transmittance(), s.opa.shg_efficiency, s.jitter.radians()};
}

void cmd_sweep(const Context& c, Builder& b) {
    const Scenario& s = c.file.scenario;
    const auto& sp = c.file.sweep;
    const auto sweep = sweep_frequency(s, sp.f_min_hz, sp.f_max_hz, sp.points);
    const double best = select_measurement_frequency(sweep);
    b.put("points", fmt::format("{}", sp.points));
    b.put("best_frequency_hz", num(best));
    b.put("best_clearance_db", db(s.detector.clearance_db(best)));
    b.put("center_clearance_db", db(s.detector.clearance_db(s.analyzer.center_frequency_hz)));
    b.artifact("sweep_squeezed.csv", trace_csv(sweep.squeezed));
    b.artifact("sweep_shot.csv", trace_csv(sweep.shot));
    b.artifact("sweep_circuit.csv", trace_csv(sweep.circuit));
    b.artifact("sweep_floor.csv", trace_csv(sweep.floor));

    const auto powers = pump_grid(c.file.optimize.grid_max_w, 100);
    b.artifact("pump_sweep.csv",
               pump_sweep_csv(synthesize_pump_sweep(scenario_params(s), powers),
                              fmt::format("model digest={}", scenario_digest(s))));
}

void cmd_bode(const Context& c, Builder& b) {
    const auto freqs = c.file.bode_grid.frequencies();
    for (const auto& loop : c.loops) {
        const std::string name = loop_kind_name(loop.kind);
        b.artifact(fmt::format("bode_{}.csv", name), bode_csv(bode(loop, freqs)));
        const auto open = bode([&loop](double f) { return loop.open_loop(f); }, freqs);
        b.artifact(fmt::format("bode_{}_open_loop.csv", name), bode_csv(open));
        const auto xover =
            phase_crossover([&loop](double f) { return loop.system_response(f); }, c.file.bode_grid);
        b.put(name + ".system_crossover_hz", optional_num(xover));
        if (!xover) b.warn(fmt::format("{}: no -180 deg crossover inside the Bode range", name));
    }
}

void cmd_margins(const Context& c, Builder& b) {
    for (const auto& loop : c.loops) {
        const std::string name = loop_kind_name(loop.kind);
        const auto m = stability_margins(loop, c.file.bode_grid);
        b.put(name + ".phase_crossover_hz", optional_num(m.phase_crossover_hz));
        b.put(name + ".gain_margin_db", optional_num(m.gain_margin_db));
        b.put(name + ".gain_crossover_hz", optional_num(m.gain_crossover_hz));
        b.put(name + ".phase_margin_deg", optional_num(m.phase_margin_deg));
        b.put(name + ".stable", m.stable() ? "true" : "false");
        if (!m.stable()) b.warn(fmt::format("{} loop is unstable", name));
    }

    PhaseNoiseSpectrum noise = c.file.phase_noise.spectrum;
    if (c.file.phase_noise.calibrate_to_rad) {
        noise = calibrate_noise_amplitude(noise, loop_of(c, LoopKind::opa_probe),
                                          PhaseJitter::from_radians(*c.file.phase_noise.calibrate_to_rad));
    }
    b.put("phase_noise.amplitude_rad2_hz", num(noise.amplitude));
    b.put("phase_noise.free_running_deg", num(free_running_jitter(noise).degrees()));
    for (const auto& loop : c.loops) {
        const std::string name = loop_kind_name(loop.kind);
        if (!stability_margins(loop, c.file.bode_grid).stable()) continue;
        b.put(name + ".residual_jitter_deg", num(residual_jitter(noise, loop, c.file.bode_grid).degrees()));
    }
}

void cmd_select_freq(const Context& c, Builder& b) {
    for (double shift : c.file.shift_candidates) {
        for (const auto& loop : c.loops) {
            const auto a = assess_shift(loop, shift, c.file.shift);
            const std::string key = fmt::format("shift_{:.0f}_hz.{}", shift, loop_kind_name(loop.kind));
            b.put(key + ".demod_hz", num(a.demod_hz));
            b.put(key + ".gain_deviation_db", db(a.gain_deviation_db));
            b.put(key + ".phase_headroom_deg", num(a.phase_headroom_deg));
            b.put(key + ".gain_headroom_db", db(a.gain_headroom_db));
            b.put(key + ".feasible", a.feasible ? "true" : "false");
        }
    }
    const double shift = select_shift_frequency(c.loops, c.file.shift_candidates, c.file.shift);
    b.put("selected_shift_hz", num(shift));
    for (const auto& loop : c.loops) {
        b.put(fmt::format("{}.demod_hz", loop_kind_name(loop.kind)), num(demod_frequency(shift, loop.kind)));
    }
}

void cmd_fit(const Context& c, Builder& b) {
    if (!c.data) throw DomainError("fit needs pump-sweep data: set [fit] data or pass --data");
    const auto data = load_pump_sweep_csv(*c.data);
    const auto r = fit_pump_sweep(data, c.file.fit.initial, c.file.fit.bounds);
    b.put("data_points", fmt::format("{}", data.size()));
    b.put("transmittance", num(r.params.transmittance));
    b.put("shg_efficiency_per_w", num(r.params.shg_efficiency));
    b.put("jitter_deg", num(PhaseJitter::from_radians(r.params.jitter_rad).degrees()));
    const char* names[] = {"transmittance", "shg_efficiency_per_w", "jitter_rad"};
    for (int i = 0; i < 3; ++i) {
        const double var = r.covariance[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)];
        b.put(fmt::format("{}_stddev", names[i]), std::isfinite(var) ? num(std::sqrt(std::max(var, 0.0))) : "nan");
    }
    b.put("residual_db2", num(r.residual));
    b.put("iterations", fmt::format("{}", r.iterations));
    b.put("converged", r.converged ? "true" : "false");
    if (!r.converged) b.warn(fmt::format("fit did not converge: {}", r.message));

    double p_max = 0.0;
    for (const auto& p : data) p_max = std::max(p_max, p.pump_power);
    b.artifact("fit_curve.csv", pump_sweep_csv(synthesize_pump_sweep(r.params, pump_grid(p_max, 100)),
                                               fmt::format("fit of {}", c.data->filename().string())));
}

void cmd_optimize(const Context& c, Builder& b) {
    const Scenario& s = c.file.scenario;
    const double eta = s.total_transmittance();
    const double det = cascade_losses(s.detection_budget, s.composition);
    const double alpha = s.opa.shg_efficiency;
    const auto opt = optimal_pump_power(eta, alpha, s.jitter, det);
    const auto& o = c.file.optimize;
    if (opt.pump_power > o.grid_max_w) {
        b.warn(fmt::format("optimum {} W lies beyond the grid range {} W", num(opt.pump_power),
                           num(o.grid_max_w)));
    }
    const double grid = grid_search_optimum(eta, alpha, s.jitter, o.grid_max_w, o.grid_step_w);
    const auto here = operating_point(eta, alpha, s.jitter, s.opa.pump_power, det);

    b.put("optimal_pump_w", num(opt.pump_power));
    b.put("grid_optimum_w", num(grid));
    b.put("grid_agreement_mw", num(1e3 * std::abs(grid - opt.pump_power)));
    b.put("optimal_squeezing_db", db(opt.squeezing_db));
    b.put("optimal_antisqueezing_db", db(opt.anti_squeezing_db));
    b.put("optimal_source_squeezing_db", db(opt.source_squeezing_db));
    b.put("scenario_pump_w", num(s.opa.pump_power));
    b.put("scenario_squeezing_db", db(here.squeezing_db));
    b.put("scenario_source_squeezing_db", db(here.source_squeezing_db));
    b.put("squeezing_gap_db", db(here.squeezing_db - opt.squeezing_db));

    const auto powers = pump_grid(o.grid_max_w, 200);
    b.artifact("pump_curve.csv",
               pump_sweep_csv(synthesize_pump_sweep(scenario_params(s), powers),
                              fmt::format("model digest={}", scenario_digest(s))));
}

void cmd_budget(const Context& c, Builder& b) {
    const Scenario& s = c.file.scenario;
    LossBudget budget;
    budget.elements.push_back({"waveguide", 1.0 - s.opa.transmittance});
    for (const auto& e : s.detection_budget.elements) budget.elements.push_back(e);
    const double f = s.analyzer.center_frequency_hz;
    const auto r = loss_budget_report(budget, s.detector, f);
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        b.put(fmt::format("row{}.label", i), r.rows[i].label);
        b.put(fmt::format("row{}.loss_percent", i), num(100.0 * r.rows[i].loss));
        b.put(fmt::format("row{}.cumulative_transmittance", i), num(r.rows[i].cumulative_transmittance));
    }
    b.put("circuit_equivalent_loss_percent", num(100.0 * r.circuit_equivalent_loss.value_or(0.0)));
    b.put("additive_loss_percent", num(100.0 * r.additive_loss));
    b.put("multiplicative_transmittance", num(r.multiplicative_transmittance));
    b.put("multiplicative_loss_percent", num(100.0 * (1.0 - r.multiplicative_transmittance)));
    b.put("discrepancy_pp", num(r.discrepancy_pp));
    for (const auto& w : r.warnings) b.warn(w);
}

using Handler = std::function<void(const Context&, Builder&)>;

const std::map<std::string, Handler, std::less<>>& handlers() {
    static const std::map<std::string, Handler, std::less<>> h{
        {"simulate", cmd_simulate}, {"sweep", cmd_sweep},       {"bode", cmd_bode},
        {"margins", cmd_margins},   {"select-freq", cmd_select_freq}, {"fit", cmd_fit},
        {"optimize", cmd_optimize}, {"budget", cmd_budget},
    };
    return h;
}

void cmd_report(const Context& c, RunReport& r) {
    for (const char* name : {"budget", "simulate", "optimize", "select-freq", "margins", "fit"}) {
        if (std::string_view(name) == "fit" && !c.data) continue;
        Builder b(r, std::string(name) + ".");
        handlers().find(name)->second(c, b);
    }
}

nlohmann::ordered_json typed(const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    long long i = 0;
    if (const auto [p, e] = std::from_chars(v.data(), v.data() + v.size(), i);
        e == std::errc() && p == v.data() + v.size()) {
        return i;
    }
    double d = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
    if (ec == std::errc() && ptr == v.data() + v.size()) return d;
    return v;
}

void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    out << content;
    if (!out) throw DomainError(fmt::format("cannot write '{}'", p.string()));
}

}  // namespace

const std::string* RunReport::find(std::string_view key) const {
    for (const auto& [k, v] : values) {
        if (k == key) return &v;
    }
    return nullptr;
}

std::string RunReport::to_json() const {
    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    j["tool"] = "sqzkit";
    j["version"] = version;
    j["command"] = command;
    j["scenario_digest"] = digest;
    j["seed"] = seed;
    auto& res = j["results"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : values) res[k] = typed(v);
    j["warnings"] = warnings;
    auto& arts = j["artifacts"] = nlohmann::ordered_json::array();
    for (const auto& a : artifacts) arts.push_back(a.first);
    return j.dump(2) + "\n";
}

std::string RunReport::to_text(OutputFormat format) const {
    std::string out;
    if (format == OutputFormat::csv) {
        out = "key,value\n";
        auto row = [&out](std::string_view k, std::string_view v) { out += fmt::format("{},{}\n", k, v); };
        row("command", command);
        row("version", version);
        row("scenario_digest", digest);
        row("seed", std::to_string(seed));
        for (const auto& [k, v] : values) row(k, v.find(',') == std::string::npos ? v : "\"" + v + "\"");
        for (const auto& w : warnings) row("warning", "\"" + w + "\"");
        return out;
    }
    out += fmt::format("# sqzkit {} {}\n", version, command);
    out += fmt::format("scenario_digest = {}\nseed = {}\n", digest, seed);
    for (const auto& [k, v] : values) out += fmt::format("{} = {}\n", k, v);
    for (const auto& w : warnings) out += fmt::format("warning: {}\n", w);
    return out;
}

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"simulate", "sweep",    "bode",   "margins", "select-freq",
                                                "fit",      "optimize", "budget", "report"};
    return names;
}

RunReport run_command(std::string_view command, const ScenarioFile& scenario, const RunFlags& flags) {
    const Context c = make_context(scenario, flags);
    RunReport r;
    r.command = std::string(command);
    r.digest = scenario_file_digest(c.file);
    r.seed = c.file.scenario.analyzer.seed;
    if (command == "report") {
        cmd_report(c, r);
    } else {
        const auto it = handlers().find(command);
        if (it == handlers().end()) throw DomainError(fmt::format("unknown command '{}'", command));
        Builder b(r);
        it->second(c, b);
    }
    return r;
}

std::vector<std::filesystem::path> write_artifacts(const RunReport& report,
                                                   const std::filesystem::path& dir,
                                                   OutputFormat format) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DomainError(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
    std::vector<std::filesystem::path> written;
    for (const auto& [name, content] : report.artifacts) {
        written.push_back(dir / name);
        write_file(written.back(), content);
    }
    const std::string stem = "report_" + report.command;
    written.push_back(dir / (stem + ".json"));
    write_file(written.back(), report.to_json());
    written.push_back(dir / (stem + ".txt"));
    write_file(written.back(), report.to_text(format));
    return written;
}

}  // namespace sqz
