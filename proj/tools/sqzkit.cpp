// sqzkit: command-line front end for the squeezed-light toolkit.
//
//   sqzkit <command> <scenario> [--seed N] [--out-dir DIR] [--format kv|csv] [--quiet] [--data CSV]
//
// Exit codes: 0 success, 2 validation (including usage errors), 3 numerical failure,
// 4 infeasible.

#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "sqz/commands.hpp"
#include "sqz/error.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Squeezed-light detection toolkit", "sqzkit"};
    app.set_version_flag("--version", sqz::kToolVersion);
    app.require_subcommand(1, 1);

    std::string scenario_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> data;
    sqz::OutputFormat format = sqz::OutputFormat::kv;
    bool quiet = false;

    const std::map<std::string, sqz::OutputFormat> formats{{"kv", sqz::OutputFormat::kv},
                                                           {"csv", sqz::OutputFormat::csv}};
    const std::map<std::string, std::string> about{
        {"simulate", "Zero-span trace at the analyzer center frequency"},
        {"sweep", "Noise levels across the analyzer range and the model pump curve"},
        {"bode", "Bode data of both phase locks"},
        {"margins", "Gain and phase margins and residual phase jitter"},
        {"select-freq", "Pick the AOM shift frequency from the candidate list"},
        {"fit", "Fit transmittance, SHG efficiency and jitter to a pump sweep"},
        {"optimize", "Pump power with the strongest squeezing"},
        {"budget", "Loss budget of the detection chain"},
        {"report", "Budget, simulate, optimize, select-freq, margins and fit in one run"},
    };
    for (const auto& name : sqz::command_names()) {
        auto* sub = app.add_subcommand(name, about.at(name));
        sub->add_option("scenario", scenario_path, "Scenario file")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "Override the analyzer seed");
        sub->add_option("--out-dir", out_dir, "Directory for CSV and report files");
        sub->add_option("--format", format, "Report text format")
            ->transform(CLI::CheckedTransformer(formats, CLI::ignore_case));
        sub->add_flag("--quiet", quiet, "Do not print the report");
        if (name == "fit" || name == "report") {
            sub->add_option("--data", data, "Pump-sweep CSV (overrides [fit] data)");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << fmt::format("error[validation]: {}\n", e.what());
        return static_cast<int>(sqz::ErrorCategory::validation);
    }
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        const auto scenario = sqz::load_scenario(scenario_path);
        sqz::RunFlags flags;
        flags.seed = seed;
        if (out_dir) flags.out_dir = *out_dir;
        flags.format = format;
        flags.quiet = quiet;
        if (data) flags.data = *data;

        const auto report = sqz::run_command(command, scenario, flags);
        std::filesystem::path dir = flags.out_dir.value_or(scenario.out_dir);
        if (dir.is_relative() && !flags.out_dir) {
            dir = std::filesystem::path(scenario_path).parent_path() / dir;
        }
        sqz::write_artifacts(report, dir, format);
        if (!quiet) std::cout << report.to_text(format);
        return 0;
    } catch (const sqz::Error& e) {
        std::cerr << fmt::format("error[{}]: {}\n", sqz::category_name(e.category()), e.what());
        return static_cast<int>(e.category());
    } catch (const std::exception& e) {
        std::cerr << fmt::format("error[numerical]: {}\n", e.what());
        return static_cast<int>(sqz::ErrorCategory::numerical);
    }
}
