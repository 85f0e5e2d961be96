#pragma once

// Subcommands of the sqzkit tool. Each command reads a ScenarioFile, writes its
// CSV artifacts under the output directory and returns a RunReport.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sqz/scenario_io.hpp"

namespace sqz {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kReportSchemaVersion = 1;

enum class OutputFormat { kv, csv };

struct RunFlags {
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out_dir;
    OutputFormat format = OutputFormat::kv;
    bool quiet = false;
    /// Overrides the fit data path of the scenario.
    std::optional<std::filesystem::path> data;
};

struct RunReport {
    std::string command;
    std::string version = kToolVersion;
    std::string digest;
    std::uint64_t seed = 0;
    /// Ordered results; values are already formatted.
    std::vector<std::pair<std::string, std::string>> values;
    std::vector<std::string> warnings;
    /// Artifact file name and its content.
    std::vector<std::pair<std::string, std::string>> artifacts;

    const std::string* find(std::string_view key) const;

    std::string to_json() const;
    /// `key = value` lines, or a `key,value` table for OutputFormat::csv.
    std::string to_text(OutputFormat format = OutputFormat::kv) const;
};

const std::vector<std::string>& command_names();

/// Runs one command. Throws sqz::Error subclasses; callers map them to exit codes.
RunReport run_command(std::string_view command, const ScenarioFile& scenario, const RunFlags& flags);

/// Writes every artifact plus report_<command>.json/.txt into `dir`; returns the paths.
std::vector<std::filesystem::path> write_artifacts(const RunReport& report,
                                                   const std::filesystem::path& dir,
                                                   OutputFormat format);

}  // namespace sqz
