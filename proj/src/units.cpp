#include "sqz/units.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <numbers>
#include <utility>

#include <fmt/format.h>

#include "sqz/error.hpp"

namespace sqz {

namespace {

struct UnitEntry {
    std::string_view suffix;
    double scale;
};

struct UnitTable {
    Dimension dim;
    std::string_view canonical;
    std::array<UnitEntry, 5> units;
};

constexpr double kDeg = std::numbers::pi / 180.0;

// First entry of each row is the canonical spelling used by format_quantity.
constexpr std::array<UnitTable, 11> kTables{{
    {Dimension::frequency, "Hz", {{{"Hz", 1.0}, {"kHz", 1e3}, {"MHz", 1e6}, {"GHz", 1e9}, {}}}},
    {Dimension::time, "s", {{{"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"ns", 1e-9}, {"ps", 1e-12}}}},
    {Dimension::power, "W", {{{"W", 1.0}, {"mW", 1e-3}, {"uW", 1e-6}, {}, {}}}},
    {Dimension::angle, "rad", {{{"rad", 1.0}, {"deg", kDeg}, {"mrad", 1e-3}, {}, {}}}},
    {Dimension::fraction, "fraction", {{{"fraction", 1.0}, {"%", 1e-2}, {"percent", 1e-2}, {}, {}}}},
    {Dimension::shg_efficiency, "1/W", {{{"1/W", 1.0}, {"/W", 1.0}, {"%/W", 1e-2}, {}, {}}}},
    {Dimension::rate, "1/s", {{{"1/s", 1.0}, {"/s", 1.0}, {}, {}, {}}}},
    {Dimension::level_dbm, "dBm", {{{"dBm", 1.0}, {}, {}, {}, {}}}},
    {Dimension::level_db, "dB", {{{"dB", 1.0}, {}, {}, {}, {}}}},
    {Dimension::slope, "dB/decade", {{{"dB/decade", 1.0}, {"dB/dec", 1.0}, {}, {}, {}}}},
    {Dimension::psd, "rad2/Hz", {{{"rad2/Hz", 1.0}, {}, {}, {}, {}}}},
}};

const UnitTable* table_for(Dimension dim) {
    for (const auto& t : kTables) {
        if (t.dim == dim) return &t;
    }
    return nullptr;
}

std::string accepted_units(const UnitTable& t) {
    std::string out;
    for (const auto& u : t.units) {
        if (u.suffix.empty()) continue;
        if (!out.empty()) out += ", ";
        out += u.suffix;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

const char* dimension_name(Dimension d) {
    switch (d) {
        case Dimension::frequency: return "frequency";
        case Dimension::time: return "time";
        case Dimension::power: return "power";
        case Dimension::angle: return "angle";
        case Dimension::fraction: return "fraction";
        case Dimension::shg_efficiency: return "SHG efficiency";
        case Dimension::rate: return "rate";
        case Dimension::level_dbm: return "absolute level";
        case Dimension::level_db: return "relative level";
        case Dimension::slope: return "slope";
        case Dimension::psd: return "phase-noise density";
        case Dimension::dimensionless: return "dimensionless number";
    }
    return "quantity";
}

double parse_quantity(std::string_view text, Dimension dim) {
    const std::string_view t = trim(text);
    if (t.empty()) throw DomainError("empty value");
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc() || !std::isfinite(value)) {
        throw DomainError(fmt::format("'{}' does not start with a finite number", t));
    }
    const std::string_view unit = trim(std::string_view(ptr, static_cast<std::size_t>(t.data() + t.size() - ptr)));

    if (dim == Dimension::dimensionless) {
        if (!unit.empty()) throw DomainError(fmt::format("'{}' takes a bare number, got unit '{}'", t, unit));
        return value;
    }
    const UnitTable* table = table_for(dim);
    if (unit.empty()) {
        throw DomainError(fmt::format("'{}' is missing a {} unit (one of: {})", t,
                                      dimension_name(dim), accepted_units(*table)));
    }
    for (const auto& u : table->units) {
        if (!u.suffix.empty() && u.suffix == unit) return value * u.scale;
    }
    throw DomainError(fmt::format("unit '{}' is not a {} unit (one of: {})", unit,
                                  dimension_name(dim), accepted_units(*table)));
}

std::string format_quantity(double canonical_value, Dimension dim) {
    if (dim == Dimension::dimensionless) return fmt::format("{}", canonical_value);
    return fmt::format("{} {}", canonical_value, table_for(dim)->canonical);
}

}  // namespace sqz
