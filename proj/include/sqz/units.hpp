#pragma once

#include <string>
#include <string_view>

namespace sqz {

/// Physical dimension of a configuration quantity. Every dimensioned value must
/// carry an explicit unit suffix; only `dimensionless` accepts a bare number.
enum class Dimension {
    frequency,       // Hz kHz MHz GHz -> Hz
    time,            // s ms us ns ps -> s
    power,           // W mW uW -> W
    angle,           // deg rad mrad -> rad
    fraction,        // % percent fraction -> [0, 1] scale
    shg_efficiency,  // %/W 1/W /W -> 1/W
    rate,            // 1/s /s -> 1/s
    level_dbm,       // dBm
    level_db,        // dB
    slope,           // dB/decade dB/dec
    psd,             // rad2/Hz
    dimensionless,
};

const char* dimension_name(Dimension d);

/// Parses "<number> <unit>" into the canonical unit of `dim`. Throws DomainError
/// with a message naming the accepted units.
double parse_quantity(std::string_view text, Dimension dim);

/// Canonical rendering that parses back to the identical double.
std::string format_quantity(double canonical_value, Dimension dim);

}  // namespace sqz
