#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace densekit {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_float(float value);

/// Appends format_float(value) to `out` without an intermediate string.
void append_float(std::string& out, float value);

/// Parses a decimal number rounded to the nearest 32-bit float. Rejects
/// trailing garbage and non-finite results.
std::optional<float> parse_float(std::string_view text);

}  // namespace densekit
