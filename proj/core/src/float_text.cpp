#include "densekit/float_text.hpp"

#include <charconv>
#include <cmath>

namespace densekit {

void append_float(std::string& out, float value) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    out.append(buf, end);
}

std::string format_float(float value) {
    std::string out;
    append_float(out, value);
    return out;
}

std::optional<float> parse_float(std::string_view text) {
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    float value = 0.0f;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
        return std::nullopt;
    }
    if (!std::isfinite(value)) return std::nullopt;
    return value;
}

}  // namespace densekit
