#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace densekit {

enum class ErrorCode {
    invalid_argument,    // bad parameter or configuration value
    dimension_mismatch,  // vector length disagrees with its collection
    conflict,            // duplicate id
    empty_index,
    corrupt_index,       // index image failed validation
    parse,               // malformed input record or line
    io,
    network,
    frozen,              // mutation attempted on a frozen index (or save on an unfrozen one)
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it onto an exit status.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace densekit
