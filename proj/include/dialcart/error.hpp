#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dialcart {

enum class ErrorCode {
    InvalidArgument,
    Parse,
    UnknownTag,
    Duplicate,
    NotFound,
    Busy,
    Conflict,
    Insufficient,
    Numeric,
    Io,
};

std::string_view to_string(ErrorCode code);

/// Library-wide exception. `detail` carries machine-oriented context
/// (offending tag, line number, id) that the service forwards verbatim.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::string detail = {})
        : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

} // namespace dialcart
