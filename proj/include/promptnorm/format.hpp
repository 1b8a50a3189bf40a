#pragma once

#include <charconv>
#include <string>
#include <system_error>

#include "promptnorm/errors.hpp"

namespace promptnorm {

/// Shortest decimal string that round-trips the exact double value.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc()) {
        throw ValueError("double formatting failed");
    }
    return std::string(buf, res.ptr);
}

}  // namespace promptnorm
