#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace crfic {

inline constexpr const char* artifact_version = "1.0.0";

// Thrown when an adaptive window cannot be grown any further (for instance
// because the configured maximum extension was reached before the scan found
// what it needed). The CLI maps this to exit code 2.
struct window_exhausted : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid user-supplied parameters: CLI exit code 1.
struct invalid_argument_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw invalid_argument_error(msg);
}

// FNV-1a over the canonical parameter string of a run. Reports carry the hex
// form so that reruns with the same configuration are recognizable at a glance.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string config_digest(std::string_view canonical) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canonical)));
    return buf;
}

} // namespace crfic
