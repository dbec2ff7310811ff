#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace sentinel {

/// FNV-1a, 64 bit. Stable across platforms; used to fingerprint resolved
/// configs in reports.
constexpr std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return std::string(buf, 16);
}

}  // namespace sentinel
