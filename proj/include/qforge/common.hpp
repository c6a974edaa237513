// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace qforge {

// Error taxonomy. Everything derives from Error so callers can catch one
// base; the CLI maps InputError-family to exit 2, ConstraintError to 3,
// anything else to 4.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
    using Error::Error;
};
struct ContractError : Error {
    using Error::Error;
};
struct StateError : Error {
    using Error::Error;
};
struct DataError : Error {
    using Error::Error;
};
struct ParseError : Error {
    using Error::Error;
};
struct SchemaError : Error {
    using Error::Error;
};
struct CodegenError : Error {
    using Error::Error;
};
struct SimulationError : Error {
    using Error::Error;
};
struct TrainingError : Error {
    using Error::Error;
};
struct ConstraintError : Error {
    using Error::Error;
};

// Rounding pair shared by the QAT simulator, the integer runtime and the
// generated RTL. Real->integer conversions round half away from zero;
// integer rescaling rounds half up by adding 2^(s-1) before an arithmetic
// shift. Changing either breaks bit-exactness between the three paths.
inline std::int64_t round_half_away(double x) {
    return static_cast<std::int64_t>(x >= 0.0 ? x + 0.5 : x - 0.5);
}

// floor(a / b) for b > 0.
inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

// round-half-up(a / b) for b > 0, i.e. floor((a + b/2) / b).
inline std::int64_t div_round_half_up(std::int64_t a, std::int64_t b) {
    return floor_div(a + b / 2, b);
}

template <typename T>
inline T clamp_val(T v, T lo, T hi) {
    return v < lo ? lo : (v > hi ? hi : v);
}

// FNV-1a, used for the config hash embedded in artifact files. Stable
// across platforms, unlike std::hash.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

}  // namespace qforge
