#include "largebatch/binary16.hpp"

#include <cmath>

#include "largebatch/error.hpp"

namespace largebatch {

namespace {

// Round a nonnegative double below 2^53 to the nearest integer, ties to even.
double round_half_even(double q) {
    const double fl = std::floor(q);
    const double rem = q - fl;
    if (rem > 0.5) return fl + 1.0;
    if (rem < 0.5) return fl;
    return std::fmod(fl, 2.0) == 0.0 ? fl : fl + 1.0;
}

}  // namespace

bool binary16_saturates(double x) noexcept { return std::abs(x) > kBinary16Max; }

std::uint16_t to_binary16(double x) {
    if (!std::isfinite(x)) throw DomainError("to_binary16: input must be finite");
    const std::uint16_t sign = std::signbit(x) ? 0x8000u : 0u;
    const double a = std::abs(x);
    if (a > kBinary16Max) return sign | 0x7BFFu;

    if (a < 0x1.0p-14) {
        // Subnormal: units of 2^-24. A result of 1024 is the smallest normal,
        // whose bit pattern is also 1024.
        const auto m = static_cast<std::uint16_t>(round_half_even(std::ldexp(a, 24)));
        return sign | m;
    }

    int exp2 = 0;
    std::frexp(a, &exp2);  // a = f * 2^exp2, f in [0.5, 1)
    int e = exp2 - 1;      // a in [2^e, 2^(e+1))
    auto m = static_cast<std::uint32_t>(round_half_even(std::ldexp(a, 10 - e)));
    if (m == 2048u) {
        m = 1024u;
        ++e;
    }
    return static_cast<std::uint16_t>(sign | static_cast<std::uint32_t>(e + 15) << 10 | (m - 1024u));
}

double from_binary16(std::uint16_t bits) {
    const bool negative = (bits & 0x8000u) != 0;
    const unsigned exponent = (bits >> 10) & 0x1Fu;
    const unsigned mantissa = bits & 0x3FFu;
    double value;
    if (exponent == 0x1Fu) {
        if (mantissa != 0) throw DomainError("from_binary16: NaN pattern");
        value = INFINITY;
    } else if (exponent == 0) {
        value = std::ldexp(static_cast<double>(mantissa), -24);
    } else {
        value = std::ldexp(static_cast<double>(mantissa | 0x400u), static_cast<int>(exponent) - 25);
    }
    return negative ? -value : value;
}

double round_to_binary16(double x) { return from_binary16(to_binary16(x)); }

}  // namespace largebatch
