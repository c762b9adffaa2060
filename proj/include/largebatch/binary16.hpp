#pragma once

#include <cstdint>

namespace largebatch {

// Largest finite binary16 magnitude.
inline constexpr double kBinary16Max = 65504.0;

// IEEE 754 binary16 encoding with round-to-nearest-even. Magnitudes above
// 65504 saturate to +/-65504 rather than overflowing to infinity.
// Throws DomainError on NaN or infinity.
std::uint16_t to_binary16(double x);

// True when to_binary16(x) clamps, i.e. |x| > 65504.
bool binary16_saturates(double x) noexcept;

// Exact widening, subnormals included. Throws DomainError on NaN patterns;
// infinity patterns widen to +/-infinity.
double from_binary16(std::uint16_t bits);

// from_binary16(to_binary16(x)).
double round_to_binary16(double x);

}  // namespace largebatch
