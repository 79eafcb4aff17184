#pragma once

#include <cstdint>

namespace centeratt {

// IEEE-754 binary16 conversion with round-to-nearest-even. Half values are
// kept widened in float storage everywhere; these routines define the value
// set and the wire encoding.
uint16_t float_to_half_bits(float f);
float half_bits_to_float(uint16_t h);

// Nearest binary16 value of f (ties to even). Magnitudes above 65504 become
// +-infinity. Idempotent.
inline float quantize_half(float f) { return half_bits_to_float(float_to_half_bits(f)); }

}  // namespace centeratt
