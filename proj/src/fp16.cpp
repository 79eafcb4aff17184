#include "centeratt/fp16.hpp"

#include <cstring>

namespace centeratt {

uint16_t float_to_half_bits(float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    const uint32_t sign = (bits >> 16) & 0x8000u;
    const uint32_t exp = (bits >> 23) & 0xffu;
    const uint32_t man = bits & 0x7fffffu;

    if (exp == 0xffu) {
        // inf stays inf; nan keeps a nonzero (quiet) payload
        return static_cast<uint16_t>(sign | 0x7c00u | (man ? (0x200u | (man >> 13)) : 0u));
    }

    const int e = static_cast<int>(exp) - 127 + 15;
    if (e >= 0x1f) return static_cast<uint16_t>(sign | 0x7c00u);
    if (e <= 0) {
        // subnormal half or zero
        if (e < -10) return static_cast<uint16_t>(sign);
        const uint32_t full = man | 0x800000u;
        const uint32_t shift = static_cast<uint32_t>(14 - e);  // 14..24
        uint32_t half_man = full >> shift;
        const uint32_t rem = full & ((1u << shift) - 1u);
        const uint32_t halfway = 1u << (shift - 1u);
        if (rem > halfway || (rem == halfway && (half_man & 1u))) half_man++;
        // a carry out of the mantissa lands in the exponent field, which is
        // exactly the next representable value
        return static_cast<uint16_t>(sign | half_man);
    }

    uint16_t h = static_cast<uint16_t>(sign | (static_cast<uint32_t>(e) << 10) | (man >> 13));
    const uint32_t rem = man & 0x1fffu;
    if (rem > 0x1000u || (rem == 0x1000u && (h & 1u))) h++;  // may carry to inf
    return h;
}

float half_bits_to_float(uint16_t h) {
    const uint32_t sign = static_cast<uint32_t>(h & 0x8000u) << 16;
    const uint32_t exp = (h >> 10) & 0x1fu;
    uint32_t man = h & 0x3ffu;
    uint32_t bits;
    if (exp == 0x1fu) {
        bits = sign | 0x7f800000u | (man << 13);
    } else if (exp == 0) {
        if (man == 0) {
            bits = sign;
        } else {
            // normalize: value is man * 2^-24
            uint32_t shift = 0;
            while (!(man & 0x400u)) {
                man <<= 1;
                shift++;
            }
            man &= 0x3ffu;
            bits = sign | ((113u - shift) << 23) | (man << 13);
        }
    } else {
        bits = sign | ((exp - 15u + 127u) << 23) | (man << 13);
    }
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    return f;
}

}  // namespace centeratt
