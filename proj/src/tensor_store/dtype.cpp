// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <bit>
#include <cmath>

#include <fmt/core.h>

#include "specsurg/error.hpp"
#include "specsurg/tensor_store.hpp"

namespace specsurg::store {
namespace {

// Rounds |x| to a binary format with `frac_bits` stored fraction bits and
// minimum normal exponent `min_exp`, ties to even. Exact in double.
double round_magnitude(double ax, int frac_bits, int min_exp) {
    if (ax == 0.0) return 0.0;
    const int e = std::ilogb(ax);
    const int quantum = std::max(e, min_exp) - frac_bits;
    return std::ldexp(std::nearbyint(std::ldexp(ax, -quantum)), quantum);
}

} // namespace

std::size_t dtype_size(Dtype d) noexcept {
    switch (d) {
    case Dtype::F64: return 8;
    case Dtype::F32: return 4;
    case Dtype::F16:
    case Dtype::BF16: return 2;
    }
    return 0;
}

std::string_view to_string(Dtype d) noexcept {
    switch (d) {
    case Dtype::F64: return "F64";
    case Dtype::F32: return "F32";
    case Dtype::F16: return "F16";
    case Dtype::BF16: return "BF16";
    }
    return "?";
}

Dtype parse_dtype(std::string_view s) {
    if (s == "F64") return Dtype::F64;
    if (s == "F32") return Dtype::F32;
    if (s == "F16") return Dtype::F16;
    if (s == "BF16") return Dtype::BF16;
    throw ValidationError(fmt::format("unsupported dtype '{}'", s));
}

std::uint16_t encode_bf16(double x) noexcept {
    const std::uint16_t sign = std::signbit(x) ? 0x8000 : 0;
    if (std::isnan(x)) return sign | 0x7fc0;
    const double ax = std::abs(x);
    const double r = round_magnitude(ax, 7, -126);
    constexpr double kMax = 3.3895313892515355e38; // (2 - 2^-7) * 2^127
    if (r > kMax || std::isinf(ax)) return sign | 0x7f80;
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(r));
    return sign | static_cast<std::uint16_t>(bits >> 16);
}

std::uint16_t encode_f16(double x) noexcept {
    const std::uint16_t sign = std::signbit(x) ? 0x8000 : 0;
    if (std::isnan(x)) return sign | 0x7e00;
    const double ax = std::abs(x);
    const double r = round_magnitude(ax, 10, -14);
    if (r > 65504.0 || std::isinf(ax)) return sign | 0x7c00;
    if (r == 0.0) return sign;
    if (r < 0x1p-14) return sign | static_cast<std::uint16_t>(std::ldexp(r, 24));
    const int e = std::ilogb(r);
    const auto mant = static_cast<std::uint16_t>(std::ldexp(r, 10 - e) - 1024.0);
    return sign | static_cast<std::uint16_t>((e + 15) << 10) | mant;
}

double decode_bf16(std::uint16_t h) noexcept {
    return static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(h) << 16));
}

double decode_f16(std::uint16_t h) noexcept {
    const int sign = (h >> 15) & 1;
    const int exp = (h >> 10) & 0x1f;
    const int mant = h & 0x3ff;
    double v;
    if (exp == 0) {
        v = std::ldexp(static_cast<double>(mant), -24);
    } else if (exp == 31) {
        v = mant == 0 ? HUGE_VAL : std::nan("");
    } else {
        v = std::ldexp(static_cast<double>(mant | 0x400), exp - 25);
    }
    return sign ? -v : v;
}

double round_to(Dtype d, double x) noexcept {
    switch (d) {
    case Dtype::F64: return x;
    case Dtype::F32: return static_cast<double>(static_cast<float>(x));
    case Dtype::F16: return decode_f16(encode_f16(x));
    case Dtype::BF16: return decode_bf16(encode_bf16(x));
    }
    return x;
}

} // namespace specsurg::store
