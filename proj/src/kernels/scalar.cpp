// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cmath>
#include <cstring>

#include "kernels_impl.hpp"

namespace specsurg::kernels::detail {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

namespace {

void dot3_scalar(const double* a, const double* b, std::size_t n, double* aa, double* bb, double* ab) {
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        saa += a[i] * a[i];
        sbb += b[i] * b[i];
        sab += a[i] * b[i];
    }
    *aa = saa;
    *bb = sbb;
    *ab = sab;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void rotate_scalar(double* x, double* y, std::size_t n, double c, double s) {
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = x[i];
        const double yi = y[i];
        x[i] = c * xi - s * yi;
        y[i] = s * xi + c * yi;
    }
}

void decode_f32_scalar(const float* in, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<double>(in[i]);
}

void decode_bf16_scalar(const std::uint16_t* in, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t bits = static_cast<std::uint32_t>(in[i]) << 16;
        out[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
}

} // namespace

double half_to_double(std::uint16_t h) {
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

void decode_f16_scalar(const std::uint16_t* in, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = half_to_double(in[i]);
}

void gauss_kde_scalar(const double* samples, std::size_t n, const double* grid, std::size_t ng,
                      double inv_h, double* out) {
    for (std::size_t g = 0; g < ng; ++g) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = (grid[g] - samples[i]) * inv_h;
            s += std::exp(-0.5 * z * z);
        }
        out[g] = s;
    }
}

const KernelTable kScalarTable = {
    "scalar",        dot_scalar,         dot3_scalar,        axpy_scalar,      rotate_scalar,
    gauss_kde_scalar, decode_f32_scalar, decode_bf16_scalar, decode_f16_scalar,
};

} // namespace specsurg::kernels::detail
