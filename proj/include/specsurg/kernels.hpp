// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Data-parallel inner loops used by the linear algebra, the checkpoint codecs
// and the kernel density estimator.
//
// Every kernel has a scalar reference implementation. Vector variants (AVX2+FMA
// on x86-64, NEON on aarch64) fill the same table and are picked once at
// startup from the CPU feature bits. Set SPECSURG_KERNELS=scalar to force the
// reference path.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace specsurg::kernels {

struct KernelTable {
    const char* name;

    double (*dot)(const double* a, const double* b, std::size_t n);

    // aa = a.a, bb = b.b, ab = a.b in one pass
    void (*dot3)(const double* a, const double* b, std::size_t n, double* aa, double* bb, double* ab);

    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

    // Plane rotation: x <- c*x - s*y, y <- s*x + c*y
    void (*rotate)(double* x, double* y, std::size_t n, double c, double s);

    // out[g] = sum_i exp(-0.5 * ((grid[g] - samples[i]) * inv_h)^2)
    void (*gauss_kde)(const double* samples, std::size_t n, const double* grid, std::size_t ng,
                      double inv_h, double* out);

    void (*decode_f32)(const float* in, double* out, std::size_t n);
    void (*decode_bf16)(const std::uint16_t* in, double* out, std::size_t n);
    void (*decode_f16)(const std::uint16_t* in, double* out, std::size_t n);
};

/// The table selected for this process.
const KernelTable& active();

const KernelTable& scalar();

/// Vector table if compiled in and supported by the running CPU, else nullptr.
const KernelTable* simd();

/// Selects a table by name ("scalar", "avx2", "neon", "auto"). Returns false
/// if the requested table is unavailable. Not thread-safe; intended for tests
/// and process startup.
bool select(std::string_view name);

} // namespace specsurg::kernels
