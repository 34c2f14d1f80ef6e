// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

// Compiled with -mavx2 -mfma -mf16c. Only reached through the dispatch table
// after the CPU feature check.

#include <immintrin.h>

#include <cmath>

#include "kernels_impl.hpp"

namespace specsurg::kernels::detail {
namespace {

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    __m256d acc2 = _mm256_setzero_pd();
    __m256d acc3 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
        acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), acc2);
        acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), acc3);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    }
    double s = hsum(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void dot3_avx2(const double* a, const double* b, std::size_t n, double* aa, double* bb, double* ab) {
    __m256d saa0 = _mm256_setzero_pd(), saa1 = _mm256_setzero_pd();
    __m256d sbb0 = _mm256_setzero_pd(), sbb1 = _mm256_setzero_pd();
    __m256d sab0 = _mm256_setzero_pd(), sab1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256d x0 = _mm256_loadu_pd(a + i);
        const __m256d y0 = _mm256_loadu_pd(b + i);
        const __m256d x1 = _mm256_loadu_pd(a + i + 4);
        const __m256d y1 = _mm256_loadu_pd(b + i + 4);
        saa0 = _mm256_fmadd_pd(x0, x0, saa0);
        sbb0 = _mm256_fmadd_pd(y0, y0, sbb0);
        sab0 = _mm256_fmadd_pd(x0, y0, sab0);
        saa1 = _mm256_fmadd_pd(x1, x1, saa1);
        sbb1 = _mm256_fmadd_pd(y1, y1, sbb1);
        sab1 = _mm256_fmadd_pd(x1, y1, sab1);
    }
    double raa = hsum(_mm256_add_pd(saa0, saa1));
    double rbb = hsum(_mm256_add_pd(sbb0, sbb1));
    double rab = hsum(_mm256_add_pd(sab0, sab1));
    for (; i < n; ++i) {
        raa += a[i] * a[i];
        rbb += b[i] * b[i];
        rab += a[i] * b[i];
    }
    *aa = raa;
    *bb = rbb;
    *ab = rab;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
        _mm256_storeu_pd(y + i + 4,
                         _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
    }
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void rotate_avx2(double* x, double* y, std::size_t n, double c, double s) {
    const __m256d vc = _mm256_set1_pd(c);
    const __m256d vs = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d xi = _mm256_loadu_pd(x + i);
        const __m256d yi = _mm256_loadu_pd(y + i);
        _mm256_storeu_pd(x + i, _mm256_fmsub_pd(vc, xi, _mm256_mul_pd(vs, yi)));
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(vs, xi, _mm256_mul_pd(vc, yi)));
    }
    for (; i < n; ++i) {
        const double xi = x[i];
        const double yi = y[i];
        x[i] = c * xi - s * yi;
        y[i] = s * xi + c * yi;
    }
}

// exp(x) for x <= 0. Range reduction by ln 2 followed by a degree-13 Taylor
// polynomial on |r| <= ln2/2; relative error below 3e-16 on the normal range.
// Arguments under -708 flush to zero.
inline __m256d exp_nonpositive(__m256d x) {
    const __m256d log2e = _mm256_set1_pd(1.4426950408889634074);
    const __m256d ln2_hi = _mm256_set1_pd(6.93145751953125e-1);
    const __m256d ln2_lo = _mm256_set1_pd(1.42860682030941723212e-6);
    const __m256d lower = _mm256_set1_pd(-708.0);
    const __m256d magic = _mm256_set1_pd(6755399441055744.0); // 1.5 * 2^52

    const __m256d underflow = _mm256_cmp_pd(x, lower, _CMP_LT_OQ);
    x = _mm256_max_pd(x, lower);
    const __m256d k = _mm256_round_pd(_mm256_mul_pd(x, log2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(k, ln2_hi, x);
    r = _mm256_fnmadd_pd(k, ln2_lo, r);

    __m256d p = _mm256_set1_pd(1.0 / 6227020800.0);
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 479001600.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 39916800.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 3628800.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 362880.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 40320.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 5040.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 720.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 120.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 24.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 6.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.5));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

    // 2^k assembled from the biased exponent; k + 1023 lies in [2, 1023].
    const __m256d biased = _mm256_add_pd(k, _mm256_add_pd(magic, _mm256_set1_pd(1023.0)));
    const __m256d scale = _mm256_castsi256_pd(_mm256_slli_epi64(_mm256_castpd_si256(biased), 52));
    return _mm256_andnot_pd(underflow, _mm256_mul_pd(p, scale));
}

// Vectorized across grid points so every grid value sums the samples in the
// same order as the scalar kernel.
void gauss_kde_avx2(const double* samples, std::size_t n, const double* grid, std::size_t ng,
                    double inv_h, double* out) {
    const __m256d vinv = _mm256_set1_pd(inv_h);
    const __m256d mhalf = _mm256_set1_pd(-0.5);
    std::size_t g = 0;
    for (; g + 16 <= ng; g += 16) {
        const __m256d g0 = _mm256_loadu_pd(grid + g);
        const __m256d g1 = _mm256_loadu_pd(grid + g + 4);
        const __m256d g2 = _mm256_loadu_pd(grid + g + 8);
        const __m256d g3 = _mm256_loadu_pd(grid + g + 12);
        __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
        __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
        for (std::size_t i = 0; i < n; ++i) {
            const __m256d s = _mm256_set1_pd(samples[i]);
            const __m256d z0 = _mm256_mul_pd(_mm256_sub_pd(g0, s), vinv);
            const __m256d z1 = _mm256_mul_pd(_mm256_sub_pd(g1, s), vinv);
            const __m256d z2 = _mm256_mul_pd(_mm256_sub_pd(g2, s), vinv);
            const __m256d z3 = _mm256_mul_pd(_mm256_sub_pd(g3, s), vinv);
            a0 = _mm256_add_pd(a0, exp_nonpositive(_mm256_mul_pd(mhalf, _mm256_mul_pd(z0, z0))));
            a1 = _mm256_add_pd(a1, exp_nonpositive(_mm256_mul_pd(mhalf, _mm256_mul_pd(z1, z1))));
            a2 = _mm256_add_pd(a2, exp_nonpositive(_mm256_mul_pd(mhalf, _mm256_mul_pd(z2, z2))));
            a3 = _mm256_add_pd(a3, exp_nonpositive(_mm256_mul_pd(mhalf, _mm256_mul_pd(z3, z3))));
        }
        _mm256_storeu_pd(out + g, a0);
        _mm256_storeu_pd(out + g + 4, a1);
        _mm256_storeu_pd(out + g + 8, a2);
        _mm256_storeu_pd(out + g + 12, a3);
    }
    for (; g + 4 <= ng; g += 4) {
        const __m256d g0 = _mm256_loadu_pd(grid + g);
        __m256d a0 = _mm256_setzero_pd();
        for (std::size_t i = 0; i < n; ++i) {
            const __m256d z0 = _mm256_mul_pd(_mm256_sub_pd(g0, _mm256_set1_pd(samples[i])), vinv);
            a0 = _mm256_add_pd(a0, exp_nonpositive(_mm256_mul_pd(mhalf, _mm256_mul_pd(z0, z0))));
        }
        _mm256_storeu_pd(out + g, a0);
    }
    if (g < ng) gauss_kde_scalar(samples, n, grid + g, ng - g, inv_h, out + g);
}

void decode_f32_avx2(const float* in, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_cvtps_pd(_mm_loadu_ps(in + i)));
    for (; i < n; ++i) out[i] = static_cast<double>(in[i]);
}

void decode_bf16_avx2(const std::uint16_t* in, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m128i h = _mm_loadl_epi64(reinterpret_cast<const __m128i*>(in + i));
        const __m128i w = _mm_slli_epi32(_mm_cvtepu16_epi32(h), 16);
        _mm256_storeu_pd(out + i, _mm256_cvtps_pd(_mm_castsi128_ps(w)));
    }
    for (; i < n; ++i) {
        const __m128i w = _mm_cvtsi32_si128(static_cast<int>(static_cast<std::uint32_t>(in[i]) << 16));
        out[i] = static_cast<double>(_mm_cvtss_f32(_mm_castsi128_ps(w)));
    }
}

void decode_f16_avx2(const std::uint16_t* in, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 f = _mm256_cvtph_ps(_mm_loadu_si128(reinterpret_cast<const __m128i*>(in + i)));
        _mm256_storeu_pd(out + i, _mm256_cvtps_pd(_mm256_castps256_ps128(f)));
        _mm256_storeu_pd(out + i + 4, _mm256_cvtps_pd(_mm256_extractf128_ps(f, 1)));
    }
    if (i < n) decode_f16_scalar(in + i, out + i, n - i);
}

} // namespace

const KernelTable kAvx2Table = {
    "avx2",         dot_avx2,        dot3_avx2,        axpy_avx2,       rotate_avx2,
    gauss_kde_avx2, decode_f32_avx2, decode_bf16_avx2, decode_f16_avx2,
};

} // namespace specsurg::kernels::detail
