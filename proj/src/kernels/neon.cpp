// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

// aarch64 only. The KDE and half-precision decoders stay on the scalar path.

#include <arm_neon.h>

#include "kernels_impl.hpp"

namespace specsurg::kernels::detail {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0), acc1 = vdupq_n_f64(0.0);
    float64x2_t acc2 = vdupq_n_f64(0.0), acc3 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
        acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
        acc2 = vfmaq_f64(acc2, vld1q_f64(a + i + 4), vld1q_f64(b + i + 4));
        acc3 = vfmaq_f64(acc3, vld1q_f64(a + i + 6), vld1q_f64(b + i + 6));
    }
    double s = vaddvq_f64(vaddq_f64(vaddq_f64(acc0, acc1), vaddq_f64(acc2, acc3)));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void dot3_neon(const double* a, const double* b, std::size_t n, double* aa, double* bb, double* ab) {
    float64x2_t saa = vdupq_n_f64(0.0), sbb = vdupq_n_f64(0.0), sab = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t x = vld1q_f64(a + i);
        const float64x2_t y = vld1q_f64(b + i);
        saa = vfmaq_f64(saa, x, x);
        sbb = vfmaq_f64(sbb, y, y);
        sab = vfmaq_f64(sab, x, y);
    }
    double raa = vaddvq_f64(saa), rbb = vaddvq_f64(sbb), rab = vaddvq_f64(sab);
    for (; i < n; ++i) {
        raa += a[i] * a[i];
        rbb += b[i] * b[i];
        rab += a[i] * b[i];
    }
    *aa = raa;
    *bb = rbb;
    *ab = rab;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(alpha);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void rotate_neon(double* x, double* y, std::size_t n, double c, double s) {
    const float64x2_t vc = vdupq_n_f64(c);
    const float64x2_t vs = vdupq_n_f64(s);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t xi = vld1q_f64(x + i);
        const float64x2_t yi = vld1q_f64(y + i);
        vst1q_f64(x + i, vfmsq_f64(vmulq_f64(vc, xi), vs, yi));
        vst1q_f64(y + i, vfmaq_f64(vmulq_f64(vc, yi), vs, xi));
    }
    for (; i < n; ++i) {
        const double xi = x[i];
        const double yi = y[i];
        x[i] = c * xi - s * yi;
        y[i] = s * xi + c * yi;
    }
}

void decode_f32_neon(const float* in, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const float32x4_t f = vld1q_f32(in + i);
        vst1q_f64(out + i, vcvt_f64_f32(vget_low_f32(f)));
        vst1q_f64(out + i + 2, vcvt_high_f64_f32(f));
    }
    for (; i < n; ++i) out[i] = static_cast<double>(in[i]);
}

void decode_bf16_neon(const std::uint16_t* in, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const uint32x4_t w = vshlq_n_u32(vmovl_u16(vld1_u16(in + i)), 16);
        const float32x4_t f = vreinterpretq_f32_u32(w);
        vst1q_f64(out + i, vcvt_f64_f32(vget_low_f32(f)));
        vst1q_f64(out + i + 2, vcvt_high_f64_f32(f));
    }
    for (; i < n; ++i) {
        const uint32x2_t w = vdup_n_u32(static_cast<std::uint32_t>(in[i]) << 16);
        out[i] = static_cast<double>(vget_lane_f32(vreinterpret_f32_u32(w), 0));
    }
}

} // namespace

const KernelTable kNeonTable = {
    "neon",           dot_neon,        dot3_neon,        axpy_neon,         rotate_neon,
    gauss_kde_scalar, decode_f32_neon, decode_bf16_neon, decode_f16_scalar,
};

} // namespace specsurg::kernels::detail
