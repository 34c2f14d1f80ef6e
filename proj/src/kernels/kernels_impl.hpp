// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "specsurg/kernels.hpp"

namespace specsurg::kernels::detail {

extern const KernelTable kScalarTable;

#if defined(SPECSURG_HAVE_AVX2)
extern const KernelTable kAvx2Table;
#endif
#if defined(SPECSURG_HAVE_NEON)
extern const KernelTable kNeonTable;
#endif

// Scalar entry points reused by vector tables for tails and missing kernels.
double dot_scalar(const double* a, const double* b, std::size_t n);
void gauss_kde_scalar(const double* samples, std::size_t n, const double* grid, std::size_t ng,
                      double inv_h, double* out);
void decode_f16_scalar(const std::uint16_t* in, double* out, std::size_t n);
double half_to_double(std::uint16_t h);

} // namespace specsurg::kernels::detail
