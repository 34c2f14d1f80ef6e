// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "specsurg/spectral.hpp"

namespace specsurg::spectral::detail {

/// Thin SVD, sigma sorted descending, signs not yet canonicalized.
/// With want_vectors = false only sigma is filled.
SvdTriple jacobi_svd(const Matrix& w, bool want_vectors);

#if defined(SPECSURG_HAVE_LAPACKE)
SvdTriple lapack_svd(const Matrix& w, bool want_vectors);
#endif

} // namespace specsurg::spectral::detail
