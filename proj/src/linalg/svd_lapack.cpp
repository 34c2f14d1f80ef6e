// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>

#include <fmt/core.h>
#include <lapacke.h>

#include "specsurg/error.hpp"
#include "svd_backends.hpp"

namespace specsurg::spectral::detail {

SvdTriple lapack_svd(const Matrix& w, bool want_vectors) {
    const auto m = static_cast<lapack_int>(w.rows());
    const auto n = static_cast<lapack_int>(w.cols());
    const lapack_int r = std::min(m, n);
    std::vector<double> a(w.values().begin(), w.values().end());
    SvdTriple out;
    out.sigma.resize(static_cast<std::size_t>(r));
    Matrix u = want_vectors ? Matrix(w.rows(), r) : Matrix();
    Matrix vt = want_vectors ? Matrix(r, w.cols()) : Matrix();
    double dummy = 0.0;
    const lapack_int info = LAPACKE_dgesdd(LAPACK_ROW_MAJOR, want_vectors ? 'S' : 'N', m, n, a.data(), n,
                                           out.sigma.data(), want_vectors ? u.values().data() : &dummy,
                                           want_vectors ? r : 1, want_vectors ? vt.values().data() : &dummy,
                                           want_vectors ? n : 1);
    if (info > 0) throw NumericalError(fmt::format("dgesdd did not converge on a {}x{} matrix", m, n));
    if (info < 0) throw NumericalError(fmt::format("dgesdd rejected argument {}", -info));
    if (want_vectors) {
        out.u = std::move(u);
        out.v = vt.transposed();
    }
    return out;
}

} // namespace specsurg::spectral::detail
