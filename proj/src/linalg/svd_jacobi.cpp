// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

// One-sided (Hestenes) Jacobi SVD.
//
// Columns of W are stored as contiguous rows of a work matrix and orthogonalized
// pairwise by plane rotations until every pair satisfies
// |g_i . g_j| <= sqrt(m) * eps * |g_i| |g_j|. The converged columns are U diag(sigma),
// and the accumulated rotations are V.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/core.h>

#include "specsurg/error.hpp"
#include "specsurg/kernels.hpp"
#include "svd_backends.hpp"

namespace specsurg::spectral::detail {
namespace {

constexpr int kMaxSweeps = 80;

// Extends the rows of `basis` already marked valid to an orthonormal set by
// Gram-Schmidt (two passes) over the canonical unit vectors.
void complete_orthonormal_rows(Matrix& basis, const std::vector<bool>& valid) {
    const auto& k = kernels::active();
    const std::size_t dim = basis.cols();
    std::vector<std::size_t> done;
    for (std::size_t i = 0; i < basis.rows(); ++i) {
        if (valid[i]) done.push_back(i);
    }
    std::size_t candidate = 0;
    std::vector<double> v(dim);
    for (std::size_t i = 0; i < basis.rows(); ++i) {
        if (valid[i]) continue;
        for (;; ++candidate) {
            if (candidate >= dim) throw NumericalError("could not complete an orthonormal basis");
            std::fill(v.begin(), v.end(), 0.0);
            v[candidate] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t d : done) {
                    const double proj = k.dot(basis.row(d).data(), v.data(), dim);
                    k.axpy(-proj, basis.row(d).data(), v.data(), dim);
                }
            }
            const double norm = std::sqrt(k.dot(v.data(), v.data(), dim));
            if (norm > 0.5) {
                for (std::size_t j = 0; j < dim; ++j) basis(i, j) = v[j] / norm;
                done.push_back(i);
                ++candidate;
                break;
            }
        }
    }
}

// Tall case, m >= n.
SvdTriple jacobi_tall(const Matrix& w, bool want_vectors) {
    const std::size_t m = w.rows();
    const std::size_t n = w.cols();
    const auto& k = kernels::active();

    // Power-of-two scaling keeps the column norms in range without rounding.
    const double peak = max_abs(w);
    const double scale = peak > 0.0 ? std::ldexp(1.0, std::ilogb(peak)) : 1.0;
    Matrix g = w.transposed(); // row j is column j of W
    g *= 1.0 / scale;

    Matrix vt = want_vectors ? Matrix::identity(n) : Matrix();

    // Pre-sort columns by norm (de Rijk); speeds up convergence.
    {
        std::vector<double> norms(n);
        for (std::size_t j = 0; j < n; ++j) norms[j] = k.dot(g.row(j).data(), g.row(j).data(), m);
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return norms[a] > norms[b]; });
        Matrix gs(n, m);
        Matrix vs = want_vectors ? Matrix(n, n) : Matrix();
        for (std::size_t j = 0; j < n; ++j) {
            std::copy(g.row(order[j]).begin(), g.row(order[j]).end(), gs.row(j).begin());
            if (want_vectors) vs(j, order[j]) = 1.0;
        }
        g = std::move(gs);
        if (want_vectors) vt = std::move(vs);
    }

    const double tol = std::sqrt(static_cast<double>(m)) * std::numeric_limits<double>::epsilon();
    bool converged = n < 2;
    for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
        bool rotated = false;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            double* gi = g.row(i).data();
            for (std::size_t j = i + 1; j < n; ++j) {
                double* gj = g.row(j).data();
                double a = 0.0, b = 0.0, c = 0.0;
                k.dot3(gi, gj, m, &a, &b, &c);
                if (a == 0.0 || b == 0.0) continue;
                if (std::abs(c) <= tol * std::sqrt(a) * std::sqrt(b)) continue;
                rotated = true;
                const double zeta = (b - a) / (2.0 * c);
                double t;
                if (std::abs(zeta) > 1e150) {
                    t = 0.5 / zeta;
                } else {
                    t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                }
                const double cs = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = cs * t;
                k.rotate(gi, gj, m, cs, sn);
                if (want_vectors) k.rotate(vt.row(i).data(), vt.row(j).data(), n, cs, sn);
            }
        }
        converged = !rotated;
    }
    if (!converged) {
        throw NumericalError(fmt::format("Jacobi SVD of a {}x{} matrix did not converge in {} sweeps", m, n, kMaxSweeps));
    }

    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) sigma[j] = std::sqrt(k.dot(g.row(j).data(), g.row(j).data(), m));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return sigma[a] > sigma[b]; });

    SvdTriple out;
    out.sigma.resize(n);
    for (std::size_t j = 0; j < n; ++j) out.sigma[j] = sigma[order[j]] * scale;
    if (!want_vectors) return out;

    Matrix ut(n, m);
    Matrix vt_sorted(n, n);
    std::vector<bool> valid(n, false);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        std::copy(vt.row(src).begin(), vt.row(src).end(), vt_sorted.row(j).begin());
        const double s = sigma[src];
        if (s > std::numeric_limits<double>::min()) {
            const double inv = 1.0 / s;
            const auto from = g.row(src);
            auto to = ut.row(j);
            for (std::size_t p = 0; p < m; ++p) to[p] = from[p] * inv;
            valid[j] = true;
        }
    }
    complete_orthonormal_rows(ut, valid);
    out.u = ut.transposed();
    out.v = vt_sorted.transposed();
    return out;
}

} // namespace

SvdTriple jacobi_svd(const Matrix& w, bool want_vectors) {
    if (w.rows() >= w.cols()) return jacobi_tall(w, want_vectors);
    SvdTriple t = jacobi_tall(w.transposed(), want_vectors);
    std::swap(t.u, t.v);
    return t;
}

} // namespace specsurg::spectral::detail
