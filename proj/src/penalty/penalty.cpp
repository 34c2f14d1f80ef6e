// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#include "specsurg/penalty.hpp"

#include <algorithm>

#include <fmt/core.h>

#include "specsurg/error.hpp"
#include "specsurg/spectral.hpp"

namespace specsurg::penalty {
namespace {

void check_shape(const Matrix& w, const PenaltyRef& ref) {
    if (w.rows() != ref.u_r.rows() || w.cols() != ref.v_r.rows()) {
        throw ValidationError(fmt::format("penalty: matrix is {}x{} but the reference is {}x{}", w.rows(), w.cols(),
                                          ref.u_r.rows(), ref.v_r.rows()));
    }
}

// Off-diagonal blocks expressed in the reduced coordinates:
//   left  = (I - P_U) W V_r   (m x r), so (I - P_U) W P_V = left V_r^T
//   right = U_r^T W (I - P_V) (r x n), so P_U W (I - P_V) = U_r right
struct CrossBlocks {
    Matrix left;
    Matrix right;
};

CrossBlocks cross_blocks(const Matrix& w, const PenaltyRef& ref) {
    const Matrix wv = matmul(w, ref.v_r);          // m x r
    const Matrix uw = matmul_tn(ref.u_r, w);       // r x n
    const Matrix core = matmul_tn(ref.u_r, wv);    // r x r
    // A full-rank factor spans everything, so its complement block vanishes exactly.
    CrossBlocks b{ref.rank == w.rows() ? Matrix(w.rows(), ref.rank) : wv - matmul(ref.u_r, core),
                  ref.rank == w.cols() ? Matrix(ref.rank, w.cols()) : uw - matmul_nt(core, ref.v_r)};
    return b;
}

double squared_norm(const Matrix& m) {
    const double f = frobenius_norm(m);
    return f * f;
}

} // namespace

bool PenaltyRef::degenerate_boundary() const noexcept {
    return boundary_gap < spectral::Tolerances::kBoundaryGap * sigma_1;
}

PenaltyRef fit_reference(const Matrix& w_ref, std::size_t rank) {
    if (rank == 0) throw ValidationError("penalty rank must be positive");
    if (w_ref.empty()) throw ValidationError("penalty reference matrix is empty");
    return fit_reference(spectral::svd(w_ref), rank);
}

PenaltyRef fit_reference(const spectral::SvdTriple& t, std::size_t rank) {
    if (rank == 0) throw ValidationError("penalty rank must be positive");
    const std::size_t thin = t.rank();
    if (thin == 0) throw ValidationError("penalty reference matrix is empty");
    rank = std::min(rank, thin);
    PenaltyRef ref;
    ref.u_r = t.u.left_columns(rank);
    ref.v_r = t.v.left_columns(rank);
    ref.rank = rank;
    ref.sigma_1 = t.sigma.front();
    ref.boundary_gap = rank < thin ? t.sigma[rank - 1] - t.sigma[rank] : t.sigma[rank - 1];
    return ref;
}

double penalty_value(const Matrix& w, const PenaltyRef& ref) {
    check_shape(w, ref);
    // V_r and U_r have orthonormal columns, so the trailing factors drop out of the norms.
    const auto b = cross_blocks(w, ref);
    return squared_norm(b.left) + squared_norm(b.right);
}

Matrix penalty_grad(const Matrix& w, const PenaltyRef& ref) {
    check_shape(w, ref);
    const auto b = cross_blocks(w, ref);
    Matrix g = matmul_nt(b.left, ref.v_r);
    g += matmul(ref.u_r, b.right);
    g *= 2.0;
    return g;
}

} // namespace specsurg::penalty
