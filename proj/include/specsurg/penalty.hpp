// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Rotation-preservation penalty. With P_U = U_r U_r^T and P_V = V_r V_r^T
// taken from the top-r singular subspaces of a frozen reference matrix,
//
//   R(W) = ||(I - P_U) W P_V||_F^2 + ||P_U W (I - P_V)||_F^2
//
// penalizes only the off-diagonal blocks of W in the reference split, so any
// change of singular values inside the reference subspaces costs nothing
// while rotating them away from one another does.

#include <cstddef>

#include "specsurg/matrix.hpp"
#include "specsurg/spectral.hpp"

namespace specsurg::penalty {

struct PenaltyRef {
    Matrix u_r; // m x r
    Matrix v_r; // n x r
    std::size_t rank = 0;
    double sigma_1 = 0.0;
    double boundary_gap = 0.0; // sigma_r - sigma_{r+1}; sigma_r when r = min(m, n)

    /// The top-r subspace is not well defined (gap < 1e-6 sigma_1).
    bool degenerate_boundary() const noexcept;
};

/// `rank` is clamped to min(m, n).
PenaltyRef fit_reference(const Matrix& w_ref, std::size_t rank);
PenaltyRef fit_reference(const spectral::SvdTriple& t, std::size_t rank);

double penalty_value(const Matrix& w, const PenaltyRef& ref);

/// 2 (I - P_U) W P_V + 2 P_U W (I - P_V)
Matrix penalty_grad(const Matrix& w, const PenaltyRef& ref);

} // namespace specsurg::penalty
