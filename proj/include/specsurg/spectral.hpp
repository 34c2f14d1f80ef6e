// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "specsurg/matrix.hpp"

namespace specsurg::spectral {

/// Tolerances shared by construction-time checks and acceptance-time checks.
struct Tolerances {
    /// Orthonormality of factors we build ourselves (Frobenius of Q^T Q - I).
    static constexpr double kOrthonormalConstruct = 1e-10;
    /// Orthonormality demanded of caller-provided bases.
    static constexpr double kOrthonormalAccept = 1e-8;
    /// Relative reconstruction error of a thin SVD, scaled by 1 + ||W||_F.
    static constexpr double kReconstruction = 1e-10;
    /// A rank boundary with gap below this fraction of sigma_1 is flagged.
    static constexpr double kBoundaryGap = 1e-6;
};

/// Thin SVD W = U diag(sigma) V^T with r = min(m, n), sigma descending, and
/// every column of U sign-canonicalized (largest-magnitude entry positive,
/// ties to the lowest row index; V flipped jointly).
struct SvdTriple {
    Matrix u;                  // m x r
    std::vector<double> sigma; // r
    Matrix v;                  // n x r

    std::size_t rows() const noexcept { return u.rows(); }
    std::size_t cols() const noexcept { return v.rows(); }
    std::size_t rank() const noexcept { return sigma.size(); }
};

enum class SvdBackend {
    Jacobi, // one-sided Jacobi on the kernel layer
    Lapack, // LAPACKE dgesdd, when built with it
    Auto,   // Lapack for min(m, n) >= 1024 when available, else Jacobi
};

SvdBackend parse_svd_backend(std::string_view name);
bool lapack_available() noexcept;

/// Process-wide default backend used by svd(W).
void set_default_backend(SvdBackend b) noexcept;
SvdBackend default_backend() noexcept;

SvdTriple svd(const Matrix& w);
SvdTriple svd(const Matrix& w, SvdBackend backend);

/// Singular values only, descending. Skips accumulating V.
std::vector<double> singular_values(const Matrix& w);

/// Applies the sign convention in place. Idempotent; leaves U diag(sigma) V^T unchanged.
void canonicalize_signs(SvdTriple& t);

/// Half-open index range [first, last).
struct RankRange {
    std::size_t first = 0;
    std::size_t last = 0;
};

/// Sum over kept indices of sigma_i u_i v_i^T.
Matrix reconstruct(const SvdTriple& t, RankRange keep);
Matrix reconstruct(const SvdTriple& t);

struct DeltaSpectrum {
    std::vector<double> sigma_a;
    std::vector<double> sigma_b;
    std::vector<double> delta; // sigma_b - sigma_a
    double max_abs_delta = 0.0;
    double mean_delta = 0.0;
    double relative_drift = 0.0; // max|delta| / sigma_1(A), 0 when sigma_1(A) = 0
};

DeltaSpectrum delta_sigma(const Matrix& a, const Matrix& b);
DeltaSpectrum delta_sigma(const std::vector<double>& sigma_a, const std::vector<double>& sigma_b);

enum class Side { Left, Right };
std::string_view to_string(Side s) noexcept;

struct AngleSpectrum {
    std::vector<double> cosines; // descending, in [0, 1]
    std::vector<double> angles;  // ascending, radians in [0, pi/2]
    Side side = Side::Left;

    std::size_t rank() const noexcept { return angles.size(); }
    double max_angle() const noexcept { return angles.empty() ? 0.0 : angles.back(); }
    double min_angle() const noexcept { return angles.empty() ? 0.0 : angles.front(); }
};

/// Principal angles between span(ua) and span(ub). Cosines come from the SVD of
/// ua^T ub clamped to [-1, 1]; angles below pi/4 are taken from the sines of the
/// residual (I - ua ua^T) ub so that small rotations keep full relative accuracy.
/// Both inputs must have orthonormal columns within Tolerances::kOrthonormalAccept.
AngleSpectrum principal_angles(const Matrix& ua, const Matrix& ub, Side side = Side::Left);

/// Orthogonal R minimizing ||A R - B||_F; R = P Q^T from A^T B = P S Q^T.
Matrix procrustes(const Matrix& a, const Matrix& b);

} // namespace specsurg::spectral
