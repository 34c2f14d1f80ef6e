// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#include "specsurg/spectral.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>

#include <fmt/core.h>

#include "../linalg/svd_backends.hpp"
#include "specsurg/error.hpp"
#include "specsurg/kernels.hpp"

namespace specsurg::spectral {
namespace {

std::atomic<SvdBackend>& backend_slot() {
    static std::atomic<SvdBackend> slot{SvdBackend::Auto};
    return slot;
}

constexpr std::size_t kAutoLapackThreshold = 1024;

SvdBackend resolve(SvdBackend b, const Matrix& w) {
    if (b == SvdBackend::Lapack && !lapack_available()) {
        throw ValidationError("LAPACK SVD backend requested but this build has no LAPACKE");
    }
    if (b != SvdBackend::Auto) return b;
    if (lapack_available() && std::min(w.rows(), w.cols()) >= kAutoLapackThreshold) return SvdBackend::Lapack;
    return SvdBackend::Jacobi;
}

SvdTriple run_backend(const Matrix& w, SvdBackend backend, bool want_vectors) {
    if (w.empty()) throw ValidationError("SVD of an empty matrix");
    if (!w.all_finite()) throw ValidationError("SVD input has non-finite entries");
#if defined(SPECSURG_HAVE_LAPACKE)
    if (resolve(backend, w) == SvdBackend::Lapack) return detail::lapack_svd(w, want_vectors);
#else
    (void)resolve(backend, w);
#endif
    return detail::jacobi_svd(w, want_vectors);
}

} // namespace

SvdBackend parse_svd_backend(std::string_view name) {
    if (name == "jacobi") return SvdBackend::Jacobi;
    if (name == "lapack") return SvdBackend::Lapack;
    if (name == "auto") return SvdBackend::Auto;
    throw ValidationError(fmt::format("unknown SVD backend '{}' (expected jacobi, lapack or auto)", name));
}

bool lapack_available() noexcept {
#if defined(SPECSURG_HAVE_LAPACKE)
    return true;
#else
    return false;
#endif
}

void set_default_backend(SvdBackend b) noexcept { backend_slot().store(b); }
SvdBackend default_backend() noexcept { return backend_slot().load(); }

SvdTriple svd(const Matrix& w) { return svd(w, default_backend()); }

SvdTriple svd(const Matrix& w, SvdBackend backend) {
    SvdTriple t = run_backend(w, backend, true);
    for (double s : t.sigma) {
        if (!std::isfinite(s)) throw NumericalError("SVD produced non-finite singular values");
    }
    canonicalize_signs(t);
    return t;
}

std::vector<double> singular_values(const Matrix& w) {
    return run_backend(w, default_backend(), false).sigma;
}

void canonicalize_signs(SvdTriple& t) {
    const std::size_t m = t.u.rows();
    const std::size_t n = t.v.rows();
    for (std::size_t c = 0; c < t.rank(); ++c) {
        std::size_t best = 0;
        double best_abs = -1.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double a = std::abs(t.u(i, c));
            if (a > best_abs) {
                best_abs = a;
                best = i;
            }
        }
        if (t.u(best, c) < 0.0) {
            for (std::size_t i = 0; i < m; ++i) t.u(i, c) = -t.u(i, c);
            for (std::size_t i = 0; i < n; ++i) t.v(i, c) = -t.v(i, c);
        }
    }
}

Matrix reconstruct(const SvdTriple& t, RankRange keep) {
    if (keep.first > keep.last || keep.last > t.rank()) {
        throw ValidationError(fmt::format("rank range [{}, {}) outside [0, {})", keep.first, keep.last, t.rank()));
    }
    const std::size_t m = t.rows();
    const std::size_t n = t.cols();
    Matrix out(m, n);
    if (keep.first == keep.last) return out;
    // U_k diag(sigma_k) times V_k^T, both restricted to the kept columns.
    const std::size_t k = keep.last - keep.first;
    Matrix us(m, k);
    Matrix vk(n, k);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t c = 0; c < k; ++c) us(i, c) = t.u(i, keep.first + c) * t.sigma[keep.first + c];
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < k; ++c) vk(i, c) = t.v(i, keep.first + c);
    }
    return matmul_nt(us, vk);
}

Matrix reconstruct(const SvdTriple& t) { return reconstruct(t, {0, t.rank()}); }

DeltaSpectrum delta_sigma(const std::vector<double>& sigma_a, const std::vector<double>& sigma_b) {
    if (sigma_a.size() != sigma_b.size()) {
        throw ValidationError(fmt::format("spectra of different length: {} vs {}", sigma_a.size(), sigma_b.size()));
    }
    DeltaSpectrum d;
    d.sigma_a = sigma_a;
    d.sigma_b = sigma_b;
    d.delta.resize(sigma_a.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < sigma_a.size(); ++i) {
        d.delta[i] = sigma_b[i] - sigma_a[i];
        d.max_abs_delta = std::max(d.max_abs_delta, std::abs(d.delta[i]));
        sum += d.delta[i];
    }
    if (!d.delta.empty()) d.mean_delta = sum / static_cast<double>(d.delta.size());
    if (!sigma_a.empty() && sigma_a.front() > 0.0) d.relative_drift = d.max_abs_delta / sigma_a.front();
    return d;
}

DeltaSpectrum delta_sigma(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ValidationError(
            fmt::format("delta_sigma: shape mismatch {}x{} vs {}x{}", a.rows(), a.cols(), b.rows(), b.cols()));
    }
    return delta_sigma(singular_values(a), singular_values(b));
}

std::string_view to_string(Side s) noexcept { return s == Side::Left ? "left" : "right"; }

AngleSpectrum principal_angles(const Matrix& ua, const Matrix& ub, Side side) {
    if (ua.rows() != ub.rows()) {
        throw ValidationError(fmt::format("principal_angles: bases live in R^{} and R^{}", ua.rows(), ub.rows()));
    }
    if (ua.cols() == 0 || ub.cols() == 0) throw ValidationError("principal_angles: empty basis");
    if (ua.cols() > ua.rows() || ub.cols() > ub.rows()) {
        throw ValidationError("principal_angles: more basis vectors than dimensions");
    }
    for (const Matrix* q : {&ua, &ub}) {
        const double err = orthonormality_error(*q);
        if (!(err <= Tolerances::kOrthonormalAccept)) {
            throw ValidationError(fmt::format("principal_angles: basis is not orthonormal (||Q^T Q - I||_F = {:.3g})", err));
        }
    }
    if (ua == ub) {
        AngleSpectrum same;
        same.side = side;
        same.cosines.assign(ua.cols(), 1.0);
        same.angles.assign(ua.cols(), 0.0);
        return same;
    }
    // The angle set is symmetric; keep the wider basis on the left.
    const Matrix& wide = ua.cols() >= ub.cols() ? ua : ub;
    const Matrix& narrow = ua.cols() >= ub.cols() ? ub : ua;
    const std::size_t r = narrow.cols();

    const Matrix cross = matmul_tn(wide, narrow); // wide^T narrow
    std::vector<double> cosines = singular_values(cross);
    for (double& s : cosines) s = std::abs(std::clamp(s, -1.0, 1.0));
    std::sort(cosines.begin(), cosines.end(), std::greater<>());

    // Sines: singular values of (I - P_wide) narrow, ascending.
    Matrix residual = narrow - matmul(wide, cross);
    std::vector<double> sines = singular_values(residual);
    std::sort(sines.begin(), sines.end());

    AngleSpectrum out;
    out.side = side;
    out.cosines = cosines;
    out.angles.resize(r);
    for (std::size_t i = 0; i < r; ++i) {
        if (cosines[i] > std::numbers::sqrt2 / 2.0) {
            out.angles[i] = std::asin(std::min(sines[i], 1.0));
        } else {
            out.angles[i] = std::acos(cosines[i]);
        }
    }
    std::sort(out.angles.begin(), out.angles.end());
    return out;
}

Matrix procrustes(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ValidationError(
            fmt::format("procrustes: shape mismatch {}x{} vs {}x{}", a.rows(), a.cols(), b.rows(), b.cols()));
    }
    const SvdTriple t = svd(matmul_tn(a, b));
    return matmul_nt(t.u, t.v);
}

} // namespace specsurg::spectral
