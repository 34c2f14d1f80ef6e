// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#include "specsurg/matrix.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "specsurg/error.hpp"
#include "specsurg/kernels.hpp"

namespace specsurg {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ValidationError(fmt::format("matrix data has {} values, expected {}x{}", data_.size(), rows, cols));
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::span<const double> d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
}

std::vector<double> Matrix::column(std::size_t j) const {
    std::vector<double> c(rows_);
    for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
    return c;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    constexpr std::size_t kBlock = 32;
    for (std::size_t ib = 0; ib < rows_; ib += kBlock) {
        for (std::size_t jb = 0; jb < cols_; jb += kBlock) {
            const std::size_t ie = std::min(ib + kBlock, rows_);
            const std::size_t je = std::min(jb + kBlock, cols_);
            for (std::size_t i = ib; i < ie; ++i) {
                for (std::size_t j = jb; j < je; ++j) t(j, i) = (*this)(i, j);
            }
        }
    }
    return t;
}

Matrix Matrix::left_columns(std::size_t k) const {
    if (k > cols_) throw ValidationError(fmt::format("requested {} columns of a {}-column matrix", k, cols_));
    Matrix out(rows_, k);
    for (std::size_t i = 0; i < rows_; ++i) std::copy_n(row(i).begin(), k, out.row(i).begin());
    return out;
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

namespace {
void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ValidationError(
            fmt::format("{}: shape mismatch {}x{} vs {}x{}", op, a.rows(), a.cols(), b.rows(), b.cols()));
    }
}
} // namespace

Matrix& Matrix::operator+=(const Matrix& other) {
    require_same_shape(*this, other, "add");
    kernels::active().axpy(1.0, other.data_.data(), data_.data(), data_.size());
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    require_same_shape(*this, other, "subtract");
    kernels::active().axpy(-1.0, other.data_.data(), data_.data(), data_.size());
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ValidationError(fmt::format("matmul: {}x{} * {}x{}", a.rows(), a.cols(), b.rows(), b.cols()));
    }
    const auto& k = kernels::active();
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.row(i).data();
        for (std::size_t p = 0; p < a.cols(); ++p) {
            const double aip = a(i, p);
            if (aip != 0.0) k.axpy(aip, b.row(p).data(), ci, b.cols());
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ValidationError(fmt::format("matmul_tn: ({}x{})^T * {}x{}", a.rows(), a.cols(), b.rows(), b.cols()));
    }
    const auto& k = kernels::active();
    Matrix c(a.cols(), b.cols());
    for (std::size_t p = 0; p < a.rows(); ++p) {
        const double* bp = b.row(p).data();
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double api = a(p, i);
            if (api != 0.0) k.axpy(api, bp, c.row(i).data(), b.cols());
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ValidationError(fmt::format("matmul_nt: {}x{} * ({}x{})^T", a.rows(), a.cols(), b.rows(), b.cols()));
    }
    const auto& k = kernels::active();
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = k.dot(a.row(i).data(), b.row(j).data(), a.cols());
    }
    return c;
}

double frobenius_norm(const Matrix& a) {
    // Scaled accumulation so huge or tiny entries do not overflow/underflow.
    const double scale = max_abs(a);
    if (scale == 0.0 || !std::isfinite(scale)) return scale;
    double s = 0.0;
    for (double v : a.values()) {
        const double t = v / scale;
        s += t * t;
    }
    return scale * std::sqrt(s);
}

double frobenius_distance(const Matrix& a, const Matrix& b) { return frobenius_norm(a - b); }

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double v : a.values()) m = std::max(m, std::abs(v));
    return m;
}

double max_abs_difference(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "max_abs_difference");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
    return m;
}

double orthonormality_error(const Matrix& q) {
    Matrix g = matmul_tn(q, q);
    for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) -= 1.0;
    return frobenius_norm(g);
}

} // namespace specsurg
