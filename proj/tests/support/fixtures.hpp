// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "specsurg/matrix.hpp"
#include "specsurg/tensor_store.hpp"

namespace specsurg::testing {

Eigen::MatrixXd to_eigen(const Matrix& m);
Matrix from_eigen(const Eigen::MatrixXd& e);

/// Standard normal entries.
Matrix random_matrix(std::size_t m, std::size_t n, std::uint64_t seed);
std::vector<double> random_normal(std::size_t n, std::uint64_t seed, double mu = 0.0, double sd = 1.0);

/// Haar-distributed orthogonal matrix from a sign-fixed Householder QR.
Matrix random_orthogonal(std::size_t n, std::uint64_t seed);

/// Random skew-symmetric matrix with unit Frobenius norm.
Matrix random_skew(std::size_t n, std::uint64_t seed);

/// exp(A) through Eigen's matrix exponential.
Matrix expm(const Matrix& a);

/// U[:, :r] diag(sigma) V[:, :r]^T with random orthogonal U (m x m) and V (n x n).
Matrix with_spectrum(std::size_t m, std::size_t n, const std::vector<double>& sigma, std::uint64_t seed);

/// Well-separated descending spectrum: scale * (r, r-1, ..., 1) / r + offset.
std::vector<double> separated_spectrum(std::size_t r, double scale = 4.0, double offset = 0.5);

/// Singular values through Eigen's BDC SVD, descending.
std::vector<double> oracle_singular_values(const Matrix& m);

/// Removes itself on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

struct ModelShape {
    std::size_t layers = 4;
    std::size_t hidden = 16;
    std::size_t kv = 8;
    std::size_t mlp = 24;
};

std::string tensor_name(std::size_t layer, store::Kind kind);

/// Decoder-style checkpoint: Q/K/V/O and MLP matrices per layer plus norm
/// vectors and an embedding. `edit` may rewrite each projection matrix after
/// it is generated.
using MatrixEdit = std::function<void(std::size_t layer, store::Kind kind, Matrix& w)>;
void write_model(const std::filesystem::path& out, const ModelShape& shape, std::uint64_t seed,
                 store::Dtype dtype = store::Dtype::F64, const MatrixEdit& edit = {});

std::vector<std::uint8_t> read_file(const std::filesystem::path& p);

} // namespace specsurg::testing
