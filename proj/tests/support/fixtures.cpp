// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#include "fixtures.hpp"

#include <atomic>
#include <fstream>
#include <random>

#include <unistd.h>

#include <unsupported/Eigen/MatrixFunctions>

#include "specsurg/rng.hpp"

namespace specsurg::testing {

namespace fs = std::filesystem;

Eigen::MatrixXd to_eigen(const Matrix& m) {
    Eigen::MatrixXd e(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
    }
    return e;
}

Matrix from_eigen(const Eigen::MatrixXd& e) {
    Matrix m(e.rows(), e.cols());
    for (Eigen::Index i = 0; i < e.rows(); ++i) {
        for (Eigen::Index j = 0; j < e.cols(); ++j) m(i, j) = e(i, j);
    }
    return m;
}

Matrix random_matrix(std::size_t m, std::size_t n, std::uint64_t seed) {
    return Matrix(m, n, random_normal(m * n, seed));
}

std::vector<double> random_normal(std::size_t n, std::uint64_t seed, double mu, double sd) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> d(mu, sd);
    std::vector<double> v(n);
    for (auto& x : v) x = d(gen);
    return v;
}

Matrix random_orthogonal(std::size_t n, std::uint64_t seed) {
    const Eigen::MatrixXd g = to_eigen(random_matrix(n, n, seed));
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    const Eigen::MatrixXd r = qr.matrixQR();
    for (std::size_t j = 0; j < n; ++j) {
        if (r(j, j) < 0) q.col(j) *= -1.0;
    }
    return from_eigen(q);
}

Matrix random_skew(std::size_t n, std::uint64_t seed) {
    const Eigen::MatrixXd g = to_eigen(random_matrix(n, n, seed));
    Eigen::MatrixXd a = g - g.transpose();
    a /= a.norm();
    return from_eigen(a);
}

Matrix expm(const Matrix& a) {
    const Eigen::MatrixXd e = to_eigen(a).exp();
    return from_eigen(e);
}

Matrix with_spectrum(std::size_t m, std::size_t n, const std::vector<double>& sigma, std::uint64_t seed) {
    const Eigen::MatrixXd u = to_eigen(random_orthogonal(m, mix64(seed)));
    const Eigen::MatrixXd v = to_eigen(random_orthogonal(n, mix64(seed + 1)));
    const auto r = static_cast<Eigen::Index>(sigma.size());
    Eigen::VectorXd s(r);
    for (Eigen::Index i = 0; i < r; ++i) s(i) = sigma[i];
    const Eigen::MatrixXd w = u.leftCols(r) * s.asDiagonal() * v.leftCols(r).transpose();
    return from_eigen(w);
}

std::vector<double> separated_spectrum(std::size_t r, double scale, double offset) {
    std::vector<double> s(r);
    for (std::size_t i = 0; i < r; ++i) s[i] = scale * static_cast<double>(r - i) / static_cast<double>(r) + offset;
    return s;
}

std::vector<double> oracle_singular_values(const Matrix& m) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(to_eigen(m));
    const Eigen::VectorXd s = svd.singularValues();
    return {s.data(), s.data() + s.size()};
}

TempDir::TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("specsurg-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1)));
    fs::remove_all(path_);
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

std::string tensor_name(std::size_t layer, store::Kind kind) {
    const std::string base = "model.layers." + std::to_string(layer) + ".";
    switch (kind) {
    case store::Kind::Q: return base + "self_attn.q_proj.weight";
    case store::Kind::K: return base + "self_attn.k_proj.weight";
    case store::Kind::V: return base + "self_attn.v_proj.weight";
    case store::Kind::O: return base + "self_attn.o_proj.weight";
    case store::Kind::MlpUp: return base + "mlp.up_proj.weight";
    case store::Kind::MlpGate: return base + "mlp.gate_proj.weight";
    case store::Kind::MlpDown: return base + "mlp.down_proj.weight";
    case store::Kind::Other: break;
    }
    return base + "other.weight";
}

void write_model(const fs::path& out, const ModelShape& shape, std::uint64_t seed, store::Dtype dtype,
                 const MatrixEdit& edit) {
    using store::Kind;
    std::map<std::string, std::pair<store::Dtype, Matrix>> tensors;
    const std::pair<Kind, std::pair<std::size_t, std::size_t>> kinds[] = {
        {Kind::Q, {shape.hidden, shape.hidden}},   {Kind::K, {shape.kv, shape.hidden}},
        {Kind::V, {shape.kv, shape.hidden}},       {Kind::O, {shape.hidden, shape.hidden}},
        {Kind::MlpUp, {shape.mlp, shape.hidden}},  {Kind::MlpGate, {shape.mlp, shape.hidden}},
        {Kind::MlpDown, {shape.hidden, shape.mlp}}};
    std::uint64_t stream = 0;
    for (std::size_t l = 0; l < shape.layers; ++l) {
        for (const auto& [kind, dims] : kinds) {
            const auto [m, n] = dims;
            Matrix w = with_spectrum(m, n, separated_spectrum(std::min(m, n)), derive_seed(seed, stream++));
            if (edit) edit(l, kind, w);
            tensors[tensor_name(l, kind)] = {dtype, std::move(w)};
        }
        Matrix norm(1, shape.hidden);
        for (auto& x : norm.values()) x = 1.0;
        tensors["model.layers." + std::to_string(l) + ".input_layernorm.weight"] = {dtype, norm};
    }
    tensors["model.embed_tokens.weight"] = {dtype, random_matrix(32, shape.hidden, derive_seed(seed, 1000))};
    store::write_new_checkpoint(tensors, out, {{"format", "pt"}});
}

std::vector<std::uint8_t> read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace specsurg::testing
