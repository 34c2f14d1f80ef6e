// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <doctest.h>

#include "fixtures.hpp"
#include "specsurg/error.hpp"
#include "specsurg/matrix.hpp"

using namespace specsurg;
using specsurg::testing::random_matrix;
using specsurg::testing::to_eigen;

TEST_CASE("products match Eigen") {
    for (auto [m, k, n] : {std::tuple{1, 1, 1}, {3, 5, 2}, {17, 9, 33}, {64, 64, 64}, {5, 130, 7}}) {
        const Matrix a = random_matrix(m, k, 1);
        const Matrix b = random_matrix(k, n, 2);
        const Matrix c = random_matrix(m, n, 3);
        const Eigen::MatrixXd ea = to_eigen(a), eb = to_eigen(b), ec = to_eigen(c);
        CHECK((to_eigen(matmul(a, b)) - ea * eb).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((to_eigen(matmul_tn(a, c)) - ea.transpose() * ec).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((to_eigen(matmul_nt(b.transposed(), a)) - eb.transpose() * ea.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("shape errors are validation errors") {
    CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), ValidationError);
    CHECK_THROWS_AS(matmul_tn(Matrix(2, 3), Matrix(3, 3)), ValidationError);
    Matrix a(2, 2);
    CHECK_THROWS_AS(a += Matrix(3, 2), ValidationError);
    CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>(3)), ValidationError);
}

TEST_CASE("transpose, columns and element access") {
    const Matrix a = random_matrix(37, 21, 4);
    const Matrix t = a.transposed();
    REQUIRE(t.rows() == 21);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) CHECK(t(j, i) == a(i, j));
    }
    CHECK(t.transposed() == a);
    const Matrix l = a.left_columns(5);
    CHECK(l.cols() == 5);
    CHECK(l(36, 4) == a(36, 4));
    CHECK(a.column(3)[10] == a(10, 3));
}

TEST_CASE("Frobenius norm avoids overflow and underflow") {
    Matrix big(2, 2, {3e200, 4e200, 0, 0});
    CHECK(frobenius_norm(big) == doctest::Approx(5e200).epsilon(1e-15));
    Matrix tiny(1, 2, {3e-200, 4e-200});
    CHECK(frobenius_norm(tiny) == doctest::Approx(5e-200).epsilon(1e-15));
    CHECK(frobenius_norm(Matrix(3, 3)) == 0.0);
    const Matrix a = random_matrix(10, 12, 8);
    CHECK(frobenius_norm(a) == doctest::Approx(to_eigen(a).norm()).epsilon(1e-14));
}

TEST_CASE("orthonormality error and identity") {
    CHECK(orthonormality_error(Matrix::identity(7)) == 0.0);
    CHECK(orthonormality_error(specsurg::testing::random_orthogonal(40, 5)) < 1e-13);
    Matrix m = Matrix::identity(3);
    m(0, 0) = 2.0;
    CHECK(orthonormality_error(m) == doctest::Approx(3.0));
}

TEST_CASE("finite checks and differences") {
    Matrix a(2, 2, {1, 2, 3, 4});
    CHECK(a.all_finite());
    Matrix b = a;
    b(1, 1) = NAN;
    CHECK_FALSE(b.all_finite());
    const Matrix c = a - 2.0 * a;
    CHECK(max_abs_difference(c, -1.0 * a) == 0.0);
    CHECK(max_abs(c) == 4.0);
    CHECK(frobenius_distance(a, a) == 0.0);
}
