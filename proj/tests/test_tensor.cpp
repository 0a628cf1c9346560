#include <cmath>

#include "doctest.h"
#include "kclnet/rng.hpp"
#include "kclnet/tensor.hpp"

using namespace kclnet;

namespace {

Matrix random_matrix(int rows, int cols, Rng& rng) {
    Matrix m(rows, cols);
    for (size_t i = 0; i < m.size(); ++i) m.at_flat(i) = rng.normal();
    return m;
}

// Independent oracle: inverse power iteration on A^T A with a plain
// Gauss-Jordan solve, entirely separate from the Jacobi path.
double smallest_singular_oracle(const Matrix& a, int iters = 500) {
    Matrix b = matmul(transpose(a), a);
    const int n = b.rows();
    auto solve = [&](std::vector<double> rhs) {
        Matrix m = b;
        for (int col = 0; col < n; ++col) {
            int piv = col;
            for (int r = col + 1; r < n; ++r)
                if (std::abs(m(r, col)) > std::abs(m(piv, col))) piv = r;
            if (piv != col) {
                for (int c = 0; c < n; ++c) std::swap(m(col, c), m(piv, c));
                std::swap(rhs[col], rhs[piv]);
            }
            for (int r = 0; r < n; ++r) {
                if (r == col) continue;
                double f = m(r, col) / m(col, col);
                for (int c = 0; c < n; ++c) m(r, c) -= f * m(col, c);
                rhs[r] -= f * rhs[col];
            }
        }
        for (int i = 0; i < n; ++i) rhs[i] /= m(i, i);
        return rhs;
    };
    std::vector<double> x(n, 1.0);
    double lambda = 0.0;
    for (int it = 0; it < iters; ++it) {
        std::vector<double> y = solve(x);
        double norm = 0.0;
        for (double v : y) norm += v * v;
        norm = std::sqrt(norm);
        for (double& v : y) v /= norm;
        double num = 0.0;
        for (int i = 0; i < n; ++i) {
            double row = 0.0;
            for (int j = 0; j < n; ++j) row += b(i, j) * y[j];
            num += y[i] * row;
        }
        lambda = num;
        x = y;
    }
    return std::sqrt(std::max(0.0, lambda));
}

}  // namespace

TEST_CASE("cosine similarity basic identities") {
    Matrix x = Matrix::col({0.3, -1.2, 2.5});
    CHECK(cosine_similarity(x, x) == doctest::Approx(1.0).epsilon(1e-12));

    Matrix e1 = Matrix::col({1, 0});
    Matrix e2 = Matrix::col({0, 1});
    CHECK(cosine_similarity(e1, e2) == 0.0);

    Matrix a = Matrix::col({1, 1});
    Matrix b = Matrix::col({1, 0});
    CHECK(cosine_similarity(a, b) == doctest::Approx(0.70710678118654752).epsilon(1e-12));
}

TEST_CASE("cosine similarity degenerate convention and scale invariance") {
    Matrix zero = Matrix::col({0, 0, 0});
    Matrix x = Matrix::col({1, 2, 3});
    CHECK(cosine_similarity(zero, x) == 0.0);
    CHECK(cosine_similarity(x, zero) == 0.0);
    CHECK_THROWS_AS(cosine_similarity(x, Matrix::col({1, 2})), ShapeError);

    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix v1 = random_matrix(6, 1, rng);
        Matrix v2 = random_matrix(6, 1, rng);
        double alpha = rng.log_uniform(1e-3, 1e3);
        double beta = rng.log_uniform(1e-3, 1e3);
        double base = cosine_similarity(v1, v2);
        double scaled = cosine_similarity(scale(v1, alpha), scale(v2, beta));
        CHECK(std::abs(base - scaled) < 1e-9);
        CHECK(base >= -1.0 - 1e-12);
        CHECK(base <= 1.0 + 1e-12);
    }
}

TEST_CASE("frobenius norm") {
    CHECK(frobenius_norm(Matrix(3, 4)) == 0.0);
    Matrix eye(5, 5);
    for (int i = 0; i < 5; ++i) eye(i, i) = 1.0;
    CHECK(frobenius_norm(eye) == doctest::Approx(std::sqrt(5.0)).epsilon(1e-15));
    CHECK(frobenius_norm(Matrix::col({3, 4})) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("null space vector, hand cases") {
    Matrix a = Matrix::col({1, -1});
    auto w = null_space_vector(a);
    REQUIRE(w.has_value());
    CHECK(norm2(*w) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs((*w)(0, 0) - (*w)(1, 0)) < 1e-12);  // (1,1)/sqrt(2) up to sign
    CHECK(std::abs((*w)(0, 0) * a(0, 0) + (*w)(1, 0) * a(1, 0)) < 1e-12);

    Matrix eye(2, 2);
    eye(0, 0) = eye(1, 1) = 1.0;
    CHECK_FALSE(null_space_vector(eye).has_value());

    Matrix zero(4, 2);
    auto wz = null_space_vector(zero);
    REQUIRE(wz.has_value());
    CHECK(norm2(*wz) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(max_abs(matmul(transpose(zero), *wz)) == 0.0);
}

TEST_CASE("null space residual on random kernel instances") {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        int d = 4 + rng.uniform_int(20);
        int n = 1 + rng.uniform_int(d - 1);  // n < d guarantees a kernel
        Matrix a = random_matrix(d, n, rng);
        auto w = null_space_vector(a);
        REQUIRE(w.has_value());
        CHECK(norm2(*w) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(max_abs(matmul(transpose(a), *w)) <= 1e-9 * frobenius_norm(a));
    }
}

TEST_CASE("smallest singular value") {
    Matrix eye(2, 2);
    eye(0, 0) = eye(1, 1) = 1.0;
    CHECK(smallest_singular_value(eye) == doctest::Approx(1.0).epsilon(1e-12));

    Matrix diag(2, 2);
    diag(0, 0) = 3.0;
    diag(1, 1) = 0.5;
    CHECK(smallest_singular_value(diag) == doctest::Approx(0.5).epsilon(1e-12));

    Rng rng(13);
    Matrix a = random_matrix(5, 3, rng);
    CHECK(smallest_singular_value(a) ==
          doctest::Approx(smallest_singular_oracle(a)).epsilon(1e-8));
}

TEST_CASE("sigma_min bounded by the frobenius norm") {
    Rng rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        Matrix a = random_matrix(2 + rng.uniform_int(8), 1 + rng.uniform_int(8), rng);
        CHECK(smallest_singular_value(a) <= frobenius_norm(a) + 1e-12);
    }
}

TEST_CASE("jacobi eigenvalues preserve the trace") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        int n = 2 + rng.uniform_int(6);
        Matrix m = random_matrix(n, n, rng);
        Matrix sym = add(m, transpose(m));
        double trace = 0.0;
        for (int i = 0; i < n; ++i) trace += sym(i, i);
        std::vector<double> eig = jacobi_eigenvalues(sym);
        double sum = 0.0;
        for (double v : eig) sum += v;
        CHECK(sum == doctest::Approx(trace).epsilon(1e-10));
    }
}
