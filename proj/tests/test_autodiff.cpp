#include <cmath>

#include "doctest.h"
#include "kclnet/autodiff.hpp"
#include "kclnet/rng.hpp"

using namespace kclnet;

TEST_CASE("grad_check on x squared at 3") {
    double err = grad_check(
        [](Tape& tape, const std::vector<int>& ids) { return tape.square(ids[0]); },
        {Matrix(1, 1, 3.0)}, 1e-5);
    CHECK(err < 1e-8);

    Tape tape;
    int x = tape.leaf(Matrix(1, 1, 3.0));
    int y = tape.square(x);
    tape.backward(y);
    CHECK(tape.grad(x)(0, 0) == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("norm at zero raises NonFiniteGradient") {
    // ||x|| = sqrt(x . x); the reverse sweep hits 1/(2 sqrt(0)).
    Tape tape;
    int x = tape.leaf(Matrix::col({0.0, 0.0}));
    int n = tape.sqrt(tape.dot(x, x));
    CHECK_THROWS_AS(tape.backward(n), GradError);
}

TEST_CASE("cosine similarity at a zero vector has zero gradient") {
    Tape tape;
    int a = tape.leaf(Matrix::col({0.0, 0.0}));
    int b = tape.leaf(Matrix::col({1.0, 2.0}));
    int s = tape.cos_sim(a, b);
    CHECK(tape.scalar(s) == 0.0);
    tape.backward(s);
    CHECK(max_abs(tape.grad_or_zero(a)) == 0.0);
    CHECK(max_abs(tape.grad_or_zero(b)) == 0.0);
}

TEST_CASE("grad_check eps bounds") {
    auto f = [](Tape& tape, const std::vector<int>& ids) { return tape.square(ids[0]); };
    CHECK_THROWS_AS(grad_check(f, {Matrix(1, 1, 1.0)}, 0.0), GradError);
    CHECK_THROWS_AS(grad_check(f, {Matrix(1, 1, 1.0)}, 0.1), GradError);
}

TEST_CASE("fused affine and combine agree with the unfused ops") {
    Rng rng(3);
    auto rand = [&rng](int r, int c) {
        Matrix m(r, c);
        for (size_t i = 0; i < m.size(); ++i) m.at_flat(i) = rng.normal();
        return m;
    };
    Matrix w = rand(4, 6), x = rand(6, 1), b = rand(4, 1);
    Matrix wm = rand(4, 4), e = rand(4, 1);

    // summation order differs between the fused and unfused paths, so the
    // comparison is tight but not bitwise
    Tape t1;
    int fused = t1.gcn_combine(t1.leaf(wm), t1.leaf(e), t1.leaf(w), t1.leaf(x), t1.leaf(b));
    Tape t2;
    int plain = t2.relu(t2.add(t2.add(t2.matmul(t2.leaf(wm), t2.leaf(e)),
                                      t2.matmul(t2.leaf(w), t2.leaf(x))),
                               t2.leaf(b)));
    CHECK(max_abs(sub(t1.value(fused), t2.value(plain))) < 1e-14);

    Tape t3;
    int aff = t3.affine(t3.leaf(w), t3.leaf(x), t3.leaf(b));
    Tape t4;
    int plain_aff = t4.add(t4.matmul(t4.leaf(w), t4.leaf(x)), t4.leaf(b));
    CHECK(max_abs(sub(t3.value(aff), t4.value(plain_aff))) < 1e-14);
}

TEST_CASE("fused ops pass finite differences") {
    Rng rng(17);
    auto rand = [&rng](int r, int c) {
        Matrix m(r, c);
        for (size_t i = 0; i < m.size(); ++i) m.at_flat(i) = rng.normal();
        return m;
    };
    double err = grad_check(
        [](Tape& tape, const std::vector<int>& ids) {
            int h = tape.gcn_combine(ids[0], ids[1], ids[2], ids[3], ids[4]);
            return tape.dot(h, h);
        },
        {rand(4, 4), rand(4, 1), rand(4, 4), rand(4, 1), rand(4, 1)}, 1e-5);
    CHECK(err < 1e-6);
}

TEST_CASE("random composites match finite differences") {
    Rng rng(23);
    auto rand = [&rng](int r, int c) {
        Matrix m(r, c);
        for (size_t i = 0; i < m.size(); ++i) m.at_flat(i) = rng.normal();
        return m;
    };
    for (int trial = 0; trial < 5; ++trial) {
        Matrix w1 = rand(5, 3), b1 = rand(5, 1), x = rand(3, 1), w2 = rand(1, 5);
        double err = grad_check(
            [](Tape& tape, const std::vector<int>& ids) {
                int h = tape.relu(tape.affine(ids[0], ids[2], ids[1]));
                int s = tape.matmul(ids[3], h);
                int c = tape.cos_sim(h, ids[1]);
                int z = tape.log_sum_exp({tape.scale(s, 0.5), tape.scale(c, 2.0)});
                return tape.square(z);
            },
            {w1, b1, x, w2}, 1e-5);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("stable losses at reference points") {
    Tape tape;
    Matrix logits(12, 1);  // uniform
    int ce = tape.softmax_cross_entropy(tape.leaf(logits), 3);
    CHECK(tape.scalar(ce) == doctest::Approx(std::log(12.0)).epsilon(1e-14));

    int bce = tape.bce_with_logit(tape.leaf(Matrix(1, 1, 0.0)), 1.0);
    CHECK(tape.scalar(bce) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("softmax gradient rows sum to zero") {
    Rng rng(9);
    Tape tape;
    Matrix logits(7, 1);
    for (size_t i = 0; i < logits.size(); ++i) logits.at_flat(i) = rng.normal() * 3.0;
    int lf = tape.leaf(logits);
    int ce = tape.softmax_cross_entropy(lf, 2);
    tape.backward(ce);
    // gradient = softmax - onehot, so the entries sum to 1 - 1 = 0 exactly
    // when the softmax row sums to 1
    double sum = 0.0;
    for (int i = 0; i < 7; ++i) sum += tape.grad(lf)(i, 0);
    CHECK(std::abs(sum) < 1e-12);
}

TEST_CASE("backward visits concat and entry correctly") {
    Tape tape;
    int a = tape.leaf(Matrix::col({1.0, 2.0}));
    int b = tape.leaf(Matrix::col({3.0}));
    int cat = tape.concat_rows(a, b);
    int e = tape.entry(cat, 2, 0);
    tape.backward(e);
    CHECK(tape.scalar(e) == 3.0);
    CHECK(max_abs(tape.grad_or_zero(a)) == 0.0);
    CHECK(tape.grad(b)(0, 0) == 1.0);
}
