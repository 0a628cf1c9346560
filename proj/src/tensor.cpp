#include "kclnet/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace kclnet {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " * " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    Matrix out(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        for (int k = 0; k < a.cols(); ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("add");
    Matrix out = a;
    for (size_t i = 0; i < out.size(); ++i) out.at_flat(i) += b.at_flat(i);
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("sub");
    Matrix out = a;
    for (size_t i = 0; i < out.size(); ++i) out.at_flat(i) -= b.at_flat(i);
    return out;
}

Matrix scale(const Matrix& a, double c) {
    Matrix out = a;
    for (size_t i = 0; i < out.size(); ++i) out.at_flat(i) *= c;
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("hadamard");
    Matrix out = a;
    for (size_t i = 0; i < out.size(); ++i) out.at_flat(i) *= b.at_flat(i);
    return out;
}

void axpy(Matrix& y, double c, const Matrix& x) {
    if (!y.same_shape(x)) throw ShapeError("axpy");
    for (size_t i = 0; i < y.size(); ++i) y.at_flat(i) += c * x.at_flat(i);
}

double dot_flat(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("dot");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a.at_flat(i) * b.at_flat(i);
    return s;
}

double norm2(const Matrix& a) { return std::sqrt(dot_flat(a, a)); }

double frobenius_norm(const Matrix& a) { return norm2(a); }

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.at_flat(i)));
    return m;
}

bool all_finite(const Matrix& a) {
    for (size_t i = 0; i < a.size(); ++i)
        if (!std::isfinite(a.at_flat(i))) return false;
    return true;
}

double cosine_similarity(const Matrix& v1, const Matrix& v2) {
    if (!v1.same_shape(v2)) throw ShapeError("cosine_similarity");
    double n1 = norm2(v1);
    double n2 = norm2(v2);
    if (n1 < 1e-12 || n2 < 1e-12) return 0.0;
    return dot_flat(v1, v2) / (n1 * n2);
}

std::optional<Matrix> null_space_vector(const Matrix& a) {
    const int d = a.rows();
    const int n = a.cols();
    const double tol = 1e-10 * frobenius_norm(a);

    // Row echelon form of A^T (n rows, d columns).
    Matrix m = transpose(a);
    std::vector<int> pivot_row_of_col(d, -1);
    int row = 0;
    for (int col = 0; col < d && row < n; ++col) {
        int best = -1;
        double best_abs = tol;
        for (int r = row; r < n; ++r) {
            double v = std::abs(m(r, col));
            if (v > best_abs) {
                best_abs = v;
                best = r;
            }
        }
        if (best < 0) continue;  // free column
        if (best != row)
            for (int c = 0; c < d; ++c) std::swap(m(row, c), m(best, c));
        double piv = m(row, col);
        for (int r = row + 1; r < n; ++r) {
            double f = m(r, col) / piv;
            if (f == 0.0) continue;
            for (int c = col; c < d; ++c) m(r, c) -= f * m(row, c);
        }
        pivot_row_of_col[col] = row;
        ++row;
    }

    int free_col = -1;
    for (int col = 0; col < d; ++col)
        if (pivot_row_of_col[col] < 0) {
            free_col = col;
            break;
        }
    if (free_col < 0) return std::nullopt;  // rank(A) == d

    Matrix w(d, 1);
    w(free_col, 0) = 1.0;
    // Back-substitute pivot variables in reverse pivot order.
    for (int col = d - 1; col >= 0; --col) {
        int r = pivot_row_of_col[col];
        if (r < 0) continue;
        double s = 0.0;
        for (int c = col + 1; c < d; ++c) s += m(r, c) * w(c, 0);
        w(col, 0) = -s / m(r, col);
    }
    double nm = norm2(w);
    for (int i = 0; i < d; ++i) w(i, 0) /= nm;
    return w;
}

std::vector<double> jacobi_eigenvalues(Matrix b) {
    if (b.rows() != b.cols()) throw ShapeError("jacobi_eigenvalues needs a square matrix");
    const int n = b.rows();
    auto off_norm = [&b, n] {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (i != j) s += b(i, j) * b(i, j);
        return std::sqrt(s);
    };
    double prev = off_norm();
    for (int sweep = 0; sweep < 100 && prev > 1e-12; ++sweep) {
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double apq = b(p, q);
                if (apq == 0.0) continue;
                double app = b(p, p);
                double aqq = b(q, q);
                double theta = (aqq - app) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int k = 0; k < n; ++k) {
                    double bkp = b(k, p);
                    double bkq = b(k, q);
                    b(k, p) = c * bkp - s * bkq;
                    b(k, q) = s * bkp + c * bkq;
                }
                for (int k = 0; k < n; ++k) {
                    double bpk = b(p, k);
                    double bqk = b(q, k);
                    b(p, k) = c * bpk - s * bqk;
                    b(q, k) = s * bpk + c * bqk;
                }
            }
        }
        double cur = off_norm();
        if (cur >= prev) break;  // stalled at machine precision
        prev = cur;
    }
    std::vector<double> eig(n);
    for (int i = 0; i < n; ++i) eig[i] = b(i, i);
    std::sort(eig.begin(), eig.end());
    return eig;
}

double smallest_singular_value(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    Matrix b = matmul(transpose(a), a);
    std::vector<double> eig = jacobi_eigenvalues(std::move(b));
    return std::sqrt(std::max(0.0, eig.front()));
}

}  // namespace kclnet
