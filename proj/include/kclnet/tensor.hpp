#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace kclnet {

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("ShapeMismatch: " + msg) {}
};

// Dense row-major matrix, 64-bit floats. Column vectors are (n, 1).
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {}

    static Matrix col(std::vector<double> v) {
        Matrix m;
        m.rows_ = static_cast<int>(v.size());
        m.cols_ = 1;
        m.data_ = std::move(v);
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }
    double& at_flat(size_t i) { return data_[i]; }
    double at_flat(size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool operator==(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double c);
Matrix hadamard(const Matrix& a, const Matrix& b);
void axpy(Matrix& y, double c, const Matrix& x);  // y += c * x

double dot_flat(const Matrix& a, const Matrix& b);
double norm2(const Matrix& a);
double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);
bool all_finite(const Matrix& a);

// Cosine of two equally-shaped vectors; 0 when either norm is below 1e-12.
double cosine_similarity(const Matrix& v1, const Matrix& v2);

// Unit-norm w with A^T w = 0, via Gaussian elimination with partial pivoting
// on A^T (pivot tolerance 1e-10 * ||A||_F). nullopt when A has full row rank.
std::optional<Matrix> null_space_vector(const Matrix& a);

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
std::vector<double> jacobi_eigenvalues(Matrix sym);

// sqrt of the smallest eigenvalue of A^T A.
double smallest_singular_value(const Matrix& a);

}  // namespace kclnet
