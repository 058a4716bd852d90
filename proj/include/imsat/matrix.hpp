#pragma once

#include <cstddef>
#include <vector>

namespace imsat {

// Dense row-major 2-D array of doubles. The universal carrier for data
// batches, activations, parameters and gradients.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major, rows*cols entries

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row_ptr(std::size_t i) { return data.data() + i * cols; }
    const double* row_ptr(std::size_t i) const { return data.data() + i * cols; }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// a (m x k) * b (k x n) -> (m x n). Throws ShapeError on mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);
// transpose(a) * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * transpose(b)
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

// y += alpha * x (shapes must match)
void axpy(Matrix& y, double alpha, const Matrix& x);
void add_inplace(Matrix& y, const Matrix& x);
void scale_inplace(Matrix& m, double s);
Matrix hadamard(const Matrix& a, const Matrix& b);

// Per-column mean over rows; length cols.
std::vector<double> column_mean(const Matrix& m);
// Per-column sum over rows; length cols.
std::vector<double> column_sum(const Matrix& m);

// L2 norm of one row.
double row_norm(const Matrix& m, std::size_t i);

bool all_finite(const Matrix& m);

}  // namespace imsat
