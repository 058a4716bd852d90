#include "imsat/matrix.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "imsat/errors.hpp"

namespace imsat {

namespace {

using EigenRowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const EigenRowMajor>;
using MutMap = Eigen::Map<EigenRowMajor>;

ConstMap map(const Matrix& m) {
    return ConstMap(m.data.data(), static_cast<Eigen::Index>(m.rows),
                    static_cast<Eigen::Index>(m.cols));
}

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " +
                     std::to_string(a.rows) + "x" + std::to_string(a.cols) + " and " +
                     std::to_string(b.rows) + "x" + std::to_string(b.cols));
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) shape_fail("matmul", a, b);
    Matrix out(a.rows, b.cols);
    MutMap(out.data.data(), a.rows, b.cols).noalias() = map(a) * map(b);
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) shape_fail("matmul_tn", a, b);
    Matrix out(a.cols, b.cols);
    MutMap(out.data.data(), a.cols, b.cols).noalias() = map(a).transpose() * map(b);
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) shape_fail("matmul_nt", a, b);
    Matrix out(a.rows, b.rows);
    MutMap(out.data.data(), a.rows, b.rows).noalias() = map(a) * map(b).transpose();
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
    return out;
}

void axpy(Matrix& y, double alpha, const Matrix& x) {
    if (!y.same_shape(x)) shape_fail("axpy", y, x);
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += alpha * x.data[i];
}

void add_inplace(Matrix& y, const Matrix& x) { axpy(y, 1.0, x); }

void scale_inplace(Matrix& m, double s) {
    for (double& v : m.data) v *= s;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) shape_fail("hadamard", a, b);
    Matrix out(a.rows, a.cols);
    for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * b.data[i];
    return out;
}

std::vector<double> column_sum(const Matrix& m) {
    std::vector<double> s(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* row = m.row_ptr(i);
        for (std::size_t j = 0; j < m.cols; ++j) s[j] += row[j];
    }
    return s;
}

std::vector<double> column_mean(const Matrix& m) {
    if (m.rows == 0) throw InputError("column_mean: empty matrix");
    std::vector<double> s = column_sum(m);
    for (double& v : s) v /= static_cast<double>(m.rows);
    return s;
}

double row_norm(const Matrix& m, std::size_t i) {
    double s = 0.0;
    const double* row = m.row_ptr(i);
    for (std::size_t j = 0; j < m.cols; ++j) s += row[j] * row[j];
    return std::sqrt(s);
}

bool all_finite(const Matrix& m) {
    for (double v : m.data)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace imsat
