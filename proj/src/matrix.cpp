#include "mragnn/matrix.hpp"

#include "mragnn/error.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace mragnn {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows * cols) {
        throw ShapeError("Matrix: " + std::to_string(values_.size()) + " values do not fill a " +
                         std::to_string(rows) + "x" + std::to_string(cols) + " matrix");
    }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> values;
    values.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("Matrix::from_rows: ragged rows");
        values.insert(values.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(values));
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

void Matrix::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

Matrix& Matrix::operator+=(const Matrix& other) {
    if (!same_shape(other)) {
        throw ShapeError("Matrix +=: " + shape_string() + " vs " + other.shape_string());
    }
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
}

bool Matrix::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_string() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

Matrix multiply(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ (" + a.shape_string() + " * " + b.shape_string() + ")");
    }
    Matrix out(a.rows(), b.cols());
    if (a.rows() == 0 || b.cols() == 0) return out;
    if (a.cols() == 0) return out;
    Eigen::Map<const RowMajor> ma(a.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
    Eigen::Map<const RowMajor> mb(b.data(), static_cast<Eigen::Index>(b.rows()), static_cast<Eigen::Index>(b.cols()));
    Eigen::Map<RowMajor> mo(out.data(), static_cast<Eigen::Index>(out.rows()), static_cast<Eigen::Index>(out.cols()));
    mo.noalias() = ma * mb;
    return out;
}

void gemm_accumulate(Matrix& out, const Matrix& a, bool transpose_a, const Matrix& b, bool transpose_b) {
    const std::size_t ar = transpose_a ? a.cols() : a.rows();
    const std::size_t ac = transpose_a ? a.rows() : a.cols();
    const std::size_t br = transpose_b ? b.cols() : b.rows();
    const std::size_t bc = transpose_b ? b.rows() : b.cols();
    if (ac != br || out.rows() != ar || out.cols() != bc) {
        throw ShapeError("gemm_accumulate: incompatible shapes " + a.shape_string() + ", " + b.shape_string() +
                         " into " + out.shape_string());
    }
    if (out.empty() || ac == 0) return;
    Eigen::Map<const RowMajor> ma(a.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
    Eigen::Map<const RowMajor> mb(b.data(), static_cast<Eigen::Index>(b.rows()), static_cast<Eigen::Index>(b.cols()));
    Eigen::Map<RowMajor> mo(out.data(), static_cast<Eigen::Index>(out.rows()), static_cast<Eigen::Index>(out.cols()));
    if (transpose_a && transpose_b) {
        mo.noalias() += ma.transpose() * mb.transpose();
    } else if (transpose_a) {
        mo.noalias() += ma.transpose() * mb;
    } else if (transpose_b) {
        mo.noalias() += ma * mb.transpose();
    } else {
        mo.noalias() += ma * mb;
    }
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
    return t;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("max_abs_diff: " + a.shape_string() + " vs " + b.shape_string());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    return worst;
}

} // namespace mragnn
