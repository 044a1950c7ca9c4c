#include "cbgln/matrix.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <utility>

namespace cbgln {

namespace {

using EigenRowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const EigenRowMajor>;
using Map = Eigen::Map<EigenRowMajor>;

ConstMap map_of(const Matrix& m) {
    return ConstMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                    static_cast<Eigen::Index>(m.cols()));
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows_ * cols_) {
        throw DimensionError("Matrix: " + std::to_string(data_.size()) +
                             " values do not fill " + std::to_string(rows_) + "x" +
                             std::to_string(cols_));
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& row : rows) {
        if (row.size() != cols_) {
            throw DimensionError("Matrix: ragged initializer rows");
        }
        data_.insert(data_.end(), row.begin(), row.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

void Matrix::fill(double v) {
    for (double& x : data_) x = v;
}

bool Matrix::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void Matrix::require_finite(const char* context) const {
    if (!all_finite()) {
        throw ContractError(std::string(context) + ": non-finite value in " +
                            std::to_string(rows_) + "x" + std::to_string(cols_) + " matrix");
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul", a.rows(), a.cols(), b.rows(), b.cols());
    }
    Matrix out(a.rows(), b.cols());
    Map(out.data(), static_cast<Eigen::Index>(out.rows()),
        static_cast<Eigen::Index>(out.cols())) = map_of(a) * map_of(b);
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw DimensionError("add", a.rows(), a.cols(), b.rows(), b.cols());
    }
    Matrix out = a;
    for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] += b.data()[k];
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw DimensionError("hadamard", a.rows(), a.cols(), b.rows(), b.cols());
    }
    Matrix out = a;
    for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] *= b.data()[k];
    return out;
}

Matrix scale(const Matrix& a, double c) {
    Matrix out = a;
    for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] *= c;
    return out;
}

double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a.data()[k] * a.data()[k];
    return std::sqrt(s);
}

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::fabs(a.data()[k]));
    return m;
}

}  // namespace cbgln
