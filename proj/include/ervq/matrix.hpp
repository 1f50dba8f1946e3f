#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ervq {

/// Dense row-major matrix of doubles.
///
/// Construction from explicit values rejects non-finite entries; the
/// zero-fill constructor is trivially finite. Element access does not
/// re-validate, so mutating code is responsible for keeping entries finite.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
        : rows_(rows), cols_(cols), data_(std::move(values)) {
        if (data_.size() != rows_ * cols_) {
            throw std::invalid_argument(
                "Matrix: got " + std::to_string(data_.size()) + " values for " +
                std::to_string(rows_) + "x" + std::to_string(cols_) + " shape");
        }
        for (double v : data_) {
            if (!std::isfinite(v)) {
                throw std::invalid_argument("Matrix: non-finite entry");
            }
        }
    }

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        std::size_t r = rows.size();
        std::size_t c = r == 0 ? 0 : rows.begin()->size();
        std::vector<double> values;
        values.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) {
                throw std::invalid_argument("Matrix::from_rows: ragged rows");
            }
            values.insert(values.end(), row.begin(), row.end());
        }
        return Matrix(r, c, std::move(values));
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * cols_, cols_};
    }

    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    bool all_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()) + ")");
    }
}

}  // namespace ervq
