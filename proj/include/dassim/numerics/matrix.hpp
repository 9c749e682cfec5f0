#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "dassim/error.hpp"

namespace dassim {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles. Vectors that travel through the
// operator and tape machinery are carried as 1 x n matrices (one row per
// state), so a batch of states is simply a matrix with more rows.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        detail::require_dims(data_.size() == rows_ * cols_, "Matrix: payload size does not match shape");
    }
    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            detail::require_dims(r.size() == cols_, "Matrix: ragged initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
    static Matrix diagonal(std::span<const double> d) {
        Matrix m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        return m;
    }
    static Matrix row_vector(std::span<const double> v) {
        return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end()));
    }
    static Matrix column_vector(std::span<const double> v) {
        return Matrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }
    Vector row_copy(std::size_t r) const { auto s = row(r); return {s.begin(), s.end()}; }
    void set_row(std::size_t r, std::span<const double> v) {
        detail::require_dims(v.size() == cols_, "Matrix::set_row: length mismatch");
        std::copy(v.begin(), v.end(), data_.begin() + static_cast<std::ptrdiff_t>(r * cols_));
    }

    Matrix transpose() const {
        Matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    double max_abs() const noexcept {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }
    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    Matrix& operator+=(const Matrix& o) {
        check_same(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Matrix& operator-=(const Matrix& o) {
        check_same(o, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Matrix& operator*=(double s) noexcept {
        for (double& v : data_) v *= s;
        return *this;
    }

    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(Matrix a, double s) { return a *= s; }
    friend Matrix operator*(double s, Matrix a) { return a *= s; }

    bool operator==(const Matrix& o) const = default;

private:
    void check_same(const Matrix& o, const char* op) const {
        if (rows_ != o.rows_ || cols_ != o.cols_)
            throw DimensionMismatch(std::string("Matrix ") + op + ": shape mismatch " + shape_string() +
                                    " vs " + o.shape_string());
    }

public:
    std::string shape_string() const {
        return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// a * b
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    detail::require_dims(a.cols() == b.rows(),
                         "matmul: " + a.shape_string() + " * " + b.shape_string());
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto crow = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

// a * b^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    detail::require_dims(a.cols() == b.cols(),
                         "matmul_nt: " + a.shape_string() + " * " + b.shape_string() + "^T");
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto arow = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            auto brow = b.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += arow[k] * brow[k];
            c(i, j) = s;
        }
    }
    return c;
}

// a^T * b
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    detail::require_dims(a.rows() == b.rows(),
                         "matmul_tn: " + a.shape_string() + "^T * " + b.shape_string());
    Matrix c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        auto arow = a.row(k);
        auto brow = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = arow[i];
            if (aki == 0.0) continue;
            auto crow = c.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aki * brow[j];
        }
    }
    return c;
}

inline Vector matvec(const Matrix& a, std::span<const double> x) {
    detail::require_dims(a.cols() == x.size(), "matvec: " + a.shape_string() + " * vector of length " +
                                                   std::to_string(x.size()));
    Vector y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto arow = a.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) s += arow[j] * x[j];
        y[i] = s;
    }
    return y;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    detail::require_dims(a.size() == b.size(), "dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline Vector axpy(double alpha, std::span<const double> x, std::span<const double> y) {
    detail::require_dims(x.size() == y.size(), "axpy: length mismatch");
    Vector r(y.begin(), y.end());
    for (std::size_t i = 0; i < x.size(); ++i) r[i] += alpha * x[i];
    return r;
}

// Mean of the rows of m, as a vector of length m.cols().
inline Vector row_mean(const Matrix& m) {
    Vector mean(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) mean[j] += m(i, j);
    for (double& v : mean) v /= static_cast<double>(m.rows());
    return mean;
}

inline Matrix vstack(const Matrix& top, const Matrix& bottom) {
    if (top.empty()) return bottom;
    detail::require_dims(top.cols() == bottom.cols(), "vstack: column mismatch");
    std::vector<double> d(top.storage());
    d.insert(d.end(), bottom.storage().begin(), bottom.storage().end());
    return Matrix(top.rows() + bottom.rows(), top.cols(), std::move(d));
}

// Rows [first, first + count).
inline Matrix row_block(const Matrix& m, std::size_t first, std::size_t count) {
    detail::require_dims(first + count <= m.rows(), "row_block: out of range");
    auto begin = m.storage().begin() + static_cast<std::ptrdiff_t>(first * m.cols());
    return Matrix(count, m.cols(), std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(count * m.cols())));
}

}  // namespace dassim
