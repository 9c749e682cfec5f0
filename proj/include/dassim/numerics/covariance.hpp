#pragma once

#include <cmath>
#include <memory>
#include <string>

#include "dassim/numerics/matrix.hpp"

namespace dassim {

// Lower-triangular L with L L^T = c. Throws NotPositiveDefinite on the
// first pivot that is not strictly positive.
inline Matrix cholesky_factor(const Matrix& c) {
    detail::require_dims(c.rows() == c.cols(), "cholesky_factor: matrix is not square " + c.shape_string());
    const std::size_t n = c.rows();
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double pivot = c(j, j);
        for (std::size_t k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
        if (!(pivot > 0.0))
            throw NotPositiveDefinite("cholesky_factor: pivot " + std::to_string(j) + " is " + std::to_string(pivot));
        const double ljj = std::sqrt(pivot);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = c(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / ljj;
        }
    }
    return l;
}

// Solves (L L^T) X = rhs column by column, given the lower factor L.
inline Matrix cholesky_solve(const Matrix& l, const Matrix& rhs) {
    const std::size_t n = l.rows();
    detail::require_dims(rhs.rows() == n, "cholesky_solve: rhs has " + std::to_string(rhs.rows()) +
                                              " rows, expected " + std::to_string(n));
    Matrix x = rhs;
    for (std::size_t c = 0; c < rhs.cols(); ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = x(i, c);
            for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x(k, c);
            x(i, c) = s / l(i, i);
        }
        for (std::size_t ii = n; ii-- > 0;) {
            double s = x(ii, c);
            for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x(k, c);
            x(ii, c) = s / l(ii, ii);
        }
    }
    return x;
}

// Symmetric error covariance (B, R or P).
// 
// Construction checks squareness, finiteness and symmetry (relative 1e-12
// of the largest entry), then stores the symmetrized matrix. Positive
// definiteness is checked lazily: the zero matrix is a legal value (a
// collapsed prior), but any solve against it raises NotPositiveDefinite.
class CovarianceMatrix {
public:
    static constexpr double kSymmetryTolerance = 1e-12;

    CovarianceMatrix() = default;
    explicit CovarianceMatrix(const Matrix& m) {
        detail::require_dims(m.rows() == m.cols(), "CovarianceMatrix: not square " + m.shape_string());
        if (!m.all_finite()) throw NotPositiveDefinite("CovarianceMatrix: non-finite entry");
        const double scale = m.max_abs();
        const std::size_t n = m.rows();
        matrix_ = Matrix(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (std::abs(m(i, j) - m(j, i)) > kSymmetryTolerance * scale)
                    throw NotPositiveDefinite("CovarianceMatrix: not symmetric at (" + std::to_string(i) + "," +
                                              std::to_string(j) + ")");
                matrix_(i, j) = 0.5 * (m(i, j) + m(j, i));
            }
        }
        try {
            factor_ = std::make_shared<const Matrix>(cholesky_factor(matrix_));
        } catch (const NotPositiveDefinite& e) {
            failure_ = e.what();
        }
    }

    // Like the constructor but rejects anything that is not strictly
    // positive definite.
    static CovarianceMatrix strict(const Matrix& m) {
        CovarianceMatrix c(m);
        c.factor();
        return c;
    }
    static CovarianceMatrix scaled_identity(std::size_t n, double variance) {
        return CovarianceMatrix(Matrix::identity(n) * variance);
    }

    std::size_t dim() const noexcept { return matrix_.rows(); }
    const Matrix& matrix() const noexcept { return matrix_; }
    bool is_positive_definite() const noexcept { return factor_ != nullptr; }
    bool is_zero() const noexcept { return matrix_.max_abs() == 0.0; }

    const Matrix& factor() const {
        if (!factor_) throw NotPositiveDefinite("covariance is not positive definite: " + failure_);
        return *factor_;
    }

private:
    Matrix matrix_;
    std::shared_ptr<const Matrix> factor_;
    std::string failure_;
};

inline Matrix cholesky_factor(const CovarianceMatrix& c) { return c.factor(); }

// c^{-1} rhs without forming the inverse.
inline Matrix spd_solve(const CovarianceMatrix& c, const Matrix& rhs) {
    detail::require_dims(c.dim() == rhs.rows(), "spd_solve: covariance dim " + std::to_string(c.dim()) +
                                                    " vs rhs " + rhs.shape_string());
    return cholesky_solve(c.factor(), rhs);
}

inline Vector spd_solve(const CovarianceMatrix& c, std::span<const double> rhs) {
    return spd_solve(c, Matrix::column_vector(rhs)).storage();
}

}  // namespace dassim
