#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dassim/numerics/matrix.hpp"

namespace dassim {

namespace detail {

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    require_dims(a.rows() == b.rows() && a.cols() == b.cols(),
                 std::string(what) + ": shapes " + a.shape_string() + " and " + b.shape_string() + " differ");
    require_dims(!a.empty(), std::string(what) + ": empty input");
}

}  // namespace detail

inline double mse(const Matrix& pred, const Matrix& ref) {
    detail::require_same_shape(pred, ref, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.data()[i] - ref.data()[i];
        s += d * d;
    }
    return s / static_cast<double>(pred.size());
}

// sqrt(mse / mean-square(ref)) over all entries.
inline double rrmse(const Matrix& pred, const Matrix& ref) {
    detail::require_same_shape(pred, ref, "rrmse");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.data()[i] - ref.data()[i];
        num += d * d;
        den += ref.data()[i] * ref.data()[i];
    }
    if (den == 0.0) throw ZeroReference("rrmse: reference is identically zero");
    return std::sqrt(num / den);
}

// One value per column (state component).
inline Vector rrmse_per_component(const Matrix& pred, const Matrix& ref) {
    detail::require_same_shape(pred, ref, "rrmse");
    Vector out(pred.cols());
    for (std::size_t j = 0; j < pred.cols(); ++j) {
        double num = 0.0, den = 0.0;
        for (std::size_t t = 0; t < pred.rows(); ++t) {
            const double d = pred(t, j) - ref(t, j);
            num += d * d;
            den += ref(t, j) * ref(t, j);
        }
        if (den == 0.0) throw ZeroReference("rrmse: reference component " + std::to_string(j) + " is identically zero");
        out[j] = std::sqrt(num / den);
    }
    return out;
}

// Pointwise error over time: |pred - ref| at each row, divided by the
// root-mean-square of that reference component over the whole window.
inline Matrix rrmse_series(const Matrix& pred, const Matrix& ref) {
    detail::require_same_shape(pred, ref, "rrmse_series");
    Matrix out(pred.rows(), pred.cols());
    for (std::size_t j = 0; j < pred.cols(); ++j) {
        double ms = 0.0;
        for (std::size_t t = 0; t < ref.rows(); ++t) ms += ref(t, j) * ref(t, j);
        ms /= static_cast<double>(ref.rows());
        if (ms == 0.0) throw ZeroReference("rrmse_series: reference component " + std::to_string(j) + " is identically zero");
        const double scale = std::sqrt(ms);
        for (std::size_t t = 0; t < pred.rows(); ++t) out(t, j) = std::abs(pred(t, j) - ref(t, j)) / scale;
    }
    return out;
}

// Structural similarity with an 11x11 Gaussian window (σ = 1.5), shrunk to
// the largest odd size that fits smaller images, averaged over all window
// positions fully inside the image. The dynamic range L is taken over both
// images so the index is symmetric in its arguments.
inline double ssim(const Matrix& a, const Matrix& b) {
    detail::require_same_shape(a, b, "ssim");
    double lo = a.data()[0], hi = a.data()[0];
    for (std::size_t i = 0; i < a.size(); ++i) {
        lo = std::min({lo, a.data()[i], b.data()[i]});
        hi = std::max({hi, a.data()[i], b.data()[i]});
    }
    const double range = hi - lo;
    if (range == 0.0) return 1.0;
    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);

    std::size_t w = std::min<std::size_t>({11, a.rows(), a.cols()});
    if (w % 2 == 0) --w;
    const double half = static_cast<double>(w / 2);
    std::vector<double> kernel(w * w);
    double total = 0.0;
    for (std::size_t p = 0; p < w; ++p) {
        for (std::size_t q = 0; q < w; ++q) {
            const double dp = static_cast<double>(p) - half, dq = static_cast<double>(q) - half;
            kernel[p * w + q] = std::exp(-(dp * dp + dq * dq) / (2.0 * 1.5 * 1.5));
            total += kernel[p * w + q];
        }
    }
    for (double& k : kernel) k /= total;

    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i + w <= a.rows(); ++i) {
        for (std::size_t j = 0; j + w <= a.cols(); ++j) {
            double ma = 0, mb = 0;
            for (std::size_t p = 0; p < w; ++p)
                for (std::size_t q = 0; q < w; ++q) {
                    ma += kernel[p * w + q] * a(i + p, j + q);
                    mb += kernel[p * w + q] * b(i + p, j + q);
                }
            double va = 0, vb = 0, cov = 0;
            for (std::size_t p = 0; p < w; ++p)
                for (std::size_t q = 0; q < w; ++q) {
                    const double da = a(i + p, j + q) - ma, db = b(i + p, j + q) - mb;
                    va += kernel[p * w + q] * da * da;
                    vb += kernel[p * w + q] * db * db;
                    cov += kernel[p * w + q] * (da * db);
                }
            sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    }
    return sum / static_cast<double>(count);
}

// Percentage improvement (1 - with/without)·100.
inline double improvement_pct(double with_assimilation, double without) {
    return (1.0 - with_assimilation / without) * 100.0;
}

}  // namespace dassim
