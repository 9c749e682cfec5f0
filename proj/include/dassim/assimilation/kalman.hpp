#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dassim/assimilation/observations.hpp"
#include "dassim/numerics/covariance.hpp"
#include "dassim/operators/operator.hpp"

namespace dassim {

// Trajectories over the full forwarding window. Row 0 is the initial
// instant and row t lies t steps later, so a run over observations at
// times t_1 < ... < t_Ny has t_Ny + 1 rows.
struct FilterOutput {
    Matrix average_trajectory;
    std::optional<std::vector<Matrix>> member_trajectories;  // EnKF only
};

namespace detail {

inline Matrix symmetrized(const Matrix& m) {
    Matrix s = m;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) s(i, j) = 0.5 * (m(i, j) + m(j, i));
    return s;
}

// Runs m once from x and checks that it covers exactly `steps` steps.
inline Matrix forward_segment(const DifferentiableOperator& m, std::span<const double> x, std::size_t steps) {
    if (m.output_rows() != steps + 1)
        throw SequenceLengthMismatch("forward model returns " + std::to_string(m.output_rows()) +
                                     " rows but the next observation is " + std::to_string(steps) +
                                     " steps ahead (expected " + std::to_string(steps + 1) + " rows)");
    Matrix seq = m.evaluate(x);
    if (!seq.all_finite()) throw NanEncountered("forward model produced non-finite states");
    return seq;
}

// Copies rows 1.. of a segment that started at step `start`.
inline void write_segment(Matrix& trajectory, const Matrix& seq, std::size_t start) {
    for (std::size_t t = 1; t < seq.rows(); ++t) trajectory.set_row(start + t, seq.row(t));
}

inline std::size_t window_rows(const ObservationSeries& obs) { return obs.size() == 0 ? 1 : obs.times.back() + 1; }

}  // namespace detail

// x_a = x_f + P Hᵀ (H P Hᵀ + R)⁻¹ (y - H x_f).
inline Vector kalman_update(std::span<const double> x_f, const CovarianceMatrix& p, const Matrix& h,
                            const CovarianceMatrix& r, std::span<const double> y) {
    const std::size_t n = x_f.size();
    detail::require_dims(p.dim() == n, "kalman_update: P is " + p.matrix().shape_string() + " for a state of length " +
                                           std::to_string(n));
    detail::require_dims(h.cols() == n, "kalman_update: H has " + std::to_string(h.cols()) + " columns, state has " +
                                            std::to_string(n));
    detail::require_dims(h.rows() == y.size() && r.dim() == y.size(),
                         "kalman_update: H, R and y disagree on the observation length");
    const Matrix pht = matmul_nt(p.matrix(), h);  // n x m
    const CovarianceMatrix s(detail::symmetrized(matmul(h, pht) + r.matrix()));
    Vector innovation(y.begin(), y.end());
    const Vector hx = matvec(h, x_f);
    for (std::size_t i = 0; i < innovation.size(); ++i) innovation[i] -= hx[i];
    const Vector w = spd_solve(s, innovation);
    Vector x_a(x_f.begin(), x_f.end());
    const Vector inc = matvec(pht, w);
    for (std::size_t i = 0; i < n; ++i) x_a[i] += inc[i];
    return x_a;
}

struct KalmanOptions {
    // Keep the raw forecast rows instead of writing each analysis into the
    // trajectory at its observation instant.
    bool forecast_only = false;
};

// Constant-P Kalman filter: forward the previous analysis through m, take
// the last row as forecast, update, repeat. P is never propagated.
inline FilterOutput kalman_filter(const DifferentiableOperator& m, const Matrix& h, const CovarianceMatrix& p,
                                  const CovarianceMatrix& r, std::span<const double> x_b,
                                  const ObservationSeries& obs, KalmanOptions options = {}) {
    obs.check();
    detail::require_dims(m.input_dim() == x_b.size() && m.output_dim() == x_b.size(),
                         "kalman_filter: forward model dims do not match the state");
    Vector x(x_b.begin(), x_b.end());
    Matrix trajectory(detail::window_rows(obs), x.size());
    trajectory.set_row(0, x);
    std::size_t start = 0;
    for (std::size_t k = 0; k < obs.size(); ++k) {
        Matrix seq = detail::forward_segment(m, x, obs.segment(k));
        const Vector forecast = seq.row_copy(seq.rows() - 1);
        x = kalman_update(forecast, p, h, r, obs.values.row(k));
        if (!options.forecast_only) seq.set_row(seq.rows() - 1, x);
        detail::write_segment(trajectory, seq, start);
        start = obs.times[k];
    }
    return {std::move(trajectory), std::nullopt};
}

}  // namespace dassim
