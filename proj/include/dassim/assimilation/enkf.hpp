#pragma once

#include <string>
#include <vector>

#include "dassim/assimilation/kalman.hpp"
#include "dassim/numerics/rng.hpp"

namespace dassim {

struct EnkfOptions {
    // Added to the diagonal of H P_e Hᵀ + R before solving. Zero keeps the
    // textbook update; a collapsed ensemble then raises NotPositiveDefinite.
    double r_jitter = 0.0;
    bool keep_members = true;
};

// Stochastic EnKF with perturbed observations. Member i draws its initial
// state and every observation perturbation from rng.fork(i), so results
// do not depend on the order members are processed in.
// 
// The gain P_e Hᵀ (H P_e Hᵀ + R)⁻¹ is formed from ensemble anomalies:
// with A = X - x̄ and Y = h(X) - mean h(X), P_e Hᵀ = Aᵀ Y / (N - 1) and
// H P_e Hᵀ = Yᵀ Y / (N - 1). For a linear h these equal the products with
// the sample covariance P_e = Aᵀ A / (N - 1) exactly; for a nonlinear h
// they are the usual ensemble linearization.
inline FilterOutput enkf(std::size_t n_e, const DifferentiableOperator& m, const DifferentiableOperator& h,
                         const CovarianceMatrix& p, const CovarianceMatrix& r, std::span<const double> x_b,
                         const ObservationSeries& obs, const Rng& rng, EnkfOptions options = {}) {
    obs.check();
    const std::size_t n = x_b.size();
    detail::require_dims(n_e >= 2, "enkf: need at least 2 ensemble members, got " + std::to_string(n_e));
    detail::require_dims(p.dim() == n, "enkf: P does not match the state length");
    detail::require_dims(m.input_dim() == n && m.output_dim() == n, "enkf: forward model dims do not match the state");
    detail::require_dims(h.input_dim() == n && h.output_rows() == 1, "enkf: observation operator must map one state to one row");
    const std::size_t d = h.output_dim();
    detail::require_dims(r.dim() == d && obs.obs_dim() == d, "enkf: R, observations and h disagree on the observation length");

    std::vector<Rng> streams;
    streams.reserve(n_e);
    for (std::size_t i = 0; i < n_e; ++i) streams.push_back(rng.fork(i));

    Matrix ensemble(n_e, n);
    for (std::size_t i = 0; i < n_e; ++i) ensemble.set_row(i, sample_gaussian(x_b, p, 1, streams[i]).row(0));

    const std::size_t rows = detail::window_rows(obs);
    std::vector<Matrix> members(n_e, Matrix(rows, n));
    for (std::size_t i = 0; i < n_e; ++i) members[i].set_row(0, ensemble.row(i));

    const Vector zero_obs(d, 0.0);
    const double denom = static_cast<double>(n_e - 1);
    std::size_t start = 0;
    for (std::size_t k = 0; k < obs.size(); ++k) {
        std::vector<Matrix> sequences;
        sequences.reserve(n_e);
        for (std::size_t i = 0; i < n_e; ++i) {
            sequences.push_back(detail::forward_segment(m, ensemble.row(i), obs.segment(k)));
            ensemble.set_row(i, sequences.back().row(sequences.back().rows() - 1));
        }

        const Matrix hx = h.evaluate(ensemble);
        if (!hx.all_finite()) throw NanEncountered("enkf: observation operator produced non-finite values");
        Matrix anomalies = ensemble;
        Matrix obs_anomalies = hx;
        const Vector mean = row_mean(ensemble);
        const Vector hmean = row_mean(hx);
        for (std::size_t i = 0; i < n_e; ++i) {
            for (std::size_t j = 0; j < n; ++j) anomalies(i, j) -= mean[j];
            for (std::size_t j = 0; j < d; ++j) obs_anomalies(i, j) -= hmean[j];
        }
        Matrix pht = matmul_tn(anomalies, obs_anomalies);
        pht *= 1.0 / denom;
        Matrix s = matmul_tn(obs_anomalies, obs_anomalies);
        s *= 1.0 / denom;
        s += r.matrix();
        for (std::size_t j = 0; j < d; ++j) s(j, j) += options.r_jitter;
        const CovarianceMatrix s_cov(detail::symmetrized(s));
        if (!s_cov.is_positive_definite())
            throw NotPositiveDefinite("enkf: H P_e Hᵀ + R is not positive definite at observation " +
                                      std::to_string(k + 1) + " (ensemble collapse?)");

        // Innovations against perturbed observations, one column per member.
        Matrix innovations(d, n_e);
        for (std::size_t i = 0; i < n_e; ++i) {
            const Matrix eps = sample_gaussian(zero_obs, r, 1, streams[i]);
            for (std::size_t j = 0; j < d; ++j) innovations(j, i) = obs.values(k, j) + eps(0, j) - hx(i, j);
        }
        const Matrix increments = matmul(pht, spd_solve(s_cov, innovations));  // n x N
        for (std::size_t i = 0; i < n_e; ++i)
            for (std::size_t j = 0; j < n; ++j) ensemble(i, j) += increments(j, i);

        for (std::size_t i = 0; i < n_e; ++i) {
            sequences[i].set_row(sequences[i].rows() - 1, ensemble.row(i));
            detail::write_segment(members[i], sequences[i], start);
        }
        start = obs.times[k];
    }

    Matrix average(rows, n);
    for (const Matrix& mem : members) average += mem;
    average *= 1.0 / static_cast<double>(n_e);

    FilterOutput out{std::move(average), std::nullopt};
    if (options.keep_members) out.member_trajectories = std::move(members);
    return out;
}

}  // namespace dassim
