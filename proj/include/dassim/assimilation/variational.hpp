#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "dassim/assimilation/observations.hpp"
#include "dassim/numerics/adam.hpp"
#include "dassim/numerics/tape.hpp"
#include "dassim/operators/operator.hpp"

namespace dassim {

// One entry per iteration, recorded before that iteration's Adam step.
// jb and jo stay empty for 3DVar; states stay empty when logging of state
// snapshots is switched off.
struct VariationalLog {
    std::vector<double> j;
    std::vector<double> jb;
    std::vector<double> jo;
    std::vector<double> grad_norm;
    std::vector<Matrix> states;
};

struct VariationalOutput {
    Matrix assimilated_state;  // 1 x n, or B x n for batched 3DVar
    VariationalLog log;
};

struct VariationalSettings {
    std::size_t max_iterations = 100;
    double learning_rate = 1e-2;
    bool record_log = true;
};

class OptimizationDiverged : public NanEncountered {
public:
    OptimizationDiverged(const std::string& what, VariationalLog partial)
        : NanEncountered(what), partial_log(std::move(partial)) {}
    VariationalLog partial_log;
};

struct CostTerms {
    Var jb;
    Var jo;
    Var j;
};

// ‖x - x_b‖²_{B⁻¹} + ‖y - h(x)‖²_{R⁻¹}, summed over rows for a batch.
inline CostTerms record_cost_3dvar(Tape& tape, const Var& x, const Matrix& x_b, const CovarianceMatrix& b,
                                   const CovarianceMatrix& r, const Matrix& y, const DifferentiableOperator& h) {
    detail::require_dims(h.output_rows() == 1, "3DVar: observation operator must return one row per state");
    detail::require_dims(x.rows() == x_b.rows() && x.cols() == x_b.cols(),
                         "3DVar: state " + x.value().shape_string() + " vs background " + x_b.shape_string());
    detail::require_dims(y.rows() == x_b.rows() && y.cols() == h.output_dim(),
                         "3DVar: observations " + y.shape_string() + " do not match the background batch and h");
    Var jb = weighted_sq_norm(x - tape.constant(x_b), b);
    Var jo = weighted_sq_norm(tape.constant(y) - h.apply(tape, x), r);
    return {jb, jo, jb + jo};
}

inline double cost_3dvar(std::span<const double> x, std::span<const double> x_b, const CovarianceMatrix& b,
                         const CovarianceMatrix& r, std::span<const double> y, const DifferentiableOperator& h) {
    Tape tape;
    return record_cost_3dvar(tape, tape.input(Matrix::row_vector(x)), Matrix::row_vector(x_b), b, r,
                             Matrix::row_vector(y), h)
        .j.scalar();
}

inline Vector cost_3dvar_gradient(std::span<const double> x, std::span<const double> x_b, const CovarianceMatrix& b,
                                  const CovarianceMatrix& r, std::span<const double> y, const DifferentiableOperator& h) {
    Tape tape;
    Var xv = tape.input(Matrix::row_vector(x));
    Var j = record_cost_3dvar(tape, xv, Matrix::row_vector(x_b), b, r, Matrix::row_vector(y), h).j;
    return tape.backward(j).of(xv).storage();
}

// Jb = ‖x - x_b‖²_{B⁻¹}; Jo sums ‖y_k - h(x_k)‖²_{R⁻¹} where x_1 = x and
// x_{k+1} is the last row of m(x_k).
inline CostTerms record_cost_4dvar(Tape& tape, const Var& x, const Matrix& x_b, const CovarianceMatrix& b,
                                   const CovarianceMatrix& r, const DifferentiableOperator& m,
                                   const DifferentiableOperator& h, const ObservationSeries& obs) {
    obs.check();
    detail::require_dims(obs.size() >= 2, "4DVar: needs at least 2 observations, got " + std::to_string(obs.size()));
    detail::require_dims(x.rows() == 1 && x_b.rows() == 1 && x.cols() == x_b.cols(), "4DVar: state must be a single row");
    detail::require_dims(h.output_rows() == 1, "4DVar: observation operator must return one row per state");
    detail::require_dims(obs.obs_dim() == h.output_dim(), "4DVar: observation length does not match h");
    for (std::size_t k = 1; k < obs.size(); ++k)
        if (m.output_rows() != obs.gaps[k - 1] + 1)
            throw SequenceLengthMismatch("4DVar: forward model returns " + std::to_string(m.output_rows()) +
                                         " rows but gap " + std::to_string(k) + " is " +
                                         std::to_string(obs.gaps[k - 1]) + " steps");

    Var jb = weighted_sq_norm(x - tape.constant(x_b), b);
    Var state = x;
    Var jo = weighted_sq_norm(tape.constant(Matrix::row_vector(obs.values.row(0))) - h.apply(tape, state), r);
    for (std::size_t k = 1; k < obs.size(); ++k) {
        state = last_row(m.apply(tape, state));
        jo = jo + weighted_sq_norm(tape.constant(Matrix::row_vector(obs.values.row(k))) - h.apply(tape, state), r);
    }
    return {jb, jo, jb + jo};
}

struct Cost4dvar {
    double jb = 0.0;
    double jo = 0.0;
    double j = 0.0;
};

inline Cost4dvar cost_4dvar(std::span<const double> x, std::span<const double> x_b, const CovarianceMatrix& b,
                            const CovarianceMatrix& r, const DifferentiableOperator& m, const DifferentiableOperator& h,
                            const ObservationSeries& obs) {
    Tape tape;
    auto t = record_cost_4dvar(tape, tape.input(Matrix::row_vector(x)), Matrix::row_vector(x_b), b, r, m, h, obs);
    return {t.jb.scalar(), t.jo.scalar(), t.jb.scalar() + t.jo.scalar()};
}

inline Vector cost_4dvar_gradient(std::span<const double> x, std::span<const double> x_b, const CovarianceMatrix& b,
                                  const CovarianceMatrix& r, const DifferentiableOperator& m,
                                  const DifferentiableOperator& h, const ObservationSeries& obs) {
    Tape tape;
    Var xv = tape.input(Matrix::row_vector(x));
    auto t = record_cost_4dvar(tape, xv, Matrix::row_vector(x_b), b, r, m, h, obs);
    return tape.backward(t.j).of(xv).storage();
}

namespace detail {

// Fixed-budget Adam descent. `record` builds the cost on a fresh tape;
// `split` says whether Jb and Jo are logged separately.
template <class Record>
VariationalOutput minimize(const Matrix& start, const VariationalSettings& s, bool split, Record record) {
    if (!(s.learning_rate >= 0.0) || !std::isfinite(s.learning_rate))
        throw TypeMismatch("learning rate must be finite and non-negative");
    VariationalOutput out{start, {}};
    Matrix& x = out.assimilated_state;
    VariationalLog& log = out.log;
    AdamState adam = AdamState::for_size(x.size(), s.learning_rate);
    for (std::size_t it = 0; it < s.max_iterations; ++it) {
        Tape tape;
        Var xv = tape.input(x);
        CostTerms terms = record(tape, xv);
        const double jb = terms.jb.scalar();
        const double jo = terms.jo.scalar();
        const double j = jb + jo;
        Matrix grad = tape.backward(terms.j).of(xv);
        if (!std::isfinite(j) || !grad.all_finite())
            throw OptimizationDiverged("optimization diverged at iteration " + std::to_string(it + 1), std::move(log));
        log.j.push_back(j);
        if (split) {
            log.jb.push_back(jb);
            log.jo.push_back(jo);
        }
        log.grad_norm.push_back(norm2(grad.data()));
        if (s.record_log) log.states.push_back(x);
        adam_update_inplace(x.data(), grad.data(), adam);
    }
    return out;
}

}  // namespace detail

// 3DVar by Adam from a copy of x_b. A batch (B rows of x_b and y) shares
// B, R and h; Adam acts elementwise and each row's cost depends only on
// that row, so one optimizer over the batch equals B independent runs.
inline VariationalOutput var3d(const DifferentiableOperator& h, const CovarianceMatrix& b, const CovarianceMatrix& r,
                               const Matrix& x_b, const Matrix& y, const VariationalSettings& s) {
    detail::require_dims(x_b.rows() >= 1 && x_b.cols() == h.input_dim() && x_b.cols() == b.dim(),
                         "var3d: background " + x_b.shape_string() + " does not match B and h");
    detail::require_dims(r.dim() == h.output_dim(), "var3d: R does not match the observation length");
    return detail::minimize(x_b, s, false,
                            [&](Tape& tape, const Var& x) { return record_cost_3dvar(tape, x, x_b, b, r, y, h); });
}

inline VariationalOutput var4d(const DifferentiableOperator& m, const DifferentiableOperator& h,
                               const CovarianceMatrix& b, const CovarianceMatrix& r, std::span<const double> x_b,
                               const ObservationSeries& obs, const VariationalSettings& s) {
    const Matrix xb = Matrix::row_vector(x_b);
    detail::require_dims(x_b.size() == b.dim() && x_b.size() == h.input_dim() && x_b.size() == m.input_dim() &&
                             m.output_dim() == x_b.size(),
                         "var4d: background length does not match B, m and h");
    detail::require_dims(r.dim() == h.output_dim(), "var4d: R does not match the observation length");
    return detail::minimize(xb, s, true,
                            [&](Tape& tape, const Var& x) { return record_cost_4dvar(tape, x, xb, b, r, m, h, obs); });
}

}  // namespace dassim
