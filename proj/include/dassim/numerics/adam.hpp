#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>

#include "dassim/numerics/matrix.hpp"

namespace dassim {

struct AdamState {
    Vector first_moment;
    Vector second_moment;
    std::uint64_t step_count = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState for_size(std::size_t n, double learning_rate) {
        AdamState s;
        s.first_moment.assign(n, 0.0);
        s.second_moment.assign(n, 0.0);
        s.learning_rate = learning_rate;
        return s;
    }
};

namespace detail {

// In-place Adam update of params with bias-corrected moments.
inline void adam_update_inplace(std::span<double> params, std::span<const double> grad, AdamState& st) {
    require_dims(params.size() == grad.size() && params.size() == st.first_moment.size() &&
                     params.size() == st.second_moment.size(),
                 "adam_step: parameter, gradient and moment lengths differ");
    for (double g : grad)
        if (!std::isfinite(g)) throw NanEncountered("adam_step: non-finite gradient");
    st.step_count += 1;
    const double t = static_cast<double>(st.step_count);
    const double c1 = 1.0 - std::pow(st.beta1, t);
    const double c2 = 1.0 - std::pow(st.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        double& m = st.first_moment[i];
        double& v = st.second_moment[i];
        m = st.beta1 * m + (1.0 - st.beta1) * grad[i];
        v = st.beta2 * v + (1.0 - st.beta2) * grad[i] * grad[i];
        const double m_hat = m / c1;
        const double v_hat = v / c2;
        params[i] -= st.learning_rate * m_hat / (std::sqrt(v_hat) + st.epsilon);
    }
}

}  // namespace detail

// One Adam step. Pure: the input state is left untouched.
inline std::pair<Vector, AdamState> adam_step(std::span<const double> params, std::span<const double> grad,
                                              AdamState st) {
    Vector out(params.begin(), params.end());
    detail::adam_update_inplace(out, grad, st);
    return {std::move(out), std::move(st)};
}

// Central-difference gradient of f at x with step h.
inline Vector finite_diff_gradient(const std::function<double(std::span<const double>)>& f,
                                   std::span<const double> x, double h = 1e-5) {
    if (!(h > 0.0)) throw DimensionMismatch("finite_diff_gradient: step must be positive");
    Vector probe(x.begin(), x.end());
    Vector grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = probe[i];
        probe[i] = xi + h;
        const double up = f(probe);
        probe[i] = xi - h;
        const double down = f(probe);
        probe[i] = xi;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw NanEncountered("finite_diff_gradient: non-finite function value at component " + std::to_string(i));
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

}  // namespace dassim
