#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dassim/operators/operator.hpp"

namespace dassim {

struct Lorenz63Config {
    double sigma = 10.0;
    double r = 35.0;
    double beta = 8.0 / 3.0;
    double dt = 1e-3;
    double t_final = 25.0;
    Vector x0{0.0, 1.0, 2.0};

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw TypeMismatch("lorenz63: dt must be positive");
        if (!(t_final > 0.0) || !std::isfinite(t_final)) throw TypeMismatch("lorenz63: t_final must be positive");
        detail::require_dims(x0.size() == 3, "lorenz63: x0 must have 3 components");
    }

    // Number of trajectory rows, t_final / dt rounded to the nearest step.
    std::size_t steps() const { return static_cast<std::size_t>(std::llround(t_final / dt)); }
};

// One forward-Euler step of
//   x' = σ(y - x),  y' = x(r - z) - y,  z' = xy - βz.
inline Vector lorenz_step(std::span<const double> s, const Lorenz63Config& c) {
    detail::require_dims(s.size() == 3, "lorenz_step: state must have 3 components");
    const double x = s[0], y = s[1], z = s[2];
    return {x + c.dt * (c.sigma * (y - x)), y + c.dt * (x * (c.r - z) - y), z + c.dt * (x * y - c.beta * z)};
}

// cfg.steps() rows; row t is the state after t steps, row 0 is x0.
inline Matrix lorenz_trajectory(const Lorenz63Config& cfg) {
    cfg.validate();
    const std::size_t n = cfg.steps();
    Matrix out(n, 3);
    Vector s = cfg.x0;
    for (std::size_t t = 0; t < n; ++t) {
        if (t > 0) s = lorenz_step(s, cfg);
        if (!std::isfinite(s[0]) || !std::isfinite(s[1]) || !std::isfinite(s[2]))
            throw NanEncountered("lorenz_trajectory: diverged at step " + std::to_string(t));
        out.set_row(t, s);
    }
    return out;
}

namespace detail {

// `steps` Euler steps as a forward model (steps + 1 rows) with a
// hand-written adjoint sweep.
class LorenzModel final : public OperatorImpl {
public:
    LorenzModel(Lorenz63Config cfg, std::size_t steps) : cfg_(std::move(cfg)), steps_(steps) {}
    std::size_t input_dim() const override { return 3; }
    std::size_t output_rows() const override { return steps_ + 1; }
    std::size_t output_dim() const override { return 3; }
    std::string kind() const override { return "lorenz63"; }

    Var apply(Tape&, const Var& x) const override {
        Matrix seq(steps_ + 1, 3);
        Vector s = x.value().row_copy(0);
        seq.set_row(0, s);
        for (std::size_t t = 1; t <= steps_; ++t) {
            s = lorenz_step(s, cfg_);
            seq.set_row(t, s);
        }
        Matrix states = seq;
        const Lorenz63Config c = cfg_;
        return custom(x, std::move(seq), [states = std::move(states), c](const Matrix& g) {
            // acc holds the cotangent of state t; pull back through the
            // Jacobian I + dt·DF(x_{t-1}) and add the direct term of row t-1.
            double a0 = g(states.rows() - 1, 0), a1 = g(states.rows() - 1, 1), a2 = g(states.rows() - 1, 2);
            for (std::size_t t = states.rows() - 1; t > 0; --t) {
                const double x = states(t - 1, 0), y = states(t - 1, 1), z = states(t - 1, 2);
                const double b0 = a0 + c.dt * (-c.sigma * a0 + (c.r - z) * a1 + y * a2);
                const double b1 = a1 + c.dt * (c.sigma * a0 - a1 + x * a2);
                const double b2 = a2 + c.dt * (-x * a1 - c.beta * a2);
                a0 = b0 + g(t - 1, 0);
                a1 = b1 + g(t - 1, 1);
                a2 = b2 + g(t - 1, 2);
            }
            return Matrix{{a0, a1, a2}};
        });
    }

    // args = (r, σ, β), i.e. Rayleigh number, Prandtl number, geometry
    // factor.
    std::shared_ptr<const OperatorImpl> bind_args(std::span<const double> args) const override {
        if (args.size() != 3)
            throw TypeMismatch("lorenz63 takes 3 arguments (r, sigma, beta), got " + std::to_string(args.size()));
        Lorenz63Config c = cfg_;
        c.r = args[0];
        c.sigma = args[1];
        c.beta = args[2];
        return std::make_shared<LorenzModel>(c, steps_);
    }

private:
    Lorenz63Config cfg_;
    std::size_t steps_;
};

}  // namespace detail

inline DifferentiableOperator lorenz_forward_model(const Lorenz63Config& cfg, std::size_t steps) {
    cfg.validate();
    return DifferentiableOperator(std::make_shared<detail::LorenzModel>(cfg, steps));
}

}  // namespace dassim
