#pragma once

#include <cmath>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "dassim/assimilation/enkf.hpp"
#include "dassim/assimilation/variational.hpp"
#include "dassim/casebuilder/parameters.hpp"

namespace dassim {

using IntermediateSeries = std::variant<std::vector<double>, std::vector<Matrix>>;
using IntermediateResults = std::map<std::string, IntermediateSeries>;
using ResultValue = std::variant<Matrix, std::vector<Matrix>, IntermediateResults>;
using ResultMap = std::map<std::string, ResultValue>;

struct ValidationIssue {
    std::string parameter;
    std::string message;
    bool operator==(const ValidationIssue&) const = default;
};

class ValidationFailed : public Error {
public:
    explicit ValidationFailed(std::vector<ValidationIssue> list)
        : Error(summary(list)), issues(std::move(list)) {}
    std::vector<ValidationIssue> issues;

private:
    static std::string summary(const std::vector<ValidationIssue>& list) {
        std::string s = "case validation failed:";
        for (const auto& i : list) s += "\n  " + i.parameter + ": " + i.message;
        return s;
    }
};

namespace detail {

inline std::size_t observation_dim(const ObservationModel& h) {
    return std::holds_alternative<Matrix>(h) ? std::get<Matrix>(h).rows()
                                             : std::get<DifferentiableOperator>(h).output_dim();
}

inline DifferentiableOperator as_operator(const ObservationModel& h) {
    if (auto* m = std::get_if<Matrix>(&h)) return linear_operator(*m);
    return std::get<DifferentiableOperator>(h);
}

inline const Matrix& observation_values(const ObservationData& d) {
    if (auto* s = std::get_if<ObservationSeries>(&d)) return s->values;
    return std::get<Matrix>(d);
}

// Observation times and gaps from either the series itself or the
// observation_time_steps / gaps parameters. Without explicit times the
// first observation sits at step 0 and later ones follow the gaps.
inline ObservationSeries materialize_series(const ParameterSet& p) {
    const ObservationData& d = *p.observations;
    if (auto* s = std::get_if<ObservationSeries>(&d)) return *s;
    const Matrix& values = std::get<Matrix>(d);
    if (p.observation_time_steps) {
        if (p.gaps) return ObservationSeries(*p.observation_time_steps, values, *p.gaps);
        return ObservationSeries(*p.observation_time_steps, values);
    }
    std::vector<std::size_t> times{0};
    if (p.gaps)
        for (std::size_t g : *p.gaps) times.push_back(times.back() + g);
    if (times.size() != values.rows())
        throw DimensionMismatch("gaps describe " + std::to_string(times.size()) + " observation instants but there are " +
                                std::to_string(values.rows()) + " observations");
    return ObservationSeries(std::move(times), values);
}

}  // namespace detail

// Every problem with the case, not just the first.
inline std::vector<ValidationIssue> validate(const ParameterSet& p) {
    std::vector<ValidationIssue> issues;
    auto issue = [&](std::string_view param, std::string msg) { issues.push_back({std::string(param), std::move(msg)}); };

    if (!p.algorithm) issue("algorithm", "required parameter is missing");
    if (!p.device) issue("device", "required parameter is missing");
    else if (*p.device != Device::CPU) issue("device", "only CPU is supported; GPU backends are out of scope");
    if (!p.observation_model) issue("observation_model", "required parameter is missing");
    if (!p.background_covariance_matrix) issue("background_covariance_matrix", "required parameter is missing");
    if (!p.observation_covariance_matrix) issue("observation_covariance_matrix", "required parameter is missing");
    if (!p.background_state) issue("background_state", "required parameter is missing");
    if (!p.observations) issue("observations", "required parameter is missing");

    const bool enkf = p.algorithm == Algorithm::EnKF;
    const bool var3d = p.algorithm == Algorithm::Var3D;
    const bool var4d = p.algorithm == Algorithm::Var4D;

    // Algorithm-specific completeness.
    if (enkf || var4d) {
        if (!p.forward_model) issue("forward_model", "required by " + to_string(*p.algorithm));
        const bool series = p.observations && std::holds_alternative<ObservationSeries>(*p.observations);
        if (!series && !p.gaps) issue("gaps", "required by " + to_string(*p.algorithm));
        if (enkf && !series && !p.observation_time_steps) issue("observation_time_steps", "required by EnKF");
    }
    if (enkf) {
        if (!p.num_ensembles) issue("num_ensembles", "required by EnKF");
        else if (*p.num_ensembles < 2) issue("num_ensembles", "EnKF needs at least 2 ensemble members");
    }
    if (var3d || var4d) {
        if (!p.learning_rate) issue("learning_rate", "required by " + to_string(*p.algorithm));
        else if (!std::isfinite(*p.learning_rate) || *p.learning_rate < 0.0)
            issue("learning_rate", "must be finite and non-negative");
        if (!p.max_iterations) issue("max_iterations", "required by " + to_string(*p.algorithm));
        else if (*p.max_iterations < 1) issue("max_iterations", "must be at least 1");
    }

    // Shapes.
    std::size_t n = 0;
    if (p.background_state) {
        const Matrix& xb = *p.background_state;
        n = xb.cols();
        if (xb.rows() == 0 || n == 0) issue("background_state", "is empty");
        else if (xb.rows() > 1 && !var3d) issue("background_state", "a batch of background states is only allowed for Var3D");
        if (!xb.all_finite()) issue("background_state", "contains non-finite values");
    }
    std::size_t obs_dim = 0;
    if (p.observation_model) {
        obs_dim = detail::observation_dim(*p.observation_model);
        if (auto* m = std::get_if<Matrix>(&*p.observation_model)) {
            if (n && m->cols() != n)
                issue("observation_model", "matrix has " + std::to_string(m->cols()) + " columns for a state of length " +
                                               std::to_string(n));
        } else {
            const auto& h = std::get<DifferentiableOperator>(*p.observation_model);
            if (!h.valid()) issue("observation_model", "operator is empty");
            else {
                if (n && h.input_dim() != n)
                    issue("observation_model", "operator takes " + std::to_string(h.input_dim()) +
                                                   " inputs for a state of length " + std::to_string(n));
                if (h.output_rows() != 1) issue("observation_model", "must map a state to a single row");
            }
        }
    }
    auto check_cov = [&](std::string_view name, const std::optional<Matrix>& m, std::size_t dim) {
        if (!m) return;
        if (m->rows() != m->cols()) {
            issue(name, "must be square, got " + m->shape_string());
            return;
        }
        if (dim && m->rows() != dim)
            issue(name, "is " + m->shape_string() + " but the vector it weights has length " + std::to_string(dim));
        try {
            CovarianceMatrix::strict(*m);
        } catch (const Error& e) {
            issue(name, std::string("must be symmetric positive definite (") + e.what() + ")");
        }
    };
    check_cov("background_covariance_matrix", p.background_covariance_matrix, n);
    check_cov("observation_covariance_matrix", p.observation_covariance_matrix, obs_dim);

    std::optional<ObservationSeries> series;
    if (p.observations) {
        const Matrix& y = detail::observation_values(*p.observations);
        if (obs_dim && y.cols() != obs_dim)
            issue("observations", "have " + std::to_string(y.cols()) + " columns but the observation model produces " +
                                      std::to_string(obs_dim));
        if (!y.all_finite()) issue("observations", "contain non-finite values");
        if (var3d && p.background_state && y.rows() != p.background_state->rows())
            issue("observations", "Var3D needs one observation row per background state (" +
                                      std::to_string(p.background_state->rows()) + "), got " + std::to_string(y.rows()));
        if (enkf && y.rows() < 1) issue("observations", "EnKF needs at least 1 observation");
        if (var4d && y.rows() < 2) issue("observations", "Var4D needs at least 2 observations, got " + std::to_string(y.rows()));
        if (enkf || var4d) {
            try {
                series = detail::materialize_series(p);
            } catch (const Error& e) {
                issue(p.observation_time_steps ? "observation_time_steps" : "gaps", e.what());
            }
        }
    }

    if (p.forward_model) {
        const auto& m = *p.forward_model;
        if (!m.valid()) issue("forward_model", "operator is empty");
        else {
            if (n && (m.input_dim() != n || m.output_dim() != n))
                issue("forward_model", "maps length " + std::to_string(m.input_dim()) + " to " +
                                           std::to_string(m.output_dim()) + " but the state has length " +
                                           std::to_string(n));
            if (p.output_sequence_length && *p.output_sequence_length != m.output_rows())
                issue("output_sequence_length", "is " + std::to_string(*p.output_sequence_length) +
                                                    " but the forward model returns " +
                                                    std::to_string(m.output_rows()) + " rows");
            if (series) {
                for (std::size_t k = enkf ? 0 : 1; k < series->size(); ++k) {
                    if (series->segment(k) + 1 != m.output_rows()) {
                        issue(k == 0 ? "observation_time_steps" : "gaps",
                              "observation " + std::to_string(k + 1) + " is " + std::to_string(series->segment(k)) +
                                  " steps after the previous instant but the forward model covers " +
                                  std::to_string(m.output_rows() - 1) + " (output_sequence_length must be gap + 1)");
                        break;
                    }
                }
            }
            if (p.args) {
                try {
                    (void)m.bind_args(*p.args);
                } catch (const Error& e) {
                    issue("args", e.what());
                }
            }
        }
    } else if (p.args && !p.args->empty()) {
        issue("args", "given without a forward model to receive them");
    }
    return issues;
}

// Runs a validated case and packs the result under the algorithm's keys.
inline ResultMap execute_case(const ParameterSet& p, const std::string& case_name = "case") {
    if (auto issues = validate(p); !issues.empty()) throw ValidationFailed(std::move(issues));
    const std::string ctx = "case '" + case_name + "' (" + to_string(*p.algorithm) + "): ";
    const DifferentiableOperator h = detail::as_operator(*p.observation_model);
    const CovarianceMatrix b(*p.background_covariance_matrix);
    const CovarianceMatrix r(*p.observation_covariance_matrix);
    const bool record = p.record_log.value_or(true);
    DifferentiableOperator m;
    if (p.forward_model) m = p.args ? p.forward_model->bind_args(*p.args) : *p.forward_model;

    auto pack_log = [&](const VariationalLog& log, bool split) {
        IntermediateResults ir;
        if (split) {
            ir["Jb"] = log.jb;
            ir["Jo"] = log.jo;
        }
        ir["J"] = log.j;
        ir["J_grad_norm"] = log.grad_norm;
        ir["background_states"] = log.states;
        return ir;
    };

    try {
        ResultMap out;
        switch (*p.algorithm) {
            case Algorithm::EnKF: {
                auto f = enkf(*p.num_ensembles, m, h, b, r, p.background_state->row(0), detail::materialize_series(p),
                              Rng(p.seed.value_or(0)));
                out["average_ensemble_all_states"] = std::move(f.average_trajectory);
                out["each_ensemble_all_states"] = std::move(*f.member_trajectories);
                break;
            }
            case Algorithm::Var3D: {
                VariationalSettings s{*p.max_iterations, *p.learning_rate, record};
                auto v = var3d(h, b, r, *p.background_state, detail::observation_values(*p.observations), s);
                out["assimilated_state"] = std::move(v.assimilated_state);
                out["intermediate_results"] = pack_log(v.log, false);
                break;
            }
            case Algorithm::Var4D: {
                VariationalSettings s{*p.max_iterations, *p.learning_rate, record};
                auto v = var4d(m, h, b, r, p.background_state->row(0), detail::materialize_series(p), s);
                out["assimilated_state"] = std::move(v.assimilated_state);
                out["intermediate_results"] = pack_log(v.log, true);
                break;
            }
        }
        return out;
    } catch (const OptimizationDiverged& e) {
        throw OptimizationDiverged(ctx + e.what(), e.partial_log);
    } catch (const NanEncountered& e) {
        throw NanEncountered(ctx + e.what());
    } catch (const NotPositiveDefinite& e) {
        throw NotPositiveDefinite(ctx + e.what());
    } catch (const SequenceLengthMismatch& e) {
        throw SequenceLengthMismatch(ctx + e.what());
    } catch (const DimensionMismatch& e) {
        throw DimensionMismatch(ctx + e.what());
    }
}

}  // namespace dassim
