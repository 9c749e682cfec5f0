#pragma once

#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dassim/assimilation/observations.hpp"
#include "dassim/numerics/covariance.hpp"
#include "dassim/operators/operator.hpp"

namespace dassim {

// Algorithms a case can run. The plain Kalman filter is a library function
// (kalman_filter) and deliberately not listed here.
enum class Algorithm { EnKF, Var3D, Var4D };
enum class Device { CPU, GPU };

inline std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::EnKF: return "EnKF";
        case Algorithm::Var3D: return "Var3D";
        case Algorithm::Var4D: return "Var4D";
    }
    return "?";
}
inline std::string to_string(Device d) { return d == Device::CPU ? "CPU" : "GPU"; }

using ObservationModel = std::variant<DifferentiableOperator, Matrix>;
using ObservationData = std::variant<ObservationSeries, Matrix>;

// Seven required fields, ten optional ones, plus `seed` which seeds every
// stochastic component (default 0). Covariances are kept as plain matrices
// so that a non-SPD value can be reported by validate() instead of failing
// at assignment.
struct ParameterSet {
    std::optional<Algorithm> algorithm;
    std::optional<Device> device;
    std::optional<ObservationModel> observation_model;
    std::optional<Matrix> background_covariance_matrix;
    std::optional<Matrix> observation_covariance_matrix;
    std::optional<Matrix> background_state;  // 1 x n, or B x n for Var3D batches
    std::optional<ObservationData> observations;

    std::optional<DifferentiableOperator> forward_model;
    std::optional<std::size_t> output_sequence_length;
    std::optional<std::vector<std::size_t>> observation_time_steps;
    std::optional<std::vector<std::size_t>> gaps;
    std::optional<std::size_t> num_ensembles;
    std::optional<double> start_time;  // kept for callers; no algorithm reads it
    std::optional<std::size_t> max_iterations;
    std::optional<double> learning_rate;
    std::optional<bool> record_log;  // default true
    std::optional<Vector> args;      // forwarded to forward_model.bind_args

    std::optional<std::uint64_t> seed;

    bool operator==(const ParameterSet&) const = default;
};

inline constexpr std::array<std::string_view, 7> kRequiredParameters = {
    "algorithm",         "device",           "observation_model", "background_covariance_matrix",
    "observation_covariance_matrix", "background_state", "observations"};

inline constexpr std::array<std::string_view, 10> kOptionalParameters = {
    "forward_model", "output_sequence_length", "observation_time_steps", "gaps",    "num_ensembles",
    "start_time",    "max_iterations",         "learning_rate",          "record_log", "args"};

inline constexpr std::string_view kSeedParameter = "seed";

using ParamValue = std::variant<Algorithm, Device, DifferentiableOperator, Matrix, CovarianceMatrix, ObservationSeries,
                                Vector, std::vector<std::size_t>, std::int64_t, double, bool, std::string>;

using ParameterMap = std::map<std::string, ParamValue>;

namespace detail {

inline bool is_known_parameter(std::string_view name) {
    for (auto n : kRequiredParameters)
        if (n == name) return true;
    for (auto n : kOptionalParameters)
        if (n == name) return true;
    return name == kSeedParameter;
}

inline const char* value_type_name(const ParamValue& v) {
    static constexpr const char* names[] = {"Algorithm", "Device", "operator", "matrix", "covariance", "observation series",
                                            "vector", "index list", "integer", "float", "bool", "string"};
    return names[v.index()];
}

[[noreturn]] inline void type_error(std::string_view name, const ParamValue& v, std::string_view expected) {
    throw TypeMismatch("parameter '" + std::string(name) + "' expects " + std::string(expected) + ", got " +
                       value_type_name(v));
}

inline std::size_t as_count(std::string_view name, const ParamValue& v) {
    if (auto* i = std::get_if<std::int64_t>(&v)) {
        if (*i < 0) throw TypeMismatch("parameter '" + std::string(name) + "' must be non-negative");
        return static_cast<std::size_t>(*i);
    }
    if (auto* d = std::get_if<double>(&v)) {
        if (*d >= 0 && std::floor(*d) == *d && *d < 9.0e15) return static_cast<std::size_t>(*d);
        throw TypeMismatch("parameter '" + std::string(name) + "' must be a non-negative integer");
    }
    type_error(name, v, "a non-negative integer");
}

inline double as_real(std::string_view name, const ParamValue& v) {
    if (auto* d = std::get_if<double>(&v)) return *d;
    if (auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
    type_error(name, v, "a number");
}

inline std::vector<std::size_t> as_index_list(std::string_view name, const ParamValue& v) {
    if (auto* l = std::get_if<std::vector<std::size_t>>(&v)) return *l;
    if (auto* d = std::get_if<Vector>(&v)) {
        std::vector<std::size_t> out;
        for (double x : *d) out.push_back(as_count(name, x));
        return out;
    }
    type_error(name, v, "a list of step indices");
}

inline Matrix as_matrix(std::string_view name, const ParamValue& v) {
    if (auto* m = std::get_if<Matrix>(&v)) return *m;
    if (auto* c = std::get_if<CovarianceMatrix>(&v)) return c->matrix();
    if (auto* x = std::get_if<Vector>(&v)) return Matrix::row_vector(*x);
    type_error(name, v, "a matrix");
}

// Converts and stores one value. Throws UnknownParameter / TypeMismatch
// and leaves `p` untouched on failure.
inline void assign_parameter(ParameterSet& p, std::string_view name, const ParamValue& v) {
    if (name == "algorithm") {
        if (auto* a = std::get_if<Algorithm>(&v)) { p.algorithm = *a; return; }
        if (auto* s = std::get_if<std::string>(&v)) {
            for (Algorithm a : {Algorithm::EnKF, Algorithm::Var3D, Algorithm::Var4D})
                if (*s == to_string(a)) { p.algorithm = a; return; }
            throw TypeMismatch("parameter 'algorithm': unknown algorithm '" + *s + "' (EnKF, Var3D or Var4D)");
        }
        type_error(name, v, "an Algorithm");
    }
    if (name == "device") {
        if (auto* d = std::get_if<Device>(&v)) { p.device = *d; return; }
        if (auto* s = std::get_if<std::string>(&v)) {
            if (*s == "CPU") { p.device = Device::CPU; return; }
            if (*s == "GPU") { p.device = Device::GPU; return; }
            throw TypeMismatch("parameter 'device': unknown device '" + *s + "'");
        }
        type_error(name, v, "a Device");
    }
    if (name == "observation_model") {
        if (auto* o = std::get_if<DifferentiableOperator>(&v)) { p.observation_model = *o; return; }
        if (auto* m = std::get_if<Matrix>(&v)) { p.observation_model = *m; return; }
        type_error(name, v, "an operator or a matrix");
    }
    if (name == "background_covariance_matrix" || name == "observation_covariance_matrix") {
        if (!std::holds_alternative<Matrix>(v) && !std::holds_alternative<CovarianceMatrix>(v))
            type_error(name, v, "a covariance matrix");
        (name == "background_covariance_matrix" ? p.background_covariance_matrix : p.observation_covariance_matrix) =
            as_matrix(name, v);
        return;
    }
    if (name == "background_state") {
        if (!std::holds_alternative<Matrix>(v) && !std::holds_alternative<Vector>(v))
            type_error(name, v, "a state vector or a batch matrix");
        p.background_state = as_matrix(name, v);
        return;
    }
    if (name == "observations") {
        if (auto* s = std::get_if<ObservationSeries>(&v)) { p.observations = *s; return; }
        if (auto* m = std::get_if<Matrix>(&v)) { p.observations = *m; return; }
        type_error(name, v, "an observation series or a matrix");
    }
    if (name == "forward_model") {
        if (auto* o = std::get_if<DifferentiableOperator>(&v)) { p.forward_model = *o; return; }
        type_error(name, v, "an operator");
    }
    if (name == "output_sequence_length") { p.output_sequence_length = as_count(name, v); return; }
    if (name == "observation_time_steps") { p.observation_time_steps = as_index_list(name, v); return; }
    if (name == "gaps") { p.gaps = as_index_list(name, v); return; }
    if (name == "num_ensembles") { p.num_ensembles = as_count(name, v); return; }
    if (name == "start_time") { p.start_time = as_real(name, v); return; }
    if (name == "max_iterations") { p.max_iterations = as_count(name, v); return; }
    if (name == "learning_rate") { p.learning_rate = as_real(name, v); return; }
    if (name == "record_log") {
        if (auto* b = std::get_if<bool>(&v)) { p.record_log = *b; return; }
        type_error(name, v, "a bool");
    }
    if (name == "args") {
        if (auto* x = std::get_if<Vector>(&v)) { p.args = *x; return; }
        if (auto* d = std::get_if<double>(&v)) { p.args = Vector{*d}; return; }
        type_error(name, v, "a list of numbers");
    }
    if (name == kSeedParameter) { p.seed = as_count(name, v); return; }
    throw UnknownParameter("unknown parameter '" + std::string(name) + "'");
}

inline std::optional<ParamValue> read_parameter(const ParameterSet& p, std::string_view name) {
    auto wrap = [](const auto& opt) -> std::optional<ParamValue> {
        if (!opt) return std::nullopt;
        return ParamValue(*opt);
    };
    if (name == "algorithm") return wrap(p.algorithm);
    if (name == "device") return wrap(p.device);
    if (name == "observation_model") {
        if (!p.observation_model) return std::nullopt;
        return std::visit([](const auto& x) { return ParamValue(x); }, *p.observation_model);
    }
    if (name == "background_covariance_matrix") return wrap(p.background_covariance_matrix);
    if (name == "observation_covariance_matrix") return wrap(p.observation_covariance_matrix);
    if (name == "background_state") return wrap(p.background_state);
    if (name == "observations") {
        if (!p.observations) return std::nullopt;
        return std::visit([](const auto& x) { return ParamValue(x); }, *p.observations);
    }
    if (name == "forward_model") return wrap(p.forward_model);
    auto count = [](const std::optional<std::size_t>& c) -> std::optional<ParamValue> {
        if (!c) return std::nullopt;
        return ParamValue(static_cast<std::int64_t>(*c));
    };
    if (name == "output_sequence_length") return count(p.output_sequence_length);
    if (name == "observation_time_steps") return wrap(p.observation_time_steps);
    if (name == "gaps") return wrap(p.gaps);
    if (name == "num_ensembles") return count(p.num_ensembles);
    if (name == "start_time") return wrap(p.start_time);
    if (name == "max_iterations") return count(p.max_iterations);
    if (name == "learning_rate") return wrap(p.learning_rate);
    if (name == "record_log") return wrap(p.record_log);
    if (name == "args") return wrap(p.args);
    if (name == kSeedParameter) {
        if (!p.seed) return std::nullopt;
        return ParamValue(static_cast<std::int64_t>(*p.seed));
    }
    throw UnknownParameter("unknown parameter '" + std::string(name) + "'");
}

}  // namespace detail

// Every field that is set, keyed by parameter name.
inline ParameterMap to_parameter_map(const ParameterSet& p) {
    ParameterMap out;
    auto add = [&](std::string_view n) {
        if (auto v = detail::read_parameter(p, n)) out.emplace(std::string(n), std::move(*v));
    };
    for (auto n : kRequiredParameters) add(n);
    for (auto n : kOptionalParameters) add(n);
    add(kSeedParameter);
    return out;
}

}  // namespace dassim
