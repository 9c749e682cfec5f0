#pragma once

#include <concepts>
#include <string>
#include <string_view>

#include "dassim/casebuilder/executor.hpp"

namespace dassim {

// One assimilation case. Parameters can be given as a map, as a
// ParameterSet, or through the chained setters; all three end up in the
// same ParameterSet. Results are returned by value, so callers never share
// state with the builder.
class CaseBuilder {
public:
    explicit CaseBuilder(std::string case_name = "case", ParameterSet parameters = {})
        : name_(std::move(case_name)), params_(std::move(parameters)) {}
    explicit CaseBuilder(ParameterSet parameters) : CaseBuilder("case", std::move(parameters)) {}

    CaseBuilder& set_parameter(std::string_view name, const ParamValue& value) {
        if (!detail::is_known_parameter(name)) throw UnknownParameter("unknown parameter '" + std::string(name) + "'");
        ParameterSet staged = params_;
        detail::assign_parameter(staged, name, value);
        params_ = std::move(staged);
        return *this;
    }
    template <std::integral T>
        requires(!std::same_as<T, bool>)
    CaseBuilder& set_parameter(std::string_view name, T value) {
        return set_parameter(name, ParamValue(static_cast<std::int64_t>(value)));
    }
    CaseBuilder& set_parameter(std::string_view name, const char* value) {
        return set_parameter(name, ParamValue(std::string(value)));
    }

    // All-or-nothing: every entry is applied to a staging copy first and the
    // builder changes only if all of them succeed.
    CaseBuilder& set_parameters(const ParameterMap& batch) {
        ParameterSet staged = params_;
        for (const auto& [name, value] : batch) {
            if (!detail::is_known_parameter(name)) throw UnknownParameter("unknown parameter '" + name + "'");
            detail::assign_parameter(staged, name, value);
        }
        params_ = std::move(staged);
        return *this;
    }
    // Applies every field that is set in `batch`.
    CaseBuilder& set_parameters(const ParameterSet& batch) { return set_parameters(to_parameter_map(batch)); }

    CaseBuilder& set_algorithm(Algorithm a) { return set_parameter("algorithm", a); }
    CaseBuilder& set_device(Device d) { return set_parameter("device", d); }
    CaseBuilder& set_observation_model(const DifferentiableOperator& h) { return set_parameter("observation_model", h); }
    CaseBuilder& set_observation_model(const Matrix& h) { return set_parameter("observation_model", h); }
    CaseBuilder& set_background_covariance_matrix(const Matrix& b) {
        return set_parameter("background_covariance_matrix", b);
    }
    CaseBuilder& set_observation_covariance_matrix(const Matrix& r) {
        return set_parameter("observation_covariance_matrix", r);
    }
    CaseBuilder& set_background_state(const Matrix& x) { return set_parameter("background_state", x); }
    CaseBuilder& set_background_state(const Vector& x) { return set_parameter("background_state", x); }
    CaseBuilder& set_observations(const ObservationSeries& y) { return set_parameter("observations", y); }
    CaseBuilder& set_observations(const Matrix& y) { return set_parameter("observations", y); }
    CaseBuilder& set_forward_model(const DifferentiableOperator& m) { return set_parameter("forward_model", m); }
    CaseBuilder& set_output_sequence_length(std::size_t n) { return set_parameter("output_sequence_length", n); }
    CaseBuilder& set_observation_time_steps(const std::vector<std::size_t>& t) {
        return set_parameter("observation_time_steps", t);
    }
    CaseBuilder& set_gaps(const std::vector<std::size_t>& g) { return set_parameter("gaps", g); }
    CaseBuilder& set_num_ensembles(std::size_t n) { return set_parameter("num_ensembles", n); }
    CaseBuilder& set_start_time(double t) { return set_parameter("start_time", t); }
    CaseBuilder& set_max_iterations(std::size_t n) { return set_parameter("max_iterations", n); }
    CaseBuilder& set_learning_rate(double lr) { return set_parameter("learning_rate", lr); }
    CaseBuilder& set_record_log(bool on) { return set_parameter("record_log", on); }
    CaseBuilder& set_args(const Vector& args) { return set_parameter("args", args); }
    CaseBuilder& set_seed(std::uint64_t seed) { return set_parameter("seed", seed); }

    std::optional<ParamValue> get_parameter(std::string_view name) const { return detail::read_parameter(params_, name); }
    const ParameterSet& parameters() const noexcept { return params_; }
    ParameterMap get_parameters_dict() const { return to_parameter_map(params_); }
    const std::string& case_name() const noexcept { return name_; }

    std::vector<ValidationIssue> validate() const { return dassim::validate(params_); }

    const ResultMap& execute() {
        results_ = execute_case(params_, name_);
        return results_;
    }

    ResultMap get_results_dict() const { return results_; }
    ResultValue get_result(std::string_view name) const {
        auto it = results_.find(std::string(name));
        if (it == results_.end()) throw UnknownParameter("no result named '" + std::string(name) + "'");
        return it->second;
    }

private:
    std::string name_;
    ParameterSet params_;
    ResultMap results_;
};

}  // namespace dassim
