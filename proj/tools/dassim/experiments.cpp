#include "experiments.hpp"

namespace dassim::cli {

namespace detail {

ParameterSet base_case(const ExperimentConfig& cfg) {
    ParameterSet p;
    p.algorithm = cfg.algorithm;
    p.device = Device::CPU;
    p.background_covariance_matrix = cfg.background_covariance;
    p.observation_covariance_matrix = cfg.observation_covariance;
    p.seed = derive_seed(cfg.seed, "case");
    if (cfg.algorithm == Algorithm::EnKF) {
        p.num_ensembles = cfg.num_ensembles;
    } else {
        p.learning_rate = cfg.learning_rate;
        p.max_iterations = cfg.max_iterations;
        p.record_log = cfg.record_log;
    }
    return p;
}

Matrix chain(const DifferentiableOperator& m, std::span<const double> x, const std::vector<std::size_t>& segments) {
    std::size_t total = 1;
    for (std::size_t s : segments) total += s;
    Matrix out(total, x.size());
    out.set_row(0, x);
    std::size_t at = 0;
    Vector state(x.begin(), x.end());
    for (std::size_t s : segments) {
        Matrix seq = m.evaluate(state);
        if (seq.rows() != s + 1)
            throw SequenceLengthMismatch("forward model returned " + std::to_string(seq.rows()) + " rows for a " +
                                         std::to_string(s) + "-step segment");
        if (!seq.all_finite()) throw NanEncountered("forward model produced non-finite states");
        for (std::size_t r = 1; r <= s; ++r) out.set_row(at + r, seq.row(r));
        at += s;
        state = seq.row_copy(s);
    }
    return out;
}

nlohmann::json log_json(const IntermediateResults& ir) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [key, series] : ir)
        if (auto* v = std::get_if<std::vector<double>>(&series)) j[key] = *v;
    return j;
}

}  // namespace detail

void precheck(const ExperimentConfig& cfg) {
    if (cfg.testbed == "lorenz63") detail::precheck_lorenz(cfg);
    else detail::precheck_shallow_water(cfg);
}

void run_experiment(const ExperimentConfig& cfg, OutputDir& out) {
    if (cfg.testbed == "lorenz63") detail::run_lorenz(cfg, out);
    else detail::run_shallow_water(cfg, out);
}

std::vector<SurrogateReport> train_surrogates(const ExperimentConfig& cfg, OutputDir& out) {
    if (cfg.testbed == "lorenz63") return detail::train_lorenz(cfg, out);
    return detail::train_shallow_water(cfg, out);
}

}  // namespace dassim::cli
