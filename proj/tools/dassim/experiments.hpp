#pragma once

#include <chrono>
#include <filesystem>
#include <vector>

#include "config.hpp"
#include "dassim/casebuilder.hpp"
#include "output.hpp"
#include "surrogates.hpp"

namespace dassim::cli {

// Builds the case with placeholder data of the final shapes (initial or
// loaded networks, zero observations) and runs casebuilder validation.
// Cheap: nothing is simulated or trained. Throws ValidationFailed.
void precheck(const ExperimentConfig& cfg);

// Simulate, observe, fit surrogates, assimilate and write every output.
void run_experiment(const ExperimentConfig& cfg, OutputDir& out);

// Trains the config's train-now networks and saves them as
// models/<name>.model under `out`.
std::vector<SurrogateReport> train_surrogates(const ExperimentConfig& cfg, OutputDir& out);

// Reshapes a finished run's persisted numbers into report/ files.
void write_report(const std::filesystem::path& run_dir);

namespace detail {

void run_lorenz(const ExperimentConfig& cfg, OutputDir& out);
void run_shallow_water(const ExperimentConfig& cfg, OutputDir& out);
void precheck_lorenz(const ExperimentConfig& cfg);
void precheck_shallow_water(const ExperimentConfig& cfg);
std::vector<SurrogateReport> train_lorenz(const ExperimentConfig& cfg, OutputDir& out);
std::vector<SurrogateReport> train_shallow_water(const ExperimentConfig& cfg, OutputDir& out);

// Fields shared by every case built from a config.
ParameterSet base_case(const ExperimentConfig& cfg);

// Rows 0..sum(segments) from starting at x and forwarding through m once
// per segment; m must return segment + 1 rows every time.
Matrix chain(const DifferentiableOperator& m, std::span<const double> x, const std::vector<std::size_t>& segments);

class Stopwatch {
public:
    Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
    double lap() {
        auto now = std::chrono::steady_clock::now();
        double s = std::chrono::duration<double>(now - t0_).count();
        t0_ = now;
        return s;
    }

private:
    std::chrono::steady_clock::time_point t0_;
};

nlohmann::json log_json(const IntermediateResults& ir);

}  // namespace detail

}  // namespace dassim::cli
