#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dassim/casebuilder/parameters.hpp"
#include "dassim/operators/dense.hpp"
#include "dassim/operators/training.hpp"
#include "dassim/testbeds/lorenz63.hpp"
#include "dassim/testbeds/shallow_water.hpp"

namespace dassim::cli {

inline constexpr int kSchemaVersion = 1;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A network to load from disk or train from scratch. `kind` is one of
// autoencoder, dense, lstm or composed (latent observation operator built
// from E_h, H and D_u instead of a separate network).
struct SurrogateSpec {
    std::string name;
    std::string kind;
    std::optional<std::filesystem::path> file;
    bool train = false;

    std::vector<std::size_t> hidden;  // dense and autoencoder hidden widths
    std::size_t latent_dim = 0;       // autoencoder only
    Activation activation = Activation::tanh;

    std::size_t num_layers = 1;  // lstm
    std::size_t hidden_dim = 0;
    std::size_t train_seq_length = 1;
    std::size_t sample_stride = 1;
    double data_t_final = 0.0;  // lorenz lstm: length of the training trajectory

    TrainingConfig training;
};

// Metric window in model time units (Lorenz).
struct TimeWindow {
    std::string label;
    double start = 0.0;
    double end = 0.0;
};

struct ExperimentConfig {
    std::string name;
    std::string testbed;  // lorenz63 | shallow_water
    Algorithm algorithm = Algorithm::EnKF;
    std::string scale;
    std::uint64_t seed = 0;
    std::string source;  // raw config text, hashed into the manifest
    std::filesystem::path base_dir;

    // lorenz63
    Lorenz63Config lorenz;
    std::size_t obs_every = 0;
    Vector noise_std;
    Vector background_state;
    std::optional<Vector> args;
    std::vector<TimeWindow> windows;

    // shallow_water
    ShallowWaterConfig sw;
    std::size_t records = 0;
    std::size_t record_every = 1;
    std::string mode;  // latent_to_full | latent_to_latent
    std::size_t forecast_start = 0;
    std::size_t forecast_chunk = 0;
    std::vector<std::size_t> instants;

    std::vector<SurrogateSpec> surrogates;  // lorenz: forward_model (optional); sw: the five networks

    // case
    Matrix background_covariance;
    Matrix observation_covariance;
    std::size_t num_ensembles = 0;
    double learning_rate = 0.0;
    std::size_t max_iterations = 0;
    bool record_log = true;

    const SurrogateSpec* surrogate(std::string_view n) const {
        for (const auto& s : surrogates)
            if (s.name == n) return &s;
        return nullptr;
    }
    bool lorenz_uses_true_model() const { return surrogate("forward_model") == nullptr; }
};

// Parses `path` and selects one scale. Throws ConfigError with a message
// naming the offending key.
ExperimentConfig load_config(const std::filesystem::path& path, const std::string& scale,
                             std::optional<std::uint64_t> seed_override);

}  // namespace dassim::cli
