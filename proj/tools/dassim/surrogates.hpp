#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "config.hpp"
#include "dassim/operators/autoencoder.hpp"
#include "dassim/operators/lstm.hpp"

namespace dassim::cli {

struct SurrogateReport {
    std::string name;
    bool trained = false;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::optional<double> validation_loss;
    std::size_t train_count = 0;
    std::size_t validation_count = 0;

    nlohmann::json to_json() const;
};

// Starting networks: the loaded file, or a seeded random initialization
// for train-now blocks. Shapes are checked against what the experiment
// needs; a mismatching file is a ConfigError.
Autoencoder initial_autoencoder(const SurrogateSpec& s, std::size_t field_dim, std::uint64_t seed);
DenseNetwork initial_dense(const SurrogateSpec& s, std::size_t in, std::size_t out, std::uint64_t seed);
LstmStack initial_lstm(const SurrogateSpec& s, std::size_t dim, std::uint64_t seed);

// Train-now blocks are fitted here; loaded models pass through untouched.
Autoencoder fit_autoencoder(const SurrogateSpec& s, Autoencoder init, const Matrix& data, std::uint64_t seed,
                            SurrogateReport& report);
DenseNetwork fit_dense(const SurrogateSpec& s, DenseNetwork init, const Matrix& x, const Matrix& y,
                       std::uint64_t seed, SurrogateReport& report);
// `sequence` holds one state per row in time order. Samples start every
// sample_stride rows and target the next train_seq_length rows.
LstmStack fit_lstm(const SurrogateSpec& s, LstmStack init, const Matrix& sequence, std::uint64_t seed,
                   SurrogateReport& report);

}  // namespace dassim::cli
