#include "surrogates.hpp"

#include "dassim/operators/model_io.hpp"
#include "output.hpp"

namespace dassim::cli {

namespace {

template <class M>
M load_as(const SurrogateSpec& s) {
    try {
        return load_model_as<M>(s.file->string());
    } catch (const ModelFormatError& e) {
        throw ConfigError(s.name + ": " + e.what());
    }
}

void expect(bool ok, const SurrogateSpec& s, const std::string& msg) {
    if (!ok) throw ConfigError(s.name + ": " + msg);
}

std::vector<std::size_t> widths(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
    std::vector<std::size_t> w{in};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(out);
    return w;
}

template <class M>
M fit(const SurrogateSpec& s, M init, const Matrix& x, const Matrix& y, std::uint64_t seed, SurrogateReport& r) {
    r.name = s.name;
    if (!s.train) return init;
    TrainingConfig tc = s.training;
    tc.seed = seed;
    auto result = train(std::move(init), x, y, tc);
    r.trained = true;
    r.initial_loss = result.initial_loss;
    r.final_loss = result.loss_history.back();
    if (!result.validation_history.empty()) r.validation_loss = result.validation_history.back();
    r.train_count = result.train_count;
    r.validation_count = result.validation_count;
    return std::move(result.model);
}

}  // namespace

nlohmann::json SurrogateReport::to_json() const {
    nlohmann::json j{{"trained", trained}};
    if (trained) {
        j["initial_loss"] = initial_loss;
        j["final_loss"] = final_loss;
        j["validation_loss"] = validation_loss ? nlohmann::json(*validation_loss) : nlohmann::json(nullptr);
        j["train_count"] = train_count;
        j["validation_count"] = validation_count;
    }
    return j;
}

Autoencoder initial_autoencoder(const SurrogateSpec& s, std::size_t field_dim, std::uint64_t seed) {
    if (s.file) {
        auto ae = load_as<Autoencoder>(s);
        expect(ae.field_dim() == field_dim, s, "autoencoder expects fields of " + std::to_string(ae.field_dim()) +
                                                   " values, the grid has " + std::to_string(field_dim));
        return ae;
    }
    Rng rng(seed);
    auto w = widths(field_dim, s.hidden, s.latent_dim);
    return Autoencoder::random(w, s.activation, rng);
}

DenseNetwork initial_dense(const SurrogateSpec& s, std::size_t in, std::size_t out, std::uint64_t seed) {
    if (s.file) {
        auto net = load_as<DenseNetwork>(s);
        expect(net.input_dim() == in && net.output_dim() == out, s,
               "network maps " + std::to_string(net.input_dim()) + " -> " + std::to_string(net.output_dim()) +
                   ", expected " + std::to_string(in) + " -> " + std::to_string(out));
        return net;
    }
    Rng rng(seed);
    return DenseNetwork::random(widths(in, s.hidden, out), s.activation, Activation::identity, rng);
}

LstmStack initial_lstm(const SurrogateSpec& s, std::size_t dim, std::uint64_t seed) {
    if (s.file) {
        auto m = load_as<LstmStack>(s);
        expect(m.input_dim == dim, s,
               "LSTM state size is " + std::to_string(m.input_dim) + ", expected " + std::to_string(dim));
        return m;
    }
    Rng rng(seed);
    return LstmStack::random(s.num_layers, dim, s.hidden_dim, s.train_seq_length, rng);
}

Autoencoder fit_autoencoder(const SurrogateSpec& s, Autoencoder init, const Matrix& data, std::uint64_t seed,
                            SurrogateReport& report) {
    return fit(s, std::move(init), data, data, seed, report);
}

DenseNetwork fit_dense(const SurrogateSpec& s, DenseNetwork init, const Matrix& x, const Matrix& y,
                       std::uint64_t seed, SurrogateReport& report) {
    return fit(s, std::move(init), x, y, seed, report);
}

LstmStack fit_lstm(const SurrogateSpec& s, LstmStack init, const Matrix& sequence, std::uint64_t seed,
                   SurrogateReport& report) {
    report.name = s.name;
    if (!s.train) return init;
    const std::size_t len = s.train_seq_length, d = sequence.cols();
    std::vector<std::size_t> starts;
    for (std::size_t t = 0; t + len < sequence.rows(); t += s.sample_stride) starts.push_back(t);
    if (starts.empty())
        throw ConfigError(s.name + ": training sequence of " + std::to_string(sequence.rows()) +
                          " rows is too short for train_seq_length " + std::to_string(len));
    Matrix x(starts.size(), d), y(starts.size(), d * len);
    for (std::size_t i = 0; i < starts.size(); ++i) {
        x.set_row(i, sequence.row(starts[i]));
        for (std::size_t l = 0; l < len; ++l)
            for (std::size_t j = 0; j < d; ++j) y(i, l * d + j) = sequence(starts[i] + 1 + l, j);
    }
    init.out_seq_length = len;
    return fit(s, std::move(init), x, y, seed, report);
}

}  // namespace dassim::cli
