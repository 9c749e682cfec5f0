#include <cmath>
#include <map>

#include "dassim/operators/model_io.hpp"
#include "dassim/testbeds/metrics.hpp"
#include "experiments.hpp"

namespace dassim::cli::detail {

namespace {

struct Networks {
    Autoencoder ae_u;
    Autoencoder ae_h;
    DenseNetwork h;
    LstmStack lstm;
    std::optional<DenseNetwork> latent_h;  // only for a dense latent observation operator
};

const SurrogateSpec& spec(const ExperimentConfig& cfg, std::string_view name) { return *cfg.surrogate(name); }

std::uint64_t init_seed(const ExperimentConfig& cfg, const std::string& name) {
    return derive_seed(cfg.seed, "init:" + name);
}
std::uint64_t train_seed(const ExperimentConfig& cfg, const std::string& name) {
    return derive_seed(cfg.seed, "train:" + name);
}

bool dense_latent_operator(const ExperimentConfig& cfg) {
    const SurrogateSpec* s = cfg.surrogate("latent_observation_model");
    return s && s->kind == "dense";
}

Networks initial_networks(const ExperimentConfig& cfg) {
    const std::size_t cells = cfg.sw.nx * cfg.sw.ny;
    Networks n;
    n.ae_u = initial_autoencoder(spec(cfg, "autoencoder_u"), cells, init_seed(cfg, "autoencoder_u"));
    n.ae_h = initial_autoencoder(spec(cfg, "autoencoder_h"), cells, init_seed(cfg, "autoencoder_h"));
    n.h = initial_dense(spec(cfg, "observation_model"), cells, cells, init_seed(cfg, "observation_model"));
    n.lstm = initial_lstm(spec(cfg, "forward_model"), n.ae_u.latent_dim(), init_seed(cfg, "forward_model"));
    if (dense_latent_operator(cfg))
        n.latent_h = initial_dense(spec(cfg, "latent_observation_model"), n.ae_u.latent_dim(), n.ae_h.latent_dim(),
                                   init_seed(cfg, "latent_observation_model"));
    return n;
}

// Velocity and depth anomaly divided by their largest magnitude over the run.
struct Normalized {
    Matrix u;
    Matrix h;
    double u_scale = 1.0;
    double h_scale = 1.0;
};

double max_abs(const Matrix& m) {
    double s = 0.0;
    for (double v : m.storage()) s = std::max(s, std::abs(v));
    return s > 0.0 ? s : 1.0;
}

Normalized simulate(const ExperimentConfig& cfg) {
    ShallowWaterRecords rec = shallow_water_run(cfg.sw, cfg.records, cfg.record_every);
    Normalized n;
    n.u = std::move(rec.u);
    n.h = std::move(rec.h);
    for (std::size_t i = 0; i < n.h.size(); ++i) n.h.data()[i] -= cfg.sw.base_depth;
    n.u_scale = max_abs(n.u);
    n.h_scale = max_abs(n.h);
    n.u *= 1.0 / n.u_scale;
    n.h *= 1.0 / n.h_scale;
    return n;
}

DifferentiableOperator observation_operator(const ExperimentConfig& cfg, const Networks& n) {
    if (cfg.mode == "latent_to_full") return compose({n.ae_u.decoder_operator(), dense_operator(n.h)});
    if (n.latent_h) return dense_operator(*n.latent_h);
    return compose({n.ae_u.decoder_operator(), dense_operator(n.h), n.ae_h.encoder_operator()});
}

// Observation row for each instant in the space the operator maps into.
Matrix observation_rows(const ExperimentConfig& cfg, const Networks& n, const Matrix& h,
                        const std::vector<std::size_t>& records) {
    Matrix full(records.size(), h.cols());
    for (std::size_t k = 0; k < records.size(); ++k) full.set_row(k, h.row(records[k]));
    return cfg.mode == "latent_to_full" ? full : n.ae_h.encode(full);
}

std::vector<std::size_t> window_gaps(const std::vector<std::size_t>& instants) {
    std::vector<std::size_t> g;
    for (std::size_t k = 1; k < instants.size(); ++k) g.push_back(instants[k] - instants[k - 1]);
    return g;
}

DifferentiableOperator window_model(const ExperimentConfig& cfg, const LstmStack& lstm) {
    LstmStack s = lstm;
    s.out_seq_length = cfg.instants[1] - cfg.instants[0];
    return lstm_forward_model(std::move(s));
}

// 3DVar: one instant. 4DVar: all instants, times relative to the first.
ParameterSet sw_case(const ExperimentConfig& cfg, const Networks& n, const DifferentiableOperator& h_op,
                     const Vector& background, Matrix observations) {
    ParameterSet p = base_case(cfg);
    p.observation_model = h_op;
    p.background_state = Matrix::row_vector(background);
    if (cfg.algorithm == Algorithm::Var4D) {
        const auto gaps = window_gaps(cfg.instants);
        std::vector<std::size_t> rel;
        for (std::size_t r : cfg.instants) rel.push_back(r - cfg.instants.front());
        p.forward_model = window_model(cfg, n.lstm);
        p.output_sequence_length = gaps.front() + 1;
        p.observation_time_steps = rel;
        p.gaps = gaps;
    }
    p.observations = std::move(observations);
    return p;
}

template <class M>
void keep(OutputDir& out, const SurrogateReport& r, const M& model) {
    out.notes()["surrogates"][r.name] = r.to_json();
    if (r.trained) out.write("models/" + r.name + ".model", serialize_model(model));
}

Networks fit_networks(const ExperimentConfig& cfg, Networks n, const Normalized& data, OutputDir& out,
                      std::vector<SurrogateReport>* reports) {
    auto note = [&](const SurrogateReport& r, const auto& model) {
        keep(out, r, model);
        if (reports && r.trained) reports->push_back(r);
    };
    SurrogateReport r;
    n.ae_u = fit_autoencoder(spec(cfg, "autoencoder_u"), std::move(n.ae_u), data.u, train_seed(cfg, "autoencoder_u"), r);
    note(r, n.ae_u);
    r = {};
    n.ae_h = fit_autoencoder(spec(cfg, "autoencoder_h"), std::move(n.ae_h), data.h, train_seed(cfg, "autoencoder_h"), r);
    note(r, n.ae_h);
    r = {};
    n.h = fit_dense(spec(cfg, "observation_model"), std::move(n.h), data.u, data.h, train_seed(cfg, "observation_model"),
                    r);
    note(r, n.h);
    const Matrix zu = n.ae_u.encode(data.u);
    r = {};
    n.lstm = fit_lstm(spec(cfg, "forward_model"), std::move(n.lstm), zu, train_seed(cfg, "forward_model"), r);
    note(r, n.lstm);
    if (n.latent_h) {
        r = {};
        n.latent_h = fit_dense(spec(cfg, "latent_observation_model"), std::move(*n.latent_h), zu,
                               n.ae_h.encode(data.h), train_seed(cfg, "latent_observation_model"), r);
        note(r, *n.latent_h);
    }
    return n;
}

using Track = std::map<std::size_t, Vector>;

// Latent forecast from record `from` to `to` in LSTM chunks of at most `chunk`.
void advance(Track& track, const LstmStack& lstm, std::size_t from, std::size_t to, std::size_t chunk) {
    Vector z = track.at(from);
    while (from < to) {
        LstmStack s = lstm;
        s.out_seq_length = std::min(chunk, to - from);
        const Matrix seq = lstm_rollout(s, z);
        if (!seq.all_finite())
            throw NanEncountered("latent forecast became non-finite after record " + std::to_string(from));
        for (std::size_t r = 0; r < s.out_seq_length; ++r) track[from + 1 + r] = seq.row_copy(r);
        from += s.out_seq_length;
        z = track.at(from);
    }
}

std::string method_name(Algorithm a) { return a == Algorithm::Var3D ? "3DVar" : "4DVar"; }

}  // namespace

void precheck_shallow_water(const ExperimentConfig& cfg) {
    const Networks n = initial_networks(cfg);
    const DifferentiableOperator h_op = observation_operator(cfg, n);
    const std::size_t rows = cfg.algorithm == Algorithm::Var4D ? cfg.instants.size() : 1;
    const auto issues = validate(
        sw_case(cfg, n, h_op, Vector(n.ae_u.latent_dim(), 0.0), Matrix(rows, h_op.output_dim())));
    if (!issues.empty()) throw ValidationFailed(issues);
}

std::vector<SurrogateReport> train_shallow_water(const ExperimentConfig& cfg, OutputDir& out) {
    std::vector<SurrogateReport> reports;
    const Normalized data = simulate(cfg);
    fit_networks(cfg, initial_networks(cfg), data, out, &reports);
    return reports;
}

void run_shallow_water(const ExperimentConfig& cfg, OutputDir& out) {
    Stopwatch clock;
    const Normalized data = simulate(cfg);
    out.notes()["normalization"] = {{"u_scale", data.u_scale}, {"h_scale", data.h_scale}};
    out.stage_time("simulate", clock.lap());

    const Networks n = fit_networks(cfg, initial_networks(cfg), data, out, nullptr);
    out.stage_time("train", clock.lap());

    const DifferentiableOperator h_op = observation_operator(cfg, n);
    const Matrix zu = n.ae_u.encode(data.u);
    const Matrix y = observation_rows(cfg, n, data.h, cfg.instants);
    const std::size_t start = cfg.forecast_start, last = cfg.instants.back();

    Track free, da;
    free[start] = zu.row_copy(start);
    da[start] = zu.row_copy(start);
    auto cycles = nlohmann::json::array();
    auto run_case = [&](const std::string& tag, ParameterSet p) {
        CaseBuilder b(cfg.name + "@" + tag, std::move(p));
        const ResultMap& res = b.execute();
        nlohmann::json log = log_json(std::get<IntermediateResults>(res.at("intermediate_results")));
        return std::make_pair(std::get<Matrix>(res.at("assimilated_state")).row_copy(0), log);
    };

    if (cfg.algorithm == Algorithm::Var3D) {
        std::size_t prev = start;
        for (std::size_t k = 0; k < cfg.instants.size(); ++k) {
            const std::size_t r = cfg.instants[k];
            advance(free, n.lstm, prev, r, cfg.forecast_chunk);
            advance(da, n.lstm, prev, r, cfg.forecast_chunk);
            auto [xa, log] = run_case(std::to_string(r), sw_case(cfg, n, h_op, da.at(r), row_block(y, k, 1)));
            da[r] = xa;
            log["record"] = r;
            cycles.push_back(std::move(log));
            prev = r;
        }
    } else {
        const std::size_t r0 = cfg.instants.front();
        advance(free, n.lstm, start, r0, cfg.forecast_chunk);
        advance(da, n.lstm, start, r0, cfg.forecast_chunk);
        auto [xa, log] = run_case(std::to_string(r0), sw_case(cfg, n, h_op, da.at(r0), y));
        const Matrix window = chain(window_model(cfg, n.lstm), xa, window_gaps(cfg.instants));
        for (std::size_t i = 0; i < window.rows(); ++i) da[r0 + i] = window.row_copy(i);
        advance(free, n.lstm, r0, last, cfg.forecast_chunk);
        log["record"] = r0;
        log["records"] = cfg.instants;
        cycles.push_back(std::move(log));
    }
    out.stage_time("assimilate", clock.lap());

    // decoded velocity in physical units
    auto field = [&](const Vector& z) {
        Matrix f = n.ae_u.decode(Matrix::row_vector(z));
        return Matrix(cfg.sw.nx, cfg.sw.ny, f.storage()) * data.u_scale;
    };
    auto truth = [&](std::size_t r) { return Matrix(cfg.sw.nx, cfg.sw.ny, data.u.row_copy(r)) * data.u_scale; };

    const std::string method = method_name(cfg.algorithm);
    Csv series;
    series.header = {"record", "no_assimilation", method};
    for (std::size_t r = start; r <= last; ++r)
        series.add({std::to_string(r), fmt(mse(field(free.at(r)), truth(r))), fmt(mse(field(da.at(r)), truth(r)))});
    out.write("mse_series.csv", series);

    MetricTable table;
    std::vector<double> f_mse, f_rr, f_ss, a_mse, a_rr, a_ss;
    for (std::size_t r : cfg.instants) {
        const Matrix t = truth(r), f = field(free.at(r)), a = field(da.at(r));
        table.labels.push_back("record_" + std::to_string(r));
        f_mse.push_back(mse(f, t));
        f_rr.push_back(rrmse(f, t));
        f_ss.push_back(ssim(f, t));
        a_mse.push_back(mse(a, t));
        a_rr.push_back(rrmse(a, t));
        a_ss.push_back(ssim(a, t));

        Csv fc;
        fc.header = {"i", "j", "truth", "no_assimilation", method};
        for (std::size_t i = 0; i < cfg.sw.nx; ++i)
            for (std::size_t j = 0; j < cfg.sw.ny; ++j)
                fc.add({std::to_string(i), std::to_string(j), fmt(t(i, j)), fmt(f(i, j)), fmt(a(i, j))});
        out.write("fields_record_" + std::to_string(r) + ".csv", fc);
    }
    table.add("no_assimilation", "MSE", f_mse);
    table.add("no_assimilation", "RRMSE", f_rr);
    table.add("no_assimilation", "SSIM", f_ss);
    table.add(method, "MSE", a_mse);
    table.add(method, "RRMSE", a_rr);
    table.add(method, "SSIM", a_ss);
    out.write("metrics.csv", table.csv());
    out.write("iteration_log.json", nlohmann::json{{"cycles", cycles}});
    out.stage_time("outputs", clock.lap());
}

}  // namespace dassim::cli::detail
