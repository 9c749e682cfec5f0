#include <cmath>

#include "dassim/operators/model_io.hpp"
#include "dassim/testbeds/metrics.hpp"
#include "dassim/testbeds/twin.hpp"
#include "experiments.hpp"

namespace dassim::cli::detail {

namespace {

const std::vector<std::string> kXyz{"X", "Y", "Z"};

std::string method_name(Algorithm a) {
    switch (a) {
        case Algorithm::EnKF: return "EnKF";
        case Algorithm::Var3D: return "3DVar";
        case Algorithm::Var4D: return "4DVar";
    }
    return "?";
}

std::size_t step_of(double t, double dt) { return static_cast<std::size_t>(std::llround(t / dt)); }

// Observation instants make_observations would produce, without noise.
std::vector<std::size_t> observation_times(const ExperimentConfig& cfg) {
    std::vector<std::size_t> t;
    for (std::size_t s = cfg.obs_every; s < cfg.lorenz.steps(); s += cfg.obs_every) t.push_back(s);
    return t;
}

// Indices into the observation list covered by the (single) 4DVar window.
std::pair<std::size_t, std::size_t> window_indices(const ExperimentConfig& cfg, const std::vector<std::size_t>& times) {
    const TimeWindow& w = cfg.windows.front();
    const std::size_t s0 = step_of(w.start, cfg.lorenz.dt), s1 = step_of(w.end, cfg.lorenz.dt);
    std::size_t first = times.size(), last = 0;
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (times[k] < s0 || times[k] > s1) continue;
        first = std::min(first, k);
        last = k;
    }
    if (first == times.size()) return {0, 0};
    return {first, last + 1};
}

DifferentiableOperator segment_model(const ExperimentConfig& cfg, const LstmStack* lstm) {
    if (!lstm) return lorenz_forward_model(cfg.lorenz, cfg.obs_every);
    LstmStack s = *lstm;
    s.out_seq_length = cfg.obs_every;
    return lstm_forward_model(std::move(s));
}

ParameterSet lorenz_case(const ExperimentConfig& cfg, const DifferentiableOperator& m, const Vector& background,
                         Matrix obs_values, std::vector<std::size_t> times) {
    ParameterSet p = base_case(cfg);
    p.observation_model = Matrix::identity(3);
    p.background_state = Matrix::row_vector(background);
    p.forward_model = m;
    p.output_sequence_length = cfg.obs_every + 1;
    std::vector<std::size_t> gaps;
    for (std::size_t k = 1; k < times.size(); ++k) gaps.push_back(times[k] - times[k - 1]);
    p.observations = std::move(obs_values);
    p.observation_time_steps = std::move(times);
    p.gaps = std::move(gaps);
    if (cfg.args) p.args = *cfg.args;
    return p;
}

// EnKF observes from the start of the run; 4DVar only inside its window, with
// times relative to the first observation there (the background instant).
ParameterSet case_for(const ExperimentConfig& cfg, const DifferentiableOperator& m, const Vector& background,
                      const Matrix& values, const std::vector<std::size_t>& times) {
    if (cfg.algorithm == Algorithm::EnKF) return lorenz_case(cfg, m, background, values, times);
    auto [first, end] = window_indices(cfg, times);
    std::vector<std::size_t> rel;
    for (std::size_t k = first; k < end; ++k) rel.push_back(times[k] - times[first]);
    return lorenz_case(cfg, m, background, row_block(values, first, end - first), rel);
}

std::optional<LstmStack> initial_surrogate(const ExperimentConfig& cfg) {
    const SurrogateSpec* s = cfg.surrogate("forward_model");
    if (!s) return std::nullopt;
    return initial_lstm(*s, 3, derive_seed(cfg.seed, "init:forward_model"));
}

LstmStack fit_surrogate(const ExperimentConfig& cfg, LstmStack init, SurrogateReport& report) {
    const SurrogateSpec& s = *cfg.surrogate("forward_model");
    Lorenz63Config data = cfg.lorenz;
    if (s.data_t_final > 0.0) data.t_final = s.data_t_final;
    return fit_lstm(s, std::move(init), lorenz_trajectory(data), derive_seed(cfg.seed, "train:forward_model"), report);
}

void add_window_metrics(MetricTable& table, const std::string& method, const Matrix& pred, const Matrix& truth,
                        std::size_t first_step, const ExperimentConfig& cfg) {
    std::vector<double> mse_v, rr, rx, ry, rz;
    for (const auto& w : cfg.windows) {
        std::size_t a = step_of(w.start, cfg.lorenz.dt), b = step_of(w.end, cfg.lorenz.dt);
        a = std::max(a, first_step) - first_step;
        b = std::min(b, first_step + truth.rows() - 1) - first_step;
        if (a > b) throw DimensionMismatch("window '" + w.label + "' does not overlap the assimilated trajectory");
        Matrix p = row_block(pred, a, b - a + 1), t = row_block(truth, a, b - a + 1);
        mse_v.push_back(mse(p, t));
        rr.push_back(rrmse(p, t));
        Vector c = rrmse_per_component(p, t);
        rx.push_back(c[0]);
        ry.push_back(c[1]);
        rz.push_back(c[2]);
    }
    table.add(method, "MSE", mse_v);
    table.add(method, "RRMSE", rr);
    table.add(method, "RRMSE_X", rx);
    table.add(method, "RRMSE_Y", ry);
    table.add(method, "RRMSE_Z", rz);
}

}  // namespace

void precheck_lorenz(const ExperimentConfig& cfg) {
    auto lstm = initial_surrogate(cfg);
    auto m = segment_model(cfg, lstm ? &*lstm : nullptr);
    auto times = observation_times(cfg);
    const auto issues = validate(case_for(cfg, m, cfg.background_state, Matrix(times.size(), 3), times));
    if (!issues.empty()) throw ValidationFailed(issues);
}

std::vector<SurrogateReport> train_lorenz(const ExperimentConfig& cfg, OutputDir& out) {
    std::vector<SurrogateReport> reports;
    const SurrogateSpec* s = cfg.surrogate("forward_model");
    if (!s || !s->train) return reports;
    SurrogateReport r;
    LstmStack net = fit_surrogate(cfg, *initial_surrogate(cfg), r);
    out.write("models/forward_model.model", serialize_model(net));
    reports.push_back(r);
    return reports;
}

void run_lorenz(const ExperimentConfig& cfg, OutputDir& out) {
    Stopwatch clock;
    const Matrix truth = lorenz_trajectory(cfg.lorenz);
    Rng obs_rng(derive_seed(cfg.seed, "observations"));
    const ObservationSeries obs = make_observations(truth, cfg.obs_every, cfg.noise_std, obs_rng);
    out.stage_time("simulate", clock.lap());

    std::optional<LstmStack> lstm = initial_surrogate(cfg);
    if (lstm) {
        SurrogateReport r;
        lstm = fit_surrogate(cfg, std::move(*lstm), r);
        if (r.trained) out.write("models/forward_model.model", serialize_model(*lstm));
        out.notes()["surrogates"]["forward_model"] = r.to_json();
        out.stage_time("train", clock.lap());
    }
    const DifferentiableOperator model = segment_model(cfg, lstm ? &*lstm : nullptr);
    // the case binds args itself; the free run needs them bound here
    const DifferentiableOperator m = cfg.args ? model.bind_args(*cfg.args) : model;

    const std::string method = method_name(cfg.algorithm);
    const std::string file = cfg.algorithm == Algorithm::EnKF ? "enkf" : "var4d";
    CaseBuilder builder(cfg.name, case_for(cfg, model, cfg.background_state, obs.values, obs.times));
    const ResultMap& res = builder.execute();
    out.stage_time("assimilate", clock.lap());

    Matrix analysis, free_run, truth_w;
    std::size_t first_step = 0;
    std::vector<std::size_t> segments;
    if (cfg.algorithm == Algorithm::EnKF) {
        analysis = std::get<Matrix>(res.at("average_ensemble_all_states"));
        for (std::size_t k = 0; k < obs.size(); ++k) segments.push_back(obs.segment(k));
        free_run = chain(m, cfg.background_state, segments);
        Csv oc = trajectory_csv(obs.values, 0, kXyz);
        for (std::size_t k = 0; k < obs.size(); ++k) oc.rows[k][0] = std::to_string(obs.times[k]);
        out.write("observations.csv", oc);
    } else {
        auto [first, end] = window_indices(cfg, obs.times);
        first_step = obs.times[first];
        for (std::size_t k = first + 1; k < end; ++k) segments.push_back(obs.times[k] - obs.times[k - 1]);
        // background: the free run from the initial guess up to the window start
        std::vector<std::size_t> lead;
        for (std::size_t k = 0; k <= first; ++k) lead.push_back(obs.segment(k));
        const Matrix before = chain(m, cfg.background_state, lead);
        free_run = chain(m, before.row(before.rows() - 1), segments);
        analysis = chain(m, std::get<Matrix>(res.at("assimilated_state")).row(0), segments);
        Csv oc = trajectory_csv(row_block(obs.values, first, end - first), 0, kXyz);
        for (std::size_t k = first; k < end; ++k) oc.rows[k - first][0] = std::to_string(obs.times[k]);
        out.write("observations.csv", oc);
        const auto& ir = std::get<IntermediateResults>(res.at("intermediate_results"));
        out.write("iteration_log.json", nlohmann::json{{"cycles", {log_json(ir)}}});
    }
    truth_w = row_block(truth, first_step, analysis.rows());

    out.write("truth.csv", trajectory_csv(truth_w, first_step, kXyz));
    out.write("no_assimilation.csv", trajectory_csv(free_run, first_step, kXyz));
    out.write(file + ".csv", trajectory_csv(analysis, first_step, kXyz));

    MetricTable table;
    for (const auto& w : cfg.windows) table.labels.push_back(w.label);
    add_window_metrics(table, "no_assimilation", free_run, truth_w, first_step, cfg);
    add_window_metrics(table, method, analysis, truth_w, first_step, cfg);
    out.write("metrics.csv", table.csv());

    const Matrix e_free = rrmse_series(free_run, truth_w), e_da = rrmse_series(analysis, truth_w);
    Csv series;
    series.header = {"t"};
    for (const auto& who : {std::string("no_assimilation"), method})
        for (const auto& c : kXyz) series.header.push_back(who + "_" + c);
    for (std::size_t r = 0; r < truth_w.rows(); ++r) {
        std::vector<std::string> row{std::to_string(first_step + r)};
        for (std::size_t c = 0; c < 3; ++c) row.push_back(fmt(e_free(r, c)));
        for (std::size_t c = 0; c < 3; ++c) row.push_back(fmt(e_da(r, c)));
        series.add(std::move(row));
    }
    out.write("rrmse_series.csv", series);
    out.stage_time("outputs", clock.lap());
}

}  // namespace dassim::cli::detail
