#include "config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace dassim::cli {

namespace {

using nlohmann::json;

// Read access to one JSON object that remembers which keys were used, so
// that anything left over can be reported as a typo.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail("", "must be an object");
    }

    [[noreturn]] void fail(std::string_view key, const std::string& msg) const {
        std::string where = path_;
        if (!key.empty()) where += (where.empty() ? "" : ".") + std::string(key);
        throw ConfigError(where + ": " + msg);
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& raw(const std::string& key) {
        if (!j_.contains(key)) fail(key, "missing");
        used_.insert(key);
        return j_.at(key);
    }

    Section object(const std::string& key) { return Section(raw(key), join(key)); }

    double number(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_number()) fail(key, "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) fail(key, "must be finite");
        return d;
    }
    double number_or(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

    std::size_t count(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0) fail(key, "expected a non-negative integer");
        return v.get<std::size_t>();
    }
    std::size_t count_or(const std::string& key, std::size_t fallback) { return has(key) ? count(key) : fallback; }

    std::string string(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_string()) fail(key, "expected a string");
        return v.get<std::string>();
    }

    bool boolean_or(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (!v.is_boolean()) fail(key, "expected true or false");
        return v.get<bool>();
    }

    Vector numbers(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_array()) fail(key, "expected an array of numbers");
        Vector out;
        for (const auto& e : v) {
            if (!e.is_number()) fail(key, "expected an array of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }

    std::vector<std::size_t> counts(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_array()) fail(key, "expected an array of non-negative integers");
        std::vector<std::size_t> out;
        for (const auto& e : v) {
            if (!e.is_number_integer() || e.get<std::int64_t>() < 0)
                fail(key, "expected an array of non-negative integers");
            out.push_back(e.get<std::size_t>());
        }
        return out;
    }

    // {"identity": n, "variance": v} | {"diagonal": [...]} | {"matrix": [[...], ...]}
    Matrix covariance(const std::string& key) {
        Section s = object(key);
        Matrix m;
        if (s.has("identity")) {
            m = Matrix::identity(s.count("identity")) * s.number_or("variance", 1.0);
        } else if (s.has("diagonal")) {
            Vector d = s.numbers("diagonal");
            m = Matrix(d.size(), d.size());
            for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        } else if (s.has("matrix")) {
            const json& rows = s.raw("matrix");
            if (!rows.is_array() || rows.empty()) s.fail("matrix", "expected a non-empty array of rows");
            m = Matrix(rows.size(), rows[0].size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (!rows[i].is_array() || rows[i].size() != m.cols()) s.fail("matrix", "rows must have equal length");
                for (std::size_t k = 0; k < m.cols(); ++k) {
                    if (!rows[i][k].is_number()) s.fail("matrix", "expected numbers");
                    m(i, k) = rows[i][k].get<double>();
                }
            }
        } else {
            s.fail("", "expected one of identity, diagonal or matrix");
        }
        s.finish();
        return m;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) fail(it.key(), "unknown key");
    }

private:
    std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

SurrogateSpec parse_surrogate(Section s, const std::string& name, const std::string& default_kind,
                              const std::filesystem::path& base) {
    SurrogateSpec spec;
    spec.name = name;
    spec.kind = s.has("kind") ? s.string("kind") : default_kind;
    if (spec.kind == "composed") {
        if (name != "latent_observation_model") s.fail("kind", "'composed' is only valid for latent_observation_model");
        s.finish();
        return spec;
    }
    if (spec.kind != default_kind && !(name == "latent_observation_model" && spec.kind == "dense"))
        s.fail("kind", "expected '" + default_kind + "'");
    if (s.has("file") == s.has("train")) s.fail("", "give exactly one of 'file' or 'train'");
    if (s.has("file")) {
        std::filesystem::path p = s.string("file");
        if (p.is_relative()) p = base / p;
        if (!std::filesystem::exists(p)) s.fail("file", "model file '" + p.string() + "' does not exist");
        spec.file = p;
        s.finish();
        return spec;
    }
    spec.train = true;
    Section t = s.object("train");
    if (spec.kind == "lstm") {
        spec.num_layers = t.count("num_layers");
        spec.hidden_dim = t.count("hidden_dim");
        spec.train_seq_length = t.count("train_seq_length");
        spec.sample_stride = t.count_or("sample_stride", 1);
        spec.data_t_final = t.number_or("data_t_final", 0.0);
        if (spec.num_layers < 1 || spec.hidden_dim < 1 || spec.train_seq_length < 1 || spec.sample_stride < 1)
            t.fail("", "num_layers, hidden_dim, train_seq_length and sample_stride must be at least 1");
        spec.training.split = ValidationSplit::trailing;
    } else {
        spec.hidden = t.counts("hidden");
        if (spec.kind == "autoencoder") {
            spec.latent_dim = t.count("latent_dim");
            if (spec.latent_dim < 1) t.fail("latent_dim", "must be at least 1");
        }
        if (t.has("activation")) {
            try {
                spec.activation = activation_from_string(t.string("activation"));
            } catch (const Error& e) {
                t.fail("activation", e.what());
            }
        }
    }
    spec.training.epochs = t.count("epochs");
    spec.training.batch_size = t.count_or("batch_size", 32);
    spec.training.learning_rate = t.number_or("learning_rate", 1e-3);
    spec.training.validation_fraction = t.number_or("validation_fraction", 0.0);
    try {
        spec.training.validate();
    } catch (const Error& e) {
        t.fail("", e.what());
    }
    t.finish();
    s.finish();
    return spec;
}

void parse_case(Section c, ExperimentConfig& cfg) {
    cfg.background_covariance = c.covariance("background_covariance_matrix");
    cfg.observation_covariance = c.covariance("observation_covariance_matrix");
    if (cfg.algorithm == Algorithm::EnKF) {
        cfg.num_ensembles = c.count("num_ensembles");
    } else {
        cfg.learning_rate = c.number("learning_rate");
        cfg.max_iterations = c.count("max_iterations");
        cfg.record_log = c.boolean_or("record_log", true);
    }
    c.finish();
}

void parse_lorenz(Section& s, ExperimentConfig& cfg) {
    Section l = s.object("lorenz63");
    cfg.lorenz.sigma = l.number("sigma");
    cfg.lorenz.r = l.number("r");
    cfg.lorenz.beta = l.number("beta");
    cfg.lorenz.dt = l.number("dt");
    cfg.lorenz.t_final = l.number("t_final");
    cfg.lorenz.x0 = l.numbers("x0");
    l.finish();
    try {
        cfg.lorenz.validate();
    } catch (const Error& e) {
        l.fail("", e.what());
    }

    Section o = s.object("observations");
    cfg.obs_every = o.count("every");
    if (cfg.obs_every < 1) o.fail("every", "must be at least 1");
    if (o.has("noise_std") && o.raw("noise_std").is_array())
        cfg.noise_std = o.numbers("noise_std");
    else
        cfg.noise_std = Vector(3, o.number("noise_std"));
    o.finish();

    cfg.background_state = s.numbers("background_state");
    if (s.has("args")) cfg.args = s.numbers("args");
    if (s.has("forward_model"))
        cfg.surrogates.push_back(parse_surrogate(s.object("forward_model"), "forward_model", "lstm", cfg.base_dir));

    if (cfg.algorithm == Algorithm::Var4D) {
        Section w = s.object("window");
        cfg.windows.push_back({"window", w.number("start"), w.number("end")});
        w.finish();
    } else if (s.has("windows")) {
        const auto& list = s.raw("windows");
        if (!list.is_array() || list.empty()) s.fail("windows", "expected a non-empty array");
        for (std::size_t i = 0; i < list.size(); ++i) {
            Section w(list[i], "windows[" + std::to_string(i) + "]");
            cfg.windows.push_back({w.string("label"), w.number("start"), w.number("end")});
            w.finish();
        }
    } else {
        cfg.windows.push_back({"full_window", 0.0, cfg.lorenz.t_final});
    }
    for (const auto& w : cfg.windows) {
        if (!(w.end > w.start) || w.start < 0.0) s.fail("windows", "window '" + w.label + "' must have 0 <= start < end");
        for (char ch : w.label)
            if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_'))
                s.fail("windows", "labels may only use letters, digits and '_'");
    }
    parse_case(s.object("case"), cfg);
}

void parse_shallow_water(Section& s, ExperimentConfig& cfg) {
    Section w = s.object("shallow_water");
    cfg.sw.nx = w.count("nx");
    cfg.sw.ny = w.count("ny");
    cfg.sw.dx = w.number_or("dx", 1.0);
    cfg.sw.dk = w.number("dk");
    cfg.sw.g = w.number_or("g", 1.0);
    cfg.sw.b_drag = w.number_or("b_drag", 0.0);
    cfg.sw.base_depth = w.number_or("base_depth", 1.0);
    cfg.sw.cylinder_height = w.number("cylinder_height");
    cfg.sw.cylinder_radius = w.number("cylinder_radius");
    w.finish();
    try {
        cfg.sw.validate();
    } catch (const Error& e) {
        w.fail("", e.what());
    }
    cfg.records = s.count("records");
    cfg.record_every = s.count_or("record_every", 1);
    if (cfg.records < 2 || cfg.record_every < 1) s.fail("records", "need at least 2 records, recorded every >= 1 steps");

    Section a = s.object("assimilation");
    cfg.mode = a.string("mode");
    if (cfg.mode != "latent_to_full" && cfg.mode != "latent_to_latent")
        a.fail("mode", "expected latent_to_full or latent_to_latent");
    cfg.forecast_start = a.count("forecast_start");
    cfg.instants = a.counts("instants");
    if (cfg.instants.empty()) a.fail("instants", "need at least one assimilation instant");
    std::size_t prev = cfg.forecast_start;
    for (std::size_t r : cfg.instants) {
        if (r <= prev) a.fail("instants", "must be strictly increasing and after forecast_start");
        if (r >= cfg.records) a.fail("instants", "record " + std::to_string(r) + " is beyond the simulated records");
        prev = r;
    }
    const std::size_t default_chunk =
        cfg.instants.size() > 1 ? cfg.instants[1] - cfg.instants[0] : cfg.instants[0] - cfg.forecast_start;
    cfg.forecast_chunk = a.count_or("forecast_chunk", default_chunk);
    if (cfg.forecast_chunk < 1) a.fail("forecast_chunk", "must be at least 1");
    a.finish();

    Section n = s.object("surrogates");
    cfg.surrogates.push_back(parse_surrogate(n.object("autoencoder_u"), "autoencoder_u", "autoencoder", cfg.base_dir));
    cfg.surrogates.push_back(parse_surrogate(n.object("autoencoder_h"), "autoencoder_h", "autoencoder", cfg.base_dir));
    cfg.surrogates.push_back(parse_surrogate(n.object("observation_model"), "observation_model", "dense", cfg.base_dir));
    if (cfg.mode == "latent_to_latent") {
        SurrogateSpec composed{.name = "latent_observation_model", .kind = "composed"};
        cfg.surrogates.push_back(n.has("latent_observation_model")
                                     ? parse_surrogate(n.object("latent_observation_model"), "latent_observation_model",
                                                       "dense", cfg.base_dir)
                                     : composed);
    }
    cfg.surrogates.push_back(parse_surrogate(n.object("forward_model"), "forward_model", "lstm", cfg.base_dir));
    n.finish();

    parse_case(s.object("case"), cfg);
}

}  // namespace

ExperimentConfig load_config(const std::filesystem::path& path, const std::string& scale,
                             std::optional<std::uint64_t> seed_override) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();

    ExperimentConfig cfg;
    cfg.source = ss.str();
    cfg.base_dir = path.parent_path();
    cfg.scale = scale;

    json doc;
    try {
        doc = json::parse(cfg.source);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": not valid JSON: " + e.what());
    }
    try {
        Section top(doc, "");
        if (top.count("schema_version") != static_cast<std::size_t>(kSchemaVersion))
            top.fail("schema_version", "unsupported version (this build reads " + std::to_string(kSchemaVersion) + ")");
        cfg.name = top.string("name");
        if (cfg.name.empty()) top.fail("name", "must not be empty");
        if (top.has("description")) (void)top.string("description");
        cfg.testbed = top.string("testbed");
        const std::string algo = top.string("algorithm");
        if (algo == "EnKF") cfg.algorithm = Algorithm::EnKF;
        else if (algo == "Var3D") cfg.algorithm = Algorithm::Var3D;
        else if (algo == "Var4D") cfg.algorithm = Algorithm::Var4D;
        else top.fail("algorithm", "expected EnKF, Var3D or Var4D");
        cfg.seed = top.count_or("seed", 0);
        if (seed_override) cfg.seed = *seed_override;

        Section scales = top.object("scales");
        if (!scales.has(scale)) scales.fail(scale, "this config has no '" + scale + "' scale");
        const json& all = scales.raw(scale);
        for (auto it = doc.at("scales").begin(); it != doc.at("scales").end(); ++it) {
            if (it.key() != "paper" && it.key() != "desk") scales.fail(it.key(), "scales are 'paper' and 'desk'");
            (void)scales.raw(it.key());
        }
        Section s(all, "scales." + scale);
        if (cfg.testbed == "lorenz63") {
            if (cfg.algorithm == Algorithm::Var3D) top.fail("algorithm", "Var3D is only wired up for shallow_water");
            parse_lorenz(s, cfg);
        } else if (cfg.testbed == "shallow_water") {
            if (cfg.algorithm == Algorithm::EnKF) top.fail("algorithm", "EnKF is only wired up for lorenz63");
            parse_shallow_water(s, cfg);
            if (cfg.algorithm == Algorithm::Var4D && cfg.instants.size() < 2)
                top.fail("scales", "Var4D needs at least two assimilation instants");
        } else {
            top.fail("testbed", "expected lorenz63 or shallow_water");
        }
        s.finish();
        top.finish();
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return cfg;
}

}  // namespace dassim::cli
