#include "cli.hpp"

#include <iostream>

#include <CLI11.hpp>

#include "experiments.hpp"

namespace dassim::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "1.0.0";

int exit_code(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return kConfigError;
    if (dynamic_cast<const ValidationFailed*>(&e)) return kValidationError;
    if (dynamic_cast<const NanEncountered*>(&e) || dynamic_cast<const NotPositiveDefinite*>(&e) ||
        dynamic_cast<const ZeroReference*>(&e))
        return kNumericError;
    if (dynamic_cast<const MissingArtifact*>(&e)) return kMissingArtifact;
    return kFailure;
}

const char* kind(int code) {
    switch (code) {
        case kConfigError: return "config error";
        case kValidationError: return "validation error";
        case kNumericError: return "numeric failure";
        case kMissingArtifact: return "missing artifact";
        default: return "error";
    }
}

int fail(const std::exception& e) {
    const int code = exit_code(e);
    std::cerr << "dassim: " << kind(code) << ": " << e.what() << "\n";
    return code;
}

struct Common {
    std::string config;
    std::string out;
    std::string scale = "desk";
    std::optional<std::uint64_t> seed;
    bool check = false;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "experiment config file")->required();
    cmd->add_option("--out", c.out, "output directory (default: runs/<name>-<scale>)");
    cmd->add_option("--scale", c.scale, "settings to use")->check(CLI::IsMember({"paper", "desk"}));
    cmd->add_option("--seed", c.seed, "override the config seed");
    cmd->add_flag("--check", c.check, "validate the config and its case, then stop without writing anything");
}

nlohmann::json manifest(const ExperimentConfig& cfg, const OutputDir& out, const std::string& verb,
                        const std::string& status, const std::string& error) {
    nlohmann::json m{{"tool", "dassim"},
                     {"version", kVersion},
                     {"schema_version", kSchemaVersion},
                     {"verb", verb},
                     {"name", cfg.name},
                     {"testbed", cfg.testbed},
                     {"algorithm", to_string(cfg.algorithm)},
                     {"scale", cfg.scale},
                     {"seed", cfg.seed},
                     {"config_hash", hex64(fnv1a(cfg.source))},
                     {"status", status},
                     {"partial", status != "complete"},
                     {"timings_seconds", out.timings()},
                     {"notes", out.notes()},
                     {"files", out.inventory()}};
    if (!error.empty()) m["error"] = error;
    return m;
}

// Loads and prechecks before anything touches the output directory, so a
// bad config or case leaves no files behind.
int with_config(const Common& c, const std::string& verb,
                const std::function<void(const ExperimentConfig&, OutputDir&)>& body) {
    ExperimentConfig cfg;
    try {
        cfg = load_config(c.config, c.scale, c.seed);
        precheck(cfg);
    } catch (const std::exception& e) {
        return fail(e);
    }
    if (c.check) {
        std::cout << c.config << " (" << cfg.scale << "): ok\n";
        return kOk;
    }
    const fs::path dir = c.out.empty() ? fs::path("runs") / (cfg.name + "-" + cfg.scale) : fs::path(c.out);
    OutputDir out(dir);
    int code = kOk;
    std::string error;
    try {
        fs::create_directories(dir);
        body(cfg, out);
    } catch (const std::exception& e) {
        code = fail(e);
        error = e.what();
    }
    try {
        out.write("manifest.json", manifest(cfg, out, verb, code == kOk ? "complete" : "partial", error));
    } catch (const std::exception& e) {
        std::cerr << "dassim: could not write manifest: " << e.what() << "\n";
        if (code == kOk) code = kFailure;
    }
    if (code == kOk) std::cout << "wrote " << dir.string() << "\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Data assimilation experiments with surrogate models"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    Common run_opts, train_opts;
    auto* run = app.add_subcommand("run", "simulate, assimilate and write results");
    add_common(run, run_opts);
    auto* train = app.add_subcommand("train", "train the config's train-now networks and save them");
    add_common(train, train_opts);
    std::string run_dir;
    auto* report = app.add_subcommand("report", "build tables and plot series from a finished run");
    report->add_option("--out", run_dir, "run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    if (run->parsed())
        return with_config(run_opts, "run", [](const ExperimentConfig& cfg, OutputDir& out) { run_experiment(cfg, out); });

    if (train->parsed())
        return with_config(train_opts, "train", [](const ExperimentConfig& cfg, OutputDir& out) {
            const auto reports = train_surrogates(cfg, out);
            if (reports.empty()) std::cout << "nothing to train: the config has no train-now networks\n";
            for (const auto& r : reports) {
                std::cout << r.name << ": loss " << fmt(r.initial_loss) << " -> " << fmt(r.final_loss);
                if (r.validation_loss) std::cout << ", validation " << fmt(*r.validation_loss);
                std::cout << " (" << r.train_count << " train / " << r.validation_count << " validation samples)\n";
                out.notes()["surrogates"][r.name] = r.to_json();
            }
        });

    try {
        write_report(run_dir);
        std::cout << "wrote " << (fs::path(run_dir) / "report").string() << "\n";
        return kOk;
    } catch (const std::exception& e) {
        return fail(e);
    }
}

}  // namespace dassim::cli
