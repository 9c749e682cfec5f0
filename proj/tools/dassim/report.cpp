#include <filesystem>

#include "experiments.hpp"

namespace dassim::cli {

namespace fs = std::filesystem;

namespace {

// One file per state component: t, then one column per method.
void component_series(OutputDir& out, const Csv& series) {
    for (const std::string c : {"X", "Y", "Z"}) {
        Csv s;
        s.header = {"t"};
        std::vector<std::size_t> cols;
        for (std::size_t i = 1; i < series.header.size(); ++i) {
            const std::string& h = series.header[i];
            if (h.size() > 2 && h.compare(h.size() - 2, 2, "_" + c) == 0) {
                s.header.push_back(h.substr(0, h.size() - 2));
                cols.push_back(i);
            }
        }
        for (const auto& row : series.rows) {
            std::vector<std::string> r{row.at(0)};
            for (std::size_t i : cols) r.push_back(row.at(i));
            s.add(std::move(r));
        }
        out.write("report/rrmse_" + c + ".csv", s);
    }
}

}  // namespace

void write_report(const fs::path& run_dir) {
    const fs::path manifest_path = run_dir / "manifest.json";
    if (!fs::exists(manifest_path)) throw MissingArtifact({"manifest.json"});
    const auto manifest = nlohmann::json::parse(read_file(manifest_path));

    std::vector<std::string> missing;
    std::vector<std::string> listed;
    for (const auto& f : manifest.value("files", nlohmann::json::array())) {
        const std::string name = f.at("file").get<std::string>();
        listed.push_back(name);
        if (!fs::exists(run_dir / name)) missing.push_back(name);
    }
    auto listed_has = [&](const std::string& n) { return std::find(listed.begin(), listed.end(), n) != listed.end(); };
    if (!listed_has("metrics.csv") && !fs::exists(run_dir / "metrics.csv")) missing.push_back("metrics.csv");
    const bool lorenz = manifest.value("testbed", "") == "lorenz63";
    const std::string series_file = lorenz ? "rrmse_series.csv" : "mse_series.csv";
    if (!listed_has(series_file) && !fs::exists(run_dir / series_file)) missing.push_back(series_file);
    if (!missing.empty()) throw MissingArtifact(missing);

    OutputDir out(run_dir);
    // the table is rebuilt from the persisted values, so improvements always
    // follow this run's own numbers
    out.write("report/table.csv", MetricTable::from_csv(Csv::parse(read_file(run_dir / "metrics.csv"))).csv());
    const Csv series = Csv::parse(read_file(run_dir / series_file));
    if (lorenz) {
        component_series(out, series);
    } else {
        out.write("report/mse.csv", series);
        for (const auto& name : listed)
            if (name.rfind("fields_", 0) == 0) out.write("report/" + name, read_file(run_dir / name));
    }
}

}  // namespace dassim::cli
