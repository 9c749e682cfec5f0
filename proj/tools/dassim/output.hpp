#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dassim/numerics/matrix.hpp"

namespace dassim::cli {

// Raised by `report` for every file the manifest promises but the run
// directory lacks.
class MissingArtifact : public std::runtime_error {
public:
    explicit MissingArtifact(std::vector<std::string> files);
    std::vector<std::string> missing;
};

// 17 significant digits, enough to round-trip any double.
std::string fmt(double v);

std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);
std::string read_file(const std::filesystem::path& p);

// Seeds for independent streams (observation noise, network init, ...)
// derived from the run seed and a stream name.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }
    std::string str() const;
    static Csv parse(const std::string& text);
    std::size_t column(const std::string& name) const;
};

// Step index followed by the state columns.
Csv trajectory_csv(const Matrix& traj, std::size_t first_step, const std::vector<std::string>& names);

// Tables shaped like method x metric, one value column per label and an
// improvement column after each. Improvement is measured against the
// baseline method: (1 - value/baseline)·100 for errors and
// (1 - baseline/value)·100 for similarity scores, so positive is better
// in both cases.
struct MetricTable {
    std::string baseline = "no_assimilation";
    std::vector<std::string> labels;
    struct Row {
        std::string method;
        std::string metric;
        std::vector<double> values;
    };
    std::vector<Row> rows;

    void add(std::string method, std::string metric, std::vector<double> values) {
        rows.push_back({std::move(method), std::move(metric), std::move(values)});
    }
    Csv csv() const;
    static MetricTable from_csv(const Csv& c);
};

bool higher_is_better(const std::string& metric);
double improvement(const std::string& metric, double value, double baseline);

// Everything a command writes goes through here so the manifest can list
// each file with its size and hash.
class OutputDir {
public:
    explicit OutputDir(std::filesystem::path root) : root_(std::move(root)) {}

    void write(const std::string& rel, const std::string& content);
    void write(const std::string& rel, const Csv& csv) { write(rel, csv.str()); }
    void write(const std::string& rel, const nlohmann::json& j) { write(rel, j.dump(2) + "\n"); }

    void stage_time(const std::string& stage, double seconds) { timings_[stage] += seconds; }
    nlohmann::json& notes() { return notes_; }
    const nlohmann::json& notes() const { return notes_; }

    const std::filesystem::path& root() const { return root_; }
    nlohmann::json inventory() const;
    nlohmann::json timings() const { return nlohmann::json(timings_); }

private:
    std::filesystem::path root_;
    std::map<std::string, std::pair<std::size_t, std::uint64_t>> files_;
    std::map<std::string, double> timings_;
    nlohmann::json notes_ = nlohmann::json::object();
};

}  // namespace dassim::cli
