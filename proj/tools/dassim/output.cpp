#include "output.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace dassim::cli {

MissingArtifact::MissingArtifact(std::vector<std::string> files)
    : std::runtime_error([&] {
          std::string s = "not found:";
          for (const auto& f : files) s += " " + f;
          return s;
      }()),
      missing(std::move(files)) {}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
    // splitmix64 finalizer over the combined value
    std::uint64_t z = seed ^ fnv1a(stream);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::string Csv::str() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            out += cells[i];
        }
        out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
}

Csv Csv::parse(const std::string& text) {
    Csv c;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (line.back() == ',') cells.emplace_back();
        if (first) c.header = std::move(cells);
        else c.rows.push_back(std::move(cells));
        first = false;
    }
    return c;
}

std::size_t Csv::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    throw std::runtime_error("csv has no column '" + name + "'");
}

Csv trajectory_csv(const Matrix& traj, std::size_t first_step, const std::vector<std::string>& names) {
    Csv c;
    c.header.push_back("t");
    c.header.insert(c.header.end(), names.begin(), names.end());
    for (std::size_t r = 0; r < traj.rows(); ++r) {
        std::vector<std::string> row{std::to_string(first_step + r)};
        for (std::size_t k = 0; k < traj.cols(); ++k) row.push_back(fmt(traj(r, k)));
        c.add(std::move(row));
    }
    return c;
}

bool higher_is_better(const std::string& metric) { return metric == "SSIM"; }

double improvement(const std::string& metric, double value, double baseline) {
    return higher_is_better(metric) ? (1.0 - baseline / value) * 100.0 : (1.0 - value / baseline) * 100.0;
}

Csv MetricTable::csv() const {
    Csv c;
    c.header = {"method", "metric"};
    for (const auto& l : labels) {
        c.header.push_back(l);
        c.header.push_back(l + "_improvement_pct");
    }
    for (const auto& r : rows) {
        const Row* base = nullptr;
        for (const auto& b : rows)
            if (b.method == baseline && b.metric == r.metric) base = &b;
        std::vector<std::string> cells{r.method, r.metric};
        for (std::size_t i = 0; i < labels.size(); ++i) {
            cells.push_back(fmt(r.values[i]));
            cells.push_back(r.method == baseline || !base ? "" : fmt(improvement(r.metric, r.values[i], base->values[i])));
        }
        c.add(std::move(cells));
    }
    return c;
}

MetricTable MetricTable::from_csv(const Csv& c) {
    MetricTable t;
    if (c.header.size() < 2 || c.header[0] != "method" || c.header[1] != "metric")
        throw std::runtime_error("metrics table: unexpected header");
    for (std::size_t i = 2; i < c.header.size(); i += 2) t.labels.push_back(c.header[i]);
    for (const auto& r : c.rows) {
        Row row{r.at(0), r.at(1), {}};
        for (std::size_t i = 2; i < r.size(); i += 2) row.values.push_back(std::stod(r[i]));
        t.rows.push_back(std::move(row));
    }
    return t;
}

void OutputDir::write(const std::string& rel, const std::string& content) {
    const auto path = root_ / rel;
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
    files_[rel] = {content.size(), fnv1a(content)};
}

nlohmann::json OutputDir::inventory() const {
    auto list = nlohmann::json::array();
    for (const auto& [rel, info] : files_)
        list.push_back({{"file", rel}, {"bytes", info.first}, {"fnv1a", hex64(info.second)}});
    return list;
}

}  // namespace dassim::cli
