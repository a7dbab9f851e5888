#pragma once

#include <Eigen/Core>

#include <boost/version.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "subheat/bounds.hpp"
#include "subheat/error.hpp"
#include "subheat/hash.hpp"
#include "subheat/io.hpp"

namespace subheat {

inline constexpr const char* kSubheatVersion = "0.1.0";

/// Finite numbers as JSON numbers; inf and nan as strings so the output stays valid JSON.
inline json num(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

inline json to_json(const BoundReport& r) {
    json j;
    j["name"] = r.bound.name;
    j["kernel_kind"] = to_string(r.bound.kernel_kind);
    j["shape"] = r.bound.shape;
    json nl = json::array();
    for (double n : r.bound.N_list) nl.push_back(num(n));
    j["N_list"] = nl;
    j["delta"] = num(r.bound.delta);
    j["gaussian_rate"] = num(r.bound.gaussian_rate);
    j["empirical_sup"] = num(r.empirical_sup);
    j["finite"] = r.finite();
    j["argmax"] = {{"x", r.argmax.x}, {"y", r.argmax.y}, {"t", num(r.argmax.t)}};
    j["refinement_ratio"] = r.refinement_ratio ? num(*r.refinement_ratio) : json(nullptr);
    json f = json::object(), s = json::object();
    for (const auto& [k, v] : r.fitted) f[k] = num(v);
    for (const auto& [k, v] : r.stats) s[k] = num(v);
    j["fitted"] = f;
    j["stats"] = s;
    j["notes"] = r.notes;
    j["pass"] = r.pass;
    return j;
}

/// Small table written as CSV. Cells are strings or numbers (formatted with %.12g).
struct CsvTable {
    std::string filename;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    static std::string cell(double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.12g", v);
        return buf;
    }
    void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }
    void add_numbers(const std::vector<double>& row) {
        std::vector<std::string> r;
        for (double v : row) r.push_back(cell(v));
        rows.push_back(std::move(r));
    }
    std::string text() const {
        std::string out;
        auto line = [&](const std::vector<std::string>& r) {
            for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + r[i];
            out += "\n";
        };
        line(header);
        for (const auto& r : rows) line(r);
        return out;
    }
};

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p) {
    std::ifstream in(p);
    require(in.good(), "cannot open " + p.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        rows.push_back(std::move(cells));
    }
    return rows;
}

inline std::string file_checksum(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    require(in.good(), "cannot open " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    Fnv1a h;
    h.update(ss.str());
    return h.hex();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    require(out.good(), "cannot write " + p.string());
    out << text;
}

inline json artifact_versions() {
    return {{"subheat", kSubheatVersion},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"boost", std::to_string(BOOST_VERSION / 100000) + "." + std::to_string(BOOST_VERSION / 100 % 1000) + "." +
                          std::to_string(BOOST_VERSION % 100)},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

struct TaskStatus {
    std::string name;
    std::string status;  ///< "pass", "fail" or "error"
    double seconds = 0.0;
};

/// Manifest over every regular file below `dir` except itself; paths sorted.
inline json build_manifest(const std::filesystem::path& dir, const std::string& config_hash,
                           const std::vector<TaskStatus>& tasks) {
    namespace fs = std::filesystem;
    std::vector<std::string> files;
    if (fs::exists(dir))
        for (const auto& e : fs::recursive_directory_iterator(dir))
            if (e.is_regular_file() && e.path().filename() != "manifest.json")
                files.push_back(fs::relative(e.path(), dir).generic_string());
    std::sort(files.begin(), files.end());
    json m;
    m["config_hash"] = config_hash;
    m["artifact_versions"] = artifact_versions();
    json t = json::array();
    for (const auto& s : tasks) t.push_back({{"task", s.name}, {"status", s.status}, {"wall_clock_seconds", s.seconds}});
    m["tasks"] = t;
    json f = json::array();
    for (const auto& rel : files) f.push_back({{"path", rel}, {"fnv1a64", file_checksum(dir / rel)}});
    m["files"] = f;
    return m;
}

}  // namespace subheat
