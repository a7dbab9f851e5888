#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "subheat/error.hpp"
#include "subheat/grid.hpp"
#include "subheat/spectral.hpp"

namespace subheat {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace detail {

inline void put_f64(std::ofstream& out, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_f64(std::ifstream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    require(in.good(), "unexpected end of binary file");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace detail

inline json grid_to_json(const GridSpec& g) {
    json j;
    j["dim"] = g.dim;
    j["sizes"] = std::vector<int>(g.sizes.begin(), g.sizes.begin() + g.dim);
    j["spacing"] = std::vector<double>(g.spacing.begin(), g.spacing.begin() + g.dim);
    j["cell_volume"] = g.cell_volume();
    return j;
}

inline GridSpec grid_from_json(const json& j) {
    GridSpec g;
    g.dim = j.at("dim").get<int>();
    require(g.dim >= 1 && g.dim <= 3, "grid dim must be 1, 2 or 3");
    auto sizes = j.at("sizes").get<std::vector<int>>();
    require(static_cast<int>(sizes.size()) == g.dim, "grid sizes must list one entry per axis");
    std::vector<double> spacing;
    if (j.at("spacing").is_number()) spacing.assign(static_cast<std::size_t>(g.dim), j.at("spacing").get<double>());
    else spacing = j.at("spacing").get<std::vector<double>>();
    require(static_cast<int>(spacing.size()) == g.dim, "grid spacing must list one entry per axis");
    for (int a = 0; a < g.dim; ++a) {
        g.sizes[a] = sizes[static_cast<std::size_t>(a)];
        g.spacing[a] = spacing[static_cast<std::size_t>(a)];
    }
    return g;
}

/// Flat little-endian f64 values plus `<path>.json` describing the grid.
inline void write_grid_function(const fs::path& path, const GridSpec& g, const GridFunction& f) {
    require(f.size() == static_cast<Eigen::Index>(g.points()), "grid function does not match the grid");
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot open " + path.string());
    for (Eigen::Index i = 0; i < f.size(); ++i) detail::put_f64(out, f[i]);
    std::ofstream side(path.string() + ".json");
    side << grid_to_json(g).dump(2) << "\n";
}

inline std::pair<GridSpec, GridFunction> read_grid_function(const fs::path& path) {
    std::ifstream side(path.string() + ".json");
    require(side.good(), "missing grid sidecar for " + path.string());
    GridSpec g = grid_from_json(json::parse(side));
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open " + path.string());
    GridFunction f(static_cast<Eigen::Index>(g.points()));
    for (Eigen::Index i = 0; i < f.size(); ++i) f[i] = detail::get_f64(in);
    return {g, f};
}

/// Eigendecomposition cache: n, eigenvalues, eigenvectors row-major, all as f64.
inline fs::path cache_path(const fs::path& dir, const std::string& hash) { return dir / ("spectrum_" + hash + ".bin"); }

inline void save_decomposition(const fs::path& dir, const SpectralDecomposition& s) {
    fs::create_directories(dir);
    fs::path bin = cache_path(dir, s.operator_hash);
    fs::path tmp = bin;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        require(out.good(), "cannot open " + tmp.string());
        const auto n = s.size();
        detail::put_f64(out, static_cast<double>(n));
        for (Eigen::Index k = 0; k < n; ++k) detail::put_f64(out, s.eigenvalues[k]);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) detail::put_f64(out, s.eigenvectors(i, j));
        require(out.good(), "write failed for " + tmp.string());
    }
    fs::rename(tmp, bin);
    json side;
    side["operator_hash"] = s.operator_hash;
    side["n"] = s.size();
    side["grid"] = grid_to_json(s.grid);
    std::ofstream(bin.string() + ".json") << side.dump(2) << "\n";
}

/// Loads a cached decomposition; nullopt when absent or when the sidecar hash disagrees.
inline std::optional<SpectralDecomposition> load_decomposition(const fs::path& dir, const std::string& hash) {
    fs::path bin = cache_path(dir, hash);
    std::ifstream side(bin.string() + ".json");
    if (!side.good() || !fs::exists(bin)) return std::nullopt;
    json j;
    try {
        j = json::parse(side);
    } catch (const json::exception&) {
        return std::nullopt;
    }
    if (j.value("operator_hash", std::string{}) != hash) return std::nullopt;
    SpectralDecomposition s;
    s.operator_hash = hash;
    s.grid = grid_from_json(j.at("grid"));
    std::ifstream in(bin, std::ios::binary);
    try {
        auto n = static_cast<Eigen::Index>(detail::get_f64(in));
        if (n != static_cast<Eigen::Index>(s.grid.points())) return std::nullopt;
        s.eigenvalues.resize(n);
        s.eigenvectors.resize(n, n);
        for (Eigen::Index k = 0; k < n; ++k) s.eigenvalues[k] = detail::get_f64(in);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index c = 0; c < n; ++c) s.eigenvectors(i, c) = detail::get_f64(in);
    } catch (const Error&) {
        return std::nullopt;
    }
    return s;
}

struct CachedDecomposition {
    SpectralDecomposition spectrum;
    bool from_cache = false;
};

/// Cache lookup keyed by the operator hash; an empty directory disables caching.
/// A present but unusable entry is rebuilt and reported through `notice`.
inline CachedDecomposition decompose_cached(const DiscreteOperator& op, const fs::path& dir,
                                            const std::function<void(const std::string&)>& notice = {}) {
    CachedDecomposition r;
    std::string h = op.hash();
    if (!dir.empty()) {
        if (auto s = load_decomposition(dir, h)) {
            r.spectrum = std::move(*s);
            r.from_cache = true;
            return r;
        }
        fs::path bin = cache_path(dir, h);
        if (notice && (fs::exists(bin) || fs::exists(bin.string() + ".json")))
            notice("cache entry " + bin.string() + " does not match operator " + h + "; rebuilding");
    }
    r.spectrum = decompose(op);
    if (!dir.empty()) save_decomposition(dir, r.spectrum);
    return r;
}

}  // namespace subheat
