#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "subheat/error.hpp"
#include "subheat/fields.hpp"
#include "subheat/grid.hpp"
#include "subheat/hash.hpp"
#include "subheat/io.hpp"

namespace subheat {

/// Malformed configuration; `line` is 1-based, 0 when no anchor is known.
class ConfigError : public Error {
public:
    ConfigError(std::string source, std::size_t line, std::size_t column, const std::string& msg)
        : Error(format(source, line, column, msg)), line_(line), column_(column) {}
    std::size_t line() const { return line_; }
    std::size_t column() const { return column_; }

private:
    static std::string format(const std::string& src, std::size_t line, std::size_t col, const std::string& msg) {
        std::string s = src;
        if (line > 0) s += ":" + std::to_string(line) + (col > 0 ? ":" + std::to_string(col) : "");
        return s + ": " + msg;
    }
    std::size_t line_, column_;
};

struct FieldConfig {
    std::string kind;
    json params = json::object();
    std::uint64_t seed = 0;
};

struct BallFamilyConfig {
    std::vector<Point> centers;
    std::vector<double> radii;
};

struct Window {
    double lo = 0.0, hi = 0.0;
    bool contains(double v) const { return v >= lo && v <= hi; }
};

struct RunConfig {
    GridSpec grid;
    std::optional<GridSpec> refinement;
    std::optional<GridSpec> line;
    std::size_t point_cap = kDefaultPointCap;
    FieldConfig coefficient, potential;

    struct Fractional {
        std::vector<double> alpha_list, beta_list;
        double gamma = 0.25, kappa = 0.0;
        double family_alpha = 0.5, family_beta_d = 1.0, family_beta_tilde = 0.5;
        double equivalence_alpha = 0.5, equivalence_beta = 0.5;
    } fractional;

    struct Sweeps {
        std::vector<double> t_list, N_list, p_list;
        BallFamilyConfig ball_family;
        std::vector<Point> sources, probes;
        std::vector<double> dual_path_times, conservation_times, lp_t_list, frac_sigma_steps;
        double rate_safety = 0.5, delta = 0.5, delta_prime = 0.5, alpha_w = 0.05, reverse_holder_q = 4.0;
    } sweeps;

    struct Duhamel {
        double t = 0.2;
        int nodes = 64;
        FieldConfig potential;
    } duhamel;

    std::map<std::string, double> tolerances;
    std::map<std::string, Window> windows;
    std::uint64_t seed = 1;
    std::string output_dir, cache_dir;

    /// Merged document with defaults filled in; output_dir and cache_dir removed.
    json canonical;

    double tol(const std::string& k) const {
        auto it = tolerances.find(k);
        require(it != tolerances.end(), "unknown tolerance " + k);
        return it->second;
    }
    const Window& window(const std::string& k) const {
        auto it = windows.find(k);
        require(it != windows.end(), "unknown ratio window " + k);
        return it->second;
    }
    std::string hash() const {
        Fnv1a h;
        h.update(canonical.dump());
        return h.hex();
    }
};

inline json default_config_json() {
    return json::parse(R"({
  "grid": {"dim": 3, "sizes": [16, 16, 16], "spacing": 0.0625},
  "refinement": {"dim": 3, "sizes": [20, 20, 20], "spacing": 0.05},
  "line": {"dim": 1, "sizes": [256], "spacing": 0.00390625},
  "point_cap": 8192,
  "coefficient": {"kind": "fourier", "params": {"modes": 2, "strength": 0.3}, "seed": 7},
  "potential": {"kind": "spike",
                "params": {"background": 1.5, "height": 12.5, "width": 0.09375, "center": [0.5, 0.5, 0.5]},
                "seed": 0},
  "fractional": {"alpha_list": [0.3, 0.5, 0.7], "beta_list": [0.5, 1.5], "gamma": 0.25, "kappa": 0.0,
                 "family_alpha": 0.5, "family_beta_d": 1.0, "family_beta_tilde": 0.5,
                 "equivalence_alpha": 0.5, "equivalence_beta": 0.5},
  "sweeps": {"t_list": [0.005, 0.01, 0.015], "N_list": [1, 2, 4], "p_list": [1, 2, 4],
             "ball_family": {"centers": [[0.5, 0.5, 0.5], [0.25, 0.5, 0.5]], "radii": [0.125, 0.25, 0.5]},
             "sources": [[0.5, 0.5, 0.5], [0.25, 0.5, 0.5], [0.0, 0.0, 0.0]],
             "probes": [[0.625, 0.5625, 0.5], [0.25, 0.5, 0.5]],
             "dual_path_times": [0.05, 0.2, 1.0],
             "conservation_times": [0.01, 0.1, 1.0],
             "lp_t_list": [0.004, 0.008, 0.016],
             "frac_sigma_steps": [1.0, 1.5, 2.0],
             "rate_safety": 0.5, "delta": 0.5, "delta_prime": 0.5, "alpha_w": 0.05, "reverse_holder_q": 4.0},
  "duhamel": {"t": 0.2, "nodes": 64,
              "potential": {"kind": "cosine", "params": {"base": 2.0, "amp": 1.0, "wave": [1, 1, 0]}, "seed": 0}},
  "tolerances": {"dual_path": 1e-5, "laplace": 1e-6, "isometry": 1e-5, "closed_form": 1e-8,
                 "frac_derivative": 1e-4, "integer_path": 1e-9, "conservation": 1e-10, "negativity": 1e-12,
                 "duhamel": 1e-6, "duhamel_scalar": 1e-8, "decomposition": 1e-10, "cache": 1e-12,
                 "ratio_windows": {"refinement": [0.5, 2.0],
                                   "gaussian_rate": [0.16666666666666666, 0.375],
                                   "slope_offset": [-0.3, 0.3],
                                   "lp_spread": [1.0, 4.0],
                                   "area_atoms": [1.0, 8.0],
                                   "area_l2_spread": [1.0, 3.0],
                                   "equivalence": [0.1, 10.0],
                                   "equivalence_stability": [0.5, 1.5]}},
  "seed": 1,
  "output_dir": "subheat_out",
  "cache_dir": "subheat_cache"
})");
}

namespace detail {

/// Line and column of a byte offset (1-based).
inline std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

/// Best-effort line of a key path: each key is searched after the previous match.
inline std::size_t locate(const std::string& text, const std::vector<std::string>& path) {
    std::size_t pos = 0, found = std::string::npos;
    for (const auto& k : path) {
        auto p = text.find("\"" + k + "\"", pos);
        if (p == std::string::npos) break;
        found = pos = p;
    }
    return found == std::string::npos ? 0 : line_col(text, found).first;
}

inline std::string join(const std::vector<std::string>& path) {
    std::string s;
    for (const auto& k : path) s += (s.empty() ? "" : ".") + k;
    return s;
}

/// Keys of `user` must exist in `ref`; objects named "params" are checked per kind later.
inline void check_keys(const json& user, const json& ref, std::vector<std::string>& path,
                       const std::function<void(const std::vector<std::string>&, const std::string&)>& fail) {
    if (!user.is_object() || !ref.is_object()) return;
    for (auto it = user.begin(); it != user.end(); ++it) {
        path.push_back(it.key());
        if (!ref.contains(it.key())) fail(path, "unknown key '" + join(path) + "'");
        const json& r = ref.at(it.key());
        if (it.key() != "params" && r.is_object() && it->is_object()) check_keys(*it, r, path, fail);
        path.pop_back();
    }
}

}  // namespace detail

/// Parses and validates a configuration document. `source` names it in messages.
class ConfigParser {
public:
    ConfigParser(std::string text, std::string source) : text_(std::move(text)), source_(std::move(source)) {}

    RunConfig parse(const std::vector<std::pair<std::string, std::string>>& env = {}) {
        json user;
        try {
            user = text_.empty() ? json::object() : json::parse(text_);
        } catch (const json::parse_error& e) {
            auto [l, c] = detail::line_col(text_, e.byte == 0 ? 0 : e.byte - 1);
            std::string what = e.what();
            auto p = what.find("syntax error");
            throw ConfigError(source_, l, c, p == std::string::npos ? what : what.substr(p));
        }
        if (!user.is_object()) throw ConfigError(source_, 1, 1, "configuration must be a JSON object");
        json ref = default_config_json();
        std::vector<std::string> path;
        detail::check_keys(user, ref, path, [&](const auto& p, const std::string& m) { fail(p, m); });
        json merged = ref;
        merged.merge_patch(user);
        // merge_patch deletes keys set to null; keep explicit nulls for optional grids.
        for (const char* k : {"refinement", "line"})
            if (user.contains(k) && user.at(k).is_null()) merged[k] = nullptr;
        // Field parameters are replaced as a whole, never merged with another kind's defaults.
        for (auto fp : {json::json_pointer("/coefficient/params"), json::json_pointer("/potential/params"),
                        json::json_pointer("/duhamel/potential/params")})
            if (user.contains(fp)) merged[fp] = user.at(fp);
        apply_env(merged, ref, env);
        return build(merged);
    }

private:
    [[noreturn]] void fail(const std::vector<std::string>& path, const std::string& msg) const {
        throw ConfigError(source_, detail::locate(text_, path), 0, msg);
    }

    void apply_env(json& merged, const json& ref, const std::vector<std::pair<std::string, std::string>>& env) {
        const std::string prefix = "SUBHEAT_SET_";
        for (const auto& [name, value] : env) {
            if (name.rfind(prefix, 0) != 0) continue;
            std::string rest = name.substr(prefix.size());
            std::vector<std::string> keys;
            for (std::size_t p = 0;;) {
                auto q = rest.find("__", p);
                keys.push_back(rest.substr(p, q == std::string::npos ? std::string::npos : q - p));
                if (q == std::string::npos) break;
                p = q + 2;
            }
            json* node = &merged;
            const json* r = &ref;
            for (std::size_t i = 0; i < keys.size(); ++i) {
                std::string match;
                if (r && r->is_object())
                    for (auto it = r->begin(); it != r->end(); ++it)
                        if (iequal(it.key(), keys[i])) match = it.key();
                if (match.empty() && node->is_object())
                    for (auto it = node->begin(); it != node->end(); ++it)
                        if (iequal(it.key(), keys[i])) match = it.key();
                if (match.empty()) throw ConfigError("environment " + name, 0, 0, "no configuration key " + keys[i]);
                r = r && r->is_object() && r->contains(match) ? &r->at(match) : nullptr;
                node = &(*node)[match];
            }
            try {
                *node = json::parse(value);
            } catch (const json::parse_error&) {
                *node = value;  // bare strings such as paths
            }
        }
    }

    static bool iequal(const std::string& a, const std::string& b) {
        return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
                   return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
               });
    }

    template <class T>
    T get(const json& j, const std::vector<std::string>& path) const {
        const json* node = &j;
        for (const auto& k : path) {
            if (!node->is_object() || !node->contains(k)) fail(path, "missing key '" + detail::join(path) + "'");
            node = &node->at(k);
        }
        try {
            return node->get<T>();
        } catch (const json::exception&) {
            fail(path, "wrong type for '" + detail::join(path) + "'");
        }
    }

    double positive(const json& j, const std::vector<std::string>& path) const {
        double v = get<double>(j, path);
        if (!(v > 0.0)) fail(path, "'" + detail::join(path) + "' must be positive");
        return v;
    }

    std::vector<double> list(const json& j, const std::vector<std::string>& path, bool pos = true) const {
        auto v = get<std::vector<double>>(j, path);
        if (v.empty()) fail(path, "'" + detail::join(path) + "' must be a nonempty list");
        if (pos)
            for (double x : v)
                if (!(x > 0.0)) fail(path, "'" + detail::join(path) + "' entries must be positive");
        return v;
    }

    std::vector<Point> points(const json& j, const std::vector<std::string>& path) const {
        auto v = get<std::vector<std::vector<double>>>(j, path);
        if (v.empty()) fail(path, "'" + detail::join(path) + "' must be a nonempty list");
        std::vector<Point> out;
        for (const auto& p : v) {
            if (p.empty() || p.size() > 3) fail(path, "points in '" + detail::join(path) + "' need 1 to 3 coordinates");
            Point x{0.0, 0.0, 0.0};
            std::copy(p.begin(), p.end(), x.begin());
            out.push_back(x);
        }
        return out;
    }

    std::optional<GridSpec> grid(const json& j, const std::string& key, std::size_t cap) const {
        if (j.at(key).is_null()) return std::nullopt;
        GridSpec g;
        g.dim = get<int>(j, {key, "dim"});
        if (g.dim < 1 || g.dim > 3) fail({key, "dim"}, "grid dim must be 1, 2 or 3");
        auto sizes = get<std::vector<int>>(j, {key, "sizes"});
        if (sizes.size() != static_cast<std::size_t>(g.dim)) fail({key, "sizes"}, "'" + key + ".sizes' needs dim entries");
        const json& sp = j.at(key).at("spacing");
        std::vector<double> spacing;
        if (sp.is_number()) spacing.assign(static_cast<std::size_t>(g.dim), sp.get<double>());
        else spacing = get<std::vector<double>>(j, {key, "spacing"});
        if (spacing.size() != static_cast<std::size_t>(g.dim)) fail({key, "spacing"}, "'" + key + ".spacing' needs dim entries");
        for (int a = 0; a < g.dim; ++a) {
            g.sizes[a] = sizes[static_cast<std::size_t>(a)];
            g.spacing[a] = spacing[static_cast<std::size_t>(a)];
        }
        try {
            g.validate(cap);
        } catch (const Error& e) {
            fail({key}, key + ": " + e.what());
        }
        return g;
    }

    FieldConfig field(const json& j, const std::vector<std::string>& path, bool coefficient) const {
        FieldConfig f;
        auto p = path;
        p.push_back("kind");
        f.kind = get<std::string>(j, p);
        p.back() = "seed";
        f.seed = get<std::uint64_t>(j, p);
        p.back() = "params";
        f.params = get<json>(j, p);
        if (!f.params.is_object()) fail(p, "'" + detail::join(p) + "' must be an object");
        static const std::map<std::string, std::vector<std::string>> coeff_kinds{
            {"identity", {}}, {"constant_diagonal", {"diag"}}, {"fourier", {"modes", "strength"}}};
        static const std::map<std::string, std::vector<std::string>> pot_kinds{
            {"zero", {}},
            {"constant", {"value"}},
            {"cosine", {"base", "amp", "wave"}},
            {"spike", {"background", "height", "width", "center"}},
            {"random_fourier", {"base", "strength", "modes"}},
            {"file", {"path"}}};
        const auto& kinds = coefficient ? coeff_kinds : pot_kinds;
        auto it = kinds.find(f.kind);
        p.back() = "kind";
        if (it == kinds.end()) fail(p, "unknown kind '" + f.kind + "' for '" + detail::join(path) + "'");
        p.back() = "params";
        for (auto k = f.params.begin(); k != f.params.end(); ++k)
            if (std::find(it->second.begin(), it->second.end(), k.key()) == it->second.end())
                fail(p, "unknown parameter '" + k.key() + "' for kind '" + f.kind + "'");
        for (const auto& k : it->second)
            if (!f.params.contains(k)) fail(p, "kind '" + f.kind + "' needs parameter '" + k + "'");
        if (f.kind == "file") {
            std::string file = f.params.at("path").is_string() ? f.params.at("path").get<std::string>() : "";
            if (file.empty() || !std::filesystem::exists(file)) fail(p, "referenced file '" + file + "' does not exist");
        }
        return f;
    }

    RunConfig build(const json& m) {
        RunConfig c;
        c.point_cap = get<std::size_t>(m, {"point_cap"});
        if (m.at("grid").is_null()) fail({"grid"}, "grid is required");
        c.grid = *grid(m, "grid", c.point_cap);
        c.refinement = grid(m, "refinement", c.point_cap);
        c.line = grid(m, "line", c.point_cap);
        if (c.refinement && c.refinement->dim != c.grid.dim) fail({"refinement"}, "refinement grid must match grid.dim");
        c.coefficient = field(m, {"coefficient"}, true);
        c.potential = field(m, {"potential"}, false);

        auto& fr = c.fractional;
        fr.alpha_list = list(m, {"fractional", "alpha_list"});
        for (double a : fr.alpha_list)
            if (a >= 1.0) fail({"fractional", "alpha_list"}, "alpha values must lie in (0, 1)");
        fr.beta_list = list(m, {"fractional", "beta_list"});
        fr.gamma = positive(m, {"fractional", "gamma"});
        fr.kappa = get<double>(m, {"fractional", "kappa"});
        if (fr.kappa < 0.0) fail({"fractional", "kappa"}, "'fractional.kappa' must be nonnegative");
        fr.family_alpha = positive(m, {"fractional", "family_alpha"});
        fr.family_beta_d = positive(m, {"fractional", "family_beta_d"});
        fr.family_beta_tilde = positive(m, {"fractional", "family_beta_tilde"});
        fr.equivalence_alpha = positive(m, {"fractional", "equivalence_alpha"});
        fr.equivalence_beta = positive(m, {"fractional", "equivalence_beta"});
        for (const char* k : {"family_alpha", "equivalence_alpha"})
            if (get<double>(m, {"fractional", k}) >= 1.0) fail({"fractional", k}, std::string(k) + " must lie in (0, 1)");

        auto& sw = c.sweeps;
        sw.t_list = list(m, {"sweeps", "t_list"});
        sw.N_list = list(m, {"sweeps", "N_list"}, false);
        sw.p_list = list(m, {"sweeps", "p_list"});
        sw.ball_family.centers = points(m, {"sweeps", "ball_family", "centers"});
        sw.ball_family.radii = list(m, {"sweeps", "ball_family", "radii"});
        sw.sources = points(m, {"sweeps", "sources"});
        sw.probes = points(m, {"sweeps", "probes"});
        sw.dual_path_times = list(m, {"sweeps", "dual_path_times"});
        sw.conservation_times = list(m, {"sweeps", "conservation_times"});
        sw.lp_t_list = list(m, {"sweeps", "lp_t_list"});
        sw.frac_sigma_steps = list(m, {"sweeps", "frac_sigma_steps"});
        sw.rate_safety = positive(m, {"sweeps", "rate_safety"});
        sw.delta = positive(m, {"sweeps", "delta"});
        sw.delta_prime = positive(m, {"sweeps", "delta_prime"});
        sw.alpha_w = get<double>(m, {"sweeps", "alpha_w"});
        if (sw.alpha_w < 0.0) fail({"sweeps", "alpha_w"}, "'sweeps.alpha_w' must be nonnegative");
        sw.reverse_holder_q = positive(m, {"sweeps", "reverse_holder_q"});

        c.duhamel.t = positive(m, {"duhamel", "t"});
        c.duhamel.nodes = get<int>(m, {"duhamel", "nodes"});
        if (c.duhamel.nodes != 32 && c.duhamel.nodes != 64 && c.duhamel.nodes != 128)
            fail({"duhamel", "nodes"}, "'duhamel.nodes' must be 32, 64 or 128");
        c.duhamel.potential = field(m, {"duhamel", "potential"}, false);

        for (auto it = m.at("tolerances").begin(); it != m.at("tolerances").end(); ++it) {
            if (it.key() == "ratio_windows") continue;
            c.tolerances[it.key()] = positive(m, {"tolerances", it.key()});
        }
        for (auto it = m.at("tolerances").at("ratio_windows").begin(); it != m.at("tolerances").at("ratio_windows").end(); ++it) {
            std::vector<std::string> p{"tolerances", "ratio_windows", it.key()};
            auto w = get<std::vector<double>>(m, p);
            if (w.size() != 2 || !(w[0] < w[1])) fail(p, "ratio window '" + it.key() + "' must be [lo, hi] with lo < hi");
            if (it.key() != "slope_offset" && !(w[0] > 0.0)) fail(p, "ratio window '" + it.key() + "' must be positive");
            c.windows[it.key()] = {w[0], w[1]};
        }
        c.seed = get<std::uint64_t>(m, {"seed"});
        c.output_dir = get<std::string>(m, {"output_dir"});
        c.cache_dir = get<std::string>(m, {"cache_dir"});
        if (c.output_dir.empty()) fail({"output_dir"}, "'output_dir' must not be empty");
        c.canonical = m;
        c.canonical.erase("output_dir");
        c.canonical.erase("cache_dir");
        return c;
    }

    std::string text_, source_;
};

/// Reads `path` (empty selects the built-in defaults).
inline RunConfig load_config(const std::string& path, const std::vector<std::pair<std::string, std::string>>& env = {}) {
    std::string text;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in.good()) throw ConfigError(path, 0, 0, "cannot open configuration file");
        std::stringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    }
    return ConfigParser(text, path.empty() ? "<defaults>" : path).parse(env);
}

/// Every environment variable with the SUBHEAT_ prefix.
inline std::vector<std::pair<std::string, std::string>> subheat_environment(char** envp) {
    std::vector<std::pair<std::string, std::string>> out;
    for (char** e = envp; e && *e; ++e) {
        std::string s = *e;
        if (s.rfind("SUBHEAT_", 0) != 0) continue;
        auto eq = s.find('=');
        if (eq == std::string::npos) continue;
        out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    std::sort(out.begin(), out.end());
    return out;
}

// Field construction --------------------------------------------------------

inline CoefficientField build_coefficients(const GridSpec& g, const FieldConfig& f) {
    const json& p = f.params;
    if (f.kind == "identity") return identity_coefficients(g);
    if (f.kind == "constant_diagonal") return constant_diagonal_coefficients(g, p.at("diag").get<std::vector<double>>());
    return fourier_coefficients(g, random_fourier_terms(g, p.at("modes").get<int>(), p.at("strength").get<double>(), f.seed));
}

inline Point to_point(const json& j) {
    Point x{0.0, 0.0, 0.0};
    auto v = j.get<std::vector<double>>();
    require(!v.empty() && v.size() <= 3, "points need 1 to 3 coordinates");
    std::copy(v.begin(), v.end(), x.begin());
    return x;
}

inline GridFunction build_potential(const GridSpec& g, const FieldConfig& f) {
    const json& p = f.params;
    if (f.kind == "zero") return constant_potential(g, 0.0);
    if (f.kind == "constant") return constant_potential(g, p.at("value").get<double>());
    if (f.kind == "cosine") {
        auto w = p.at("wave").get<std::vector<int>>();
        std::array<int, 3> k{0, 0, 0};
        std::copy_n(w.begin(), std::min<std::size_t>(3, w.size()), k.begin());
        return cosine_potential(g, p.at("base").get<double>(), p.at("amp").get<double>(), k);
    }
    if (f.kind == "spike")
        return spike_potential(g, p.at("background").get<double>(), p.at("height").get<double>(),
                               p.at("width").get<double>(), to_point(p.at("center")));
    if (f.kind == "random_fourier")
        return random_fourier_potential(g, p.at("base").get<double>(), p.at("strength").get<double>(),
                                        p.at("modes").get<int>(), f.seed);
    auto [fg, values] = read_grid_function(p.at("path").get<std::string>());
    require(fg == g, "potential file grid does not match the configured grid");
    return values;
}

/// Nearest grid point to a physical location (periodic).
inline std::size_t nearest_point(const GridSpec& g, const Point& x) {
    std::array<int, 3> m{0, 0, 0};
    for (int a = 0; a < g.dim; ++a) m[a] = static_cast<int>(std::lround(x[a] / g.spacing[a]));
    return g.linear_index(m);
}

}  // namespace subheat
