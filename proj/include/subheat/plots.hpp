#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "subheat/report.hpp"

namespace subheat {

namespace detail {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

inline std::string escape_xml(const std::string& s) {
    std::string o;
    for (char c : s) {
        if (c == '<') o += "&lt;";
        else if (c == '>') o += "&gt;";
        else if (c == '&') o += "&amp;";
        else o += c;
    }
    return o;
}

struct Series {
    std::string label;
    std::vector<double> x, y;
    bool line = false;
};

/// Log-log or lin-log frame with scatter and line series.
class SvgPlot {
public:
    SvgPlot(std::string title, std::string xlabel, std::string ylabel, bool logx, bool logy)
        : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)), logx_(logx), logy_(logy) {}

    void add(Series s) { series_.push_back(std::move(s)); }
    void hline(double y) { hlines_.push_back(y); }

    std::string render() const {
        double x0 = inf(), x1 = -inf(), y0 = inf(), y1 = -inf();
        for (const auto& s : series_)
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                if (!usable(s.x[i], logx_) || !usable(s.y[i], logy_)) continue;
                x0 = std::min(x0, tx(s.x[i]));
                x1 = std::max(x1, tx(s.x[i]));
                y0 = std::min(y0, ty(s.y[i]));
                y1 = std::max(y1, ty(s.y[i]));
            }
        for (double h : hlines_)
            if (usable(h, logy_)) {
                y0 = std::min(y0, ty(h));
                y1 = std::max(y1, ty(h));
            }
        if (!(x0 <= x1)) x0 = 0.0, x1 = 1.0;
        if (!(y0 <= y1)) y0 = 0.0, y1 = 1.0;
        if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
        if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
        const double W = 640, H = 420, L = 70, R = 20, T = 40, B = 50;
        auto px = [&](double v) { return L + (v - x0) / (x1 - x0) * (W - L - R); };
        auto py = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - T - B); };
        static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
        std::string o;
        o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" viewBox=\"0 0 640 420\">\n";
        o += "<rect width=\"640\" height=\"420\" fill=\"white\"/>\n";
        o += "<text x=\"320\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + escape_xml(title_) + "</text>\n";
        o += "<rect x=\"" + fmt(L) + "\" y=\"" + fmt(T) + "\" width=\"" + fmt(W - L - R) + "\" height=\"" +
             fmt(H - T - B) + "\" fill=\"none\" stroke=\"black\"/>\n";
        for (int k = 0; k <= 4; ++k) {
            double vx = x0 + (x1 - x0) * k / 4.0, vy = y0 + (y1 - y0) * k / 4.0;
            o += "<text x=\"" + fmt(px(vx)) + "\" y=\"" + fmt(H - B + 16) + "\" text-anchor=\"middle\" font-size=\"10\">" +
                 tick(vx, logx_) + "</text>\n";
            o += "<text x=\"" + fmt(L - 6) + "\" y=\"" + fmt(py(vy) + 3) + "\" text-anchor=\"end\" font-size=\"10\">" +
                 tick(vy, logy_) + "</text>\n";
        }
        o += "<text x=\"" + fmt((L + W - R) / 2) + "\" y=\"" + fmt(H - 10) + "\" text-anchor=\"middle\" font-size=\"12\">" +
             escape_xml(xlabel_) + "</text>\n";
        o += "<text x=\"14\" y=\"" + fmt((T + H - B) / 2) + "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 " +
             fmt((T + H - B) / 2) + ")\">" + escape_xml(ylabel_) + "</text>\n";
        for (double h : hlines_)
            if (usable(h, logy_))
                o += "<line x1=\"" + fmt(L) + "\" x2=\"" + fmt(W - R) + "\" y1=\"" + fmt(py(ty(h))) + "\" y2=\"" +
                     fmt(py(ty(h))) + "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
        for (std::size_t k = 0; k < series_.size(); ++k) {
            const auto& s = series_[k];
            std::string c = colors[k % 6];
            if (s.line) {
                std::vector<std::pair<double, double>> pts;
                for (std::size_t i = 0; i < s.x.size(); ++i)
                    if (usable(s.x[i], logx_) && usable(s.y[i], logy_)) pts.emplace_back(tx(s.x[i]), ty(s.y[i]));
                std::sort(pts.begin(), pts.end());
                o += "<polyline fill=\"none\" stroke=\"" + c + "\" stroke-width=\"1.5\" points=\"";
                for (std::size_t i = 0; i < pts.size(); ++i)
                    o += (i ? " " : "") + fmt(px(pts[i].first)) + "," + fmt(py(pts[i].second));
                o += "\"/>\n";
            } else {
                for (std::size_t i = 0; i < s.x.size(); ++i)
                    if (usable(s.x[i], logx_) && usable(s.y[i], logy_))
                        o += "<circle cx=\"" + fmt(px(tx(s.x[i]))) + "\" cy=\"" + fmt(py(ty(s.y[i]))) + "\" r=\"2\" fill=\"" +
                             c + "\"/>\n";
            }
            o += "<text x=\"" + fmt(W - R - 6) + "\" y=\"" + fmt(T + 14 + 14 * k) + "\" text-anchor=\"end\" font-size=\"11\" fill=\"" +
                 c + "\">" + escape_xml(s.label) + "</text>\n";
        }
        o += "</svg>\n";
        return o;
    }

private:
    static double inf() { return std::numeric_limits<double>::infinity(); }
    static bool usable(double v, bool log) { return std::isfinite(v) && (!log || v > 0.0); }
    double tx(double v) const { return logx_ ? std::log10(v) : v; }
    double ty(double v) const { return logy_ ? std::log10(v) : v; }
    static std::string tick(double v, bool log) {
        char buf[32];
        if (log) std::snprintf(buf, sizeof buf, "%.3g", std::pow(10.0, v));
        else std::snprintf(buf, sizeof buf, "%.3g", v);
        return buf;
    }

    std::string title_, xlabel_, ylabel_;
    bool logx_, logy_;
    std::vector<Series> series_;
    std::vector<double> hlines_;
};

inline double to_double(const std::string& s) {
    try {
        return std::stod(s);
    } catch (...) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

inline std::vector<std::filesystem::path> csv_files(const std::filesystem::path& dir, const std::string& prefix) {
    std::vector<std::filesystem::path> out;
    if (!std::filesystem::is_directory(dir)) return out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        auto name = e.path().filename().string();
        if (e.is_regular_file() && name.rfind(prefix, 0) == 0 && e.path().extension() == ".csv") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace detail

/// decay_*.csv (r,value,fit) -> log-log scatter with the fitted line.
inline std::string render_decay_plot(const std::vector<std::vector<std::string>>& rows, const std::string& title) {
    require(!rows.empty() && rows[0].size() >= 3, "decay table needs r,value,fit columns");
    detail::Series pts{"|k|", {}, {}, false}, fit{"fit", {}, {}, true};
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() < 3) continue;
        double r = detail::to_double(rows[i][0]);
        pts.x.push_back(r);
        pts.y.push_back(detail::to_double(rows[i][1]));
        fit.x.push_back(r);
        fit.y.push_back(detail::to_double(rows[i][2]));
    }
    detail::SvgPlot p(title, "|x - y|", "|kernel|", true, true);
    p.add(std::move(pts));
    p.add(std::move(fit));
    return p.render();
}

/// equivalence_*.csv (function, ratio columns...) -> ratio scatter against function index.
inline std::string render_ratio_plot(const std::vector<std::vector<std::string>>& rows, const std::string& title) {
    require(!rows.empty() && rows[0].size() >= 2, "ratio table needs a label column and ratio columns");
    detail::SvgPlot p(title, "test function index", "ratio", false, true);
    for (std::size_t c = 1; c < rows[0].size(); ++c) {
        detail::Series s{rows[0][c], {}, {}, false};
        for (std::size_t i = 1; i < rows.size(); ++i) {
            if (rows[i].size() <= c) continue;
            s.x.push_back(static_cast<double>(i - 1));
            s.y.push_back(detail::to_double(rows[i][c]));
        }
        p.add(std::move(s));
    }
    p.hline(1.0);
    return p.render();
}

/// Writes plots/<stem>.svg for every decay and equivalence CSV in `dir`.
/// Missing tables are skipped and reported through `notice`.
inline std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& dir,
                                                     const std::function<void(const std::string&)>& notice) {
    namespace fs = std::filesystem;
    std::vector<fs::path> written;
    auto run = [&](const std::string& prefix, const char* what, auto render) {
        auto files = detail::csv_files(dir, prefix);
        if (files.empty()) {
            if (notice) notice(std::string("no ") + what + " CSV in " + dir.string() + "; skipped");
            return;
        }
        for (const auto& f : files) {
            auto rows = read_csv(f);
            if (rows.size() < 2) {
                if (notice) notice(f.string() + " has no data rows; skipped");
                continue;
            }
            fs::path out = dir / "plots" / (f.stem().string() + ".svg");
            write_text(out, render(rows, f.stem().string()));
            written.push_back(out);
        }
    };
    run("decay_", "decay-fit", render_decay_plot);
    run("equivalence_", "equivalence-ratio", render_ratio_plot);
    return written;
}

}  // namespace subheat
