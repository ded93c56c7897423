#pragma once

#include "formation_lab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

/// Minimal static SVG line plots.
namespace formation_lab::svg {

struct Series {
    std::vector<double> x;
    std::vector<double> y;
    std::string label;
    std::string color = "#1f77b4";
    bool markers = false;
};

struct Panel {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series{};
    std::vector<double> vlines{};  ///< dashed verticals, e.g. boundaries
    std::vector<double> hlines{};
    bool log_x = false;
};

inline const std::vector<std::string>& palette() {
    static const std::vector<std::string> p{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
    return p;
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

namespace detail {

struct Range {
    double lo = INFINITY, hi = -INFINITY;
    void add(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void settle() {
        if (!(hi >= lo)) lo = 0.0, hi = 1.0;
        if (hi == lo) lo -= 0.5, hi += 0.5;
        const double pad = 0.04 * (hi - lo);
        lo -= pad;
        hi += pad;
    }
};

inline void render_panel(std::ostringstream& o, const Panel& p, double ox, double oy, double w, double h) {
    const double ml = 62, mr = 12, mt = 26, mb = 40;
    const double pw = w - ml - mr, ph = h - mt - mb;
    auto tx = [&](double v) { return p.log_x ? std::log10(v) : v; };
    Range xr, yr;
    for (const auto& s : p.series) {
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (p.log_x && !(s.x[i] > 0.0)) continue;
            xr.add(tx(s.x[i]));
            yr.add(s.y[i]);
        }
    }
    for (double v : p.hlines) yr.add(v);
    xr.settle();
    yr.settle();
    auto px = [&](double v) { return ox + ml + (tx(v) - xr.lo) / (xr.hi - xr.lo) * pw; };
    auto py = [&](double v) { return oy + mt + (yr.hi - v) / (yr.hi - yr.lo) * ph; };

    o << "<rect x=\"" << num(ox + ml) << "\" y=\"" << num(oy + mt) << "\" width=\"" << num(pw) << "\" height=\""
      << num(ph) << "\" fill=\"none\" stroke=\"#333\"/>\n";
    o << "<text x=\"" << num(ox + ml + pw / 2) << "\" y=\"" << num(oy + 16)
      << "\" text-anchor=\"middle\" font-size=\"13\">" << escape(p.title) << "</text>\n";
    o << "<text x=\"" << num(ox + ml + pw / 2) << "\" y=\"" << num(oy + h - 6)
      << "\" text-anchor=\"middle\" font-size=\"11\">" << escape(p.x_label) << "</text>\n";
    o << "<text transform=\"translate(" << num(ox + 12) << ',' << num(oy + mt + ph / 2)
      << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"11\">" << escape(p.y_label) << "</text>\n";
    for (int t = 0; t <= 4; ++t) {
        const double fx = xr.lo + (xr.hi - xr.lo) * t / 4.0, fy = yr.lo + (yr.hi - yr.lo) * t / 4.0;
        const double sx = ox + ml + pw * t / 4.0, sy = oy + mt + ph * (1.0 - t / 4.0);
        o << "<text x=\"" << num(sx) << "\" y=\"" << num(oy + mt + ph + 14)
          << "\" text-anchor=\"middle\" font-size=\"9\">" << num(p.log_x ? std::pow(10.0, fx) : fx) << "</text>\n";
        o << "<text x=\"" << num(ox + ml - 4) << "\" y=\"" << num(sy + 3)
          << "\" text-anchor=\"end\" font-size=\"9\">" << num(fy) << "</text>\n";
    }
    for (double v : p.vlines) {
        if (p.log_x && !(v > 0.0)) continue;
        const double x = px(v);
        if (x < ox + ml || x > ox + ml + pw) continue;
        o << "<line x1=\"" << num(x) << "\" y1=\"" << num(oy + mt) << "\" x2=\"" << num(x) << "\" y2=\""
          << num(oy + mt + ph) << "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n";
    }
    for (double v : p.hlines)
        o << "<line x1=\"" << num(ox + ml) << "\" y1=\"" << num(py(v)) << "\" x2=\"" << num(ox + ml + pw)
          << "\" y2=\"" << num(py(v)) << "\" stroke=\"#888\" stroke-dasharray=\"2 2\"/>\n";

    double legend_y = oy + mt + 12;
    for (const auto& s : p.series) {
        std::string pts;
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!std::isfinite(s.y[i]) || (p.log_x && !(s.x[i] > 0.0))) continue;
            pts += num(px(s.x[i])) + ',' + num(py(s.y[i])) + ' ';
        }
        o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.2\" points=\"" << pts
          << "\"/>\n";
        if (s.markers)
            for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
                if (std::isfinite(s.y[i]) && (!p.log_x || s.x[i] > 0.0))
                    o << "<circle cx=\"" << num(px(s.x[i])) << "\" cy=\"" << num(py(s.y[i]))
                      << "\" r=\"2\" fill=\"" << s.color << "\"/>\n";
        if (!s.label.empty()) {
            o << "<text x=\"" << num(ox + ml + pw - 6) << "\" y=\"" << num(legend_y)
              << "\" text-anchor=\"end\" font-size=\"10\" fill=\"" << s.color << "\">" << escape(s.label)
              << "</text>\n";
            legend_y += 12;
        }
    }
}

} // namespace detail

/// Panels laid out left to right.
inline std::string render(const std::vector<Panel>& panels, double panel_w = 420, double panel_h = 300) {
    if (panels.empty()) throw EmptyInput("svg: no panels");
    std::ostringstream o;
    const double w = panel_w * static_cast<double>(panels.size());
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(panel_h)
      << "\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t i = 0; i < panels.size(); ++i)
        detail::render_panel(o, panels[i], panel_w * static_cast<double>(i), 0.0, panel_w, panel_h);
    o << "</svg>\n";
    return o.str();
}

inline void write(const std::filesystem::path& path, const std::vector<Panel>& panels) {
    std::ofstream out(path, std::ios::binary);
    out << render(panels);
}

} // namespace formation_lab::svg
