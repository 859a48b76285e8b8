#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "fedsim/errors.hpp"

namespace fedsim {

/// One named line in a chart. If xs is empty the x axis is 1..n.
struct SvgSeries {
    std::string name;
    std::vector<double> xs;
    std::vector<double> ys;
};

namespace detail {

inline std::string fmt_coord(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

inline std::string fmt_tick(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

}  // namespace detail

/// Writes a standalone SVG line chart with axes, tick labels, and a legend.
/// Output bytes are a pure function of the input (fixed-precision number
/// formatting, no timestamps), so identical calls give identical files.
inline void emit_svg(const std::vector<SvgSeries>& series, const std::string& path,
                     const std::string& title = "", const std::string& x_label = "",
                     const std::string& y_label = "") {
    if (series.empty()) throw std::invalid_argument("emit_svg: no series");
    const std::size_t n = series.front().ys.size();
    if (n == 0) throw std::invalid_argument("emit_svg: empty series");
    for (const auto& s : series) {
        if (s.ys.size() != n) throw std::invalid_argument("emit_svg: series length mismatch");
        if (!s.xs.empty() && s.xs.size() != n)
            throw std::invalid_argument("emit_svg: x/y length mismatch");
    }

    const double W = 800.0, H = 480.0;
    const double ml = 64.0, mr = 16.0, mt = 32.0, mb = 48.0;
    const double pw = W - ml - mr, ph = H - mt - mb;

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (std::size_t i = 0; i < n; ++i) {
            const double x = s.xs.empty() ? static_cast<double>(i + 1) : s.xs[i];
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, s.ys[i]);
            ymax = std::max(ymax, s.ys[i]);
        }
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax == ymin) {
        ymax += 0.5;
        ymin -= 0.5;
    }
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double x) { return ml + pw * (x - xmin) / (xmax - xmin); };
    auto py = [&](double y) { return mt + ph * (1.0 - (y - ymin) / (ymax - ymin)); };

    static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

    std::ofstream out(path);
    if (!out) throw ParseError("emit_svg: cannot open '" + path + "'");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    out << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    if (!title.empty())
        out << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
            << title << "</text>\n";

    // Axes.
    out << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
        << mt + ph << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
        << "\" stroke=\"black\"/>\n";

    const int ticks = 5;
    for (int i = 0; i <= ticks; ++i) {
        const double fx = xmin + (xmax - xmin) * i / ticks;
        const double fy = ymin + (ymax - ymin) * i / ticks;
        out << "<line x1=\"" << detail::fmt_coord(px(fx)) << "\" y1=\"" << mt + ph << "\" x2=\""
            << detail::fmt_coord(px(fx)) << "\" y2=\"" << mt + ph + 4 << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << detail::fmt_coord(px(fx)) << "\" y=\"" << mt + ph + 18
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << detail::fmt_tick(fx) << "</text>\n";
        out << "<line x1=\"" << ml - 4 << "\" y1=\"" << detail::fmt_coord(py(fy)) << "\" x2=\"" << ml
            << "\" y2=\"" << detail::fmt_coord(py(fy)) << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << ml - 8 << "\" y=\"" << detail::fmt_coord(py(fy) + 4)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
            << detail::fmt_tick(fy) << "</text>\n";
    }
    if (!x_label.empty())
        out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << H - 8
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << x_label
            << "</text>\n";
    if (!y_label.empty())
        out << "<text x=\"14\" y=\"" << mt + ph / 2
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 "
            << mt + ph / 2 << ")\">" << y_label << "</text>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* color = palette[si % 10];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < n; ++i) {
            const double x = s.xs.empty() ? static_cast<double>(i + 1) : s.xs[i];
            if (i) out << ' ';
            out << detail::fmt_coord(px(x)) << ',' << detail::fmt_coord(py(s.ys[i]));
        }
        out << "\"/>\n";
        // Legend entry, input order top to bottom.
        const double ly = mt + 14.0 + 16.0 * static_cast<double>(si);
        out << "<line x1=\"" << ml + pw - 120 << "\" y1=\"" << detail::fmt_coord(ly - 4)
            << "\" x2=\"" << ml + pw - 100 << "\" y2=\"" << detail::fmt_coord(ly - 4)
            << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << ml + pw - 94 << "\" y=\"" << detail::fmt_coord(ly)
            << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.name << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace fedsim
