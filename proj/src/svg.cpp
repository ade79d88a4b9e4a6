#include "eot/svg.hpp"

#include "eot/errors.hpp"
#include "eot/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace eot::svg {

namespace {

std::string escape(const std::string& s) {
    std::string out;
    for (const char c : s) {
        switch (c) {
            case '&':
                out += "&amp;";
                break;
            case '<':
                out += "&lt;";
                break;
            case '>':
                out += "&gt;";
                break;
            case '"':
                out += "&quot;";
                break;
            default:
                out += c;
        }
    }
    return out;
}

std::string fixed(double v, int digits = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

std::size_t marker_count(const ScatterPlot& plot) {
    std::size_t n = 0;
    for (const auto& s : plot.series) {
        n += static_cast<std::size_t>(s.points.rows());
    }
    return n;
}

std::string render(const ScatterPlot& plot) {
    double lo_x = std::numeric_limits<double>::infinity();
    double hi_x = -lo_x;
    double lo_y = lo_x;
    double hi_y = -lo_x;
    for (const auto& s : plot.series) {
        require_shape(s.points.cols() == 2, "scatter series must have two columns");
        require_shape(s.points.allFinite(), "scatter points must be finite");
        if (s.points.rows() > 0) {
            lo_x = std::min(lo_x, s.points.col(0).minCoeff());
            hi_x = std::max(hi_x, s.points.col(0).maxCoeff());
            lo_y = std::min(lo_y, s.points.col(1).minCoeff());
            hi_y = std::max(hi_y, s.points.col(1).maxCoeff());
        }
    }
    if (!std::isfinite(lo_x)) {
        lo_x = lo_y = -1.0;
        hi_x = hi_y = 1.0;
    }
    // Square data window with a margin, so both axes share a scale.
    const double cx = 0.5 * (lo_x + hi_x);
    const double cy = 0.5 * (lo_y + hi_y);
    const double half = 0.55 * std::max({hi_x - lo_x, hi_y - lo_y, 1e-9});
    const double margin = 40.0;
    const double pw = plot.width - 2.0 * margin;
    const double ph = plot.height - 2.0 * margin;
    auto px = [&](double x) { return margin + (x - (cx - half)) / (2.0 * half) * pw; };
    auto py = [&](double y) { return margin + ph - (y - (cy - half)) / (2.0 * half) * ph; };

    std::ostringstream out;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(plot.width, 0)
        << "\" height=\"" << fixed(plot.height, 0) << "\" viewBox=\"0 0 " << fixed(plot.width, 0)
        << ' ' << fixed(plot.height, 0) << "\">\n"
        << "<rect x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << fixed(plot.width / 2) << "\" y=\"22\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"14\">" << escape(plot.title) << "</text>\n"
        << "<rect x=\"" << fixed(margin) << "\" y=\"" << fixed(margin) << "\" width=\"" << fixed(pw)
        << "\" height=\"" << fixed(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";
    out << "<g font-family=\"sans-serif\" font-size=\"10\">\n";
    for (int k = 0; k <= 4; ++k) {
        const double t = static_cast<double>(k) / 4.0;
        const double vx = cx - half + t * 2.0 * half;
        const double vy = cy - half + t * 2.0 * half;
        out << "<text x=\"" << fixed(px(vx)) << "\" y=\"" << fixed(margin + ph + 14)
            << "\" text-anchor=\"middle\">" << fixed(vx) << "</text>\n"
            << "<text x=\"" << fixed(margin - 4) << "\" y=\"" << fixed(py(vy) + 3)
            << "\" text-anchor=\"end\">" << fixed(vy) << "</text>\n";
    }
    out << "</g>\n";
    double legend_y = margin + 12.0;
    for (const auto& s : plot.series) {
        out << "<g fill=\"" << escape(s.color) << "\" fill-opacity=\"0.6\">\n";
        for (Eigen::Index n = 0; n < s.points.rows(); ++n) {
            out << "<circle cx=\"" << fixed(px(s.points(n, 0))) << "\" cy=\""
                << fixed(py(s.points(n, 1))) << "\" r=\"" << fixed(s.radius) << "\"/>\n";
        }
        out << "</g>\n";
        if (!s.label.empty()) {
            out << "<text x=\"" << fixed(margin + 6) << "\" y=\"" << fixed(legend_y)
                << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << escape(s.color)
                << "\">" << escape(s.label) << "</text>\n";
            legend_y += 13.0;
        }
    }
    out << "</svg>\n";
    return out.str();
}

void write(const ScatterPlot& plot, const std::filesystem::path& path) {
    io::write_text_atomic(path, render(plot));
}

}  // namespace eot::svg
