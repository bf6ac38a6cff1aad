#include "ckoop/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace ckoop::svg {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", std::abs(v) < 1e-12 ? 0.0 : v);
    return buf;
}

double nice_step(double span, int target) {
    const double raw = span / std::max(1, target);
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double f = raw / mag;
    const double nice = f < 1.5 ? 1.0 : f < 3.0 ? 2.0 : f < 7.0 ? 5.0 : 10.0;
    return nice * mag;
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void add(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void finish() {
        if (!std::isfinite(lo)) {
            lo = 0.0;
            hi = 1.0;
        }
        if (hi - lo < 1e-12) {
            lo -= 0.5;
            hi += 0.5;
        }
    }
};

}  // namespace

std::string escape(const std::string& text) {
    std::string out;
    for (char ch : text) {
        switch (ch) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += ch;
        }
    }
    return out;
}

std::string render(const LineChart& chart) {
    const double left = 70;
    const double right = 20;
    const double top = 40;
    const double bottom = 55;
    const double pw = chart.width - left - right;
    const double ph = chart.height - top - bottom;

    Range xr;
    Range yr;
    for (const auto& s : chart.series) {
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) {
                xr.add(s.x[i]);
                yr.add(s.y[i]);
            }
        }
    }
    xr.finish();
    yr.finish();
    if (!chart.equal_aspect) yr.lo = std::min(yr.lo, 0.0);
    if (chart.equal_aspect) {
        // Same data units per pixel on both axes.
        const double scale = std::max((xr.hi - xr.lo) / pw, (yr.hi - yr.lo) / ph);
        const double cx = 0.5 * (xr.lo + xr.hi);
        const double cy = 0.5 * (yr.lo + yr.hi);
        xr.lo = cx - 0.5 * scale * pw;
        xr.hi = cx + 0.5 * scale * pw;
        yr.lo = cy - 0.5 * scale * ph;
        yr.hi = cy + 0.5 * scale * ph;
    }
    const auto px = [&](double x) { return left + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
    const auto py = [&](double y) { return top + ph - (y - yr.lo) / (yr.hi - yr.lo) * ph; };

    std::ostringstream o;
    o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << chart.width << "\" height=\"" << chart.height
      << "\" viewBox=\"0 0 " << chart.width << ' ' << chart.height << "\">\n";
    o << "<rect x=\"0\" y=\"0\" width=\"" << chart.width << "\" height=\"" << chart.height << "\" fill=\"white\"/>\n";
    o << "<text x=\"" << num(chart.width / 2.0) << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"14\">" << escape(chart.title) << "</text>\n";
    o << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
      << "\" fill=\"none\" stroke=\"black\"/>\n";

    const double xs = nice_step(xr.hi - xr.lo, 6);
    for (double t = std::ceil(xr.lo / xs) * xs; t <= xr.hi + 1e-9 * xs; t += xs) {
        o << "<line x1=\"" << num(px(t)) << "\" y1=\"" << num(top + ph) << "\" x2=\"" << num(px(t)) << "\" y2=\""
          << num(top + ph + 5) << "\" stroke=\"black\"/>\n";
        o << "<text x=\"" << num(px(t)) << "\" y=\"" << num(top + ph + 18)
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << tick_label(t) << "</text>\n";
    }
    const double ys = nice_step(yr.hi - yr.lo, 5);
    for (double t = std::ceil(yr.lo / ys) * ys; t <= yr.hi + 1e-9 * ys; t += ys) {
        o << "<line x1=\"" << num(left - 5) << "\" y1=\"" << num(py(t)) << "\" x2=\"" << num(left) << "\" y2=\""
          << num(py(t)) << "\" stroke=\"black\"/>\n";
        o << "<text x=\"" << num(left - 8) << "\" y=\"" << num(py(t) + 4)
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << tick_label(t) << "</text>\n";
    }
    o << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(chart.height - 12.0)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << escape(chart.x_label)
      << "</text>\n";
    o << "<text x=\"16\" y=\"" << num(top + ph / 2) << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"12\" transform=\"rotate(-90 16 " << num(top + ph / 2) << ")\">" << escape(chart.y_label)
      << "</text>\n";

    for (const auto& s : chart.series) {
        std::ostringstream pts;
        const auto flush = [&] {
            if (pts.tellp() > 0) {
                o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\""
                  << pts.str() << "\"/>\n";
            }
            pts.str("");
            pts.clear();
        };
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
                flush();
                continue;
            }
            if (pts.tellp() > 0) pts << ' ';
            pts << num(px(s.x[i])) << ',' << num(py(std::clamp(s.y[i], yr.lo, yr.hi)));
        }
        flush();
    }
    double ly = top + 14;
    for (const auto& s : chart.series) {
        o << "<line x1=\"" << num(left + pw - 130) << "\" y1=\"" << num(ly - 4) << "\" x2=\"" << num(left + pw - 110)
          << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << num(left + pw - 104) << "\" y=\"" << num(ly)
          << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape(s.label) << "</text>\n";
        ly += 16;
    }
    o << "</svg>\n";
    return o.str();
}

}  // namespace ckoop::svg
