#pragma once

// Minimal SVG writers for the report plots. Coordinates are printed with two
// decimals so output is byte-stable.

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fluxjump::svg {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline const char* palette(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    return colors[i % 10];
}

class Doc {
public:
    Doc(double w, double h) : w_(w), h_(h) {}

    void text(double x, double y, const std::string& s, int size = 12, const char* anchor = "middle") {
        body_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << size << "\" text-anchor=\""
              << anchor << "\">" << escape(s) << "</text>\n";
    }
    void line(double x1, double y1, double x2, double y2, const char* stroke = "#000", double width = 1.0) {
        body_ << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\"" << num(y2)
              << "\" stroke=\"" << stroke << "\" stroke-width=\"" << num(width) << "\"/>\n";
    }
    void rect(double x, double y, double w, double h, const char* fill, const char* cls = nullptr) {
        body_ << "<rect";
        if (cls) body_ << " class=\"" << cls << "\"";
        body_ << " x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w) << "\" height=\"" << num(h)
              << "\" fill=\"" << fill << "\"/>\n";
    }
    void polyline(const std::vector<std::pair<double, double>>& pts, const char* stroke, double width, double opacity) {
        body_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"" << num(width)
              << "\" stroke-opacity=\"" << num(opacity) << "\" points=\"";
        for (std::size_t i = 0; i < pts.size(); ++i) body_ << (i ? " " : "") << num(pts[i].first) << ',' << num(pts[i].second);
        body_ << "\"/>\n";
    }
    void open_group(const std::string& cls) { body_ << "<g class=\"" << escape(cls) << "\">\n"; }
    void close_group() { body_ << "</g>\n"; }

    std::string str() const {
        std::ostringstream out;
        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w_) << "\" height=\"" << num(h_)
            << "\" viewBox=\"0 0 " << num(w_) << ' ' << num(h_) << "\" font-family=\"sans-serif\">\n"
            << body_.str() << "</svg>\n";
        return out.str();
    }

private:
    double w_, h_;
    std::ostringstream body_;
};

struct Trajectory {
    std::vector<double> values;
    int cluster = 0;
};

/// One panel per cluster: member trajectories thin, centroid thick. Each panel is
/// a <g class="panel">.
inline std::string profile_panels(const std::string& title, const std::vector<Trajectory>& rows,
                                  const std::vector<std::vector<double>>& centroids,
                                  const std::vector<std::string>& names) {
    const std::size_t k = centroids.size();
    const double pw = 240, ph = 200, margin = 40;
    Doc doc(margin + static_cast<double>(k) * (pw + margin), ph + 2 * margin + 20);
    doc.text((margin + static_cast<double>(k) * (pw + margin)) / 2, 20, title, 14);
    double ymax = 1.0;
    std::size_t len = 1;
    for (const auto& r : rows) {
        for (double v : r.values) ymax = std::max(ymax, v);
        len = std::max(len, r.values.size());
    }
    for (const auto& c : centroids) len = std::max(len, c.size());
    std::vector<std::size_t> counts(k, 0);
    for (const auto& r : rows)
        if (r.cluster >= 0 && static_cast<std::size_t>(r.cluster) < k) ++counts[static_cast<std::size_t>(r.cluster)];

    for (std::size_t c = 0; c < k; ++c) {
        const double x0 = margin + static_cast<double>(c) * (pw + margin), y0 = margin + 10;
        auto pt = [&](std::size_t i, double v) {
            double x = x0 + (len > 1 ? pw * static_cast<double>(i) / static_cast<double>(len - 1) : 0.0);
            return std::pair{x, y0 + ph - ph * v / ymax};
        };
        doc.open_group("panel");
        doc.line(x0, y0 + ph, x0 + pw, y0 + ph);
        doc.line(x0, y0, x0, y0 + ph);
        double pct = rows.empty() ? 0.0 : 100.0 * static_cast<double>(counts[c]) / static_cast<double>(rows.size());
        doc.text(x0 + pw / 2, y0 - 6, (c < names.size() ? names[c] : "cluster " + std::to_string(c)) + " (" + num(pct) + "%)");
        doc.text(x0 + pw / 2, y0 + ph + 28, "response", 10);
        doc.text(x0 - 6, y0 + 10, num(ymax), 10, "end");
        for (const auto& r : rows) {
            if (r.cluster != static_cast<int>(c)) continue;
            std::vector<std::pair<double, double>> pts;
            for (std::size_t i = 0; i < r.values.size(); ++i) pts.push_back(pt(i, r.values[i]));
            doc.polyline(pts, palette(c), 1.0, 0.35);
        }
        std::vector<std::pair<double, double>> cpts;
        for (std::size_t i = 0; i < centroids[c].size(); ++i) cpts.push_back(pt(i, centroids[c][i]));
        doc.polyline(cpts, "#000", 2.5, 1.0);
        doc.close_group();
    }
    return doc.str();
}

/// Inertia against k.
inline std::string elbow(const std::string& title, const std::vector<std::pair<int, double>>& curve) {
    const double w = 400, h = 280, m = 50;
    Doc doc(w, h);
    doc.text(w / 2, 20, title, 14);
    doc.line(m, h - m, w - m / 2, h - m);
    doc.line(m, m, m, h - m);
    if (!curve.empty()) {
        double ymax = 0.0;
        for (const auto& [k, v] : curve) ymax = std::max(ymax, v);
        if (ymax <= 0.0) ymax = 1.0;
        const double kmin = curve.front().first, kmax = std::max(curve.back().first, curve.front().first + 1);
        std::vector<std::pair<double, double>> pts;
        for (const auto& [k, v] : curve) {
            double x = m + (w - 1.5 * m) * (k - kmin) / (kmax - kmin);
            double y = h - m - (h - 2 * m) * v / ymax;
            pts.emplace_back(x, y);
            doc.text(x, h - m + 16, std::to_string(k), 10);
        }
        doc.polyline(pts, palette(0), 2.0, 1.0);
    }
    doc.text(w / 2, h - 8, "k", 12);
    doc.text(14, h / 2, "inertia", 12, "start");
    return doc.str();
}

/// Stacked percentage bar per group (e.g. per model) over clusters.
inline std::string assignment_bars(const std::string& title, const std::map<std::string, std::vector<double>>& pct,
                                   const std::vector<std::string>& names) {
    const double bar = 22, gap = 8, left = 180, width = 360, top = 40;
    Doc doc(left + width + 40, top + static_cast<double>(pct.size()) * (bar + gap) + 50);
    doc.text((left + width) / 2, 20, title, 14);
    double y = top;
    for (const auto& [group, values] : pct) {
        doc.text(left - 8, y + bar * 0.7, group, 11, "end");
        double x = left;
        for (std::size_t c = 0; c < values.size(); ++c) {
            double wseg = width * values[c] / 100.0;
            doc.rect(x, y, wseg, bar, palette(c), "bar");
            x += wseg;
        }
        y += bar + gap;
    }
    double x = left;
    for (std::size_t c = 0; c < names.size(); ++c) {
        doc.rect(x, y + 10, 12, 12, palette(c));
        doc.text(x + 16, y + 20, names[c], 11, "start");
        x += 110;
    }
    return doc.str();
}

}  // namespace fluxjump::svg
