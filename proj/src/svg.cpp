#include "srl/svg.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "srl/core.hpp"

namespace srl::svg {

namespace {

constexpr const char* kPalette[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948",
                                    "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac", "#1b9e77", "#7570b3"};

std::string color(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string open(double width, double height, const Options& options) {
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
      << "\" viewBox=\"0 0 " << num(width) << ' ' << num(height) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    if (options.timestamp) {
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char buf[64];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        s << "<!-- generated " << buf << " -->\n";
    }
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    return s.str();
}

std::string text(double x, double y, const std::string& label, const char* anchor = "middle") {
    return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + anchor + "\">" + escape(label) +
           "</text>\n";
}

std::string line(double x1, double y1, double x2, double y2, const std::string& stroke = "#333") {
    return "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) +
           "\" stroke=\"" + stroke + "\"/>\n";
}

}  // namespace

std::string elbow(const ElbowTable& table, const Options& options) {
    const double w = 560, h = 340, left = 70, right = 70, top = 30, bottom = 50;
    const double pw = w - left - right, ph = h - top - bottom;
    std::string out = open(w, h, options);
    if (table.rows.empty()) return out + "</svg>\n";

    const double k0 = static_cast<double>(table.rows.front().k);
    const double k1 = static_cast<double>(table.rows.back().k);
    double imax = 0.0;
    for (const auto& r : table.rows) imax = std::max(imax, r.inertia);
    if (imax <= 0.0) imax = 1.0;
    auto x_of = [&](std::size_t k) { return k1 > k0 ? left + (static_cast<double>(k) - k0) / (k1 - k0) * pw : left + pw / 2; };
    auto yi = [&](double v) { return top + ph - v / imax * ph; };
    auto ys = [&](double v) { return top + ph - (v + 1.0) / 2.0 * ph; };  // silhouette axis [-1, 1]

    out += line(left, top + ph, left + pw, top + ph) + line(left, top, left, top + ph) +
           line(left + pw, top, left + pw, top + ph);
    out += text(left + pw / 2, h - 12, "number of clusters k");
    out += text(left - 8, top - 10, "inertia", "start");
    out += text(left + pw + 8, top - 10, "silhouette", "end");
    out += text(left - 6, top + 4, num(imax), "end") + text(left - 6, top + ph, "0", "end");
    out += text(left + pw + 6, top + 4, "1", "start") + text(left + pw + 6, top + ph, "-1", "start");
    for (const auto& r : table.rows) out += text(x_of(r.k), top + ph + 16, std::to_string(r.k));

    std::string inertia_pts, sil_pts;
    for (const auto& r : table.rows) {
        inertia_pts += num(x_of(r.k)) + "," + num(yi(r.inertia)) + " ";
        sil_pts += num(x_of(r.k)) + "," + num(ys(r.silhouette)) + " ";
    }
    out += "<polyline fill=\"none\" stroke=\"" + color(0) + "\" stroke-width=\"2\" points=\"" + inertia_pts + "\"/>\n";
    out += "<polyline fill=\"none\" stroke=\"" + color(1) + "\" stroke-width=\"2\" stroke-dasharray=\"5,3\" points=\"" +
           sil_pts + "\"/>\n";
    for (const auto& r : table.rows) {
        out += "<circle cx=\"" + num(x_of(r.k)) + "\" cy=\"" + num(yi(r.inertia)) + "\" r=\"3\" fill=\"" + color(0) + "\"/>\n";
        out += "<circle cx=\"" + num(x_of(r.k)) + "\" cy=\"" + num(ys(r.silhouette)) + "\" r=\"3\" fill=\"" + color(1) + "\"/>\n";
    }
    out += line(x_of(table.suggested_k), top, x_of(table.suggested_k), top + ph, "#999");
    out += text(x_of(table.suggested_k), top - 4, "suggested k=" + std::to_string(table.suggested_k));
    return out + "</svg>\n";
}

std::string phase(const PhaseDistribution& dist, std::span<const std::string> symbol_names, const Options& options) {
    const double panel_w = 260, panel_h = 200, gap = 30, left = 40, top = 40, legend_h = 20.0 * 2;
    const double w = left + static_cast<double>(std::max<std::size_t>(dist.n_clusters, 1)) * (panel_w + gap);
    const double h = top + panel_h + 40 + legend_h;
    std::string out = open(w, h, options);
    const std::size_t bins = dist.bins;
    for (std::size_t c = 0; c < dist.n_clusters; ++c) {
        const double x0 = left + static_cast<double>(c) * (panel_w + gap);
        auto xb = [&](std::size_t b) {
            // bin centers; a single bin spans the panel
            return bins > 1 ? x0 + static_cast<double>(b) / static_cast<double>(bins - 1) * panel_w : x0 + panel_w / 2;
        };
        std::vector<double> lower(bins, 0.0);
        for (std::size_t s = 0; s < dist.n_symbols; ++s) {
            std::string pts;
            std::vector<double> upper(bins);
            for (std::size_t b = 0; b < bins; ++b) {
                upper[b] = lower[b] + dist.phase[c][b][s];
                pts += num(xb(b)) + "," + num(top + panel_h - upper[b] * panel_h) + " ";
            }
            for (std::size_t b = bins; b-- > 0;) pts += num(xb(b)) + "," + num(top + panel_h - lower[b] * panel_h) + " ";
            out += "<polygon fill=\"" + color(s) + "\" stroke=\"none\" points=\"" + pts + "\"/>\n";
            lower = std::move(upper);
        }
        out += "<rect x=\"" + num(x0) + "\" y=\"" + num(top) + "\" width=\"" + num(panel_w) + "\" height=\"" +
               num(panel_h) + "\" fill=\"none\" stroke=\"#333\"/>\n";
        out += text(x0 + panel_w / 2, top - 10,
                    "cluster " + std::to_string(c) + " (n=" + std::to_string(dist.cluster_sizes[c]) + ")");
        out += text(x0, top + panel_h + 14, "start", "start") + text(x0 + panel_w, top + panel_h + 14, "end", "end");
    }
    double lx = left;
    const double ly = top + panel_h + 36;
    for (std::size_t s = 0; s < dist.n_symbols; ++s) {
        const std::string name = s < symbol_names.size() ? symbol_names[s] : std::to_string(s);
        out += "<rect x=\"" + num(lx) + "\" y=\"" + num(ly - 9) + "\" width=\"10\" height=\"10\" fill=\"" + color(s) + "\"/>\n";
        out += text(lx + 14, ly, name, "start");
        lx += 24 + 7.0 * static_cast<double>(name.size());
    }
    return out + "</svg>\n";
}

std::string sankey(const ContingencyTable& table, const std::string& row_name, const std::string& col_name,
                   const Options& options) {
    const double w = 600, h = 420, top = 40, bottom = 20, node_w = 18, pad = 12, x_left = 120, x_right = w - 120 - node_w;
    std::string out = open(w, h, options);
    const std::size_t total = table.total();
    if (total == 0) return out + "</svg>\n";
    const auto rt = table.row_totals();
    const auto ct = table.col_totals();
    const double avail_l = h - top - bottom - pad * static_cast<double>(table.rows() > 0 ? table.rows() - 1 : 0);
    const double avail_r = h - top - bottom - pad * static_cast<double>(table.cols() > 0 ? table.cols() - 1 : 0);
    const double scale = std::min(avail_l, avail_r) / static_cast<double>(total);

    std::vector<double> row_y(table.rows()), col_y(table.cols());
    double y = top;
    for (std::size_t i = 0; i < table.rows(); ++i) {
        row_y[i] = y;
        y += static_cast<double>(rt[i]) * scale + pad;
    }
    y = top;
    for (std::size_t j = 0; j < table.cols(); ++j) {
        col_y[j] = y;
        y += static_cast<double>(ct[j]) * scale + pad;
    }
    out += text(x_left + node_w / 2, top - 16, row_name) + text(x_right + node_w / 2, top - 16, col_name);

    std::vector<double> row_off(table.rows(), 0.0), col_off(table.cols(), 0.0);
    for (std::size_t i = 0; i < table.rows(); ++i) {
        for (std::size_t j = 0; j < table.cols(); ++j) {
            const auto n = table.counts[i][j];
            if (n == 0) continue;
            const double thick = static_cast<double>(n) * scale;
            const double y0 = row_y[i] + row_off[i] + thick / 2;
            const double y1 = col_y[j] + col_off[j] + thick / 2;
            row_off[i] += thick;
            col_off[j] += thick;
            const double xa = x_left + node_w, xb = x_right, xm = (xa + xb) / 2;
            out += "<path d=\"M" + num(xa) + "," + num(y0) + " C" + num(xm) + "," + num(y0) + " " + num(xm) + "," +
                   num(y1) + " " + num(xb) + "," + num(y1) + "\" fill=\"none\" stroke=\"" + color(i) +
                   "\" stroke-opacity=\"0.45\" stroke-width=\"" + num(std::max(thick, 1.0)) + "\"><title>" +
                   escape(row_name) + " " + std::to_string(table.row_labels[i]) + " -> " + escape(col_name) + " " +
                   std::to_string(table.col_labels[j]) + ": " + std::to_string(n) + "</title></path>\n";
        }
    }
    for (std::size_t i = 0; i < table.rows(); ++i) {
        out += "<rect x=\"" + num(x_left) + "\" y=\"" + num(row_y[i]) + "\" width=\"" + num(node_w) + "\" height=\"" +
               num(std::max(static_cast<double>(rt[i]) * scale, 1.0)) + "\" fill=\"" + color(i) + "\"/>\n";
        out += text(x_left - 6, row_y[i] + static_cast<double>(rt[i]) * scale / 2 + 4,
                    std::to_string(table.row_labels[i]) + " (" + std::to_string(rt[i]) + ")", "end");
    }
    for (std::size_t j = 0; j < table.cols(); ++j) {
        out += "<rect x=\"" + num(x_right) + "\" y=\"" + num(col_y[j]) + "\" width=\"" + num(node_w) + "\" height=\"" +
               num(std::max(static_cast<double>(ct[j]) * scale, 1.0)) + "\" fill=\"#777\"/>\n";
        out += text(x_right + node_w + 6, col_y[j] + static_cast<double>(ct[j]) * scale / 2 + 4,
                    std::to_string(table.col_labels[j]) + " (" + std::to_string(ct[j]) + ")", "start");
    }
    return out + "</svg>\n";
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot write file");
    out << content;
}

}  // namespace srl::svg
