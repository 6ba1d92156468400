#include "qdsim/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "qdsim/errors.hpp"

namespace qdsim {

void write_histogram_csv(const std::string& path, const CorrelationHistogram& hist,
                         const std::function<double(double)>& fit) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "# bin_width_ps=" << hist.bin_width_ps << " tau_min_ps=" << hist.tau_min_ps
        << " tau_max_ps=" << hist.tau_max_ps << " singles_a=" << hist.singles_a
        << " singles_b=" << hist.singles_b << " acquisition_ps=" << hist.acquisition_ps << "\n";
    out << (fit ? "tau_ps,counts,fit\n" : "tau_ps,counts\n");
    char line[96];
    for (size_t i = 0; i < hist.n_bins(); ++i) {
        const double tau = hist.bin_center_ps(i);
        if (fit) {
            std::snprintf(line, sizeof(line), "%.1f,%llu,%.6g\n", tau,
                          static_cast<unsigned long long>(hist.counts[i]), fit(tau));
        } else {
            std::snprintf(line, sizeof(line), "%.1f,%llu\n", tau,
                          static_cast<unsigned long long>(hist.counts[i]));
        }
        out << line;
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

CorrelationHistogram read_histogram_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    CorrelationHistogram hist;
    std::string line;
    if (!std::getline(in, line) || line.rfind("# bin_width_ps=", 0) != 0)
        throw IoError(path + ": missing histogram header line");
    long long bw = 0, tmin = 0, tmax = 0;
    unsigned long long sa = 0, sb = 0;
    long long acq = 0;
    if (std::sscanf(line.c_str(),
                    "# bin_width_ps=%lld tau_min_ps=%lld tau_max_ps=%lld singles_a=%llu singles_b=%llu "
                    "acquisition_ps=%lld",
                    &bw, &tmin, &tmax, &sa, &sb, &acq) != 6)
        throw IoError(path + ": malformed histogram header line");
    hist.bin_width_ps = bw;
    hist.tau_min_ps = tmin;
    hist.tau_max_ps = tmax;
    hist.singles_a = sa;
    hist.singles_b = sb;
    hist.acquisition_ps = acq;
    std::getline(in, line);  // column names
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        double tau;
        unsigned long long c;
        if (std::sscanf(line.c_str(), "%lf,%llu", &tau, &c) != 2)
            throw IoError(path + ": malformed data line '" + line + "'");
        hist.counts.push_back(c);
    }
    const size_t expected = static_cast<size_t>((hist.tau_max_ps - hist.tau_min_ps) / hist.bin_width_ps);
    if (hist.counts.size() != expected) throw IoError(path + ": bin count does not match header range");
    return hist;
}

void write_curve_csv(const std::string& path, const std::vector<std::string>& columns,
                     const std::vector<std::vector<double>>& data) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    for (size_t c = 0; c < columns.size(); ++c) out << columns[c] << (c + 1 < columns.size() ? ',' : '\n');
    for (const auto& col : data)
        if (col.size() != data.front().size()) throw IoError("write_curve_csv: ragged columns");
    if (data.empty()) return;
    char cell[40];
    for (size_t r = 0; r < data.front().size(); ++r) {
        for (size_t c = 0; c < data.size(); ++c) {
            std::snprintf(cell, sizeof(cell), "%.9g", data[c][r]);
            out << cell << (c + 1 < data.size() ? ',' : '\n');
        }
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

void write_svg_plot(const std::string& path, const std::vector<double>& xs, const std::vector<double>& ys,
                    const std::string& title, const std::vector<double>& fit_ys) {
    if (xs.size() != ys.size() || xs.empty()) throw IoError("write_svg_plot: bad data");
    if (!fit_ys.empty() && fit_ys.size() != xs.size()) throw IoError("write_svg_plot: fit length mismatch");
    const int w = 860, h = 480, ml = 60, mr = 20, mt = 34, mb = 40;
    double xmin = xs.front(), xmax = xs.front(), ymin = ys.front(), ymax = ys.front();
    for (size_t i = 0; i < xs.size(); ++i) {
        xmin = std::min(xmin, xs[i]);
        xmax = std::max(xmax, xs[i]);
        ymin = std::min(ymin, ys[i]);
        ymax = std::max(ymax, ys[i]);
    }
    for (double y : fit_ys) {
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
    }
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax == ymin) ymax = ymin + 1.0;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
    auto py = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };

    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n"
        << "<rect width='100%' height='100%' fill='white'/>\n"
        << "<text x='" << w / 2 << "' y='20' text-anchor='middle' font-family='sans-serif' font-size='14'>"
        << title << "</text>\n"
        << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr << "' y2='" << h - mb
        << "' stroke='black'/>\n"
        << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << h - mb
        << "' stroke='black'/>\n";
    char label[64];
    std::snprintf(label, sizeof(label), "%.4g", xmin);
    svg << "<text x='" << ml << "' y='" << h - 18 << "' font-family='sans-serif' font-size='11'>" << label
        << "</text>\n";
    std::snprintf(label, sizeof(label), "%.4g", xmax);
    svg << "<text x='" << w - mr << "' y='" << h - 18
        << "' text-anchor='end' font-family='sans-serif' font-size='11'>" << label << "</text>\n";
    std::snprintf(label, sizeof(label), "%.4g", ymax);
    svg << "<text x='6' y='" << mt + 10 << "' font-family='sans-serif' font-size='11'>" << label
        << "</text>\n";

    auto polyline = [&](const std::vector<double>& yy, const char* color) {
        svg << "<polyline fill='none' stroke='" << color << "' stroke-width='1' points='";
        for (size_t i = 0; i < xs.size(); ++i) svg << px(xs[i]) << ',' << py(yy[i]) << ' ';
        svg << "'/>\n";
    };
    polyline(ys, "steelblue");
    if (!fit_ys.empty()) polyline(fit_ys, "crimson");
    if (xs.size() <= 64) {
        for (size_t i = 0; i < xs.size(); ++i)
            svg << "<circle cx='" << px(xs[i]) << "' cy='" << py(ys[i]) << "' r='2.5' fill='steelblue'/>\n";
    }
    svg << "</svg>\n";

    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << svg.str();
    if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace qdsim
