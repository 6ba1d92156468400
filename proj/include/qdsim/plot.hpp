#pragma once

// CSV and quick-look SVG emission for histograms and fitted curves.

#include <functional>
#include <string>
#include <vector>

#include "qdsim/histogram.hpp"

namespace qdsim {

// CSV columns: tau_ps, counts[, fit]
void write_histogram_csv(const std::string& path, const CorrelationHistogram& hist,
                         const std::function<double(double tau_ps)>& fit = nullptr);

// CSV with arbitrary named columns of equal length.
void write_curve_csv(const std::string& path, const std::vector<std::string>& columns,
                     const std::vector<std::vector<double>>& data);

// Minimal line plot; points drawn when few.
void write_svg_plot(const std::string& path, const std::vector<double>& xs,
                    const std::vector<double>& ys, const std::string& title,
                    const std::vector<double>& fit_ys = {});

CorrelationHistogram read_histogram_csv(const std::string& path);

}  // namespace qdsim
