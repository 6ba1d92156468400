#pragma once

// Figures of merit from click streams: g2(0), lifetime/beat fit, HOM
// visibility, corrected indistinguishability, and the curve fits.

#include <utility>

#include "qdsim/fit.hpp"
#include "qdsim/histogram.hpp"

namespace qdsim {

struct ValueWithSigma {
    double value = 0.0;
    double sigma = 0.0;
};

// Sum of bins whose centers fall within [center - half_window, center + half_window).
double peak_area(const CorrelationHistogram& hist, double center_ps, double half_window_ps);

// g2(0) = center-peak area / mean of the n_side_peaks most distant side peaks
// on each side (distant peaks avoid the blinking-bunched near peaks).
// Poisson error propagation.
ValueWithSigma g2_zero(const CorrelationHistogram& hist, double rep_period_ps, double window_ps,
                       int n_side_peaks = 3);

struct LifetimeFitOptions {
    double fit_min_ns = 0.06;   // skip the jitter-smeared rising edge
    double fit_max_ns = 0.0;    // 0: use the full histogram range
    double beat_scan_min_ghz = 0.5;
    double beat_scan_max_ghz = 10.0;
};

// Weighted LM fit of A*exp(-t/T1)*(1+v*cos(2*pi*delta*t+phi)) + C against a
// start-stop histogram with Poisson weights (variance max(count,1)).
FitReport fit_lifetime(const CorrelationHistogram& start_stop, const LifetimeFitOptions& opts = {});

// V = 1 - A_par(0)/A_perp(0), each zero-delay area normalized per histogram
// by the mean of the outer side-peak cluster.
ValueWithSigma hom_visibility(const CorrelationHistogram& parallel, const CorrelationHistogram& perpendicular,
                              double rep_period_ps, double window_ps, int n_side_peaks = 3);

// M_s = (V + g2) / (1 - g2)
double indistinguishability(double v_hom, double g2);

// Fit of the conversion-efficiency curve; points are (P in W, efficiency).
FitReport fit_conversion_curve(const std::vector<std::pair<double, double>>& points, double length_cm);

enum class PowerModel { Rabi, Saturation };

// Fit of the excitation-power dependence; points are (power, rate).
FitReport fit_power_curve(const std::vector<std::pair<double, double>>& points, PowerModel model);

}  // namespace qdsim
