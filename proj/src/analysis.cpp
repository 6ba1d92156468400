#include "qdsim/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qdsim/errors.hpp"
#include "qdsim/units.hpp"

namespace qdsim {

double peak_area(const CorrelationHistogram& hist, double center_ps, double half_window_ps) {
    double area = 0.0;
    for (size_t i = 0; i < hist.n_bins(); ++i) {
        const double c = hist.bin_center_ps(i);
        if (c >= center_ps - half_window_ps && c < center_ps + half_window_ps)
            area += static_cast<double>(hist.counts[i]);
    }
    return area;
}

namespace {

// Indices of the n most distant side peaks fully contained in the histogram,
// on each side of zero delay.
std::vector<int> distant_side_peaks(const CorrelationHistogram& hist, double rep_period_ps,
                                    double half_window_ps, int n_per_side) {
    const int k_hi = static_cast<int>(std::floor((hist.tau_max_ps - half_window_ps) / rep_period_ps));
    const int k_lo = static_cast<int>(std::floor((-hist.tau_min_ps - half_window_ps) / rep_period_ps));
    std::vector<int> peaks;
    for (int k = k_hi; k >= 1 && static_cast<int>(peaks.size()) < n_per_side; --k) peaks.push_back(k);
    const size_t pos_count = peaks.size();
    for (int k = k_lo; k >= 1 && peaks.size() < pos_count + n_per_side; --k) peaks.push_back(-k);
    return peaks;
}

struct NormalizedPeak {
    double ratio;  // center area / mean side area
    double sigma;
    double center;
    double side_mean;
};

NormalizedPeak normalized_center(const CorrelationHistogram& hist, double rep_period_ps,
                                 double window_ps, int n_side_peaks, const char* op) {
    if (!(rep_period_ps > 0.0)) throw std::invalid_argument("peak analysis: period must be positive");
    if (!(window_ps > 0.0) || window_ps > rep_period_ps)
        throw std::invalid_argument("peak analysis: window must be in (0, period]");
    const double half = 0.5 * window_ps;
    const auto peaks = distant_side_peaks(hist, rep_period_ps, half, n_side_peaks);
    if (peaks.empty()) throw AnalysisError(std::string(op) + ": no complete side peaks in range");

    const double center = peak_area(hist, 0.0, half);
    double side_sum = 0.0;
    for (int k : peaks) side_sum += peak_area(hist, k * rep_period_ps, half);
    const double side_mean = side_sum / static_cast<double>(peaks.size());
    if (side_mean <= 0.0) throw AnalysisError(std::string(op) + ": side-peak area is zero, ratio undefined");

    // Poisson errors: var(center) = center, var(side_mean)/side_mean^2 = 1/side_sum.
    const double ratio = center / side_mean;
    const double sigma = std::sqrt(center / (side_mean * side_mean) + ratio * ratio / std::max(side_sum, 1.0));
    return {ratio, sigma, center, side_mean};
}

}  // namespace

ValueWithSigma g2_zero(const CorrelationHistogram& hist, double rep_period_ps, double window_ps,
                       int n_side_peaks) {
    const auto n = normalized_center(hist, rep_period_ps, window_ps, n_side_peaks, "g2_zero");
    return {n.ratio, n.sigma};
}

ValueWithSigma hom_visibility(const CorrelationHistogram& parallel, const CorrelationHistogram& perpendicular,
                              double rep_period_ps, double window_ps, int n_side_peaks) {
    const auto gpar = normalized_center(parallel, rep_period_ps, window_ps, n_side_peaks, "hom_visibility");
    const auto gperp =
        normalized_center(perpendicular, rep_period_ps, window_ps, n_side_peaks, "hom_visibility");
    if (gperp.ratio <= 0.0)
        throw AnalysisError("hom_visibility: perpendicular zero-delay area is zero, visibility undefined");
    const double v = 1.0 - gpar.ratio / gperp.ratio;
    const double rel2 = (gpar.sigma / gpar.ratio) * (gpar.sigma / gpar.ratio) +
                        (gperp.sigma / gperp.ratio) * (gperp.sigma / gperp.ratio);
    const double sigma = std::abs(gpar.ratio / gperp.ratio) * std::sqrt(rel2);
    return {v, sigma};
}

double indistinguishability(double v_hom, double g2) {
    if (g2 >= 1.0) throw std::domain_error("indistinguishability: g2 must be below 1");
    return (v_hom + g2) / (1.0 - g2);
}

namespace {

// A*exp(-t/T1) + C, the no-beat reference for the significance comparison.
class BareExponentialModel : public FitModel {
public:
    std::vector<std::string> param_names() const override { return {"amplitude", "t1_ns", "background"}; }
    double eval(double x, const std::vector<double>& p) const override {
        return p[0] * std::exp(-x / p[1]) + p[2];
    }
    void jacobian(double x, const std::vector<double>& p, std::vector<double>& out) const override {
        out.resize(3);
        const double e = std::exp(-x / p[1]);
        out[0] = e;
        out[1] = p[0] * e * x / (p[1] * p[1]);
        out[2] = 1.0;
    }
    bool valid(const std::vector<double>& p) const override { return p[1] > 1e-6; }
};

}  // namespace

FitReport fit_lifetime(const CorrelationHistogram& start_stop, const LifetimeFitOptions& opts) {
    std::vector<double> ts, ys, ws;
    // By default stop short of the fold edge: detector jitter wraps the
    // rising edge of the next pulse to tau -> period.
    const double span_ns = ps_to_ns(static_cast<double>(start_stop.tau_max_ps));
    const double fit_max_ns = opts.fit_max_ns > 0.0 ? std::min(opts.fit_max_ns, span_ns) : 0.95 * span_ns;
    for (size_t i = 0; i < start_stop.n_bins(); ++i) {
        const double t_ns = ps_to_ns(start_stop.bin_center_ps(i));
        if (t_ns < opts.fit_min_ns || t_ns > fit_max_ns) continue;
        ts.push_back(t_ns);
        ys.push_back(static_cast<double>(start_stop.counts[i]));
        ws.push_back(1.0 / std::max(static_cast<double>(start_stop.counts[i]), 1.0));
    }
    if (ts.size() < 12) throw AnalysisError("fit_lifetime: too few bins in the fit range");

    // Initial guesses: background from the last decile, amplitude from the
    // first bins, T1 from a log-linear regression.
    double bg = 0.0;
    {
        const size_t n_tail = std::max<size_t>(ts.size() / 10, 1);
        for (size_t i = ts.size() - n_tail; i < ts.size(); ++i) bg += ys[i];
        bg /= static_cast<double>(n_tail);
    }
    double a0 = *std::max_element(ys.begin(), ys.end()) - bg;
    if (a0 <= 0.0) a0 = 1.0;
    // T1 from the half-area time of the background-subtracted decay
    // (median of an exponential = T1*ln2); robust against the beat
    // modulation and tail noise, unlike a log-linear regression.
    double t1 = 0.25;
    {
        double total = 0.0;
        for (size_t i = 0; i < ts.size(); ++i) total += std::max(ys[i] - bg, 0.0);
        double acc = 0.0;
        for (size_t i = 0; i < ts.size() && total > 0.0; ++i) {
            acc += std::max(ys[i] - bg, 0.0);
            if (acc >= 0.5 * total) {
                t1 = std::max((ts[i] - ts.front()) / std::log(2.0), 1e-3);
                break;
            }
        }
    }

    // Beat frequency by coarse scan: at each candidate frequency solve the
    // linear system for (offset, cos, sin) amplitudes of the flattened decay.
    // The constant basis vector absorbs any amplitude misestimate so it does
    // not masquerade as a low-frequency beat.
    std::vector<double> flat_t, flat_y, flat_w;
    for (size_t i = 0; i < ts.size(); ++i) {
        const double base = a0 * std::exp(-ts[i] / t1);
        if (base <= a0 * 2e-3) continue;
        flat_t.push_back(ts[i]);
        flat_y.push_back((ys[i] - bg) / base - 1.0);
        // var(flat_y) = var(y)/base^2 with Poisson var(y) ~ max(y,1)
        flat_w.push_back(base * base / std::max(ys[i], 1.0));
    }
    double best_delta = 0.0, best_v = 0.0, best_phi = 0.0, best_sse = -1.0;
    for (double delta = opts.beat_scan_min_ghz; delta <= opts.beat_scan_max_ghz; delta += 0.02) {
        // basis {1, t, cos, sin}: offset and drift absorb amplitude/lifetime
        // misestimates so they cannot masquerade as a low-frequency beat
        constexpr int nb = 4;
        double m[nb * nb] = {0}, rhs[nb] = {0};
        for (size_t i = 0; i < flat_t.size(); ++i) {
            const double c = std::cos(kTwoPi * delta * flat_t[i]);
            const double s = std::sin(kTwoPi * delta * flat_t[i]);
            const double basis[nb] = {1.0, flat_t[i], c, s};
            for (int r = 0; r < nb; ++r) {
                rhs[r] += flat_w[i] * flat_y[i] * basis[r];
                for (int q = 0; q < nb; ++q) m[r * nb + q] += flat_w[i] * basis[r] * basis[q];
            }
        }
        // gaussian elimination with partial pivoting
        double sol[nb];
        {
            double aug[nb][nb + 1];
            for (int r = 0; r < nb; ++r) {
                for (int q = 0; q < nb; ++q) aug[r][q] = m[r * nb + q];
                aug[r][nb] = rhs[r];
            }
            bool singular = false;
            for (int col = 0; col < nb; ++col) {
                int piv = col;
                for (int r = col + 1; r < nb; ++r)
                    if (std::abs(aug[r][col]) > std::abs(aug[piv][col])) piv = r;
                if (std::abs(aug[piv][col]) < 1e-12) {
                    singular = true;
                    break;
                }
                std::swap(aug[piv], aug[col]);
                for (int r = col + 1; r < nb; ++r) {
                    const double f = aug[r][col] / aug[col][col];
                    for (int q = col; q <= nb; ++q) aug[r][q] -= f * aug[col][q];
                }
            }
            if (singular) continue;
            for (int r = nb - 1; r >= 0; --r) {
                double acc = aug[r][nb];
                for (int q = r + 1; q < nb; ++q) acc -= aug[r][q] * sol[q];
                sol[r] = acc / aug[r][r];
            }
        }
        double sse = 0.0;
        for (size_t i = 0; i < flat_t.size(); ++i) {
            const double c = std::cos(kTwoPi * delta * flat_t[i]);
            const double s = std::sin(kTwoPi * delta * flat_t[i]);
            const double r = flat_y[i] - sol[0] - sol[1] * flat_t[i] - sol[2] * c - sol[3] * s;
            sse += flat_w[i] * r * r;
        }
        if (best_sse < 0.0 || sse < best_sse) {
            best_sse = sse;
            best_delta = delta;
            best_v = std::min(std::hypot(sol[2], sol[3]), 0.99);
            best_phi = std::atan2(-sol[3], sol[2]);
        }
    }

    LifetimeBeatModel model;
    FitReport report = lm_fit(model, ts, ys, ws, {a0, t1, best_delta, best_v, best_phi, bg});
    report.model = "lifetime_beat";
    // canonical sign: (v, phi) and (-v, phi+pi) are the same curve
    if (report.params.at("beat_visibility") < 0.0) {
        report.params.at("beat_visibility") *= -1.0;
        double phi = report.params.at("phase") + kPi;
        while (phi > kPi) phi -= kTwoPi;
        while (phi <= -kPi) phi += kTwoPi;
        report.params.at("phase") = phi;
    }

    // Beat significance: the frequency scan maximizes over ~500 candidates,
    // so an insignificant oscillation must not be reported as a beat. Keep
    // the beat only if it improves chi^2 well beyond the selection bias
    // (2*ln(n_candidates) ~ 12) plus the 3 extra parameters.
    BareExponentialModel bare;
    FitReport no_beat = lm_fit(bare, ts, ys, ws, {a0, t1, bg});
    const double chi2_full = report.residual_norm * report.residual_norm;
    const double chi2_bare = no_beat.residual_norm * no_beat.residual_norm;
    if (chi2_bare - chi2_full < 25.0) {
        FitReport flat;
        flat.model = "lifetime_beat";
        flat.params = {{"amplitude", no_beat.params.at("amplitude")},
                       {"t1_ns", no_beat.params.at("t1_ns")},
                       {"delta_ghz", report.params.at("delta_ghz")},
                       {"beat_visibility", 0.0},
                       {"phase", 0.0},
                       {"background", no_beat.params.at("background")}};
        flat.sigmas = {{"amplitude", no_beat.sigmas.at("amplitude")},
                       {"t1_ns", no_beat.sigmas.at("t1_ns")},
                       {"delta_ghz", report.sigmas.at("delta_ghz")},
                       {"beat_visibility", report.sigmas.at("beat_visibility")},
                       {"phase", report.sigmas.at("phase")},
                       {"background", no_beat.sigmas.at("background")}};
        flat.residual_norm = no_beat.residual_norm;
        flat.iterations = report.iterations + no_beat.iterations;
        flat.converged = no_beat.converged;
        return flat;
    }
    return report;
}

FitReport fit_conversion_curve(const std::vector<std::pair<double, double>>& points, double length_cm) {
    if (points.size() < 4) throw AnalysisError("fit_conversion_curve: need at least 4 points");
    double pmin = points.front().first, pmax = points.front().first;
    for (const auto& [p, y] : points) {
        pmin = std::min(pmin, p);
        pmax = std::max(pmax, p);
    }
    if (!(pmax > pmin)) throw AnalysisError("fit_conversion_curve: degenerate power grid");

    std::vector<double> xs, ys, ws;
    double eta_peak = 0.0, p_at_peak = pmax;
    for (const auto& [p, y] : points) {
        xs.push_back(p);
        ys.push_back(y);
        ws.push_back(1.0);
        if (y > eta_peak) {
            eta_peak = y;
            p_at_peak = p;
        }
    }
    const double q = kPi / (2.0 * length_cm);
    ConversionCurveModel model(length_cm);
    FitReport report = lm_fit(model, xs, ys, ws, {std::max(eta_peak, 1e-3), q * q / p_at_peak});
    report.model = "conversion_curve";
    return report;
}

FitReport fit_power_curve(const std::vector<std::pair<double, double>>& points, PowerModel model_kind) {
    if (points.size() < 5) throw AnalysisError("fit_power_curve: need at least 5 points");
    std::vector<double> xs, ys, ws;
    double ymax = 0.0, x_at_max = points.back().first;
    for (const auto& [p, y] : points) {
        xs.push_back(p);
        ys.push_back(y);
        ws.push_back(1.0);
        if (y > ymax) {
            ymax = y;
            x_at_max = p;
        }
    }
    FitReport report;
    if (model_kind == PowerModel::Rabi) {
        RabiPowerModel model;
        report = lm_fit(model, xs, ys, ws, {std::max(ymax, 1e-6), std::max(x_at_max, 1e-9)});
        report.model = "rabi_power";
    } else {
        // Half-maximum crossing as the saturation-power guess.
        double p_half = x_at_max;
        for (size_t i = 0; i < xs.size(); ++i) {
            if (ys[i] >= 0.5 * ymax) {
                p_half = xs[i];
                break;
            }
        }
        SaturationPowerModel model;
        report = lm_fit(model, xs, ys, ws, {std::max(1.2 * ymax, 1e-6), std::max(p_half, 1e-9)});
        report.model = "saturation_power";
    }
    return report;
}

}  // namespace qdsim
