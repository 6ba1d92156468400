#include "qdsim/fit.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qdsim/errors.hpp"
#include "qdsim/units.hpp"

namespace qdsim {

namespace {

// Dense symmetric solve via Cholesky; returns false if not positive definite.
bool cholesky_solve(std::vector<double> a, std::vector<double> rhs, int n, std::vector<double>& x) {
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = a[i * n + j];
            for (int k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
            if (i == j) {
                if (s <= 0.0) return false;
                a[i * n + i] = std::sqrt(s);
            } else {
                a[i * n + j] = s / a[j * n + j];
            }
        }
    }
    for (int i = 0; i < n; ++i) {
        double s = rhs[i];
        for (int k = 0; k < i; ++k) s -= a[i * n + k] * rhs[k];
        rhs[i] = s / a[i * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = rhs[i];
        for (int k = i + 1; k < n; ++k) s -= a[k * n + i] * rhs[k];
        rhs[i] = s / a[i * n + i];
    }
    x = rhs;
    return true;
}

bool invert_spd(const std::vector<double>& a, int n, std::vector<double>& inv) {
    inv.assign(n * n, 0.0);
    for (int col = 0; col < n; ++col) {
        std::vector<double> e(n, 0.0), x;
        e[col] = 1.0;
        if (!cholesky_solve(a, e, n, x)) return false;
        for (int row = 0; row < n; ++row) inv[row * n + col] = x[row];
    }
    return true;
}

double chi2_of(const FitModel& model, const std::vector<double>& xs, const std::vector<double>& ys,
               const std::vector<double>& ws, const std::vector<double>& p) {
    double acc = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        const double r = ys[i] - model.eval(xs[i], p);
        acc += ws[i] * r * r;
    }
    return acc;
}

}  // namespace

FitReport lm_fit(const FitModel& model, const std::vector<double>& xs, const std::vector<double>& ys,
                 const std::vector<double>& ws, std::vector<double> p, const LmOptions& opts) {
    const auto names = model.param_names();
    const int n = static_cast<int>(names.size());
    if (p.size() != names.size()) throw std::invalid_argument("lm_fit: wrong initial parameter count");
    if (xs.size() != ys.size() || xs.size() != ws.size())
        throw std::invalid_argument("lm_fit: data size mismatch");
    if (xs.size() < names.size()) throw AnalysisError("lm_fit: fewer points than parameters");
    if (!model.valid(p)) throw std::invalid_argument("lm_fit: invalid initial parameters");

    FitReport report;
    report.model = "unnamed";
    double lambda = opts.lambda0;
    double chi2 = chi2_of(model, xs, ys, ws, p);

    std::vector<double> jrow(n), jtj(n * n), jtr(n), step, trial(n);
    int iter = 0;
    bool converged = false;
    for (; iter < opts.max_iterations; ++iter) {
        // Gauss-Newton normal equations with Marquardt damping.
        std::fill(jtj.begin(), jtj.end(), 0.0);
        std::fill(jtr.begin(), jtr.end(), 0.0);
        for (size_t i = 0; i < xs.size(); ++i) {
            model.jacobian(xs[i], p, jrow);
            const double r = ys[i] - model.eval(xs[i], p);
            for (int a = 0; a < n; ++a) {
                jtr[a] += ws[i] * jrow[a] * r;
                for (int b = 0; b <= a; ++b) jtj[a * n + b] += ws[i] * jrow[a] * jrow[b];
            }
        }
        for (int a = 0; a < n; ++a)
            for (int b = a + 1; b < n; ++b) jtj[a * n + b] = jtj[b * n + a];

        bool accepted = false;
        while (!accepted && iter < opts.max_iterations) {
            std::vector<double> damped = jtj;
            for (int a = 0; a < n; ++a)
                damped[a * n + a] += lambda * std::max(jtj[a * n + a], 1e-30);
            if (cholesky_solve(damped, jtr, n, step)) {
                for (int a = 0; a < n; ++a) trial[a] = p[a] + step[a];
                if (model.valid(trial)) {
                    const double trial_chi2 = chi2_of(model, xs, ys, ws, trial);
                    if (trial_chi2 <= chi2) {
                        const double rel = (chi2 - trial_chi2) / std::max(chi2, 1e-300);
                        p = trial;
                        chi2 = trial_chi2;
                        lambda = std::max(lambda / opts.lambda_down, 1e-14);
                        accepted = true;
                        if (rel < opts.rel_tolerance) converged = true;
                        break;
                    }
                }
            }
            lambda *= opts.lambda_up;
            if (lambda > 1e14) break;
        }
        if (converged || !accepted) break;
    }

    report.iterations = iter + 1;
    report.converged = converged;
    report.residual_norm = std::sqrt(chi2);

    // 1-sigma parameter uncertainties from the unweighted-by-damping
    // Gauss-Newton Hessian at the optimum.
    std::fill(jtj.begin(), jtj.end(), 0.0);
    for (size_t i = 0; i < xs.size(); ++i) {
        model.jacobian(xs[i], p, jrow);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b <= a; ++b) jtj[a * n + b] += ws[i] * jrow[a] * jrow[b];
    }
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) jtj[a * n + b] = jtj[b * n + a];
    std::vector<double> cov;
    const bool cov_ok = invert_spd(jtj, n, cov);
    // Scale by the reduced chi^2 so unit-weight fits report data-driven
    // uncertainties; for properly Poisson-weighted fits the factor is ~1.
    const double s2 = xs.size() > names.size()
                          ? chi2 / static_cast<double>(xs.size() - names.size())
                          : 1.0;
    for (int a = 0; a < n; ++a) {
        report.params[names[a]] = p[a];
        report.sigmas[names[a]] = cov_ok ? std::sqrt(std::max(cov[a * n + a] * s2, 0.0)) : 0.0;
    }
    return report;
}

// --- Models ----------------------------------------------------------------

std::vector<std::string> LifetimeBeatModel::param_names() const {
    return {"amplitude", "t1_ns", "delta_ghz", "beat_visibility", "phase", "background"};
}

double LifetimeBeatModel::eval(double x, const std::vector<double>& p) const {
    return p[0] * std::exp(-x / p[1]) * (1.0 + p[3] * std::cos(kTwoPi * p[2] * x + p[4])) + p[5];
}

void LifetimeBeatModel::jacobian(double x, const std::vector<double>& p, std::vector<double>& out) const {
    out.resize(6);
    const double e = std::exp(-x / p[1]);
    const double arg = kTwoPi * p[2] * x + p[4];
    const double c = std::cos(arg), s = std::sin(arg);
    out[0] = e * (1.0 + p[3] * c);
    out[1] = p[0] * e * (1.0 + p[3] * c) * x / (p[1] * p[1]);
    out[2] = -p[0] * e * p[3] * s * kTwoPi * x;
    out[3] = p[0] * e * c;
    out[4] = -p[0] * e * p[3] * s;
    out[5] = 1.0;
}

bool LifetimeBeatModel::valid(const std::vector<double>& p) const {
    return p[1] > 1e-6 && p[2] >= 0.0 && p[3] > -1.0 && p[3] < 1.5;
}

std::vector<std::string> ConversionCurveModel::param_names() const { return {"eta_max", "eta_nor"}; }

double ConversionCurveModel::eval(double x, const std::vector<double>& p) const {
    const double s = std::sin(std::sqrt(p[1] * x) * length_cm_);
    return p[0] * s * s;
}

void ConversionCurveModel::jacobian(double x, const std::vector<double>& p, std::vector<double>& out) const {
    out.resize(2);
    const double u = std::sqrt(p[1] * x) * length_cm_;
    const double s = std::sin(u);
    out[0] = s * s;
    // d/d eta_nor: u depends on sqrt(eta_nor), du/deta_nor = u/(2*eta_nor)
    out[1] = p[1] > 1e-14 ? p[0] * std::sin(2.0 * u) * u / (2.0 * p[1])
                          : p[0] * length_cm_ * length_cm_ * x;
}

bool ConversionCurveModel::valid(const std::vector<double>& p) const {
    return p[0] > 0.0 && p[0] <= 1.5 && p[1] >= 0.0;
}

std::vector<std::string> RabiPowerModel::param_names() const { return {"rate_max", "p_pi"}; }

double RabiPowerModel::eval(double x, const std::vector<double>& p) const {
    const double s = std::sin(0.5 * kPi * std::sqrt(x / p[1]));
    return p[0] * s * s;
}

void RabiPowerModel::jacobian(double x, const std::vector<double>& p, std::vector<double>& out) const {
    out.resize(2);
    const double theta = 0.5 * kPi * std::sqrt(x / p[1]);
    const double s = std::sin(theta);
    out[0] = s * s;
    out[1] = -p[0] * std::sin(2.0 * theta) * theta / (2.0 * p[1]);
}

bool RabiPowerModel::valid(const std::vector<double>& p) const { return p[0] > 0.0 && p[1] > 0.0; }

std::vector<std::string> SaturationPowerModel::param_names() const { return {"rate_max", "p_sat"}; }

double SaturationPowerModel::eval(double x, const std::vector<double>& p) const {
    return p[0] * x / (x + p[1]);
}

void SaturationPowerModel::jacobian(double x, const std::vector<double>& p, std::vector<double>& out) const {
    out.resize(2);
    out[0] = x / (x + p[1]);
    out[1] = -p[0] * x / ((x + p[1]) * (x + p[1]));
}

bool SaturationPowerModel::valid(const std::vector<double>& p) const { return p[0] > 0.0 && p[1] > 0.0; }

}  // namespace qdsim
