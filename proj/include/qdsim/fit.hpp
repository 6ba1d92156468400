#pragma once

// Damped Gauss-Newton (Levenberg-Marquardt) weighted least squares with the
// fit models used by the analysis layer. Analytic Jacobians throughout.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "qdsim/histogram.hpp"

namespace qdsim {

struct FitReport {
    std::string model;
    std::map<std::string, double> params;
    std::map<std::string, double> sigmas;
    double residual_norm = 0.0;  // sqrt(chi^2) with the supplied weights
    int iterations = 0;
    bool converged = false;
};

// Model interface: y = f(x; p) with analytic partial derivatives.
class FitModel {
public:
    virtual ~FitModel() = default;
    virtual std::vector<std::string> param_names() const = 0;
    virtual double eval(double x, const std::vector<double>& p) const = 0;
    virtual void jacobian(double x, const std::vector<double>& p, std::vector<double>& out) const = 0;
    // Reject parameter vectors that leave the model's domain.
    virtual bool valid(const std::vector<double>& p) const { return true; }
};

struct LmOptions {
    double lambda0 = 1e-3;
    double lambda_up = 10.0;
    double lambda_down = 10.0;
    int max_iterations = 200;
    double rel_tolerance = 1e-10;
};

// Weighted LM: minimizes sum_i w_i (y_i - f(x_i;p))^2. Parameter sigmas from
// the inverse Gauss-Newton Hessian at the optimum.
FitReport lm_fit(const FitModel& model, const std::vector<double>& xs, const std::vector<double>& ys,
                 const std::vector<double>& ws, std::vector<double> p0, const LmOptions& opts = {});

// A * exp(-t/T1) * (1 + v*cos(2*pi*delta*t + phi)) + C   (t in ns)
class LifetimeBeatModel : public FitModel {
public:
    std::vector<std::string> param_names() const override;
    double eval(double x, const std::vector<double>& p) const override;
    void jacobian(double x, const std::vector<double>& p, std::vector<double>& out) const override;
    bool valid(const std::vector<double>& p) const override;
};

// eta_max * sin^2(sqrt(eta_nor*P)*L) with fixed L (P in W, L in cm)
class ConversionCurveModel : public FitModel {
public:
    explicit ConversionCurveModel(double length_cm) : length_cm_(length_cm) {}
    std::vector<std::string> param_names() const override;
    double eval(double x, const std::vector<double>& p) const override;
    void jacobian(double x, const std::vector<double>& p, std::vector<double>& out) const override;
    bool valid(const std::vector<double>& p) const override;

private:
    double length_cm_;
};

// rate_max * sin^2((pi/2)*sqrt(P/P_pi))
class RabiPowerModel : public FitModel {
public:
    std::vector<std::string> param_names() const override;
    double eval(double x, const std::vector<double>& p) const override;
    void jacobian(double x, const std::vector<double>& p, std::vector<double>& out) const override;
    bool valid(const std::vector<double>& p) const override;
};

// rate_max * P / (P + P_sat)
class SaturationPowerModel : public FitModel {
public:
    std::vector<std::string> param_names() const override;
    double eval(double x, const std::vector<double>& p) const override;
    void jacobian(double x, const std::vector<double>& p, std::vector<double>& out) const override;
    bool valid(const std::vector<double>& p) const override;
};

}  // namespace qdsim
