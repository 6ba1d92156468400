#pragma once

// Units and closed-form photonics relations shared by the whole toolkit.
//
// Conventions used everywhere:
//   wavelengths  nm
//   frequencies  GHz (= 1/ns); angular frequencies are 2*pi*GHz in rad/ns
//   times        ns for parameters, integer ps for event timestamps
//   powers       mW in configs, W inside the conversion-efficiency formulas
// The speed of light appears only in this header.

#include <cmath>
#include <stdexcept>

namespace qdsim {

inline constexpr double kSpeedOfLightMps = 299792458.0;
// c expressed in nm*GHz so that f[GHz] = kSpeedOfLightNmGhz / lambda[nm].
inline constexpr double kSpeedOfLightNmGhz = kSpeedOfLightMps;  // 2.99792458e8
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

struct Wavelength {
    double nm = 0.0;
    explicit Wavelength(double value_nm) : nm(value_nm) {
        if (!(nm > 0.0)) throw std::domain_error("wavelength must be positive");
    }
};

struct Frequency {
    double ghz = 0.0;  // signed when used as a detuning offset
    explicit Frequency(double value_ghz) : ghz(value_ghz) {}
};

struct Duration {
    double ns = 0.0;
    explicit Duration(double value_ns) : ns(value_ns) {}
};

inline Frequency to_frequency(Wavelength w) { return Frequency(kSpeedOfLightNmGhz / w.nm); }

inline Wavelength to_wavelength(Frequency f) {
    if (!(f.ghz > 0.0)) throw std::domain_error("frequency must be positive to convert to wavelength");
    return Wavelength(kSpeedOfLightNmGhz / f.ghz);
}

// Difference-frequency generation output wavelength from energy conservation:
// 1/lambda_out = 1/lambda_in - 1/lambda_seed.
inline Wavelength dfg_output_wavelength(Wavelength lambda_in, Wavelength lambda_seed) {
    if (!(lambda_seed.nm > lambda_in.nm))
        throw std::domain_error("dfg_output_wavelength: no positive difference frequency (seed must be redder than input)");
    const double inv_out = 1.0 / lambda_in.nm - 1.0 / lambda_seed.nm;
    return Wavelength(1.0 / inv_out);
}

// Lorentzian FWHM of a transition with coherence time T2: 1/(pi*T2).
inline Frequency linewidth_fwhm(Duration t2) {
    if (!(t2.ns > 0.0)) throw std::domain_error("linewidth_fwhm: T2 must be positive");
    return Frequency(1.0 / (kPi * t2.ns));
}

// Transform-limited linewidth of a lifetime-T1 emitter, realized as T2 = 2*T1.
inline Frequency transform_limited_fwhm(Duration t1) {
    if (!(t1.ns > 0.0)) throw std::domain_error("transform_limited_fwhm: T1 must be positive");
    return Frequency(1.0 / (kTwoPi * t1.ns));
}

inline double ns_to_ps(double ns) { return ns * 1e3; }
inline double ps_to_ns(double ps) { return ps * 1e-3; }

}  // namespace qdsim
