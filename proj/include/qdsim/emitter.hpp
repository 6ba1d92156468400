#pragma once

// Pulsed quantum-dot emission: exponential wavepacket timing with a
// fine-structure beat, slow spectral diffusion (Ornstein-Uhlenbeck), fast
// pure dephasing, blinking, and rare same-pulse multiphoton events.

#include <cstdint>
#include <functional>

#include "qdsim/records.hpp"
#include "qdsim/units.hpp"

namespace qdsim {

struct EmitterParams {
    double t1_ns = 0.2622;           // radiative lifetime
    double gamma_fast_ghz = 0.0;     // fast pure-dephasing rate (1/ns)
    double sigma_sd_ghz = 0.0;       // RMS of slow spectral diffusion
    double tau_c_ns = 1000.0;        // spectral-diffusion correlation time
    double delta_fss_ghz = 4.807;    // fine-structure beat frequency
    double beat_visibility = 0.0;    // intensity-beat contrast in [0,1]
    double epsilon_multi = 0.0;      // per-pulse second-photon probability (given signal)
    double multi_detuning_ghz = 5.0; // RMS spectral detuning of multiphoton background
    double tau_blink_on_ns = 0.0;    // bright-state dwell; 0 disables blinking
    double tau_blink_off_ns = 0.0;   // dark-state dwell
    double beta_nir = 1.0;           // probability a photon reaches the collection fibre

    bool blinking_enabled() const { return tau_blink_on_ns > 0.0 && tau_blink_off_ns > 0.0; }
    double p_on() const {
        return blinking_enabled() ? tau_blink_on_ns / (tau_blink_on_ns + tau_blink_off_ns) : 1.0;
    }

    // Aggregate linewidth: Lorentzian part 1/(2*pi*T1) + gamma_fast/pi plus
    // the Gaussian contribution of the stationary diffusion, combined with
    // the Olivero-Longbothum Voigt approximation.
    double lorentzian_fwhm_ghz() const { return 1.0 / (kTwoPi * t1_ns) + gamma_fast_ghz / kPi; }
    double gaussian_fwhm_ghz() const { return 2.0 * std::sqrt(2.0 * std::log(2.0)) * sigma_sd_ghz; }
    double total_fwhm_ghz() const {
        const double fl = lorentzian_fwhm_ghz();
        const double fg = gaussian_fwhm_ghz();
        return 0.5346 * fl + std::sqrt(0.2166 * fl * fl + fg * fg);
    }

    void validate() const;
};

enum class ExcitationMode { ResonantRabi, OffResonantSaturation };

struct ExcitationConfig {
    ExcitationMode mode = ExcitationMode::ResonantRabi;
    double power_mw = 0.0;
    double reference_power_mw = 1.0;  // P_pi (resonant) or P_sat (off-resonant)
    double rep_rate_mhz = 80.3;
    uint64_t n_pulses = 0;

    double period_ps() const { return 1e6 / rep_rate_mhz; }
    void validate() const;
};

// Per-pulse excitation probability: sin^2((pi/2)*sqrt(P/P_pi)) for resonant
// driving, P/(P+P_sat) for off-resonant.
double excitation_probability(const ExcitationConfig& config);

// Time-resolved emission intensity shape (peak-normalized):
// exp(-t/T1)*(1 + v*cos(2*pi*delta_fss*t))/(1+v).
double beat_envelope(double t_ns, const EmitterParams& params);

// Number of pulses per RNG block; fixed so output is independent of threading.
inline constexpr uint64_t kPulsesPerBlock = 1u << 16;

// Sink receives blocks in increasing block order.
using PhotonSink = std::function<void(uint64_t block_index, PhotonStream&& photons)>;

// Generates the photon stream pulse by pulse. Deterministic for a fixed
// (seed, salt) for any thread count. Records are time-ordered.
void simulate_emission_blocks(const EmitterParams& params, const ExcitationConfig& excitation,
                              uint64_t seed, uint64_t salt, int threads, const PhotonSink& sink);

PhotonStream simulate_emission(const EmitterParams& params, const ExcitationConfig& excitation,
                               uint64_t seed, uint64_t salt = 0, int threads = 1);

// --- Broadening calibration ---------------------------------------------

struct BroadeningTargets {
    double t1_ns = 0.2622;
    double target_fwhm_ghz = 0.915;
    double target_overlap = 0.95;       // mean pair overlap at one pulse separation
    double pair_separation_ns = 12.4533001245;
    double tau_c_ns = 1000.0;
};

struct BroadeningSolution {
    double gamma_fast_ghz = 0.0;
    double sigma_sd_ghz = 0.0;
    double fwhm_residual_ghz = 0.0;
    double overlap_residual = 0.0;
};

// Numeric-integral FWHM of the Voigt profile with Lorentzian FWHM fl and
// Gaussian FWHM fg (used by the calibration; tests check it against an
// independent dense-convolution oracle).
double voigt_fwhm_numeric(double fl_ghz, double fg_ghz);

// Mean two-photon overlap for photons `separation_ns` apart given the
// broadening decomposition. Gauss-Hermite integral over the OU frequency
// difference.
double mean_pair_overlap(double t1_ns, double gamma_fast_ghz, double sigma_sd_ghz,
                         double tau_c_ns, double separation_ns);

// Finds (gamma_fast, sigma_sd) hitting the published linewidth and the mean
// short-delay two-photon overlap. Throws CalibrationError when infeasible.
BroadeningSolution calibrate_broadening(const BroadeningTargets& targets);

}  // namespace qdsim
