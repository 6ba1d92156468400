#pragma once

// Difference-frequency conversion stage: sin^2 internal efficiency, fixed
// loss budget, multimode-seed frequency jitter and the linear Poissonian
// noise floor.

#include <cstdint>

#include "qdsim/records.hpp"
#include "qdsim/rng.hpp"
#include "qdsim/units.hpp"

namespace qdsim {

struct ConversionParams {
    double eta_nor_per_w_cm2 = 0.44;  // normalized conversion efficiency
    double length_cm = 4.8;           // waveguide length
    double eta_max_internal = 0.567;  // peak internal conversion efficiency
    double in_coupling = 0.83;        // waveguide in-coupling transmission
    double fibre_coupling = 0.86;     // telecom fibre coupling
    double filter_transmission = 0.94;
    double noise_coeff_hz_per_mw = 12.0;  // in-band noise photons per mW of seed
    double noise_bandwidth_ghz = 349.4;   // 2.8 nm bandpass at 1550 nm
    double seed_power_mw = 0.0;

    void validate() const;
};

struct SeedLaser {
    double wavelength_nm = 2401.0;
    double fsr_ghz = 0.177;           // longitudinal mode spacing
    double envelope_fwhm_ghz = 4.0;   // gain envelope over the mode comb
    int n_modes = 22;
    double mode_fluctuation_time_ns = 1000.0;  // mode-power redistribution timescale
    double mode_concentration = 1.0;  // Dirichlet total concentration of the weights

    void validate() const;
};

// Eq.-style internal efficiency eta_max*sin^2(sqrt(eta_nor*P)*L), P in watts.
double internal_efficiency(double seed_power_w, const ConversionParams& params);

// Seed power of the first efficiency maximum: (pi/(2L))^2 / eta_nor.
double optimal_seed_power_w(const ConversionParams& params);

// Internal efficiency times the external loss budget.
double external_efficiency(double seed_power_w, const ConversionParams& params);

// In-band noise photon rate in Hz for a seed power in mW.
double noise_rate_hz(double seed_power_mw, const ConversionParams& params);

// Per-epoch mode-power weights and per-photon mode draws. Weights are
// Dirichlet(concentration * envelope) so the long-run spectrum follows the
// envelope while instantaneous power concentrates in few modes.
class SeedModeSampler {
public:
    SeedModeSampler(const SeedLaser& laser, uint64_t key64);

    // Frequency offset (GHz, multiple of the FSR) seen by a photon converting
    // at time t_ps; `draw` supplies the per-photon uniform.
    double offset_at(int64_t t_ps, double draw_uniform);

    // Stationary envelope weights (used by tests as the long-run oracle).
    const std::vector<double>& envelope_weights() const { return envelope_; }
    double mode_offset_ghz(int index) const;

private:
    void load_epoch(int64_t epoch);

    SeedLaser laser_;
    uint64_t key_;
    std::vector<double> envelope_;
    std::vector<double> cdf_;
    int64_t current_epoch_ = -1;
};

// Applies conversion to a time-ordered photon stream: Bernoulli thinning at
// external_efficiency, seed-mode frequency jitter on survivors, and merged
// Poisson noise photons over [0, total_time_ps). Deterministic per seed for
// any thread count (blocks keyed by pulse index / time window).
PhotonStream convert_stream(const PhotonStream& photons, const ConversionParams& params,
                            const SeedLaser& laser, uint64_t seed, uint64_t salt,
                            double period_ps, int64_t total_time_ps, int threads = 1);

}  // namespace qdsim
