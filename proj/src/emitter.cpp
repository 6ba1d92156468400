#include "qdsim/emitter.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>
#include <vector>

#include "qdsim/errors.hpp"
#include "qdsim/rng.hpp"

namespace qdsim {

void EmitterParams::validate() const {
    if (!(t1_ns > 0.0)) throw std::domain_error("emitter: T1 must be positive");
    if (gamma_fast_ghz < 0.0) throw std::domain_error("emitter: gamma_fast must be non-negative");
    if (sigma_sd_ghz < 0.0) throw std::domain_error("emitter: sigma_sd must be non-negative");
    if (sigma_sd_ghz > 0.0 && !(tau_c_ns > 0.0))
        throw std::domain_error("emitter: tau_c must be positive when spectral diffusion is on");
    if (delta_fss_ghz < 0.0) throw std::domain_error("emitter: delta_fss must be non-negative");
    if (beat_visibility < 0.0 || beat_visibility > 1.0)
        throw std::domain_error("emitter: beat_visibility must be in [0,1]");
    if (epsilon_multi < 0.0 || epsilon_multi >= 0.5)
        throw std::domain_error("emitter: epsilon_multi must be in [0, 0.5)");
    if (multi_detuning_ghz < 0.0) throw std::domain_error("emitter: multi_detuning must be non-negative");
    if (tau_blink_on_ns < 0.0 || tau_blink_off_ns < 0.0)
        throw std::domain_error("emitter: blinking dwell times must be non-negative");
    if ((tau_blink_on_ns > 0.0) != (tau_blink_off_ns > 0.0))
        throw std::domain_error("emitter: blinking needs both dwell times (or neither)");
    if (beta_nir < 0.0 || beta_nir > 1.0) throw std::domain_error("emitter: beta_nir must be in [0,1]");
    if (!std::isfinite(total_fwhm_ghz())) throw std::domain_error("emitter: total linewidth not finite");
}

void ExcitationConfig::validate() const {
    if (power_mw < 0.0) throw std::domain_error("excitation: power must be non-negative");
    if (!(reference_power_mw > 0.0)) throw std::domain_error("excitation: reference power must be positive");
    if (!(rep_rate_mhz > 0.0)) throw std::domain_error("excitation: repetition rate must be positive");
    if (n_pulses < 1) throw std::domain_error("excitation: n_pulses must be >= 1");
}

double excitation_probability(const ExcitationConfig& config) {
    if (config.power_mw < 0.0) throw std::domain_error("excitation_probability: negative power");
    if (!(config.reference_power_mw > 0.0))
        throw std::domain_error("excitation_probability: reference power must be positive");
    const double ratio = config.power_mw / config.reference_power_mw;
    if (config.mode == ExcitationMode::ResonantRabi) {
        const double s = std::sin(0.5 * kPi * std::sqrt(ratio));
        return s * s;
    }
    return ratio / (ratio + 1.0);
}

double beat_envelope(double t_ns, const EmitterParams& params) {
    if (t_ns < 0.0) throw std::domain_error("beat_envelope: t must be non-negative");
    const double v = params.beat_visibility;
    if (v < 0.0 || v > 1.0) throw std::domain_error("beat_envelope: visibility must be in [0,1]");
    return std::exp(-t_ns / params.t1_ns) * (1.0 + v * std::cos(kTwoPi * params.delta_fss_ghz * t_ns)) /
           (1.0 + v);
}

namespace {

// One pulse block: all stochastic processes draw from block-local streams so
// output is independent of how blocks are scheduled over threads.
void emit_block(const EmitterParams& params, const ExcitationConfig& exc, uint64_t key64,
                uint64_t block, PhotonStream& out) {
    RngStream s_emit(key64, RngPurpose::Emission, block);
    RngStream s_ou(key64, RngPurpose::SpectralDiffusion, block);
    RngStream s_blink(key64, RngPurpose::Blinking, block);

    const double period_ps = exc.period_ps();
    const uint64_t first = block * kPulsesPerBlock;
    const uint64_t last = std::min(first + kPulsesPerBlock, exc.n_pulses);
    const double p_exc = excitation_probability(exc);
    const double t1_ps = ns_to_ps(params.t1_ns);
    const double v = params.beat_visibility;
    const double delta_per_ps = params.delta_fss_ghz * 1e-3;  // beat cycles per ps

    // Blinking telegraph. Exponential dwells are memoryless, so initializing
    // the state from the stationary distribution at the block edge gives the
    // exact stationary process.
    const bool blinking = params.blinking_enabled();
    bool blink_on = true;
    double next_toggle_ps = std::numeric_limits<double>::infinity();
    const double tau_on_ps = ns_to_ps(params.tau_blink_on_ns);
    const double tau_off_ps = ns_to_ps(params.tau_blink_off_ns);
    if (blinking) {
        blink_on = s_blink.uniform() < params.p_on();
        next_toggle_ps = static_cast<double>(first) * period_ps +
                         s_blink.exponential(blink_on ? tau_on_ps : tau_off_ps);
    }

    // OU spectral diffusion, re-seeded per block from the stationary
    // distribution (documented approximation; block span >> tau_c).
    const double sigma = params.sigma_sd_ghz;
    const double tau_c_ps = ns_to_ps(params.tau_c_ns);
    bool ou_started = false;
    double ou_x = 0.0;
    double ou_t_ps = 0.0;
    auto ou_sample = [&](double t_ps) -> double {
        if (sigma <= 0.0) return 0.0;
        if (!ou_started) {
            ou_x = sigma * s_ou.normal();
            ou_t_ps = t_ps;
            ou_started = true;
            return ou_x;
        }
        const double rho = std::exp(-(t_ps - ou_t_ps) / tau_c_ps);
        ou_x = ou_x * rho + sigma * std::sqrt(1.0 - rho * rho) * s_ou.normal();
        ou_t_ps = t_ps;
        return ou_x;
    };

    // Emission delay within the pulse: Exp(T1) density modulated by the
    // fine-structure beat, sampled by rejection under the Exp envelope.
    auto sample_delay_ps = [&]() -> double {
        for (;;) {
            const double e = s_emit.exponential(t1_ps);
            if (e >= period_ps) continue;  // truncated tail, ~exp(-47)
            if (v <= 0.0) return e;
            const double u = s_emit.uniform();
            if (u * (1.0 + v) <= 1.0 + v * std::cos(kTwoPi * delta_per_ps * e)) return e;
        }
    };

    for (uint64_t i = first; i < last; ++i) {
        const double pulse_t = static_cast<double>(i) * period_ps;
        if (blinking) {
            while (pulse_t >= next_toggle_ps) {
                blink_on = !blink_on;
                next_toggle_ps += s_blink.exponential(blink_on ? tau_on_ps : tau_off_ps);
            }
        }
        const double u_emit = s_emit.uniform();
        if (!blink_on || u_emit >= p_exc) continue;

        // Collection thinning first: unkept photons need no emission time and
        // no diffusion update (the OU process is Markov, so sampling it only
        // at surviving photons is exact). This is the hot path at percent-
        // level collection efficiencies.
        const bool has_multi = params.epsilon_multi > 0.0 && s_emit.uniform() < params.epsilon_multi;
        const bool keep_signal = params.beta_nir >= 1.0 || s_emit.uniform() < params.beta_nir;
        const bool keep_multi =
            has_multi && (params.beta_nir >= 1.0 || s_emit.uniform() < params.beta_nir);
        if (!keep_signal && !keep_multi) continue;

        double delays[2];
        Origin origins[2];
        int n = 0;
        if (keep_signal) {
            delays[n] = sample_delay_ps();
            origins[n] = Origin::Signal;
            ++n;
        }
        if (keep_multi) {
            delays[n] = sample_delay_ps();
            origins[n] = Origin::Multiphoton;
            ++n;
        }
        const double multi_detuning =
            keep_multi ? params.multi_detuning_ghz * s_emit.normal() : 0.0;
        if (n == 2 && delays[1] < delays[0]) {
            std::swap(delays[0], delays[1]);
            std::swap(origins[0], origins[1]);
        }
        for (int k = 0; k < n; ++k) {
            const double t_ps = pulse_t + delays[k];
            PhotonRecord rec;
            rec.t_ps = std::llround(t_ps);
            rec.nu_offset_ghz =
                ou_sample(t_ps) + (origins[k] == Origin::Multiphoton ? multi_detuning : 0.0);
            rec.pol = Pol::H;
            rec.origin = origins[k];
            rec.pulse_index = i;
            out.push_back(rec);
        }
    }
}

}  // namespace

void simulate_emission_blocks(const EmitterParams& params, const ExcitationConfig& excitation,
                              uint64_t seed, uint64_t salt, int threads, const PhotonSink& sink) {
    params.validate();
    excitation.validate();
    const uint64_t key64 = derive_key(seed, salt);
    const uint64_t n_blocks = (excitation.n_pulses + kPulsesPerBlock - 1) / kPulsesPerBlock;

    // Block span must dominate the slow timescales so per-block re-seeding of
    // the OU and telegraph processes is a faithful approximation.
    const double block_span_ns = ps_to_ns(static_cast<double>(kPulsesPerBlock) * excitation.period_ps());
    const double slow = std::max({params.sigma_sd_ghz > 0.0 ? params.tau_c_ns : 0.0,
                                  params.tau_blink_on_ns, params.tau_blink_off_ns});
    if (excitation.n_pulses > kPulsesPerBlock && slow > 0.1 * block_span_ns)
        throw std::domain_error("emitter: slow timescale exceeds a tenth of the RNG block span");

    if (threads < 1) threads = 1;
    std::vector<PhotonStream> results(n_blocks);
    if (threads == 1 || n_blocks == 1) {
        for (uint64_t b = 0; b < n_blocks; ++b) emit_block(params, excitation, key64, b, results[b]);
    } else {
        std::vector<std::thread> pool;
        std::atomic<uint64_t> next{0};
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back([&]() {
                for (;;) {
                    const uint64_t b = next.fetch_add(1);
                    if (b >= n_blocks) return;
                    emit_block(params, excitation, key64, b, results[b]);
                }
            });
        }
        for (auto& th : pool) th.join();
    }
    for (uint64_t b = 0; b < n_blocks; ++b) sink(b, std::move(results[b]));
}

PhotonStream simulate_emission(const EmitterParams& params, const ExcitationConfig& excitation,
                               uint64_t seed, uint64_t salt, int threads) {
    PhotonStream all;
    simulate_emission_blocks(params, excitation, seed, salt, threads,
                             [&all](uint64_t, PhotonStream&& block) {
                                 all.insert(all.end(), block.begin(), block.end());
                             });
    return all;
}

// --- Broadening calibration ---------------------------------------------

namespace {

// Lorentzian with unit peak and FWHM fl, evaluated at detuning x.
inline double lorentz_peak1(double x, double fl) {
    const double hw = 0.5 * fl;
    return hw * hw / (hw * hw + x * x);
}

// Voigt profile (unit-peak Lorentzian convolved with a normal of FWHM fg),
// trapezoid over the Gaussian.
double voigt_value(double x, double fl, double fg) {
    const double sg = fg / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    const int n = 1200;
    const double span = 8.0 * sg;
    const double h = 2.0 * span / n;
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double u = -span + i * h;
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        acc += w * std::exp(-0.5 * u * u / (sg * sg)) * lorentz_peak1(x - u, fl);
    }
    return acc;  // common normalization cancels in the FWHM search
}

}  // namespace

double voigt_fwhm_numeric(double fl_ghz, double fg_ghz) {
    if (fl_ghz < 0.0 || fg_ghz < 0.0) throw std::domain_error("voigt_fwhm: negative width");
    if (fg_ghz <= 1e-12) return fl_ghz;
    if (fl_ghz <= 1e-12) return fg_ghz;
    const double peak = voigt_value(0.0, fl_ghz, fg_ghz);
    double lo = 0.0, hi = fl_ghz + fg_ghz;
    while (voigt_value(hi, fl_ghz, fg_ghz) > 0.5 * peak) hi *= 1.5;
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (voigt_value(mid, fl_ghz, fg_ghz) > 0.5 * peak)
            lo = mid;
        else
            hi = mid;
    }
    return lo + hi;  // half-width at half max, doubled
}

double mean_pair_overlap(double t1_ns, double gamma_fast_ghz, double sigma_sd_ghz, double tau_c_ns,
                         double separation_ns) {
    const double gamma_rad = 1.0 / t1_ns;
    const double gamma_tot = gamma_rad + 2.0 * gamma_fast_ghz;
    const double d_factor = gamma_rad / gamma_tot;
    if (sigma_sd_ghz <= 0.0) return d_factor;
    // Frequency difference of an OU pair `separation` apart: N(0, s^2).
    const double s =
        sigma_sd_ghz * std::sqrt(2.0 * (1.0 - std::exp(-separation_ns / tau_c_ns)));
    if (s <= 1e-15) return d_factor;
    const int n = 4000;
    const double span = 10.0 * s;
    const double h = 2.0 * span / n;
    double acc = 0.0, norm = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double x = -span + i * h;
        const double w = ((i == 0 || i == n) ? 0.5 : 1.0) * std::exp(-0.5 * x * x / (s * s));
        const double omega = kTwoPi * x;
        acc += w * gamma_tot * gamma_tot / (gamma_tot * gamma_tot + omega * omega);
        norm += w;
    }
    return d_factor * acc / norm;
}

BroadeningSolution calibrate_broadening(const BroadeningTargets& t) {
    if (!(t.t1_ns > 0.0)) throw CalibrationError("calibrate_broadening: T1 must be positive");
    if (!(t.target_overlap > 0.0) || t.target_overlap > 1.0)
        throw CalibrationError("calibrate_broadening: overlap target must be in (0,1]");
    const double transform = 1.0 / (kTwoPi * t.t1_ns);
    if (t.target_fwhm_ghz < transform - 1e-9)
        throw CalibrationError("calibrate_broadening: target linewidth below the transform limit");

    const double gamma_max = kPi * (t.target_fwhm_ghz - transform);

    // For a given fast-dephasing rate, the Gaussian width is fixed by the
    // linewidth target (numeric Voigt FWHM, bisection on the Gaussian part).
    auto sigma_for = [&](double gamma) -> double {
        const double fl = transform + gamma / kPi;
        double lo = 0.0, hi = t.target_fwhm_ghz;
        if (voigt_fwhm_numeric(fl, hi) < t.target_fwhm_ghz) hi = 2.0 * t.target_fwhm_ghz;
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (voigt_fwhm_numeric(fl, mid) < t.target_fwhm_ghz)
                lo = mid;
            else
                hi = mid;
        }
        const double fg = 0.5 * (lo + hi);
        return fg / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    };

    auto overlap_of = [&](double gamma) -> double {
        return mean_pair_overlap(t.t1_ns, gamma, sigma_for(gamma), t.tau_c_ns, t.pair_separation_ns);
    };

    BroadeningSolution sol;
    if (gamma_max <= 1e-12) {
        // Transform-limited target: no extra broadening available.
        if (std::abs(t.target_overlap - 1.0) > 5e-3)
            throw CalibrationError(
                "calibrate_broadening: transform-limited linewidth forces unit overlap; "
                "requested overlap is unreachable");
        sol.gamma_fast_ghz = 0.0;
        sol.sigma_sd_ghz = 0.0;
        sol.fwhm_residual_ghz = voigt_fwhm_numeric(transform, 0.0) - t.target_fwhm_ghz;
        sol.overlap_residual = 1.0 - t.target_overlap;
        return sol;
    }

    const double m_slow = overlap_of(0.0);       // all broadening in slow diffusion
    const double m_fast = overlap_of(gamma_max);  // all broadening in fast dephasing
    if (t.target_overlap > m_slow + 5e-4)
        throw CalibrationError(
            "calibrate_broadening: overlap target exceeds the maximum compatible with the "
            "linewidth target (" + std::to_string(m_slow) + " at gamma_fast = 0)");
    if (t.target_overlap < m_fast - 5e-4)
        throw CalibrationError(
            "calibrate_broadening: overlap target below the minimum compatible with the "
            "linewidth target (" + std::to_string(m_fast) + " at pure fast dephasing)");

    double lo = 0.0, hi = gamma_max;
    for (int it = 0; it < 70; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (overlap_of(mid) > t.target_overlap)
            lo = mid;
        else
            hi = mid;
    }
    sol.gamma_fast_ghz = 0.5 * (lo + hi);
    sol.sigma_sd_ghz = sigma_for(sol.gamma_fast_ghz);
    const double fl = transform + sol.gamma_fast_ghz / kPi;
    const double fg = 2.0 * std::sqrt(2.0 * std::log(2.0)) * sol.sigma_sd_ghz;
    sol.fwhm_residual_ghz = voigt_fwhm_numeric(fl, fg) - t.target_fwhm_ghz;
    sol.overlap_residual = overlap_of(sol.gamma_fast_ghz) - t.target_overlap;
    return sol;
}

}  // namespace qdsim
