#include "qdsim/conversion.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "qdsim/emitter.hpp"
#include "qdsim/errors.hpp"

namespace qdsim {

void ConversionParams::validate() const {
    if (eta_nor_per_w_cm2 < 0.0) throw std::domain_error("conversion: eta_nor must be non-negative");
    if (length_cm < 0.0) throw std::domain_error("conversion: waveguide length must be non-negative");
    for (double f : {eta_max_internal, in_coupling, fibre_coupling, filter_transmission}) {
        if (f < 0.0 || f > 1.0) throw std::domain_error("conversion: efficiencies must be in [0,1]");
    }
    if (noise_coeff_hz_per_mw < 0.0) throw std::domain_error("conversion: noise coefficient must be non-negative");
    if (noise_bandwidth_ghz < 0.0) throw std::domain_error("conversion: noise bandwidth must be non-negative");
    if (seed_power_mw < 0.0) throw std::domain_error("conversion: seed power must be non-negative");
}

void SeedLaser::validate() const {
    if (n_modes < 1) throw std::domain_error("seed laser: need at least one mode");
    if (!(fsr_ghz > 0.0)) throw std::domain_error("seed laser: FSR must be positive");
    if (envelope_fwhm_ghz < 0.0) throw std::domain_error("seed laser: envelope width must be non-negative");
    if (!(mode_fluctuation_time_ns > 0.0))
        throw std::domain_error("seed laser: mode fluctuation time must be positive");
    if (!(mode_concentration > 0.0))
        throw std::domain_error("seed laser: mode concentration must be positive");
}

double internal_efficiency(double seed_power_w, const ConversionParams& params) {
    if (seed_power_w < 0.0) throw std::domain_error("internal_efficiency: negative seed power");
    const double s = std::sin(std::sqrt(params.eta_nor_per_w_cm2 * seed_power_w) * params.length_cm);
    return params.eta_max_internal * s * s;
}

double optimal_seed_power_w(const ConversionParams& params) {
    if (!(params.eta_nor_per_w_cm2 > 0.0) || !(params.length_cm > 0.0))
        throw std::domain_error("optimal_seed_power: eta_nor and L must be positive");
    const double q = kPi / (2.0 * params.length_cm);
    return q * q / params.eta_nor_per_w_cm2;
}

double external_efficiency(double seed_power_w, const ConversionParams& params) {
    return internal_efficiency(seed_power_w, params) * params.in_coupling * params.fibre_coupling *
           params.filter_transmission;
}

double noise_rate_hz(double seed_power_mw, const ConversionParams& params) {
    if (seed_power_mw < 0.0) throw std::domain_error("noise_rate: negative seed power");
    return params.noise_coeff_hz_per_mw * seed_power_mw;
}

// --- Seed multimode jitter ------------------------------------------------

SeedModeSampler::SeedModeSampler(const SeedLaser& laser, uint64_t key64) : laser_(laser), key_(key64) {
    laser_.validate();
    envelope_.resize(laser_.n_modes);
    const double sg = laser_.envelope_fwhm_ghz / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    double sum = 0.0;
    for (int k = 0; k < laser_.n_modes; ++k) {
        const double x = mode_offset_ghz(k);
        envelope_[k] = sg > 0.0 ? std::exp(-0.5 * x * x / (sg * sg)) : (x == 0.0 ? 1.0 : 0.0);
        sum += envelope_[k];
    }
    if (sum <= 0.0) {  // degenerate envelope: fall back to the center mode
        envelope_.assign(laser_.n_modes, 0.0);
        envelope_[laser_.n_modes / 2] = 1.0;
        sum = 1.0;
    }
    for (double& w : envelope_) w /= sum;
    cdf_.resize(laser_.n_modes);
}

double SeedModeSampler::mode_offset_ghz(int index) const {
    return (index - laser_.n_modes / 2) * laser_.fsr_ghz;
}

void SeedModeSampler::load_epoch(int64_t epoch) {
    // Dirichlet(concentration * envelope): instantaneous mode powers whose
    // expectation stays on the envelope.
    RngStream s(key_, RngPurpose::SeedModeWeights, static_cast<uint64_t>(epoch));
    double sum = 0.0;
    for (int k = 0; k < laser_.n_modes; ++k) {
        const double alpha = laser_.mode_concentration * envelope_[k];
        const double g = alpha > 0.0 ? s.gamma(alpha) : 0.0;
        cdf_[k] = g;
        sum += g;
    }
    if (sum <= 0.0) {
        cdf_.assign(laser_.n_modes, 0.0);
        cdf_[laser_.n_modes / 2] = 1.0;
        sum = 1.0;
    }
    double acc = 0.0;
    for (int k = 0; k < laser_.n_modes; ++k) {
        acc += cdf_[k] / sum;
        cdf_[k] = acc;
    }
    cdf_.back() = 1.0;
    current_epoch_ = epoch;
}

double SeedModeSampler::offset_at(int64_t t_ps, double draw_uniform) {
    if (laser_.n_modes == 1) return 0.0;
    const int64_t tau_ps = std::llround(ns_to_ps(laser_.mode_fluctuation_time_ns));
    const int64_t epoch = t_ps / std::max<int64_t>(tau_ps, 1);
    if (epoch != current_epoch_) load_epoch(epoch);
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), draw_uniform);
    const int k = std::min<int>(static_cast<int>(it - cdf_.begin()), laser_.n_modes - 1);
    return mode_offset_ghz(k);
}

// --- Stream conversion ----------------------------------------------------

PhotonStream convert_stream(const PhotonStream& photons, const ConversionParams& params,
                            const SeedLaser& laser, uint64_t seed, uint64_t salt, double period_ps,
                            int64_t total_time_ps, int threads) {
    params.validate();
    laser.validate();
    for (size_t i = 1; i < photons.size(); ++i)
        if (photons[i].t_ps < photons[i - 1].t_ps)
            throw std::invalid_argument("convert_stream: input stream is not time-ordered");

    const uint64_t key64 = derive_key(seed, salt);
    const double eta = external_efficiency(1e-3 * params.seed_power_mw, params);
    const double noise_hz = noise_rate_hz(params.seed_power_mw, params);
    const double block_span_ps = static_cast<double>(kPulsesPerBlock) * period_ps;
    const uint64_t n_blocks =
        std::max<uint64_t>(1, static_cast<uint64_t>(std::ceil(total_time_ps / block_span_ps)));

    // Input ranges per pulse block (pulse_index is monotone with time).
    std::vector<std::pair<size_t, size_t>> ranges(n_blocks, {0, 0});
    {
        size_t i = 0;
        for (uint64_t b = 0; b < n_blocks; ++b) {
            const size_t begin = i;
            while (i < photons.size() && photons[i].pulse_index / kPulsesPerBlock == b) ++i;
            ranges[b] = {begin, i};
        }
        if (i != photons.size())
            throw std::invalid_argument("convert_stream: photon pulse_index beyond total_time");
    }

    std::vector<PhotonStream> out_blocks(n_blocks);
    auto process_block = [&](uint64_t b) {
        RngStream s_thin(key64, RngPurpose::ConvertThinning, b);
        RngStream s_noise(key64, RngPurpose::ConvertNoise, b);
        SeedModeSampler modes(laser, key64);
        PhotonStream survivors;
        for (size_t i = ranges[b].first; i < ranges[b].second; ++i) {
            const double u_keep = s_thin.uniform();
            const double u_mode = s_thin.uniform();
            if (u_keep >= eta) continue;
            PhotonRecord rec = photons[i];
            rec.nu_offset_ghz += modes.offset_at(rec.t_ps, u_mode);
            survivors.push_back(rec);
        }
        // In-band conversion noise: homogeneous Poisson arrivals over this
        // block's time window.
        PhotonStream noise;
        if (noise_hz > 0.0) {
            const double w0 = b * block_span_ps;
            const double w1 = std::min(static_cast<double>(total_time_ps), (b + 1) * block_span_ps);
            const double gap_ps = 1e12 / noise_hz;
            double t = w0 + s_noise.exponential(gap_ps);
            while (t < w1) {
                PhotonRecord rec;
                rec.t_ps = std::llround(t);
                rec.nu_offset_ghz = (s_noise.uniform() - 0.5) * params.noise_bandwidth_ghz;
                rec.pol = s_noise.uniform() < 0.5 ? Pol::H : Pol::V;
                rec.origin = Origin::Noise;
                rec.pulse_index = static_cast<uint64_t>(t / period_ps);
                noise.push_back(rec);
                t += s_noise.exponential(gap_ps);
            }
        }
        PhotonStream merged;
        merged.resize(survivors.size() + noise.size());
        std::merge(survivors.begin(), survivors.end(), noise.begin(), noise.end(), merged.begin(),
                   [](const PhotonRecord& x, const PhotonRecord& y) { return x.t_ps < y.t_ps; });
        out_blocks[b] = std::move(merged);
    };

    if (threads <= 1 || n_blocks == 1) {
        for (uint64_t b = 0; b < n_blocks; ++b) process_block(b);
    } else {
        std::vector<std::thread> pool;
        std::atomic<uint64_t> next{0};
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&]() {
                for (;;) {
                    const uint64_t b = next.fetch_add(1);
                    if (b >= n_blocks) return;
                    process_block(b);
                }
            });
        for (auto& th : pool) th.join();
    }

    PhotonStream out;
    size_t total = 0;
    for (const auto& blk : out_blocks) total += blk.size();
    out.reserve(total);
    for (auto& blk : out_blocks) out.insert(out.end(), blk.begin(), blk.end());
    return out;
}

}  // namespace qdsim
