#include "qdsim/bench.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "qdsim/rng.hpp"

namespace qdsim {

void DetectorParams::validate() const {
    if (efficiency < 0.0 || efficiency > 1.0) throw std::domain_error("detector: efficiency must be in [0,1]");
    if (dark_rate_hz < 0.0) throw std::domain_error("detector: dark rate must be non-negative");
    if (jitter_sigma_ps < 0.0) throw std::domain_error("detector: jitter must be non-negative");
    if (dead_time_ps < 0.0) throw std::domain_error("detector: dead time must be non-negative");
}

void HomConfig::validate() const {
    if (!(delay_ps > 0.0)) throw std::domain_error("hom: delay must be positive");
    if (!(splitter_ratio > 0.0) || !(splitter_ratio < 1.0))
        throw std::domain_error("hom: splitter ratio must be in (0,1)");
}

double two_photon_overlap(const PhotonRecord& p1, const PhotonRecord& p2, const EmitterParams& params) {
    if (p1.pol != p2.pol) return 0.0;
    const double gamma = 1.0 / params.t1_ns;
    const double gamma_tot = gamma + 2.0 * params.gamma_fast_ghz;
    const double d_factor = gamma / gamma_tot;
    const double domega = kTwoPi * (p1.nu_offset_ghz - p2.nu_offset_ghz);
    const double l_factor = gamma_tot * gamma_tot / (gamma_tot * gamma_tot + domega * domega);
    return d_factor * l_factor;
}

namespace {

struct RawClick {
    int64_t t_ps;
    uint64_t order;  // deterministic tiebreak for equal timestamps
};

ClickStream finalize_clicks(std::vector<RawClick>& raw, double dead_time_ps, uint8_t channel) {
    std::sort(raw.begin(), raw.end(), [](const RawClick& a, const RawClick& b) {
        return a.t_ps != b.t_ps ? a.t_ps < b.t_ps : a.order < b.order;
    });
    ClickStream out;
    out.reserve(raw.size());
    const int64_t dead = std::llround(dead_time_ps);
    int64_t last = std::numeric_limits<int64_t>::min();
    for (const RawClick& c : raw) {
        if (c.t_ps < 0) continue;  // jitter ahead of the acquisition window
        if (last != std::numeric_limits<int64_t>::min() && c.t_ps - last < dead) continue;
        out.push_back({c.t_ps, channel});
        last = c.t_ps;
    }
    return out;
}

}  // namespace

ClickStream detect(const PhotonStream& arrivals, const DetectorParams& det, uint64_t seed, uint64_t salt,
                   RngPurpose det_purpose, RngPurpose dark_purpose, int64_t total_time_ps, uint8_t channel) {
    det.validate();
    const uint64_t key64 = derive_key(seed, salt);
    std::vector<RawClick> raw;
    raw.reserve(static_cast<size_t>(arrivals.size() * det.efficiency) + 16);

    // Thinning and jitter draws are keyed by the photon's pulse block so the
    // result does not depend on upstream threading. Interferometer delays can
    // interleave neighbouring blocks in time, so block streams are cached
    // rather than assumed contiguous.
    std::map<uint64_t, RngStream> streams;
    uint64_t order = 0;
    for (const PhotonRecord& ph : arrivals) {
        const uint64_t block = ph.pulse_index / kPulsesPerBlock;
        auto it = streams.find(block);
        if (it == streams.end())
            it = streams.emplace(block, RngStream(key64, det_purpose, block)).first;
        RngStream& s = it->second;
        const double u = s.uniform();
        const double z = s.normal();
        if (u < det.efficiency) {
            const int64_t t = ph.t_ps + std::llround(det.jitter_sigma_ps * z);
            raw.push_back({t, order++});
        }
    }

    if (det.dark_rate_hz > 0.0 && total_time_ps > 0) {
        const double block_span_ps = 1e9;  // 1 ms dark-count windows
        const uint64_t n_blocks = static_cast<uint64_t>(std::ceil(total_time_ps / block_span_ps));
        const double gap_ps = 1e12 / det.dark_rate_hz;
        for (uint64_t b = 0; b < n_blocks; ++b) {
            RngStream s(key64, dark_purpose, b);
            const double w0 = b * block_span_ps;
            const double w1 = std::min(static_cast<double>(total_time_ps), (b + 1) * block_span_ps);
            double t = w0 + s.exponential(gap_ps);
            while (t < w1) {
                raw.push_back({std::llround(t), order++});
                t += s.exponential(gap_ps);
            }
        }
    }
    return finalize_clicks(raw, det.dead_time_ps, channel);
}

std::pair<ClickStream, ClickStream> hbt_measure(const PhotonStream& photons, double splitter_ratio,
                                                const DetectorParams& det_a, const DetectorParams& det_b,
                                                uint64_t seed, uint64_t salt, int64_t total_time_ps) {
    if (splitter_ratio < 0.0 || splitter_ratio > 1.0)
        throw std::domain_error("hbt: splitter ratio must be in [0,1]");
    for (size_t i = 1; i < photons.size(); ++i)
        if (photons[i].t_ps < photons[i - 1].t_ps)
            throw std::invalid_argument("hbt_measure: input stream is not time-ordered");

    const uint64_t key64 = derive_key(seed, salt);
    PhotonStream to_a, to_b;
    size_t i = 0;
    while (i < photons.size()) {
        const uint64_t block = photons[i].pulse_index / kPulsesPerBlock;
        RngStream s(key64, RngPurpose::HbtRouting, block);
        while (i < photons.size() && photons[i].pulse_index / kPulsesPerBlock == block) {
            (s.uniform() < splitter_ratio ? to_a : to_b).push_back(photons[i]);
            ++i;
        }
    }
    ClickStream a = detect(to_a, det_a, seed, salt, RngPurpose::DetectorA, RngPurpose::DarkCountsA,
                           total_time_ps, 0);
    ClickStream b = detect(to_b, det_b, seed, salt, RngPurpose::DetectorB, RngPurpose::DarkCountsB,
                           total_time_ps, 1);
    return {std::move(a), std::move(b)};
}

std::pair<ClickStream, ClickStream> hom_measure(const PhotonStream& photons, const HomConfig& config,
                                                const DetectorParams& det_a, const DetectorParams& det_b,
                                                const EmitterParams& params, uint64_t seed, uint64_t salt,
                                                int64_t total_time_ps) {
    config.validate();
    for (size_t i = 1; i < photons.size(); ++i)
        if (photons[i].t_ps < photons[i - 1].t_ps)
            throw std::invalid_argument("hom_measure: input stream is not time-ordered");

    const uint64_t key64 = derive_key(seed, salt);
    const int64_t delay = std::llround(config.delay_ps);

    // Interferometer arms: long arm adds the delay; the cross configuration
    // rotates the long-arm polarization.
    PhotonStream at_splitter;
    at_splitter.reserve(photons.size());
    size_t i = 0;
    while (i < photons.size()) {
        const uint64_t block = photons[i].pulse_index / kPulsesPerBlock;
        RngStream s(key64, RngPurpose::HomRouting, block);
        while (i < photons.size() && photons[i].pulse_index / kPulsesPerBlock == block) {
            PhotonRecord rec = photons[i];
            if (s.uniform() < 0.5) {
                rec.t_ps += delay;
                if (config.polarization == HomPolarization::Cross)
                    rec.pol = rec.pol == Pol::H ? Pol::V : Pol::H;
            }
            at_splitter.push_back(rec);
            ++i;
        }
    }
    std::stable_sort(at_splitter.begin(), at_splitter.end(),
                     [](const PhotonRecord& x, const PhotonRecord& y) { return x.t_ps < y.t_ps; });

    // Output splitter: photons within the coincidence window pair up and
    // bunch with probability equal to their wavepacket overlap. Beyond
    // 10*T1 the overlap is exponentially negligible.
    const int64_t pair_window = std::llround(ns_to_ps(10.0 * params.t1_ns));
    RngStream s_pair(key64, RngPurpose::HomPairing, 0);
    PhotonStream to_a, to_b;
    to_a.reserve(at_splitter.size() / 2);
    to_b.reserve(at_splitter.size() / 2);
    auto route_single = [&](const PhotonRecord& rec) {
        (s_pair.uniform() < config.splitter_ratio ? to_a : to_b).push_back(rec);
    };
    const PhotonRecord* pending = nullptr;
    for (const PhotonRecord& rec : at_splitter) {
        if (pending == nullptr) {
            pending = &rec;
            continue;
        }
        if (rec.t_ps - pending->t_ps < pair_window) {
            const double m = two_photon_overlap(*pending, rec, params);
            if (s_pair.uniform() < m) {
                // bunched: both photons exit the same random port
                PhotonStream& port = s_pair.uniform() < config.splitter_ratio ? to_a : to_b;
                port.push_back(*pending);
                port.push_back(rec);
            } else {
                route_single(*pending);
                route_single(rec);
            }
            pending = nullptr;
        } else {
            route_single(*pending);
            pending = &rec;
        }
    }
    if (pending != nullptr) route_single(*pending);

    auto by_time = [](const PhotonRecord& x, const PhotonRecord& y) { return x.t_ps < y.t_ps; };
    std::stable_sort(to_a.begin(), to_a.end(), by_time);
    std::stable_sort(to_b.begin(), to_b.end(), by_time);

    ClickStream a = detect(to_a, det_a, seed, salt, RngPurpose::DetectorA, RngPurpose::DarkCountsA,
                           total_time_ps, 0);
    ClickStream b = detect(to_b, det_b, seed, salt, RngPurpose::DetectorB, RngPurpose::DarkCountsB,
                           total_time_ps, 1);
    return {std::move(a), std::move(b)};
}

}  // namespace qdsim
