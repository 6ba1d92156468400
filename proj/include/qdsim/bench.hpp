#pragma once

// Virtual measurement bench: two-photon overlap, HBT and Hong-Ou-Mandel
// interferometers, and an SNSPD-style detector model.

#include <cstdint>
#include <utility>

#include "qdsim/emitter.hpp"
#include "qdsim/records.hpp"
#include "qdsim/rng.hpp"

namespace qdsim {

struct DetectorParams {
    double efficiency = 1.0;
    double dark_rate_hz = 0.0;
    double jitter_sigma_ps = 0.0;
    double dead_time_ps = 0.0;

    void validate() const;
};

enum class HomPolarization { Parallel, Cross };

struct HomConfig {
    double delay_ps = 12453.3001245;  // long-arm delay; one pulse period aligns the wavepackets
    HomPolarization polarization = HomPolarization::Parallel;
    double splitter_ratio = 0.5;

    void validate() const;
};

// Pair wavepacket overlap |<psi1|psi2>|^2 for exponential wavepackets with
// Markovian pure dephasing and a center-frequency difference:
//   M = D * L,  D = Gamma/(Gamma + 2*gamma_fast),
//   L = Gamma_tot^2 / (Gamma_tot^2 + (2*pi*dnu)^2),  Gamma_tot = Gamma + 2*gamma_fast
// with Gamma = 1/T1 in 1/ns and gamma_fast the dephasing rate in 1/ns.
// Polarization mismatch gives 0.
double two_photon_overlap(const PhotonRecord& p1, const PhotonRecord& p2, const EmitterParams& params);

// Detector model: efficiency thinning, Gaussian timing jitter, Poisson dark
// counts, then dead-time enforcement on the merged click sequence.
ClickStream detect(const PhotonStream& arrivals, const DetectorParams& det, uint64_t seed,
                   uint64_t salt, RngPurpose det_purpose, RngPurpose dark_purpose,
                   int64_t total_time_ps, uint8_t channel);

// 50/50 (or `splitter_ratio`) beam splitter followed by two detectors.
std::pair<ClickStream, ClickStream> hbt_measure(const PhotonStream& photons, double splitter_ratio,
                                                const DetectorParams& det_a, const DetectorParams& det_b,
                                                uint64_t seed, uint64_t salt, int64_t total_time_ps);

// Unbalanced Mach-Zehnder: each photon takes the long arm with probability
// 1/2 (+delay, polarization flipped in the cross configuration); photons
// meeting at the output splitter within 10*T1 are paired and bunch with
// probability two_photon_overlap(pair).
std::pair<ClickStream, ClickStream> hom_measure(const PhotonStream& photons, const HomConfig& config,
                                                const DetectorParams& det_a, const DetectorParams& det_b,
                                                const EmitterParams& params, uint64_t seed, uint64_t salt,
                                                int64_t total_time_ps);

}  // namespace qdsim
