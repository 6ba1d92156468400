#pragma once

#include <cstdint>
#include <vector>

namespace qdsim {

enum class Pol : uint8_t { H = 0, V = 1 };
enum class Origin : uint8_t { Signal = 0, Multiphoton = 1, Noise = 2 };

// One photon travelling through the optical chain. Times are absolute ps;
// nu_offset is the instantaneous center-frequency offset from nominal in GHz.
struct PhotonRecord {
    int64_t t_ps = 0;
    double nu_offset_ghz = 0.0;
    Pol pol = Pol::H;
    Origin origin = Origin::Signal;
    uint64_t pulse_index = 0;
};

// A detector click on one time-tagger channel.
struct ClickRecord {
    int64_t t_ps = 0;
    uint8_t channel = 0;
};

using PhotonStream = std::vector<PhotonRecord>;
using ClickStream = std::vector<ClickRecord>;

}  // namespace qdsim
