#pragma once

// Binary event files ("PHTX"): a 12-byte header followed by packed
// little-endian records.
//
//   header: magic "PHTX" | version u16 | record_kind u8 | channel_count u8 |
//           time_resolution_ps u32
//   click record  (9 bytes):  t u64 ps | channel u8
//   photon record (22 bytes): t u64 ps | nu_offset i32 (0.1 MHz units) |
//                             pol u8 | origin u8 | pulse_index u64
//
// Records must be time-ordered; a truncated trailing record is a hard error.

#include <cstdio>
#include <string>

#include "qdsim/records.hpp"

namespace qdsim {

enum class RecordKind : uint8_t { Photon = 0, Click = 1 };

inline constexpr uint16_t kEventFileVersion = 1;
inline constexpr int64_t kNuOffsetUnitPer0p1Mhz = 10000;  // 1 GHz = 10000 * 0.1 MHz

void write_photons(const std::string& path, const PhotonStream& photons);
void write_clicks(const std::string& path, const ClickStream& clicks, uint8_t channel_count = 1);

PhotonStream read_photons(const std::string& path);
ClickStream read_clicks(const std::string& path);

RecordKind peek_kind(const std::string& path);

// Streaming reader with bounded memory; `max_buffered()` reports the
// high-water mark of the internal chunk for memory-bound tests.
class ClickReader {
public:
    explicit ClickReader(const std::string& path);
    ~ClickReader();
    ClickReader(const ClickReader&) = delete;
    ClickReader& operator=(const ClickReader&) = delete;

    // Fills `out` with up to `chunk` records; returns false at end of file.
    bool next(ClickStream& out, size_t chunk = 65536);
    size_t max_buffered() const { return max_buffered_; }

private:
    std::FILE* f_ = nullptr;
    std::string path_;
    int64_t last_t_ = INT64_MIN;
    uint64_t offset_ = 0;
    size_t max_buffered_ = 0;
};

class ClickWriter {
public:
    ClickWriter(const std::string& path, uint8_t channel_count = 1);
    ~ClickWriter();
    ClickWriter(const ClickWriter&) = delete;
    ClickWriter& operator=(const ClickWriter&) = delete;

    void append(const ClickStream& clicks);
    void close();

private:
    std::FILE* f_ = nullptr;
    std::string path_;
    int64_t last_t_ = INT64_MIN;
};

}  // namespace qdsim
