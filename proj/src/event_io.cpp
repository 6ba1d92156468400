#include "qdsim/event_io.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <cstring>
#include <vector>

#include "qdsim/errors.hpp"

namespace qdsim {

namespace {

constexpr char kMagic[4] = {'P', 'H', 'T', 'X'};
constexpr size_t kHeaderBytes = 12;
constexpr size_t kClickBytes = 9;
constexpr size_t kPhotonBytes = 22;

void put_u16(uint8_t* p, uint16_t v) {
    p[0] = static_cast<uint8_t>(v);
    p[1] = static_cast<uint8_t>(v >> 8);
}
void put_u32(uint8_t* p, uint32_t v) {
    for (int i = 0; i < 4; ++i) p[i] = static_cast<uint8_t>(v >> (8 * i));
}
void put_u64(uint8_t* p, uint64_t v) {
    for (int i = 0; i < 8; ++i) p[i] = static_cast<uint8_t>(v >> (8 * i));
}
uint16_t get_u16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }
uint32_t get_u32(const uint8_t* p) {
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}
uint64_t get_u64(const uint8_t* p) {
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

std::FILE* open_or_throw(const std::string& path, const char* mode) {
    std::FILE* f = std::fopen(path.c_str(), mode);
    if (f == nullptr) throw IoError("cannot open '" + path + "'");
    return f;
}

void write_header(std::FILE* f, RecordKind kind, uint8_t channel_count) {
    uint8_t h[kHeaderBytes];
    std::memcpy(h, kMagic, 4);
    put_u16(h + 4, kEventFileVersion);
    h[6] = static_cast<uint8_t>(kind);
    h[7] = channel_count;
    put_u32(h + 8, 1);  // time resolution: 1 ps
    if (std::fwrite(h, 1, kHeaderBytes, f) != kHeaderBytes) throw IoError("header write failed");
}

RecordKind read_header(std::FILE* f, const std::string& path) {
    uint8_t h[kHeaderBytes];
    if (std::fread(h, 1, kHeaderBytes, f) != kHeaderBytes)
        throw IoError(path + ": truncated header at offset 0");
    if (std::memcmp(h, kMagic, 4) != 0) throw IoError(path + ": bad magic at offset 0");
    if (get_u16(h + 4) != kEventFileVersion)
        throw IoError(path + ": unsupported version " + std::to_string(get_u16(h + 4)));
    const uint8_t kind = h[6];
    if (kind > 1) throw IoError(path + ": unknown record kind at offset 6");
    if (get_u32(h + 8) != 1) throw IoError(path + ": unsupported time resolution");
    return static_cast<RecordKind>(kind);
}

int32_t quantize_nu(double nu_ghz) {
    const double units = nu_ghz * static_cast<double>(kNuOffsetUnitPer0p1Mhz);
    const double clamped = std::clamp(units, static_cast<double>(INT32_MIN), static_cast<double>(INT32_MAX));
    return static_cast<int32_t>(std::llround(clamped));
}

}  // namespace

void write_photons(const std::string& path, const PhotonStream& photons) {
    std::FILE* f = open_or_throw(path, "wb");
    write_header(f, RecordKind::Photon, 1);
    std::vector<uint8_t> buf;
    buf.reserve(kPhotonBytes * 4096);
    int64_t last = INT64_MIN;
    for (const PhotonRecord& rec : photons) {
        if (rec.t_ps < last) {
            std::fclose(f);
            throw IoError(path + ": photon records not time-ordered");
        }
        last = rec.t_ps;
        uint8_t r[kPhotonBytes];
        put_u64(r, static_cast<uint64_t>(std::max<int64_t>(rec.t_ps, 0)));
        put_u32(r + 8, static_cast<uint32_t>(quantize_nu(rec.nu_offset_ghz)));
        r[12] = static_cast<uint8_t>(rec.pol);
        r[13] = static_cast<uint8_t>(rec.origin);
        put_u64(r + 14, rec.pulse_index);
        buf.insert(buf.end(), r, r + kPhotonBytes);
        if (buf.size() >= kPhotonBytes * 4096) {
            if (std::fwrite(buf.data(), 1, buf.size(), f) != buf.size()) {
                std::fclose(f);
                throw IoError(path + ": write failed");
            }
            buf.clear();
        }
    }
    if (!buf.empty() && std::fwrite(buf.data(), 1, buf.size(), f) != buf.size()) {
        std::fclose(f);
        throw IoError(path + ": write failed");
    }
    std::fclose(f);
}

PhotonStream read_photons(const std::string& path) {
    std::FILE* f = open_or_throw(path, "rb");
    if (read_header(f, path) != RecordKind::Photon) {
        std::fclose(f);
        throw IoError(path + ": not a photon file");
    }
    PhotonStream out;
    uint8_t r[kPhotonBytes];
    uint64_t offset = kHeaderBytes;
    int64_t last = INT64_MIN;
    for (;;) {
        const size_t got = std::fread(r, 1, kPhotonBytes, f);
        if (got == 0) break;
        if (got != kPhotonBytes) {
            std::fclose(f);
            throw IoError(path + ": truncated record at offset " + std::to_string(offset));
        }
        PhotonRecord rec;
        rec.t_ps = static_cast<int64_t>(get_u64(r));
        rec.nu_offset_ghz =
            static_cast<double>(static_cast<int32_t>(get_u32(r + 8))) / kNuOffsetUnitPer0p1Mhz;
        rec.pol = static_cast<Pol>(r[12]);
        rec.origin = static_cast<Origin>(r[13]);
        rec.pulse_index = get_u64(r + 14);
        if (rec.t_ps < last) {
            std::fclose(f);
            throw IoError(path + ": records not time-ordered at offset " + std::to_string(offset));
        }
        last = rec.t_ps;
        out.push_back(rec);
        offset += kPhotonBytes;
    }
    std::fclose(f);
    return out;
}

void write_clicks(const std::string& path, const ClickStream& clicks, uint8_t channel_count) {
    ClickWriter writer(path, channel_count);
    writer.append(clicks);
    writer.close();
}

ClickStream read_clicks(const std::string& path) {
    ClickReader reader(path);
    ClickStream all, chunk;
    while (reader.next(chunk)) all.insert(all.end(), chunk.begin(), chunk.end());
    return all;
}

RecordKind peek_kind(const std::string& path) {
    std::FILE* f = open_or_throw(path, "rb");
    const RecordKind kind = read_header(f, path);
    std::fclose(f);
    return kind;
}

ClickReader::ClickReader(const std::string& path) : path_(path) {
    f_ = open_or_throw(path, "rb");
    try {
        if (read_header(f_, path) != RecordKind::Click) throw IoError(path + ": not a click file");
    } catch (...) {
        std::fclose(f_);
        throw;
    }
    offset_ = kHeaderBytes;
}

ClickReader::~ClickReader() {
    if (f_ != nullptr) std::fclose(f_);
}

bool ClickReader::next(ClickStream& out, size_t chunk) {
    out.clear();
    std::vector<uint8_t> buf(chunk * kClickBytes);
    const size_t got = std::fread(buf.data(), 1, buf.size(), f_);
    if (got == 0) return false;
    if (got % kClickBytes != 0)
        throw IoError(path_ + ": truncated record at offset " + std::to_string(offset_ + got - got % kClickBytes));
    const size_t n = got / kClickBytes;
    out.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const uint8_t* r = buf.data() + i * kClickBytes;
        out[i].t_ps = static_cast<int64_t>(get_u64(r));
        out[i].channel = r[8];
        if (out[i].t_ps < last_t_)
            throw IoError(path_ + ": records not time-ordered at offset " +
                          std::to_string(offset_ + i * kClickBytes));
        last_t_ = out[i].t_ps;
    }
    offset_ += got;
    max_buffered_ = std::max(max_buffered_, n);
    return true;
}

ClickWriter::ClickWriter(const std::string& path, uint8_t channel_count) : path_(path) {
    f_ = open_or_throw(path, "wb");
    try {
        write_header(f_, RecordKind::Click, channel_count);
    } catch (...) {
        std::fclose(f_);
        throw;
    }
}

ClickWriter::~ClickWriter() {
    if (f_ != nullptr) std::fclose(f_);
}

void ClickWriter::append(const ClickStream& clicks) {
    std::vector<uint8_t> buf;
    buf.reserve(clicks.size() * kClickBytes);
    for (const ClickRecord& c : clicks) {
        if (c.t_ps < last_t_) throw IoError(path_ + ": click records not time-ordered");
        last_t_ = c.t_ps;
        uint8_t r[kClickBytes];
        put_u64(r, static_cast<uint64_t>(std::max<int64_t>(c.t_ps, 0)));
        r[8] = c.channel;
        buf.insert(buf.end(), r, r + kClickBytes);
    }
    if (!buf.empty() && std::fwrite(buf.data(), 1, buf.size(), f_) != buf.size())
        throw IoError(path_ + ": write failed");
}

void ClickWriter::close() {
    if (f_ != nullptr) {
        std::fclose(f_);
        f_ = nullptr;
    }
}

}  // namespace qdsim
