#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "qdsim/errors.hpp"
#include "qdsim/event_io.hpp"
#include "qdsim/rng.hpp"

using namespace qdsim;

namespace {
std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}
}  // namespace

TEST_CASE("photon file round trip is lossless") {
    PhotonStream photons;
    RngStream s(derive_key(5, 5), RngPurpose::Emission, 0);
    int64_t t = 0;
    for (int i = 0; i < 5000; ++i) {
        t += static_cast<int64_t>(s.uniform() * 20000);
        PhotonRecord rec;
        rec.t_ps = t;
        // quantized grid so the round trip is exact
        rec.nu_offset_ghz = static_cast<double>(static_cast<int32_t>((s.uniform() - 0.5) * 2e7)) /
                            kNuOffsetUnitPer0p1Mhz;
        rec.pol = s.uniform() < 0.5 ? Pol::H : Pol::V;
        rec.origin = static_cast<Origin>(static_cast<int>(s.uniform() * 3));
        rec.pulse_index = static_cast<uint64_t>(i);
        photons.push_back(rec);
    }
    const std::string path = tmp_path("qdsim_roundtrip.phtx");
    write_photons(path, photons);
    const PhotonStream back = read_photons(path);
    REQUIRE(back.size() == photons.size());
    for (size_t i = 0; i < photons.size(); ++i) {
        CHECK(back[i].t_ps == photons[i].t_ps);
        CHECK(back[i].nu_offset_ghz == photons[i].nu_offset_ghz);
        CHECK(back[i].pol == photons[i].pol);
        CHECK(back[i].origin == photons[i].origin);
        CHECK(back[i].pulse_index == photons[i].pulse_index);
    }
    std::remove(path.c_str());
}

TEST_CASE("click file round trip and channel byte") {
    ClickStream clicks;
    int64_t t = 100;
    for (int i = 0; i < 1234; ++i) {
        clicks.push_back({t, static_cast<uint8_t>(i % 2)});
        t += 37 + (i % 5);
    }
    const std::string path = tmp_path("qdsim_clicks.phtx");
    write_clicks(path, clicks, 2);
    const ClickStream back = read_clicks(path);
    REQUIRE(back.size() == clicks.size());
    for (size_t i = 0; i < clicks.size(); ++i) {
        CHECK(back[i].t_ps == clicks[i].t_ps);
        CHECK(back[i].channel == clicks[i].channel);
    }
    CHECK(peek_kind(path) == RecordKind::Click);
    std::remove(path.c_str());
}

TEST_CASE("corrupted magic is rejected at offset 0") {
    const std::string path = tmp_path("qdsim_badmagic.phtx");
    {
        std::ofstream out(path, std::ios::binary);
        out << "JUNKJUNKJUNKJUNKJUNK";
    }
    CHECK_THROWS_WITH_AS(read_clicks(path), doctest::Contains("offset 0"), IoError);
    std::remove(path.c_str());
}

TEST_CASE("truncated trailing record is a hard error with offset") {
    ClickStream clicks{{100, 0}, {200, 0}, {300, 0}};
    const std::string path = tmp_path("qdsim_trunc.phtx");
    write_clicks(path, clicks);
    // chop the last record short
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
    CHECK_THROWS_AS(read_clicks(path), IoError);
    std::remove(path.c_str());
}

TEST_CASE("unordered records are rejected") {
    const std::string path = tmp_path("qdsim_unordered.phtx");
    CHECK_THROWS_AS(write_clicks(path, ClickStream{{200, 0}, {100, 0}}), IoError);
    // Forge an unordered file by hand and check the reader side too.
    {
        ClickStream ok{{100, 0}, {200, 0}};
        write_clicks(path, ok);
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(12);  // first record timestamp
        const uint64_t big = 500;
        f.write(reinterpret_cast<const char*>(&big), 8);
    }
    CHECK_THROWS_WITH_AS(read_clicks(path), doctest::Contains("time-ordered"), IoError);
    std::remove(path.c_str());
}

TEST_CASE("streaming reader keeps a bounded buffer") {
    ClickStream clicks;
    int64_t t = 0;
    for (int i = 0; i < 1000000; ++i) {
        t += 11;
        clicks.push_back({t, 0});
    }
    const std::string path = tmp_path("qdsim_stream.phtx");
    write_clicks(path, clicks);

    ClickReader reader(path);
    ClickStream chunk;
    uint64_t total = 0;
    while (reader.next(chunk, 4096)) total += chunk.size();
    CHECK(total == clicks.size());
    CHECK(reader.max_buffered() <= 4096);  // memory per pass independent of file size
    std::remove(path.c_str());
}
