#pragma once

// Scenario configuration (flat key = value text), pipeline orchestration and
// report emission.

#include <map>
#include <optional>
#include <string>

#include "qdsim/analysis.hpp"
#include "qdsim/bench.hpp"
#include "qdsim/conversion.hpp"
#include "qdsim/emitter.hpp"

namespace qdsim {

enum class BenchKind { Lifetime, Hbt, Hom, Full, EtaSweep, PowerSweep };

struct SweepConfig {
    double power_min_mw = 15.0;
    double power_max_mw = 290.0;
    int n_points = 20;
    uint64_t photons_per_point = 200000;   // eta sweep: input photons per grid point
    double noise_time_s = 5.0;             // eta sweep: noise-only acquisition per point
    uint64_t pulses_per_point = 200000;    // power sweep
};

struct AnalysisConfig {
    int64_t bin_ps = 100;
    int range_periods = 6;
    int n_side_peaks = 3;
    int64_t lifetime_bin_ps = 10;
    double lifetime_fit_min_ns = 0.06;
    double lifetime_fit_max_ns = 3.0;
};

struct Scenario {
    std::string name = "scenario";
    EmitterParams emitter;
    ExcitationConfig excitation;
    bool conversion_enabled = false;
    ConversionParams conversion;
    SeedLaser seed_laser;
    BenchKind bench = BenchKind::Full;
    HomConfig hom;
    DetectorParams detector_a;
    DetectorParams detector_b;
    AnalysisConfig analysis;
    SweepConfig sweep;
    uint64_t seed = 0;
    bool write_photon_files = false;
    std::string digest;  // set by parse_scenario

    void validate() const;
};

// Parses the flat key=value format. Unknown keys are hard errors; `overrides`
// are applied on top (CLI flags) and participate in the digest.
Scenario parse_scenario(const std::string& path, const std::map<std::string, std::string>& overrides = {});
Scenario parse_scenario_text(const std::string& text, const std::map<std::string, std::string>& overrides = {});

// FNV-1a over the canonical (sorted) key=value serialization.
std::string scenario_digest(const std::string& path, const std::map<std::string, std::string>& overrides = {});
std::string scenario_digest_text(const std::string& text, const std::map<std::string, std::string>& overrides = {});

struct RunOptions {
    std::string out_dir = ".";
    int threads = 1;
    bool write_svg = true;
};

struct Report {
    std::string scenario_name;
    std::string digest;
    uint64_t seed = 0;
    std::string version;
    std::map<std::string, FitReport> fits;
    std::map<std::string, double> derived;
    std::map<std::string, std::string> outputs;  // label -> file path
    bool all_converged = true;

    std::string to_json() const;
};

// Executes emitter -> optional conversion -> bench -> detectors -> analysis,
// writes event files / CSV histograms / report.json into out_dir.
Report run_scenario(const Scenario& scenario, const RunOptions& options);

inline constexpr const char* kVersion = "0.1.0";

}  // namespace qdsim
