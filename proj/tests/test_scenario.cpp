#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "qdsim/errors.hpp"
#include "qdsim/scenario.hpp"

using namespace qdsim;

namespace {

const char* kMinimalConfig = R"(
scenario.name = unit
run.seed = 7
emitter.t1_ns = 0.2622
emitter.beta_nir = 0.05
excitation.mode = resonant_rabi
excitation.power_mw = 0.005
excitation.reference_power_mw = 0.005
excitation.rep_rate_mhz = 80.3
excitation.n_pulses = 200000
bench.kind = hbt
detector.a.jitter_sigma_ps = 20
detector.b.jitter_sigma_ps = 20
)";

std::string tmp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

std::vector<char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("config parsing, unknown keys and validation") {
    const Scenario sc = parse_scenario_text(kMinimalConfig);
    CHECK(sc.name == "unit");
    CHECK(sc.seed == 7);
    CHECK(sc.emitter.t1_ns == doctest::Approx(0.2622));
    CHECK(sc.bench == BenchKind::Hbt);
    CHECK(sc.detector_a.jitter_sigma_ps == doctest::Approx(20.0));

    CHECK_THROWS_WITH_AS(parse_scenario_text("emitter.t1_typo = 1\nrun.seed = 1\n"),
                         doctest::Contains("unknown key"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_scenario_text("emitter.t1_ns = 0.2\nexcitation.n_pulses = 10\n"),
                         doctest::Contains("run.seed"), ConfigError);
    CHECK_THROWS_AS(parse_scenario_text("run.seed = 1\nrun.seed = 2\nexcitation.n_pulses = 1\n"),
                    ConfigError);  // duplicate key

    // n_pulses = 0 is a config error
    std::string zero = kMinimalConfig;
    zero.replace(zero.find("excitation.n_pulses = 200000"), 28, "excitation.n_pulses = 0     ");
    CHECK_THROWS_AS(parse_scenario_text(zero), ConfigError);

    // malformed number
    CHECK_THROWS_WITH_AS(parse_scenario_text("run.seed = 1\nexcitation.n_pulses = 10\nemitter.t1_ns = abc\n"),
                         doctest::Contains("not a number"), ConfigError);
}

TEST_CASE("digest tracks semantic content only") {
    const std::string d0 = scenario_digest_text(kMinimalConfig);
    // comments and blank lines are cosmetic
    std::string cosmetic = std::string("# a comment\n\n") + kMinimalConfig + "\n# trailing\n";
    CHECK(scenario_digest_text(cosmetic) == d0);
    // reordering keys is cosmetic too (canonical ordering)
    std::string reordered = kMinimalConfig;
    reordered += "";  // same content; build a truly reordered variant below
    {
        std::string lines = "run.seed = 7\nscenario.name = unit\n";
        std::string rest = kMinimalConfig;
        rest.erase(rest.find("scenario.name = unit\n"), 21);
        rest.erase(rest.find("run.seed = 7\n"), 13);
        CHECK(scenario_digest_text(lines + rest) == d0);
    }
    // any value change shifts the digest
    std::string changed = kMinimalConfig;
    changed.replace(changed.find("run.seed = 7"), 12, "run.seed = 8");
    CHECK(scenario_digest_text(changed) != d0);
    // overrides participate
    CHECK(scenario_digest_text(kMinimalConfig, {{"excitation.n_pulses", "100"}}) != d0);
}

TEST_CASE("run_scenario is deterministic across runs and thread counts") {
    const Scenario sc = parse_scenario_text(kMinimalConfig);
    RunOptions o1;
    o1.out_dir = tmp_dir("qdsim_det1");
    o1.threads = 1;
    o1.write_svg = false;
    RunOptions o2;
    o2.out_dir = tmp_dir("qdsim_det2");
    o2.threads = 2;
    o2.write_svg = false;

    const Report r1 = run_scenario(sc, o1);
    const Report r2 = run_scenario(sc, o2);
    CHECK(r1.derived.at("g2_zero") == r2.derived.at("g2_zero"));
    CHECK(r1.derived.at("hbt_rate_hz") == r2.derived.at("hbt_rate_hz"));

    // event files byte-identical
    CHECK(slurp(o1.out_dir + "/hbt_a.phtx") == slurp(o2.out_dir + "/hbt_a.phtx"));
    CHECK(slurp(o1.out_dir + "/hbt_b.phtx") == slurp(o2.out_dir + "/hbt_b.phtx"));

    // and a repeat run reproduces byte-identical output
    RunOptions o3;
    o3.out_dir = tmp_dir("qdsim_det3");
    o3.threads = 2;
    o3.write_svg = false;
    run_scenario(sc, o3);
    CHECK(slurp(o2.out_dir + "/hbt_a.phtx") == slurp(o3.out_dir + "/hbt_a.phtx"));
    CHECK(slurp(o2.out_dir + "/report.json") == slurp(o3.out_dir + "/report.json"));

    std::filesystem::remove_all(o1.out_dir);
    std::filesystem::remove_all(o2.out_dir);
    std::filesystem::remove_all(o3.out_dir);
}

TEST_CASE("bundled scenario configs parse and validate") {
    for (const char* name :
         {"table1_nir_resonant", "table1_nir_offres", "table1_telecom_resonant",
          "table1_telecom_offres", "fig2_eta_sweep", "fig3_power_sweep"}) {
        const std::string path = std::string(QDSIM_SCENARIO_DIR "/") + name + ".cfg";
        const Scenario sc = parse_scenario(path);
        CHECK(sc.name == name);
        CHECK(sc.seed != 0);
    }
}

TEST_CASE("report JSON carries fits, derived values and provenance") {
    std::string cfg = kMinimalConfig;
    cfg.replace(cfg.find("bench.kind = hbt"), 16, "bench.kind = full");
    cfg.replace(cfg.find("excitation.n_pulses = 200000"), 28, "excitation.n_pulses = 400000");
    const Scenario sc = parse_scenario_text(cfg);
    RunOptions opts;
    opts.out_dir = tmp_dir("qdsim_report");
    opts.threads = 2;
    const Report rep = run_scenario(sc, opts);
    CHECK(rep.fits.count("lifetime") == 1);
    CHECK(rep.fits.at("lifetime").converged);
    CHECK(rep.derived.count("g2_zero") == 1);
    CHECK(rep.derived.count("v_hom") == 1);
    CHECK(rep.derived.count("m_s") == 1);
    CHECK(rep.digest == sc.digest);
    const std::string json = rep.to_json();
    CHECK(json.find("\"seed\": 7") != std::string::npos);
    CHECK(json.find("lifetime") != std::string::npos);
    CHECK(std::filesystem::exists(opts.out_dir + "/report.json"));
    CHECK(std::filesystem::exists(opts.out_dir + "/lifetime_hist.csv"));
    std::filesystem::remove_all(opts.out_dir);
}
