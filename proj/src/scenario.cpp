#include "qdsim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "qdsim/errors.hpp"
#include "qdsim/event_io.hpp"
#include "qdsim/plot.hpp"
#include "qdsim/rng.hpp"

namespace qdsim {

namespace {

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "scenario.name",
        "run.seed",
        "run.write_photon_files",
        "emitter.t1_ns",
        "emitter.gamma_fast_ghz",
        "emitter.sigma_sd_ghz",
        "emitter.tau_c_ns",
        "emitter.delta_fss_ghz",
        "emitter.beat_visibility",
        "emitter.epsilon_multi",
        "emitter.multi_detuning_ghz",
        "emitter.tau_blink_on_ns",
        "emitter.tau_blink_off_ns",
        "emitter.beta_nir",
        "excitation.mode",
        "excitation.power_mw",
        "excitation.reference_power_mw",
        "excitation.rep_rate_mhz",
        "excitation.n_pulses",
        "conversion.enabled",
        "conversion.eta_nor_per_w_cm2",
        "conversion.length_cm",
        "conversion.eta_max_internal",
        "conversion.in_coupling",
        "conversion.fibre_coupling",
        "conversion.filter_transmission",
        "conversion.noise_coeff_hz_per_mw",
        "conversion.noise_bandwidth_ghz",
        "conversion.seed_power_mw",
        "seed_laser.wavelength_nm",
        "seed_laser.fsr_mhz",
        "seed_laser.envelope_fwhm_ghz",
        "seed_laser.n_modes",
        "seed_laser.mode_fluctuation_time_ns",
        "seed_laser.mode_concentration",
        "bench.kind",
        "hom.delay_ns",
        "hom.splitter_ratio",
        "detector.a.efficiency",
        "detector.a.dark_rate_hz",
        "detector.a.jitter_sigma_ps",
        "detector.a.dead_time_ns",
        "detector.b.efficiency",
        "detector.b.dark_rate_hz",
        "detector.b.jitter_sigma_ps",
        "detector.b.dead_time_ns",
        "analysis.bin_ps",
        "analysis.range_periods",
        "analysis.n_side_peaks",
        "analysis.lifetime_bin_ps",
        "analysis.lifetime_fit_min_ns",
        "analysis.lifetime_fit_max_ns",
        "sweep.power_min_mw",
        "sweep.power_max_mw",
        "sweep.n_points",
        "sweep.photons_per_point",
        "sweep.noise_time_s",
        "sweep.pulses_per_point",
    };
    return keys;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::map<std::string, std::string> parse_kv_text(const std::string& text,
                                                 const std::map<std::string, std::string>& overrides) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (known_keys().count(key) == 0)
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        if (value.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty value for '" + key + "'");
        if (!kv.emplace(key, value).second)
            throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    for (const auto& [k, v] : overrides) {
        if (known_keys().count(k) == 0) throw ConfigError("unknown override key '" + k + "'");
        kv[k] = v;
    }
    return kv;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double get_double(const std::map<std::string, std::string>& kv, const std::string& key, double fallback) {
    const auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ConfigError("config key '" + key + "': not a number ('" + it->second + "')");
    }
}

uint64_t get_u64(const std::map<std::string, std::string>& kv, const std::string& key, uint64_t fallback,
                 bool required = false) {
    const auto it = kv.find(key);
    if (it == kv.end()) {
        if (required) throw ConfigError("config key '" + key + "' is required");
        return fallback;
    }
    try {
        size_t pos = 0;
        const unsigned long long v = std::stoull(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ConfigError("config key '" + key + "': not an unsigned integer ('" + it->second + "')");
    }
}

bool get_bool(const std::map<std::string, std::string>& kv, const std::string& key, bool fallback) {
    const auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("config key '" + key + "': expected true/false");
}

std::string canonical_text(const std::map<std::string, std::string>& kv) {
    std::string out;
    for (const auto& [k, v] : kv) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

std::string fnv1a_hex(const std::string& s) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) h = (h ^ c) * 0x100000001B3ull;
    char buf[19];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Scenario scenario_from_kv(const std::map<std::string, std::string>& kv) {
    Scenario sc;
    sc.name = kv.count("scenario.name") ? kv.at("scenario.name") : "scenario";
    if (kv.count("run.seed") == 0) throw ConfigError("config key 'run.seed' is required (no wall-clock seeding)");
    sc.seed = get_u64(kv, "run.seed", 0, true);
    sc.write_photon_files = get_bool(kv, "run.write_photon_files", false);

    EmitterParams& em = sc.emitter;
    em.t1_ns = get_double(kv, "emitter.t1_ns", em.t1_ns);
    em.gamma_fast_ghz = get_double(kv, "emitter.gamma_fast_ghz", em.gamma_fast_ghz);
    em.sigma_sd_ghz = get_double(kv, "emitter.sigma_sd_ghz", em.sigma_sd_ghz);
    em.tau_c_ns = get_double(kv, "emitter.tau_c_ns", em.tau_c_ns);
    em.delta_fss_ghz = get_double(kv, "emitter.delta_fss_ghz", em.delta_fss_ghz);
    em.beat_visibility = get_double(kv, "emitter.beat_visibility", em.beat_visibility);
    em.epsilon_multi = get_double(kv, "emitter.epsilon_multi", em.epsilon_multi);
    em.multi_detuning_ghz = get_double(kv, "emitter.multi_detuning_ghz", em.multi_detuning_ghz);
    em.tau_blink_on_ns = get_double(kv, "emitter.tau_blink_on_ns", em.tau_blink_on_ns);
    em.tau_blink_off_ns = get_double(kv, "emitter.tau_blink_off_ns", em.tau_blink_off_ns);
    em.beta_nir = get_double(kv, "emitter.beta_nir", em.beta_nir);

    ExcitationConfig& ex = sc.excitation;
    if (kv.count("excitation.mode")) {
        const std::string& m = kv.at("excitation.mode");
        if (m == "resonant_rabi")
            ex.mode = ExcitationMode::ResonantRabi;
        else if (m == "off_resonant_saturation")
            ex.mode = ExcitationMode::OffResonantSaturation;
        else
            throw ConfigError("excitation.mode: expected resonant_rabi or off_resonant_saturation");
    }
    ex.power_mw = get_double(kv, "excitation.power_mw", ex.power_mw);
    ex.reference_power_mw = get_double(kv, "excitation.reference_power_mw", ex.reference_power_mw);
    ex.rep_rate_mhz = get_double(kv, "excitation.rep_rate_mhz", ex.rep_rate_mhz);
    ex.n_pulses = get_u64(kv, "excitation.n_pulses", 0, true);

    sc.conversion_enabled = get_bool(kv, "conversion.enabled", false);
    ConversionParams& cv = sc.conversion;
    cv.eta_nor_per_w_cm2 = get_double(kv, "conversion.eta_nor_per_w_cm2", cv.eta_nor_per_w_cm2);
    cv.length_cm = get_double(kv, "conversion.length_cm", cv.length_cm);
    cv.eta_max_internal = get_double(kv, "conversion.eta_max_internal", cv.eta_max_internal);
    cv.in_coupling = get_double(kv, "conversion.in_coupling", cv.in_coupling);
    cv.fibre_coupling = get_double(kv, "conversion.fibre_coupling", cv.fibre_coupling);
    cv.filter_transmission = get_double(kv, "conversion.filter_transmission", cv.filter_transmission);
    cv.noise_coeff_hz_per_mw = get_double(kv, "conversion.noise_coeff_hz_per_mw", cv.noise_coeff_hz_per_mw);
    cv.noise_bandwidth_ghz = get_double(kv, "conversion.noise_bandwidth_ghz", cv.noise_bandwidth_ghz);
    cv.seed_power_mw = get_double(kv, "conversion.seed_power_mw", cv.seed_power_mw);

    SeedLaser& sl = sc.seed_laser;
    sl.wavelength_nm = get_double(kv, "seed_laser.wavelength_nm", sl.wavelength_nm);
    sl.fsr_ghz = get_double(kv, "seed_laser.fsr_mhz", sl.fsr_ghz * 1e3) * 1e-3;
    sl.envelope_fwhm_ghz = get_double(kv, "seed_laser.envelope_fwhm_ghz", sl.envelope_fwhm_ghz);
    sl.n_modes = static_cast<int>(get_u64(kv, "seed_laser.n_modes", sl.n_modes));
    sl.mode_fluctuation_time_ns = get_double(kv, "seed_laser.mode_fluctuation_time_ns", sl.mode_fluctuation_time_ns);
    sl.mode_concentration = get_double(kv, "seed_laser.mode_concentration", sl.mode_concentration);

    if (kv.count("bench.kind")) {
        const std::string& b = kv.at("bench.kind");
        if (b == "lifetime")
            sc.bench = BenchKind::Lifetime;
        else if (b == "hbt")
            sc.bench = BenchKind::Hbt;
        else if (b == "hom")
            sc.bench = BenchKind::Hom;
        else if (b == "full")
            sc.bench = BenchKind::Full;
        else if (b == "eta_sweep")
            sc.bench = BenchKind::EtaSweep;
        else if (b == "power_sweep")
            sc.bench = BenchKind::PowerSweep;
        else
            throw ConfigError("bench.kind: unknown bench '" + b + "'");
    }
    sc.hom.delay_ps = ns_to_ps(get_double(kv, "hom.delay_ns", ps_to_ns(sc.hom.delay_ps)));
    sc.hom.splitter_ratio = get_double(kv, "hom.splitter_ratio", sc.hom.splitter_ratio);

    auto load_det = [&kv](DetectorParams& d, const std::string& prefix) {
        d.efficiency = get_double(kv, prefix + ".efficiency", d.efficiency);
        d.dark_rate_hz = get_double(kv, prefix + ".dark_rate_hz", d.dark_rate_hz);
        d.jitter_sigma_ps = get_double(kv, prefix + ".jitter_sigma_ps", d.jitter_sigma_ps);
        d.dead_time_ps = ns_to_ps(get_double(kv, prefix + ".dead_time_ns", ps_to_ns(d.dead_time_ps)));
    };
    load_det(sc.detector_a, "detector.a");
    load_det(sc.detector_b, "detector.b");

    AnalysisConfig& an = sc.analysis;
    an.bin_ps = static_cast<int64_t>(get_u64(kv, "analysis.bin_ps", an.bin_ps));
    an.range_periods = static_cast<int>(get_u64(kv, "analysis.range_periods", an.range_periods));
    an.n_side_peaks = static_cast<int>(get_u64(kv, "analysis.n_side_peaks", an.n_side_peaks));
    an.lifetime_bin_ps = static_cast<int64_t>(get_u64(kv, "analysis.lifetime_bin_ps", an.lifetime_bin_ps));
    an.lifetime_fit_min_ns = get_double(kv, "analysis.lifetime_fit_min_ns", an.lifetime_fit_min_ns);
    an.lifetime_fit_max_ns = get_double(kv, "analysis.lifetime_fit_max_ns", an.lifetime_fit_max_ns);

    SweepConfig& sw = sc.sweep;
    sw.power_min_mw = get_double(kv, "sweep.power_min_mw", sw.power_min_mw);
    sw.power_max_mw = get_double(kv, "sweep.power_max_mw", sw.power_max_mw);
    sw.n_points = static_cast<int>(get_u64(kv, "sweep.n_points", sw.n_points));
    sw.photons_per_point = get_u64(kv, "sweep.photons_per_point", sw.photons_per_point);
    sw.noise_time_s = get_double(kv, "sweep.noise_time_s", sw.noise_time_s);
    sw.pulses_per_point = get_u64(kv, "sweep.pulses_per_point", sw.pulses_per_point);
    return sc;
}

}  // namespace

void Scenario::validate() const {
    try {
        emitter.validate();
        excitation.validate();
        if (conversion_enabled) {
            conversion.validate();
            seed_laser.validate();
        }
        hom.validate();
        detector_a.validate();
        detector_b.validate();
    } catch (const std::domain_error& e) {
        throw ConfigError(std::string("invalid scenario: ") + e.what());
    }
    if (analysis.bin_ps <= 0 || analysis.lifetime_bin_ps <= 0)
        throw ConfigError("invalid scenario: analysis bin widths must be positive");
    if (analysis.range_periods < 1 || analysis.n_side_peaks < 1)
        throw ConfigError("invalid scenario: analysis range/side peaks must be >= 1");
    if (sweep.n_points < 2) throw ConfigError("invalid scenario: sweep.n_points must be >= 2");
}

Scenario parse_scenario_text(const std::string& text, const std::map<std::string, std::string>& overrides) {
    const auto kv = parse_kv_text(text, overrides);
    Scenario sc = scenario_from_kv(kv);
    sc.digest = fnv1a_hex(canonical_text(kv));
    sc.validate();
    return sc;
}

Scenario parse_scenario(const std::string& path, const std::map<std::string, std::string>& overrides) {
    return parse_scenario_text(read_file(path), overrides);
}

std::string scenario_digest_text(const std::string& text, const std::map<std::string, std::string>& overrides) {
    return fnv1a_hex(canonical_text(parse_kv_text(text, overrides)));
}

std::string scenario_digest(const std::string& path, const std::map<std::string, std::string>& overrides) {
    return scenario_digest_text(read_file(path), overrides);
}

// --- Report ---------------------------------------------------------------

std::string Report::to_json() const {
    nlohmann::ordered_json j;
    j["scenario"] = scenario_name;
    j["digest"] = digest;
    j["seed"] = seed;
    j["version"] = version;
    j["all_converged"] = all_converged;
    nlohmann::ordered_json jf = nlohmann::ordered_json::object();
    for (const auto& [name, fit] : fits) {
        nlohmann::ordered_json f;
        f["model"] = fit.model;
        f["params"] = fit.params;
        f["sigmas"] = fit.sigmas;
        f["residual_norm"] = fit.residual_norm;
        f["iterations"] = fit.iterations;
        f["converged"] = fit.converged;
        jf[name] = f;
    }
    j["fits"] = jf;
    j["derived"] = derived;
    j["outputs"] = outputs;
    return j.dump(2);
}

// --- Pipeline --------------------------------------------------------------

namespace {

struct BenchContext {
    const Scenario& sc;
    const RunOptions& opt;
    double period_ps;
    int64_t total_time_ps;
    double acq_s;
    std::filesystem::path dir;
};

PhotonStream source_stream(const BenchContext& ctx, const char* stage) {
    PhotonStream photons =
        simulate_emission(ctx.sc.emitter, ctx.sc.excitation, ctx.sc.seed, salt_of(stage), ctx.opt.threads);
    if (ctx.sc.conversion_enabled) {
        const std::string qfc_salt = std::string(stage) + "/qfc";
        photons = convert_stream(photons, ctx.sc.conversion, ctx.sc.seed_laser, ctx.sc.seed,
                                 salt_of(qfc_salt.c_str()), ctx.period_ps, ctx.total_time_ps,
                                 ctx.opt.threads);
    }
    return photons;
}

void run_lifetime(const BenchContext& ctx, Report& rep) {
    PhotonStream photons = source_stream(ctx, "lifetime");
    if (ctx.sc.write_photon_files) {
        const auto path = (ctx.dir / "lifetime_photons.phtx").string();
        write_photons(path, photons);
        rep.outputs["lifetime_photons"] = path;
    }
    ClickStream clicks = detect(photons, ctx.sc.detector_a, ctx.sc.seed, salt_of("lifetime"),
                                RngPurpose::DetectorA, RngPurpose::DarkCountsA, ctx.total_time_ps, 0);
    const auto clicks_path = (ctx.dir / "lifetime_clicks.phtx").string();
    write_clicks(clicks_path, clicks);
    rep.outputs["lifetime_clicks"] = clicks_path;

    CorrelationHistogram hist =
        fold_start_stop(clicks, ctx.period_ps, ctx.sc.analysis.lifetime_bin_ps, ctx.total_time_ps);
    LifetimeFitOptions fopts;
    fopts.fit_min_ns = ctx.sc.analysis.lifetime_fit_min_ns;
    fopts.fit_max_ns = ctx.sc.analysis.lifetime_fit_max_ns;
    FitReport fit = fit_lifetime(hist, fopts);
    rep.fits["lifetime"] = fit;
    if (!fit.converged) rep.all_converged = false;

    const auto p = fit.params;
    auto model = [&p](double tau_ps) {
        const double t = ps_to_ns(tau_ps);
        return p.at("amplitude") * std::exp(-t / p.at("t1_ns")) *
                   (1.0 + p.at("beat_visibility") * std::cos(kTwoPi * p.at("delta_ghz") * t + p.at("phase"))) +
               p.at("background");
    };
    const auto hist_path = (ctx.dir / "lifetime_hist.csv").string();
    write_histogram_csv(hist_path, hist, model);
    rep.outputs["lifetime_hist"] = hist_path;
    if (ctx.opt.write_svg) {
        std::vector<double> xs, ys, fs;
        for (size_t i = 0; i < hist.n_bins(); ++i) {
            const double tau = hist.bin_center_ps(i);
            if (ps_to_ns(tau) > 3.0) break;
            xs.push_back(tau);
            ys.push_back(static_cast<double>(hist.counts[i]));
            fs.push_back(model(tau));
        }
        const auto svg_path = (ctx.dir / "lifetime.svg").string();
        write_svg_plot(svg_path, xs, ys, "time-resolved emission (ps)", fs);
        rep.outputs["lifetime_svg"] = svg_path;
    }
    rep.derived["lifetime_rate_hz"] = static_cast<double>(clicks.size()) / ctx.acq_s;
}

int64_t correlation_range_ps(const BenchContext& ctx) {
    const int64_t bin = ctx.sc.analysis.bin_ps;
    const double want = ctx.sc.analysis.range_periods * ctx.period_ps;
    return static_cast<int64_t>(std::ceil(want / bin)) * bin;
}

CorrelationHistogram correlate_pair(const BenchContext& ctx, const ClickStream& a, const ClickStream& b) {
    const int64_t range = correlation_range_ps(ctx);
    return correlate(a, b, ctx.sc.analysis.bin_ps, -range, range, ctx.total_time_ps);
}

void run_hbt(const BenchContext& ctx, Report& rep) {
    PhotonStream photons = source_stream(ctx, "hbt");
    auto [a, b] = hbt_measure(photons, 0.5, ctx.sc.detector_a, ctx.sc.detector_b, ctx.sc.seed,
                              salt_of("hbt"), ctx.total_time_ps);
    const auto a_path = (ctx.dir / "hbt_a.phtx").string();
    const auto b_path = (ctx.dir / "hbt_b.phtx").string();
    write_clicks(a_path, a);
    write_clicks(b_path, b);
    rep.outputs["hbt_clicks_a"] = a_path;
    rep.outputs["hbt_clicks_b"] = b_path;

    CorrelationHistogram hist = correlate_pair(ctx, a, b);
    const auto hist_path = (ctx.dir / "hbt_g2.csv").string();
    write_histogram_csv(hist_path, hist);
    rep.outputs["hbt_g2_hist"] = hist_path;

    const ValueWithSigma g2 =
        g2_zero(hist, ctx.period_ps, 0.5 * ctx.period_ps, ctx.sc.analysis.n_side_peaks);
    rep.derived["g2_zero"] = g2.value;
    rep.derived["g2_zero_sigma"] = g2.sigma;
    rep.derived["hbt_rate_hz"] = static_cast<double>(a.size() + b.size()) / ctx.acq_s;
    if (ctx.opt.write_svg) {
        std::vector<double> xs, ys;
        for (size_t i = 0; i < hist.n_bins(); ++i) {
            xs.push_back(hist.bin_center_ps(i));
            ys.push_back(static_cast<double>(hist.counts[i]));
        }
        const auto svg_path = (ctx.dir / "hbt_g2.svg").string();
        write_svg_plot(svg_path, xs, ys, "HBT correlation (tau ps)");
        rep.outputs["hbt_g2_svg"] = svg_path;
    }

    // Reference noise measurement with the source blocked, as in the lab.
    if (ctx.sc.conversion_enabled) {
        PhotonStream blocked;
        PhotonStream noise_only =
            convert_stream(blocked, ctx.sc.conversion, ctx.sc.seed_laser, ctx.sc.seed,
                           salt_of("noise_reference"), ctx.period_ps, ctx.total_time_ps, ctx.opt.threads);
        auto [na, nb] = hbt_measure(noise_only, 0.5, ctx.sc.detector_a, ctx.sc.detector_b, ctx.sc.seed,
                                    salt_of("noise_reference"), ctx.total_time_ps);
        const double noise_rate = static_cast<double>(na.size() + nb.size()) / ctx.acq_s;
        rep.derived["noise_rate_hz"] = noise_rate;
        if (noise_rate > 0.0)
            rep.derived["snr"] = (rep.derived["hbt_rate_hz"] - noise_rate) / noise_rate;
    }
}

void run_hom(const BenchContext& ctx, Report& rep) {
    PhotonStream photons = source_stream(ctx, "hom");
    HomConfig par = ctx.sc.hom;
    par.polarization = HomPolarization::Parallel;
    HomConfig perp = ctx.sc.hom;
    perp.polarization = HomPolarization::Cross;

    // Both configurations replay the same photon stream and RNG salts; only
    // the overlap (via the polarization flip) differs.
    auto [pa, pb] = hom_measure(photons, par, ctx.sc.detector_a, ctx.sc.detector_b, ctx.sc.emitter,
                                ctx.sc.seed, salt_of("hom"), ctx.total_time_ps);
    auto [xa, xb] = hom_measure(photons, perp, ctx.sc.detector_a, ctx.sc.detector_b, ctx.sc.emitter,
                                ctx.sc.seed, salt_of("hom"), ctx.total_time_ps);

    const auto pa_path = (ctx.dir / "hom_par_a.phtx").string();
    const auto pb_path = (ctx.dir / "hom_par_b.phtx").string();
    write_clicks(pa_path, pa);
    write_clicks(pb_path, pb);
    rep.outputs["hom_par_clicks_a"] = pa_path;
    rep.outputs["hom_par_clicks_b"] = pb_path;

    CorrelationHistogram hpar = correlate_pair(ctx, pa, pb);
    CorrelationHistogram hperp = correlate_pair(ctx, xa, xb);
    const auto par_path = (ctx.dir / "hom_parallel.csv").string();
    const auto perp_path = (ctx.dir / "hom_perpendicular.csv").string();
    write_histogram_csv(par_path, hpar);
    write_histogram_csv(perp_path, hperp);
    rep.outputs["hom_parallel_hist"] = par_path;
    rep.outputs["hom_perpendicular_hist"] = perp_path;

    const ValueWithSigma v =
        hom_visibility(hpar, hperp, ctx.period_ps, 0.5 * ctx.period_ps, ctx.sc.analysis.n_side_peaks);
    rep.derived["v_hom"] = v.value;
    rep.derived["v_hom_sigma"] = v.sigma;
    if (ctx.opt.write_svg) {
        std::vector<double> xs, yp, yx;
        for (size_t i = 0; i < hpar.n_bins(); ++i) {
            xs.push_back(hpar.bin_center_ps(i));
            yp.push_back(static_cast<double>(hpar.counts[i]));
            yx.push_back(static_cast<double>(hperp.counts[i]));
        }
        const auto svg_path = (ctx.dir / "hom.svg").string();
        write_svg_plot(svg_path, xs, yp, "HOM correlation, parallel vs cross (tau ps)", yx);
        rep.outputs["hom_svg"] = svg_path;
    }
}

void run_eta_sweep(const BenchContext& ctx, Report& rep) {
    const SweepConfig& sw = ctx.sc.sweep;
    std::vector<double> powers_mw(sw.n_points);
    for (int i = 0; i < sw.n_points; ++i)
        powers_mw[i] = sw.power_min_mw + (sw.power_max_mw - sw.power_min_mw) * i / (sw.n_points - 1);

    const double budget =
        ctx.sc.conversion.in_coupling * ctx.sc.conversion.fibre_coupling * ctx.sc.conversion.filter_transmission;
    std::vector<double> eta_meas(sw.n_points), snr(sw.n_points);
    std::vector<std::pair<double, double>> fit_points;

    for (int i = 0; i < sw.n_points; ++i) {
        ConversionParams conv = ctx.sc.conversion;
        conv.seed_power_mw = powers_mw[i];

        // CW coherent probe through the converter measures the efficiency
        // curve (temporal statistics are irrelevant for the thinning rate).
        const double probe_rate_hz = 2e6;
        const uint64_t key = derive_key(ctx.sc.seed, salt_of(("eta_probe/" + std::to_string(i)).c_str()));
        RngStream s(key, RngPurpose::CoherentSource, 0);
        PhotonStream probe;
        probe.reserve(sw.photons_per_point);
        double t = 0.0;
        const double gap_ps = 1e12 / probe_rate_hz;
        for (uint64_t n = 0; n < sw.photons_per_point; ++n) {
            t += s.exponential(gap_ps);
            PhotonRecord recd;
            recd.t_ps = std::llround(t);
            recd.pulse_index = static_cast<uint64_t>(t / ctx.period_ps);
            probe.push_back(recd);
        }
        const int64_t probe_span = probe.back().t_ps + 1;
        ConversionParams conv_probe = conv;
        conv_probe.noise_coeff_hz_per_mw = 0.0;  // seed blocked on the probe reference arm
        PhotonStream converted =
            convert_stream(probe, conv_probe, ctx.sc.seed_laser, ctx.sc.seed,
                           salt_of(("eta_probe/" + std::to_string(i)).c_str()), ctx.period_ps, probe_span, 1);
        eta_meas[i] = static_cast<double>(converted.size()) / static_cast<double>(sw.photons_per_point) / budget;
        fit_points.emplace_back(1e-3 * powers_mw[i], eta_meas[i]);

        // Signal-to-noise at this seed power with the pulsed source on and
        // then blocked.
        ExcitationConfig exc = ctx.sc.excitation;
        exc.n_pulses = sw.pulses_per_point;
        const int64_t span = static_cast<int64_t>(std::llround(exc.n_pulses * ctx.period_ps));
        const double span_s = ps_to_ns(static_cast<double>(span)) * 1e-9;
        const std::string pt_salt = "eta_snr/" + std::to_string(i);
        PhotonStream emitted = simulate_emission(ctx.sc.emitter, exc, ctx.sc.seed,
                                                 salt_of(pt_salt.c_str()), ctx.opt.threads);
        PhotonStream tele = convert_stream(emitted, conv, ctx.sc.seed_laser, ctx.sc.seed,
                                           salt_of((pt_salt + "/qfc").c_str()), ctx.period_ps, span, 1);
        ClickStream sig_clicks = detect(tele, ctx.sc.detector_a, ctx.sc.seed, salt_of(pt_salt.c_str()),
                                        RngPurpose::DetectorA, RngPurpose::DarkCountsA, span, 0);
        const double total_rate = static_cast<double>(sig_clicks.size()) / span_s;

        const int64_t noise_span = static_cast<int64_t>(sw.noise_time_s * 1e12);
        PhotonStream blocked;
        PhotonStream noise_only =
            convert_stream(blocked, conv, ctx.sc.seed_laser, ctx.sc.seed,
                           salt_of((pt_salt + "/noise").c_str()), ctx.period_ps, noise_span, 1);
        ClickStream noise_clicks =
            detect(noise_only, ctx.sc.detector_a, ctx.sc.seed, salt_of((pt_salt + "/noise").c_str()),
                   RngPurpose::DetectorA, RngPurpose::DarkCountsA, noise_span, 0);
        const double noise_rate = static_cast<double>(noise_clicks.size()) / sw.noise_time_s;
        snr[i] = noise_rate > 0.0 ? (total_rate - noise_rate) / noise_rate : 0.0;
    }

    FitReport fit = fit_conversion_curve(fit_points, ctx.sc.conversion.length_cm);
    rep.fits["conversion_curve"] = fit;
    if (!fit.converged) rep.all_converged = false;

    std::vector<double> p_w(sw.n_points), eta_fit(sw.n_points);
    ConversionCurveModel model(ctx.sc.conversion.length_cm);
    const std::vector<double> pv = {fit.params.at("eta_max"), fit.params.at("eta_nor")};
    for (int i = 0; i < sw.n_points; ++i) {
        p_w[i] = 1e-3 * powers_mw[i];
        eta_fit[i] = model.eval(p_w[i], pv);
    }
    const auto curve_path = (ctx.dir / "eta_curve.csv").string();
    write_curve_csv(curve_path, {"P_W", "eta_measured", "eta_fit"}, {p_w, eta_meas, eta_fit});
    rep.outputs["eta_curve"] = curve_path;
    const auto snr_path = (ctx.dir / "snr_curve.csv").string();
    write_curve_csv(snr_path, {"P_mW", "snr"}, {powers_mw, snr});
    rep.outputs["snr_curve"] = snr_path;
    if (ctx.opt.write_svg) {
        const auto svg_path = (ctx.dir / "eta_curve.svg").string();
        write_svg_plot(svg_path, p_w, eta_meas, "internal conversion efficiency vs seed power (W)", eta_fit);
        rep.outputs["eta_curve_svg"] = svg_path;
    }

    rep.derived["eta_peak_power_mw"] =
        1e3 * optimal_seed_power_w(ctx.sc.conversion);
    rep.derived["eta_peak_power_fit_mw"] =
        1e3 * (kPi / (2.0 * ctx.sc.conversion.length_cm)) * (kPi / (2.0 * ctx.sc.conversion.length_cm)) /
        fit.params.at("eta_nor");
    rep.derived["snr_min"] = *std::min_element(snr.begin(), snr.end());
}

void run_power_sweep(const BenchContext& ctx, Report& rep) {
    const SweepConfig& sw = ctx.sc.sweep;
    std::vector<double> powers(sw.n_points), rates(sw.n_points);
    std::vector<std::pair<double, double>> points;
    for (int i = 0; i < sw.n_points; ++i) {
        powers[i] = sw.power_min_mw + (sw.power_max_mw - sw.power_min_mw) * i / (sw.n_points - 1);
        ExcitationConfig exc = ctx.sc.excitation;
        exc.power_mw = powers[i];
        exc.n_pulses = sw.pulses_per_point;
        const int64_t span = static_cast<int64_t>(std::llround(exc.n_pulses * ctx.period_ps));
        const double span_s = ps_to_ns(static_cast<double>(span)) * 1e-9;
        const std::string pt_salt = "power_sweep/" + std::to_string(i);
        PhotonStream photons = simulate_emission(ctx.sc.emitter, exc, ctx.sc.seed,
                                                 salt_of(pt_salt.c_str()), ctx.opt.threads);
        if (ctx.sc.conversion_enabled)
            photons = convert_stream(photons, ctx.sc.conversion, ctx.sc.seed_laser, ctx.sc.seed,
                                     salt_of((pt_salt + "/qfc").c_str()), ctx.period_ps, span, 1);
        ClickStream clicks = detect(photons, ctx.sc.detector_a, ctx.sc.seed, salt_of(pt_salt.c_str()),
                                    RngPurpose::DetectorA, RngPurpose::DarkCountsA, span, 0);
        rates[i] = static_cast<double>(clicks.size()) / span_s;
        points.emplace_back(powers[i], rates[i]);
    }
    const PowerModel model_kind = ctx.sc.excitation.mode == ExcitationMode::ResonantRabi
                                      ? PowerModel::Rabi
                                      : PowerModel::Saturation;
    FitReport fit = fit_power_curve(points, model_kind);
    rep.fits["power_curve"] = fit;
    if (!fit.converged) rep.all_converged = false;

    std::vector<double> fit_rates(sw.n_points);
    if (model_kind == PowerModel::Rabi) {
        RabiPowerModel m;
        const std::vector<double> pv = {fit.params.at("rate_max"), fit.params.at("p_pi")};
        for (int i = 0; i < sw.n_points; ++i) fit_rates[i] = m.eval(powers[i], pv);
    } else {
        SaturationPowerModel m;
        const std::vector<double> pv = {fit.params.at("rate_max"), fit.params.at("p_sat")};
        for (int i = 0; i < sw.n_points; ++i) fit_rates[i] = m.eval(powers[i], pv);
    }
    const auto curve_path = (ctx.dir / "power_curve.csv").string();
    write_curve_csv(curve_path, {"P_mW", "rate_hz", "fit"}, {powers, rates, fit_rates});
    rep.outputs["power_curve"] = curve_path;
    if (ctx.opt.write_svg) {
        const auto svg_path = (ctx.dir / "power_curve.svg").string();
        write_svg_plot(svg_path, powers, rates, "detected rate vs excitation power (mW)", fit_rates);
        rep.outputs["power_curve_svg"] = svg_path;
    }
}

}  // namespace

Report run_scenario(const Scenario& sc, const RunOptions& opt) {
    sc.validate();
    std::filesystem::create_directories(opt.out_dir);

    BenchContext ctx{sc, opt, sc.excitation.period_ps(), 0, 0.0, std::filesystem::path(opt.out_dir)};
    ctx.total_time_ps = static_cast<int64_t>(std::llround(sc.excitation.n_pulses * ctx.period_ps));
    ctx.acq_s = ps_to_ns(static_cast<double>(ctx.total_time_ps)) * 1e-9;

    Report rep;
    rep.scenario_name = sc.name;
    rep.digest = sc.digest;
    rep.seed = sc.seed;
    rep.version = kVersion;

    switch (sc.bench) {
        case BenchKind::Lifetime:
            run_lifetime(ctx, rep);
            break;
        case BenchKind::Hbt:
            run_hbt(ctx, rep);
            break;
        case BenchKind::Hom:
            run_hom(ctx, rep);
            break;
        case BenchKind::Full:
            run_lifetime(ctx, rep);
            run_hbt(ctx, rep);
            run_hom(ctx, rep);
            break;
        case BenchKind::EtaSweep:
            run_eta_sweep(ctx, rep);
            break;
        case BenchKind::PowerSweep:
            run_power_sweep(ctx, rep);
            break;
    }

    if (rep.derived.count("v_hom") && rep.derived.count("g2_zero")) {
        const double g2 = rep.derived["g2_zero"];
        if (g2 < 1.0) {
            rep.derived["m_s"] = indistinguishability(rep.derived["v_hom"], g2);
            const double dv = rep.derived["v_hom_sigma"];
            const double dg = rep.derived["g2_zero_sigma"];
            const double dm_dv = 1.0 / (1.0 - g2);
            const double dm_dg = (1.0 + rep.derived["v_hom"]) / ((1.0 - g2) * (1.0 - g2));
            rep.derived["m_s_sigma"] = std::sqrt(dm_dv * dm_dv * dv * dv + dm_dg * dm_dg * dg * dg);
        }
    }
    if (sc.conversion_enabled) {
        rep.derived["external_efficiency"] =
            external_efficiency(1e-3 * sc.conversion.seed_power_mw, sc.conversion);
    }

    const auto report_path = (ctx.dir / "report.json").string();
    std::ofstream out(report_path);
    if (!out) throw IoError("cannot write report to '" + report_path + "'");
    out << rep.to_json() << "\n";
    rep.outputs["report"] = report_path;
    return rep;
}

}  // namespace qdsim
