// qdsim command-line driver: scenario pipelines plus standalone analysis of
// event files and curve data.
//
// Exit codes: 0 ok, 2 config error, 3 analysis non-convergence, 4 I/O error.

#include <cstdio>
#include <deque>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "qdsim/analysis.hpp"
#include "qdsim/errors.hpp"
#include "qdsim/event_io.hpp"
#include "qdsim/plot.hpp"
#include "qdsim/scenario.hpp"

namespace {

using namespace qdsim;

nlohmann::ordered_json fit_to_json(const FitReport& fit) {
    nlohmann::ordered_json j;
    j["model"] = fit.model;
    j["params"] = fit.params;
    j["sigmas"] = fit.sigmas;
    j["residual_norm"] = fit.residual_norm;
    j["iterations"] = fit.iterations;
    j["converged"] = fit.converged;
    return j;
}

void emit_json(const nlohmann::ordered_json& j, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << j.dump(2) << "\n";
        return;
    }
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot open '" + out_path + "' for writing");
    out << j.dump(2) << "\n";
}

// Streaming click-stream correlation: holds only the b-clicks inside the
// sliding tau window, so arbitrarily large files fit in bounded memory.
CorrelationHistogram correlate_files(const std::string& path_a, const std::string& path_b,
                                     int64_t bin_ps, int64_t range_ps) {
    ClickReader ra(path_a);
    ClickReader rb(path_b);
    CorrelationHistogram hist;
    hist.bin_width_ps = bin_ps;
    hist.tau_min_ps = -range_ps;
    hist.tau_max_ps = range_ps;
    hist.counts.assign(static_cast<size_t>(2 * range_ps / bin_ps), 0);

    std::deque<int64_t> window;
    ClickStream chunk_b;
    bool b_done = !rb.next(chunk_b);
    size_t bi = 0;
    int64_t last_b = 0;

    ClickStream chunk_a;
    while (ra.next(chunk_a)) {
        hist.singles_a += chunk_a.size();
        for (const ClickRecord& ca : chunk_a) {
            // grow the window until b-clicks pass ca.t + range
            while (!b_done && (window.empty() || last_b < ca.t_ps + range_ps)) {
                if (bi == chunk_b.size()) {
                    hist.singles_b += chunk_b.size();
                    if (!rb.next(chunk_b)) {
                        b_done = true;
                        break;
                    }
                    bi = 0;
                }
                if (bi < chunk_b.size()) {
                    last_b = chunk_b[bi].t_ps;
                    window.push_back(last_b);
                    ++bi;
                }
            }
            while (!window.empty() && window.front() - ca.t_ps < -range_ps) window.pop_front();
            for (int64_t tb : window) {
                const int64_t tau = tb - ca.t_ps;
                if (tau >= range_ps) break;
                ++hist.counts[static_cast<size_t>((tau + range_ps) / bin_ps)];
            }
        }
    }
    hist.singles_b += chunk_b.size() - bi;
    while (!b_done) {
        hist.singles_b += chunk_b.size();
        b_done = !rb.next(chunk_b);
    }
    return hist;
}

std::vector<std::pair<double, double>> read_points_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<std::pair<double, double>> points;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        double x, y;
        if (std::sscanf(line.c_str(), "%lf,%lf", &x, &y) == 2) points.emplace_back(x, y);
    }
    if (points.empty()) throw IoError(path + ": no data points found");
    return points;
}

int dispatch(int argc, char** argv) {
    CLI::App app{"qdsim: quantum-dot single-photon source and frequency-conversion simulator"};
    app.require_subcommand(1);

    // ---- simulate ----
    auto* sim = app.add_subcommand("simulate", "run a scenario config through the full pipeline");
    std::string sim_config, sim_out_dir = ".";
    std::optional<uint64_t> sim_seed, sim_pulses;
    int sim_threads = 1;
    bool sim_no_svg = false;
    sim->add_option("config", sim_config, "scenario config file")->required();
    sim->add_option("--out-dir", sim_out_dir, "output directory");
    sim->add_option("--seed", sim_seed, "override run.seed");
    sim->add_option("--pulses", sim_pulses, "override excitation.n_pulses");
    sim->add_option("--threads", sim_threads, "worker threads");
    sim->add_flag("--no-svg", sim_no_svg, "skip SVG plots");

    // ---- correlate ----
    auto* corr = app.add_subcommand("correlate", "cross-correlate two click files into a histogram CSV");
    std::string corr_a, corr_b, corr_out = "correlation.csv";
    int64_t corr_bin = 100;
    double corr_range_ns = 75.0;
    corr->add_option("a", corr_a, "channel A click file")->required();
    corr->add_option("b", corr_b, "channel B click file")->required();
    corr->add_option("--bin-ps", corr_bin, "bin width in ps");
    corr->add_option("--range-ns", corr_range_ns, "tau half-range in ns");
    corr->add_option("--out", corr_out, "output CSV");

    // ---- fit-g2 ----
    auto* fg2 = app.add_subcommand("fit-g2", "zero-delay g2 from a correlation histogram CSV");
    std::string fg2_hist, fg2_out;
    double fg2_period_ns = 12.4533001245, fg2_window_ns = 0.0;
    int fg2_side = 3;
    fg2->add_option("hist", fg2_hist, "histogram CSV")->required();
    fg2->add_option("--rep-period-ns", fg2_period_ns, "pulse period in ns");
    fg2->add_option("--window-ns", fg2_window_ns, "peak window in ns (default period/2)");
    fg2->add_option("--n-side-peaks", fg2_side, "side peaks per side");
    fg2->add_option("--out", fg2_out, "output JSON (stdout if omitted)");

    // ---- fit-lifetime ----
    auto* flt = app.add_subcommand("fit-lifetime", "lifetime + beat fit from a start-stop histogram CSV");
    std::string flt_hist, flt_out;
    double flt_min_ns = 0.06, flt_max_ns = 3.0;
    flt->add_option("hist", flt_hist, "histogram CSV")->required();
    flt->add_option("--fit-min-ns", flt_min_ns, "fit range start");
    flt->add_option("--fit-max-ns", flt_max_ns, "fit range end");
    flt->add_option("--out", flt_out, "output JSON (stdout if omitted)");

    // ---- fit-hom ----
    auto* fhm = app.add_subcommand("fit-hom", "HOM visibility from parallel/perpendicular histograms");
    std::string fhm_par, fhm_perp, fhm_out;
    double fhm_period_ns = 12.4533001245, fhm_window_ns = 0.0, fhm_g2 = -1.0;
    int fhm_side = 3;
    fhm->add_option("parallel", fhm_par, "parallel-configuration histogram CSV")->required();
    fhm->add_option("perpendicular", fhm_perp, "cross-configuration histogram CSV")->required();
    fhm->add_option("--rep-period-ns", fhm_period_ns, "pulse period in ns");
    fhm->add_option("--window-ns", fhm_window_ns, "peak window in ns (default period/2)");
    fhm->add_option("--n-side-peaks", fhm_side, "side peaks per side");
    fhm->add_option("--g2", fhm_g2, "g2(0) for the corrected indistinguishability");
    fhm->add_option("--out", fhm_out, "output JSON (stdout if omitted)");

    // ---- fit-eta ----
    auto* fet = app.add_subcommand("fit-eta", "conversion-efficiency curve fit from CSV (P_W, eta)");
    std::string fet_points, fet_out;
    double fet_length = 4.8;
    fet->add_option("points", fet_points, "CSV with P_W,eta rows")->required();
    fet->add_option("--length-cm", fet_length, "waveguide length in cm");
    fet->add_option("--out", fet_out, "output JSON (stdout if omitted)");

    // ---- fit-power ----
    auto* fpw = app.add_subcommand("fit-power", "excitation power curve fit from CSV (P, rate)");
    std::string fpw_points, fpw_out, fpw_model = "rabi";
    fpw->add_option("points", fpw_points, "CSV with P,rate rows")->required();
    fpw->add_option("--model", fpw_model, "rabi | saturation");
    fpw->add_option("--out", fpw_out, "output JSON (stdout if omitted)");

    // ---- report ----
    auto* repc = app.add_subcommand("report", "print the report.json of a finished scenario run");
    std::string rep_dir = ".";
    repc->add_option("dir", rep_dir, "scenario output directory");

    // ---- calibrate ----
    auto* cal = app.add_subcommand("calibrate", "solve the broadening decomposition for linewidth+overlap targets");
    double cal_t1 = 0.2622, cal_fwhm_mhz = 915.0, cal_overlap = 0.95, cal_tau_c = 1000.0,
           cal_sep_ns = 12.4533001245;
    std::string cal_out;
    cal->add_option("--t1-ns", cal_t1, "radiative lifetime");
    cal->add_option("--fwhm-mhz", cal_fwhm_mhz, "target total linewidth");
    cal->add_option("--overlap", cal_overlap, "target mean pair overlap");
    cal->add_option("--tau-c-ns", cal_tau_c, "spectral diffusion correlation time");
    cal->add_option("--separation-ns", cal_sep_ns, "pair separation");
    cal->add_option("--out", cal_out, "output JSON (stdout if omitted)");

    CLI11_PARSE(app, argc, argv);

    if (sim->parsed()) {
        std::map<std::string, std::string> overrides;
        if (sim_seed) overrides["run.seed"] = std::to_string(*sim_seed);
        if (sim_pulses) overrides["excitation.n_pulses"] = std::to_string(*sim_pulses);
        Scenario sc = parse_scenario(sim_config, overrides);
        RunOptions opts;
        opts.out_dir = sim_out_dir;
        opts.threads = sim_threads;
        opts.write_svg = !sim_no_svg;
        Report rep = run_scenario(sc, opts);
        std::cout << rep.to_json() << "\n";
        return rep.all_converged ? 0 : 3;
    }
    if (corr->parsed()) {
        const int64_t range = static_cast<int64_t>(corr_range_ns * 1e3 / corr_bin) * corr_bin;
        CorrelationHistogram hist = correlate_files(corr_a, corr_b, corr_bin, range);
        write_histogram_csv(corr_out, hist);
        std::cout << "wrote " << corr_out << " (" << hist.n_bins() << " bins, " << hist.singles_a << "+"
                  << hist.singles_b << " singles)\n";
        return 0;
    }
    if (fg2->parsed()) {
        CorrelationHistogram hist = read_histogram_csv(fg2_hist);
        const double period_ps = fg2_period_ns * 1e3;
        const double window_ps = fg2_window_ns > 0.0 ? fg2_window_ns * 1e3 : 0.5 * period_ps;
        const ValueWithSigma g2 = g2_zero(hist, period_ps, window_ps, fg2_side);
        nlohmann::ordered_json j;
        j["g2_zero"] = g2.value;
        j["sigma"] = g2.sigma;
        emit_json(j, fg2_out);
        return 0;
    }
    if (flt->parsed()) {
        CorrelationHistogram hist = read_histogram_csv(flt_hist);
        LifetimeFitOptions opts;
        opts.fit_min_ns = flt_min_ns;
        opts.fit_max_ns = flt_max_ns;
        FitReport fit = fit_lifetime(hist, opts);
        emit_json(fit_to_json(fit), flt_out);
        return fit.converged ? 0 : 3;
    }
    if (fhm->parsed()) {
        CorrelationHistogram hp = read_histogram_csv(fhm_par);
        CorrelationHistogram hx = read_histogram_csv(fhm_perp);
        const double period_ps = fhm_period_ns * 1e3;
        const double window_ps = fhm_window_ns > 0.0 ? fhm_window_ns * 1e3 : 0.5 * period_ps;
        const ValueWithSigma v = hom_visibility(hp, hx, period_ps, window_ps, fhm_side);
        nlohmann::ordered_json j;
        j["v_hom"] = v.value;
        j["sigma"] = v.sigma;
        if (fhm_g2 >= 0.0) j["m_s"] = indistinguishability(v.value, fhm_g2);
        emit_json(j, fhm_out);
        return 0;
    }
    if (fet->parsed()) {
        FitReport fit = fit_conversion_curve(read_points_csv(fet_points), fet_length);
        emit_json(fit_to_json(fit), fet_out);
        return fit.converged ? 0 : 3;
    }
    if (fpw->parsed()) {
        PowerModel model;
        if (fpw_model == "rabi")
            model = PowerModel::Rabi;
        else if (fpw_model == "saturation")
            model = PowerModel::Saturation;
        else
            throw ConfigError("fit-power: --model must be rabi or saturation");
        FitReport fit = fit_power_curve(read_points_csv(fpw_points), model);
        emit_json(fit_to_json(fit), fpw_out);
        return fit.converged ? 0 : 3;
    }
    if (repc->parsed()) {
        std::ifstream in(rep_dir + "/report.json");
        if (!in) throw IoError("no report.json in '" + rep_dir + "'");
        std::cout << in.rdbuf();
        return 0;
    }
    if (cal->parsed()) {
        BroadeningTargets t;
        t.t1_ns = cal_t1;
        t.target_fwhm_ghz = cal_fwhm_mhz * 1e-3;
        t.target_overlap = cal_overlap;
        t.tau_c_ns = cal_tau_c;
        t.pair_separation_ns = cal_sep_ns;
        BroadeningSolution sol = calibrate_broadening(t);
        nlohmann::ordered_json j;
        j["gamma_fast_ghz"] = sol.gamma_fast_ghz;
        j["sigma_sd_ghz"] = sol.sigma_sd_ghz;
        j["fwhm_residual_mhz"] = sol.fwhm_residual_ghz * 1e3;
        j["overlap_residual"] = sol.overlap_residual;
        emit_json(j, cal_out);
        return 0;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const AnalysisError& e) {
        std::cerr << "analysis error: " << e.what() << "\n";
        return 3;
    } catch (const CalibrationError& e) {
        std::cerr << "calibration error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 4;
    } catch (const std::domain_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
