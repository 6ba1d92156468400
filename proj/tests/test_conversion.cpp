#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "qdsim/analysis.hpp"
#include "qdsim/bench.hpp"
#include "qdsim/conversion.hpp"
#include "qdsim/emitter.hpp"
#include "qdsim/histogram.hpp"

using namespace qdsim;

namespace {

ConversionParams paper_budget() {
    ConversionParams c;
    c.eta_nor_per_w_cm2 = 0.44;
    c.length_cm = 4.8;
    c.eta_max_internal = 0.567;
    c.in_coupling = 0.83;
    c.fibre_coupling = 0.86;
    c.filter_transmission = 0.94;
    c.noise_coeff_hz_per_mw = 12.0;
    return c;
}

EmitterParams test_emitter_params() {
    EmitterParams p;
    p.t1_ns = 0.2622;
    return p;
}

ExcitationConfig test_excitation(uint64_t n) {
    ExcitationConfig exc;
    exc.power_mw = 0.005;
    exc.reference_power_mw = 0.005;
    exc.rep_rate_mhz = 80.3;
    exc.n_pulses = n;
    return exc;
}

}  // namespace

TEST_CASE("internal efficiency follows the sin^2 law") {
    const ConversionParams c = paper_budget();
    CHECK(internal_efficiency(0.0, c) == doctest::Approx(0.0));
    // first maximum at (pi/(2L))^2/eta_nor = 243.4 mW
    const double p_star = optimal_seed_power_w(c);
    CHECK(p_star == doctest::Approx(0.2434).epsilon(1e-3));
    CHECK(internal_efficiency(p_star, c) == doctest::Approx(c.eta_max_internal).epsilon(1e-12));
    CHECK(internal_efficiency(0.243, c) == doctest::Approx(0.567).epsilon(1e-4));
    for (double p = 0.0; p < 1.0; p += 0.01) {
        const double eta = internal_efficiency(p, c);
        CHECK(eta >= 0.0);
        CHECK(eta <= c.eta_max_internal + 1e-15);
    }
    CHECK_THROWS_AS(internal_efficiency(-0.1, c), std::domain_error);
}

TEST_CASE("optimal seed power scaling") {
    ConversionParams c = paper_budget();
    const double p0 = optimal_seed_power_w(c);
    c.length_cm *= 2.0;
    CHECK(optimal_seed_power_w(c) == doctest::Approx(p0 / 4.0));
    c = paper_budget();
    c.eta_nor_per_w_cm2 *= 4.0;
    CHECK(optimal_seed_power_w(c) == doctest::Approx(p0 / 4.0));
    c.eta_nor_per_w_cm2 = 0.0;
    CHECK_THROWS_AS(optimal_seed_power_w(c), std::domain_error);
    c = paper_budget();
    c.length_cm = 0.0;
    CHECK_THROWS_AS(optimal_seed_power_w(c), std::domain_error);
}

TEST_CASE("external efficiency closes the published loss budget") {
    ConversionParams c = paper_budget();
    const double peak = external_efficiency(optimal_seed_power_w(c), c);
    CHECK(peak == doctest::Approx(0.38).epsilon(0.01));
    // budget closure: filter transmission from the three published factors
    CHECK(0.38 / (0.83 * 0.567 * 0.86) == doctest::Approx(0.94).epsilon(0.01));
    c.filter_transmission = 0.0;
    CHECK(external_efficiency(optimal_seed_power_w(c), c) == doctest::Approx(0.0));
}

TEST_CASE("noise rate is linear in seed power") {
    const ConversionParams c = paper_budget();
    CHECK(noise_rate_hz(100.0, c) == doctest::Approx(1200.0));
    CHECK(noise_rate_hz(0.0, c) == doctest::Approx(0.0));
    // arithmetic sanity on the published SNR scale at the efficiency peak
    CHECK(856000.0 / noise_rate_hz(243.0, c) == doctest::Approx(293.6).epsilon(1e-3));
    CHECK(856000.0 / noise_rate_hz(243.0, c) > 250.0);
}

TEST_CASE("seed mode sampler: single mode, comb offsets and envelope statistics") {
    SeedLaser laser;
    laser.fsr_ghz = 0.177;
    laser.envelope_fwhm_ghz = 4.0;
    laser.n_modes = 22;
    laser.mode_fluctuation_time_ns = 1000.0;
    laser.mode_concentration = 1.0;

    SeedLaser single = laser;
    single.n_modes = 1;
    SeedModeSampler s1(single, derive_key(5, 1));
    for (int i = 0; i < 100; ++i) CHECK(s1.offset_at(i * 100000, 0.37) == 0.0);

    SeedModeSampler comb(laser, derive_key(5, 2));
    RngStream draws(derive_key(5, 3), RngPurpose::Emission, 0);
    double sum = 0.0, sum2 = 0.0;
    const int n = 400000;
    std::set<long long> comb_positions;
    for (int i = 0; i < n; ++i) {
        // ~50 epochs x thousands of draws
        const int64_t t = static_cast<int64_t>(i) * 125000;
        const double off = comb.offset_at(t, draws.uniform());
        const double steps = off / laser.fsr_ghz;
        CHECK(std::abs(steps - std::llround(steps)) < 1e-9);  // integer multiples of the FSR
        comb_positions.insert(std::llround(steps));
        sum += off;
        sum2 += off * off;
    }
    // long-run offset histogram follows the gain envelope over the comb
    double env_mean = 0.0, env_m2 = 0.0;
    const auto& w = comb.envelope_weights();
    for (int k = 0; k < laser.n_modes; ++k) {
        env_mean += w[k] * comb.mode_offset_ghz(k);
        env_m2 += w[k] * comb.mode_offset_ghz(k) * comb.mode_offset_ghz(k);
    }
    const double rms = std::sqrt(sum2 / n - (sum / n) * (sum / n));
    const double env_rms = std::sqrt(env_m2 - env_mean * env_mean);
    CHECK(rms == doctest::Approx(env_rms).epsilon(0.05));
    CHECK(comb_positions.size() > 15);  // most of the comb visited
}

TEST_CASE("lossless single-mode conversion preserves the stream") {
    ConversionParams c;
    c.eta_nor_per_w_cm2 = 0.44;
    c.length_cm = 4.8;
    c.eta_max_internal = 1.0;
    c.in_coupling = 1.0;
    c.fibre_coupling = 1.0;
    c.filter_transmission = 1.0;
    c.noise_coeff_hz_per_mw = 0.0;
    c.seed_power_mw = 1e3 * optimal_seed_power_w(c);
    SeedLaser laser;
    laser.n_modes = 1;

    const EmitterParams em = test_emitter_params();
    const ExcitationConfig exc = test_excitation(50000);
    const PhotonStream in = simulate_emission(em, exc, 7, salt_of("qfc_id"), 1);
    const int64_t total = std::llround(exc.n_pulses * exc.period_ps());
    const PhotonStream out = convert_stream(in, c, laser, 7, salt_of("qfc_id"), exc.period_ps(), total, 2);
    REQUIRE(out.size() == in.size());
    for (size_t i = 0; i < in.size(); ++i) {
        CHECK(out[i].t_ps == in[i].t_ps);
        CHECK(out[i].nu_offset_ghz == in[i].nu_offset_ghz);
        CHECK(out[i].pulse_index == in[i].pulse_index);
        CHECK(out[i].origin == in[i].origin);
    }
}

TEST_CASE("convert_stream rejects unordered input and is deterministic across threads") {
    ConversionParams c = paper_budget();
    c.seed_power_mw = 164.4;
    SeedLaser laser;
    laser.mode_concentration = 1.0;

    PhotonStream bad(2);
    bad[0].t_ps = 100;
    bad[1].t_ps = 50;
    CHECK_THROWS_AS(convert_stream(bad, c, laser, 1, 1, 12453.3, 1000000, 1), std::invalid_argument);

    const EmitterParams em = test_emitter_params();
    const ExcitationConfig exc = test_excitation(300000);
    const PhotonStream in = simulate_emission(em, exc, 8, salt_of("qfc_thr"), 1);
    const int64_t total = std::llround(exc.n_pulses * exc.period_ps());
    const PhotonStream o1 = convert_stream(in, c, laser, 8, salt_of("qfc_thr"), exc.period_ps(), total, 1);
    const PhotonStream o2 = convert_stream(in, c, laser, 8, salt_of("qfc_thr"), exc.period_ps(), total, 2);
    REQUIRE(o1.size() == o2.size());
    bool equal = true;
    for (size_t i = 0; i < o1.size(); ++i)
        equal &= o1[i].t_ps == o2[i].t_ps && o1[i].nu_offset_ghz == o2[i].nu_offset_ghz &&
                 o1[i].origin == o2[i].origin;
    CHECK(equal);
    for (size_t i = 1; i < o1.size(); ++i) CHECK(o1[i].t_ps >= o1[i - 1].t_ps);  // globally time-ordered

    // survivor count consistent with the external efficiency
    uint64_t survivors = 0;
    for (const auto& r : o1)
        if (r.origin != Origin::Noise) ++survivors;
    const double eta = external_efficiency(1e-3 * c.seed_power_mw, c);
    const double expect = eta * static_cast<double>(in.size());
    CHECK(std::abs(static_cast<double>(survivors) - expect) < 4.0 * std::sqrt(expect));
}

TEST_CASE("bernoulli thinning preserves the normalized correlation histogram") {
    EmitterParams em = test_emitter_params();
    em.epsilon_multi = 0.3;  // strong center peak so the comparison has teeth
    const ExcitationConfig exc = test_excitation(600000);
    const PhotonStream in = simulate_emission(em, exc, 17, salt_of("thin"), 2);
    const int64_t total = std::llround(exc.n_pulses * exc.period_ps());

    ConversionParams half;  // pure 50% thinning, no noise
    half.eta_nor_per_w_cm2 = 0.44;
    half.length_cm = 4.8;
    half.eta_max_internal = 0.5;
    half.in_coupling = 1.0;
    half.fibre_coupling = 1.0;
    half.filter_transmission = 1.0;
    half.noise_coeff_hz_per_mw = 0.0;
    half.seed_power_mw = 1e3 * optimal_seed_power_w(half);
    SeedLaser laser;
    laser.n_modes = 1;
    const PhotonStream thinned =
        convert_stream(in, half, laser, 17, salt_of("thin"), exc.period_ps(), total, 1);

    DetectorParams ideal;
    auto [a1, b1] = hbt_measure(in, 0.5, ideal, ideal, 23, salt_of("thin_bench"), total);
    auto [a2, b2] = hbt_measure(thinned, 0.5, ideal, ideal, 29, salt_of("thin_bench2"), total);
    const double period = exc.period_ps();
    const int64_t bin = 100;
    const int64_t range = static_cast<int64_t>(std::ceil(6.0 * period / bin)) * bin;
    const CorrelationHistogram h1 = correlate(a1, b1, bin, -range, range, total);
    const CorrelationHistogram h2 = correlate(a2, b2, bin, -range, range, total);

    // chi^2 consistency of the peak-normalized histograms at 95%
    double chi2 = 0.0;
    int dof = 0;
    auto norm_peak = [&](const CorrelationHistogram& h, int k, double& val, double& var) {
        double far = 0.0;
        int n_far = 0;
        for (int j : {-5, -4, 4, 5}) {
            far += peak_area(h, j * period, 0.5 * period);
            ++n_far;
        }
        far /= n_far;
        const double area = peak_area(h, k * period, 0.5 * period);
        val = area / far;
        var = (area + area * area / (far * n_far)) / (far * far);
    };
    for (int k : {-3, -2, -1, 0, 1, 2, 3}) {
        double v1, var1, v2, var2;
        norm_peak(h1, k, v1, var1);
        norm_peak(h2, k, v2, var2);
        chi2 += (v1 - v2) * (v1 - v2) / (var1 + var2);
        ++dof;
    }
    CHECK(chi2 < 14.07);  // chi^2 95% quantile, 7 dof

    // antibunching is untouched by thinning: g2 equal within errors
    const ValueWithSigma g1 = g2_zero(h1, period, 0.5 * period, 2);
    const ValueWithSigma g2v = g2_zero(h2, period, 0.5 * period, 2);
    CHECK(std::abs(g1.value - g2v.value) < 3.0 * std::hypot(g1.sigma, g2v.sigma));
}

TEST_CASE("fitted lifetime is invariant under conversion") {
    EmitterParams em = test_emitter_params();
    em.beat_visibility = 0.5;
    em.delta_fss_ghz = 4.807;
    const ExcitationConfig exc = test_excitation(2000000);
    const PhotonStream in = simulate_emission(em, exc, 41, salt_of("t1inv"), 2);
    const int64_t total = std::llround(exc.n_pulses * exc.period_ps());

    ConversionParams half;
    half.eta_max_internal = 0.5;
    half.in_coupling = 1.0;
    half.fibre_coupling = 1.0;
    half.filter_transmission = 1.0;
    half.noise_coeff_hz_per_mw = 0.0;
    half.seed_power_mw = 1e3 * optimal_seed_power_w(half);
    SeedLaser laser;
    laser.n_modes = 1;
    const PhotonStream out = convert_stream(in, half, laser, 41, salt_of("t1inv"), exc.period_ps(), total, 2);

    DetectorParams det;
    det.jitter_sigma_ps = 20.0;
    auto fit_t1 = [&](const PhotonStream& ph, const char* tag) {
        ClickStream clicks = detect(ph, det, 43, salt_of(tag), RngPurpose::DetectorA,
                                    RngPurpose::DarkCountsA, total, 0);
        const CorrelationHistogram hist = fold_start_stop(clicks, exc.period_ps(), 10, total);
        const FitReport rep = fit_lifetime(hist, {});
        REQUIRE(rep.converged);
        return rep.params.at("t1_ns");
    };
    const double t1_before = fit_t1(in, "t1inv_before");
    const double t1_after = fit_t1(out, "t1inv_after");
    CHECK(std::abs(t1_after - t1_before) / t1_before < 0.01);
}

TEST_CASE("noise photons alone give a flat correlation histogram") {
    ConversionParams c = paper_budget();
    c.seed_power_mw = 243.0;
    c.noise_coeff_hz_per_mw = 40000.0;  // boosted for statistics
    SeedLaser laser;
    const double period = 12453.3001245;
    const int64_t total = static_cast<int64_t>(5e11);  // 0.5 s
    PhotonStream empty;
    const PhotonStream noise = convert_stream(empty, c, laser, 3, salt_of("flat"), period, total, 2);
    REQUIRE(noise.size() > 100000);
    for (const auto& r : noise) CHECK(r.origin == Origin::Noise);

    DetectorParams ideal;
    auto [a, b] = hbt_measure(noise, 0.5, ideal, ideal, 3, salt_of("flat_bench"), total);
    const CorrelationHistogram hist = correlate(a, b, 5000, -600000, 600000, total);
    double mean = 0.0;
    for (uint64_t cnt : hist.counts) mean += static_cast<double>(cnt);
    mean /= hist.n_bins();
    double chi2 = 0.0;
    for (uint64_t cnt : hist.counts) chi2 += (cnt - mean) * (cnt - mean) / mean;
    const double dof = static_cast<double>(hist.n_bins() - 1);
    CHECK(chi2 < dof + 4.0 * std::sqrt(2.0 * dof));
}
