#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "qdsim/analysis.hpp"
#include "qdsim/bench.hpp"
#include "qdsim/emitter.hpp"
#include "qdsim/errors.hpp"
#include "qdsim/histogram.hpp"
#include "qdsim/rng.hpp"

using namespace qdsim;

namespace {

constexpr double kPeriodPs = 12453.3001245;

// Attenuated pulsed coherent source: Poisson photon number per pulse with
// exponential within-pulse timing.
PhotonStream coherent_pulsed(double mean_per_pulse, uint64_t n_pulses, double t1_ps, uint64_t seed) {
    RngStream s(derive_key(seed, 1), RngPurpose::CoherentSource, 0);
    PhotonStream out;
    for (uint64_t i = 0; i < n_pulses; ++i) {
        const double t0 = static_cast<double>(i) * kPeriodPs;
        // Poisson via exponential spacings
        int k = 0;
        double acc = s.exponential(1.0);
        while (acc < mean_per_pulse) {
            ++k;
            acc += s.exponential(1.0);
        }
        std::vector<int64_t> times;
        for (int j = 0; j < k; ++j) times.push_back(std::llround(t0 + s.exponential(t1_ps)));
        std::sort(times.begin(), times.end());
        for (int64_t t : times) {
            PhotonRecord rec;
            rec.t_ps = t;
            rec.pulse_index = i;
            out.push_back(rec);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("g2 of an attenuated coherent source is 1") {
    const uint64_t n_pulses = 2000000;
    const PhotonStream photons = coherent_pulsed(0.25, n_pulses, 262.2, 11);
    const int64_t total = std::llround(n_pulses * kPeriodPs);
    DetectorParams ideal;
    auto [a, b] = hbt_measure(photons, 0.5, ideal, ideal, 12, salt_of("coh"), total);
    const int64_t bin = 100;
    const int64_t range = static_cast<int64_t>(std::ceil(6.0 * kPeriodPs / bin)) * bin;
    const CorrelationHistogram h = correlate(a, b, bin, -range, range, total);
    const ValueWithSigma g2 = g2_zero(h, kPeriodPs, 0.5 * kPeriodPs, 3);
    CHECK(std::abs(g2.value - 1.0) < 0.02);
    CHECK(std::abs(g2.value - 1.0) < 3.0 * g2.sigma + 0.01);
}

TEST_CASE("g2 of a perfect single-photon stream is 0") {
    EmitterParams p;
    p.t1_ns = 0.2622;
    ExcitationConfig exc;
    exc.power_mw = 0.005;
    exc.reference_power_mw = 0.005;
    exc.rep_rate_mhz = 80.3;
    exc.n_pulses = 200000;
    const PhotonStream photons = simulate_emission(p, exc, 13, salt_of("pure"), 1);
    const int64_t total = std::llround(exc.n_pulses * exc.period_ps());
    DetectorParams ideal;
    auto [a, b] = hbt_measure(photons, 0.5, ideal, ideal, 13, salt_of("pure"), total);
    const int64_t bin = 100;
    const int64_t range = static_cast<int64_t>(std::ceil(6.0 * kPeriodPs / bin)) * bin;
    const CorrelationHistogram h = correlate(a, b, bin, -range, range, total);
    const ValueWithSigma g2 = g2_zero(h, kPeriodPs, 0.5 * kPeriodPs, 3);
    CHECK(g2.value == doctest::Approx(0.0));
}

TEST_CASE("g2 errors") {
    CorrelationHistogram empty;
    empty.bin_width_ps = 100;
    empty.tau_min_ps = -74800;
    empty.tau_max_ps = 74800;
    empty.counts.assign(1496, 0);
    CHECK_THROWS_AS(g2_zero(empty, kPeriodPs, 0.5 * kPeriodPs, 3), AnalysisError);

    CorrelationHistogram narrow = empty;
    narrow.tau_min_ps = -5000;
    narrow.tau_max_ps = 5000;
    narrow.counts.assign(100, 1);
    CHECK_THROWS_AS(g2_zero(narrow, kPeriodPs, 0.5 * kPeriodPs, 3), AnalysisError);
    CHECK_THROWS_AS(g2_zero(empty, kPeriodPs, 2.0 * kPeriodPs, 3), std::invalid_argument);
}

TEST_CASE("hom visibility of identical histograms is exactly zero") {
    CorrelationHistogram h;
    h.bin_width_ps = 100;
    h.tau_min_ps = -74800;
    h.tau_max_ps = 74800;
    h.counts.assign(1496, 0);
    RngStream s(derive_key(5, 5), RngPurpose::Emission, 0);
    for (auto& c : h.counts) c = static_cast<uint64_t>(s.uniform() * 50);
    const ValueWithSigma v = hom_visibility(h, h, kPeriodPs, 0.5 * kPeriodPs, 3);
    CHECK(v.value == 0.0);
}

TEST_CASE("corrected indistinguishability") {
    CHECK(indistinguishability(0.88, 0.040) == doctest::Approx(0.958).epsilon(1e-3));
    CHECK(indistinguishability(0.60, 0.043) == doctest::Approx(0.672).epsilon(1e-2));
    CHECK(indistinguishability(0.75, 0.0) == doctest::Approx(0.75));
    CHECK_THROWS_AS(indistinguishability(0.5, 1.0), std::domain_error);
    CHECK_THROWS_AS(indistinguishability(0.5, 1.2), std::domain_error);
}

TEST_CASE("g2 side-peak selection avoids blink-bunched near peaks") {
    // histogram with elevated near peaks; distant-side normalization must
    // use the far level
    CorrelationHistogram h;
    h.bin_width_ps = 100;
    h.tau_min_ps = -74800;
    h.tau_max_ps = 74800;
    h.counts.assign(1496, 0);
    auto fill_peak = [&](int k, uint64_t area) {
        const double center = k * kPeriodPs;
        const size_t bin = static_cast<size_t>((center - h.tau_min_ps) / h.bin_width_ps);
        h.counts[bin] = area;
    };
    fill_peak(0, 100);
    for (int k : {-1, 1}) fill_peak(k, 1500);  // blink-bunched
    for (int k : {-2, 2, -3, 3}) fill_peak(k, 1200);
    for (int k : {-4, 4, -5, 5}) fill_peak(k, 1000);
    const ValueWithSigma far3 = g2_zero(h, kPeriodPs, 0.5 * kPeriodPs, 3);
    // most distant three per side: k in {3,4,5}: mean (1200+1000+1000)/3
    CHECK(far3.value == doctest::Approx(100.0 / (3200.0 / 3.0)).epsilon(1e-6));
    const ValueWithSigma far1 = g2_zero(h, kPeriodPs, 0.5 * kPeriodPs, 1);
    CHECK(far1.value == doctest::Approx(0.1).epsilon(1e-6));
}
