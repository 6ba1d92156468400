#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "qdsim/errors.hpp"
#include "qdsim/histogram.hpp"
#include "qdsim/rng.hpp"

using namespace qdsim;

namespace {

ClickStream poisson_clicks(double rate_hz, double duration_s, uint64_t seed, uint8_t channel) {
    RngStream s(derive_key(seed, 0), RngPurpose::ConvertNoise, 0);
    ClickStream out;
    const double gap_ps = 1e12 / rate_hz;
    double t = s.exponential(gap_ps);
    const double end = duration_s * 1e12;
    while (t < end) {
        out.push_back({std::llround(t), channel});
        t += s.exponential(gap_ps);
    }
    return out;
}

}  // namespace

TEST_CASE("identical streams correlate to a delta spike at zero") {
    ClickStream a;
    int64_t t = 0;
    for (int i = 0; i < 10000; ++i) {
        t += 12000 + (i % 7) * 13;
        a.push_back({t, 0});
    }
    const CorrelationHistogram h = correlate(a, a, 100, -5000, 5000);
    uint64_t outside = 0, at_zero = 0;
    for (size_t i = 0; i < h.n_bins(); ++i) {
        if (std::abs(h.bin_center_ps(i)) > 60.0)
            outside += h.counts[i];
        else
            at_zero += h.counts[i];
    }
    CHECK(outside == 0);
    CHECK(at_zero == a.size());
}

TEST_CASE("independent poisson streams give a flat histogram at the product level") {
    const double ra = 80e3, rb = 60e3, dur = 2.0;
    const ClickStream a = poisson_clicks(ra, dur, 100, 0);
    const ClickStream b = poisson_clicks(rb, dur, 101, 1);
    const int64_t bin = 2000;
    const CorrelationHistogram h = correlate(a, b, bin, -100000, 100000, std::llround(dur * 1e12));
    const double expected = ra * rb * (bin * 1e-12) * dur;  // product oracle per bin
    for (size_t i = 0; i < h.n_bins(); ++i) {
        CHECK(std::abs(static_cast<double>(h.counts[i]) - expected) < 5.0 * std::sqrt(expected));
    }
    // chi^2 uniformity across bins
    double chi2 = 0.0;
    double mean = 0.0;
    for (uint64_t c : h.counts) mean += static_cast<double>(c);
    mean /= h.n_bins();
    for (uint64_t c : h.counts) chi2 += (c - mean) * (c - mean) / mean;
    const double dof = static_cast<double>(h.n_bins() - 1);
    CHECK(chi2 < dof + 4.0 * std::sqrt(2.0 * dof));
}

TEST_CASE("correlate is invariant under global time translation") {
    ClickStream a = poisson_clicks(50e3, 0.5, 7, 0);
    ClickStream b = poisson_clicks(50e3, 0.5, 8, 1);
    CorrelationHistogram h1 = correlate(a, b, 500, -20000, 20000);
    const int64_t shift = 987654321;
    for (auto& c : a) c.t_ps += shift;
    for (auto& c : b) c.t_ps += shift;
    CorrelationHistogram h2 = correlate(a, b, 500, -20000, 20000);
    CHECK(h1.counts == h2.counts);
}

TEST_CASE("correlate input validation") {
    ClickStream good{{0, 0}, {10, 0}};
    ClickStream bad{{10, 0}, {0, 0}};
    CHECK_THROWS_AS(correlate(bad, good, 100, -1000, 1000), std::invalid_argument);
    CHECK_THROWS_AS(correlate(good, bad, 100, -1000, 1000), std::invalid_argument);
    CHECK_THROWS_AS(correlate(good, good, 0, -1000, 1000), std::invalid_argument);
    CHECK_THROWS_AS(correlate(good, good, -5, -1000, 1000), std::invalid_argument);
    CHECK_THROWS_AS(correlate(good, good, 100, 1000, -1000), std::invalid_argument);
    CHECK_THROWS_AS(correlate(good, good, 300, -1000, 1000), std::invalid_argument);  // not a multiple
}

TEST_CASE("merge is associative, commutative and identity on empty") {
    const ClickStream a = poisson_clicks(30e3, 0.3, 20, 0);
    const ClickStream b = poisson_clicks(30e3, 0.3, 21, 1);
    const ClickStream c = poisson_clicks(30e3, 0.3, 22, 1);
    const CorrelationHistogram ha = correlate(a, b, 500, -20000, 20000);
    const CorrelationHistogram hb = correlate(a, c, 500, -20000, 20000);
    const CorrelationHistogram hc = correlate(b, c, 500, -20000, 20000);

    const CorrelationHistogram ab = merge(ha, hb);
    const CorrelationHistogram ba = merge(hb, ha);
    CHECK(ab.counts == ba.counts);
    CHECK(merge(merge(ha, hb), hc).counts == merge(ha, merge(hb, hc)).counts);

    CorrelationHistogram empty = ha;
    empty.counts.assign(ha.counts.size(), 0);
    empty.singles_a = empty.singles_b = 0;
    empty.acquisition_ps = 0;
    const CorrelationHistogram same = merge(ha, empty);
    CHECK(same.counts == ha.counts);
    CHECK(same.singles_a == ha.singles_a);

    CorrelationHistogram other = ha;
    other.bin_width_ps *= 2;
    CHECK_THROWS_AS(merge(ha, other), AnalysisError);
}

TEST_CASE("per-part correlation merges to the whole bit-exactly") {
    const ClickStream a = poisson_clicks(60e3, 1.0, 30, 0);
    const ClickStream b = poisson_clicks(60e3, 1.0, 31, 1);
    const CorrelationHistogram whole = correlate(a, b, 1000, -50000, 50000);

    // shard stream a; each a-click keeps its full b-window
    const size_t half = a.size() / 2;
    ClickStream a1(a.begin(), a.begin() + half), a2(a.begin() + half, a.end());
    const CorrelationHistogram h1 = correlate(a1, b, 1000, -50000, 50000);
    const CorrelationHistogram h2 = correlate(a2, b, 1000, -50000, 50000);
    const CorrelationHistogram merged = merge(h1, h2);
    CHECK(merged.counts == whole.counts);
}

TEST_CASE("start-stop fold wraps into one period") {
    ClickStream clicks;
    const double period = 12453.3001245;
    for (int i = 0; i < 1000; ++i)
        clicks.push_back({std::llround(i * period + 300.0 + (i % 3)), 0});
    const CorrelationHistogram h = fold_start_stop(clicks, period, 10);
    uint64_t total = 0;
    for (size_t i = 0; i < h.n_bins(); ++i) {
        total += h.counts[i];
        if (h.counts[i] > 0) CHECK(h.bin_center_ps(i) == doctest::Approx(305.0).epsilon(0.05));
    }
    CHECK(total == clicks.size());
}
