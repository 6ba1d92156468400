#include "qdsim/histogram.hpp"

#include <cmath>
#include <stdexcept>

#include "qdsim/errors.hpp"

namespace qdsim {

CorrelationHistogram correlate(const ClickStream& a, const ClickStream& b, int64_t bin_width_ps,
                               int64_t tau_min_ps, int64_t tau_max_ps, int64_t acquisition_ps) {
    if (bin_width_ps <= 0) throw std::invalid_argument("correlate: bin width must be positive");
    if (tau_max_ps <= tau_min_ps) throw std::invalid_argument("correlate: empty tau range");
    if ((tau_max_ps - tau_min_ps) % bin_width_ps != 0)
        throw std::invalid_argument("correlate: range must be a multiple of the bin width");
    for (size_t i = 1; i < a.size(); ++i)
        if (a[i].t_ps < a[i - 1].t_ps) throw std::invalid_argument("correlate: stream a not time-ordered");
    for (size_t i = 1; i < b.size(); ++i)
        if (b[i].t_ps < b[i - 1].t_ps) throw std::invalid_argument("correlate: stream b not time-ordered");

    CorrelationHistogram hist;
    hist.bin_width_ps = bin_width_ps;
    hist.tau_min_ps = tau_min_ps;
    hist.tau_max_ps = tau_max_ps;
    hist.counts.assign(static_cast<size_t>((tau_max_ps - tau_min_ps) / bin_width_ps), 0);
    hist.singles_a = a.size();
    hist.singles_b = b.size();
    hist.acquisition_ps = acquisition_ps;

    size_t lo = 0;
    for (const ClickRecord& ca : a) {
        while (lo < b.size() && b[lo].t_ps - ca.t_ps < tau_min_ps) ++lo;
        for (size_t j = lo; j < b.size(); ++j) {
            const int64_t tau = b[j].t_ps - ca.t_ps;
            if (tau >= tau_max_ps) break;
            ++hist.counts[static_cast<size_t>((tau - tau_min_ps) / bin_width_ps)];
        }
    }
    return hist;
}

CorrelationHistogram merge(const CorrelationHistogram& h1, const CorrelationHistogram& h2) {
    if (!h1.same_binning(h2)) throw AnalysisError("merge: histogram binning mismatch");
    CorrelationHistogram out = h1;
    for (size_t i = 0; i < out.counts.size(); ++i) out.counts[i] += h2.counts[i];
    out.singles_a += h2.singles_a;
    out.singles_b += h2.singles_b;
    out.acquisition_ps += h2.acquisition_ps;
    return out;
}

CorrelationHistogram fold_start_stop(const ClickStream& clicks, double period_ps, int64_t bin_width_ps,
                                     int64_t acquisition_ps) {
    if (!(period_ps > 0.0)) throw std::invalid_argument("fold: period must be positive");
    if (bin_width_ps <= 0) throw std::invalid_argument("fold: bin width must be positive");
    const int64_t range = static_cast<int64_t>(period_ps / bin_width_ps) * bin_width_ps;

    CorrelationHistogram hist;
    hist.bin_width_ps = bin_width_ps;
    hist.tau_min_ps = 0;
    hist.tau_max_ps = range;
    hist.counts.assign(static_cast<size_t>(range / bin_width_ps), 0);
    hist.singles_b = clicks.size();
    hist.acquisition_ps = acquisition_ps;

    for (const ClickRecord& c : clicks) {
        const double idx = std::floor(c.t_ps / period_ps);
        double tau = c.t_ps - idx * period_ps;
        if (tau < 0.0) tau += period_ps;
        const auto bin = static_cast<size_t>(tau / bin_width_ps);
        if (bin < hist.counts.size()) ++hist.counts[bin];
    }
    return hist;
}

}  // namespace qdsim
