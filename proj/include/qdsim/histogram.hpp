#pragma once

// Two-channel correlation histograms and the start-stop (sync-to-click)
// lifetime histogram.

#include <cstdint>
#include <vector>

#include "qdsim/records.hpp"

namespace qdsim {

struct CorrelationHistogram {
    int64_t bin_width_ps = 0;
    int64_t tau_min_ps = 0;
    int64_t tau_max_ps = 0;
    std::vector<uint64_t> counts;
    uint64_t singles_a = 0;
    uint64_t singles_b = 0;
    int64_t acquisition_ps = 0;

    size_t n_bins() const { return counts.size(); }
    double bin_center_ps(size_t i) const { return tau_min_ps + (static_cast<double>(i) + 0.5) * bin_width_ps; }
    bool same_binning(const CorrelationHistogram& other) const {
        return bin_width_ps == other.bin_width_ps && tau_min_ps == other.tau_min_ps &&
               tau_max_ps == other.tau_max_ps;
    }
};

// counts[k] = #{(i,j) : tau_min + k*bin <= t_b(j) - t_a(i) < tau_min + (k+1)*bin},
// two-pointer sweep, O(N + matches). Inputs must be time-ordered.
CorrelationHistogram correlate(const ClickStream& a, const ClickStream& b, int64_t bin_width_ps,
                               int64_t tau_min_ps, int64_t tau_max_ps, int64_t acquisition_ps = 0);

// Element-wise sum; binning must match exactly.
CorrelationHistogram merge(const CorrelationHistogram& h1, const CorrelationHistogram& h2);

// Histogram of click time modulo the pulse period, over [0, period).
CorrelationHistogram fold_start_stop(const ClickStream& clicks, double period_ps, int64_t bin_width_ps,
                                     int64_t acquisition_ps = 0);

}  // namespace qdsim
