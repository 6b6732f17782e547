#pragma once

// Splits a bandwidth series into a stationary Gaussian component and
// excursions, then classifies the series shape.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cloudbench/core.hpp"
#include "cloudbench/stats.hpp"

namespace cloudbench {

enum class Pattern { I, II, III, IV };

inline std::string to_string(Pattern p) {
    switch (p) {
        case Pattern::I: return "I";
        case Pattern::II: return "II";
        case Pattern::III: return "III";
        case Pattern::IV: return "IV";
    }
    throw Error("unreachable pattern");
}

struct Decomposition {
    std::vector<size_t> stationary_indices;  // sorted
    std::vector<size_t> excursion_indices;   // sorted
    double mu = 0;
    double sigma = 0;
    Pattern pattern = Pattern::I;
    double stationary_fraction = 1;
    bool non_convergent = false;
    // Lilliefors statistic of the retained set, one entry per test in
    // trimming order; tests assert it never increases step to step.
    std::vector<double> lf_trace;
};

struct PatternThresholds {
    double low_fraction = 0.01;   // below this: pattern I
    double ii_iii_split = 0.05;   // at or below: II, above: III
    double peak_z = 3.0;          // any excursion beyond +peak_z: IV
};

struct ExcursionEvent {
    enum class Kind { downtime, peak };
    Kind kind;
    size_t start_index;  // inclusive
    size_t end_index;    // inclusive
    double depth;        // mean z-score of member samples
};

inline Pattern classify_pattern(const Decomposition& d, const std::vector<double>& values,
                                const PatternThresholds& th = {}) {
    double frac = values.empty() ? 0.0
                                 : static_cast<double>(d.excursion_indices.size()) / values.size();
    if (frac < th.low_fraction) return Pattern::I;
    if (d.sigma > 0) {
        for (size_t i : d.excursion_indices) {
            if ((values[i] - d.mu) / d.sigma > th.peak_z) return Pattern::IV;
        }
    }
    return frac <= th.ii_iii_split ? Pattern::II : Pattern::III;
}

// Iterative trim: while the retained set fails normality at 5% and more
// than half of the series (and enough samples to keep testing) remains,
// drop the sample with the largest |z| under the current fit and retest.
inline Decomposition decompose_values(const std::vector<double>& values,
                                      const PatternThresholds& th = {}) {
    const size_t n = values.size();
    if (n < 30) throw Error("series too short to decompose (need 30 samples)");

    std::vector<size_t> retained(n);
    for (size_t i = 0; i < n; ++i) retained[i] = i;

    Decomposition d;
    auto refit = [&]() {
        std::vector<double> xs;
        xs.reserve(retained.size());
        for (size_t i : retained) xs.push_back(values[i]);
        auto st = mean_std_cv(xs);
        d.mu = st.mean;
        d.sigma = st.std;
        return xs;
    };

    {
        std::vector<double> xs = refit();
        if (d.sigma == 0) throw Error("zero-variance series");
    }

    while (true) {
        std::vector<double> xs = refit();
        if (d.sigma == 0) {
            // Trimming degenerated the retained set; treat as floor hit.
            d.non_convergent = true;
            break;
        }
        auto lf = lilliefors(xs);
        d.lf_trace.push_back(lf.statistic);
        if (!lf.reject) {
            d.non_convergent = false;
            break;
        }
        double frac = static_cast<double>(retained.size()) / n;
        if (frac <= 0.5 || retained.size() <= 30) {
            d.non_convergent = true;
            break;
        }
        size_t worst = 0;
        double worst_z = -1;
        for (size_t k = 0; k < retained.size(); ++k) {
            double z = std::abs((values[retained[k]] - d.mu) / d.sigma);
            if (z > worst_z) {
                worst_z = z;
                worst = k;
            }
        }
        d.excursion_indices.push_back(retained[worst]);
        retained.erase(retained.begin() + worst);
    }

    d.stationary_indices = retained;
    std::sort(d.excursion_indices.begin(), d.excursion_indices.end());
    d.stationary_fraction = static_cast<double>(retained.size()) / n;
    d.pattern = classify_pattern(d, values, th);
    return d;
}

inline Decomposition decompose_series(const BandwidthSeries& series,
                                      const PatternThresholds& th = {}) {
    return decompose_values(series.values(), th);
}

// Groups consecutive excursion indices into maximal runs, splitting each
// run where the z-score changes sign so no event mixes dips and peaks.
inline std::vector<ExcursionEvent> extract_events(const Decomposition& d,
                                                  const std::vector<double>& values) {
    std::vector<ExcursionEvent> events;
    if (d.excursion_indices.empty()) return events;
    if (d.sigma <= 0) throw Error("decomposition has no usable sigma");

    auto zof = [&](size_t i) { return (values[i] - d.mu) / d.sigma; };
    auto is_neg = [&](size_t i) { return zof(i) < 0; };

    size_t run_start = d.excursion_indices[0];
    size_t prev = run_start;
    bool neg = is_neg(run_start);
    double zsum = zof(run_start);
    size_t count = 1;

    auto flush = [&](size_t end) {
        ExcursionEvent e;
        e.start_index = run_start;
        e.end_index = end;
        e.depth = zsum / count;
        e.kind = e.depth < 0 ? ExcursionEvent::Kind::downtime : ExcursionEvent::Kind::peak;
        events.push_back(e);
    };

    for (size_t k = 1; k < d.excursion_indices.size(); ++k) {
        size_t i = d.excursion_indices[k];
        bool n2 = is_neg(i);
        if (i == prev + 1 && n2 == neg) {
            zsum += zof(i);
            ++count;
        } else {
            flush(prev);
            run_start = i;
            neg = n2;
            zsum = zof(i);
            count = 1;
        }
        prev = i;
    }
    flush(prev);
    return events;
}

inline std::vector<ExcursionEvent> extract_events(const Decomposition& d,
                                                  const BandwidthSeries& series) {
    return extract_events(d, series.values());
}

}  // namespace cloudbench
