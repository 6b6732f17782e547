#pragma once

// Measurement-duration calibration: per-second CV distributions,
// error-ratio-vs-aggregation-time curves, and a duration recommendation.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cloudbench/core.hpp"
#include "cloudbench/stats.hpp"

namespace cloudbench {

constexpr int kGroundTruthSeconds = 900;

struct ErrorRatioCurve {
    Path path;
    // ratios[k] is the ratio for aggregation time N = k+1 seconds; the
    // final entry (N = 900) is exactly zero by construction.
    std::vector<double> ratios;

    double at(int n_seconds) const {
        if (n_seconds < 1 || n_seconds > static_cast<int>(ratios.size()))
            throw Error("aggregation time out of range");
        return ratios[n_seconds - 1];
    }
};

inline ErrorRatioCurve error_ratio_curve(const BandwidthSample& sample,
                                         int window = kGroundTruthSeconds) {
    if (!sample.per_second_mbps)
        throw Error("sample has no per-second payload");
    const std::vector<double>& xs = *sample.per_second_mbps;
    if (static_cast<int>(xs.size()) != window)
        throw Error("per-second payload must cover the full " + std::to_string(window) +
                    " s window, got " + std::to_string(xs.size()));
    double total = 0;
    for (double x : xs) total += x;
    double truth = total / window;
    if (truth <= 0) throw Error("ground-truth mean must be positive");

    ErrorRatioCurve c;
    c.path = sample.path;
    c.ratios.resize(window);
    double prefix = 0;
    for (int n = 1; n <= window; ++n) {
        prefix += xs[n - 1];
        c.ratios[n - 1] = std::abs(prefix / n - truth) / truth;
    }
    c.ratios[window - 1] = 0;  // exact, not just within rounding
    return c;
}

inline Ecdf cv_distribution(const std::vector<BandwidthSample>& samples) {
    if (samples.empty()) throw Error("no samples to build a CV distribution from");
    std::vector<double> cvs;
    cvs.reserve(samples.size());
    for (const auto& s : samples) {
        if (!s.per_second_mbps)
            throw Error("path " + s.path.src + "->" + s.path.dst +
                        ": sample has no per-second payload");
        try {
            cvs.push_back(mean_std_cv(*s.per_second_mbps).cv);
        } catch (const Error& e) {
            throw Error("path " + s.path.src + "->" + s.path.dst + ": " + e.what());
        }
    }
    return Ecdf(std::move(cvs));
}

struct DurationRecommendation {
    bool achievable;
    // Recommended aggregation seconds when achievable; otherwise the
    // earliest duration meeting the bound pointwise (the full window
    // when even that fails).
    int seconds;
};

// Smallest N whose quantile of curves stays within the threshold at N and
// at every later N. The full window itself is excluded: its ratio is zero
// by construction, so recommending it would be vacuous.
inline DurationRecommendation recommend_duration(const std::vector<ErrorRatioCurve>& curves,
                                                 double threshold, double quantile) {
    if (curves.empty()) throw Error("no curves");
    if (threshold <= 0) throw Error("threshold must be positive");
    if (quantile <= 0 || quantile > 1) throw Error("quantile must be in (0, 1]");
    const int window = static_cast<int>(curves[0].ratios.size());
    for (const auto& c : curves)
        if (static_cast<int>(c.ratios.size()) != window)
            throw Error("curves disagree on window length");

    // Quantile q holds iff at least ceil(q*m) of the m curves are within the
    // bound; the epsilon only absorbs float error in the product.
    const size_t need =
        static_cast<size_t>(std::ceil(quantile * static_cast<double>(curves.size()) - 1e-9));
    std::vector<bool> ok(window, false);
    for (int n = 1; n < window; ++n) {
        size_t within = 0;
        for (const auto& c : curves)
            if (c.ratios[n - 1] <= threshold) ++within;
        ok[n - 1] = within >= need;
    }

    int best_pointwise = window;
    for (int n = 1; n < window; ++n) {
        if (ok[n - 1]) {
            best_pointwise = n;
            break;
        }
    }
    int rec = -1;
    bool suffix_ok = true;
    for (int n = window - 1; n >= 1; --n) {
        suffix_ok = suffix_ok && ok[n - 1];
        if (suffix_ok) rec = n;
    }
    if (rec > 0) return {true, rec};
    return {false, best_pointwise};
}

}  // namespace cloudbench
