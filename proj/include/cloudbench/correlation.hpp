#pragma once

// Cross-path correlation: timestamp alignment, pairwise Pearson rho over
// all directed paths, five-class labeling, mean-rho matrices, and the
// shared-source triple records the correlation model is fitted on.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <future>
#include <limits>
#include <map>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "cloudbench/anova.hpp"
#include "cloudbench/core.hpp"
#include "cloudbench/stats.hpp"

namespace cloudbench {

constexpr int kAlignToleranceS = 300;
constexpr int kMinOverlap = 100;

struct AlignedPair {
    std::vector<double> xs;
    std::vector<double> ys;
    size_t size() const { return xs.size(); }
};

// Greedy nearest-first matching: candidate index pairs within the
// tolerance are taken in order of |time difference| (ties by position),
// each sample matched at most once.
inline AlignedPair align_series(const BandwidthSeries& a, const BandwidthSeries& b,
                                int tolerance_s = kAlignToleranceS) {
    if (a.samples.empty() || b.samples.empty()) throw Error("cannot align an empty series");
    struct Cand {
        std::int64_t dt;
        size_t i, j;
    };
    std::vector<Cand> cands;
    size_t lo = 0;
    for (size_t i = 0; i < a.samples.size(); ++i) {
        std::int64_t ta = a.samples[i].start_utc;
        while (lo < b.samples.size() && b.samples[lo].start_utc < ta - tolerance_s) ++lo;
        for (size_t j = lo; j < b.samples.size() && b.samples[j].start_utc <= ta + tolerance_s; ++j)
            cands.push_back({std::llabs(b.samples[j].start_utc - ta), i, j});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
        if (x.dt != y.dt) return x.dt < y.dt;
        if (x.i != y.i) return x.i < y.i;
        return x.j < y.j;
    });
    std::vector<char> used_a(a.samples.size(), 0), used_b(b.samples.size(), 0);
    std::vector<std::pair<size_t, size_t>> chosen;
    for (const auto& c : cands) {
        if (used_a[c.i] || used_b[c.j]) continue;
        used_a[c.i] = used_b[c.j] = 1;
        chosen.push_back({c.i, c.j});
    }
    std::sort(chosen.begin(), chosen.end());
    AlignedPair out;
    out.xs.reserve(chosen.size());
    out.ys.reserve(chosen.size());
    for (auto [i, j] : chosen) {
        out.xs.push_back(a.samples[i].mean_mbps);
        out.ys.push_back(b.samples[j].mean_mbps);
    }
    return out;
}

struct PairRho {
    Path path_a;
    Path path_b;
    double rho = 0;
    int overlap = 0;
};

struct SkippedPair {
    Path path_a;
    Path path_b;
    int overlap = 0;
    std::string reason;
};

struct PairRhoSet {
    std::vector<PairRho> pairs;
    std::vector<SkippedPair> skipped;

    size_t coefficient_count(bool doubled) const {
        return doubled ? 2 * pairs.size() : pairs.size();
    }

    Ecdf rho_ecdf() const {
        std::vector<double> v;
        v.reserve(pairs.size());
        for (const auto& p : pairs) v.push_back(p.rho);
        return Ecdf(std::move(v));
    }
};

inline PairRhoSet all_pair_rhos(const Dataset& dataset, int min_overlap = kMinOverlap,
                                int tolerance_s = kAlignToleranceS) {
    const std::vector<BandwidthSeries> series = dataset.series();
    if (series.size() < 2) throw Error("need at least 2 paths");

    struct Slot {
        bool ok = false;
        PairRho pair;
        SkippedPair skip;
    };
    const size_t n = series.size();
    const size_t total = n * (n - 1) / 2;
    std::vector<Slot> slots(total);

    auto flat_of = [n](size_t i, size_t j) {
        // row-major upper triangle, i < j
        return i * (2 * n - i - 1) / 2 + (j - i - 1);
    };

    auto work = [&](size_t begin, size_t end) {
        for (size_t i = 0; i + 1 < n; ++i) {
            size_t row_start = flat_of(i, i + 1);
            size_t row_end = flat_of(i, n - 1);
            if (row_end < begin || row_start >= end) continue;
            for (size_t j = i + 1; j < n; ++j) {
                size_t k = flat_of(i, j);
                if (k < begin || k >= end) continue;
                Slot& s = slots[k];
                AlignedPair ap = align_series(series[i], series[j], tolerance_s);
                int overlap = static_cast<int>(ap.size());
                if (overlap < min_overlap) {
                    s.skip = {series[i].path, series[j].path, overlap, "insufficient overlap"};
                    continue;
                }
                try {
                    double rho = pearson_rho(ap.xs, ap.ys);
                    s.pair = {series[i].path, series[j].path, rho, overlap};
                    s.ok = true;
                } catch (const Error& e) {
                    s.skip = {series[i].path, series[j].path, overlap, e.what()};
                }
            }
        }
    };

    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    size_t chunks = std::min<size_t>(hw, total);
    std::vector<std::future<void>> jobs;
    for (size_t c = 0; c < chunks; ++c) {
        size_t begin = total * c / chunks, end = total * (c + 1) / chunks;
        jobs.push_back(std::async(std::launch::async, work, begin, end));
    }
    for (auto& j : jobs) j.get();

    PairRhoSet out;
    for (const auto& s : slots) {
        if (s.ok)
            out.pairs.push_back(s.pair);
        else
            out.skipped.push_back(s.skip);
    }
    return out;
}

enum class RhoClass { StrongNeg, SignifNeg, None, SignifPos, StrongPos };

inline RhoClass classify_rho(double rho) {
    if (!(rho >= -1.0 - 1e-12 && rho <= 1.0 + 1e-12)) throw Error("rho out of [-1,1]");
    double a = std::abs(rho);
    if (a < 0.25) return RhoClass::None;
    if (a < 0.5) return rho > 0 ? RhoClass::SignifPos : RhoClass::SignifNeg;
    return rho > 0 ? RhoClass::StrongPos : RhoClass::StrongNeg;
}

inline std::string to_string(RhoClass c) {
    switch (c) {
        case RhoClass::StrongNeg: return "StrongNeg";
        case RhoClass::SignifNeg: return "SignifNeg";
        case RhoClass::None: return "None";
        case RhoClass::SignifPos: return "SignifPos";
        case RhoClass::StrongPos: return "StrongPos";
        default: break;
    }
    throw Error("unreachable rho class");
}

struct MeanRhoMatrix {
    std::vector<std::string> ids;              // catalog order
    std::vector<std::vector<double>> cell;     // [src][dst]; NaN = missing/self
    std::vector<double> by_source;             // mean over a source's cells
    std::vector<double> by_dest;
    std::vector<Path> missing;                 // paths with no computed pairs
};

inline MeanRhoMatrix mean_rho_matrix(const std::vector<PairRho>& pairs, const Catalog& catalog) {
    if (pairs.empty()) throw Error("no pair correlations");
    const size_t n = catalog.size();
    MeanRhoMatrix m;
    for (const auto& dc : catalog.entries()) m.ids.push_back(dc.id);
    m.cell.assign(n, std::vector<double>(n, std::numeric_limits<double>::quiet_NaN()));

    std::map<std::pair<size_t, size_t>, std::pair<double, int>> acc;  // path -> (sum, count)
    auto bump = [&](const Path& p, double rho) {
        auto key = std::make_pair(catalog.index_of(p.src), catalog.index_of(p.dst));
        auto& a = acc[key];
        a.first += rho;
        a.second += 1;
    };
    for (const auto& pr : pairs) {
        bump(pr.path_a, pr.rho);
        bump(pr.path_b, pr.rho);
    }
    for (const auto& [key, a] : acc) m.cell[key.first][key.second] = a.first / a.second;

    for (const auto& p : catalog.all_paths()) {
        if (!acc.count({catalog.index_of(p.src), catalog.index_of(p.dst)}))
            m.missing.push_back(p);
    }

    m.by_source.assign(n, std::numeric_limits<double>::quiet_NaN());
    m.by_dest.assign(n, std::numeric_limits<double>::quiet_NaN());
    for (size_t i = 0; i < n; ++i) {
        double s = 0;
        int c = 0;
        for (size_t j = 0; j < n; ++j)
            if (!std::isnan(m.cell[i][j])) {
                s += m.cell[i][j];
                ++c;
            }
        if (c) m.by_source[i] = s / c;
    }
    for (size_t j = 0; j < n; ++j) {
        double s = 0;
        int c = 0;
        for (size_t i = 0; i < n; ++i)
            if (!std::isnan(m.cell[i][j])) {
                s += m.cell[i][j];
                ++c;
            }
        if (c) m.by_dest[j] = s / c;
    }
    return m;
}

struct TripleRecord {
    std::string s, d1, d2;  // distinct data-center ids
    double rho = 0;
    Area area_s, area_d1, area_d2;
    Csp csp_s, csp_d1, csp_d2;
};

struct TripleSet {
    std::vector<TripleRecord> records;
    std::vector<std::array<std::string, 3>> excluded;  // (s, d1, d2)
};

// One record per ordered (S, D1, D2) triple of distinct data-centers; the
// response is the correlation of paths S->D1 and S->D2, so each unordered
// destination pair contributes two records with equal rho.
inline TripleSet build_triples(const Dataset& dataset, const Catalog& catalog,
                               int min_overlap = kMinOverlap,
                               int tolerance_s = kAlignToleranceS) {
    if (catalog.size() < 3) throw Error("need at least 3 data-centers");
    const std::vector<BandwidthSeries> series = dataset.series();
    std::map<Path, size_t> series_of;
    for (size_t i = 0; i < series.size(); ++i) series_of[series[i].path] = i;

    const size_t n = catalog.size();
    TripleSet out;
    // rho for unordered destination pairs of one source, keyed (d1,d2) d1<d2
    for (size_t si = 0; si < n; ++si) {
        const std::string& s = catalog.entries()[si].id;
        std::map<std::pair<size_t, size_t>, double> rho_of;
        for (size_t a = 0; a < n; ++a) {
            if (a == si) continue;
            for (size_t b = a + 1; b < n; ++b) {
                if (b == si) continue;
                Path pa{s, catalog.entries()[a].id};
                Path pb{s, catalog.entries()[b].id};
                auto ia = series_of.find(pa), ib = series_of.find(pb);
                if (ia == series_of.end() || ib == series_of.end()) continue;
                AlignedPair ap = align_series(series[ia->second], series[ib->second], tolerance_s);
                if (static_cast<int>(ap.size()) < min_overlap) continue;
                try {
                    rho_of[{a, b}] = pearson_rho(ap.xs, ap.ys);
                } catch (const Error&) {
                    // zero-variance pair: excluded below
                }
            }
        }
        for (size_t a = 0; a < n; ++a) {
            if (a == si) continue;
            for (size_t b = 0; b < n; ++b) {
                if (b == si || b == a) continue;
                auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
                auto it = rho_of.find(key);
                const auto& d1 = catalog.entries()[a];
                const auto& d2 = catalog.entries()[b];
                if (it == rho_of.end()) {
                    out.excluded.push_back({s, d1.id, d2.id});
                    continue;
                }
                TripleRecord r;
                r.s = s;
                r.d1 = d1.id;
                r.d2 = d2.id;
                r.rho = it->second;
                const auto& src = catalog.entries()[si];
                r.area_s = src.area;
                r.csp_s = src.csp;
                r.area_d1 = d1.area;
                r.csp_d1 = d1.csp;
                r.area_d2 = d2.area;
                r.csp_d2 = d2.csp;
                out.records.push_back(std::move(r));
            }
        }
    }
    return out;
}

inline FitInput correlation_input(const std::vector<TripleRecord>& records,
                                  const ModelSpec& spec) {
    std::vector<std::unordered_map<std::string, int>> lut(spec.factors.size());
    for (size_t f = 0; f < spec.factors.size(); ++f)
        for (size_t l = 0; l < spec.factors[f].levels.size(); ++l)
            lut[f][spec.factors[f].levels[l]] = static_cast<int>(l);
    auto fac = [&](const std::string& name) { return spec.factor_index(name); };
    const size_t f_as = fac("area_src"), f_a1 = fac("area_dst1"), f_a2 = fac("area_dst2");
    const size_t f_cs = fac("csp_src"), f_c1 = fac("csp_dst1"), f_c2 = fac("csp_dst2");
    const size_t f_ds = fac("dc_src"), f_d1 = fac("dc_dst1"), f_d2 = fac("dc_dst2");
    auto idx = [&](size_t f, const std::string& name) {
        auto it = lut[f].find(name);
        if (it == lut[f].end())
            throw Error("level " + name + " not declared for factor " + spec.factors[f].name);
        return it->second;
    };

    FitInput in;
    in.y.reserve(records.size());
    in.levels.assign(spec.factors.size(), {});
    for (const auto& r : records) {
        in.y.push_back(r.rho);
        in.levels[f_as].push_back(idx(f_as, to_string(r.area_s)));
        in.levels[f_a1].push_back(idx(f_a1, to_string(r.area_d1)));
        in.levels[f_a2].push_back(idx(f_a2, to_string(r.area_d2)));
        in.levels[f_cs].push_back(idx(f_cs, to_string(r.csp_s)));
        in.levels[f_c1].push_back(idx(f_c1, to_string(r.csp_d1)));
        in.levels[f_c2].push_back(idx(f_c2, to_string(r.csp_d2)));
        in.levels[f_ds].push_back(idx(f_ds, r.s));
        in.levels[f_d1].push_back(idx(f_d1, r.d1));
        in.levels[f_d2].push_back(idx(f_d2, r.d2));
    }
    return in;
}

}  // namespace cloudbench
