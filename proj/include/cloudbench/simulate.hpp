#pragma once

// Synthetic Cloud generator: planted coefficient presets, Gaussian noise,
// excursion processes, and coupled (shared latent event) downtimes. The
// generator is the ground-truth oracle the analysis pipeline is verified
// against.
//
// Determinism contract: every random quantity is derived from rng_seed
// through named substreams; per-tick noise is keyed by (path, timestamp)
// so a probe campaign measuring the same scheduled instants reproduces the
// same stationary values as direct generation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cloudbench/anova.hpp"
#include "cloudbench/core.hpp"
#include "cloudbench/rng.hpp"

namespace cloudbench {

// Campaign epoch: 2015-03-02 00:00:00 UTC, a Monday.
constexpr std::int64_t kCampaignEpoch = 1425254400;

struct PlantedCoefficients {
    double intercept = 0;
    // term name -> level key -> coefficient; absent keys mean 0.
    std::map<std::string, std::map<std::string, double>> terms;

    double get(const std::string& term, const std::string& level) const {
        auto t = terms.find(term);
        if (t == terms.end()) return 0;
        auto l = t->second.find(level);
        return l == t->second.end() ? 0 : l->second;
    }
};

struct ExcursionProcess {
    double rate_per_week = 0.5;       // events per active path per week
    double duration_mean_samples = 3; // total mean; draw is 1 + geometric
    double depth_mean_z = -4;
    double depth_spread_z = 0;        // per-event spread
    double depth_jitter_z = 0.2;      // per-sample jitter inside an event
    double downtime_prob = 0.9;       // remainder become peaks (sign flip)
    double active_fraction = 1.0;     // fraction of paths with the process
};

struct CouplingGroup {
    std::string name;
    std::vector<Path> paths;
    double probability = 1.0;  // per-member, per-event join probability
    double rate_per_week = 1.0;
    double duration_mean_samples = 3;
    double depth_mean_z = -6;
    double depth_jitter_z = 0.2;
    double downtime_prob = 1.0;
};

struct ScenarioSpec {
    std::vector<DataCenter> dcs;
    PlantedCoefficients planted;
    double noise_sigma = 25;
    std::map<std::string, double> sigma_overrides;  // "src->dst" keys
    std::optional<ExcursionProcess> excursions;
    std::vector<CouplingGroup> coupling_groups;
    bool cap_enabled = true;
    double cap_mbps = 930;
    int sample_duration_s = 300;
    double ar1_coefficient = 0.5;
    std::uint64_t rng_seed = 1;

    Catalog catalog() const { return Catalog(dcs); }

    double sigma_for(const Path& p) const {
        auto it = sigma_overrides.find(p.src + "->" + p.dst);
        return it == sigma_overrides.end() ? noise_sigma : it->second;
    }
};

inline std::string path_key(const Path& p) { return p.src + "->" + p.dst; }

// Planted Eq.-1 style value for a path at a given hour/weekday cell.
inline double planted_value(const ScenarioSpec& spec, const Catalog& cat, const Path& p,
                            int hour, Weekday wd) {
    const DataCenter& s = cat.lookup(p.src);
    const DataCenter& d = cat.lookup(p.dst);
    const PlantedCoefficients& c = spec.planted;
    double v = c.intercept;
    v += c.get("time", std::to_string(hour) + "h");
    v += c.get("weekday", to_string(wd));
    v += c.get("area_src", to_string(s.area));
    v += c.get("area_dst", to_string(d.area));
    v += c.get("csp_src", to_string(s.csp));
    v += c.get("csp_dst", to_string(d.csp));
    v += c.get("dc_src", s.id);
    v += c.get("dc_dst", d.id);
    v += c.get("area_src*area_dst", std::string(to_string(s.area)) + "*" + to_string(d.area));
    v += c.get("csp_src*csp_dst", std::string(to_string(s.csp)) + "*" + to_string(d.csp));
    v += c.get("dc_src*dc_dst", s.id + "*" + d.id);
    return v;
}

// Planted mean averaged over the weekly time/weekday cells.
inline double planted_week_mean(const ScenarioSpec& spec, const Catalog& cat, const Path& p) {
    const PlantedCoefficients& c = spec.planted;
    double time_mean = 0, wd_mean = 0;
    for (int h = 0; h < 24; ++h) time_mean += c.get("time", std::to_string(h) + "h");
    time_mean /= 24;
    for (int w = 0; w < 7; ++w) wd_mean += c.get("weekday", to_string(static_cast<Weekday>(w)));
    wd_mean /= 7;
    return planted_value(spec, cat, p, 0, Weekday::Mon) - c.get("time", "0h") -
           c.get("weekday", "Mon") + time_mean + wd_mean;
}

inline double planted_week_min(const ScenarioSpec& spec, const Catalog& cat, const Path& p) {
    const PlantedCoefficients& c = spec.planted;
    double tmin = 0, wmin = 0;
    for (int h = 0; h < 24; ++h)
        tmin = std::min(tmin, c.get("time", std::to_string(h) + "h"));
    for (int w = 0; w < 7; ++w)
        wmin = std::min(wmin, c.get("weekday", to_string(static_cast<Weekday>(w))));
    return planted_value(spec, cat, p, 0, Weekday::Mon) - c.get("time", "0h") -
           c.get("weekday", "Mon") + tmin + wmin;
}

inline void validate_scenario(const ScenarioSpec& spec) {
    Catalog cat = spec.catalog();
    if (spec.noise_sigma < 0) throw Error("noise_sigma must be nonnegative");
    if (spec.cap_enabled && spec.cap_mbps <= 0) throw Error("cap must be positive");
    if (spec.sample_duration_s <= 0) throw Error("sample duration must be positive");
    if (spec.ar1_coefficient < 0 || spec.ar1_coefficient >= 1)
        throw Error("AR(1) coefficient must lie in [0, 1)");
    if (spec.excursions) {
        const auto& e = *spec.excursions;
        if (e.rate_per_week < 0 || e.duration_mean_samples < 1 ||
            e.downtime_prob < 0 || e.downtime_prob > 1 ||
            e.active_fraction < 0 || e.active_fraction > 1)
            throw Error("invalid excursion process");
    }
    for (const auto& g : spec.coupling_groups) {
        if (g.probability < 0 || g.probability > 1)
            throw Error("coupling probability must lie in [0,1] (group " + g.name + ")");
        if (g.rate_per_week < 0 || g.duration_mean_samples < 1)
            throw Error("invalid coupling group " + g.name);
        for (const auto& p : g.paths) {
            cat.lookup(p.src);
            cat.lookup(p.dst);
        }
    }
    for (const auto& p : cat.all_paths()) {
        double mn = planted_week_min(spec, cat, p);
        if (mn <= 0)
            throw Error("planted mean not positive for path " + path_key(p));
        double wm = planted_week_mean(spec, cat, p);
        if (spec.sigma_for(p) / wm >= 0.5)
            throw Error("planted CV would reach 0.5 for path " + path_key(p));
    }
}

// --- Event streams -------------------------------------------------------

struct TruthEvent {
    std::int64_t start_tick = 0;
    std::int64_t end_tick = 0;  // inclusive
    double depth_z = 0;
    bool downtime = true;
    std::string source;  // "self" or coupling group name
};

struct PathTruth {
    double planted_mean = 0;  // week-averaged
    std::vector<std::int64_t> excursion_ticks;
    std::vector<TruthEvent> events;
    std::int64_t clipped_ticks = 0;
};

struct TruthAnnotations {
    std::uint64_t seed = 0;
    std::int64_t n_ticks = 0;
    std::int64_t tick_seconds = 0;
    std::map<std::string, PathTruth> paths;  // key: "src->dst"
};

struct GeneratedDataset {
    Dataset dataset;
    TruthAnnotations truth;
};

namespace detail {

inline double hashed_uniform(std::uint64_t root, const std::string& tag) {
    std::uint64_t x = splitmix64(derive_seed(root, tag));
    return ((x >> 11) + 0.5) * 0x1.0p-53;
}

inline double hashed_normal(std::uint64_t root, const std::string& tag) {
    std::uint64_t s = derive_seed(root, tag);
    std::uint64_t a = splitmix64(s);
    std::uint64_t b = splitmix64(a);
    double u1 = ((a >> 11) + 0.5) * 0x1.0p-53;
    double u2 = ((b >> 11) + 0.5) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

struct RawEvent {
    std::int64_t start = 0;
    std::int64_t dur = 1;
    double depth_z = 0;
    bool downtime = true;
};

// Memoryless arrivals: Poisson event count over the horizon, uniform
// starts, geometric residual duration beyond the first sample.
inline std::vector<RawEvent> draw_events(Rng& rng, double rate_per_week, double weeks,
                                         double duration_mean, double depth_mean_z,
                                         double depth_spread_z, double downtime_prob,
                                         std::int64_t n_ticks) {
    std::vector<RawEvent> evs;
    long count = rng.poisson(rate_per_week * weeks);
    evs.reserve(count);
    for (long i = 0; i < count; ++i) {
        RawEvent e;
        e.start = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(n_ticks)));
        e.dur = 1;
        if (duration_mean > 1.0) e.dur += rng.geometric(1.0 / (duration_mean - 1.0));
        double base = depth_mean_z + depth_spread_z * rng.normal();
        e.downtime = rng.uniform() < downtime_prob;
        e.depth_z = e.downtime ? base : -base;
        evs.push_back(e);
    }
    return evs;
}

struct Coverage {
    // depth/jitter per covered tick; NaN = not covered. First covering
    // event wins.
    std::vector<double> depth;
    std::vector<double> jitter;

    explicit Coverage(std::int64_t n)
        : depth(n, std::numeric_limits<double>::quiet_NaN()), jitter(n, 0.0) {}

    bool covered(std::int64_t t) const { return !std::isnan(depth[t]); }

    void apply(const RawEvent& e, double jitter_z, std::int64_t n_ticks) {
        for (std::int64_t t = e.start; t <= std::min(e.start + e.dur - 1, n_ticks - 1); ++t) {
            if (!covered(t)) {
                depth[t] = e.depth_z;
                jitter[t] = jitter_z;
            }
        }
    }
};

// Coupling group event streams are drawn once, before any path work,
// from group-named substreams.
inline std::vector<RawEvent> group_event_stream(const ScenarioSpec& spec,
                                                const CouplingGroup& grp, int weeks,
                                                std::int64_t n_ticks) {
    Rng rng(spec.rng_seed, "grp/" + grp.name);
    return draw_events(rng, grp.rate_per_week, weeks, grp.duration_mean_samples,
                       grp.depth_mean_z, 0.0, grp.downtime_prob, n_ticks);
}

inline Coverage path_coverage(const ScenarioSpec& spec, const Path& p, const std::string& key,
                              int weeks, std::int64_t n_ticks,
                              const std::vector<std::vector<RawEvent>>& group_events,
                              PathTruth* truth) {
    Coverage cov(n_ticks);

    if (spec.excursions) {
        const auto& e = *spec.excursions;
        bool active =
            hashed_uniform(spec.rng_seed, "active/" + key) < e.active_fraction;
        if (active && e.rate_per_week > 0) {
            Rng rng(spec.rng_seed, "exc/" + key);
            auto evs = draw_events(rng, e.rate_per_week, weeks, e.duration_mean_samples,
                                   e.depth_mean_z, e.depth_spread_z, e.downtime_prob,
                                   n_ticks);
            for (const auto& ev : evs) {
                if (truth) {
                    TruthEvent te;
                    te.start_tick = ev.start;
                    te.end_tick = std::min(ev.start + ev.dur - 1, n_ticks - 1);
                    te.depth_z = ev.depth_z;
                    te.downtime = ev.downtime;
                    te.source = "self";
                    truth->events.push_back(te);
                }
                cov.apply(ev, e.depth_jitter_z, n_ticks);
            }
        }
    }

    for (size_t g = 0; g < spec.coupling_groups.size(); ++g) {
        const auto& grp = spec.coupling_groups[g];
        if (std::find(grp.paths.begin(), grp.paths.end(), p) == grp.paths.end()) continue;
        Rng join(spec.rng_seed, "join/" + grp.name + "/" + key);
        for (const auto& ev : group_events[g]) {
            bool joined = join.uniform() < grp.probability;
            if (!joined) continue;
            if (truth) {
                TruthEvent te;
                te.start_tick = ev.start;
                te.end_tick = std::min(ev.start + ev.dur - 1, n_ticks - 1);
                te.depth_z = ev.depth_z;
                te.downtime = ev.downtime;
                te.source = grp.name;
                truth->events.push_back(te);
            }
            cov.apply(ev, grp.depth_jitter_z, n_ticks);
        }
    }
    return cov;
}

// Pre-clip draw for one schedule tick; `ts` must be the tick's absolute
// epoch time so the keyed noise streams agree across callers.
inline double tick_value(const ScenarioSpec& spec, double planted, double sigma,
                         const Coverage& cov, std::int64_t t, const std::string& key,
                         std::int64_t ts) {
    const std::string ts_tag = std::to_string(ts);
    if (cov.covered(t)) {
        double g = hashed_normal(spec.rng_seed, "j/" + key + "/" + ts_tag);
        return planted + (cov.depth[t] + cov.jitter[t] * g) * sigma;
    }
    double g = hashed_normal(spec.rng_seed, "n/" + key + "/" + ts_tag);
    return planted + sigma * g;
}

inline double clip_tick_value(const ScenarioSpec& spec, double v, std::int64_t* clipped) {
    if (v < 0) {
        if (clipped) ++*clipped;
        return 0;
    }
    if (spec.cap_enabled && v > spec.cap_mbps) {
        if (clipped) ++*clipped;
        return spec.cap_mbps;
    }
    return v;
}

}  // namespace detail

inline GeneratedDataset generate(const ScenarioSpec& spec, int weeks,
                                 double samples_per_hour = 1.0) {
    if (weeks < 1) throw Error("weeks must be at least 1");
    if (samples_per_hour <= 0) throw Error("samples_per_hour must be positive");
    validate_scenario(spec);
    Catalog cat = spec.catalog();

    const std::int64_t n_ticks = std::llround(weeks * 168.0 * samples_per_hour);
    if (n_ticks < 1) throw Error("schedule has no ticks");
    const std::int64_t tick_seconds = std::llround(3600.0 / samples_per_hour);

    GeneratedDataset out;
    out.truth.seed = spec.rng_seed;
    out.truth.n_ticks = n_ticks;
    out.truth.tick_seconds = tick_seconds;
    out.dataset.samples.reserve(static_cast<size_t>(n_ticks) * cat.all_paths().size());

    std::vector<std::vector<detail::RawEvent>> group_events(spec.coupling_groups.size());
    for (size_t g = 0; g < spec.coupling_groups.size(); ++g)
        group_events[g] = detail::group_event_stream(spec, spec.coupling_groups[g], weeks,
                                                     n_ticks);

    for (const Path& p : cat.all_paths()) {
        const std::string key = path_key(p);
        const double sigma = spec.sigma_for(p);
        PathTruth truth;
        truth.planted_mean = planted_week_mean(spec, cat, p);

        detail::Coverage cov =
            detail::path_coverage(spec, p, key, weeks, n_ticks, group_events, &truth);

        for (std::int64_t t = 0; t < n_ticks; ++t) {
            const std::int64_t ts = kCampaignEpoch + t * tick_seconds;
            double planted = planted_value(spec, cat, p, utc_hour(ts), utc_weekday(ts));
            if (cov.covered(t)) truth.excursion_ticks.push_back(t);
            double v = detail::tick_value(spec, planted, sigma, cov, t, key, ts);
            v = detail::clip_tick_value(spec, v, &truth.clipped_ticks);
            BandwidthSample s;
            s.path = p;
            s.start_utc = ts;
            s.duration_s = spec.sample_duration_s;
            s.mean_mbps = quantize_mbps(v);
            out.dataset.samples.push_back(std::move(s));
        }
        out.truth.paths.emplace(key, std::move(truth));
    }
    return out;
}

namespace detail {

// Exactly standardized AR(1) deviates: sample mean 0, sample sd 1.
inline std::vector<double> ar1_unit_deviates(const ScenarioSpec& spec, const std::string& key,
                                             std::int64_t start_utc, int duration_s) {
    const double phi = spec.ar1_coefficient;
    std::vector<double> w(duration_s);
    Rng rng(spec.rng_seed, "ps/" + key + "/" + std::to_string(start_utc) + "/" +
                               std::to_string(duration_s));
    w[0] = rng.normal();
    const double innov = std::sqrt(1.0 - phi * phi);
    for (int t = 1; t < duration_s; ++t) w[t] = phi * w[t - 1] + innov * rng.normal();

    double m = 0;
    for (double x : w) m += x;
    m /= duration_s;
    double ss = 0;
    for (double x : w) ss += (x - m) * (x - m);
    double sd = std::sqrt(ss / (duration_s - 1));
    for (double& x : w) x = sd > 0 ? (x - m) / sd : 0.0;
    return w;
}

inline double path_cv(const ScenarioSpec& spec, const std::string& key) {
    // 85% of paths in [0.09, 0.2), the rest in [0.2, 0.46].
    Rng rng(spec.rng_seed, "cv/" + key);
    if (rng.uniform() < 0.85) return 0.09 + rng.uniform() * 0.11;
    return 0.20 + rng.uniform() * 0.26;
}

}  // namespace detail

// Per-second payload: planted weekly mean scaled by an exactly
// standardized AR(1) deviation, so the realized CV equals the target.
inline BandwidthSample generate_per_second(const ScenarioSpec& spec, const Path& path,
                                           int duration_s,
                                           std::optional<double> cv_override = std::nullopt,
                                           std::int64_t start_utc = kCampaignEpoch) {
    if (duration_s < 2) throw Error("per-second payloads need at least 2 seconds");
    Catalog cat = spec.catalog();
    const std::string key = path_key(path);

    double cv = cv_override ? *cv_override : detail::path_cv(spec, key);
    if (cv < 0 || cv >= 0.5) throw Error("CV target must lie in [0, 0.5)");

    const double mean = planted_week_mean(spec, cat, path);
    std::vector<double> z = detail::ar1_unit_deviates(spec, key, start_utc, duration_s);

    BandwidthSample s;
    s.path = path;
    s.start_utc = start_utc;
    s.duration_s = duration_s;
    std::vector<double> payload(duration_s);
    double total = 0;
    for (int t = 0; t < duration_s; ++t) {
        double v = mean * (1.0 + cv * z[t]);
        if (v < 0) v = 0;
        payload[t] = quantize_mbps(v);
        total += payload[t];
    }
    s.mean_mbps = quantize_mbps(total / duration_s);
    s.per_second_mbps = std::move(payload);
    return s;
}

// --- Presets -------------------------------------------------------------

inline std::vector<DataCenter> reference_catalog_entries() {
    return {
        {"virginia_c1", Csp::C1, Area::EastUS, "Virginia"},
        {"california_c1", Csp::C1, Area::WestUS, "California"},
        {"ireland_c1", Csp::C1, Area::NorthEurope, "Ireland"},
        {"singapore_c1", Csp::C1, Area::EastAsia, "Singapore"},
        {"sydney_c1", Csp::C1, Area::Australia, "Sydney"},
        {"sao_paulo_c1", Csp::C1, Area::SouthAmerica, "Sao Paulo"},
        {"virginia_c2", Csp::C2, Area::EastUS, "Virginia"},
        {"california_c2", Csp::C2, Area::WestUS, "California"},
        {"brazil_c2", Csp::C2, Area::SouthAmerica, "Brazil"},
        {"dublin_c2", Csp::C2, Area::NorthEurope, "Dublin"},
        {"singapore_c2", Csp::C2, Area::EastAsia, "Singapore"},
        {"virginia_c3", Csp::C3, Area::EastUS, "Virginia"},
        {"london_c3", Csp::C3, Area::NorthEurope, "London"},
        {"hong_kong_c3", Csp::C3, Area::EastAsia, "Hong Kong"},
        {"sydney_c3", Csp::C3, Area::Australia, "Sydney"},
        {"central_c4", Csp::C4, Area::CentralUS, "Central"},
        {"europe_c4", Csp::C4, Area::NorthEurope, "Europe"},
        {"taiwan_c4", Csp::C4, Area::EastAsia, "Taiwan"},
    };
}

inline PlantedCoefficients preset_table3() {
    PlantedCoefficients c;
    c.intercept = 40;

    static const int hour_vals[24] = {12, 13, 19, 18, 15, 11, 13, 9, 11, 16, 14, 10,
                                      11, 5,  2,  0,  5,  3,  11, 10, 13, 13, 8,  19};
    for (int h = 0; h < 24; ++h)
        if (hour_vals[h] != 0) c.terms["time"][std::to_string(h) + "h"] = hour_vals[h];

    c.terms["weekday"] = {{"Mon", 35}, {"Wed", 2}, {"Thu", 3},
                          {"Fri", 4},  {"Sat", 20}, {"Sun", 34}};

    c.terms["area_src"] = {{"EastUS", 41}, {"WestUS", 69}, {"NorthEurope", 30},
                           {"CentralUS", 43}, {"Australia", 55}};
    c.terms["area_dst"] = {{"EastUS", 60}, {"WestUS", 16}, {"NorthEurope", 24},
                           {"CentralUS", 35}, {"Australia", 21}};

    c.terms["csp_src"] = {{"C1", 7}, {"C2", 7}, {"C4", 24}};
    c.terms["csp_dst"] = {{"C2", 75}, {"C3", 49}, {"C4", 78}};

    auto& aa = c.terms["area_src*area_dst"];
    auto put_area_row = [&aa](const char* src, std::initializer_list<std::pair<const char*, int>> row) {
        for (const auto& [dst, v] : row)
            if (v != 0) aa[std::string(src) + "*" + dst] = v;
    };
    put_area_row("WestUS", {{"WestUS", 368}, {"NorthEurope", 110}, {"Australia", 109},
                            {"CentralUS", 137}, {"EastUS", 123}, {"SouthAmerica", 114}});
    put_area_row("NorthEurope", {{"WestUS", 124}, {"NorthEurope", 337}, {"Australia", 94},
                                 {"CentralUS", 125}, {"EastUS", 157}, {"SouthAmerica", 130}});
    put_area_row("CentralUS", {{"WestUS", 164}, {"NorthEurope", 67}, {"Australia", 182},
                               {"CentralUS", 352}, {"EastUS", 182}, {"SouthAmerica", 124}});
    put_area_row("EastUS", {{"WestUS", 169}, {"NorthEurope", 177}, {"Australia", 93},
                            {"CentralUS", 119}, {"EastUS", 365}, {"SouthAmerica", 186}});
    put_area_row("Australia", {{"WestUS", 57}, {"NorthEurope", 57}, {"Australia", 275},
                               {"CentralUS", 98}, {"EastUS", 57}, {"SouthAmerica", 73}});
    put_area_row("SouthAmerica", {{"WestUS", 132}, {"NorthEurope", 120}, {"Australia", 122},
                                  {"CentralUS", 140}, {"EastUS", 136}, {"SouthAmerica", 433}});

    c.terms["csp_src*csp_dst"] = {
        {"C1*C2", 109}, {"C1*C3", 42}, {"C1*C4", 308},
        {"C2*C2", 62},  {"C2*C3", 6},  {"C2*C4", 85},
        {"C4*C2", 61},  {"C4*C3", 49},
    };
    // DC-level terms default to 0; tests may plant entries under
    // terms["dc_src"], terms["dc_dst"], or terms["dc_src*dc_dst"] to
    // exercise the aliased-df logic.
    return c;
}

struct CorrelationTargets {
    double intercept = 0.10;
    std::map<Area, double> area_src;
    std::map<Csp, double> csp_src;
};

inline CorrelationTargets preset_table5() {
    CorrelationTargets t;
    t.intercept = 0.10;
    t.area_src = {{Area::EastAsia, 0.37},  {Area::SouthAmerica, 0.02},
                  {Area::WestUS, 0.00},    {Area::NorthEurope, 0.09},
                  {Area::CentralUS, 0.32}, {Area::EastUS, 0.00},
                  {Area::Australia, 0.09}};
    t.csp_src = {{Csp::C1, 0.27}, {Csp::C2, 0.26}, {Csp::C3, 0.38}, {Csp::C4, 0.00}};
    return t;
}

// --- Scenario builders ---------------------------------------------------

inline ScenarioSpec scenario_table3(std::uint64_t seed) {
    ScenarioSpec s;
    s.dcs = reference_catalog_entries();
    s.planted = preset_table3();
    s.noise_sigma = 25;
    s.rng_seed = seed;
    return s;
}

// Excursion regime tuned so that the pooled stationary fraction clears 85%
// while injected dips stay individually extreme enough to recover.
inline ScenarioSpec scenario_table3_excursions(std::uint64_t seed) {
    ScenarioSpec s = scenario_table3(seed);
    ExcursionProcess e;
    e.rate_per_week = 6.5;
    e.duration_mean_samples = 6;
    e.depth_mean_z = -5.0;
    e.depth_spread_z = 0.0;
    e.depth_jitter_z = 0.2;
    e.downtime_prob = 0.99;
    e.active_fraction = 0.4;
    s.excursions = e;
    return s;
}

namespace detail {

// Expected per-tick coverage intensity of a layer, for hourly sampling.
inline double layer_lambda(double rate_per_week, double duration_mean) {
    return rate_per_week * duration_mean / 168.0;
}

// Variance a joined layer injects into a member path (replacement
// semantics: covered ticks swap sigma-noise for depth + jitter).
inline double layer_var(double q, double lambda, double delta, double jit, double sigma) {
    double p = 1.0 - std::exp(-q * lambda);
    return delta * delta * p * (1.0 - p) + jit * jit * p - sigma * sigma * p;
}

inline double layer_cov(double q, double lambda, double delta) {
    double p = 1.0 - std::exp(-q * lambda);
    double pj = 1.0 - std::exp(-q * q * lambda);
    return delta * delta * (pj - p * p);
}

inline double solve_q(double lambda, double delta, double cov_needed) {
    if (cov_needed <= 0) return 0;
    if (layer_cov(1.0, lambda, delta) <= cov_needed) return 1.0;
    double lo = 0, hi = 1;
    for (int i = 0; i < 60; ++i) {
        double mid = 0.5 * (lo + hi);
        (layer_cov(mid, lambda, delta) < cov_needed ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace detail

// Coupled-downtime scenario realizing the source-side correlation targets:
// one shared event layer per source DC (carries the Area/CSP source
// pattern), one per destination DC, and one per destination area. Join
// probabilities come from a joint fixed-point solve of the two-point
// mixture covariance against total per-path variance, so the planted pair
// correlations land on the targets without any search at generation time.
inline ScenarioSpec scenario_table5_coupling(std::uint64_t seed, int weeks = 3) {
    ScenarioSpec s;
    s.dcs = reference_catalog_entries();
    s.planted.intercept = 200;
    s.noise_sigma = 25;
    s.rng_seed = seed;

    Catalog cat = s.catalog();
    CorrelationTargets t5 = preset_table5();
    const double sigma = s.noise_sigma;
    const double depth_z = -6.0, jit_z = 0.2;
    const double delta = -depth_z * sigma, jit = jit_z * sigma;

    struct Layer {
        std::string name;
        std::vector<size_t> members;  // indices into all_paths()
        double lambda, rate, durm, target, q = 0.5;
    };
    const auto paths = cat.all_paths();
    std::vector<Layer> layers;

    const double l1 = detail::layer_lambda(7, 7);
    const double l2 = detail::layer_lambda(4, 5);
    for (const auto& dc : cat.entries()) {
        Layer a;
        a.name = "src_dc/" + dc.id;
        a.rate = 7;
        a.durm = 7;
        a.lambda = l1;
        a.target = std::min(0.80, t5.intercept + t5.area_src.at(dc.area) + t5.csp_src.at(dc.csp));
        for (size_t i = 0; i < paths.size(); ++i)
            if (paths[i].src == dc.id) a.members.push_back(i);
        layers.push_back(std::move(a));
    }
    for (const auto& dc : cat.entries()) {
        Layer b;
        b.name = "dst_dc/" + dc.id;
        b.rate = 4;
        b.durm = 5;
        b.lambda = l2;
        b.target = 0.30;
        for (size_t i = 0; i < paths.size(); ++i)
            if (paths[i].dst == dc.id) b.members.push_back(i);
        layers.push_back(std::move(b));
    }
    for (int a = 0; a < 7; ++a) {
        Area ar = static_cast<Area>(a);
        Layer c;
        c.name = "dst_area/" + std::string(to_string(ar));
        c.rate = 4;
        c.durm = 5;
        c.lambda = l2;
        c.target = 0.8 * t5.area_src.at(ar);
        for (size_t i = 0; i < paths.size(); ++i)
            if (cat.lookup(paths[i].dst).area == ar) c.members.push_back(i);
        layers.push_back(std::move(c));
    }

    // Joint fixed point: each layer's q is re-solved against the current
    // total variance of its member paths until mutually consistent.
    std::vector<std::vector<size_t>> layers_of_path(paths.size());
    for (size_t li = 0; li < layers.size(); ++li)
        for (size_t pi : layers[li].members) layers_of_path[pi].push_back(li);

    for (int iter = 0; iter < 30; ++iter) {
        std::vector<double> path_var(paths.size(), sigma * sigma);
        for (size_t pi = 0; pi < paths.size(); ++pi)
            for (size_t li : layers_of_path[pi])
                path_var[pi] +=
                    detail::layer_var(layers[li].q, layers[li].lambda, delta, jit, sigma);
        for (auto& L : layers) {
            double rep = 0;
            for (size_t pi : L.members) rep += path_var[pi];
            rep /= L.members.size();
            L.q = detail::solve_q(L.lambda, delta, L.target * rep);
        }
    }

    for (const auto& L : layers) {
        CouplingGroup g;
        g.name = L.name;
        g.probability = L.q;
        g.rate_per_week = L.rate;
        g.duration_mean_samples = L.durm;
        g.depth_mean_z = depth_z;
        g.depth_jitter_z = jit_z;
        g.downtime_prob = 1.0;
        for (size_t pi : L.members) g.paths.push_back(paths[pi]);
        s.coupling_groups.push_back(std::move(g));
    }
    (void)weeks;
    return s;
}

// Null hypothesis twin of the coupling scenario: identical planted level
// and noise, no shared events.
inline ScenarioSpec scenario_null_coupling(std::uint64_t seed) {
    ScenarioSpec s;
    s.dcs = reference_catalog_entries();
    s.planted.intercept = 200;
    s.noise_sigma = 25;
    s.rng_seed = seed;
    return s;
}

// --- JSON (de)serialization ----------------------------------------------

inline nlohmann::json scenario_to_json(const ScenarioSpec& s) {
    nlohmann::json j;
    j["catalog"] = nlohmann::json::array();
    for (const auto& dc : s.dcs)
        j["catalog"].push_back({{"id", dc.id},
                                {"csp", to_string(dc.csp)},
                                {"area", to_string(dc.area)},
                                {"name", dc.display_name}});
    j["planted"]["intercept"] = s.planted.intercept;
    j["planted"]["terms"] = s.planted.terms;
    j["noise_sigma"] = s.noise_sigma;
    if (!s.sigma_overrides.empty()) j["noise_sigma_overrides"] = s.sigma_overrides;
    if (s.excursions) {
        const auto& e = *s.excursions;
        j["excursions"] = {{"rate_per_week", e.rate_per_week},
                           {"duration_mean_samples", e.duration_mean_samples},
                           {"depth_mean_z", e.depth_mean_z},
                           {"depth_spread_z", e.depth_spread_z},
                           {"depth_jitter_z", e.depth_jitter_z},
                           {"downtime_prob", e.downtime_prob},
                           {"active_fraction", e.active_fraction}};
    }
    j["coupling_groups"] = nlohmann::json::array();
    for (const auto& g : s.coupling_groups) {
        nlohmann::json gj = {{"name", g.name},
                             {"probability", g.probability},
                             {"rate_per_week", g.rate_per_week},
                             {"duration_mean_samples", g.duration_mean_samples},
                             {"depth_mean_z", g.depth_mean_z},
                             {"depth_jitter_z", g.depth_jitter_z},
                             {"downtime_prob", g.downtime_prob}};
        gj["paths"] = nlohmann::json::array();
        for (const auto& p : g.paths) gj["paths"].push_back(path_key(p));
        j["coupling_groups"].push_back(std::move(gj));
    }
    j["cap_enabled"] = s.cap_enabled;
    j["cap_mbps"] = s.cap_mbps;
    j["sample_duration_s"] = s.sample_duration_s;
    j["ar1_coefficient"] = s.ar1_coefficient;
    j["rng_seed"] = s.rng_seed;
    return j;
}

inline Path parse_path_key(const std::string& key) {
    auto pos = key.find("->");
    if (pos == std::string::npos || pos == 0 || pos + 2 >= key.size())
        throw Error("malformed path key: " + key);
    return {key.substr(0, pos), key.substr(pos + 2)};
}

inline ScenarioSpec scenario_from_json(const nlohmann::json& j) {
    ScenarioSpec s;
    try {
        for (const auto& e : j.at("catalog"))
            s.dcs.push_back({e.at("id").get<std::string>(),
                             csp_from_string(e.at("csp").get<std::string>()),
                             area_from_string(e.at("area").get<std::string>()),
                             e.value("name", std::string())});
        const auto& pl = j.at("planted");
        s.planted.intercept = pl.value("intercept", 0.0);
        if (pl.contains("terms"))
            s.planted.terms =
                pl.at("terms")
                    .get<std::map<std::string, std::map<std::string, double>>>();
        s.noise_sigma = j.value("noise_sigma", 25.0);
        if (j.contains("noise_sigma_overrides"))
            s.sigma_overrides = j.at("noise_sigma_overrides").get<std::map<std::string, double>>();
        if (j.contains("excursions")) {
            const auto& e = j.at("excursions");
            ExcursionProcess x;
            x.rate_per_week = e.value("rate_per_week", x.rate_per_week);
            x.duration_mean_samples = e.value("duration_mean_samples", x.duration_mean_samples);
            x.depth_mean_z = e.value("depth_mean_z", x.depth_mean_z);
            x.depth_spread_z = e.value("depth_spread_z", x.depth_spread_z);
            x.depth_jitter_z = e.value("depth_jitter_z", x.depth_jitter_z);
            x.downtime_prob = e.value("downtime_prob", x.downtime_prob);
            x.active_fraction = e.value("active_fraction", x.active_fraction);
            s.excursions = x;
        }
        if (j.contains("coupling_groups")) {
            for (const auto& gj : j.at("coupling_groups")) {
                CouplingGroup g;
                g.name = gj.at("name").get<std::string>();
                g.probability = gj.value("probability", g.probability);
                g.rate_per_week = gj.value("rate_per_week", g.rate_per_week);
                g.duration_mean_samples = gj.value("duration_mean_samples", g.duration_mean_samples);
                g.depth_mean_z = gj.value("depth_mean_z", g.depth_mean_z);
                g.depth_jitter_z = gj.value("depth_jitter_z", g.depth_jitter_z);
                g.downtime_prob = gj.value("downtime_prob", g.downtime_prob);
                for (const auto& pk : gj.at("paths"))
                    g.paths.push_back(parse_path_key(pk.get<std::string>()));
                s.coupling_groups.push_back(std::move(g));
            }
        }
        s.cap_enabled = j.value("cap_enabled", true);
        s.cap_mbps = j.value("cap_mbps", 930.0);
        s.sample_duration_s = j.value("sample_duration_s", 300);
        s.ar1_coefficient = j.value("ar1_coefficient", 0.5);
        s.rng_seed = j.value("rng_seed", std::uint64_t{1});
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed scenario: ") + e.what());
    }
    return s;
}

inline nlohmann::json truth_to_json(const TruthAnnotations& t) {
    nlohmann::json j;
    j["seed"] = t.seed;
    j["n_ticks"] = t.n_ticks;
    j["tick_seconds"] = t.tick_seconds;
    j["paths"] = nlohmann::json::object();
    for (const auto& [key, pt] : t.paths) {
        nlohmann::json pj;
        pj["planted_mean"] = pt.planted_mean;
        pj["excursion_ticks"] = pt.excursion_ticks;
        pj["clipped_ticks"] = pt.clipped_ticks;
        pj["events"] = nlohmann::json::array();
        for (const auto& e : pt.events)
            pj["events"].push_back({{"start_tick", e.start_tick},
                                    {"end_tick", e.end_tick},
                                    {"depth_z", e.depth_z},
                                    {"kind", e.downtime ? "downtime" : "peak"},
                                    {"source", e.source}});
        j["paths"][key] = std::move(pj);
    }
    return j;
}

}  // namespace cloudbench
