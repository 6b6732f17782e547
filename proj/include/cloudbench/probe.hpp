#pragma once

// Measurement campaigns: a schedule coordinator drives pluggable runners
// (external command or simulator-backed) across endpoint pairs, honoring
// the rule that no two in-flight measurements share an endpoint, and
// appends results to a line-atomic JSONL sink.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "cloudbench/core.hpp"
#include "cloudbench/simulate.hpp"

namespace cloudbench {

// --- Logging ---------------------------------------------------------------

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, ErrorOnly = 3, Off = 4 };

namespace detail {

inline LogLevel log_threshold_from_env() {
    const char* v = std::getenv("CLOUDBENCH_LOG");
    if (!v) return LogLevel::Warn;
    std::string s(v);
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (s == "debug") return LogLevel::Debug;
    if (s == "info") return LogLevel::Info;
    if (s == "warn" || s == "warning") return LogLevel::Warn;
    if (s == "error") return LogLevel::ErrorOnly;
    if (s == "off" || s == "quiet" || s == "none") return LogLevel::Off;
    return LogLevel::Warn;
}

}  // namespace detail

inline LogLevel log_threshold() {
    static const LogLevel lv = detail::log_threshold_from_env();
    return lv;
}

inline void log_line(LogLevel lv, const std::string& msg) {
    if (static_cast<int>(lv) < static_cast<int>(log_threshold())) return;
    static const char* names[] = {"debug", "info", "warn", "error"};
    static std::mutex mu;
    std::lock_guard<std::mutex> g(mu);
    std::fprintf(stderr, "[%s] %s\n", names[static_cast<int>(lv)], msg.c_str());
}

// --- Config ------------------------------------------------------------------

struct ProbeConfig {
    // (data-center id, host[:port]) in declaration order; order fixes the
    // deterministic path enumeration.
    std::vector<std::pair<std::string, std::string>> endpoints;
    int duration_s = 300;
    int interval_s = 3600;
    int ticks = 1;
    std::string window = "16M";
    int max_parallel = 0;  // 0: bounded only by endpoint exclusion
    std::string pacing = "virtual";
    std::int64_t start_utc = kCampaignEpoch;

    void validate(const Catalog& catalog) const {
        if (endpoints.size() < 2) throw Error("config needs at least 2 endpoints");
        std::set<std::string> seen;
        for (const auto& [id, host] : endpoints) {
            if (!catalog.contains(id)) throw Error("endpoint id not in catalog: " + id);
            if (!seen.insert(id).second) throw Error("duplicate endpoint id: " + id);
            if (trim(host).empty()) throw Error("empty host for endpoint " + id);
        }
        if (duration_s < 1) throw Error("duration_s must be at least 1");
        if (duration_s > interval_s) throw Error("duration_s exceeds interval_s");
        if (ticks < 1) throw Error("ticks must be at least 1");
        if (max_parallel < 0) throw Error("max_parallel must be nonnegative");
        if (pacing != "virtual" && pacing != "wall")
            throw Error("pacing must be \"virtual\" or \"wall\"");
    }
};

inline ProbeConfig probe_config_from_json(const std::string& text) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed probe config: ") + e.what());
    }
    ProbeConfig c;
    try {
        if (!j.contains("endpoints")) throw Error("probe config lacks \"endpoints\"");
        for (auto it = j["endpoints"].begin(); it != j["endpoints"].end(); ++it)
            c.endpoints.emplace_back(it.key(), it.value().get<std::string>());
        if (j.contains("duration_s")) c.duration_s = j["duration_s"].get<int>();
        if (j.contains("interval_s")) c.interval_s = j["interval_s"].get<int>();
        if (j.contains("ticks")) c.ticks = j["ticks"].get<int>();
        if (j.contains("window")) c.window = j["window"].get<std::string>();
        if (j.contains("max_parallel")) c.max_parallel = j["max_parallel"].get<int>();
        if (j.contains("pacing")) c.pacing = j["pacing"].get<std::string>();
        if (j.contains("start_utc")) c.start_utc = j["start_utc"].get<std::int64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed probe config: ") + e.what());
    }
    return c;
}

inline std::string probe_config_to_json(const ProbeConfig& c) {
    nlohmann::ordered_json j;
    auto& eps = j["endpoints"];
    eps = nlohmann::ordered_json::object();
    for (const auto& [id, host] : c.endpoints) eps[id] = host;
    j["duration_s"] = c.duration_s;
    j["interval_s"] = c.interval_s;
    j["ticks"] = c.ticks;
    j["window"] = c.window;
    j["max_parallel"] = c.max_parallel;
    j["pacing"] = c.pacing;
    j["start_utc"] = c.start_utc;
    return j.dump(2);
}

// --- Runners -----------------------------------------------------------------

struct RunnerOutput {
    std::vector<double> rates_mbps;        // per-interval rates
    std::optional<double> summary_mbps;    // authoritative when present
    int exit_status = 0;
    std::string raw;

    double mean_mbps() const {
        if (summary_mbps) return *summary_mbps;
        if (rates_mbps.empty()) throw Error("runner produced no rates");
        double s = 0;
        for (double r : rates_mbps) s += r;
        return s / static_cast<double>(rates_mbps.size());
    }
};

struct MeasureRequest {
    Path path;
    std::string src_host;  // host[:port] as configured
    std::string dst_host;
    int duration_s = 300;
    std::string window = "16M";
    std::int64_t scheduled_utc = 0;
};

class Runner {
public:
    virtual ~Runner() = default;
    // nullopt: endpoint usable; otherwise the reason it is not.
    virtual std::optional<std::string> preflight(const std::string& id,
                                                 const std::string& host) = 0;
    // Throws Error on measurement failure.
    virtual RunnerOutput measure(const MeasureRequest& req) = 0;
};

inline constexpr const char* kIperfRatePattern =
    R"(([0-9]+(?:\.[0-9]+)?)\s*([KMG])bits/sec)";

// Extracts rate figures from tool output. The pattern's first capture is
// the number; an optional second capture is a K/M/G decimal prefix on
// bits/sec. Without a unit capture, values are taken as Mb/s already.
inline RunnerOutput parse_runner_output(const std::string& raw,
                                        const std::string& pattern = kIperfRatePattern) {
    std::regex re;
    try {
        re = std::regex(pattern);
    } catch (const std::regex_error& e) {
        throw Error(std::string("invalid extraction pattern: ") + e.what());
    }
    RunnerOutput out;
    out.raw = raw;
    for (std::sregex_iterator it(raw.begin(), raw.end(), re), end; it != end; ++it) {
        const std::smatch& m = *it;
        double v;
        try {
            v = std::stod(m[1].str());
        } catch (const std::exception&) {
            throw Error("unparseable rate figure: " + m[1].str());
        }
        double scale = 1.0;
        if (m.size() >= 3 && m[2].matched) {
            const std::string u = m[2].str();
            if (u == "K")
                scale = 1e-3;
            else if (u == "M")
                scale = 1.0;
            else if (u == "G")
                scale = 1e3;
            else
                throw Error("unrecognized rate unit: " + u);
        }
        out.rates_mbps.push_back(v * scale);
    }
    if (out.rates_mbps.empty())
        throw Error("no rate lines matched the extraction pattern; raw output:\n" + raw);
    return out;
}

// Simulator-backed runner: measurements reproduce the values generate()
// emits for the same scenario, horizon, and schedule grid, so a campaign
// over this runner composes into the exact generated dataset.
class SimulatedRunner : public Runner {
public:
    std::set<std::string> down_endpoints;

    explicit SimulatedRunner(ScenarioSpec spec, int horizon_weeks = 3,
                             double samples_per_hour = 1.0)
        : spec_(std::move(spec)), weeks_(horizon_weeks) {
        if (horizon_weeks < 1) throw Error("horizon must be at least 1 week");
        if (samples_per_hour <= 0) throw Error("samples_per_hour must be positive");
        validate_scenario(spec_);
        cat_ = spec_.catalog();
        n_ticks_ = std::llround(horizon_weeks * 168.0 * samples_per_hour);
        tick_seconds_ = std::llround(3600.0 / samples_per_hour);
        group_events_.reserve(spec_.coupling_groups.size());
        for (const auto& grp : spec_.coupling_groups)
            group_events_.push_back(detail::group_event_stream(spec_, grp, weeks_, n_ticks_));
    }

    std::optional<std::string> preflight(const std::string& id,
                                         const std::string&) override {
        if (!cat_.contains(id)) return "id not in the simulated catalog: " + id;
        if (down_endpoints.count(id)) return "endpoint is down";
        return std::nullopt;
    }

    RunnerOutput measure(const MeasureRequest& req) override {
        if (down_endpoints.count(req.path.src) || down_endpoints.count(req.path.dst))
            throw Error("endpoint unreachable");
        const std::int64_t off = req.scheduled_utc - kCampaignEpoch;
        if (off < 0 || off % tick_seconds_ != 0)
            throw Error("scheduled time is off the simulated grid");
        const std::int64_t t = off / tick_seconds_;
        if (t >= n_ticks_) throw Error("scheduled time is past the simulated horizon");

        const std::string key = path_key(req.path);
        const detail::Coverage& cov = coverage(req.path, key);
        const double planted = planted_value(spec_, cat_, req.path,
                                             utc_hour(req.scheduled_utc),
                                             utc_weekday(req.scheduled_utc));
        double v = detail::tick_value(spec_, planted, spec_.sigma_for(req.path), cov, t,
                                      key, req.scheduled_utc);
        v = detail::clip_tick_value(spec_, v, nullptr);
        const double q = quantize_mbps(v);

        RunnerOutput out;
        out.summary_mbps = q;
        if (req.duration_s >= 2) {
            const double cv = detail::path_cv(spec_, key);
            auto z = detail::ar1_unit_deviates(spec_, key, req.scheduled_utc, req.duration_s);
            out.rates_mbps.resize(z.size());
            for (size_t i = 0; i < z.size(); ++i)
                out.rates_mbps[i] = std::max(0.0, q * (1.0 + cv * z[i]));
        } else {
            out.rates_mbps.push_back(q);
        }
        out.raw = "simulated " + key + " @" + std::to_string(req.scheduled_utc) + ": " +
                  detail::format_mbps(q) + " Mbits/sec";
        return out;
    }

private:
    const detail::Coverage& coverage(const Path& p, const std::string& key) {
        std::lock_guard<std::mutex> g(mu_);
        auto it = cov_.find(key);
        if (it == cov_.end())
            it = cov_.emplace(key, detail::path_coverage(spec_, p, key, weeks_, n_ticks_,
                                                         group_events_, nullptr))
                     .first;
        return it->second;
    }

    ScenarioSpec spec_;
    int weeks_;
    Catalog cat_;
    std::int64_t n_ticks_ = 0;
    std::int64_t tick_seconds_ = 3600;
    std::vector<std::vector<detail::RawEvent>> group_events_;
    std::map<std::string, detail::Coverage> cov_;
    std::mutex mu_;
};

namespace detail {

inline std::pair<std::string, std::string> split_host_port(const std::string& hp) {
    auto pos = hp.rfind(':');
    if (pos == std::string::npos) return {hp, ""};
    return {hp.substr(0, pos), hp.substr(pos + 1)};
}

inline std::string substitute_placeholders(
    std::string tmpl, const std::vector<std::pair<std::string, std::string>>& subs) {
    for (const auto& [k, v] : subs) {
        size_t pos = 0;
        while ((pos = tmpl.find(k, pos)) != std::string::npos) {
            tmpl.replace(pos, k.size(), v);
            pos += v.size();
        }
    }
    return tmpl;
}

inline std::pair<int, std::string> run_shell(const std::string& cmd) {
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) throw Error("cannot launch command: " + cmd);
    std::string text;
    char buf[4096];
    size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) text.append(buf, n);
    int rc = ::pclose(pipe);
    int status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    return {status, text};
}

}  // namespace detail

// Wraps an external measurement command. The command template may use
// {src_id} {src_host} {src_port} {dst_id} {dst_host} {dst_port}
// {duration} {window}; the optional preflight template may use {id}
// {host} {port}. Stdout is parsed with `pattern`.
class CommandRunner : public Runner {
public:
    std::string command;
    std::string preflight_command;
    std::string pattern = kIperfRatePattern;

    std::optional<std::string> preflight(const std::string& id,
                                         const std::string& host) override {
        if (preflight_command.empty()) return std::nullopt;
        auto [h, p] = detail::split_host_port(host);
        auto [status, text] = detail::run_shell(detail::substitute_placeholders(
            preflight_command, {{"{id}", id}, {"{host}", h}, {"{port}", p}}));
        if (status != 0) return "preflight exited " + std::to_string(status);
        return std::nullopt;
    }

    RunnerOutput measure(const MeasureRequest& req) override {
        if (command.empty()) throw Error("runner command not configured");
        auto [sh, sp] = detail::split_host_port(req.src_host);
        auto [dh, dp] = detail::split_host_port(req.dst_host);
        const std::string cmd = detail::substitute_placeholders(
            command, {{"{src_id}", req.path.src},
                      {"{src_host}", sh},
                      {"{src_port}", sp},
                      {"{dst_id}", req.path.dst},
                      {"{dst_host}", dh},
                      {"{dst_port}", dp},
                      {"{duration}", std::to_string(req.duration_s)},
                      {"{window}", req.window}});
        auto [status, text] = detail::run_shell(cmd);
        if (status != 0)
            throw Error("runner exited " + std::to_string(status) + "; output:\n" + text);
        RunnerOutput out = parse_runner_output(text, pattern);
        out.exit_status = status;
        return out;
    }
};

// --- Sink ---------------------------------------------------------------------

// Append-only JSONL sink, flushed per line so an interrupted campaign
// leaves every completed record loadable.
class JsonlSink {
public:
    explicit JsonlSink(const std::string& file)
        : lock_(file), out_(file, std::ios::app) {
        if (!out_) throw Error("cannot open sink for append: " + file);
    }

    void append(const BandwidthSample& s) {
        out_ << serialize_sample(s) << '\n';
        out_.flush();
        if (!out_) throw Error("sink write failure");
    }

private:
    detail::WriteLock lock_;
    std::ofstream out_;
};

// --- Campaign -------------------------------------------------------------------

struct CampaignEvent {
    Path path;
    std::int64_t begin_utc = 0;  // in-flight interval of the attempt
    std::int64_t end_utc = 0;
};

struct PathStats {
    int ok = 0;
    int failed = 0;
    int skipped = 0;
};

struct CampaignReport {
    int ticks = 0;
    int samples_appended = 0;
    std::map<std::string, PathStats> per_path;  // key: "src->dst"
    std::vector<CampaignEvent> events;
    std::vector<std::string> warnings;
    std::vector<std::string> failures;
};

// First violation of the endpoint-exclusion rule, if any: two attempts
// overlapping in time while sharing a data-center.
inline std::optional<std::string> check_exclusion(std::vector<CampaignEvent> events) {
    std::sort(events.begin(), events.end(), [](const CampaignEvent& a, const CampaignEvent& b) {
        return a.begin_utc != b.begin_utc ? a.begin_utc < b.begin_utc
                                          : a.path < b.path;
    });
    std::vector<const CampaignEvent*> active;
    for (const auto& e : events) {
        active.erase(std::remove_if(active.begin(), active.end(),
                                    [&](const CampaignEvent* a) {
                                        return a->end_utc <= e.begin_utc;
                                    }),
                     active.end());
        for (const CampaignEvent* a : active) {
            bool shared = a->path.src == e.path.src || a->path.src == e.path.dst ||
                          a->path.dst == e.path.src || a->path.dst == e.path.dst;
            if (shared)
                return path_key(a->path) + " [" + std::to_string(a->begin_utc) + "," +
                       std::to_string(a->end_utc) + ") overlaps " + path_key(e.path) +
                       " [" + std::to_string(e.begin_utc) + "," +
                       std::to_string(e.end_utc) + ")";
        }
        active.push_back(&e);
    }
    return std::nullopt;
}

namespace detail {

struct ScheduledPath {
    Path path;
    std::string src_host;
    std::string dst_host;
};

// Greedy first-fit: next wave takes paths in order whose endpoints are
// still free within the wave.
inline std::vector<size_t> next_wave(const std::vector<ScheduledPath>& todo,
                                     const std::vector<char>& done, int max_parallel) {
    std::vector<size_t> wave;
    std::set<std::string> busy;
    for (size_t i = 0; i < todo.size(); ++i) {
        if (done[i]) continue;
        if (max_parallel > 0 && static_cast<int>(wave.size()) >= max_parallel) break;
        const Path& p = todo[i].path;
        if (busy.count(p.src) || busy.count(p.dst)) continue;
        busy.insert(p.src);
        busy.insert(p.dst);
        wave.push_back(i);
    }
    return wave;
}

}  // namespace detail

// Runs the full schedule: `ticks` rounds spaced interval_s apart, each
// measuring every directed pair of usable endpoints once. Paths rotate
// through wave slots round by round. Samples are stamped with the
// schedule slot time; the event log carries execution intervals.
inline CampaignReport run_campaign(const ProbeConfig& config, const Catalog& catalog,
                                   Runner& runner, JsonlSink& sink) {
    config.validate(catalog);
    CampaignReport rep;
    rep.ticks = config.ticks;

    std::set<std::string> down;
    for (const auto& [id, host] : config.endpoints) {
        auto reason = runner.preflight(id, host);
        if (reason) {
            down.insert(id);
            rep.warnings.push_back("preflight failed for " + id + ": " + *reason);
            log_line(LogLevel::Warn, rep.warnings.back());
        }
    }

    std::vector<detail::ScheduledPath> all;
    for (const auto& [sid, shost] : config.endpoints)
        for (const auto& [did, dhost] : config.endpoints)
            if (sid != did) all.push_back({{sid, did}, shost, dhost});

    const bool wall = config.pacing == "wall";
    const auto wall_t0 = std::chrono::system_clock::now();
    std::mutex sink_mu;
    std::int64_t cursor = config.start_utc;
    bool overrun_warned = false;

    for (int k = 0; k < config.ticks; ++k) {
        const std::int64_t scheduled =
            config.start_utc + static_cast<std::int64_t>(k) * config.interval_s;
        cursor = std::max(cursor, scheduled);

        std::vector<detail::ScheduledPath> todo;
        todo.reserve(all.size());
        const size_t rot = all.empty() ? 0 : static_cast<size_t>(k) % all.size();
        for (size_t i = 0; i < all.size(); ++i) {
            const auto& sp = all[(i + rot) % all.size()];
            if (down.count(sp.path.src) || down.count(sp.path.dst)) {
                rep.per_path[path_key(sp.path)].skipped += 1;
                log_line(LogLevel::Info, "skipping " + path_key(sp.path) +
                                             ": endpoint failed preflight");
                continue;
            }
            todo.push_back(sp);
        }

        std::vector<char> done(todo.size(), 0);
        size_t remaining = todo.size();
        while (remaining > 0) {
            auto wave = detail::next_wave(todo, done, config.max_parallel);
            if (wave.empty()) throw Error("scheduler stalled");  // unreachable
            const std::int64_t begin = cursor;
            const std::int64_t end = begin + config.duration_s;

            if (wall) {
                auto target = wall_t0 + std::chrono::seconds(begin - config.start_utc);
                std::this_thread::sleep_until(target);
            }

            auto attempt = [&](size_t idx) -> std::pair<bool, std::string> {
                const auto& sp = todo[idx];
                MeasureRequest req;
                req.path = sp.path;
                req.src_host = sp.src_host;
                req.dst_host = sp.dst_host;
                req.duration_s = config.duration_s;
                req.window = config.window;
                req.scheduled_utc = scheduled;
                try {
                    RunnerOutput out = runner.measure(req);
                    if (!out.rates_mbps.empty() &&
                        std::llabs(static_cast<long long>(out.rates_mbps.size()) -
                                   config.duration_s) > 2)
                        rep.warnings.push_back(
                            path_key(sp.path) + ": rate count " +
                            std::to_string(out.rates_mbps.size()) +
                            " inconsistent with duration " +
                            std::to_string(config.duration_s));
                    BandwidthSample s;
                    s.path = sp.path;
                    s.start_utc = scheduled;
                    s.duration_s = config.duration_s;
                    s.mean_mbps = quantize_mbps(out.mean_mbps());
                    sink.append(s);
                    rep.samples_appended += 1;
                    rep.per_path[path_key(sp.path)].ok += 1;
                    return {true, ""};
                } catch (const Error& e) {
                    return {false, e.what()};
                }
            };

            if (wall && wave.size() > 1) {
                // Measure concurrently; results are recorded in wave order.
                std::vector<std::future<std::pair<bool, std::string>>> futs;
                std::vector<std::pair<bool, std::string>> results(wave.size());
                auto locked_attempt = [&](size_t idx) {
                    const auto& sp = todo[idx];
                    MeasureRequest req;
                    req.path = sp.path;
                    req.src_host = sp.src_host;
                    req.dst_host = sp.dst_host;
                    req.duration_s = config.duration_s;
                    req.window = config.window;
                    req.scheduled_utc = scheduled;
                    RunnerOutput out;
                    try {
                        out = runner.measure(req);
                    } catch (const Error& e) {
                        return std::pair<bool, std::string>{false, e.what()};
                    }
                    std::lock_guard<std::mutex> g(sink_mu);
                    BandwidthSample s;
                    s.path = sp.path;
                    s.start_utc = scheduled;
                    s.duration_s = config.duration_s;
                    s.mean_mbps = quantize_mbps(out.mean_mbps());
                    sink.append(s);
                    rep.samples_appended += 1;
                    rep.per_path[path_key(sp.path)].ok += 1;
                    return std::pair<bool, std::string>{true, ""};
                };
                for (size_t w : wave)
                    futs.push_back(std::async(std::launch::async, locked_attempt, w));
                for (size_t i = 0; i < wave.size(); ++i) results[i] = futs[i].get();
                for (size_t i = 0; i < wave.size(); ++i) {
                    const auto& sp = todo[wave[i]];
                    if (!results[i].first) {
                        rep.per_path[path_key(sp.path)].failed += 1;
                        rep.failures.push_back(path_key(sp.path) + " tick " +
                                               std::to_string(k) + ": " + results[i].second);
                        log_line(LogLevel::Warn, rep.failures.back());
                    }
                }
            } else {
                for (size_t w : wave) {
                    auto [ok, reason] = attempt(w);
                    if (!ok) {
                        rep.per_path[path_key(todo[w].path)].failed += 1;
                        rep.failures.push_back(path_key(todo[w].path) + " tick " +
                                               std::to_string(k) + ": " + reason);
                        log_line(LogLevel::Warn, rep.failures.back());
                    }
                }
            }

            for (size_t w : wave) {
                done[w] = 1;
                rep.events.push_back({todo[w].path, begin, end});
            }
            remaining -= wave.size();
            cursor = end;
        }

        if (cursor > scheduled + config.interval_s && !overrun_warned) {
            rep.warnings.push_back(
                "tick " + std::to_string(k) +
                " overran the interval; later rounds start late (catch-up)");
            log_line(LogLevel::Warn, rep.warnings.back());
            overrun_warned = true;
        }
        log_line(LogLevel::Debug, "tick " + std::to_string(k) + " complete");
    }

    if (auto violation = check_exclusion(rep.events))
        throw Error("endpoint exclusion violated: " + *violation);
    return rep;
}

}  // namespace cloudbench
