#pragma once

// Core domain types: data-center catalog, paths, bandwidth samples and
// series, factor derivation, and JSONL dataset persistence.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cloudbench {

// All recoverable failures surface as this type; the CLI maps it to exit 2.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

enum class Csp { C1, C2, C3, C4 };
enum class Area { EastUS, WestUS, CentralUS, NorthEurope, EastAsia, Australia, SouthAmerica };
enum class Weekday { Mon, Tue, Wed, Thu, Fri, Sat, Sun };

inline const char* to_string(Csp c) {
    switch (c) {
        case Csp::C1: return "C1";
        case Csp::C2: return "C2";
        case Csp::C3: return "C3";
        case Csp::C4: return "C4";
    }
    return "?";
}

inline const char* to_string(Area a) {
    switch (a) {
        case Area::EastUS: return "EastUS";
        case Area::WestUS: return "WestUS";
        case Area::CentralUS: return "CentralUS";
        case Area::NorthEurope: return "NorthEurope";
        case Area::EastAsia: return "EastAsia";
        case Area::Australia: return "Australia";
        case Area::SouthAmerica: return "SouthAmerica";
    }
    return "?";
}

inline const char* to_string(Weekday w) {
    switch (w) {
        case Weekday::Mon: return "Mon";
        case Weekday::Tue: return "Tue";
        case Weekday::Wed: return "Wed";
        case Weekday::Thu: return "Thu";
        case Weekday::Fri: return "Fri";
        case Weekday::Sat: return "Sat";
        case Weekday::Sun: return "Sun";
    }
    return "?";
}

inline Csp csp_from_string(const std::string& s) {
    if (s == "C1") return Csp::C1;
    if (s == "C2") return Csp::C2;
    if (s == "C3") return Csp::C3;
    if (s == "C4") return Csp::C4;
    throw Error("unknown CSP value: " + s);
}

inline Area area_from_string(const std::string& s) {
    if (s == "EastUS") return Area::EastUS;
    if (s == "WestUS") return Area::WestUS;
    if (s == "CentralUS") return Area::CentralUS;
    if (s == "NorthEurope") return Area::NorthEurope;
    if (s == "EastAsia") return Area::EastAsia;
    if (s == "Australia") return Area::Australia;
    if (s == "SouthAmerica") return Area::SouthAmerica;
    throw Error("unknown area value: " + s);
}

struct DataCenter {
    std::string id;
    Csp csp = Csp::C1;
    Area area = Area::EastUS;
    std::string display_name;
};

struct Path {
    std::string src;
    std::string dst;

    bool operator==(const Path& o) const { return src == o.src && dst == o.dst; }
    bool operator<(const Path& o) const {
        return src != o.src ? src < o.src : dst < o.dst;
    }
};

// Ordered collection of data-centers; declaration order decides reference
// levels downstream, so it is preserved exactly as loaded.
class Catalog {
public:
    Catalog() = default;
    explicit Catalog(std::vector<DataCenter> dcs) : dcs_(std::move(dcs)) {
        for (size_t i = 0; i < dcs_.size(); ++i) {
            if (!index_.emplace(dcs_[i].id, i).second)
                throw Error("duplicate data-center id: " + dcs_[i].id);
        }
        if (dcs_.empty()) throw Error("empty catalog");
    }

    size_t size() const { return dcs_.size(); }
    const DataCenter& at(size_t i) const { return dcs_.at(i); }
    const std::vector<DataCenter>& entries() const { return dcs_; }

    const DataCenter& lookup(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) throw Error("unknown data-center id: " + id);
        return dcs_[it->second];
    }
    bool contains(const std::string& id) const { return index_.count(id) != 0; }
    size_t index_of(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) throw Error("unknown data-center id: " + id);
        return it->second;
    }

    // All n(n-1) directed paths in declaration order.
    std::vector<Path> all_paths() const {
        std::vector<Path> out;
        out.reserve(dcs_.size() * (dcs_.size() - 1));
        for (const auto& s : dcs_)
            for (const auto& d : dcs_)
                if (s.id != d.id) out.push_back({s.id, d.id});
        return out;
    }

private:
    std::vector<DataCenter> dcs_;
    std::map<std::string, size_t> index_;
};

// Strips surrounding whitespace; CSV fields are not quoted in catalog files.
inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    size_t b = s.find_last_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

inline Catalog catalog_load(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw Error("cannot open catalog file: " + file);
    std::string line;
    size_t lineno = 0;
    std::vector<DataCenter> dcs;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto f = split_csv_line(line);
        if (lineno == 1) {
            if (f.size() != 4 || f[0] != "id" || f[1] != "csp" || f[2] != "area" || f[3] != "name")
                throw Error("catalog header must be id,csp,area,name (line 1)");
            continue;
        }
        if (f.size() != 4)
            throw Error("catalog line " + std::to_string(lineno) + ": expected 4 fields, got " +
                        std::to_string(f.size()));
        try {
            dcs.push_back({f[0], csp_from_string(f[1]), area_from_string(f[2]), f[3]});
        } catch (const Error& e) {
            throw Error("catalog line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (dcs.empty()) throw Error("empty catalog");
    return Catalog(std::move(dcs));
}

// Quantize to 6 fractional digits; values are created already quantized so
// that serialization round-trips bit-exactly.
inline double quantize_mbps(double v) {
    return std::round(v * 1e6) / 1e6;
}

struct BandwidthSample {
    Path path;
    std::int64_t start_utc = 0;   // seconds since epoch, UTC
    int duration_s = 0;
    double mean_mbps = 0.0;
    std::optional<std::vector<double>> per_second_mbps;

    void validate() const {
        if (duration_s <= 0) throw Error("sample duration must be positive");
        if (mean_mbps < 0) throw Error("sample mean must be nonnegative");
        if (per_second_mbps) {
            if (static_cast<int>(per_second_mbps->size()) != duration_s)
                throw Error("per-second payload length must equal duration");
            double s = 0;
            for (double v : *per_second_mbps) {
                if (v < 0) throw Error("per-second rate must be nonnegative");
                s += v;
            }
            double m = s / per_second_mbps->size();
            double tol = 1e-6 * std::max(std::abs(mean_mbps), 1.0);
            if (std::abs(m - mean_mbps) > tol)
                throw Error("per-second mean disagrees with mean_mbps");
        }
    }
};

struct BandwidthSeries {
    Path path;
    std::vector<BandwidthSample> samples;   // strictly increasing start_utc

    std::vector<double> values() const {
        std::vector<double> v;
        v.reserve(samples.size());
        for (const auto& s : samples) v.push_back(s.mean_mbps);
        return v;
    }
};

inline int utc_hour(std::int64_t epoch_s) {
    std::int64_t sec = ((epoch_s % 86400) + 86400) % 86400;
    return static_cast<int>(sec / 3600);
}

// Epoch day 0 (1970-01-01) was a Thursday; Mon=0 .. Sun=6.
inline Weekday utc_weekday(std::int64_t epoch_s) {
    std::int64_t days = epoch_s / 86400;
    if (epoch_s % 86400 < 0) --days;
    int w = static_cast<int>(((days + 3) % 7 + 7) % 7);
    return static_cast<Weekday>(w);
}

struct ObservationRow {
    double response = 0.0;
    int time_level = 0;          // UTC hour 0..23
    Weekday weekday_level = Weekday::Mon;
    Area area_s = Area::EastUS;
    Csp csp_s = Csp::C1;
    std::string dc_s;
    Area area_d = Area::EastUS;
    Csp csp_d = Csp::C1;
    std::string dc_d;
};

inline ObservationRow derive_factors(const BandwidthSample& sample, const Catalog& catalog) {
    const DataCenter& s = catalog.lookup(sample.path.src);
    const DataCenter& d = catalog.lookup(sample.path.dst);
    ObservationRow r;
    r.response = sample.mean_mbps;
    r.time_level = utc_hour(sample.start_utc);
    r.weekday_level = utc_weekday(sample.start_utc);
    r.area_s = s.area;
    r.csp_s = s.csp;
    r.dc_s = s.id;
    r.area_d = d.area;
    r.csp_d = d.csp;
    r.dc_d = d.id;
    return r;
}

struct Dataset {
    std::vector<BandwidthSample> samples;

    std::vector<ObservationRow> derive_all(const Catalog& catalog) const {
        std::vector<ObservationRow> rows;
        rows.reserve(samples.size());
        for (const auto& s : samples) rows.push_back(derive_factors(s, catalog));
        return rows;
    }

    // Group samples by path, ordered by start_utc within each series.
    std::vector<BandwidthSeries> series() const {
        std::map<Path, BandwidthSeries> by_path;
        for (const auto& s : samples) {
            auto& ser = by_path[s.path];
            ser.path = s.path;
            ser.samples.push_back(s);
        }
        std::vector<BandwidthSeries> out;
        out.reserve(by_path.size());
        for (auto& [p, ser] : by_path) {
            std::sort(ser.samples.begin(), ser.samples.end(),
                      [](const BandwidthSample& a, const BandwidthSample& b) {
                          return a.start_utc < b.start_utc;
                      });
            out.push_back(std::move(ser));
        }
        return out;
    }
};

namespace detail {

// %.6f with trailing zeros trimmed; inputs are pre-quantized to 6 digits so
// this is a bijection on the values we emit.
inline std::string format_mbps(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    std::string s(buf);
    size_t dot = s.find('.');
    size_t last = s.find_last_not_of('0');
    if (last == dot) last = dot - 1;
    return s.substr(0, last + 1);
}

// Minimal scanner for the flat JSONL row schema written by dataset_store.
class RowScanner {
public:
    explicit RowScanner(const std::string& line) : s_(line) {}

    BandwidthSample parse() {
        BandwidthSample out;
        bool have_v = false, have_ts = false, have_src = false, have_dst = false,
             have_dur = false, have_mean = false;
        expect('{');
        skip_ws();
        if (peek() == '}') { throw Error("row missing required keys"); }
        while (true) {
            std::string key = parse_string();
            expect(':');
            if (key == "v") {
                long v = static_cast<long>(parse_number());
                if (v != 1) throw Error("unsupported schema version " + std::to_string(v));
                have_v = true;
            } else if (key == "ts") {
                out.start_utc = static_cast<std::int64_t>(parse_number());
                have_ts = true;
            } else if (key == "src") {
                out.path.src = parse_string();
                have_src = true;
            } else if (key == "dst") {
                out.path.dst = parse_string();
                have_dst = true;
            } else if (key == "dur_s") {
                out.duration_s = static_cast<int>(parse_number());
                have_dur = true;
            } else if (key == "mbps_mean") {
                out.mean_mbps = parse_number();
                have_mean = true;
            } else if (key == "mbps_sec") {
                out.per_second_mbps = parse_array();
            } else {
                throw Error("unknown key in row: " + key);
            }
            skip_ws();
            if (peek() == ',') { ++i_; skip_ws(); continue; }
            break;
        }
        expect('}');
        if (!have_v) throw Error("row missing schema version");
        if (!(have_ts && have_src && have_dst && have_dur && have_mean))
            throw Error("row missing required keys");
        return out;
    }

private:
    char peek() {
        if (i_ >= s_.size()) throw Error("truncated row");
        return s_[i_];
    }
    void skip_ws() {
        while (i_ < s_.size() && (s_[i_] == ' ' || s_[i_] == '\t')) ++i_;
    }
    void expect(char c) {
        skip_ws();
        if (peek() != c) throw Error(std::string("expected '") + c + "'");
        ++i_;
    }
    std::string parse_string() {
        expect('"');
        std::string out;
        while (peek() != '"') out += s_[i_++];
        ++i_;
        return out;
    }
    double parse_number() {
        skip_ws();
        size_t end = i_;
        while (end < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[end])) ||
                                   s_[end] == '-' || s_[end] == '+' || s_[end] == '.' ||
                                   s_[end] == 'e' || s_[end] == 'E'))
            ++end;
        if (end == i_) throw Error("expected number");
        double v = std::stod(s_.substr(i_, end - i_));
        i_ = end;
        return v;
    }
    std::vector<double> parse_array() {
        expect('[');
        std::vector<double> out;
        skip_ws();
        if (peek() == ']') { ++i_; return out; }
        while (true) {
            out.push_back(parse_number());
            skip_ws();
            if (peek() == ',') { ++i_; continue; }
            break;
        }
        expect(']');
        return out;
    }

    const std::string& s_;
    size_t i_ = 0;
};

// Advisory single-writer lock: exists => another writer is active.
class WriteLock {
public:
    explicit WriteLock(const std::string& target) : lock_path_(target + ".lock") {
        if (std::filesystem::exists(lock_path_))
            throw Error("dataset is locked by another writer: " + lock_path_);
        std::ofstream mk(lock_path_);
        if (!mk) throw Error("cannot create lock file: " + lock_path_);
    }
    ~WriteLock() {
        std::error_code ec;
        std::filesystem::remove(lock_path_, ec);
    }
    WriteLock(const WriteLock&) = delete;
    WriteLock& operator=(const WriteLock&) = delete;

private:
    std::string lock_path_;
};

}  // namespace detail

inline std::string serialize_sample(const BandwidthSample& s) {
    std::ostringstream os;
    os << "{\"v\":1,\"ts\":" << s.start_utc << ",\"src\":\"" << s.path.src
       << "\",\"dst\":\"" << s.path.dst << "\",\"dur_s\":" << s.duration_s
       << ",\"mbps_mean\":" << detail::format_mbps(s.mean_mbps);
    if (s.per_second_mbps) {
        os << ",\"mbps_sec\":[";
        for (size_t i = 0; i < s.per_second_mbps->size(); ++i) {
            if (i) os << ',';
            os << detail::format_mbps((*s.per_second_mbps)[i]);
        }
        os << ']';
    }
    os << '}';
    return os.str();
}

inline void dataset_store(const Dataset& ds, const std::string& file) {
    detail::WriteLock lock(file);
    std::ofstream out(file, std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + file);
    for (const auto& s : ds.samples) out << serialize_sample(s) << '\n';
    if (!out) throw Error("write failure: " + file);
}

inline Dataset dataset_load(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw Error("cannot open dataset file: " + file);
    Dataset ds;
    std::string line;
    size_t record = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++record;
        try {
            detail::RowScanner sc(line);
            BandwidthSample s = sc.parse();
            s.validate();
            ds.samples.push_back(std::move(s));
        } catch (const Error& e) {
            throw Error("dataset record " + std::to_string(record) + ": " + e.what());
        }
    }
    return ds;
}

}  // namespace cloudbench
