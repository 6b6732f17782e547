#pragma once

// Tabular and SVG outputs: CSV serialization for fit tables, calibration
// curves, and correlation summaries, plus the five-figure report bundle
// with a hashed manifest.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cloudbench/anova.hpp"
#include "cloudbench/calibrate.hpp"
#include "cloudbench/core.hpp"
#include "cloudbench/correlation.hpp"
#include "cloudbench/stats.hpp"

namespace cloudbench {

namespace detail {

// FIPS 180-4 SHA-256, single-shot.
class Sha256 {
public:
    Sha256() { reset(); }

    void update(const unsigned char* data, size_t len) {
        total_ += len;
        while (len > 0) {
            size_t take = std::min(len, size_t(64) - fill_);
            std::copy(data, data + take, buf_.begin() + fill_);
            fill_ += take;
            data += take;
            len -= take;
            if (fill_ == 64) {
                block(buf_.data());
                fill_ = 0;
            }
        }
    }

    std::string hex_digest() {
        std::uint64_t bits = total_ * 8;
        unsigned char pad = 0x80;
        update(&pad, 1);
        unsigned char zero = 0;
        while (fill_ != 56) update(&zero, 1);
        unsigned char lenb[8];
        for (int i = 0; i < 8; ++i) lenb[i] = static_cast<unsigned char>(bits >> (56 - 8 * i));
        update(lenb, 8);
        char out[65];
        for (int i = 0; i < 8; ++i) std::snprintf(out + 8 * i, 9, "%08x", h_[i]);
        return std::string(out, 64);
    }

private:
    void reset() {
        h_ = {0x6a09e667u, 0xbb67ae85u, 0x3c6ef372u, 0xa54ff53au,
              0x510e527fu, 0x9b05688cu, 0x1f83d9abu, 0x5be0cd19u};
        fill_ = 0;
        total_ = 0;
    }

    static std::uint32_t rotr(std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

    void block(const unsigned char* p) {
        static const std::uint32_t k[64] = {
            0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1,
            0x923f82a4, 0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3,
            0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786,
            0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
            0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147,
            0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13,
            0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
            0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
            0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a,
            0x5b9cca4f, 0x682e6ff3, 0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208,
            0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};
        std::uint32_t w[64];
        for (int i = 0; i < 16; ++i)
            w[i] = (std::uint32_t(p[4 * i]) << 24) | (std::uint32_t(p[4 * i + 1]) << 16) |
                   (std::uint32_t(p[4 * i + 2]) << 8) | std::uint32_t(p[4 * i + 3]);
        for (int i = 16; i < 64; ++i) {
            std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
            std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
            w[i] = w[i - 16] + s0 + w[i - 7] + s1;
        }
        std::uint32_t a = h_[0], b = h_[1], c = h_[2], d = h_[3];
        std::uint32_t e = h_[4], f = h_[5], g = h_[6], h = h_[7];
        for (int i = 0; i < 64; ++i) {
            std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
            std::uint32_t ch = (e & f) ^ (~e & g);
            std::uint32_t t1 = h + s1 + ch + k[i] + w[i];
            std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
            std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
            std::uint32_t t2 = s0 + maj;
            h = g;
            g = f;
            f = e;
            e = d + t1;
            d = c;
            c = b;
            b = a;
            a = t1 + t2;
        }
        h_[0] += a;
        h_[1] += b;
        h_[2] += c;
        h_[3] += d;
        h_[4] += e;
        h_[5] += f;
        h_[6] += g;
        h_[7] += h;
    }

    std::array<std::uint32_t, 8> h_;
    std::array<unsigned char, 64> buf_;
    size_t fill_ = 0;
    std::uint64_t total_ = 0;
};

}  // namespace detail

inline std::string sha256_hex(const std::string& bytes) {
    detail::Sha256 h;
    h.update(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
    return h.hex_digest();
}

namespace detail {

inline std::string csv_num(double v) {
    if (std::isnan(v)) return "";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path);
    out << content;
    if (!out) throw Error("write failure: " + path);
}

}  // namespace detail

// --- CSV serialization -------------------------------------------------------

inline std::string anova_table_csv(const AnovaTable& t) {
    std::ostringstream os;
    os << "term,ss,pct_total,pct_factors,df,ms,F,p\n";
    auto opt = [](const std::optional<double>& v) {
        return v ? detail::csv_num(*v) : std::string();
    };
    for (const auto& r : t.rows) {
        os << r.term << ',' << detail::csv_num(r.ss) << ',' << opt(r.pct_total) << ','
           << opt(r.pct_factors) << ',' << r.df << ',' << opt(r.mean_square) << ','
           << opt(r.f_stat) << ',' << opt(r.p_value) << '\n';
    }
    return os.str();
}

inline std::string parameters_csv(const ParameterEstimates& p) {
    std::ostringstream os;
    os << "term,level,estimate,se,retained\n";
    os << "mu,," << detail::csv_num(p.intercept) << ','
       << (p.intercept_se ? detail::csv_num(*p.intercept_se) : std::string()) << ",1\n";
    for (const auto& e : p.entries) {
        os << e.term << ',' << e.level << ',' << detail::csv_num(e.estimate) << ','
           << (e.se ? detail::csv_num(*e.se) : std::string()) << ','
           << (e.retained ? 1 : 0) << '\n';
    }
    return os.str();
}

inline std::string ecdf_csv(const Ecdf& e, const std::string& value_header) {
    std::ostringstream os;
    os << value_header << ",cum_prob\n";
    const auto& xs = e.sorted();
    for (size_t i = 0; i < xs.size(); ++i)
        os << detail::csv_num(xs[i]) << ','
           << detail::csv_num(static_cast<double>(i + 1) / xs.size()) << '\n';
    return os.str();
}

inline std::string error_ratio_csv(const std::vector<ErrorRatioCurve>& curves) {
    std::ostringstream os;
    os << "src,dst";
    size_t width = 0;
    for (const auto& c : curves) width = std::max(width, c.ratios.size());
    for (size_t n = 1; n <= width; ++n) os << ",n" << n;
    os << '\n';
    for (const auto& c : curves) {
        os << c.path.src << ',' << c.path.dst;
        for (size_t k = 0; k < width; ++k)
            os << ',' << (k < c.ratios.size() ? detail::csv_num(c.ratios[k]) : std::string());
        os << '\n';
    }
    return os.str();
}

// 19x19 figure: 18x18 per-path means plus source-mean column and
// destination-mean row; the corner is the grand mean over paths.
inline std::string mean_bw_heatmap_csv(const Dataset& dataset, const Catalog& catalog) {
    const size_t n = catalog.size();
    std::vector<std::vector<double>> cell(n, std::vector<double>(n, std::numeric_limits<double>::quiet_NaN()));
    std::map<std::pair<size_t, size_t>, std::pair<double, std::int64_t>> acc;
    for (const auto& s : dataset.samples) {
        auto& a = acc[{catalog.index_of(s.path.src), catalog.index_of(s.path.dst)}];
        a.first += s.mean_mbps;
        a.second += 1;
    }
    for (const auto& [k, a] : acc) cell[k.first][k.second] = a.first / a.second;

    auto row_mean = [&](size_t i) {
        double s = 0;
        int c = 0;
        for (size_t j = 0; j < n; ++j)
            if (!std::isnan(cell[i][j])) s += cell[i][j], ++c;
        return c ? s / c : std::numeric_limits<double>::quiet_NaN();
    };
    auto col_mean = [&](size_t j) {
        double s = 0;
        int c = 0;
        for (size_t i = 0; i < n; ++i)
            if (!std::isnan(cell[i][j])) s += cell[i][j], ++c;
        return c ? s / c : std::numeric_limits<double>::quiet_NaN();
    };
    double grand = 0;
    int grand_c = 0;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
            if (!std::isnan(cell[i][j])) grand += cell[i][j], ++grand_c;
    grand = grand_c ? grand / grand_c : std::numeric_limits<double>::quiet_NaN();

    std::ostringstream os;
    os << "src\\dst";
    for (const auto& dc : catalog.entries()) os << ',' << dc.id;
    os << ",source_mean\n";
    for (size_t i = 0; i < n; ++i) {
        os << catalog.entries()[i].id;
        for (size_t j = 0; j < n; ++j) os << ',' << detail::csv_num(cell[i][j]);
        os << ',' << detail::csv_num(row_mean(i)) << '\n';
    }
    os << "dest_mean";
    for (size_t j = 0; j < n; ++j) os << ',' << detail::csv_num(col_mean(j));
    os << ',' << detail::csv_num(grand) << '\n';
    return os.str();
}

inline std::string mean_rho_matrix_csv(const MeanRhoMatrix& m) {
    const size_t n = m.ids.size();
    double grand = 0;
    int c = 0;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
            if (!std::isnan(m.cell[i][j])) grand += m.cell[i][j], ++c;
    grand = c ? grand / c : std::numeric_limits<double>::quiet_NaN();

    std::ostringstream os;
    os << "src\\dst";
    for (const auto& id : m.ids) os << ',' << id;
    os << ",source_mean\n";
    for (size_t i = 0; i < n; ++i) {
        os << m.ids[i];
        for (size_t j = 0; j < n; ++j) os << ',' << detail::csv_num(m.cell[i][j]);
        os << ',' << detail::csv_num(m.by_source[i]) << '\n';
    }
    os << "dest_mean";
    for (size_t j = 0; j < n; ++j) os << ',' << detail::csv_num(m.by_dest[j]);
    os << ',' << detail::csv_num(grand) << '\n';
    return os.str();
}

inline std::string pair_rho_csv(const std::vector<PairRho>& pairs) {
    std::ostringstream os;
    os << "src_a,dst_a,src_b,dst_b,rho,overlap\n";
    for (const auto& p : pairs)
        os << p.path_a.src << ',' << p.path_a.dst << ',' << p.path_b.src << ','
           << p.path_b.dst << ',' << detail::csv_num(p.rho) << ',' << p.overlap << '\n';
    return os.str();
}

inline std::string triples_csv(const std::vector<TripleRecord>& records) {
    std::ostringstream os;
    os << "src,dst1,dst2,rho,area_src,csp_src,area_dst1,csp_dst1,area_dst2,csp_dst2\n";
    for (const auto& r : records)
        os << r.s << ',' << r.d1 << ',' << r.d2 << ',' << detail::csv_num(r.rho) << ','
           << to_string(r.area_s) << ',' << to_string(r.csp_s) << ','
           << to_string(r.area_d1) << ',' << to_string(r.csp_d1) << ','
           << to_string(r.area_d2) << ',' << to_string(r.csp_d2) << '\n';
    return os.str();
}

inline std::vector<TripleRecord> triples_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw Error("empty triples file");
    std::vector<TripleRecord> out;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 10)
            throw Error("triples line " + std::to_string(lineno) + ": expected 10 fields");
        TripleRecord r;
        r.s = f[0];
        r.d1 = f[1];
        r.d2 = f[2];
        try {
            r.rho = std::stod(f[3]);
        } catch (const std::exception&) {
            throw Error("triples line " + std::to_string(lineno) + ": bad rho " + f[3]);
        }
        r.area_s = area_from_string(f[4]);
        r.csp_s = csp_from_string(f[5]);
        r.area_d1 = area_from_string(f[6]);
        r.csp_d1 = csp_from_string(f[7]);
        r.area_d2 = area_from_string(f[8]);
        r.csp_d2 = csp_from_string(f[9]);
        out.push_back(std::move(r));
    }
    return out;
}

// --- SVG rendering -----------------------------------------------------------

namespace detail {

struct SvgFrame {
    double width = 640, height = 420;
    double left = 70, right = 20, top = 40, bottom = 50;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

    double px(double x) const {
        return left + (x - x0) / (x1 - x0) * (width - left - right);
    }
    double py(double y) const {
        return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom);
    }
};

inline std::string svg_header(double w, double h) {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
       << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    return os.str();
}

inline std::string svg_axes(const SvgFrame& f, const std::string& title,
                            const std::string& xlabel, const std::string& ylabel,
                            int xticks = 5, int yticks = 5) {
    std::ostringstream os;
    os << "<g font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<text x=\"" << f.width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
       << title << "</text>\n";
    os << "<line x1=\"" << f.left << "\" y1=\"" << f.height - f.bottom << "\" x2=\""
       << f.width - f.right << "\" y2=\"" << f.height - f.bottom
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << f.left << "\" y1=\"" << f.top << "\" x2=\"" << f.left << "\" y2=\""
       << f.height - f.bottom << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= xticks; ++i) {
        double x = f.x0 + (f.x1 - f.x0) * i / xticks;
        os << "<line x1=\"" << f.px(x) << "\" y1=\"" << f.height - f.bottom << "\" x2=\""
           << f.px(x) << "\" y2=\"" << f.height - f.bottom + 4 << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << f.px(x) << "\" y=\"" << f.height - f.bottom + 18
           << "\" text-anchor=\"middle\">" << csv_num(x) << "</text>\n";
    }
    for (int i = 0; i <= yticks; ++i) {
        double y = f.y0 + (f.y1 - f.y0) * i / yticks;
        os << "<line x1=\"" << f.left - 4 << "\" y1=\"" << f.py(y) << "\" x2=\"" << f.left
           << "\" y2=\"" << f.py(y) << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << f.left - 8 << "\" y=\"" << f.py(y) + 4
           << "\" text-anchor=\"end\">" << csv_num(y) << "</text>\n";
    }
    os << "<text x=\"" << (f.left + f.width - f.right) / 2 << "\" y=\"" << f.height - 10
       << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
    os << "<text x=\"16\" y=\"" << (f.top + f.height - f.bottom) / 2
       << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << (f.top + f.height - f.bottom) / 2 << ")\">" << ylabel << "</text>\n";
    os << "</g>\n";
    return os.str();
}

inline std::string svg_polyline(const SvgFrame& f, const std::vector<double>& xs,
                                const std::vector<double>& ys, const std::string& color,
                                double opacity = 1.0, double stroke_width = 1.5) {
    std::ostringstream os;
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << stroke_width
       << "\" stroke-opacity=\"" << opacity << "\" points=\"";
    for (size_t i = 0; i < xs.size(); ++i) {
        if (i) os << ' ';
        os << csv_num(f.px(xs[i])) << ',' << csv_num(f.py(ys[i]));
    }
    os << "\"/>\n";
    return os.str();
}

// Stepwise ECDF as a figure.
inline std::string ecdf_svg(const Ecdf& e, const std::string& title,
                            const std::string& xlabel) {
    const auto& xs = e.sorted();
    SvgFrame f;
    f.x0 = xs.front();
    f.x1 = xs.back();
    if (f.x1 <= f.x0) f.x1 = f.x0 + 1;
    f.y0 = 0;
    f.y1 = 1;
    std::vector<double> px, py;
    px.reserve(2 * xs.size());
    py.reserve(2 * xs.size());
    double prev = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        double p = static_cast<double>(i + 1) / xs.size();
        px.push_back(xs[i]);
        py.push_back(prev);
        px.push_back(xs[i]);
        py.push_back(p);
        prev = p;
    }
    std::ostringstream os;
    os << svg_header(f.width, f.height) << svg_axes(f, title, xlabel, "cumulative probability")
       << svg_polyline(f, px, py, "#1f4e9c") << "</svg>\n";
    return os.str();
}

inline std::string heat_color(double t, bool diverging) {
    // diverging: blue (-1) .. white (0) .. red (+1); else white..steel blue
    auto hex2 = [](double v) {
        int x = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255));
        char b[3];
        std::snprintf(b, 3, "%02x", x);
        return std::string(b, 2);
    };
    double r, g, b;
    if (diverging) {
        t = std::clamp(t, -1.0, 1.0);
        if (t < 0) {
            r = 1 + t;
            g = 1 + t;
            b = 1;
        } else {
            r = 1;
            g = 1 - t;
            b = 1 - t;
        }
    } else {
        t = std::clamp(t, 0.0, 1.0);
        r = 1 - 0.72 * t;
        g = 1 - 0.45 * t;
        b = 1 - 0.12 * t;
    }
    return "#" + hex2(r) + hex2(g) + hex2(b);
}

inline std::string matrix_heatmap_svg(const std::vector<std::string>& ids,
                                      const std::vector<std::vector<double>>& cell,
                                      const std::string& title, bool diverging,
                                      double lo, double hi) {
    const size_t n = ids.size();
    const double cs = 26, left = 110, top = 70;
    const double w = left + cs * n + 30, h = top + cs * n + 30;
    std::ostringstream os;
    os << svg_header(w, h);
    os << "<g font-family=\"sans-serif\" font-size=\"13\">\n<text x=\"" << w / 2
       << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n</g>\n";
    os << "<g font-family=\"sans-serif\" font-size=\"8\">\n";
    for (size_t j = 0; j < n; ++j)
        os << "<text x=\"" << left + cs * j + cs / 2 << "\" y=\"" << top - 6
           << "\" text-anchor=\"start\" transform=\"rotate(-60 " << left + cs * j + cs / 2
           << ' ' << top - 6 << ")\">" << ids[j] << "</text>\n";
    for (size_t i = 0; i < n; ++i)
        os << "<text x=\"" << left - 6 << "\" y=\"" << top + cs * i + cs / 2 + 3
           << "\" text-anchor=\"end\">" << ids[i] << "</text>\n";
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
            double v = cell[i][j];
            std::string fill = "#f0f0f0";
            if (!std::isnan(v)) {
                double t = diverging ? v : (hi > lo ? (v - lo) / (hi - lo) : 0.5);
                fill = heat_color(t, diverging);
            }
            os << "<rect x=\"" << left + cs * j << "\" y=\"" << top + cs * i << "\" width=\""
               << cs - 1 << "\" height=\"" << cs - 1 << "\" fill=\"" << fill << "\"/>\n";
        }
    os << "</g>\n</svg>\n";
    return os.str();
}

}  // namespace detail

// --- Report bundle -------------------------------------------------------------

struct ReportFile {
    std::string name;
    std::string sha256;
    std::uint64_t bytes = 0;
};

struct ReportBundle {
    std::string out_dir;
    std::vector<ReportFile> files;  // sorted by name; excludes the manifest itself
};

class ReportWriter {
public:
    explicit ReportWriter(std::string out_dir) : dir_(std::move(out_dir)) {
        std::filesystem::create_directories(dir_);
    }

    void emit(const std::string& name, const std::string& content) {
        detail::write_text_file(dir_ + "/" + name, content);
        files_.push_back({name, sha256_hex(content), content.size()});
    }

    ReportBundle finish() {
        std::sort(files_.begin(), files_.end(),
                  [](const ReportFile& a, const ReportFile& b) { return a.name < b.name; });
        nlohmann::ordered_json j;
        j["files"] = nlohmann::ordered_json::array();
        for (const auto& f : files_) {
            nlohmann::ordered_json e;
            e["name"] = f.name;
            e["sha256"] = f.sha256;
            e["bytes"] = f.bytes;
            j["files"].push_back(e);
        }
        detail::write_text_file(dir_ + "/manifest.json", j.dump(2) + "\n");
        return {dir_, files_};
    }

private:
    std::string dir_;
    std::vector<ReportFile> files_;
};

// The five figure datasets and their renderings, from an hourly dataset
// and a per-second calibration dataset.
inline ReportBundle report_bundle(const Dataset& hourly, const Catalog& catalog,
                                  const std::vector<BandwidthSample>& per_second,
                                  const std::string& out_dir) {
    if (hourly.samples.empty()) throw Error("empty dataset");
    if (per_second.empty()) throw Error("no per-second samples");

    ReportWriter w(out_dir);

    // CV ECDF
    Ecdf cv_ecdf = cv_distribution(per_second);
    w.emit("cv_ecdf.csv", ecdf_csv(cv_ecdf, "cv"));
    w.emit("cv_ecdf.svg",
           detail::ecdf_svg(cv_ecdf, "Per-path coefficient of variation", "CV"));

    // Error-ratio curves
    std::vector<ErrorRatioCurve> curves;
    curves.reserve(per_second.size());
    for (const auto& s : per_second) curves.push_back(error_ratio_curve(s));
    w.emit("error_ratio.csv", error_ratio_csv(curves));
    {
        detail::SvgFrame f;
        size_t width = 0;
        for (const auto& c : curves) width = std::max(width, c.ratios.size());
        f.x0 = 1;
        f.x1 = static_cast<double>(width);
        double ymax = 0;
        for (const auto& c : curves)
            for (double r : c.ratios) ymax = std::max(ymax, r);
        f.y0 = 0;
        f.y1 = ymax > 0 ? ymax * 1.05 : 1;
        std::ostringstream os;
        os << detail::svg_header(f.width, f.height)
           << detail::svg_axes(f, "Truncation error ratio by duration", "duration (s)",
                               "error ratio");
        for (const auto& c : curves) {
            std::vector<double> xs(c.ratios.size()), ys(c.ratios.size());
            for (size_t k = 0; k < c.ratios.size(); ++k) {
                xs[k] = static_cast<double>(k + 1);
                ys[k] = c.ratios[k];
            }
            os << detail::svg_polyline(f, xs, ys, "#777777", 0.25, 0.8);
        }
        // 95th percentile envelope
        std::vector<double> xs, ys;
        for (size_t k = 0; k < width; ++k) {
            std::vector<double> vals;
            for (const auto& c : curves)
                if (k < c.ratios.size()) vals.push_back(c.ratios[k]);
            if (vals.empty()) continue;
            std::sort(vals.begin(), vals.end());
            size_t idx = static_cast<size_t>(std::ceil(0.95 * vals.size())) - 1;
            xs.push_back(static_cast<double>(k + 1));
            ys.push_back(vals[std::min(idx, vals.size() - 1)]);
        }
        os << detail::svg_polyline(f, xs, ys, "#c0392b", 1.0, 2.0);
        os << "</svg>\n";
        w.emit("error_ratio.svg", os.str());
    }

    // Mean bandwidth heatmap
    w.emit("mean_bw_heatmap.csv", mean_bw_heatmap_csv(hourly, catalog));
    {
        const size_t n = catalog.size();
        std::vector<std::vector<double>> cell(
            n, std::vector<double>(n, std::numeric_limits<double>::quiet_NaN()));
        std::map<std::pair<size_t, size_t>, std::pair<double, std::int64_t>> acc;
        for (const auto& s : hourly.samples) {
            auto& a = acc[{catalog.index_of(s.path.src), catalog.index_of(s.path.dst)}];
            a.first += s.mean_mbps;
            a.second += 1;
        }
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& [k, a] : acc) {
            double v = a.first / a.second;
            cell[k.first][k.second] = v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        std::vector<std::string> ids;
        for (const auto& dc : catalog.entries()) ids.push_back(dc.id);
        w.emit("mean_bw_heatmap.svg",
               detail::matrix_heatmap_svg(ids, cell, "Mean TCP bandwidth by path (Mb/s)",
                                          false, lo, hi));
    }

    // Pair correlations
    PairRhoSet rhos = all_pair_rhos(hourly);
    if (rhos.pairs.empty()) throw Error("no path pairs with sufficient overlap");
    Ecdf re = rhos.rho_ecdf();
    w.emit("rho_ecdf.csv", ecdf_csv(re, "rho"));
    w.emit("rho_ecdf.svg",
           detail::ecdf_svg(re, "Pairwise correlation coefficients", "Pearson rho"));

    MeanRhoMatrix m = mean_rho_matrix(rhos.pairs, catalog);
    w.emit("mean_rho_matrix.csv", mean_rho_matrix_csv(m));
    w.emit("mean_rho_matrix.svg",
           detail::matrix_heatmap_svg(m.ids, m.cell, "Mean rho by path", true, -1, 1));

    return w.finish();
}

}  // namespace cloudbench
