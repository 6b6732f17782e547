#pragma once

// Statistical kernel: descriptive stats, ECDF, Pearson correlation,
// Gaussian KDE, normal / F distribution functions, and the Lilliefors
// normality test with its Monte Carlo critical-value table.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cloudbench/core.hpp"
#include "cloudbench/rng.hpp"

namespace cloudbench {

struct MeanStdCv {
    double mean;
    double std;   // sample (n-1) standard deviation
    double cv;
};

inline MeanStdCv mean_std_cv(const std::vector<double>& xs) {
    if (xs.size() < 2) throw Error("need at least 2 samples");
    double m = 0;
    for (double x : xs) m += x;
    m /= xs.size();
    double ss = 0;
    for (double x : xs) ss += (x - m) * (x - m);
    double sd = std::sqrt(ss / (xs.size() - 1));
    if (std::abs(m) < 1e-12) throw Error("zero mean: cv undefined");
    return {m, sd, sd / m};
}

inline double pearson_rho(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw Error("length mismatch");
    if (xs.size() < 3) throw Error("need at least 3 pairs");
    double mx = 0, my = 0;
    for (size_t i = 0; i < xs.size(); ++i) { mx += xs[i]; my += ys[i]; }
    mx /= xs.size();
    my /= ys.size();
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        double a = xs[i] - mx, b = ys[i] - my;
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if (sxx == 0 || syy == 0) throw Error("zero variance: rho undefined");
    double r = sxy / std::sqrt(sxx * syy);
    return std::clamp(r, -1.0, 1.0);
}

inline double normal_cdf(double z) {
    return 0.5 * std::erfc(-z / 1.4142135623730950488);
}

namespace detail {

// Regularized incomplete beta by Lentz's continued fraction.
inline double betacf(double a, double b, double x) {
    const double tiny = 1e-300;
    const double eps = 1e-15;
    double qab = a + b, qap = a + 1, qam = a - 1;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

inline double reg_inc_beta(double a, double b, double x) {
    if (x <= 0) return 0;
    if (x >= 1) return 1;
    double lnb = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                 a * std::log(x) + b * std::log1p(-x);
    double front = std::exp(lnb);
    // Use the symmetric form on whichever side converges fast.
    if (x < (a + 1) / (a + b + 2))
        return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1 - x) / b;
}

}  // namespace detail

inline double f_cdf(double x, int d1, int d2) {
    if (d1 <= 0 || d2 <= 0) throw Error("degrees of freedom must be positive");
    if (x < 0) throw Error("F statistic must be nonnegative");
    if (x == 0) return 0;
    double u = d1 * x / (d1 * x + d2);
    return detail::reg_inc_beta(d1 / 2.0, d2 / 2.0, u);
}

class Ecdf {
public:
    explicit Ecdf(std::vector<double> xs) : sorted_(std::move(xs)) {
        if (sorted_.empty()) throw Error("empty sample");
        std::sort(sorted_.begin(), sorted_.end());
    }

    double operator()(double x) const {
        auto it = std::upper_bound(sorted_.begin(), sorted_.end(), x);
        return static_cast<double>(it - sorted_.begin()) / sorted_.size();
    }

    const std::vector<double>& sorted() const { return sorted_; }
    size_t size() const { return sorted_.size(); }

private:
    std::vector<double> sorted_;
};

struct KdeCurve {
    std::vector<double> grid;
    std::vector<double> density;
    double bandwidth;
};

// Normal-reference bandwidth h = 1.06 s n^(-1/5); grid spans +-4h beyond
// the sample range so the kernels' mass is covered.
inline KdeCurve gaussian_kde(const std::vector<double>& xs, int grid_points = 256) {
    if (xs.size() < 2) throw Error("need at least 2 samples");
    if (grid_points < 2) throw Error("need at least 2 grid points");
    double mean = 0;
    for (double x : xs) mean += x;
    mean /= xs.size();
    double ss = 0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    double sd = std::sqrt(ss / (xs.size() - 1));
    if (sd == 0) throw Error("degenerate sample: zero variance");
    double h = 1.06 * sd * std::pow(static_cast<double>(xs.size()), -0.2);
    auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
    double lo = *mn - 4 * h, hi = *mx + 4 * h;
    KdeCurve k;
    k.bandwidth = h;
    k.grid.resize(grid_points);
    k.density.resize(grid_points);
    const double norm = 1.0 / (xs.size() * h * std::sqrt(6.283185307179586));
    for (int g = 0; g < grid_points; ++g) {
        double x = lo + (hi - lo) * g / (grid_points - 1);
        double s = 0;
        for (double xi : xs) {
            double z = (x - xi) / h;
            s += std::exp(-0.5 * z * z);
        }
        k.grid[g] = x;
        k.density[g] = norm * s;
    }
    return k;
}

// --- Lilliefors test ---------------------------------------------------

struct LillieforsResult {
    double statistic;
    double critical_value;
    bool reject;
    int n;
};

// 5% critical values, Monte Carlo calibrated; linear interpolation in n
// between grid points, sqrt(n) scaling beyond the last point.
class LillieforsTable {
public:
    LillieforsTable(std::vector<int> ns, std::vector<double> cvs)
        : ns_(std::move(ns)), cvs_(std::move(cvs)) {
        if (ns_.size() != cvs_.size() || ns_.empty())
            throw Error("malformed critical-value table");
        for (size_t i = 1; i < ns_.size(); ++i)
            if (ns_[i] <= ns_[i - 1]) throw Error("table n values must increase");
    }

    double critical_value(int n) const {
        if (n < ns_.front())
            throw Error("sample size below table range");
        if (n >= ns_.back())
            return cvs_.back() * std::sqrt(static_cast<double>(ns_.back()) / n);
        auto it = std::lower_bound(ns_.begin(), ns_.end(), n);
        size_t j = it - ns_.begin();
        if (ns_[j] == n) return cvs_[j];
        size_t i = j - 1;
        double t = static_cast<double>(n - ns_[i]) / (ns_[j] - ns_[i]);
        return cvs_[i] + t * (cvs_[j] - cvs_[i]);
    }

    const std::vector<int>& ns() const { return ns_; }
    const std::vector<double>& cvs() const { return cvs_; }

    void save_csv(const std::string& file) const {
        std::ofstream out(file, std::ios::trunc);
        if (!out) throw Error("cannot write table: " + file);
        out << "n,critical_value\n";
        for (size_t i = 0; i < ns_.size(); ++i) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%d,%.6f\n", ns_[i], cvs_[i]);
            out << buf;
        }
    }

    static LillieforsTable load_csv(const std::string& file) {
        std::ifstream in(file);
        if (!in) throw Error("cannot open table: " + file);
        std::string line;
        if (!std::getline(in, line) || trim(line) != "n,critical_value")
            throw Error("table header must be n,critical_value");
        std::vector<int> ns;
        std::vector<double> cvs;
        while (std::getline(in, line)) {
            if (trim(line).empty()) continue;
            auto f = split_csv_line(line);
            if (f.size() != 2) throw Error("malformed table row: " + line);
            ns.push_back(std::stoi(f[0]));
            cvs.push_back(std::stod(f[1]));
        }
        return LillieforsTable(std::move(ns), std::move(cvs));
    }

    // Bundled copy of assets/lilliefors_5pct.csv (equality is tested).
    static const LillieforsTable& builtin();

    // Monte Carlo generation: for each grid n, the 95th percentile of the
    // statistic over `reps` standard-normal samples. Deterministic in seed.
    static LillieforsTable build(const std::vector<int>& grid, int reps,
                                 std::uint64_t seed = 20150302);

private:
    std::vector<int> ns_;
    std::vector<double> cvs_;
};

inline double lilliefors_statistic(std::vector<double> xs) {
    size_t n = xs.size();
    std::sort(xs.begin(), xs.end());
    double m = 0;
    for (double x : xs) m += x;
    m /= n;
    double ss = 0;
    for (double x : xs) ss += (x - m) * (x - m);
    double sd = std::sqrt(ss / (n - 1));
    if (sd == 0) throw Error("zero variance sample");
    double d = 0;
    for (size_t i = 0; i < n; ++i) {
        double f = normal_cdf((xs[i] - m) / sd);
        double hi = (i + 1.0) / n - f;
        double lo = f - static_cast<double>(i) / n;
        d = std::max({d, hi, lo});
    }
    return d;
}

inline LillieforsResult lilliefors(const std::vector<double>& xs, double alpha = 0.05,
                                   const LillieforsTable* table = nullptr) {
    if (xs.size() < 30) throw Error("need at least 30 samples");
    if (alpha != 0.05) throw Error("only the 5% critical-value table is bundled");
    const LillieforsTable& t = table ? *table : LillieforsTable::builtin();
    double d = lilliefors_statistic(xs);
    double cv = t.critical_value(static_cast<int>(xs.size()));
    return {d, cv, d > cv, static_cast<int>(xs.size())};
}

inline LillieforsTable LillieforsTable::build(const std::vector<int>& grid, int reps,
                                              std::uint64_t seed) {
    if (reps < 100) throw Error("too few replications for a stable table");
    auto one_n = [reps, seed](int n) {
        std::vector<double> ds(reps);
        std::vector<double> xs(n);
        for (int r = 0; r < reps; ++r) {
            Rng rng(seed, "lf/" + std::to_string(n) + "/" + std::to_string(r));
            for (int i = 0; i < n; ++i) xs[i] = rng.normal();
            ds[r] = lilliefors_statistic(xs);
        }
        size_t k = static_cast<size_t>(0.95 * reps);
        std::nth_element(ds.begin(), ds.begin() + k, ds.end());
        return ds[k];
    };
    std::vector<std::future<double>> jobs;
    jobs.reserve(grid.size());
    for (int n : grid)
        jobs.push_back(std::async(std::launch::async, one_n, n));
    std::vector<double> cvs;
    cvs.reserve(grid.size());
    for (auto& j : jobs) cvs.push_back(j.get());
    return LillieforsTable(grid, cvs);
}

namespace detail {
// Values produced by LillieforsTable::build with the default seed and
// 100000 replications; kept in lockstep with assets/lilliefors_5pct.csv.
inline const std::array<std::pair<int, double>, 18>& builtin_lilliefors_rows();
}  // namespace detail

inline const LillieforsTable& LillieforsTable::builtin() {
    static const LillieforsTable t = [] {
        std::vector<int> ns;
        std::vector<double> cvs;
        for (const auto& [n, cv] : detail::builtin_lilliefors_rows()) {
            ns.push_back(n);
            cvs.push_back(cv);
        }
        return LillieforsTable(std::move(ns), std::move(cvs));
    }();
    return t;
}

namespace detail {
inline const std::array<std::pair<int, double>, 18>& builtin_lilliefors_rows() {
    static const std::array<std::pair<int, double>, 18> rows = {{
        // Regenerate with: cloudbench lilliefors-table --out <csv>
        {30, 0.158741}, {40, 0.138654}, {50, 0.124772}, {60, 0.114361},
        {80, 0.099190}, {100, 0.088809}, {120, 0.081200}, {150, 0.072999},
        {200, 0.063291}, {250, 0.056954}, {288, 0.052955}, {350, 0.048172},
        {400, 0.045031}, {504, 0.040191}, {600, 0.036870}, {700, 0.034014},
        {850, 0.030917}, {1000, 0.028596},
    }};
    return rows;
}
}  // namespace detail

}  // namespace cloudbench
