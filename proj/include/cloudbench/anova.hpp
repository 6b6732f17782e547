#pragma once

// Sequential (Type I) ANOVA for categorical factors and interactions.
//
// The engine works on the Gram matrix of the indicator design: each row
// activates exactly one column per term, so X'X is accumulated from short
// per-row activation lists and never materialized as a dense design.
// Columns enter in term order through a growing Cholesky factor; a column
// whose residual variance after projection is below tolerance is aliased
// and contributes no df. Reference coding: the last declared level of a
// factor carries coefficient 0, and interaction columns are products of
// the non-reference main-effect indicators.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cloudbench/core.hpp"
#include "cloudbench/stats.hpp"

namespace cloudbench {

struct FactorSpec {
    std::string name;
    std::vector<std::string> levels;  // last level is the reference
};

struct ModelSpec {
    std::string response;
    std::vector<FactorSpec> factors;
    std::vector<std::vector<std::string>> terms;  // fit order; 1-3 factor names each

    const FactorSpec& factor(const std::string& name) const {
        for (const auto& f : factors)
            if (f.name == name) return f;
        throw Error("unknown factor: " + name);
    }

    size_t factor_index(const std::string& name) const {
        for (size_t i = 0; i < factors.size(); ++i)
            if (factors[i].name == name) return i;
        throw Error("unknown factor: " + name);
    }

    void validate() const {
        for (const auto& f : factors) {
            if (f.levels.empty()) throw Error("factor " + f.name + " has no levels");
        }
        std::vector<std::string> seen;
        for (const auto& t : terms) {
            if (t.empty() || t.size() > 3)
                throw Error("terms must reference 1 to 3 factors");
            for (const auto& name : t) factor_index(name);
            std::string key;
            for (const auto& name : t) key += name + "*";
            if (std::find(seen.begin(), seen.end(), key) != seen.end())
                throw Error("duplicate term: " + key);
            seen.push_back(key);
        }
    }
};

inline std::string term_name(const std::vector<std::string>& term) {
    std::string s;
    for (size_t i = 0; i < term.size(); ++i) {
        if (i) s += "*";
        s += term[i];
    }
    return s;
}

struct FitInput {
    std::vector<double> y;
    // levels[f][row]: level index of factor f (ModelSpec::factors order).
    std::vector<std::vector<int>> levels;
};

struct AnovaRow {
    std::string term;
    double ss = 0;
    int df = 0;
    std::optional<double> pct_total;
    std::optional<double> pct_factors;   // absent for the intercept row
    std::optional<double> mean_square;
    std::optional<double> f_stat;
    std::optional<double> p_value;       // raw; display clamps below 1e-16
};

struct AnovaTable {
    std::vector<AnovaRow> rows;  // mu, terms..., error, total
    size_t n = 0;
    double ss_error = 0;
    int df_error = 0;
    double ss_total = 0;            // uncorrected, sum of squared responses
    double ss_total_corrected = 0;
    std::optional<double> adjusted_r2;  // absent when saturated
};

struct ParameterEstimate {
    std::string term;
    std::string level;     // level names joined with '*' for interactions
    double estimate = 0;   // exactly 0 for reference and aliased combinations
    std::optional<double> se;
    bool retained = false;
};

struct ParameterEstimates {
    double intercept = 0;
    std::optional<double> intercept_se;
    std::vector<ParameterEstimate> entries;

    double lookup(const std::string& term, const std::string& level) const {
        for (const auto& e : entries)
            if (e.term == term && e.level == level) return e.estimate;
        throw Error("no estimate for " + term + " / " + level);
    }
};

struct FitResult {
    AnovaTable table;
    ParameterEstimates params;
    std::vector<double> fitted;
    std::vector<double> residuals;
};

namespace detail {

// Mixed-radix enumeration of the non-reference level combinations of a
// term's factors: first factor is the most significant digit.
struct TermColumns {
    std::vector<size_t> factor_idx;   // into ModelSpec::factors
    std::vector<int> radix;           // non-reference level count per factor
    int count = 1;                    // product of radices (0 if any factor is unary)
    int first_col = 0;                // global column id of combo 0

    // Global column id for a row, or -1 when any constituent factor sits
    // at its reference level.
    int column_for(const FitInput& in, size_t row) const {
        int idx = 0;
        for (size_t k = 0; k < factor_idx.size(); ++k) {
            int lev = in.levels[factor_idx[k]][row];
            if (lev >= radix[k]) return -1;  // reference level
            idx = idx * radix[k] + lev;
        }
        return first_col + idx;
    }
};

inline double cholesky_forward_dot(const std::vector<double>& L, size_t r,
                                   const std::vector<double>& g, std::vector<double>& w) {
    // Solve L[0..r)x = g and return x'x; L is packed row-major lower triangular.
    double ww = 0;
    for (size_t i = 0; i < r; ++i) {
        const double* Li = L.data() + i * (i + 1) / 2;
        double s = g[i];
        for (size_t k = 0; k < i; ++k) s -= Li[k] * w[k];
        w[i] = s / Li[i];
        ww += w[i] * w[i];
    }
    return ww;
}

}  // namespace detail

constexpr double kAliasTolerance = 1e-8;  // on the squared-norm (variance) scale

inline FitResult fit_sequential(const FitInput& input, const ModelSpec& spec) {
    spec.validate();
    const size_t n = input.y.size();
    if (n < 2) throw Error("need at least 2 observations");
    if (input.levels.size() != spec.factors.size())
        throw Error("input factor count does not match the model");
    for (size_t f = 0; f < input.levels.size(); ++f) {
        if (input.levels[f].size() != n) throw Error("ragged factor columns");
        int lmax = static_cast<int>(spec.factors[f].levels.size());
        for (int lev : input.levels[f])
            if (lev < 0 || lev >= lmax)
                throw Error("level index out of range for factor " + spec.factors[f].name);
    }
    for (double v : input.y)
        if (!std::isfinite(v)) throw Error("non-finite response");

    // Column layout: 0 = intercept, then term blocks in order.
    std::vector<detail::TermColumns> blocks(spec.terms.size());
    int ncols = 1;
    for (size_t t = 0; t < spec.terms.size(); ++t) {
        auto& b = blocks[t];
        b.first_col = ncols;
        for (const auto& fname : spec.terms[t]) {
            size_t fi = spec.factor_index(fname);
            b.factor_idx.push_back(fi);
            b.radix.push_back(static_cast<int>(spec.factors[fi].levels.size()) - 1);
            b.count *= b.radix.back();
        }
        ncols += b.count;
    }

    // Per-row active columns (intercept implicit), then per-column row lists.
    std::vector<int> col_of_row_term(n * spec.terms.size());
    std::vector<int> col_rows_count(ncols, 0);
    for (size_t r = 0; r < n; ++r) {
        for (size_t t = 0; t < spec.terms.size(); ++t) {
            int c = blocks[t].column_for(input, r);
            col_of_row_term[r * spec.terms.size() + t] = c;
            if (c >= 0) ++col_rows_count[c];
        }
    }
    col_rows_count[0] = static_cast<int>(n);
    std::vector<int> col_rows_off(ncols + 1, 0);
    for (int c = 0; c < ncols; ++c) col_rows_off[c + 1] = col_rows_off[c] + col_rows_count[c];
    std::vector<int> col_rows(col_rows_off[ncols]);
    {
        std::vector<int> fill(col_rows_off.begin(), col_rows_off.end() - 1);
        for (size_t r = 0; r < n; ++r) {
            col_rows[fill[0]++] = static_cast<int>(r);
            for (size_t t = 0; t < spec.terms.size(); ++t) {
                int c = col_of_row_term[r * spec.terms.size() + t];
                if (c > 0) col_rows[fill[c]++] = static_cast<int>(r);
            }
        }
    }

    double yy = 0;
    for (double v : input.y) yy += v * v;

    // Sequential Cholesky over accepted columns.
    const size_t max_rank = std::min(n, static_cast<size_t>(ncols));
    std::vector<double> L;
    L.reserve(max_rank * (max_rank + 1) / 2);
    std::vector<double> c_vec;          // orthonormal-basis response coefficients
    c_vec.reserve(max_rank);
    std::vector<int> retained_cols;     // global column ids, acceptance order
    retained_cols.reserve(max_rank);
    std::vector<int> retained_idx(ncols, -1);
    std::vector<double> gcol(max_rank), w(max_rank);

    std::vector<double> term_ss(spec.terms.size(), 0.0);
    std::vector<int> term_df(spec.terms.size(), 0);
    double ss_mu = 0;

    auto process_column = [&](int c, size_t term_of_c) {
        const size_t rank = retained_cols.size();
        double gjj = 0, xy = 0;
        std::fill(gcol.begin(), gcol.begin() + rank, 0.0);
        for (int k = col_rows_off[c]; k < col_rows_off[c + 1]; ++k) {
            int r = col_rows[k];
            gjj += 1.0;
            xy += input.y[r];
            if (retained_idx[0] >= 0 && c != 0) gcol[retained_idx[0]] += 1.0;
            const int* rowterms = col_of_row_term.data() + static_cast<size_t>(r) * spec.terms.size();
            for (size_t t = 0; t < spec.terms.size(); ++t) {
                int c2 = rowterms[t];
                if (c2 >= 0 && c2 < c && retained_idx[c2] >= 0) gcol[retained_idx[c2]] += 1.0;
            }
        }
        if (gjj == 0) return;  // combination never observed
        double ww = detail::cholesky_forward_dot(L, rank, gcol, w);
        double d = gjj - ww;
        if (d <= kAliasTolerance * gjj) return;  // aliased with earlier columns
        double ell = std::sqrt(d);
        for (size_t i = 0; i < rank; ++i) L.push_back(w[i]);
        L.push_back(ell);
        double num = xy;
        for (size_t i = 0; i < rank; ++i) num -= w[i] * c_vec[i];
        double cj = num / ell;
        c_vec.push_back(cj);
        retained_cols.push_back(c);
        retained_idx[c] = static_cast<int>(rank);
        if (c == 0) {
            ss_mu += cj * cj;
        } else {
            term_ss[term_of_c] += cj * cj;
            term_df[term_of_c] += 1;
        }
    };

    process_column(0, 0);
    for (size_t t = 0; t < spec.terms.size(); ++t)
        for (int c = blocks[t].first_col; c < blocks[t].first_col + blocks[t].count; ++c)
            process_column(c, t);

    const size_t rank = retained_cols.size();
    double explained = 0;
    for (double c : c_vec) explained += c * c;
    double ss_error = yy - explained;
    if (ss_error < 0 && ss_error > -1e-8 * std::max(yy, 1.0)) ss_error = 0;
    if (ss_error < 0) throw Error("negative residual sum of squares: ill-conditioned fit");
    int df_error = static_cast<int>(n - rank);
    const bool mse_defined = df_error > 0;
    const double mse = mse_defined ? ss_error / df_error : 0.0;
    const bool f_defined = mse_defined && mse > 1e-12 * std::max(yy / n, 1.0);

    // Coefficients by back substitution, mapped to (term, level combo).
    std::vector<double> beta(rank);
    for (size_t ii = rank; ii-- > 0;) {
        double s = c_vec[ii];
        for (size_t k = ii + 1; k < rank; ++k)
            s -= L[k * (k + 1) / 2 + ii] * beta[k];
        beta[ii] = s / L[ii * (ii + 1) / 2 + ii];
    }
    std::vector<double> se(rank, 0.0);
    if (f_defined) {
        // diag of (X'X)^-1 via forward solves against unit vectors
        std::vector<double> x(rank);
        for (size_t i = 0; i < rank; ++i) {
            double acc = 0;
            for (size_t k = i; k < rank; ++k) {
                const double* Lk = L.data() + k * (k + 1) / 2;
                double s = (k == i) ? 1.0 : 0.0;
                for (size_t m2 = i; m2 < k; ++m2) s -= Lk[m2] * x[m2];
                x[k] = s / Lk[k];
                acc += x[k] * x[k];
            }
            se[i] = std::sqrt(mse * acc);
        }
    }

    FitResult out;
    out.params.intercept = beta.empty() ? 0 : beta[0];
    if (f_defined && !beta.empty()) out.params.intercept_se = se[0];

    std::vector<double> col_beta(ncols, 0.0);
    std::vector<std::optional<double>> col_se(ncols);
    for (size_t i = 0; i < rank; ++i) {
        col_beta[retained_cols[i]] = beta[i];
        if (f_defined) col_se[retained_cols[i]] = se[i];
    }

    for (size_t t = 0; t < spec.terms.size(); ++t) {
        const auto& b = blocks[t];
        std::vector<int> full_radix;
        for (size_t k = 0; k < b.factor_idx.size(); ++k)
            full_radix.push_back(static_cast<int>(spec.factors[b.factor_idx[k]].levels.size()));
        int total = 1;
        for (int r : full_radix) total *= r;
        for (int combo = 0; combo < total; ++combo) {
            int rem = combo;
            std::vector<int> levs(full_radix.size());
            for (size_t k = full_radix.size(); k-- > 0;) {
                levs[k] = rem % full_radix[k];
                rem /= full_radix[k];
            }
            ParameterEstimate e;
            e.term = term_name(spec.terms[t]);
            bool nonref = true;
            int cidx = 0;
            for (size_t k = 0; k < levs.size(); ++k) {
                if (k) e.level += "*";
                e.level += spec.factors[b.factor_idx[k]].levels[levs[k]];
                if (levs[k] >= b.radix[k]) nonref = false;
                else cidx = cidx * b.radix[k] + levs[k];
            }
            if (nonref) {
                int c = b.first_col + cidx;
                e.estimate = col_beta[c];
                e.se = col_se[c];
                e.retained = retained_idx[c] >= 0;
            }
            out.params.entries.push_back(std::move(e));
        }
    }

    // Fitted values straight from the coefficient lookup each row matches.
    out.fitted.resize(n);
    out.residuals.resize(n);
    for (size_t r = 0; r < n; ++r) {
        double f = out.params.intercept;
        for (size_t t = 0; t < spec.terms.size(); ++t) {
            int c = col_of_row_term[r * spec.terms.size() + t];
            if (c >= 0) f += col_beta[c];
        }
        out.fitted[r] = f;
        out.residuals[r] = input.y[r] - f;
    }

    // Assemble the table.
    AnovaTable& tab = out.table;
    tab.n = n;
    tab.ss_error = ss_error;
    tab.df_error = df_error;
    tab.ss_total = yy;
    tab.ss_total_corrected = yy - ss_mu;

    auto pct = [&](double ss) { return yy > 0 ? 100.0 * ss / yy : 0.0; };
    auto pct_f = [&](double ss) {
        return tab.ss_total_corrected > 0 ? 100.0 * ss / tab.ss_total_corrected : 0.0;
    };

    AnovaRow mu;
    mu.term = "mu";
    mu.ss = ss_mu;
    mu.df = ss_mu > 0 || rank > 0 ? 1 : 0;
    mu.pct_total = pct(ss_mu);
    if (mu.df > 0) {
        mu.mean_square = ss_mu / mu.df;
        if (f_defined) {
            mu.f_stat = *mu.mean_square / mse;
            mu.p_value = std::clamp(1.0 - f_cdf(*mu.f_stat, mu.df, df_error), 0.0, 1.0);
        }
    }
    tab.rows.push_back(mu);

    for (size_t t = 0; t < spec.terms.size(); ++t) {
        AnovaRow row;
        row.term = term_name(spec.terms[t]);
        row.ss = term_ss[t];
        row.df = term_df[t];
        row.pct_total = pct(row.ss);
        row.pct_factors = pct_f(row.ss);
        if (row.df > 0) {
            row.mean_square = row.ss / row.df;
            if (f_defined) {
                row.f_stat = *row.mean_square / mse;
                row.p_value = std::clamp(1.0 - f_cdf(*row.f_stat, row.df, df_error), 0.0, 1.0);
            }
        }
        tab.rows.push_back(row);
    }

    AnovaRow err;
    err.term = "error";
    err.ss = ss_error;
    err.df = df_error;
    err.pct_total = pct(ss_error);
    err.pct_factors = pct_f(ss_error);
    if (df_error > 0) err.mean_square = mse;
    tab.rows.push_back(err);

    AnovaRow tot;
    tot.term = "total";
    tot.ss = yy;
    tot.df = static_cast<int>(n);
    tot.pct_total = 100.0;
    tot.pct_factors = 100.0;
    tab.rows.push_back(tot);

    if (df_error > 0 && n > rank && tab.ss_total_corrected > 0 && n >= 2) {
        double df_tot_corr = static_cast<double>(n - 1);
        tab.adjusted_r2 = 1.0 - (ss_error / df_error) / (tab.ss_total_corrected / df_tot_corr);
    }
    return out;
}

struct IndependenceCheck {
    double r1;
    double bound;  // 2/sqrt(n)
    bool pass;
};

inline IndependenceCheck residual_independence_check(const std::vector<double>& residuals) {
    const size_t n = residuals.size();
    if (n < 30) throw Error("need at least 30 residuals");
    double m = 0;
    for (double e : residuals) m += e;
    m /= n;
    double num = 0, den = 0;
    for (size_t i = 0; i < n; ++i) {
        double d = residuals[i] - m;
        den += d * d;
        if (i + 1 < n) num += d * (residuals[i + 1] - m);
    }
    if (den == 0) throw Error("zero-variance residuals");
    double r1 = num / den;
    double bound = 2.0 / std::sqrt(static_cast<double>(n));
    return {r1, bound, std::abs(r1) < bound};
}

// --- Model presets -------------------------------------------------------

namespace detail {

inline std::vector<std::string> hour_levels() {
    // 15h last: the quietest hour anchors the parameterization.
    std::vector<std::string> v;
    for (int h = 0; h < 24; ++h)
        if (h != 15) v.push_back(std::to_string(h) + "h");
    v.push_back("15h");
    return v;
}

inline std::vector<std::string> weekday_levels() {
    return {"Mon", "Wed", "Thu", "Fri", "Sat", "Sun", "Tue"};
}

inline std::vector<std::string> area_levels() {
    return {"EastUS", "WestUS", "CentralUS", "NorthEurope",
            "Australia", "SouthAmerica", "EastAsia"};
}

inline std::vector<std::string> csp_src_levels() { return {"C1", "C2", "C4", "C3"}; }
inline std::vector<std::string> csp_dst_levels() { return {"C2", "C3", "C4", "C1"}; }

inline std::vector<std::string> dc_levels(const Catalog& catalog) {
    std::vector<std::string> v;
    for (const auto& dc : catalog.entries()) v.push_back(dc.id);
    return v;
}

}  // namespace detail

inline ModelSpec bandwidth_model(const Catalog& catalog) {
    ModelSpec m;
    m.response = "bandwidth_mbps";
    m.factors = {
        {"time", detail::hour_levels()},
        {"weekday", detail::weekday_levels()},
        {"area_src", detail::area_levels()},
        {"area_dst", detail::area_levels()},
        {"csp_src", detail::csp_src_levels()},
        {"csp_dst", detail::csp_dst_levels()},
        {"dc_src", detail::dc_levels(catalog)},
        {"dc_dst", detail::dc_levels(catalog)},
    };
    m.terms = {
        {"time"},
        {"weekday"},
        {"area_src"},
        {"area_dst"},
        {"csp_src"},
        {"csp_dst"},
        {"dc_src"},
        {"dc_dst"},
        {"area_src", "area_dst"},
        {"csp_src", "csp_dst"},
        {"dc_src", "dc_dst"},
    };
    m.validate();
    return m;
}

inline ModelSpec correlation_model(const Catalog& catalog) {
    ModelSpec m;
    m.response = "pair_rho";
    m.factors = {
        {"area_src", detail::area_levels()},
        {"area_dst1", detail::area_levels()},
        {"area_dst2", detail::area_levels()},
        {"csp_src", detail::csp_src_levels()},
        {"csp_dst1", detail::csp_dst_levels()},
        {"csp_dst2", detail::csp_dst_levels()},
        {"dc_src", detail::dc_levels(catalog)},
        {"dc_dst1", detail::dc_levels(catalog)},
        {"dc_dst2", detail::dc_levels(catalog)},
    };
    m.terms = {
        {"area_src"},
        {"area_dst1"},
        {"area_dst2"},
        {"csp_src"},
        {"csp_dst1"},
        {"csp_dst2"},
        {"dc_src"},
        {"dc_dst1"},
        {"dc_dst2"},
        {"area_src", "area_dst1"},
        {"area_src", "area_dst2"},
        {"area_dst1", "area_dst2"},
        {"csp_src", "csp_dst1"},
        {"csp_src", "csp_dst2"},
        {"csp_dst1", "csp_dst2"},
        {"dc_src", "dc_dst1"},
        {"dc_src", "dc_dst2"},
        {"dc_dst1", "dc_dst2"},
        {"area_src", "area_dst1", "area_dst2"},
        {"csp_src", "csp_dst1", "csp_dst2"},
        {"dc_src", "dc_dst1", "dc_dst2"},
    };
    m.validate();
    return m;
}

// Maps derived observation rows onto model level indices by level name.
inline FitInput bandwidth_input(const std::vector<ObservationRow>& rows, const ModelSpec& spec) {
    std::vector<std::unordered_map<std::string, int>> lut(spec.factors.size());
    for (size_t f = 0; f < spec.factors.size(); ++f)
        for (size_t l = 0; l < spec.factors[f].levels.size(); ++l)
            lut[f][spec.factors[f].levels[l]] = static_cast<int>(l);

    auto idx = [&](size_t f, const std::string& name) {
        auto it = lut[f].find(name);
        if (it == lut[f].end())
            throw Error("level " + name + " not declared for factor " + spec.factors[f].name);
        return it->second;
    };

    FitInput in;
    in.y.reserve(rows.size());
    in.levels.assign(spec.factors.size(), {});
    for (auto& col : in.levels) col.reserve(rows.size());
    for (const auto& r : rows) {
        in.y.push_back(r.response);
        in.levels[0].push_back(idx(0, std::to_string(r.time_level) + "h"));
        in.levels[1].push_back(idx(1, to_string(r.weekday_level)));
        in.levels[2].push_back(idx(2, to_string(r.area_s)));
        in.levels[3].push_back(idx(3, to_string(r.area_d)));
        in.levels[4].push_back(idx(4, to_string(r.csp_s)));
        in.levels[5].push_back(idx(5, to_string(r.csp_d)));
        in.levels[6].push_back(idx(6, r.dc_s));
        in.levels[7].push_back(idx(7, r.dc_d));
    }
    return in;
}

}  // namespace cloudbench
