#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "cloudbench/anova.hpp"
#include "cloudbench/simulate.hpp"
#include "helpers.hpp"
#include "oracle.hpp"

using namespace cloudbench;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

ModelSpec one_factor_spec(int levels) {
    ModelSpec m;
    m.response = "y";
    FactorSpec f;
    f.name = "g";
    for (int l = 0; l < levels; ++l) f.levels.push_back("g" + std::to_string(l + 1));
    m.factors.push_back(f);
    m.terms.push_back({"g"});
    return m;
}

const AnovaRow& row_of(const AnovaTable& t, const std::string& term) {
    for (const auto& r : t.rows)
        if (r.term == term) return r;
    throw Error("no such row: " + term);
}

}  // namespace

TEST_CASE("one-factor fit matches the closed form") {
    FitInput in;
    in.y = {1, 2, 3, 4, 5, 6};
    in.levels = {{0, 0, 0, 1, 1, 1}};
    auto fit = fit_sequential(in, one_factor_spec(2));

    const auto& g = row_of(fit.table, "g");
    CHECK_THAT(g.ss, WithinAbs(13.5, 1e-12));
    CHECK(g.df == 1);
    CHECK_THAT(*g.f_stat, WithinAbs(13.5, 1e-12));

    const auto& err = row_of(fit.table, "error");
    CHECK_THAT(err.ss, WithinAbs(4.0, 1e-12));
    CHECK(err.df == 4);

    const auto& mu = row_of(fit.table, "mu");
    CHECK_THAT(mu.ss, WithinAbs(73.5, 1e-12));
    CHECK(mu.df == 1);
    CHECK_THAT(fit.table.ss_total, WithinAbs(91.0, 1e-12));
    CHECK_THAT(*fit.table.adjusted_r2, WithinAbs(1.0 - 1.0 / 3.5, 1e-12));

    // Reference coding: intercept is the last group's mean.
    CHECK_THAT(fit.params.intercept, WithinAbs(5.0, 1e-12));
    CHECK_THAT(fit.params.lookup("g", "g1"), WithinAbs(-3.0, 1e-12));
    CHECK(fit.params.lookup("g", "g2") == 0.0);

    // SE of the group contrast: sqrt(MSE * (1/3 + 1/3)).
    for (const auto& e : fit.params.entries)
        if (e.term == "g" && e.level == "g1")
            CHECK_THAT(*e.se, WithinAbs(std::sqrt(2.0 / 3.0), 1e-12));

    auto agree = oracle::one_way({{1, 2, 3}, {4, 5, 6}});
    CHECK_THAT(g.ss, WithinRel(agree.between_ss, 1e-12));
    CHECK_THAT(err.ss, WithinRel(agree.within_ss, 1e-12));
    CHECK_THAT(*g.f_stat, WithinRel(agree.f, 1e-12));
}

TEST_CASE("one-factor fits agree with group means over many draws") {
    std::mt19937_64 eng(101);
    std::uniform_int_distribution<int> ngroups(2, 5);
    std::uniform_int_distribution<int> per(3, 9);
    std::normal_distribution<double> normal;
    for (int rep = 0; rep < 40; ++rep) {
        int k = ngroups(eng);
        std::vector<std::vector<double>> groups(k);
        FitInput in;
        in.levels.resize(1);
        for (int g = 0; g < k; ++g) {
            int n = per(eng);
            double shift = 2.0 * g;
            for (int i = 0; i < n; ++i) {
                double v = shift + normal(eng);
                groups[g].push_back(v);
                in.y.push_back(v);
                in.levels[0].push_back(g);
            }
        }
        auto fit = fit_sequential(in, one_factor_spec(k));
        auto want = oracle::one_way(groups);
        const auto& g = row_of(fit.table, "g");
        const auto& e = row_of(fit.table, "error");
        CHECK_THAT(g.ss, WithinRel(want.between_ss, 1e-9));
        CHECK(g.df == want.between_df);
        CHECK_THAT(e.ss, WithinRel(want.within_ss, 1e-9));
        CHECK(e.df == want.within_df);
        CHECK_THAT(*g.f_stat, WithinRel(want.f, 1e-9));
    }
}

TEST_CASE("single-level factor contributes nothing") {
    ModelSpec m;
    m.response = "y";
    m.factors = {{"only", {"lone"}}, {"g", {"a", "b"}}};
    m.terms = {{"only"}, {"g"}};
    FitInput in;
    in.y = {1, 2, 3, 4};
    in.levels = {{0, 0, 0, 0}, {0, 0, 1, 1}};
    auto fit = fit_sequential(in, m);
    const auto& r = row_of(fit.table, "only");
    CHECK(r.ss == 0.0);
    CHECK(r.df == 0);
    CHECK(row_of(fit.table, "g").df == 1);
}

TEST_CASE("constant response yields a bare intercept and undefined F") {
    FitInput in;
    in.y.assign(8, 7.0);
    in.levels = {{0, 1, 0, 1, 0, 1, 0, 1}};
    auto fit = fit_sequential(in, one_factor_spec(2));
    CHECK_THAT(fit.params.intercept, WithinAbs(7.0, 1e-12));
    CHECK_THAT(fit.params.lookup("g", "g1"), WithinAbs(0.0, 1e-9));
    CHECK_FALSE(row_of(fit.table, "g").f_stat.has_value());
    CHECK_FALSE(row_of(fit.table, "mu").f_stat.has_value());
}

TEST_CASE("sequential fit matches the dense orthogonalization oracle") {
    std::mt19937_64 eng(2024);
    for (int rep = 0; rep < 60; ++rep) {
        auto sc = oracle::random_small_case(eng);
        auto fit = fit_sequential(sc.input, sc.spec);
        auto want = oracle::fit_dense(sc.input, sc.spec);

        CHECK_THAT(row_of(fit.table, "mu").ss, WithinRel(want.intercept_ss, 1e-9));
        for (const auto& w : want.terms) {
            const auto& r = row_of(fit.table, w.term);
            CHECK(r.df == w.df);
            if (w.ss > 1e-9 * want.total_ss)
                CHECK_THAT(r.ss, WithinRel(w.ss, 1e-9));
            else
                CHECK_THAT(r.ss, WithinAbs(w.ss, 1e-9 * want.total_ss));
        }
        CHECK_THAT(fit.table.ss_error, WithinRel(want.error_ss, 1e-9));
        CHECK(fit.table.df_error == want.error_df);

        double mse = want.error_ss / want.error_df;
        for (const auto& w : want.terms) {
            if (w.df == 0 || mse <= 0) continue;
            const auto& r = row_of(fit.table, w.term);
            CHECK_THAT(*r.f_stat, WithinRel((w.ss / w.df) / mse, 1e-9));
        }
    }
}

TEST_CASE("sum of squares and degrees of freedom are additive") {
    std::mt19937_64 eng(31337);
    for (int rep = 0; rep < 25; ++rep) {
        auto sc = oracle::random_small_case(eng);
        auto fit = fit_sequential(sc.input, sc.spec);
        double ss = fit.table.ss_error;
        int df = fit.table.df_error;
        for (const auto& t : sc.spec.terms) {
            ss += row_of(fit.table, term_name(t)).ss;
            df += row_of(fit.table, term_name(t)).df;
        }
        ss += row_of(fit.table, "mu").ss;
        df += row_of(fit.table, "mu").df;
        CHECK_THAT(ss, WithinRel(fit.table.ss_total, 1e-8));
        CHECK(df == static_cast<int>(fit.table.n));
    }
}

TEST_CASE("pct_total covers the whole table") {
    std::mt19937_64 eng(4);
    auto sc = oracle::random_small_case(eng);
    auto fit = fit_sequential(sc.input, sc.spec);
    double pct = 0;
    for (const auto& r : fit.table.rows)
        if (r.term != "total" && r.pct_total) pct += *r.pct_total;
    CHECK_THAT(pct, WithinAbs(100.0, 0.1));
}

TEST_CASE("relabeling levels changes keys but no statistics") {
    std::mt19937_64 eng(77);
    auto sc = oracle::random_small_case(eng);
    auto base = fit_sequential(sc.input, sc.spec);

    ModelSpec renamed = sc.spec;
    for (auto& f : renamed.factors)
        for (auto& l : f.levels) l = "x_" + l;
    auto fit = fit_sequential(sc.input, renamed);

    REQUIRE(fit.table.rows.size() == base.table.rows.size());
    for (size_t i = 0; i < fit.table.rows.size(); ++i) {
        CHECK(fit.table.rows[i].ss == base.table.rows[i].ss);
        CHECK(fit.table.rows[i].df == base.table.rows[i].df);
        CHECK(fit.table.rows[i].f_stat == base.table.rows[i].f_stat);
    }
    CHECK(fit.params.intercept == base.params.intercept);
    for (size_t i = 0; i < fit.params.entries.size(); ++i) {
        CHECK(fit.params.entries[i].estimate == base.params.entries[i].estimate);
        CHECK(fit.params.entries[i].level.find("x_") == 0);
    }
}

TEST_CASE("scaling the response scales SS by c^2 and estimates by c") {
    std::mt19937_64 eng(55);
    auto sc = oracle::random_small_case(eng);
    auto base = fit_sequential(sc.input, sc.spec);

    const double c = 3.25;
    FitInput scaled = sc.input;
    for (auto& v : scaled.y) v *= c;
    auto fit = fit_sequential(scaled, sc.spec);

    for (size_t i = 0; i < fit.table.rows.size(); ++i) {
        CHECK_THAT(fit.table.rows[i].ss, WithinRel(base.table.rows[i].ss * c * c, 1e-9));
        CHECK(fit.table.rows[i].df == base.table.rows[i].df);
        if (base.table.rows[i].f_stat)
            CHECK_THAT(*fit.table.rows[i].f_stat, WithinRel(*base.table.rows[i].f_stat, 1e-9));
        if (base.table.rows[i].pct_total)
            CHECK_THAT(*fit.table.rows[i].pct_total,
                       WithinAbs(*base.table.rows[i].pct_total, 1e-9));
    }
    CHECK_THAT(fit.params.intercept, WithinRel(base.params.intercept * c, 1e-9));
    for (size_t i = 0; i < fit.params.entries.size(); ++i)
        if (base.params.entries[i].retained &&
            std::abs(base.params.entries[i].estimate) > 1e-9)
            CHECK_THAT(fit.params.entries[i].estimate,
                       WithinRel(base.params.entries[i].estimate * c, 1e-9));
}

TEST_CASE("term order moves credit but not the overall decomposition") {
    ModelSpec m;
    m.response = "y";
    m.factors = {{"a", {"a0", "a1", "a2"}}, {"b", {"b0", "b1"}}};
    m.terms = {{"a"}, {"b"}};
    ModelSpec swapped = m;
    swapped.terms = {{"b"}, {"a"}};

    std::mt19937_64 eng(9);
    std::normal_distribution<double> normal;
    std::uniform_int_distribution<int> la(0, 2), lb(0, 1);
    FitInput in;
    in.levels.resize(2);
    for (int i = 0; i < 40; ++i) {
        int a = la(eng), b = lb(eng);
        in.levels[0].push_back(a);
        in.levels[1].push_back(b);
        // Unbalanced effects so the factors are correlated and order matters.
        in.y.push_back(1.0 + 2 * a + 3 * b + (a == b ? 1.5 : 0) + normal(eng));
    }

    auto f1 = fit_sequential(in, m);
    auto f2 = fit_sequential(in, swapped);
    CHECK_THAT(f1.table.ss_error, WithinRel(f2.table.ss_error, 1e-9));
    double expl1 = row_of(f1.table, "a").ss + row_of(f1.table, "b").ss;
    double expl2 = row_of(f2.table, "a").ss + row_of(f2.table, "b").ss;
    CHECK_THAT(expl1, WithinRel(expl2, 1e-9));
    for (size_t i = 0; i < in.y.size(); ++i) {
        CHECK_THAT(f1.fitted[i], WithinAbs(f2.fitted[i], 1e-9));
        CHECK_THAT(f1.residuals[i], WithinAbs(f2.residuals[i], 1e-9));
    }
    // Type I credit itself genuinely depends on order here.
    CHECK(std::abs(row_of(f1.table, "a").ss - row_of(f2.table, "a").ss) > 1e-6);
}

TEST_CASE("fitted plus residual reconstructs every observation") {
    std::mt19937_64 eng(12);
    auto sc = oracle::random_small_case(eng);
    auto fit = fit_sequential(sc.input, sc.spec);
    for (size_t i = 0; i < sc.input.y.size(); ++i)
        CHECK_THAT(fit.fitted[i] + fit.residuals[i], WithinRel(sc.input.y[i], 1e-8));
}

TEST_CASE("appending a noise factor never increases error SS") {
    std::mt19937_64 eng(13);
    std::uniform_int_distribution<int> lev(0, 3);
    for (int rep = 0; rep < 10; ++rep) {
        auto sc = oracle::random_small_case(eng);
        auto base = fit_sequential(sc.input, sc.spec);

        ModelSpec wider = sc.spec;
        FactorSpec noise;
        noise.name = "noise";
        noise.levels = {"n0", "n1", "n2", "n3"};
        wider.factors.push_back(noise);
        wider.terms.push_back({"noise"});
        FitInput in = sc.input;
        in.levels.emplace_back();
        for (size_t i = 0; i < in.y.size(); ++i) in.levels.back().push_back(lev(eng));

        auto fit = fit_sequential(in, wider);
        CHECK(fit.table.ss_error <= base.table.ss_error + 1e-9 * base.table.ss_total);
    }
}

TEST_CASE("saturated fits report undefined F and no adjusted R2") {
    FitInput in;
    in.y = {3, 5, 9};
    in.levels = {{0, 1, 2}};
    auto fit = fit_sequential(in, one_factor_spec(3));
    CHECK(fit.table.df_error == 0);
    CHECK_THAT(fit.table.ss_error, WithinAbs(0.0, 1e-18));
    CHECK_FALSE(row_of(fit.table, "g").f_stat.has_value());
    CHECK_FALSE(row_of(fit.table, "g").p_value.has_value());
    CHECK_FALSE(fit.table.adjusted_r2.has_value());
}

TEST_CASE("aliased columns are dropped with zero estimates") {
    // Second factor duplicates the first, so its columns are fully aliased.
    ModelSpec m;
    m.response = "y";
    m.factors = {{"a", {"a0", "a1"}}, {"copy", {"c0", "c1"}}};
    m.terms = {{"a"}, {"copy"}};
    FitInput in;
    in.y = {1, 2, 3, 4, 5, 7};
    in.levels = {{0, 0, 0, 1, 1, 1}, {0, 0, 0, 1, 1, 1}};
    auto fit = fit_sequential(in, m);
    CHECK(row_of(fit.table, "a").df == 1);
    CHECK(row_of(fit.table, "copy").df == 0);
    CHECK(row_of(fit.table, "copy").ss == 0.0);
    CHECK(fit.params.lookup("copy", "c0") == 0.0);
    for (const auto& e : fit.params.entries)
        if (e.term == "copy" && e.level == "c0") CHECK_FALSE(e.retained);
}

TEST_CASE("bandwidth model declares the published structure") {
    Catalog cat(reference_catalog_entries());
    auto m = bandwidth_model(cat);
    REQUIRE(m.terms.size() == 11);
    CHECK(m.terms.front() == std::vector<std::string>{"time"});
    CHECK(m.terms.back() == (std::vector<std::string>{"dc_src", "dc_dst"}));
    CHECK(m.factor("time").levels.size() == 24);
    CHECK(m.factor("time").levels.back() == "15h");
    CHECK(m.factor("weekday").levels.back() == "Tue");
    CHECK(m.factor("area_src").levels.back() == "EastAsia");
    CHECK(m.factor("csp_src").levels.back() == "C3");
    CHECK(m.factor("csp_dst").levels.back() == "C1");
    CHECK(m.factor("dc_src").levels.size() == 18);
}

TEST_CASE("correlation model declares the published structure") {
    Catalog cat(reference_catalog_entries());
    auto m = correlation_model(cat);
    REQUIRE(m.terms.size() == 21);
    auto has = [&](std::vector<std::string> t) {
        return std::find(m.terms.begin(), m.terms.end(), t) != m.terms.end();
    };
    CHECK(has({"area_src", "area_dst1", "area_dst2"}));
    CHECK(m.terms.back() == (std::vector<std::string>{"dc_src", "dc_dst1", "dc_dst2"}));
    CHECK(m.terms.front() == std::vector<std::string>{"area_src"});
}

TEST_CASE("full-factorial bandwidth fit reproduces the nested df structure") {
    auto spec = scenario_table3(4242);
    auto gen = generate(spec, 1);
    Catalog cat(reference_catalog_entries());
    auto model = bandwidth_model(cat);
    auto fit = fit_sequential(bandwidth_input(gen.dataset.derive_all(cat), model), model);

    auto df = [&](const std::string& t) { return row_of(fit.table, t).df; };
    CHECK(df("time") == 23);
    CHECK(df("weekday") == 6);
    CHECK(df("area_src") == 6);
    CHECK(df("area_dst") == 6);
    CHECK(df("csp_src") == 3);
    CHECK(df("csp_dst") == 3);
    CHECK(df("dc_src") == 8);   // nested inside area x csp
    CHECK(df("dc_dst") == 8);
    CHECK(df("area_src*area_dst") == 35);
    CHECK(df("csp_src*csp_dst") == 9);
    // All 306 path cells present: 305 path df minus 78 consumed above.
    CHECK(df("dc_src*dc_dst") == 227);
}

TEST_CASE("dropping one path cell lowers the path interaction df by one") {
    auto spec = scenario_table3(4242);
    auto gen = generate(spec, 1);
    Catalog cat(reference_catalog_entries());

    Dataset pruned;
    for (const auto& s : gen.dataset.samples)
        if (!(s.path.src == "virginia_c1" && s.path.dst == "california_c1"))
            pruned.samples.push_back(s);

    auto model = bandwidth_model(cat);
    auto fit = fit_sequential(bandwidth_input(pruned.derive_all(cat), model), model);
    CHECK(row_of(fit.table, "dc_src*dc_dst").df == 226);
    CHECK(row_of(fit.table, "dc_src").df == 8);
}

TEST_CASE("residual independence check") {
    SECTION("shuffled noise passes nearly always") {
        int passes = 0;
        for (int s = 0; s < 100; ++s) {
            auto xs = testutil::gaussian_values(200, 0, 1, 9000 + s);
            if (residual_independence_check(xs).pass) ++passes;
        }
        CHECK(passes >= 95);
    }
    SECTION("a slow ramp fails") {
        std::vector<double> xs;
        for (int i = 0; i < 200; ++i) xs.push_back(std::sin(i / 30.0));
        auto c = residual_independence_check(xs);
        CHECK(c.r1 > c.bound);
        CHECK_FALSE(c.pass);
    }
    SECTION("too few residuals") {
        REQUIRE_THROWS_AS(residual_independence_check(std::vector<double>(10, 1.0)), Error);
    }
}
