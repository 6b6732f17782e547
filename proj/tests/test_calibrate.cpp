#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <string>
#include <vector>

#include "cloudbench/calibrate.hpp"
#include "cloudbench/stats.hpp"
#include "helpers.hpp"

using namespace cloudbench;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

BandwidthSample payload_sample(std::vector<double> xs,
                               const std::string& src = "alpha_c1",
                               const std::string& dst = "bravo_c2") {
    BandwidthSample s;
    s.path = {src, dst};
    s.start_utc = 1425254400;
    s.duration_s = static_cast<int>(xs.size());
    double tot = 0;
    for (double v : xs) tot += v;
    s.mean_mbps = xs.empty() ? 0.0 : tot / static_cast<double>(xs.size());
    s.per_second_mbps = std::move(xs);
    return s;
}

std::vector<double> noisy_payload(int n, double mu, double sigma, unsigned seed) {
    return testutil::gaussian_values(n, mu, sigma, seed);
}

}  // namespace

TEST_CASE("constant payload has a ratio of exactly zero everywhere") {
    auto s = payload_sample(std::vector<double>(900, 200.0));
    ErrorRatioCurve c = error_ratio_curve(s);
    REQUIRE(c.ratios.size() == 900);
    CHECK(c.path.src == "alpha_c1");
    for (double r : c.ratios) CHECK(r == 0.0);
    CHECK(c.at(1) == 0.0);
    CHECK(c.at(900) == 0.0);
    CHECK_THROWS_WITH(c.at(0), ContainsSubstring("out of range"));
    CHECK_THROWS_WITH(c.at(901), ContainsSubstring("out of range"));
}

TEST_CASE("step payload: 600 s at 100 then 300 s at 400") {
    std::vector<double> xs(900, 100.0);
    for (int i = 600; i < 900; ++i) xs[i] = 400.0;
    ErrorRatioCurve c = error_ratio_curve(payload_sample(std::move(xs)));
    // Ground truth is (600*100 + 300*400)/900 = 200.
    CHECK(c.at(600) == 0.5);   // running mean 100 vs truth 200
    CHECK(c.at(300) == 0.5);
    CHECK(c.at(750) == 0.2);   // running mean 160
    CHECK(c.at(900) == 0.0);   // exact by construction
}

TEST_CASE("error ratio input guards") {
    SECTION("payload must cover the full window") {
        auto s = payload_sample(std::vector<double>(450, 10.0));
        CHECK_THROWS_WITH(error_ratio_curve(s),
                          ContainsSubstring("900") && ContainsSubstring("450"));
        // A shorter explicit window accepts the same sample.
        ErrorRatioCurve c = error_ratio_curve(s, 450);
        CHECK(c.ratios.size() == 450);
        CHECK(c.at(450) == 0.0);
    }
    SECTION("missing payload") {
        BandwidthSample s;
        s.path = {"alpha_c1", "bravo_c2"};
        s.duration_s = 900;
        s.mean_mbps = 10.0;
        CHECK_THROWS_WITH(error_ratio_curve(s),
                          ContainsSubstring("no per-second payload"));
    }
    SECTION("ground truth must be positive") {
        auto s = payload_sample(std::vector<double>(900, 0.0));
        CHECK_THROWS_WITH(error_ratio_curve(s),
                          ContainsSubstring("ground-truth mean must be positive"));
    }
}

TEST_CASE("error ratios are scale invariant and nonnegative") {
    auto xs = noisy_payload(900, 150.0, 30.0, 4211);
    ErrorRatioCurve base = error_ratio_curve(payload_sample(xs));
    for (double& v : xs) v *= 3.25;
    ErrorRatioCurve scaled = error_ratio_curve(payload_sample(xs));
    for (int n = 1; n <= 900; ++n) {
        CHECK(base.at(n) >= 0.0);
        CHECK_THAT(scaled.at(n), WithinAbs(base.at(n), 1e-12));
    }
    CHECK(base.at(900) == 0.0);
}

TEST_CASE("cv distribution of constant samples is a point mass at zero") {
    std::vector<BandwidthSample> samples;
    for (int i = 0; i < 5; ++i)
        samples.push_back(payload_sample(std::vector<double>(900, 100.0 + i)));
    Ecdf e = cv_distribution(samples);
    CHECK(e(0.0) == 1.0);
    CHECK(e(-1e-9) == 0.0);
}

TEST_CASE("cv distribution matches per-sample coefficients") {
    // Alternating +/- d around mu gives a known sample CV.
    auto alternating = [](int n, double mu, double d) {
        std::vector<double> xs(n, mu);
        for (int i = 0; i < n; i += 2) xs[i] = mu + d;
        for (int i = 1; i < n; i += 2) xs[i] = mu - d;
        return xs;
    };
    std::vector<BandwidthSample> samples;
    std::vector<double> expected;
    for (double d : {5.0, 10.0, 20.0}) {
        auto xs = alternating(900, 100.0, d);
        expected.push_back(mean_std_cv(xs).cv);
        samples.push_back(payload_sample(std::move(xs)));
    }
    Ecdf e = cv_distribution(samples);
    CHECK_THAT(e(expected[0]), WithinAbs(1.0 / 3.0, 1e-12));
    CHECK_THAT(e(expected[1]), WithinAbs(2.0 / 3.0, 1e-12));
    CHECK(e(expected[2]) == 1.0);
}

TEST_CASE("cv distribution errors name the offending path") {
    SECTION("no samples") {
        CHECK_THROWS_WITH(cv_distribution({}),
                          ContainsSubstring("no samples"));
    }
    SECTION("missing payload") {
        BandwidthSample s;
        s.path = {"delta_c3", "echo_c1"};
        s.duration_s = 900;
        s.mean_mbps = 1.0;
        CHECK_THROWS_WITH(cv_distribution({s}),
                          ContainsSubstring("delta_c3->echo_c1") &&
                              ContainsSubstring("no per-second payload"));
    }
    SECTION("zero-mean payload") {
        auto s = payload_sample(std::vector<double>(900, 0.0), "foxtrot_c2", "golf_c4");
        CHECK_THROWS_WITH(cv_distribution({s}),
                          ContainsSubstring("foxtrot_c2->golf_c4") &&
                              ContainsSubstring("cv undefined"));
    }
    SECTION("payload too short for a cv") {
        auto s = payload_sample({42.0}, "hotel_c1", "india_c2");
        CHECK_THROWS_WITH(cv_distribution({s}),
                          ContainsSubstring("hotel_c1->india_c2") &&
                              ContainsSubstring("at least 2 samples"));
    }
}

TEST_CASE("constant curves recommend the shortest duration") {
    std::vector<ErrorRatioCurve> curves;
    for (int i = 0; i < 10; ++i)
        curves.push_back(error_ratio_curve(payload_sample(std::vector<double>(900, 50.0))));
    auto rec = recommend_duration(curves, 0.1, 0.95);
    CHECK(rec.achievable);
    CHECK(rec.seconds == 1);
}

TEST_CASE("recommendation guards") {
    std::vector<ErrorRatioCurve> one{error_ratio_curve(payload_sample(std::vector<double>(900, 1.0)))};
    CHECK_THROWS_WITH(recommend_duration({}, 0.1, 0.95), ContainsSubstring("no curves"));
    CHECK_THROWS_WITH(recommend_duration(one, -0.1, 0.95),
                      ContainsSubstring("threshold must be positive"));
    CHECK_THROWS_WITH(recommend_duration(one, 0.0, 0.95),
                      ContainsSubstring("threshold must be positive"));
    CHECK_THROWS_WITH(recommend_duration(one, 0.1, 0.0),
                      ContainsSubstring("quantile"));
    CHECK_THROWS_WITH(recommend_duration(one, 0.1, 1.5),
                      ContainsSubstring("quantile"));
    auto mixed = one;
    mixed.push_back(error_ratio_curve(payload_sample(std::vector<double>(450, 1.0)), 450));
    CHECK_THROWS_WITH(recommend_duration(mixed, 0.1, 0.95),
                      ContainsSubstring("disagree on window length"));
}

TEST_CASE("an unattainably tight threshold is reported as such") {
    std::vector<ErrorRatioCurve> curves;
    for (int i = 0; i < 8; ++i)
        curves.push_back(error_ratio_curve(payload_sample(noisy_payload(900, 120.0, 25.0, 600 + i))));
    auto rec = recommend_duration(curves, 1e-12, 0.95);
    CHECK_FALSE(rec.achievable);
    // Noise never averages out that precisely before the window itself, so
    // the pointwise fallback is the full window.
    CHECK(rec.seconds == 900);
}

TEST_CASE("a transient dip below the threshold is not a recommendation") {
    ErrorRatioCurve c;
    c.path = {"a", "b"};
    c.ratios = {0.5, 0.05, 0.5, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.0};
    auto rec = recommend_duration({c}, 0.1, 1.0);
    CHECK(rec.achievable);
    // n = 2 is under the threshold but n = 3 is not; the bound must hold for
    // every later duration as well.
    CHECK(rec.seconds == 4);
}

TEST_CASE("quantile semantics tolerate the allowed fraction of outliers") {
    std::vector<ErrorRatioCurve> curves;
    for (int i = 0; i < 19; ++i) {
        ErrorRatioCurve c;
        c.path = {"ok", std::to_string(i)};
        c.ratios = {0.0, 0.0, 0.0, 0.0, 0.0};
        curves.push_back(std::move(c));
    }
    ErrorRatioCurve bad;
    bad.path = {"bad", "x"};
    bad.ratios = {1.0, 1.0, 1.0, 1.0, 0.0};
    curves.push_back(std::move(bad));

    auto lax = recommend_duration(curves, 0.1, 0.95);
    CHECK(lax.achievable);
    CHECK(lax.seconds == 1);  // 19 of 20 suffice at the 95th percentile

    auto strict = recommend_duration(curves, 0.1, 1.0);
    CHECK_FALSE(strict.achievable);
    CHECK(strict.seconds == 5);
}

TEST_CASE("recommendations tighten monotonically with the threshold") {
    std::vector<ErrorRatioCurve> curves;
    for (int i = 0; i < 40; ++i)
        curves.push_back(error_ratio_curve(payload_sample(noisy_payload(900, 200.0, 20.0, 7100 + i))));

    auto verify = [&](const DurationRecommendation& rec, double th, double q) {
        REQUIRE(rec.achievable);
        REQUIRE(rec.seconds >= 1);
        REQUIRE(rec.seconds < 900);
        const size_t need = static_cast<size_t>(
            std::ceil(q * static_cast<double>(curves.size()) - 1e-9));
        for (int n = rec.seconds; n < 900; ++n) {
            size_t within = 0;
            for (const auto& c : curves)
                if (c.at(n) <= th) ++within;
            REQUIRE(within >= need);
        }
        if (rec.seconds > 1) {
            // Minimality: the suffix property must fail somewhere at rec-1.
            bool all_ok = true;
            for (int n = rec.seconds - 1; n < 900 && all_ok; ++n) {
                size_t within = 0;
                for (const auto& c : curves)
                    if (c.at(n) <= th) ++within;
                all_ok = within >= need;
            }
            REQUIRE_FALSE(all_ok);
        }
    };

    auto loose = recommend_duration(curves, 0.3, 0.9);
    auto mid = recommend_duration(curves, 0.1, 0.9);
    auto tight = recommend_duration(curves, 0.03, 0.9);
    verify(loose, 0.3, 0.9);
    verify(mid, 0.1, 0.9);
    verify(tight, 0.03, 0.9);
    CHECK(loose.seconds <= mid.seconds);
    CHECK(mid.seconds <= tight.seconds);
}
