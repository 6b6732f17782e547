#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cloudbench/core.hpp"
#include "cloudbench/simulate.hpp"
#include "helpers.hpp"

using namespace cloudbench;
using Catch::Matchers::ContainsSubstring;
using testutil::TempDir;

namespace {

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// Invokes the installed binary the way a user would, via the shell.
CliResult run_cli(const TempDir& dir, const std::string& args) {
    static std::atomic<int> counter{0};
    int id = counter++;
    std::string out_path = dir.file("cli-out-" + std::to_string(id));
    std::string err_path = dir.file("cli-err-" + std::to_string(id));
    std::string cmd = std::string("\"") + CLOUDBENCH_CLI_PATH + "\" " + args + " > \"" +
                      out_path + "\" 2> \"" + err_path + "\"";
    int rc = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    return r;
}

size_t line_count(const std::string& path) {
    std::ifstream in(path);
    size_t n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) out.push_back(line);
    return out;
}

}  // namespace

TEST_CASE("usage errors exit with code 1 and print help", "[cli]") {
    TempDir dir;

    CliResult none = run_cli(dir, "");
    CHECK(none.code == 1);
    CHECK_THAT(none.err, ContainsSubstring("Usage"));

    CHECK(run_cli(dir, "frobnicate").code == 1);

    CliResult no_out = run_cli(dir, "simulate --preset table3");
    CHECK(no_out.code == 1);
    CHECK_THAT(no_out.err, ContainsSubstring("--out"));

    // A valid config so the missing runner option is what trips.
    std::ofstream(dir.file("cfg.json"))
        << R"({"endpoints": {"virginia_c1": "a", "london_c3": "b"}})";
    CliResult no_runner = run_cli(dir, "probe run --config " + dir.file("cfg.json") +
                                           " --out " + dir.file("x.jsonl"));
    CHECK(no_runner.code == 1);
    CHECK_THAT(no_runner.err, ContainsSubstring("--simulated"));

    CliResult bad_preset =
        run_cli(dir, "simulate --preset bogus --out " + dir.file("y.jsonl"));
    CHECK(bad_preset.code == 1);
    CHECK_THAT(bad_preset.err, ContainsSubstring("unknown preset: bogus"));
}

TEST_CASE("--help exits cleanly and lists the subcommands", "[cli]") {
    TempDir dir;
    CliResult help = run_cli(dir, "--help");
    CHECK(help.code == 0);
    for (const char* sub :
         {"probe", "calibrate", "decompose", "anova", "correlate", "simulate", "report"})
        CHECK_THAT(help.out, ContainsSubstring(sub));
}

TEST_CASE("data errors exit with code 2", "[cli]") {
    TempDir dir;

    CliResult missing = run_cli(
        dir, "anova bandwidth --in " + dir.file("absent.jsonl") + " --out-dir " +
                 dir.file("fit"));
    CHECK(missing.code == 2);
    CHECK_THAT(missing.err, ContainsSubstring("error:"));

    CHECK(run_cli(dir, "calibrate --in " + dir.file("absent.jsonl") + " --out-dir " +
                           dir.file("cal"))
              .code == 2);

    std::ofstream(dir.file("bad.json")) << "this is not json";
    CliResult bad = run_cli(dir, "simulate --scenario " + dir.file("bad.json") +
                                     " --out " + dir.file("z.jsonl"));
    CHECK(bad.code == 2);
    CHECK_THAT(bad.err, ContainsSubstring("error:"));
}

TEST_CASE("simulate, fit, correlate, calibrate, report, probe pipeline", "[cli][slow]") {
    TempDir dir;
    const std::string data = dir.file("data.jsonl");

    // --- simulate: one campaign-week of the bandwidth scenario ---
    CliResult sim = run_cli(
        dir, "simulate --preset table3 --weeks 1 --seed 7 --out " + data + " --truth " +
                 dir.file("truth.json") + " --emit-scenario " + dir.file("scenario.json"));
    REQUIRE(sim.code == 0);
    CHECK_THAT(sim.out, ContainsSubstring("wrote 51408 samples"));

    Dataset ds = dataset_load(data);
    REQUIRE(ds.samples.size() == 51408);

    auto truth = nlohmann::json::parse(slurp(dir.file("truth.json")));
    CHECK(truth["seed"] == 7);
    CHECK(truth["paths"].size() == 306);

    // The emitted scenario is itself a loadable input.
    ScenarioSpec spec = scenario_from_json(
        nlohmann::json::parse(slurp(dir.file("scenario.json"))));
    CHECK(spec.rng_seed == 7);

    // Same seed reproduces the file byte for byte; another seed does not.
    CliResult rerun = run_cli(dir, "simulate --preset table3 --weeks 1 --seed 7 --out " +
                                       dir.file("data2.jsonl"));
    REQUIRE(rerun.code == 0);
    CHECK(slurp(dir.file("data2.jsonl")) == slurp(data));
    CliResult other = run_cli(dir, "simulate --preset table3 --weeks 1 --seed 8 --out " +
                                       dir.file("data3.jsonl"));
    REQUIRE(other.code == 0);
    CHECK(slurp(dir.file("data3.jsonl")) != slurp(data));

    // --- anova bandwidth ---
    CliResult fit = run_cli(
        dir, "anova bandwidth --in " + data + " --out-dir " + dir.file("fit"));
    REQUIRE(fit.code == 0);
    CHECK_THAT(fit.out, ContainsSubstring("n=51408"));
    CHECK_THAT(fit.out, ContainsSubstring("adjusted_r2="));
    CHECK_THAT(fit.out, ContainsSubstring("residual lag-1 autocorrelation"));
    auto table_lines = lines_of(slurp(dir.file("fit") + "/anova_table.csv"));
    REQUIRE(!table_lines.empty());
    CHECK(table_lines[0] == "term,ss,pct_total,pct_factors,df,ms,F,p");
    CHECK(lines_of(slurp(dir.file("fit") + "/parameters.csv"))[1].rfind("mu,,", 0) == 0);

    // The shipped catalog file is interchangeable with the built-in table.
    CliResult fit2 = run_cli(dir, "anova bandwidth --in " + data + " --catalog " +
                                      CLOUDBENCH_ASSETS_DIR +
                                      "/catalog.csv --out-dir " + dir.file("fit2"));
    REQUIRE(fit2.code == 0);
    CHECK(slurp(dir.file("fit2") + "/anova_table.csv") ==
          slurp(dir.file("fit") + "/anova_table.csv"));
    CHECK(slurp(dir.file("fit2") + "/parameters.csv") ==
          slurp(dir.file("fit") + "/parameters.csv"));

    // --- decompose ---
    CliResult dec = run_cli(dir, "decompose --in " + data);
    REQUIRE(dec.code == 0);
    auto decomposed = nlohmann::json::parse(dec.out);
    CHECK(decomposed.size() == 306);
    const auto& entry = decomposed["virginia_c1->virginia_c2"];
    CHECK(entry.contains("pattern"));
    CHECK(entry.contains("mu"));
    CHECK(entry.contains("sigma"));
    CHECK(entry.contains("stationary_fraction"));
    CHECK(entry["n"] == 168);

    // --- correlate ---
    CliResult corr = run_cli(
        dir, "correlate --in " + data + " --out-dir " + dir.file("corr"));
    REQUIRE(corr.code == 0);
    CHECK_THAT(corr.out, ContainsSubstring("pairs: 46665 (doubled convention: 93330)"));
    CHECK_THAT(corr.out, ContainsSubstring("triples: 4896"));
    CHECK(line_count(dir.file("corr") + "/pair_rho.csv") == 46666);
    CHECK(line_count(dir.file("corr") + "/triples.csv") == 4897);
    CHECK(lines_of(slurp(dir.file("corr") + "/rho_ecdf.csv"))[0] == "rho,cum_prob");
    CHECK(lines_of(slurp(dir.file("corr") + "/mean_rho_matrix.csv"))[0].rfind(
              "src\\dst,", 0) == 0);

    CliResult rfit = run_cli(dir, "anova correlation --in " + dir.file("corr") +
                                      "/triples.csv --out-dir " + dir.file("rfit"));
    REQUIRE(rfit.code == 0);
    CHECK_THAT(rfit.out, ContainsSubstring("n=4896"));
    CHECK(lines_of(slurp(dir.file("rfit") + "/anova_table.csv"))[0] ==
          "term,ss,pct_total,pct_factors,df,ms,F,p");

    // --- per-second generation and calibrate ---
    CliResult ps = run_cli(dir, "simulate --preset table3 --seed 7 --per-second-out " +
                                    dir.file("ps.jsonl"));
    REQUIRE(ps.code == 0);
    CHECK_THAT(ps.out, ContainsSubstring("wrote 306 per-second samples"));

    CliResult cal = run_cli(dir, "calibrate --in " + dir.file("ps.jsonl") +
                                     " --out-dir " + dir.file("cal"));
    REQUIRE(cal.code == 0);
    CHECK_THAT(cal.out, ContainsSubstring("duration"));
    auto cv_lines = lines_of(slurp(dir.file("cal") + "/cv_ecdf.csv"));
    REQUIRE(cv_lines.size() == 307);
    CHECK(cv_lines[0] == "cv,cum_prob");
    auto er_header = lines_of(slurp(dir.file("cal") + "/error_ratio.csv"))[0];
    CHECK_THAT(er_header, ContainsSubstring(",n900"));

    // --- report bundle ---
    CliResult rep = run_cli(dir, "report --data " + data + " --per-second " +
                                     dir.file("ps.jsonl") + " --out-dir " +
                                     dir.file("rep"));
    REQUIRE(rep.code == 0);
    CHECK_THAT(rep.out, ContainsSubstring("report: 10 files"));
    auto manifest = nlohmann::json::parse(slurp(dir.file("rep") + "/manifest.json"));
    CHECK(manifest["files"].size() == 10);

    // --- probe run against the simulated runner ---
    nlohmann::json cfg;
    cfg["endpoints"] = {{"virginia_c1", "vm-a.example.net"},
                        {"california_c1", "vm-b.example.net"},
                        {"ireland_c1", "vm-c.example.net"}};
    cfg["ticks"] = 2;
    std::ofstream(dir.file("probe.json")) << cfg.dump(2);

    CliResult probe = run_cli(
        dir, "probe run --config " + dir.file("probe.json") +
                 " --simulated-preset table3 --seed 7 --out " + dir.file("probe.jsonl"));
    REQUIRE(probe.code == 0);
    CHECK_THAT(probe.out,
               ContainsSubstring("campaign: 2 ticks, 12 samples appended, 0 failures"));

    // Probe measurements equal the directly generated surface.
    Dataset probed = dataset_load(dir.file("probe.jsonl"));
    REQUIRE(probed.samples.size() == 12);
    GeneratedDataset gen = generate(scenario_table3(7), 1, 1.0);
    std::map<std::pair<std::string, std::int64_t>, double> surface;
    for (const auto& s : gen.dataset.samples)
        surface[{path_key(s.path), s.start_utc}] = s.mean_mbps;
    for (const auto& s : probed.samples) {
        auto it = surface.find({path_key(s.path), s.start_utc});
        REQUIRE(it != surface.end());
        CHECK(s.mean_mbps == it->second);
    }
}

TEST_CASE("probe run rejects bad configs with code 2", "[cli]") {
    TempDir dir;

    std::ofstream(dir.file("zero.json"))
        << R"({"endpoints": {"virginia_c1": "a", "london_c3": "b"}, "interval_s": 0})";
    CliResult zero = run_cli(dir, "probe run --config " + dir.file("zero.json") +
                                      " --simulated-preset table3 --out " +
                                      dir.file("out.jsonl"));
    CHECK(zero.code == 2);
    CHECK_THAT(zero.err, ContainsSubstring("error:"));

    std::ofstream(dir.file("unknown.json"))
        << R"({"endpoints": {"virginia_c1": "a", "zulu_c9": "b"}})";
    CliResult unknown = run_cli(dir, "probe run --config " + dir.file("unknown.json") +
                                         " --simulated-preset table3 --out " +
                                         dir.file("out2.jsonl"));
    CHECK(unknown.code == 2);
    CHECK_THAT(unknown.err, ContainsSubstring("error:"));
}

TEST_CASE("lilliefors-table rebuilds a small grid", "[cli]") {
    TempDir dir;
    CliResult lf = run_cli(dir, "lilliefors-table --out " + dir.file("lf.csv") +
                                    " --reps 2000 --seed 7 --grid 20 30");
    REQUIRE(lf.code == 0);
    CHECK_THAT(lf.out, ContainsSubstring("wrote 2 critical values"));

    auto rows = lines_of(slurp(dir.file("lf.csv")));
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == "n,critical_value");
    CHECK(rows[1].rfind("20,", 0) == 0);
    CHECK(rows[2].rfind("30,", 0) == 0);
    double cv20 = std::stod(rows[1].substr(3));
    double cv30 = std::stod(rows[2].substr(3));
    // 5% critical values shrink with n and sit near 0.19 and 0.16 here.
    CHECK(cv20 > cv30);
    CHECK(cv20 > 0.15);
    CHECK(cv20 < 0.25);
    CHECK(cv30 > 0.12);
    CHECK(cv30 < 0.20);
}
