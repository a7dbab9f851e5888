#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "subheat/config.hpp"
#include "subheat/plots.hpp"
#include "subheat/report.hpp"

using namespace subheat;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / ("subheat_cli_" + std::to_string(::getpid()));
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

const char* kSmall = R"({
  "grid": {"dim": 3, "sizes": [12, 12, 12], "spacing": 0.0833333333333333},
  "refinement": null,
  "line": {"dim": 1, "sizes": [64], "spacing": 0.015625},
  "potential": {"kind": "spike",
                "params": {"background": 1.0, "height": 4.0, "width": 0.125, "center": [0.5, 0.5, 0.5]},
                "seed": 0}
})";

fs::path small_config() {
    fs::path p = scratch() / "small.json";
    if (!fs::exists(p)) write_text(p, kSmall);
    return p;
}

struct Run {
    int code;
    std::string out, err;
};

/// Runs the CLI with `args`; `env` is prepended to the shell command.
Run cli(const std::string& args, const std::string& env = "") {
    static int counter = 0;
    fs::path o = scratch() / ("stdout" + std::to_string(counter) + ".txt");
    fs::path e = scratch() / ("stderr" + std::to_string(counter++) + ".txt");
    std::string cmd = env + " " + std::string(SUBHEAT_CLI_PATH) + " " + args + " --cache " +
                      (scratch() / "cache").string() + " > " + o.string() + " 2> " + e.string();
    int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(o), slurp(e)};
}

json report_of(const fs::path& dir) { return json::parse(slurp(dir / "report.json")); }

const json* find_report(const json& rep, const std::string& name) {
    for (const auto& t : rep.at("tasks"))
        for (const auto& r : t.at("reports"))
            if (r.at("name") == name) return &r;
    return nullptr;
}

}  // namespace

// Configuration ---------------------------------------------------------------

TEST(Config, DefaultsParseAndHashIsStable) {
    RunConfig a = load_config(""), b = load_config("");
    EXPECT_EQ(a.hash(), b.hash());
    EXPECT_EQ(a.grid.points(), 4096u);
    ASSERT_TRUE(a.refinement.has_value());
    EXPECT_EQ(a.refinement->points(), 8000u);
    EXPECT_EQ(a.fractional.alpha_list.size(), 3u);
    EXPECT_DOUBLE_EQ(a.tol("dual_path"), 1e-5);
    EXPECT_DOUBLE_EQ(a.window("equivalence").lo, 0.1);
    EXPECT_FALSE(a.canonical.contains("output_dir"));
}

TEST(Config, SyntaxErrorIsLineAnchored) {
    try {
        ConfigParser("{\n  \"seed\": 1,\n  \"grid\": {\"dim\": 3,,}\n}", "cfg.json").parse();
        FAIL() << "expected a ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 3u);
        EXPECT_GT(e.column(), 0u);
        EXPECT_NE(std::string(e.what()).find("cfg.json:3:"), std::string::npos) << e.what();
    }
}

TEST(Config, UnknownKeyEmptyListAndBadToleranceAreAnchored) {
    auto line_of = [](const std::string& text) -> std::size_t {
        try {
            ConfigParser(text, "c").parse();
        } catch (const ConfigError& e) {
            return e.line();
        }
        return 0;
    };
    EXPECT_EQ(line_of("{\n\"seed\": 2,\n\"gird\": {}\n}"), 3u);
    EXPECT_EQ(line_of("{\n\"sweeps\": {\n  \"t_list\": []\n}}"), 3u);
    EXPECT_EQ(line_of("{\"tolerances\":\n {\"laplace\": -1}}"), 2u);
    EXPECT_EQ(line_of("{\n\"fractional\": {\"alpha_list\": [0.5, 1.2]}}"), 2u);
    EXPECT_EQ(line_of("{\"potential\": {\"kind\": \"file\", \"params\": {\"path\": \"/nonexistent/v.bin\"}}}"), 1u);
    EXPECT_EQ(line_of("{\"grid\": {\"dim\": 3, \"sizes\": [64, 64, 64], \"spacing\": 0.1}}"), 1u);
    EXPECT_EQ(line_of("[1, 2]"), 1u);
}

TEST(Config, FieldParametersReplaceDefaultsAsAWhole) {
    auto c = ConfigParser(R"({"potential": {"kind": "cosine", "params": {"base": 2, "amp": 1, "wave": [1, 0, 0]}}})", "c")
                 .parse();
    EXPECT_EQ(c.potential.kind, "cosine");
    EXPECT_FALSE(c.potential.params.contains("height"));
    GridFunction v = build_potential(c.grid, c.potential);
    EXPECT_NEAR(v.maxCoeff(), 3.0, 1e-12);
    EXPECT_THROW(ConfigParser(R"({"potential": {"kind": "cosine"}})", "c").parse(), ConfigError);
}

TEST(Config, EnvironmentOverridesAreCaseInsensitive) {
    auto c = ConfigParser("{}", "c").parse({{"SUBHEAT_SET_TOLERANCES__DUAL_PATH", "1e-12"},
                                            {"SUBHEAT_SET_SWEEPS__N_LIST", "[1, 3]"},
                                            {"SUBHEAT_SET_REFINEMENT", "null"},
                                            {"SUBHEAT_OUTPUT", "ignored by the parser"}});
    EXPECT_DOUBLE_EQ(c.tol("dual_path"), 1e-12);
    EXPECT_EQ(c.sweeps.N_list, (std::vector<double>{1.0, 3.0}));
    EXPECT_FALSE(c.refinement.has_value());
    EXPECT_NE(c.hash(), ConfigParser("{}", "c").parse().hash());
    EXPECT_THROW(ConfigParser("{}", "c").parse({{"SUBHEAT_SET_NOPE", "1"}}), ConfigError);
}

TEST(Config, NearestPointWrapsPeriodically) {
    GridSpec g = GridSpec::cube(3, 8, 0.125);
    EXPECT_EQ(nearest_point(g, {0.5, 0.5, 0.5}), g.linear_index({4, 4, 4}));
    EXPECT_EQ(nearest_point(g, {1.0, 0.0, 0.0}), g.linear_index({0, 0, 0}));
}

// Reports and plots -------------------------------------------------------------

TEST(Report, NonFiniteNumbersStayValidJson) {
    BoundReport r;
    r.bound.name = "x";
    r.empirical_sup = std::numeric_limits<double>::infinity();
    r.stats["nan"] = std::nan("");
    json j = to_json(r);
    EXPECT_EQ(j.at("empirical_sup"), "inf");
    EXPECT_EQ(j.at("stats").at("nan"), "nan");
    EXPECT_FALSE(j.at("finite").get<bool>());
    EXPECT_TRUE(j.at("refinement_ratio").is_null());
    EXPECT_NO_THROW(json::parse(j.dump()));
}

TEST(Report, CsvRoundTrip) {
    CsvTable t{"t.csv", {"a", "b"}, {}};
    t.add_numbers({0.1, 1e-300});
    t.add({"name", "2"});
    EXPECT_EQ(t.text(), "a,b\n0.1,1e-300\nname,2\n");
    fs::path p = scratch() / "t.csv";
    write_text(p, t.text());
    auto rows = read_csv(p);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[2][0], "name");
}

TEST(Report, ManifestListsEveryFileWithChecksum) {
    fs::path d = scratch() / "manifest";
    write_text(d / "b.txt", "hello");
    write_text(d / "sub" / "a.txt", "");
    json m = build_manifest(d, "abc", {{"task", "pass", 1.5}});
    ASSERT_EQ(m.at("files").size(), 2u);
    EXPECT_EQ(m.at("files")[0].at("path"), "b.txt");
    EXPECT_EQ(m.at("files")[1].at("path"), "sub/a.txt");
    EXPECT_EQ(m.at("files")[1].at("fnv1a64"), "cbf29ce484222325");  // FNV-1a offset basis: empty input
    EXPECT_EQ(m.at("tasks")[0].at("status"), "pass");
    EXPECT_TRUE(m.at("artifact_versions").contains("eigen"));
}

TEST(Plots, DecayPlotIsDeterministicWithFitOverlay) {
    std::vector<std::vector<std::string>> rows{{"r", "value", "fit"}, {"0.1", "1", "1.1"}, {"0.2", "0.1", "0.09"}, {"0.4", "0.01", "0.011"}};
    std::string a = render_decay_plot(rows, "decay"), b = render_decay_plot(rows, "decay");
    EXPECT_EQ(a, b);
    EXPECT_NE(a.find("<polyline"), std::string::npos);
    EXPECT_GT(std::count(a.begin(), a.end(), '\n'), 5);
    std::size_t circles = 0;
    for (std::size_t p = 0; (p = a.find("<circle", p)) != std::string::npos; ++p) ++circles;
    EXPECT_EQ(circles, 3u);
}

TEST(Plots, EmptyDirectoryGivesNoFilesAndANotice) {
    fs::path d = scratch() / "empty_plots";
    fs::create_directories(d);
    std::vector<std::string> notices;
    auto files = emit_plots(d, [&](const std::string& m) { notices.push_back(m); });
    EXPECT_TRUE(files.empty());
    EXPECT_EQ(notices.size(), 2u);
    EXPECT_TRUE(fs::is_empty(d));
}

TEST(Plots, OneSvgPerTable) {
    fs::path d = scratch() / "plots_in";
    write_text(d / "decay_k.csv", "r,value,fit\n0.1,1,1\n0.2,0.5,0.5\n");
    write_text(d / "equivalence_main.csv", "function,a/b,a/c\nf1,1.5,0.7\nf2,2,0.9\n");
    auto files = emit_plots(d, {});
    ASSERT_EQ(files.size(), 2u);
    EXPECT_EQ(files[0].filename(), "decay_k.svg");
    EXPECT_EQ(files[1].filename(), "equivalence_main.svg");
    std::string first = slurp(files[1]);
    emit_plots(d, {});
    EXPECT_EQ(slurp(files[1]), first);
}

// Command-line behaviour ---------------------------------------------------------

TEST(Cli, HelpAndUnknownCommand) {
    EXPECT_EQ(cli("--help").code, 0);
    EXPECT_EQ(cli("frobnicate").code, 2);
}

TEST(Cli, MalformedConfigExitsTwoWithoutOutputs) {
    fs::path bad = scratch() / "bad.json";
    write_text(bad, "{\n  \"seed\": 1,\n  \"grid\": {\n}");
    fs::path out = scratch() / "never_created";
    auto r = cli("verify-all --config " + bad.string() + " --output " + out.string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("bad.json:4:"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, VerifySubordinationPasses) {
    fs::path out = scratch() / "sub";
    auto r = cli("verify-subordination --quiet --config " + small_config().string() + " --output " + out.string());
    EXPECT_EQ(r.code, 0) << r.err;
    json rep = report_of(out);
    EXPECT_TRUE(rep.at("pass").get<bool>());
    const json* lap = find_report(rep, "laplace_identity");
    ASSERT_NE(lap, nullptr);
    EXPECT_LE(lap->at("empirical_sup").get<double>(), 1e-6);
    EXPECT_TRUE(fs::exists(out / "manifest.json"));
    EXPECT_TRUE(fs::exists(out / "laplace_identity.csv"));
}

TEST(Cli, BrokenDualPathToleranceNamesTheReport) {
    fs::path out = scratch() / "broken";
    auto r = cli("verify-all --quiet --config " + small_config().string() + " --output " + out.string(),
                 "SUBHEAT_SET_TOLERANCES__DUAL_PATH=1e-12");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("FAIL: dual_path_kernel"), std::string::npos) << r.err;
    json broken = report_of(out);
    const json* dp = find_report(broken, "dual_path_kernel");
    ASSERT_NE(dp, nullptr);
    EXPECT_FALSE(dp->at("pass").get<bool>());

    fs::path ok = scratch() / "unbroken";
    cli("verify-subordination --quiet --config " + small_config().string() + " --output " + ok.string());
    json unbroken = report_of(ok);
    const json* good = find_report(unbroken, "dual_path_kernel");
    ASSERT_NE(good, nullptr);
    EXPECT_TRUE(good->at("pass").get<bool>());
}

TEST(Cli, VerifyAllIsDeterministicAcrossRunsAndJobCounts) {
    fs::path a = scratch() / "det_a", b = scratch() / "det_b";
    cli("verify-all --quiet --jobs 1 --config " + small_config().string() + " --output " + a.string());
    cli("verify-all --quiet --jobs 3 --config " + small_config().string(), "SUBHEAT_OUTPUT=" + b.string());
    ASSERT_TRUE(fs::exists(a / "report.json"));
    ASSERT_TRUE(fs::exists(b / "report.json"));
    EXPECT_EQ(slurp(a / "report.json"), slurp(b / "report.json"));
    for (const auto& e : fs::directory_iterator(a / "plots"))
        EXPECT_EQ(slurp(e.path()), slurp(b / "plots" / e.path().filename())) << e.path();
    EXPECT_GE(std::distance(fs::directory_iterator(a / "plots"), fs::directory_iterator{}), 5);
    json m = json::parse(slurp(a / "manifest.json"));
    bool listed = false;
    for (const auto& f : m.at("files")) listed = listed || f.at("path") == "report.json";
    EXPECT_TRUE(listed);
}

TEST(Cli, SeedOverrideChangesConfigHash) {
    fs::path a = scratch() / "seed_a", b = scratch() / "seed_b";
    cli("tabulate-eta --quiet --config " + small_config().string() + " --output " + a.string());
    cli("tabulate-eta --quiet --seed 99 --config " + small_config().string() + " --output " + b.string());
    EXPECT_NE(report_of(a).at("config_hash"), report_of(b).at("config_hash"));
    EXPECT_EQ(read_csv(a / "eta_table.csv").size(), 1u + 3u * 61u);
}

TEST(Cli, ReportOnEmptyDirectoryWritesNothing) {
    fs::path d = scratch() / "empty_report";
    fs::create_directories(d);
    auto r = cli("report --output " + d.string());
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.err.find("notice:"), std::string::npos);
    EXPECT_TRUE(fs::is_empty(d));
}

TEST(Cli, CacheMismatchRebuildsWithNotice) {
    fs::path out = scratch() / "cache_run";
    cli("verify-subordination --quiet --config " + small_config().string() + " --output " + out.string());
    bool corrupted = false;
    for (const auto& e : fs::directory_iterator(scratch() / "cache"))
        if (e.path().extension() == ".json") {
            write_text(e.path(), R"({"operator_hash": "0000000000000000"})");
            corrupted = true;
        }
    ASSERT_TRUE(corrupted);
    auto r = cli("verify-subordination --config " + small_config().string() + " --output " + out.string());
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.err.find("rebuilding"), std::string::npos) << r.err;
}
