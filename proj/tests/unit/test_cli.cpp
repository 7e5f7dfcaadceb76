#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "evidencesql/json_util.hpp"
#include "test_util.hpp"

using namespace evidencesql;
using namespace evidencesql::testutil;
namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return q + "'";
}

CliRun run_cli(const std::vector<std::string>& args) {
    TempDir io("cli_io");
    std::string cmd = quote(EVIDENCESQL_CLI_PATH);
    for (const auto& a : args) cmd += " " + quote(a);
    cmd += " > " + quote((io.path() / "out").string()) + " 2> " + quote((io.path() / "err").string());
    const int status = std::system(cmd.c_str());
    CliRun r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(io.path() / "out");
    r.err = slurp(io.path() / "err");
    return r;
}

std::string manifest() { return (kFixtures / "manifest.json").string(); }

}  // namespace

TEST(Cli, ValidatePrintsCanonicalText) {
    const CliRun r = run_cli({"--manifest", manifest(), "validate", "--sql", "select aera from cells"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, "SELECT area FROM cells\n");
}

TEST(Cli, RejectionExitsOneWithJson) {
    const CliRun r = run_cli({"--manifest", manifest(), "validate", "--sql", "DELETE FROM cells"});
    EXPECT_EQ(r.code, 1);
    const Json j = Json::parse(r.err);
    EXPECT_EQ(j.at("rejection").at("stage"), "sanitize");
}

TEST(Cli, QueryCsv) {
    const CliRun r = run_cli({"--manifest", manifest(), "query", "--case", (kFixtures / "demo" / "case_demo").string(),
                              "--sql", "SELECT cell_type, COUNT(*) AS n FROM cells WHERE cell_type = 'neoplastic' GROUP BY cell_type",
                              "--csv"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, "cell_type,n\nneoplastic,4\n");
}

TEST(Cli, UsageAndConfigErrorsExitTwo) {
    EXPECT_EQ(run_cli({"--manifest", manifest(), "validate", "--bogus"}).code, 2);
    EXPECT_EQ(run_cli({"--manifest", manifest(), "--alpha", "1.5", "validate", "--sql", "SELECT area FROM cells"}).code, 2);
    EXPECT_EQ(run_cli({"--manifest", "/nonexistent/manifest.json", "validate", "--sql", "SELECT area FROM cells"}).code, 2);
    const CliRun r = run_cli({"--manifest", manifest(), "--mode", "hybrid", "validate", "--sql", "SELECT area FROM cells"});
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(Json::parse(r.err).at("error").at("kind"), "ConfigError");
}

TEST(Cli, FullModeWithoutCnnIsConfigError) {
    TempDir data("cli_nocnn");
    fs::copy(kFixtures / "demo" / "case_demo", data.path() / "case_demo", fs::copy_options::recursive);
    fs::remove(data.path() / "case_demo" / "sidecar.json");
    TempDir out("cli_nocnn_out");
    const CliRun r = run_cli({"--manifest", manifest(), "--out", out.path().string(), "ask", "--case",
                              (data.path() / "case_demo").string(), "--questions",
                              (kFixtures / "questions.json").string()});
    EXPECT_EQ(r.code, 2) << r.err;
}

TEST(Cli, AskWritesReportAndTranscripts) {
    TempDir out("cli_ask");
    const CliRun r = run_cli({"--manifest", manifest(), "--out", out.path().string(), "--json", "ask", "--case",
                              (kFixtures / "demo" / "case_demo").string(), "--questions",
                              (kFixtures / "questions.json").string(), "--ranges", (kFixtures / "ranges.json").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(Json::parse(r.out).at("case_id"), "case_demo");
    EXPECT_EQ(slurp(out.path() / "reports" / "case_demo.json"), r.out);
    EXPECT_TRUE(fs::exists(out.path() / "reports" / "case_demo.md"));
    EXPECT_TRUE(fs::exists(out.path() / "transcripts" / "case_demo.json"));
    EXPECT_EQ(Json::parse(slurp(out.path() / "run.json")).at("command"), "ask");
}

TEST(Cli, CalibrateRangesIsByteStable) {
    TempDir a("cli_cal_a"), b("cli_cal_b");
    for (const auto* dir : {&a, &b}) {
        const CliRun r = run_cli({"--manifest", manifest(), "--out", dir->path().string(), "calibrate-ranges",
                                  "--training", (kFixtures / "training").string(), "--features",
                                  (kFixtures / "features.json").string()});
        ASSERT_EQ(r.code, 0) << r.err;
    }
    const std::string first = slurp(a.path() / "ranges.json");
    EXPECT_FALSE(first.empty());
    EXPECT_EQ(first, slurp(b.path() / "ranges.json"));
    EXPECT_EQ(Json::parse(first).size(), 6u);
}

TEST(Cli, CalibrateOnUnlabeledSplitFails) {
    TempDir split("cli_unlabeled");
    fs::copy(kFixtures / "training" / "train_01", split.path() / "train_01", fs::copy_options::recursive);
    fs::remove(split.path() / "train_01" / "sidecar.json");
    const CliRun r = run_cli({"--manifest", manifest(), "--out", split.path().string(), "calibrate-ranges",
                              "--training", split.path().string(), "--feature", "global_features.neoplastic_ratio",
                              "--options", "tubular_adenocarcinoma,papillary_adenocarcinoma"});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(Json::parse(r.err).at("error").at("kind"), "MissingLabel");
}

TEST(Cli, BatchEvalJsonSummary) {
    TempDir out("cli_batch");
    const CliRun r = run_cli({"--manifest", manifest(), "--out", out.path().string(), "--workers", "4", "--json",
                              "batch-eval", "--dataset", (kFixtures / "eval").string(), "--questions",
                              (kFixtures / "questions.json").string(), "--ranges", (kFixtures / "ranges.json").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const Json s = Json::parse(r.out);
    EXPECT_EQ(s.at("n_cases"), 20);
    EXPECT_EQ(s.at("accuracy"), 1.0);
    EXPECT_EQ(s.at("n_flagged"), 3);
    EXPECT_EQ(Json::parse(slurp(out.path() / "run.json")).at("command"), "batch-eval");
}
