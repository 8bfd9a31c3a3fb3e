#include <gtest/gtest.h>

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "oracles.hpp"

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
    nlohmann::json doc() const { return nlohmann::json::parse(out); }
};

Outcome run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "dpdkit");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = dpd::cli::main_entry(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string write_temp(const std::string& name, const std::string& text) {
    const std::string path = testing::TempDir() + name;
    std::ofstream(path) << text;
    return path;
}

}  // namespace

TEST(Cli, FitSalinityTauGrid) {
    const Outcome o = run_cli({"fit", "--data", oracle::salinity_path(), "--response", "salinity", "--tau", "0,0.5"});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto d = o.doc();
    ASSERT_EQ(d["fits"].size(), 2u);
    EXPECT_EQ(d["data"]["n"], 28);
    EXPECT_EQ(d["fits"][0]["status"], "ok");
    EXPECT_NEAR(d["fits"][1]["fit"]["theta_hat"]["scale"].get<double>(), 0.87, 0.02);
}

TEST(Cli, DroppedRowsGiveDeletedLeastSquares) {
    const Outcome o =
        run_cli({"fit", "--data", "salinity", "--response", "salinity", "--drop-rows", "5,16", "--tau", "0"});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto b = o.doc()["fits"][0]["fit"]["theta_hat"]["beta"];
    EXPECT_NEAR(b[0].get<double>(), 23.39, 0.01);
    EXPECT_EQ(o.doc()["data"]["n"], 26);
}

TEST(Cli, CompositeTestOnSalinity) {
    const Outcome o = run_cli({"test", "--data", "salinity", "--response", "salinity", "--constraint", "0,0,0,1",
                               "--l0", "0", "--tau", "0,0.5", "--csv", testing::TempDir() + "t.csv"});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto d = o.doc();
    EXPECT_EQ(d["hypothesis"], "composite");
    for (const auto& cell : d["tests"]) {
        EXPECT_EQ(cell["status"], "ok");
        EXPECT_GE(cell["report"]["p_value"].get<double>(), 0.0);
        EXPECT_LE(cell["report"]["p_value"].get<double>(), 1.0);
    }
    std::ifstream csv(testing::TempDir() + "t.csv");
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header, "tau,gamma,status,statistic,p_value,critical_value,method");
}

TEST(Cli, KnownSigmaSimpleTestAndInfluence) {
    const Outcome t = run_cli({"test", "--data", "salinity", "--response", "salinity", "--sigma", "1.23", "--beta0",
                               "9.59,0.78,-0.03,-0.30", "--tau", "0.5", "--method", "closed"});
    ASSERT_EQ(t.code, 0) << t.err;
    EXPECT_EQ(t.doc()["hypothesis"], "simple");
    EXPECT_EQ(t.doc()["tests"][0]["report"]["method"], "normal-simple-closed");

    const Outcome g = run_cli({"influence", "--data", "salinity", "--response", "salinity", "--tau", "0.5",
                               "--target", "estimator", "--index", "5", "--grid-points", "81"});
    ASSERT_EQ(g.code, 0) << g.err;
    EXPECT_EQ(g.doc()["influence"]["bounded_in_t"], true);
}

TEST(Cli, MalformedCsvReportsRowAndColumn) {
    const std::string path = write_temp("bad.csv", "a,b,y\n1,2,3\n4,oops,6\n7,8,9\n");
    const Outcome o = run_cli({"fit", "--data", path, "--response", "y"});
    EXPECT_EQ(o.code, 2);
    EXPECT_NE(o.err.find("row 2"), std::string::npos) << o.err;
    EXPECT_NE(o.err.find("'b'"), std::string::npos) << o.err;
}

TEST(Cli, StrictDiagnosticsRejectRankDeficientDesign) {
    const std::string path = write_temp("dup.csv", "a,b,y\n1,2,1\n2,4,3\n3,6,2\n4,8,5\n5,10,4\n");
    const Outcome lax = run_cli({"diagnostics", "--data", path, "--response", "y"});
    EXPECT_EQ(lax.code, 0) << lax.err;
    EXPECT_EQ(lax.doc()["diagnostics"]["rank_deficient"], true);
    const Outcome strict = run_cli({"diagnostics", "--data", path, "--response", "y", "--strict"});
    EXPECT_EQ(strict.code, 2);
    EXPECT_EQ(strict.doc()["status"], "rejected");
}

TEST(Cli, ArgumentErrorsExitWithTwo) {
    EXPECT_EQ(run_cli({}).code, 2);
    EXPECT_EQ(run_cli({"fit", "--data", "salinity", "--tau", "-1"}).code, 0);  // per-cell failure, reported in JSON
    EXPECT_EQ(run_cli({"test", "--data", "salinity", "--beta0", "1,2"}).code, 2);
    EXPECT_EQ(run_cli({"fit", "--data", "/nonexistent.csv"}).code, 2);
    EXPECT_EQ(run_cli({"fit", "--data", "salinity", "--bogus"}).code, 2);
    EXPECT_EQ(run_cli({"fit", "--help"}).code, 0);
}

TEST(Cli, SimulateFromScenarioFile) {
    const std::string path = write_temp(
        "scn.json",
        R"({"n": 30, "covariates": 1, "beta": [1, 1], "replicates": 20, "tau": [0, 0.5], "fit": {"restarts": 0}})");
    const Outcome o = run_cli({"simulate", "--scenario", path});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_EQ(o.doc()["simulation"]["cells"].size(), 4u);
    const std::string bad = write_temp("scn_bad.json", R"({"n": 30, "sigmaa": 2})");
    const Outcome b = run_cli({"simulate", "--scenario", bad});
    EXPECT_EQ(b.code, 2);
    EXPECT_NE(b.err.find("scenario.sigmaa: unknown field"), std::string::npos);
}
