#include <gtest/gtest.h>
#include <sys/wait.h>

#include <json.hpp>

#include <cstdlib>
#include <sstream>

#include "pxnet/cli.hpp"
#include "support.hpp"

namespace {

using json = nlohmann::json;

// Runs the installed binary; returns its exit code, stdout+stderr into `log`.
int run(const std::string& args, const pxtest::TempDir& dir, std::string* log = nullptr) {
    const std::string cap = dir.file("log.txt");
    const std::string cmd = std::string(PXNET_CLI_PATH) + " " + args + " > " + cap + " 2>&1";
    const int status = std::system(cmd.c_str());
    if (log) *log = pxtest::slurp(cap);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json read_json(const std::string& path) { return json::parse(pxtest::slurp(path)); }

// Primary output with the wall-clock fields removed.
json without_timing(json j) {
    j.erase("runtime_seconds");
    if (j.contains("results")) {
        for (auto& r : j["results"]) r.erase("mean_fold_seconds");
    }
    return j;
}

}  // namespace

TEST(Cli, HelpExitsZeroAndListsFlags) {
    pxtest::TempDir dir;
    std::string log;
    EXPECT_EQ(run("--help", dir, &log), 0);
    for (const char* s : {"fit", "predict", "simulate", "cv", "--threads"}) EXPECT_NE(log.find(s), std::string::npos) << s;
    EXPECT_EQ(run("fit --help", dir, &log), 0);
    for (const char* s : {"--edges", "--nodes", "--formula", "--columns", "--seed", "--config", "--newton", "--out"}) {
        EXPECT_NE(log.find(s), std::string::npos) << s;
    }
    EXPECT_EQ(run("cv --help", dir, &log), 0);
    for (const char* s : {"--k", "--estimators", "--scores"}) EXPECT_NE(log.find(s), std::string::npos) << s;
    EXPECT_EQ(run("simulate --help", dir, &log), 0);
    for (const char* s : {"--model", "--n", "--rho", "--study", "--ns", "--designs", "--reps"}) {
        EXPECT_NE(log.find(s), std::string::npos) << s;
    }
}

TEST(Cli, SimulateFitPredictRoundTrip) {
    pxtest::TempDir dir;
    const std::string net = dir.file("net");
    ASSERT_EQ(run("simulate --model px --n 40 --rho 0.25 --seed 7 --out " + net, dir), 0);
    const std::string data = "--edges " + net + "/edges.csv --nodes " + net + "/nodes.csv --formula sim";
    ASSERT_EQ(run("fit " + data + " --seed 1 --out " + dir.file("fit.json"), dir), 0);
    const json f = read_json(dir.file("fit.json"));
    EXPECT_EQ(f["beta"].size(), 4u);
    EXPECT_GT(f["rho"].get<double>(), 0.05);
    EXPECT_LT(f["rho"].get<double>(), 0.45);
    for (const char* key : {"converged", "iterations", "trace", "seed", "runtime_seconds"}) EXPECT_TRUE(f.contains(key)) << key;
    EXPECT_TRUE(std::filesystem::exists(dir.file("fit.json.manifest.json")));

    dir.write("targets.csv", "i,j\n0,1\n3,2\n");
    ASSERT_EQ(run("predict " + data + " --fit " + dir.file("fit.json") + " --targets " + dir.file("targets.csv") +
                      " --out " + dir.file("pred.csv"),
                  dir),
              0);
    const std::string pred = pxtest::slurp(dir.file("pred.csv"));
    EXPECT_EQ(pred.substr(0, pred.find('\n')), "i,j,p_hat");
    EXPECT_EQ(std::count(pred.begin(), pred.end(), '\n'), 3);
}

TEST(Cli, IdenticalCommandsGiveIdenticalOutputs) {
    pxtest::TempDir dir;
    ASSERT_EQ(run("simulate --model px --n 20 --rho 0.2 --seed 5 --out " + dir.file("a"), dir), 0);
    ASSERT_EQ(run("simulate --model px --n 20 --rho 0.2 --seed 5 --out " + dir.file("b"), dir), 0);
    EXPECT_EQ(pxtest::slurp(dir.file("a/edges.csv")), pxtest::slurp(dir.file("b/edges.csv")));
    EXPECT_EQ(pxtest::slurp(dir.file("a/nodes.csv")), pxtest::slurp(dir.file("b/nodes.csv")));

    const std::string data = "--edges " + dir.file("a/edges.csv") + " --nodes " + dir.file("a/nodes.csv") + " --formula sim";
    ASSERT_EQ(run("fit " + data + " --seed 2 --out " + dir.file("f1.json"), dir), 0);
    ASSERT_EQ(run("fit " + data + " --seed 2 --out " + dir.file("f2.json"), dir), 0);
    EXPECT_EQ(without_timing(read_json(dir.file("f1.json"))).dump(), without_timing(read_json(dir.file("f2.json"))).dump());

    ASSERT_EQ(run("cv " + data + " --k 10 --estimators bcem,probit0 --seed 3 --out " + dir.file("c1.json") +
                      " --scores " + dir.file("s1.csv"),
                  dir),
              0);
    ASSERT_EQ(run("cv " + data + " --k 10 --estimators bcem,probit0 --seed 3 --out " + dir.file("c2.json") +
                      " --scores " + dir.file("s2.csv"),
                  dir),
              0);
    EXPECT_EQ(without_timing(read_json(dir.file("c1.json"))).dump(), without_timing(read_json(dir.file("c2.json"))).dump());
    EXPECT_EQ(pxtest::slurp(dir.file("s1.csv")), pxtest::slurp(dir.file("s2.csv")));

    const json cv = read_json(dir.file("c1.json"));
    ASSERT_EQ(cv["results"].size(), 2u);
    for (const auto& r : cv["results"]) {
        EXPECT_TRUE(r["prauc"].is_number());
        EXPECT_TRUE(r["roc_auc"].is_number());
    }
}

TEST(Cli, PolbooksFormula) {
    pxtest::TempDir dir;
    std::ostringstream edges, nodes;
    const char* cls[] = {"c", "l", "n"};
    nodes << "id,class\n";
    for (int i = 0; i < 15; ++i) nodes << "b" << i << ',' << cls[i % 3] << '\n';
    edges << "i,j\n";
    for (int i = 0; i < 15; ++i)
        for (int j = i + 1; j < 15; ++j) {
            if ((i * 7 + j * 3) % 5 < 2 || (i % 3 == j % 3 && (i + j) % 2 == 0)) edges << 'b' << i << ",b" << j << '\n';
        }
    dir.write("e.csv", edges.str());
    dir.write("n.csv", nodes.str());
    ASSERT_EQ(run("fit --edges " + dir.file("e.csv") + " --nodes " + dir.file("n.csv") +
                      " --formula polbooks --seed 1 --out " + dir.file("f.json"),
                  dir),
              0);
    const json f = read_json(dir.file("f.json"));
    EXPECT_EQ(f["beta"].size(), 3u);
    EXPECT_GE(f["rho"].get<double>(), 0.0);
    EXPECT_LT(f["rho"].get<double>(), 0.5);
}

TEST(Cli, ExitCodes) {
    pxtest::TempDir dir;
    std::string log;
    EXPECT_EQ(run("", dir), 2);
    EXPECT_EQ(run("bogus", dir), 2);
    EXPECT_EQ(run("fit --seed 1 --out " + dir.file("x.json"), dir), 2);  // --edges missing
    EXPECT_EQ(run("simulate --model px --n 10 --rho 0.7 --seed 1 --out " + dir.file("s"), dir, &log), 2);
    EXPECT_NE(log.find("pxnet: invalid input"), std::string::npos);
    EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 1);  // single-line diagnostic

    dir.write("bad.csv", "i,j\n0,1\n1,1\n");
    EXPECT_EQ(run("fit --edges " + dir.file("bad.csv") + " --seed 1 --out " + dir.file("x.json"), dir), 2);

    // every relation is an edge: the probit start separates
    std::ostringstream full;
    full << "i,j,y,w\n";
    for (int i = 0; i < 6; ++i)
        for (int j = i + 1; j < 6; ++j) full << i << ',' << j << ",1," << (i + j) % 3 << '\n';
    dir.write("full.csv", full.str());
    EXPECT_EQ(run("fit --edges " + dir.file("full.csv") + " --formula custom --columns w --seed 1 --out " + dir.file("x.json"), dir, &log), 3);
    EXPECT_NE(log.find("numerical failure"), std::string::npos);

    EXPECT_EQ(run("--threads 0 cv --edges " + dir.file("full.csv") + " --seed 1 --out " + dir.file("x.json"), dir), 2);
}

TEST(Cli, ThreadsEnvironmentVariable) {
    std::ostringstream out, err;
    ASSERT_EQ(setenv("PXNET_THREADS", "many", 1), 0);
    const int code = pxnet::cli::run_cli({"pxnet", "simulate", "--n", "8", "--seed", "1", "--out", "/nonexistent/x"}, out, err);
    unsetenv("PXNET_THREADS");
    EXPECT_EQ(code, 2);
    EXPECT_NE(err.str().find("PXNET_THREADS"), std::string::npos);
}
