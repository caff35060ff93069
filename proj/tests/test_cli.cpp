#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliRun {
    int code = -1;
    std::string out;
    std::string err;
};

fs::path scratch() {
    const fs::path p = fs::temp_directory_path() / ("sfde_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(p);
    return p;
}

CliRun run_cli(const std::string& args) {
    const fs::path err = scratch() / "stderr.txt";
    const std::string cmd = std::string(SFDE_CLI_PATH) + " " + args + " 2>" + err.string();
    CliRun r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
    const int status = ::pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream e(err);
    std::stringstream ss;
    ss << e.rdbuf();
    r.err = ss.str();
    return r;
}

std::string config_path(const std::string& name) { return std::string(SFDE_CONFIG_DIR) + "/" + name; }

json derived() {
    std::ifstream f(config_path("derived_atom.json"));
    return json::parse(f);
}

std::string write_config(const json& j, const std::string& name) {
    const fs::path p = scratch() / name;
    std::ofstream(p) << j.dump(2);
    return p.string();
}

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    for (std::string l; std::getline(is, l);) out.push_back(l);
    return out;
}

}  // namespace

TEST(Cli, PriceDerivedAtom) {
    const CliRun r = run_cli("--config " + config_path("derived_atom.json") + " price");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto ls = lines(r.out);
    ASSERT_EQ(ls.size(), 2u);
    EXPECT_EQ(ls[0], "K,lambda0,annuity_factor,present_term,past_term,total,delta");
    double K, l0, a, pres, past, total, delta;
    ASSERT_EQ(std::sscanf(ls[1].c_str(), "%lf,%lf,%lf,%lf,%lf,%lf,%lf", &K, &l0, &a, &pres, &past, &total, &delta), 7);
    EXPECT_NEAR(total, 49.521565437372219841, 1e-8);
    EXPECT_EQ(delta, 0.0);
}

TEST(Cli, PricePoissonAndOutputFile) {
    const fs::path out = scratch() / "price.csv";
    const CliRun r = run_cli("--config " + config_path("derived_atom.json") + " --delta 0.02 --output " + out.string() +
                          " price");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(r.out.empty());
    std::ifstream f(out);
    std::string header, row;
    std::getline(f, header);
    std::getline(f, row);
    double v[7];
    ASSERT_EQ(std::sscanf(row.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf,%lf", v, v + 1, v + 2, v + 3, v + 4, v + 5, v + 6), 7);
    EXPECT_NEAR(v[5], 24.880975995842285593, 1e-8);
}

TEST(Cli, HypothesisGateExitCode) {
    const CliRun r = run_cli("--config " + config_path("gaussian_example.json") + " price");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("hypothesis gate"), std::string::npos);
    json j = derived();
    j["income"]["phi"]["atoms"][0]["mass"] = 0.05;
    EXPECT_EQ(run_cli("--config " + write_config(j, "heavy.json") + " mc-check").code, 2);
}

TEST(Cli, SchemaErrorsNameThePointer) {
    json j = derived();
    j["income"]["sigma0"] = "high";
    CliRun r = run_cli("--config " + write_config(j, "bad1.json") + " price");
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("schema error at /income/sigma0"), std::string::npos) << r.err;

    j = derived();
    j["market"]["typo"] = 1;
    r = run_cli("--config " + write_config(j, "bad2.json") + " price");
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("/market/typo"), std::string::npos) << r.err;

    j = derived();
    j["schema_version"] = 2;
    r = run_cli("--config " + write_config(j, "bad3.json") + " price");
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("/schema_version"), std::string::npos) << r.err;
}

TEST(Cli, McCheckReportsAndDumps) {
    const fs::path dump = scratch() / "dump.csv";
    const CliRun r = run_cli("--config " + config_path("derived_atom.json") + " --paths 400 --threads 2 --dump " +
                          dump.string() + " mc-check");
    ASSERT_TRUE(r.code == 0 || r.code == 4) << r.err;
    const json j = json::parse(r.out);
    EXPECT_NEAR(j["closed_form"].get<double>(), 49.521565437372219841, 1e-8);
    ASSERT_EQ(j["estimates"].size(), 2u);
    EXPECT_EQ(j["estimates"][0]["measure"], "physical");
    EXPECT_EQ(j["estimates"][1]["measure"], "risk_neutral");
    EXPECT_TRUE(j.contains("difference_std_error"));
    std::ifstream f(dump);
    std::string header;
    std::getline(f, header);
    EXPECT_EQ(header, "path,t,X0,xi");
}

TEST(Cli, McBreachExitCode) {
    // A one-year horizon drops almost all of the value.
    const CliRun r =
        run_cli("--config " + config_path("derived_atom.json") + " --paths 200 --horizon 1 mc-check");
    EXPECT_EQ(r.code, 4);
}

TEST(Cli, SpectrumContainsRoot) {
    const CliRun r = run_cli("--config " + config_path("derived_atom.json") + " spectrum");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto ls = lines(r.out);
    ASSERT_EQ(ls.size(), 1u + 101u + 2u);
    EXPECT_EQ(ls[0], "lambda,K,kind");
    double lambda, K;
    ASSERT_EQ(std::sscanf(ls[102].c_str(), "%lf,%lf", &lambda, &K), 2);
    EXPECT_NE(ls[102].find(",lambda0"), std::string::npos);
    EXPECT_NEAR(lambda, 0.0098048609987266104204, 1e-15);
    EXPECT_LE(std::abs(K), 1e-12);
}

TEST(Cli, MeanPathAndLaplace) {
    CliRun r = run_cli("--config " + config_path("two_assets_density.json") + " --horizon 3 mean-path");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(lines(r.out)[0], "t,M0");
    r = run_cli("--config " + config_path("derived_atom.json") + " --dt 0.001 laplace-check");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto ls = lines(r.out);
    ASSERT_EQ(ls.size(), 4u);
    for (std::size_t i = 1; i < ls.size(); ++i) {
        double v[8];
        ASSERT_EQ(std::sscanf(ls[i].c_str(), "%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf", v, v + 1, v + 2, v + 3, v + 4, v + 5,
                              v + 6, v + 7),
                  8);
        EXPECT_LT(v[4], 1e-3);
    }
}

TEST(Cli, SimulateIsDeterministicAcrossThreads) {
    const std::string base = "--config " + config_path("derived_atom.json") + " --paths 6 --horizon 3 ";
    const CliRun a = run_cli(base + "--threads 1 simulate");
    const CliRun b = run_cli(base + "--threads 4 simulate");
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(a.out, b.out);
    EXPECT_EQ(lines(a.out).size(), 1u + 6u * 301u);
}

TEST(Cli, RejectsUnknownSubcommandAndMissingConfig) {
    EXPECT_NE(run_cli("--config " + config_path("derived_atom.json") + " frobnicate").code, 0);
    const CliRun r = run_cli("--config /nonexistent.json price");
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("cannot open config file"), std::string::npos) << r.err;
}
