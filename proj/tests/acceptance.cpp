#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <CLI11.hpp>

#include "sfde/sfde.hpp"
#include "test_support.hpp"

using namespace sfde;
namespace fs = std::filesystem;
namespace oracle = sfde::fixtures::oracle;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
        }
    }
    void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

int failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& body) {
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o.pass = false;
        o.detail = std::string("exception: ") + e.what();
    }
    if (!o.pass) ++failures;
    std::printf("%s criterion %d: %s (%s)\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str());
    std::fflush(stdout);
}

SimConfig sim(std::size_t paths, double dt, double horizon, std::uint64_t seed, bool antithetic = false,
              Measure m = Measure::risk_neutral) {
    SimConfig cfg;
    cfg.n_paths = paths;
    cfg.dt = dt;
    cfg.horizon = horizon;
    cfg.seed = seed;
    cfg.antithetic = antithetic;
    cfg.measure = m;
    return cfg;
}

Outcome no_delay_total() {
    Outcome o;
    const auto market = fixtures::derived_market();
    const auto model = IncomeModel::no_delay(0.01, {0.1}, 1.0);
    const auto hist = HistorySegment::flat(0.0, 1.0, 0.01, 2.5);
    const auto start = Clock::now();
    const auto v = human_capital(model, market, hist);
    const double elapsed = seconds_since(start);
    const double expect = 2.5 / v.K;
    const double rel = std::abs(v.total - expect) / expect;
    o.require(rel <= 1e-12, "relative error");
    o.require(elapsed < 1e-3, "runtime");
    o.note("rel err " + fmt("%.2e", rel) + ", " + fmt("%.1f", elapsed * 1e6) + " us");
    return o;
}

Outcome derived_mc() {
    Outcome o;
    SimConfig cfg = sim(100000, 0.01, 0.0, 2024, true);
    const auto start = Clock::now();
    const auto c = mc_human_capital_both(fixtures::derived_model(), fixtures::derived_market(), fixtures::unit_history(),
                                         cfg);
    const double elapsed = seconds_since(start);
    for (const auto* e : {&c.physical, &c.risk_neutral}) {
        const double err = std::abs(e->value - oracle::kTotal);
        o.require(err <= 3.0 * e->std_error + e->bias_budget, std::string(to_string(e->measure)) + " estimate");
        o.note(std::string(to_string(e->measure)) + " " + fmt("%.5f", e->value) + " se " + fmt("%.5f", e->std_error));
    }
    const double combined = std::hypot(c.physical.std_error, c.risk_neutral.std_error);
    o.require(std::abs(c.difference) <= 3.0 * combined, "measure agreement");
    o.note("closed " + fmt("%.5f", oracle::kTotal) + ", bias " + fmt("%.5f", c.physical.bias_budget) + ", T " +
           fmt("%.1f", c.physical.horizon));
    o.require(elapsed < 60.0, "runtime under 60 s");
    o.note(fmt("%.1f", elapsed) + " s");
    return o;
}

Outcome random_roots() {
    Outcome o;
    fixtures::ModelGenerator gen(3001);
    const auto start = Clock::now();
    double worst = 0.0;
    int sign_errors = 0, monotone_errors = 0;
    for (int i = 0; i < 100; ++i) {
        const auto m = gen.next(true);
        const auto adj = risk_adjust(m.model, m.market);
        const double l0 = spectral_bound(adj);
        worst = std::max(worst, std::abs(char_function(adj, l0)));
        sign_errors += (constant_K(adj) > 0.0) != (l0 < m.market.r());
        const double lo = l0 - 1.0, hi = m.market.r() + 1.0;
        double prev = char_function(adj, lo);
        for (int k = 1; k < 1000; ++k) {
            const double v = char_function(adj, lo + (hi - lo) * k / 999.0);
            monotone_errors += !(v > prev);
            prev = v;
        }
    }
    const double elapsed = seconds_since(start);
    o.require(worst <= 1e-12, "|K(lambda0)|");
    o.require(sign_errors == 0, "sign equivalence");
    o.require(monotone_errors == 0, "monotonicity");
    o.require(elapsed < 1.0, "runtime under 1 s");
    o.note("max |K(lambda0)| " + fmt("%.2e", worst) + ", " + fmt("%.3f", elapsed) + " s");
    return o;
}

Outcome laplace_gaps() {
    Outcome o;
    fixtures::ModelGenerator gen(3002);
    const auto start = Clock::now();
    LaplaceCheckOptions opt;
    opt.estimate_euler_error = false;
    double worst_gap = 0.0, worst_ratio = 1e300;
    for (int i = 0; i < 10; ++i) {
        const auto m = gen.next_valid(true, 0.001, 0.02);
        const auto adj = risk_adjust(m.model, m.market);
        const double l0 = spectral_bound(adj);
        const auto coarse = m.history.resampled(0.002);
        for (double lambda : {m.market.r(), m.market.r() + 0.02, l0 + 0.05}) {
            const auto fine = laplace_check(adj, m.history, lambda, opt);
            const auto half = laplace_check(adj, coarse, lambda, opt);
            worst_gap = std::max(worst_gap, fine.gap);
            worst_ratio = std::min(worst_ratio, half.gap / fine.gap);
        }
    }
    const double elapsed = seconds_since(start);
    o.require(worst_gap < 1e-3, "gap at dt = 1e-3");
    o.require(worst_ratio >= 1.8, "gap reduction when dt halves");
    o.require(elapsed < 30.0, "runtime under 30 s");
    o.note("max gap " + fmt("%.2e", worst_gap) + ", min ratio " + fmt("%.3f", worst_ratio) + ", " +
           fmt("%.1f", elapsed) + " s");
    return o;
}

Outcome gaussian_example() {
    Outcome o;
    const IncomeModel model(0.0, {0.0}, DelayMeasure(1.0), {DelayMeasure::dirac(1.0, -1.0)});
    const auto start = Clock::now();
    const auto p = simulate_income(model, fixtures::derived_market(), fixtures::unit_history(),
                                   sim(100000, 0.01, 0.5, 5005, false, Measure::physical));
    std::vector<double> x(p.n_paths);
    for (std::size_t i = 0; i < p.n_paths; ++i) x[i] = p.x(i, p.steps);
    const auto st = sample_stats(x);
    const double elapsed = seconds_since(start);
    const double n = double(p.n_paths);
    const double var = st.std_dev * st.std_dev;
    const double mean_sigma = std::sqrt(0.5 / n), var_sigma = 0.5 * std::sqrt(2.0 / (n - 1.0));
    o.require(std::abs(st.mean - 1.0) <= 3.0 * mean_sigma, "mean");
    o.require(std::abs(var - 0.5) <= 3.0 * var_sigma, "variance");
    o.require(elapsed < 20.0, "runtime under 20 s");
    o.note("mean " + fmt("%.5f", st.mean) + ", var " + fmt("%.5f", var) + ", " + fmt("%.1f", elapsed) + " s");
    return o;
}

Outcome positivity() {
    Outcome o;
    const auto market = fixtures::derived_market();
    const std::vector<IncomeModel> models{
        fixtures::derived_model(),
        IncomeModel(-0.02, {0.45}, DelayMeasure(1.0, {{-1.0, 0.03}, {-0.25, 0.02}}, {}), {DelayMeasure(1.0)})};
    struct MinTracker {
        double lowest = 1e300;
        void step(std::size_t, double x, double, double) { lowest = std::min(lowest, x); }
    };
    const auto start = Clock::now();
    std::size_t negative = 0, paths = 0;
    for (const auto& m : models) {
        const PathEngine engine(m, market, HistorySegment::flat(0.0, 1.0, 0.001, 1.0), sim(10000, 0.001, 5.0, 6006));
        for (const auto& r : engine.run<MinTracker>([] { return MinTracker{}; })) {
            negative += r.lowest < 0.0;
            ++paths;
        }
    }
    const double elapsed = seconds_since(start);
    o.require(negative == 0, "no negative paths");
    o.require(elapsed < 30.0, "runtime under 30 s");
    o.note(std::to_string(negative) + " of " + std::to_string(paths) + " paths negative, " + fmt("%.1f", elapsed) +
           " s");
    return o;
}

Outcome martingale() {
    Outcome o;
    const auto market = fixtures::derived_market();
    const std::vector<std::pair<std::string, IncomeModel>> families{
        {"atom", fixtures::derived_model()},
        {"delayed-vol", IncomeModel(0.0, {0.05}, DelayMeasure(1.0), {DelayMeasure::dirac(1.0, -1.0, 0.5)})},
        {"density", IncomeModel(0.02, {0.15}, DelayMeasure::uniform(0.5, 0.03, 4),
                                {DelayMeasure(0.5, {{-0.5, 0.05}}, std::vector<double>(4, 0.04))})}};
    const auto start = Clock::now();
    for (const auto& [name, m] : families) {
        const auto c = martingale_check(m, market, HistorySegment::flat(0.0, m.window(), 0.01, 1.0),
                                        sim(100000, 0.01, 5.0, 7007));
        o.require(std::abs(c.z) < 3.0, name);
        o.note(name + " z " + fmt("%.3f", c.z));
    }
    const double elapsed = seconds_since(start);
    o.require(elapsed < 30.0, "runtime under 30 s");
    o.note(fmt("%.1f", elapsed) + " s");
    return o;
}

struct Command {
    int code = -1;
    std::string output;
};

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

Command run_command(const std::string& cli, const std::string& args, const fs::path& out) {
    const std::string cmd = cli + " " + args + " --output " + out.string() + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out)};
}

Outcome thread_invariance(const std::string& cli, const fs::path& workdir) {
    Outcome o;
    fs::create_directories(workdir);
    const std::string cfg = "--config " + std::string(SFDE_CONFIG_DIR) + "/";
    const std::vector<std::pair<std::string, std::string>> commands{
        {"price", cfg + "derived_atom.json --delta 0.01 price"},
        {"mc-check", cfg + "derived_atom.json --paths 2000 --dump " + (workdir / "dump_T.csv").string() + " mc-check"},
        {"spectrum", cfg + "two_assets_density.json spectrum"},
        {"mean-path", cfg + "two_assets_density.json --horizon 20 mean-path"},
        {"laplace-check", cfg + "derived_atom.json laplace-check"},
        {"simulate", cfg + "two_assets_density.json --paths 50 --horizon 4 simulate"}};
    for (const auto& [name, args] : commands) {
        std::vector<Command> runs;
        std::vector<std::string> dumps;
        for (int threads : {1, 4, 8}) {
            std::string a = args;
            const std::string tag = std::to_string(threads);
            const auto pos = a.find("dump_T.csv");
            if (pos != std::string::npos) a.replace(pos, 10, "dump_" + tag + ".csv");
            runs.push_back(run_command(cli, "--threads " + tag + " " + a, workdir / (name + "_" + tag + ".out")));
            if (pos != std::string::npos) dumps.push_back(slurp(workdir / ("dump_" + tag + ".csv")));
        }
        bool same = true;
        for (const auto& r : runs) same = same && r.code == runs[0].code && r.output == runs[0].output;
        for (const auto& d : dumps) same = same && d == dumps[0];
        o.require(same, name);
        o.require(runs[0].code == 0 && !runs[0].output.empty(), name + " ran");
    }
    o.note(std::to_string(commands.size()) + " commands at 1, 4 and 8 threads");
    return o;
}

Outcome poisson_monotone() {
    Outcome o;
    const auto model = fixtures::derived_model();
    const auto market = fixtures::derived_market();
    const auto hist = fixtures::unit_history();
    std::vector<double> v;
    for (int i = 0; i < 10; ++i) v.push_back(human_capital_poisson(model, market, hist, 0.01 * i).total);
    bool decreasing = true;
    for (std::size_t i = 1; i < v.size(); ++i) decreasing = decreasing && v[i] < v[i - 1];
    o.require(decreasing, "strictly decreasing");
    const bool bitwise = v[0] == human_capital(model, market, hist).total;
    o.require(bitwise, "delta = 0 bitwise");
    o.note("V(0) " + fmt("%.6f", v[0]) + ", V(0.09) " + fmt("%.6f", v[9]));
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    std::string cli;
    std::string workdir = (fs::temp_directory_path() / "sfde_acceptance").string();
    app.add_option("--cli", cli, "path to the sfde_cli executable")->required();
    app.add_option("--workdir", workdir, "scratch directory for CLI outputs");
    CLI11_PARSE(app, argc, argv);

    report(1, "no-delay value equals x0 / K", no_delay_total);
    report(2, "Monte Carlo agrees with the closed form (1e5 antithetic paths, both measures)", derived_mc);
    report(3, "spectral bound, sign of K(r) and monotonicity on 100 random models", random_roots);
    report(4, "Laplace identity on 10 random models with r - lambda0 >= 0.02", laplace_gaps);
    report(5, "Gaussian example moments at t = 0.5", gaussian_example);
    report(6, "positivity without volatility delay", positivity);
    report(7, "risk-neutral martingale check on 3 model families", martingale);
    report(8, "CLI output independent of the thread count", [&] { return thread_invariance(cli, workdir); });
    report(9, "Poisson value decreasing in delta", poisson_monotone);

    std::printf("%d of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
