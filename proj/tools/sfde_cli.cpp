// sfde_cli: batch front-end for the delayed-income valuation library.
//
//   sfde_cli price         --config model.json [--delta X]
//   sfde_cli mc-check      --config model.json [--seed N --paths N --dt X --horizon T --dump PATH]
//   sfde_cli spectrum      --config model.json
//   sfde_cli mean-path     --config model.json [--horizon T --dt X]
//   sfde_cli laplace-check --config model.json [--dt X]
//   sfde_cli simulate      --config model.json [--seed N --paths N --dt X --horizon T]
//
// Exit codes: 0 ok, 1 runtime error, 2 hypothesis gate, 3 schema error,
// 4 Monte Carlo estimate more than 4 standard errors from the closed form.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "config.hpp"
#include "sfde/sfde.hpp"

namespace {

using namespace sfde;
using sfde::cli::RunConfig;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitHypothesis = 2;
constexpr int kExitSchema = 3;
constexpr int kExitMcBreach = 4;

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::optional<double> dt;
    std::optional<double> horizon;
    std::optional<double> delta;
    std::optional<unsigned> threads;
    std::string output;
    std::string dump;
};

// Flags override the "options" block of the config.
struct Settings {
    std::uint64_t seed = 0;
    std::size_t paths = 10000;
    std::optional<double> dt;
    std::optional<double> horizon;
    double delta = 0.0;
    unsigned threads = 0;
};

Settings merge(const Flags& f, const cli::Options& o) {
    Settings s;
    s.seed = f.seed ? *f.seed : o.seed.value_or(0);
    s.paths = f.paths ? *f.paths : o.paths.value_or(10000);
    s.dt = f.dt ? f.dt : o.dt;
    s.horizon = f.horizon ? f.horizon : o.horizon;
    s.delta = f.delta ? *f.delta : o.delta.value_or(0.0);
    s.threads = f.threads ? *f.threads : o.threads;
    return s;
}

class Output {
public:
    explicit Output(const std::string& path) {
        if (!path.empty()) {
            file_ = std::make_unique<std::ofstream>(path);
            if (!*file_) throw Error("cannot open output file " + path);
        }
    }
    std::ostream& stream() { return file_ ? *file_ : std::cout; }

private:
    std::unique_ptr<std::ofstream> file_;
};

HistorySegment history_on(const RunConfig& rc, const std::optional<double>& dt) {
    const HistorySegment h = rc.history.covering(rc.income.window());
    return dt ? h.resampled(*dt) : h;
}

int hypothesis_failure(const HypothesisReport& rep) {
    std::cerr << "hypothesis gate: " << rep.describe() << "\n";
    return kExitHypothesis;
}

int cmd_price(const RunConfig& rc, const Settings& s, std::ostream& out) {
    const RiskAdjustedIncome adj =
        with_discount_rate(risk_adjust(rc.income, rc.market), rc.market.r() + s.delta);
    const HypothesisReport rep = check_hypothesis(adj);
    if (!rep.ok()) return hypothesis_failure(rep);
    const ValuationResult v = human_capital(adj, history_on(rc, s.dt));
    out << "K,lambda0,annuity_factor,present_term,past_term,total,delta\n";
    out << num(v.K) << ',' << num(v.lambda0) << ',' << num(v.annuity_factor) << ',' << num(v.present_term) << ','
        << num(v.past_term) << ',' << num(v.total) << ',' << num(s.delta) << '\n';
    return kExitOk;
}

SimConfig sim_config(const RunConfig& rc, const Settings& s) {
    SimConfig cfg;
    cfg.dt = s.dt.value_or(rc.history.dt());
    cfg.n_paths = s.paths;
    cfg.horizon = s.horizon.value_or(0.0);
    cfg.seed = s.seed;
    cfg.antithetic = rc.options.antithetic;
    cfg.measure = rc.options.measure == "physical" ? Measure::physical : Measure::risk_neutral;
    cfg.threads = s.threads;
    if (cfg.antithetic && cfg.n_paths % 2) throw Error("antithetic sampling needs an even path count");
    return cfg;
}

void write_paths(const SimulatedPaths& p, std::ostream& out) {
    out << "path,t,X0,xi\n";
    for (std::size_t i = 0; i < p.n_paths; ++i)
        for (std::size_t k = 0; k <= p.steps; ++k)
            out << i << ',' << num(p.time(k)) << ',' << num(p.x(i, k)) << ',' << num(p.xi(i, k)) << '\n';
}

std::string estimate_json(const McEstimate& e, double closed) {
    const double z = e.std_error > 0.0 ? (e.value - closed) / e.std_error : 0.0;
    std::ostringstream os;
    os << "{\"measure\": \"" << to_string(e.measure) << "\", \"value\": " << num(e.value)
       << ", \"std_error\": " << num(e.std_error) << ", \"n_paths\": " << e.n_paths << ", \"T\": " << num(e.horizon)
       << ", \"tail_bound\": " << num(e.tail_bound) << ", \"bias_budget\": " << num(e.bias_budget)
       << ", \"z\": " << num(z) << "}";
    return os.str();
}

int cmd_mc_check(const RunConfig& rc, const Settings& s, const std::string& dump, std::ostream& out) {
    const HypothesisReport rep = check_hypothesis(rc.income, rc.market);
    if (!rep.ok()) return hypothesis_failure(rep);
    const SimConfig cfg = sim_config(rc, s);
    const ValuationResult closed = human_capital(rc.income, rc.market, rc.history);

    std::vector<McEstimate> est;
    std::optional<double> diff, diff_se;
    if (rc.options.measure == "both") {
        const McComparison c = mc_human_capital_both(rc.income, rc.market, rc.history, cfg);
        est = {c.physical, c.risk_neutral};
        diff = c.difference;
        diff_se = c.difference_se;
    } else {
        est = {mc_human_capital(rc.income, rc.market, rc.history, cfg)};
    }

    double max_z = 0.0;
    out << "{\n  \"closed_form\": " << num(closed.total) << ",\n  \"seed\": " << cfg.seed << ",\n  \"dt\": "
        << num(cfg.dt) << ",\n  \"estimates\": [\n";
    for (std::size_t i = 0; i < est.size(); ++i) {
        out << "    " << estimate_json(est[i], closed.total) << (i + 1 < est.size() ? ",\n" : "\n");
        if (est[i].std_error > 0.0) max_z = std::max(max_z, std::abs(est[i].value - closed.total) / est[i].std_error);
    }
    out << "  ]";
    if (diff) out << ",\n  \"difference\": " << num(*diff) << ",\n  \"difference_std_error\": " << num(*diff_se);
    out << "\n}\n";

    if (!dump.empty()) {
        SimConfig dc = cfg;
        dc.n_paths = std::min(cfg.n_paths, rc.options.dump_paths);
        if (dc.antithetic && dc.n_paths % 2) --dc.n_paths;
        if (dc.n_paths == 0) dc.n_paths = cfg.antithetic ? 2 : 1;
        dc.horizon = est.front().horizon;
        if (rc.options.measure == "both") dc.measure = Measure::physical;
        std::ofstream f(dump);
        if (!f) throw Error("cannot open dump file " + dump);
        write_paths(simulate_income(rc.income, rc.market, rc.history, dc), f);
    }
    return max_z > 4.0 ? kExitMcBreach : kExitOk;
}

int cmd_spectrum(const RunConfig& rc, std::ostream& out) {
    const RiskAdjustedIncome adj = risk_adjust(rc.income, rc.market);
    if (!adj.Phi.is_nonnegative()) return hypothesis_failure(check_hypothesis(adj));
    const double l0 = spectral_bound(adj);
    cli::LambdaGrid g = rc.options.lambda_grid.value_or(cli::LambdaGrid{l0 - 0.05, rc.market.r() + 0.05, 101});
    out << "lambda,K,kind\n";
    for (std::size_t i = 0; i < g.points; ++i) {
        const double lambda = g.min + (g.max - g.min) * double(i) / double(g.points - 1);
        out << num(lambda) << ',' << num(char_function(adj, lambda)) << ",grid\n";
    }
    out << num(l0) << ',' << num(char_function(adj, l0)) << ",lambda0\n";
    out << num(adj.discount_rate) << ',' << num(constant_K(adj)) << ",r\n";
    return kExitOk;
}

int cmd_mean_path(const RunConfig& rc, const Settings& s, std::ostream& out) {
    const RiskAdjustedIncome adj = risk_adjust(rc.income, rc.market);
    const HistorySegment h = history_on(rc, s.dt);
    const double T = s.horizon.value_or(h.t0() + 50.0);
    const MeanPath mp = mean_path(adj, h, T);
    out << "t,M0\n";
    for (std::size_t k = 0; k <= mp.steps(); ++k) out << num(mp.time(k)) << ',' << num(mp.value(k)) << '\n';
    return kExitOk;
}

int cmd_laplace_check(const RunConfig& rc, const Settings& s, std::ostream& out) {
    const RiskAdjustedIncome adj = risk_adjust(rc.income, rc.market);
    if (!adj.Phi.is_nonnegative()) return hypothesis_failure(check_hypothesis(adj));
    const HistorySegment h = history_on(rc, s.dt);
    const double l0 = spectral_bound(adj);
    std::vector<double> lambdas = rc.options.lambdas;
    if (lambdas.empty()) lambdas = {rc.market.r(), rc.market.r() + 0.02, l0 + 0.05};
    LaplaceCheckOptions opt;
    if (s.horizon) opt.T_max = *s.horizon;
    if (rc.options.tail_tolerance) opt.tail_tolerance = *rc.options.tail_tolerance;
    out << "lambda,lambda0,lhs,rhs,gap,T_max,tail_bound,euler_error_estimate\n";
    for (double lambda : lambdas) {
        const LaplaceCheck c = laplace_check(adj, h, lambda, opt);
        out << num(c.lambda) << ',' << num(c.lambda0) << ',' << num(c.lhs) << ',' << num(c.rhs) << ',' << num(c.gap)
            << ',' << num(c.T_max) << ',' << num(c.tail_bound) << ',' << num(c.euler_error_estimate) << '\n';
    }
    return kExitOk;
}

int cmd_simulate(const RunConfig& rc, const Settings& s, std::ostream& out) {
    SimConfig cfg = sim_config(rc, s);
    if (rc.options.measure == "both") cfg.measure = Measure::physical;
    if (!(cfg.horizon > 0.0)) cfg.horizon = rc.history.t0() + 10.0;
    write_paths(simulate_income(rc.income, rc.market, rc.history, cfg), out);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Valuation and simulation of income streams with delayed dynamics"};
    app.require_subcommand(1);
    app.fallthrough();

    Flags f;
    app.add_option("--config", f.config, "JSON model configuration (schema_version 1)")->required();
    app.add_option("--seed", f.seed, "RNG seed");
    app.add_option("--paths", f.paths, "Monte Carlo path count");
    app.add_option("--dt", f.dt, "time step in years (must divide the delay window)");
    app.add_option("--horizon", f.horizon, "absolute end time in years");
    app.add_option("--delta", f.delta, "Poisson exit intensity per year (price)");
    app.add_option("--threads", f.threads, "worker threads; 0 = all cores");
    app.add_option("--output", f.output, "write the result here instead of stdout");
    app.add_option("--dump", f.dump, "mc-check: CSV of the first paths (path, t, X0, xi)");

    auto* price = app.add_subcommand("price", "closed-form value and its decomposition");
    auto* mc = app.add_subcommand("mc-check", "Monte Carlo estimate against the closed form");
    auto* spectrum = app.add_subcommand("spectrum", "K(lambda) on a grid and the spectral bound");
    auto* mean = app.add_subcommand("mean-path", "risk-adjusted conditional mean path");
    auto* laplace = app.add_subcommand("laplace-check", "Laplace transform of the mean path vs the resolvent");
    auto* simulate = app.add_subcommand("simulate", "simulated income and deflator paths");

    CLI11_PARSE(app, argc, argv);

    try {
        const RunConfig rc = cli::load_config(f.config);
        const Settings s = merge(f, rc.options);
        Output o(f.output);
        std::ostream& out = o.stream();
        int code = kExitOk;
        if (price->parsed())
            code = cmd_price(rc, s, out);
        else if (mc->parsed())
            code = cmd_mc_check(rc, s, f.dump, out);
        else if (spectrum->parsed())
            code = cmd_spectrum(rc, out);
        else if (mean->parsed())
            code = cmd_mean_path(rc, s, out);
        else if (laplace->parsed())
            code = cmd_laplace_check(rc, s, out);
        else if (simulate->parsed())
            code = cmd_simulate(rc, s, out);
        out.flush();
        return code;
    } catch (const cli::SchemaError& e) {
        std::cerr << "schema error at " << (e.pointer().empty() ? "/" : e.pointer()) << ": " << e.what() << "\n";
        return kExitSchema;
    } catch (const HypothesisError& e) {
        return hypothesis_failure(e.report());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
}
