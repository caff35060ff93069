#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sfde/sfde.hpp"

namespace sfde::cli {

using nlohmann::json;

// Malformed configuration; `pointer` is the JSON pointer of the offending value.
class SchemaError : public std::runtime_error {
public:
    SchemaError(std::string pointer, const std::string& what)
        : std::runtime_error(what), pointer_(std::move(pointer)) {}
    const std::string& pointer() const { return pointer_; }

private:
    std::string pointer_;
};

inline constexpr int kSchemaVersion = 1;

struct LambdaGrid {
    double min = 0.0;
    double max = 0.0;
    std::size_t points = 0;
};

struct Options {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::optional<double> dt;
    std::optional<double> horizon;
    std::optional<double> delta;
    bool antithetic = true;
    std::string measure = "both";
    unsigned threads = 0;
    std::optional<LambdaGrid> lambda_grid;
    std::vector<double> lambdas;
    std::optional<double> tail_tolerance;
    std::size_t dump_paths = 10;
};

struct RunConfig {
    MarketParams market;
    IncomeModel income;
    HistorySegment history;
    Options options;
};

namespace detail {

inline std::string child(const std::string& ptr, const std::string& key) {
    std::string k;
    for (char c : key) {
        if (c == '~')
            k += "~0";
        else if (c == '/')
            k += "~1";
        else
            k += c;
    }
    return ptr + "/" + k;
}

inline std::string child(const std::string& ptr, std::size_t i) { return ptr + "/" + std::to_string(i); }

inline const json& require(const json& obj, const std::string& ptr, const std::string& key) {
    if (!obj.contains(key)) throw SchemaError(child(ptr, key), "missing required member \"" + key + "\"");
    return obj.at(key);
}

inline void expect_object(const json& j, const std::string& ptr) {
    if (!j.is_object()) throw SchemaError(ptr, "expected an object");
}

inline double number(const json& j, const std::string& ptr) {
    if (!j.is_number()) throw SchemaError(ptr, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw SchemaError(ptr, "expected a finite number");
    return v;
}

inline double positive(const json& j, const std::string& ptr) {
    const double v = number(j, ptr);
    if (!(v > 0.0)) throw SchemaError(ptr, "expected a positive number");
    return v;
}

inline std::uint64_t count(const json& j, const std::string& ptr) {
    if (!j.is_number_integer() || j.get<std::int64_t>() < 0)
        throw SchemaError(ptr, "expected a non-negative integer");
    return j.get<std::uint64_t>();
}

inline std::vector<double> numbers(const json& j, const std::string& ptr) {
    if (!j.is_array()) throw SchemaError(ptr, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], child(ptr, i)));
    return out;
}

inline void no_unknown(const json& obj, const std::string& ptr, std::initializer_list<const char*> known) {
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw SchemaError(child(ptr, key), "unknown member \"" + key + "\"");
    }
}

inline MarketParams parse_market(const json& j, const std::string& ptr) {
    expect_object(j, ptr);
    no_unknown(j, ptr, {"r", "mu", "sigma"});
    const double r = number(require(j, ptr, "r"), child(ptr, "r"));
    const auto mu = numbers(require(j, ptr, "mu"), child(ptr, "mu"));
    if (mu.empty()) throw SchemaError(child(ptr, "mu"), "expected at least one asset");
    const std::string sp = child(ptr, "sigma");
    const json& sj = require(j, ptr, "sigma");
    if (!sj.is_array() || sj.size() != mu.size())
        throw SchemaError(sp, "expected a " + std::to_string(mu.size()) + "x" + std::to_string(mu.size()) + " matrix");
    const auto n = static_cast<Eigen::Index>(mu.size());
    Eigen::MatrixXd sigma(n, n);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const auto row = numbers(sj[i], child(sp, i));
        if (row.size() != mu.size())
            throw SchemaError(child(sp, i), "expected a row of " + std::to_string(mu.size()) + " numbers");
        for (std::size_t k = 0; k < row.size(); ++k) sigma(Eigen::Index(i), Eigen::Index(k)) = row[k];
    }
    try {
        return MarketParams(r, Eigen::Map<const Eigen::VectorXd>(mu.data(), n), sigma);
    } catch (const Error& e) {
        throw SchemaError(sp, e.what());
    }
}

inline DelayMeasure parse_measure(const json& j, const std::string& ptr, double d) {
    expect_object(j, ptr);
    no_unknown(j, ptr, {"atoms", "density"});
    std::vector<DelayMeasure::Atom> atoms;
    if (j.contains("atoms")) {
        const std::string ap = child(ptr, "atoms");
        const json& aj = j.at("atoms");
        if (!aj.is_array()) throw SchemaError(ap, "expected an array of atoms");
        for (std::size_t i = 0; i < aj.size(); ++i) {
            const std::string p = child(ap, i);
            expect_object(aj[i], p);
            no_unknown(aj[i], p, {"loc", "mass"});
            const double loc = number(require(aj[i], p, "loc"), child(p, "loc"));
            if (loc < -d - 1e-12 * std::max(1.0, d) || loc > 1e-12 * std::max(1.0, d))
                throw SchemaError(child(p, "loc"), "atom location must lie in [-d, 0]");
            atoms.push_back({loc, number(require(aj[i], p, "mass"), child(p, "mass"))});
        }
    }
    std::vector<double> density;
    if (j.contains("density")) {
        const std::string dp = child(ptr, "density");
        const json& dj = j.at("density");
        expect_object(dj, dp);
        no_unknown(dj, dp, {"cells", "values", "value"});
        if (dj.contains("values")) {
            density = numbers(dj.at("values"), child(dp, "values"));
            if (density.empty()) throw SchemaError(child(dp, "values"), "expected at least one cell");
            if (dj.contains("cells") && count(dj.at("cells"), child(dp, "cells")) != density.size())
                throw SchemaError(child(dp, "cells"), "cell count does not match the number of values");
        } else if (dj.contains("value")) {
            const double v = number(dj.at("value"), child(dp, "value"));
            std::size_t cells = DelayMeasure::kDefaultCells;
            if (dj.contains("cells")) cells = count(dj.at("cells"), child(dp, "cells"));
            if (cells == 0) throw SchemaError(child(dp, "cells"), "expected at least one cell");
            density.assign(cells, v);
        } else {
            throw SchemaError(child(dp, "values"), "missing required member \"values\" (or \"value\")");
        }
    }
    return DelayMeasure(d, std::move(atoms), std::move(density));
}

inline IncomeModel parse_income(const json& j, const std::string& ptr, std::size_t n_assets) {
    expect_object(j, ptr);
    no_unknown(j, ptr, {"mu0", "sigma0", "d", "phi", "phi_vec"});
    const double mu0 = number(require(j, ptr, "mu0"), child(ptr, "mu0"));
    const auto sigma0 = numbers(require(j, ptr, "sigma0"), child(ptr, "sigma0"));
    if (sigma0.size() != n_assets)
        throw SchemaError(child(ptr, "sigma0"), "expected " + std::to_string(n_assets) + " loadings (one per asset)");
    const double d = positive(require(j, ptr, "d"), child(ptr, "d"));
    DelayMeasure phi(d);
    if (j.contains("phi")) phi = parse_measure(j.at("phi"), child(ptr, "phi"), d);
    std::vector<DelayMeasure> vol(n_assets, DelayMeasure(d));
    if (j.contains("phi_vec")) {
        const std::string vp = child(ptr, "phi_vec");
        const json& vj = j.at("phi_vec");
        if (!vj.is_array() || vj.size() != n_assets)
            throw SchemaError(vp, "expected an array of " + std::to_string(n_assets) + " delay measures");
        for (std::size_t i = 0; i < n_assets; ++i) vol[i] = parse_measure(vj[i], child(vp, i), d);
    }
    return IncomeModel(mu0, sigma0, std::move(phi), std::move(vol));
}

inline std::vector<double> read_history_csv(const std::filesystem::path& file, const std::string& ptr, double& dt) {
    std::ifstream in(file);
    if (!in) throw SchemaError(ptr, "cannot open history file " + file.string());
    std::string line;
    std::getline(in, line);  // header
    std::vector<double> s, x;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string a, b;
        double sv = 0.0, xv = 0.0;
        try {
            if (!std::getline(ls, a, ',') || !std::getline(ls, b)) throw std::invalid_argument("columns");
            sv = std::stod(a);
            xv = std::stod(b);
        } catch (const std::exception&) {
            throw SchemaError(ptr, file.string() + ": row " + std::to_string(row) + " is not \"s,x\"");
        }
        s.push_back(sv);
        x.push_back(xv);
    }
    if (x.size() < 2) throw SchemaError(ptr, file.string() + ": need at least two rows");
    dt = (s.back() - s.front()) / double(s.size() - 1);
    for (std::size_t k = 1; k < s.size(); ++k)
        if (std::abs(s[k] - s[k - 1] - dt) > 1e-9 * std::max(1.0, std::abs(dt)))
            throw SchemaError(ptr, file.string() + ": times are not on a uniform grid");
    if (std::abs(s.back()) > 1e-9) throw SchemaError(ptr, file.string() + ": last row must be s = 0");
    return x;
}

inline HistorySegment parse_history(const json& j, const std::string& ptr, double d,
                                    const std::filesystem::path& base) {
    expect_object(j, ptr);
    no_unknown(j, ptr, {"t0", "dt", "values", "x0", "x1", "csv"});
    const double t0 = j.contains("t0") ? number(j.at("t0"), child(ptr, "t0")) : 0.0;
    if (t0 < 0.0) throw SchemaError(child(ptr, "t0"), "expected t0 >= 0");
    const int forms = int(j.contains("values")) + int(j.contains("x0") || j.contains("x1")) + int(j.contains("csv"));
    if (forms != 1) throw SchemaError(ptr, "give exactly one of \"values\", \"x0\"/\"x1\" or \"csv\"");
    try {
        if (j.contains("csv")) {
            if (!j.at("csv").is_string()) throw SchemaError(child(ptr, "csv"), "expected a file path");
            std::filesystem::path file = j.at("csv").get<std::string>();
            if (file.is_relative()) file = base / file;
            double dt = 0.0;
            auto values = read_history_csv(file, child(ptr, "csv"), dt);
            return HistorySegment(t0, dt, std::move(values)).covering(d);
        }
        const double dt = j.contains("dt") ? positive(j.at("dt"), child(ptr, "dt")) : 0.01;
        if (j.contains("values")) {
            auto values = numbers(j.at("values"), child(ptr, "values"));
            if (values.size() < 2) throw SchemaError(child(ptr, "values"), "expected at least two samples");
            return HistorySegment(t0, dt, std::move(values)).covering(d);
        }
        const double x0 = number(require(j, ptr, "x0"), child(ptr, "x0"));
        const double x1 = number(require(j, ptr, "x1"), child(ptr, "x1"));
        return HistorySegment::flat(t0, d, dt, x0, x1);
    } catch (const Error& e) {
        throw SchemaError(ptr, e.what());
    }
}

inline Options parse_options(const json& j, const std::string& ptr) {
    Options o;
    expect_object(j, ptr);
    no_unknown(j, ptr, {"seed", "paths", "dt", "horizon", "delta", "antithetic", "measure", "threads",
                        "lambda_grid", "lambdas", "tail_tolerance", "dump_paths"});
    if (j.contains("seed")) o.seed = count(j.at("seed"), child(ptr, "seed"));
    if (j.contains("paths")) o.paths = count(j.at("paths"), child(ptr, "paths"));
    if (j.contains("dt")) o.dt = positive(j.at("dt"), child(ptr, "dt"));
    if (j.contains("horizon")) o.horizon = positive(j.at("horizon"), child(ptr, "horizon"));
    if (j.contains("delta")) {
        o.delta = number(j.at("delta"), child(ptr, "delta"));
        if (*o.delta < 0.0) throw SchemaError(child(ptr, "delta"), "expected delta >= 0");
    }
    if (j.contains("antithetic")) {
        if (!j.at("antithetic").is_boolean()) throw SchemaError(child(ptr, "antithetic"), "expected a boolean");
        o.antithetic = j.at("antithetic").get<bool>();
    }
    if (j.contains("measure")) {
        const json& m = j.at("measure");
        if (!m.is_string() || (m != "physical" && m != "risk_neutral" && m != "both"))
            throw SchemaError(child(ptr, "measure"), "expected \"physical\", \"risk_neutral\" or \"both\"");
        o.measure = m.get<std::string>();
    }
    if (j.contains("threads")) o.threads = unsigned(count(j.at("threads"), child(ptr, "threads")));
    if (j.contains("lambda_grid")) {
        const std::string gp = child(ptr, "lambda_grid");
        const json& g = j.at("lambda_grid");
        expect_object(g, gp);
        no_unknown(g, gp, {"min", "max", "points"});
        LambdaGrid grid{number(require(g, gp, "min"), child(gp, "min")), number(require(g, gp, "max"), child(gp, "max")),
                        count(require(g, gp, "points"), child(gp, "points"))};
        if (grid.points < 2) throw SchemaError(child(gp, "points"), "expected at least two points");
        if (!(grid.max > grid.min)) throw SchemaError(child(gp, "max"), "expected max > min");
        o.lambda_grid = grid;
    }
    if (j.contains("lambdas")) o.lambdas = numbers(j.at("lambdas"), child(ptr, "lambdas"));
    if (j.contains("tail_tolerance")) o.tail_tolerance = positive(j.at("tail_tolerance"), child(ptr, "tail_tolerance"));
    if (j.contains("dump_paths")) o.dump_paths = count(j.at("dump_paths"), child(ptr, "dump_paths"));
    return o;
}

}  // namespace detail

inline RunConfig parse_config(const json& j, const std::filesystem::path& base = ".") {
    using namespace detail;
    if (!j.is_object()) throw SchemaError("", "expected a JSON object");
    no_unknown(j, "", {"schema_version", "market", "income", "history", "options"});
    const json& v = require(j, "", "schema_version");
    if (!v.is_number_integer() || v.get<int>() != kSchemaVersion)
        throw SchemaError("/schema_version", "unsupported schema version (expected " + std::to_string(kSchemaVersion) + ")");
    MarketParams market = parse_market(require(j, "", "market"), "/market");
    IncomeModel income = [&] {
        try {
            return parse_income(require(j, "", "income"), "/income", market.n());
        } catch (const SchemaError&) {
            throw;
        } catch (const Error& e) {
            throw SchemaError("/income", e.what());
        }
    }();
    HistorySegment hist = parse_history(require(j, "", "history"), "/history", income.window(), base);
    Options opt;
    if (j.contains("options")) opt = parse_options(j.at("options"), "/options");
    return RunConfig{std::move(market), std::move(income), std::move(hist), std::move(opt)};
}

inline RunConfig load_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw SchemaError("", "cannot open config file " + file.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw SchemaError("", std::string("invalid JSON: ") + e.what());
    }
    return parse_config(j, file.parent_path());
}

}  // namespace sfde::cli
