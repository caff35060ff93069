#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "sfde/delay_measure.hpp"
#include "sfde/errors.hpp"
#include "sfde/history.hpp"
#include "sfde/income_model.hpp"
#include "sfde/market.hpp"
#include "sfde/philox.hpp"
#include "sfde/valuation.hpp"

namespace sfde {

enum class Measure { physical, risk_neutral };

inline const char* to_string(Measure m) { return m == Measure::physical ? "physical" : "risk_neutral"; }

struct SimConfig {
    double dt = 0.01;
    std::size_t n_paths = 10000;
    double horizon = 0.0;  // absolute end time; 0 = automatic where supported
    std::uint64_t seed = 0;
    Measure measure = Measure::risk_neutral;
    bool antithetic = false;
    unsigned threads = 0;  // 0 = hardware concurrency
};

// Stream tags separating independent uses of the same seed.
inline constexpr std::uint32_t kMainStream = 0;
inline constexpr std::uint32_t kPilotStream = 1;

// Sum in a fixed pairwise order.
inline double pairwise_sum(const double* x, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x[i];
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

struct SampleStats {
    double mean = 0.0;
    double std_error = 0.0;
    double std_dev = 0.0;
    std::size_t count = 0;
};

inline SampleStats sample_stats(const std::vector<double>& x) {
    SampleStats s;
    s.count = x.size();
    if (x.empty()) return s;
    s.mean = pairwise_sum(x.data(), x.size()) / double(x.size());
    if (x.size() > 1) {
        std::vector<double> sq(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) sq[i] = (x[i] - s.mean) * (x[i] - s.mean);
        s.std_dev = std::sqrt(pairwise_sum(sq.data(), sq.size()) / double(x.size() - 1));
        s.std_error = s.std_dev / std::sqrt(double(x.size()));
    }
    return s;
}

// Euler-Maruyama for the delayed income SFDE. Each path owns a ring buffer of
// the last d / dt + 1 values; delay integrals are read from it through
// precomputed lag stencils. The deflator is advanced with its exact exponential
// increments on the same Brownian draws.
//
// Under the risk-neutral measure the drift is (mu0 - sigma0^T kappa) X + int X Phi,
// the volatility is unchanged and the draws are increments of the shifted
// Brownian motion Z + kappa t.
//
// An engine can run both measures at once: the physical and the risk-neutral
// path with the same index then share their Gaussian draws.
class PathEngine {
public:
    PathEngine(const IncomeModel& model, const MarketParams& market, const HistorySegment& hist,
               const SimConfig& cfg, std::uint32_t stream = kMainStream, bool both_measures = false)
        : cfg_(cfg), stream_(stream), n_assets_(model.n()) {
        if (model.n() != market.n())
            throw InvalidArgumentError("income model and market disagree on the number of assets");
        if (cfg.n_paths == 0) throw InvalidArgumentError("simulation needs at least one path");
        if (cfg.antithetic && cfg.n_paths % 2 != 0)
            throw InvalidArgumentError("antithetic sampling needs an even path count");
        if (!(cfg.dt > 0.0)) throw InvalidArgumentError("simulation step must be positive");
        const double d = model.window();
        history_ = hist.covering(d).resampled(cfg.dt).covering(d);
        lags_ = history_.n_steps();
        if (!(cfg.horizon > history_.t0()))
            throw InvalidArgumentError("simulation horizon must lie after t0");
        steps_ = steps_to_horizon(cfg.horizon - history_.t0(), cfg.dt);
        if (steps_ * model.n() >= NormalStream::kMaxIndex)
            throw InvalidArgumentError("too many draws per path for the RNG counter");

        const auto adj = risk_adjust(model, market);
        if (both_measures)
            measures_ = {Measure::physical, Measure::risk_neutral};
        else
            measures_ = {cfg.measure};
        for (const Measure m : measures_) {
            const bool q = m == Measure::risk_neutral;
            growth_.push_back(q ? adj.drift : model.mu0());
            drift_stencils_.push_back(make_stencil(q ? adj.Phi : model.phi(), cfg.dt, lags_));
        }
        sigma0_ = model.sigma0();
        for (const auto& m : model.phi_vec()) vol_stencils_.push_back(make_stencil(m, cfg.dt, lags_));
        drift_lags_ = merged_lags(drift_stencils_);
        vol_lags_ = merged_lags(vol_stencils_);
        kappa_.assign(market.kappa_span().begin(), market.kappa_span().end());
        deflator_step_ = std::exp(-(market.r() + 0.5 * market.kappa_norm2()) * cfg.dt);
        sqrt_dt_ = std::sqrt(cfg.dt);
        discount_.resize(steps_ + 1);
        for (std::size_t k = 0; k <= steps_; ++k) discount_[k] = std::exp(-market.r() * double(k) * cfg.dt);
    }

    std::size_t steps() const { return steps_; }
    double dt() const { return cfg_.dt; }
    double t0() const { return history_.t0(); }
    const HistorySegment& history() const { return history_; }
    const SimConfig& config() const { return cfg_; }
    const std::vector<Measure>& measures() const { return measures_; }

    // Runs every path; `make()` builds a per-path accumulator with
    //   void step(std::size_t k, double x, double deflator, double dI)
    // called for k = 0 (initial state, dI = 0) through steps(). The deflator is
    // xi(t) / xi(t0) under the physical measure and e^{-r (t - t0)} under the
    // risk-neutral one, so deflator * x is the discounted payoff rate. dI is the
    // increment of the stochastic integral  int vol^T dW  over the last step
    // (W = Z or the shifted Brownian motion, depending on the measure).
    //
    // Results are indexed [measure * n_paths + path] and do not depend on the
    // thread count.
    template <class Acc, class Make>
    std::vector<Acc> run(Make&& make) const {
        const std::size_t n_paths = cfg_.n_paths;
        std::vector<Acc> out;
        out.reserve(n_paths * measures_.size());
        for (std::size_t i = 0; i < n_paths * measures_.size(); ++i) out.push_back(make());
        const std::size_t units = cfg_.antithetic ? n_paths / 2 : n_paths;
        unsigned threads = cfg_.threads ? cfg_.threads : std::max(1u, std::thread::hardware_concurrency());

        // Units are paired statically (0-1, 2-3, ...) and each pair is
        // simulated in one interleaved kernel call; the pairing does not
        // depend on the thread count.
        const std::size_t blocks = (units + 1) / 2;
        threads = static_cast<unsigned>(std::min<std::size_t>(threads, blocks));
        auto work = [&](std::size_t begin, std::size_t end) {
            Workspace ws(*this);
            for (std::size_t b = begin; b < end; ++b) {
                const std::size_t u = 2 * b;
                if (u + 1 < units)
                    dispatch<2>(ws, u, out);
                else
                    dispatch<1>(ws, u, out);
            }
        };
        if (threads <= 1) {
            work(0, blocks);
        } else {
            std::vector<std::thread> pool;
            const std::size_t chunk = (blocks + threads - 1) / threads;
            for (unsigned t = 0; t < threads; ++t) {
                const std::size_t b = std::min(blocks, std::size_t(t) * chunk);
                const std::size_t e = std::min(blocks, b + chunk);
                if (b < e) pool.emplace_back(work, b, e);
            }
            for (auto& th : pool) th.join();
        }
        return out;
    }

private:
    static constexpr std::size_t kStepChunk = NormalStream::kChunk;
    static constexpr std::size_t kMaxLanes = 8;

    struct Workspace {
        explicit Workspace(const PathEngine& e)
            : ring(kMaxLanes * 2 * (e.lags_ + 1)), z(2 * kStepChunk * e.n_assets_) {}
        std::vector<double> ring;
        std::vector<double> z;
    };

    static std::vector<std::size_t> merged_lags(const std::vector<DelayStencil>& stencils) {
        std::vector<std::size_t> lags;
        for (const auto& st : stencils) lags.insert(lags.end(), st.lags.begin(), st.lags.end());
        std::sort(lags.begin(), lags.end());
        lags.erase(std::unique(lags.begin(), lags.end()), lags.end());
        return lags;
    }

    static double weight_at(const DelayStencil& st, std::size_t lag) {
        double w = 0.0;
        for (std::size_t i = 0; i < st.lags.size(); ++i)
            if (st.lags[i] == lag) w += st.weights[i];
        return w;
    }

    template <int Units, class Acc>
    void dispatch(Workspace& ws, std::size_t unit, std::vector<Acc>& out) const {
        const std::size_t n_paths = cfg_.n_paths;
        const bool anti = cfg_.antithetic;
        Acc* acc[kMaxLanes];
        int l = 0;
        for (int u = 0; u < Units; ++u) {
            const std::size_t first = anti ? 2 * (unit + std::size_t(u)) : unit + std::size_t(u);
            for (std::size_t g = 0; g < measures_.size(); ++g) {
                acc[l++] = &out[g * n_paths + first];
                if (anti) acc[l++] = &out[g * n_paths + first + 1];
            }
        }
        if (measures_.size() == 2) {
            if (anti)
                simulate<Units, 2, 2>(ws, unit, acc);
            else
                simulate<Units, 2, 1>(ws, unit, acc);
        } else if (anti) {
            simulate<Units, 1, 2>(ws, unit, acc);
        } else {
            simulate<Units, 1, 1>(ws, unit, acc);
        }
    }

    // Lane (u * Groups + g) * Signs + s runs unit `first + u` under measure g
    // with draw sign (-1)^s; Signs = 2 for antithetic pairs. Lanes are
    // independent paths advanced in lockstep. The ring buffer interleaves them:
    // slot j holds ring[j * L + lane], mirrored at j + len so every lag is a
    // contiguous read.
    template <int Units, int Groups, int Signs, class Acc>
    void simulate(Workspace& ws, std::size_t first, Acc* const* acc) const {
        constexpr int L = Units * Groups * Signs;
        constexpr int PerUnit = Groups * Signs;
        const std::size_t len = lags_ + 1;
        const std::size_t n = n_assets_;
        const double dt = cfg_.dt;
        double* const ring = ws.ring.data();
        const double* hv = history_.values().data();
        for (std::size_t k = 0; k < len; ++k)
            for (int l = 0; l < L; ++l) ring[k * L + l] = ring[(k + len) * L + l] = hv[k];

        double a[L], scale[L], keep[L], x[L], defl[L];
        const std::size_t nd = drift_lags_.size(), nv = vol_lags_.size();
        std::vector<double> dw(nd * L);
        for (int l = 0; l < L; ++l) {
            const std::size_t g = std::size_t((l % PerUnit) / Signs);
            a[l] = 1.0 + growth_[g] * dt;
            scale[l] = (l % Signs == 0) ? sqrt_dt_ : -sqrt_dt_;
            keep[l] = measures_[g] == Measure::physical ? 1.0 : 0.0;
            x[l] = hv[lags_];
            defl[l] = 1.0;
            for (std::size_t e = 0; e < nd; ++e) dw[e * L + l] = dt * weight_at(drift_stencils_[g], drift_lags_[e]);
            acc[l]->step(0, x[l], 1.0, 0.0);
        }
        std::vector<double> vw(nv * n);
        for (std::size_t e = 0; e < nv; ++e)
            for (std::size_t i = 0; i < n; ++i) vw[e * n + i] = weight_at(vol_stencils_[i], vol_lags_[e]);
        std::vector<double> vc(nv * L);
        const bool any_physical = measures_.front() == Measure::physical;
        // Newest sample sits at slot pos + len; lag j at slot pos + len - j.
        std::size_t pos = lags_;

        const std::size_t zlen = kStepChunk * n;
        for (std::size_t k0 = 0; k0 < steps_; k0 += kStepChunk) {
            const std::size_t k1 = std::min(steps_, k0 + kStepChunk);
            for (int u = 0; u < Units; ++u)
                NormalStream(cfg_.seed, stream_, first + std::size_t(u))
                    .fill(k0 * n, ws.z.data() + std::size_t(u) * zlen, (k1 - k0) * n);
            for (std::size_t k = k0; k < k1; ++k) {
                double s0z[L], mult[L];
                for (int u = 0; u < Units; ++u) {
                    const double* z = ws.z.data() + std::size_t(u) * zlen + (k - k0) * n;
                    double sz = 0.0, kz = 0.0;
                    for (std::size_t i = 0; i < n; ++i) {
                        sz += sigma0_[i] * z[i];
                        kz += kappa_[i] * z[i];
                    }
                    for (std::size_t e = 0; e < nv; ++e) {
                        double c = 0.0;
                        for (std::size_t i = 0; i < n; ++i) c += vw[e * n + i] * z[i];
                        for (int j = 0; j < PerUnit; ++j) vc[e * L + std::size_t(u * PerUnit + j)] = c;
                    }
                    double shock[2] = {1.0, 1.0};
                    if (any_physical) exp_pair(-kz * sqrt_dt_, shock[0], shock[1]);
                    for (int j = 0; j < PerUnit; ++j) {
                        s0z[u * PerUnit + j] = sz;
                        mult[u * PerUnit + j] = deflator_step_ * shock[j % Signs];
                    }
                }
                const double disc = discount_[k + 1];
                const double* newest = ring + (pos + len) * L;
                double xn[L], noise[L], di[L];
                for (int l = 0; l < L; ++l) {
                    xn[l] = a[l] * x[l];
                    noise[l] = s0z[l] * x[l];
                }
                for (std::size_t e = 0; e < nd; ++e) {
                    const double* lagged = newest - drift_lags_[e] * L;
                    for (int l = 0; l < L; ++l) xn[l] += dw[e * L + l] * lagged[l];
                }
                for (std::size_t e = 0; e < nv; ++e) {
                    const double* lagged = newest - vol_lags_[e] * L;
                    for (int l = 0; l < L; ++l) noise[l] += vc[e * L + l] * lagged[l];
                }
                const std::size_t next = pos + 1 == len ? 0 : pos + 1;
                double* slot = ring + next * L;
                double* mirror = ring + (next + len) * L;
                for (int l = 0; l < L; ++l) {
                    di[l] = scale[l] * noise[l];
                    xn[l] += di[l];
                    x[l] = xn[l];
                    slot[l] = xn[l];
                    mirror[l] = xn[l];
                    defl[l] = keep[l] * defl[l] * mult[l] + (1.0 - keep[l]) * disc;
                }
                for (int l = 0; l < L; ++l) acc[l]->step(k + 1, x[l], defl[l], di[l]);
                pos = next;
            }
        }
    }

    // (e^u, e^-u). Short even/odd series for the small arguments of a single
    // step (truncation below 1e-18 relative for |u| < 0.25), libm otherwise.
    static void exp_pair(double u, double& plus, double& minus) {
        if (std::abs(u) < 0.25) {
            const double v = u * u;
            const double even =
                1.0 + v * (1.0 / 2 + v * (1.0 / 24 + v * (1.0 / 720 + v * (1.0 / 40320 + v * (1.0 / 3628800 +
                      v * (1.0 / 479001600 + v * (1.0 / 87178291200.0)))))));
            const double odd =
                u * (1.0 + v * (1.0 / 6 + v * (1.0 / 120 + v * (1.0 / 5040 + v * (1.0 / 362880 +
                     v * (1.0 / 39916800 + v * (1.0 / 6227020800.0)))))));
            plus = even + odd;
            minus = even - odd;
        } else {
            plus = std::exp(u);
            minus = 1.0 / plus;
        }
    }

    SimConfig cfg_;
    std::uint32_t stream_;
    std::size_t n_assets_;
    HistorySegment history_{0.0, 1.0, {0.0, 0.0}};
    std::size_t lags_ = 0;
    std::size_t steps_ = 0;
    std::vector<Measure> measures_;
    std::vector<double> growth_;
    std::vector<DelayStencil> drift_stencils_;
    std::vector<double> sigma0_;
    std::vector<DelayStencil> vol_stencils_;
    std::vector<std::size_t> drift_lags_;
    std::vector<std::size_t> vol_lags_;
    std::vector<double> kappa_;
    double deflator_step_ = 0.0;
    double sqrt_dt_ = 0.0;
    std::vector<double> discount_;
};

// Full paths of (X, deflator) on the simulation grid; intended for dumps and
// small path counts. Row p holds path p at times t0 + k dt, k = 0..steps.
struct SimulatedPaths {
    double t0 = 0.0;
    double dt = 0.0;
    std::size_t steps = 0;
    std::size_t n_paths = 0;
    std::vector<double> income;
    std::vector<double> deflator;

    double time(std::size_t k) const { return t0 + double(k) * dt; }
    double x(std::size_t path, std::size_t k) const { return income[path * (steps + 1) + k]; }
    double xi(std::size_t path, std::size_t k) const { return deflator[path * (steps + 1) + k]; }
};

inline SimulatedPaths simulate_income(const IncomeModel& model, const MarketParams& market,
                                      const HistorySegment& hist, const SimConfig& cfg) {
    const PathEngine engine(model, market, hist, cfg);
    struct Recorder {
        std::vector<double> x, defl;
        void step(std::size_t, double xv, double dv, double) {
            x.push_back(xv);
            defl.push_back(dv);
        }
    };
    const std::size_t len = engine.steps() + 1;
    auto paths = engine.run<Recorder>([len] {
        Recorder r;
        r.x.reserve(len);
        r.defl.reserve(len);
        return r;
    });
    SimulatedPaths out{engine.t0(), engine.dt(), engine.steps(), cfg.n_paths, {}, {}};
    out.income.reserve(len * cfg.n_paths);
    out.deflator.reserve(len * cfg.n_paths);
    for (const auto& p : paths) {
        out.income.insert(out.income.end(), p.x.begin(), p.x.end());
        out.deflator.insert(out.deflator.end(), p.defl.begin(), p.defl.end());
    }
    return out;
}

// Per-path trapezoid of deflator * X over [t0, horizon], indexed like
// PathEngine::run; antithetic pairs are averaged into one sample.
inline std::vector<double> discounted_payoffs(const PathEngine& engine) {
    struct Payoff {
        double sum = 0.0, first = 0.0, last = 0.0;
        void step(std::size_t k, double x, double defl, double) {
            const double v = defl * x;
            if (k == 0) first = v;
            sum += v;
            last = v;
        }
        double trapezoid() const { return sum - 0.5 * (first + last); }
    };
    const auto acc = engine.run<Payoff>([] { return Payoff{}; });
    std::vector<double> samples;
    if (engine.config().antithetic) {
        samples.reserve(acc.size() / 2);
        for (std::size_t i = 0; i + 1 < acc.size(); i += 2)
            samples.push_back(0.5 * (acc[i].trapezoid() + acc[i + 1].trapezoid()) * engine.dt());
    } else {
        samples.reserve(acc.size());
        for (const auto& a : acc) samples.push_back(a.trapezoid() * engine.dt());
    }
    return samples;
}

struct McEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t n_paths = 0;
    double horizon = 0.0;      // absolute truncation time T
    double tail_bound = 0.0;   // bound on the discarded value beyond T
    double bias_budget = 0.0;  // |E[estimator] - closed form|: Euler + quadrature + truncation
    Measure measure = Measure::risk_neutral;
};

// Both estimators on shared draws. difference_se is the standard error of the
// paired difference physical - risk_neutral.
struct McComparison {
    McEstimate physical;
    McEstimate risk_neutral;
    double difference = 0.0;
    double difference_se = 0.0;
};

namespace detail {

struct McSetup {
    RiskAdjustedIncome adj;
    ValuationResult closed;
    HistorySegment h;
    double growth_c;
    SimConfig run;
};

inline constexpr double kMaxMcSpan = 20000.0;

// With cfg.horizon == 0 the truncation time is chosen so the tail bound
// (growth at most e^{lambda0 t} for the mean income) stays below a tenth of the
// standard error, predicted from a pilot run on an independent stream.
inline McSetup mc_setup(const IncomeModel& model, const MarketParams& market, const HistorySegment& hist,
                        const SimConfig& cfg, bool both) {
    const RiskAdjustedIncome adj = risk_adjust(model, market);
    const ValuationResult closed = human_capital(adj, hist);
    const double d = model.window();
    HistorySegment h = hist.covering(d).resampled(cfg.dt).covering(d);
    const double r = market.r();
    const double c = growth_constant(h, closed.lambda0);

    SimConfig run = cfg;
    if (!(cfg.horizon > 0.0)) {
        SimConfig pilot = cfg;
        pilot.n_paths = std::min<std::size_t>(cfg.n_paths, 2000);
        if (pilot.antithetic && pilot.n_paths % 2) --pilot.n_paths;
        const double pilot_span =
            std::min(kMaxMcSpan, span_for_tail(c, r, closed.lambda0, 1e-3 * std::abs(closed.total)));
        pilot.horizon = h.t0() + std::max(pilot_span, cfg.dt);
        const auto payoffs = discounted_payoffs(PathEngine(model, market, h, pilot, kPilotStream, both));
        const std::size_t per = payoffs.size() / (both ? 2 : 1);
        double sd = 0.0;
        for (std::size_t g = 0; g < payoffs.size() / per; ++g)
            sd = std::max(sd, sample_stats(std::vector<double>(payoffs.begin() + std::ptrdiff_t(g * per),
                                                               payoffs.begin() + std::ptrdiff_t((g + 1) * per)))
                                  .std_dev);
        const double samples = double(cfg.antithetic ? cfg.n_paths / 2 : cfg.n_paths);
        const double se_pred = sd / std::sqrt(samples);
        const double tol = se_pred > 0.0 ? 0.1 * se_pred : 1e-9 * std::max(1.0, std::abs(closed.total));
        run.horizon = h.t0() + std::max(cfg.dt, std::min(kMaxMcSpan, span_for_tail(c, r, closed.lambda0, tol)));
    }
    return McSetup{adj, closed, std::move(h), c, run};
}

inline McEstimate mc_result(const McSetup& s, const PathEngine& engine, const SampleStats& st, Measure m,
                            double bias) {
    McEstimate est;
    est.value = st.mean;
    est.std_error = st.std_error;
    est.n_paths = engine.config().n_paths;
    est.horizon = engine.t0() + double(engine.steps()) * engine.dt();
    est.tail_bound = tail_bound(s.growth_c, s.adj.discount_rate, s.closed.lambda0,
                                double(engine.steps()) * engine.dt());
    est.bias_budget = bias;
    est.measure = m;
    return est;
}

// The expectation of both estimators equals the discounted integral of the
// Euler mean path on the same grid, so the bias is computed exactly by the
// deterministic recursion.
inline double mc_bias(const McSetup& s, std::size_t steps) {
    return std::abs(discounted_integral(mean_path_steps(s.adj, s.h, steps), s.adj.discount_rate) - s.closed.total);
}

}  // namespace detail

// Monte Carlo value of  E[int_{t0}^inf xi(t) / xi(t0) X(t) dt | F_t0]  under
// cfg.measure. cfg.horizon == 0 selects the truncation time automatically.
inline McEstimate mc_human_capital(const IncomeModel& model, const MarketParams& market,
                                   const HistorySegment& hist, const SimConfig& cfg) {
    const detail::McSetup s = detail::mc_setup(model, market, hist, cfg, false);
    const PathEngine engine(model, market, s.h, s.run);
    const SampleStats st = sample_stats(discounted_payoffs(engine));
    return detail::mc_result(s, engine, st, cfg.measure, detail::mc_bias(s, engine.steps()));
}

// Physical and risk-neutral estimators in one pass on shared draws and a
// common horizon; cfg.measure is ignored.
inline McComparison mc_human_capital_both(const IncomeModel& model, const MarketParams& market,
                                          const HistorySegment& hist, const SimConfig& cfg) {
    const detail::McSetup s = detail::mc_setup(model, market, hist, cfg, true);
    const PathEngine engine(model, market, s.h, s.run, kMainStream, true);
    const auto payoffs = discounted_payoffs(engine);
    const std::size_t per = payoffs.size() / 2;
    const std::vector<double> phys(payoffs.begin(), payoffs.begin() + std::ptrdiff_t(per));
    const std::vector<double> rn(payoffs.begin() + std::ptrdiff_t(per), payoffs.end());
    std::vector<double> diff(per);
    for (std::size_t i = 0; i < per; ++i) diff[i] = phys[i] - rn[i];
    const double bias = detail::mc_bias(s, engine.steps());
    McComparison out;
    out.physical = detail::mc_result(s, engine, sample_stats(phys), Measure::physical, bias);
    out.risk_neutral = detail::mc_result(s, engine, sample_stats(rn), Measure::risk_neutral, bias);
    const SampleStats ds = sample_stats(diff);
    out.difference = ds.mean;
    out.difference_se = ds.std_error;
    return out;
}

struct MartingaleCheck {
    double mean = 0.0;
    double std_error = 0.0;
    double z = 0.0;
    std::size_t n_paths = 0;
};

// Sample mean of  int_{t0}^{T} vol(s)^T dZtilde(s)  under the risk-neutral
// measure, as a z-score against zero. cfg.horizon defaults to t0 + 5.
inline MartingaleCheck martingale_check(const IncomeModel& model, const MarketParams& market,
                                        const HistorySegment& hist, SimConfig cfg) {
    cfg.measure = Measure::risk_neutral;
    if (!(cfg.horizon > 0.0)) cfg.horizon = hist.t0() + 5.0;
    const PathEngine engine(model, market, hist, cfg);
    struct Integral {
        double sum = 0.0;
        void step(std::size_t, double, double, double di) { sum += di; }
    };
    const auto acc = engine.run<Integral>([] { return Integral{}; });
    std::vector<double> samples;
    if (cfg.antithetic) {
        for (std::size_t i = 0; i + 1 < acc.size(); i += 2) samples.push_back(0.5 * (acc[i].sum + acc[i + 1].sum));
    } else {
        for (const auto& a : acc) samples.push_back(a.sum);
    }
    const SampleStats st = sample_stats(samples);
    MartingaleCheck out{st.mean, st.std_error, 0.0, cfg.n_paths};
    out.z = st.std_error > 0.0 ? st.mean / st.std_error : 0.0;
    return out;
}

}  // namespace sfde
