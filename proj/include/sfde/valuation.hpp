#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "sfde/delay_measure.hpp"
#include "sfde/errors.hpp"
#include "sfde/history.hpp"
#include "sfde/income_model.hpp"
#include "sfde/market.hpp"

namespace sfde {

// Closed-form value of the income stream anchored at t0:
//   total = (X(t0) + int_{-d}^0 G(s) X(t0 + s) ds) / K.
struct ValuationResult {
    double K = 0.0;
    double lambda0 = 0.0;
    double annuity_factor = 0.0;  // 1 / K
    double present_term = 0.0;    // X(t0)
    double past_term = 0.0;       // int G(s) X(t0 + s) ds
    double total = 0.0;
};

// The past term uses the trapezoid rule on the history grid with G at the nodes.
inline ValuationResult human_capital(const RiskAdjustedIncome& adj, const HistorySegment& hist) {
    const HypothesisReport rep = check_hypothesis(adj);
    if (!rep.ok()) throw HypothesisError(rep);
    const HistorySegment h = hist.covering(adj.Phi.window());

    ValuationResult res;
    res.K = rep.K;
    res.lambda0 = spectral_bound(adj);
    res.annuity_factor = 1.0 / res.K;
    res.present_term = h.current();
    if (!adj.Phi.is_zero()) {
        const double d = adj.Phi.window();
        res.past_term = h.weighted_integral([&](double s) { return kernel_G(adj, std::clamp(s, -d, 0.0)); });
    }
    res.total = (res.present_term + res.past_term) * res.annuity_factor;
    return res;
}

inline ValuationResult human_capital(const IncomeModel& model, const MarketParams& market,
                                     const HistorySegment& hist) {
    return human_capital(risk_adjust(model, market), hist);
}

// Income received until an independent exponential time with intensity delta:
// same formula with discounting at r + delta.
inline ValuationResult human_capital_poisson(const IncomeModel& model, const MarketParams& market,
                                             const HistorySegment& hist, double delta) {
    if (!(delta >= 0.0) || !std::isfinite(delta))
        throw InvalidArgumentError("Poisson exit intensity must be non-negative");
    return human_capital(with_discount_rate(risk_adjust(model, market), market.r() + delta), hist);
}

// Conditional mean path under the risk-adjusted measure: explicit Euler for
//   M'(t) = (mu0 - sigma0^T kappa) M(t) + int M(t + s) Phi(ds)
// on the history grid. samples[0..N] hold the history on [t0 - d, t0];
// samples[N + k] = M(t0 + k dt).
struct MeanPath {
    double t0 = 0.0;
    double dt = 0.0;
    std::size_t history_steps = 0;
    std::vector<double> samples;

    std::size_t steps() const { return samples.size() - history_steps - 1; }
    double time(std::size_t k) const { return t0 + double(k) * dt; }
    double value(std::size_t k) const { return samples[history_steps + k]; }
    double horizon() const { return time(steps()); }
};

inline std::size_t steps_to_horizon(double span, double dt) {
    if (!(span > 0.0)) throw InvalidArgumentError("horizon must lie after t0");
    return static_cast<std::size_t>(std::ceil(span / dt - 1e-9));
}

namespace detail {

// Stencil split into runs of consecutive lags with a common weight; densities
// give long runs whose window sums are updated in O(1) per step.
class RunStencil {
public:
    explicit RunStencil(const DelayStencil& st) {
        for (std::size_t i = 0; i < st.lags.size(); ++i) {
            const double w = st.weights[i];
            if (!runs_.empty()) {
                Run& r = runs_.back();
                if (st.lags[i] == r.last + 1 && std::abs(w - r.weight) <= 1e-12 * std::abs(r.weight)) {
                    r.last = st.lags[i];
                    continue;
                }
            }
            runs_.push_back({st.lags[i], st.lags[i], w});
        }
        sums_.assign(runs_.size(), 0.0);
    }

    // Window sums for the current index `now`, recomputed from scratch.
    void reset(const double* x, std::size_t now) {
        for (std::size_t i = 0; i < runs_.size(); ++i) {
            double s = 0.0;
            for (std::size_t lag = runs_[i].first; lag <= runs_[i].last; ++lag) s += x[now - lag];
            sums_[i] = s;
        }
    }

    double value() const {
        double acc = 0.0;
        for (std::size_t i = 0; i < runs_.size(); ++i) acc += runs_[i].weight * sums_[i];
        return acc;
    }

    // Moves the windows from `now - 1` to `now`.
    void advance(const double* x, std::size_t now) {
        for (std::size_t i = 0; i < runs_.size(); ++i) sums_[i] += x[now - runs_[i].first] - x[now - 1 - runs_[i].last];
    }

private:
    struct Run {
        std::size_t first, last;
        double weight;
    };
    std::vector<Run> runs_;
    std::vector<double> sums_;
};

}  // namespace detail

inline MeanPath mean_path_steps(const RiskAdjustedIncome& adj, const HistorySegment& hist, std::size_t steps) {
    constexpr std::size_t kRefresh = 1024;
    const HistorySegment h = hist.covering(adj.Phi.window());
    const std::size_t n = h.n_steps();
    const double dt = h.dt();
    detail::RunStencil stencil(make_stencil(adj.Phi, dt, n));

    MeanPath mp{h.t0(), dt, n, h.values()};
    mp.samples.reserve(n + 1 + steps);
    for (std::size_t k = 0; k < steps; ++k) {
        const std::size_t now = n + k;
        const double* x = mp.samples.data();
        if (k % kRefresh == 0)
            stencil.reset(x, now);
        else
            stencil.advance(x, now);
        mp.samples.push_back(x[now] + dt * (adj.drift * x[now] + stencil.value()));
    }
    return mp;
}

inline MeanPath mean_path(const RiskAdjustedIncome& adj, const HistorySegment& hist, double T) {
    return mean_path_steps(adj, hist, steps_to_horizon(T - hist.t0(), hist.dt()));
}

inline MeanPath mean_path(const IncomeModel& model, const MarketParams& market, const HistorySegment& hist,
                          double T) {
    return mean_path(risk_adjust(model, market), hist, T);
}

// Trapezoid of e^{-lambda (t - t0)} M(t) over [t0, t0 + steps dt].
inline double discounted_integral(const MeanPath& mp, double lambda) {
    const std::size_t n = mp.steps();
    double acc = 0.0;
    for (std::size_t k = 0; k <= n; ++k) {
        const double term = std::exp(-lambda * double(k) * mp.dt) * mp.value(k);
        acc += (k == 0 || k == n) ? 0.5 * term : term;
    }
    return acc * mp.dt;
}

// Bound on int_{t0 + span}^inf e^{-lambda (t - t0)} |M(t)| dt. For Phi >= 0 the
// delay equation is order preserving, so |M(t0 + u)| <= C e^{lambda0 u} with
// C = max_s |m(s)| e^{-lambda0 s}.
inline double growth_constant(const HistorySegment& h, double lambda0) {
    double c = 0.0;
    for (std::size_t k = 0; k <= h.n_steps(); ++k) {
        const double s = -h.window() + double(k) * h.dt();
        c = std::max(c, std::abs(h.values()[k]) * std::exp(-lambda0 * s));
    }
    return c;
}

inline double tail_bound(double growth_c, double lambda, double lambda0, double span) {
    return growth_c * std::exp(-(lambda - lambda0) * span) / (lambda - lambda0);
}

// Smallest span with tail_bound <= tol.
inline double span_for_tail(double growth_c, double lambda, double lambda0, double tol) {
    if (growth_c <= 0.0) return 0.0;
    const double gap = lambda - lambda0;
    return std::max(0.0, std::log(growth_c / (tol * gap)) / gap);
}

struct LaplaceCheckOptions {
    double T_max = 0.0;               // absolute time; 0 selects it from the tail bound
    double tail_tolerance = 1e-9;     // relative to |rhs| (floored at 1)
    double max_span = 20000.0;        // cap on the automatic horizon (years)
    bool estimate_euler_error = true; // Richardson estimate using the 2 dt grid
};

struct LaplaceCheck {
    double lambda = 0.0;
    double lambda0 = 0.0;
    double lhs = 0.0;
    double rhs = 0.0;
    double gap = 0.0;
    double T_max = 0.0;
    double tail_bound = 0.0;
    double euler_error_estimate = std::numeric_limits<double>::quiet_NaN();
};

// Compares the truncated Laplace transform of the mean path with the resolvent
// inner product  f(lambda) m0 + int g(lambda, s) m1(s) ds, both scaled by e^{-lambda t0}.
inline LaplaceCheck laplace_check(const RiskAdjustedIncome& adj, const HistorySegment& hist, double lambda,
                                  const LaplaceCheckOptions& opt = {}) {
    const double lambda0 = spectral_bound(adj);
    if (!(lambda > lambda0))
        throw DivergentTransformError("Laplace transform diverges: lambda = " + std::to_string(lambda) +
                                      " <= lambda0 = " + std::to_string(lambda0));
    const HistorySegment h = hist.covering(adj.Phi.window());
    const double d = adj.Phi.window();
    const ResolventPair rp = resolvent_pair(adj, lambda);
    const double scale = std::exp(-lambda * h.t0());

    LaplaceCheck out;
    out.lambda = lambda;
    out.lambda0 = lambda0;
    out.rhs = scale * (rp.f * h.current() +
                       h.weighted_integral([&](double s) { return rp.g(std::clamp(s, -d, 0.0)); }));

    const double c = growth_constant(h, lambda0);
    double span = opt.T_max > 0.0 ? opt.T_max - h.t0()
                                  : std::min(opt.max_span, span_for_tail(c, lambda, lambda0,
                                                                         opt.tail_tolerance *
                                                                             std::max(1.0, std::abs(out.rhs))));
    span = std::max(span, h.dt());
    const std::size_t steps = steps_to_horizon(span, h.dt());
    const MeanPath mp = mean_path_steps(adj, h, steps);
    out.T_max = mp.horizon();
    out.tail_bound = scale * tail_bound(c, lambda, lambda0, double(steps) * h.dt());
    out.lhs = scale * discounted_integral(mp, lambda);
    out.gap = std::abs(out.lhs - out.rhs);

    if (opt.estimate_euler_error && h.n_steps() % 2 == 0) {
        const HistorySegment coarse = h.resampled(2.0 * h.dt());
        const MeanPath mc = mean_path_steps(adj, coarse, steps_to_horizon(double(steps) * h.dt(), coarse.dt()));
        out.euler_error_estimate = std::abs(out.lhs - scale * discounted_integral(mc, lambda));
    }
    return out;
}

inline LaplaceCheck laplace_check(const IncomeModel& model, const MarketParams& market, const HistorySegment& hist,
                                  double lambda, const LaplaceCheckOptions& opt = {}) {
    return laplace_check(risk_adjust(model, market), hist, lambda, opt);
}

}  // namespace sfde
