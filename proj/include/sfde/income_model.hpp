#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sfde/delay_measure.hpp"
#include "sfde/errors.hpp"
#include "sfde/market.hpp"

namespace sfde {

// Delayed labour income
//   dX = [mu0 X(t) + int X(t+s) phi(ds)] dt + [X(t) sigma0 + (int X(t+s) phi_i(ds))_i]^T dZ
// with all delay measures on the common window [-d, 0].
class IncomeModel {
public:
    IncomeModel(double mu0, std::vector<double> sigma0, DelayMeasure phi, std::vector<DelayMeasure> phi_vec)
        : mu0_(mu0), sigma0_(std::move(sigma0)), phi_(std::move(phi)), phi_vec_(std::move(phi_vec)) {
        if (!std::isfinite(mu0_)) throw InvalidArgumentError("income model: mu0 must be finite");
        if (sigma0_.size() != phi_vec_.size())
            throw InvalidArgumentError("income model: sigma0 has " + std::to_string(sigma0_.size()) +
                                       " entries but there are " + std::to_string(phi_vec_.size()) +
                                       " volatility delay measures");
        for (std::size_t i = 0; i < phi_vec_.size(); ++i)
            if (!phi_.same_window(phi_vec_[i]))
                throw WindowMismatchError("income model: volatility measure " + std::to_string(i) +
                                          " is on a different delay window");
    }

    // Geometric income without delay.
    static IncomeModel no_delay(double mu0, std::vector<double> sigma0, double d) {
        std::vector<DelayMeasure> vol(sigma0.size(), DelayMeasure(d));
        return IncomeModel(mu0, std::move(sigma0), DelayMeasure(d), std::move(vol));
    }

    double mu0() const { return mu0_; }
    const std::vector<double>& sigma0() const { return sigma0_; }
    const DelayMeasure& phi() const { return phi_; }
    const std::vector<DelayMeasure>& phi_vec() const { return phi_vec_; }
    double window() const { return phi_.window(); }
    std::size_t n() const { return sigma0_.size(); }

private:
    double mu0_;
    std::vector<double> sigma0_;
    DelayMeasure phi_;
    std::vector<DelayMeasure> phi_vec_;
};

// The income model seen under the risk-adjusted measure, with the discount
// rate used for valuation (r, or r + delta with Poisson exit).
struct RiskAdjustedIncome {
    double mu0 = 0.0;
    double sigma0_dot_kappa = 0.0;
    double drift = 0.0;  // mu0 - sigma0^T kappa
    double discount_rate = 0.0;
    DelayMeasure Phi;
};

inline RiskAdjustedIncome risk_adjust(const IncomeModel& model, const MarketParams& market) {
    if (model.n() != market.n())
        throw InvalidArgumentError("income model has " + std::to_string(model.n()) +
                                   " volatility loadings but the market has " + std::to_string(market.n()) +
                                   " assets");
    const auto kappa = market.kappa_span();
    double s0k = 0.0;
    for (std::size_t i = 0; i < model.n(); ++i) s0k += model.sigma0()[i] * kappa[i];
    return RiskAdjustedIncome{model.mu0(), s0k, model.mu0() - s0k, market.r(),
                              combine_risk_adjusted(model.phi(), model.phi_vec(), kappa)};
}

inline RiskAdjustedIncome with_discount_rate(RiskAdjustedIncome adj, double rate) {
    adj.discount_rate = rate;
    return adj;
}

// K(lambda) = lambda - (mu0 - sigma0^T kappa) - int e^{lambda tau} Phi(dtau).
inline double char_function(const RiskAdjustedIncome& adj, double lambda) {
    return lambda - adj.drift - exp_moment(adj.Phi, lambda);
}

inline double char_function(const IncomeModel& model, const MarketParams& market, double lambda) {
    return char_function(risk_adjust(model, market), lambda);
}

// K = K(discount rate).
inline double constant_K(const RiskAdjustedIncome& adj) { return char_function(adj, adj.discount_rate); }

inline double constant_K(const IncomeModel& model, const MarketParams& market) {
    return constant_K(risk_adjust(model, market));
}

struct HypothesisReport {
    bool phi_nonnegative = false;
    bool K_positive = false;
    double K = 0.0;

    bool ok() const { return phi_nonnegative && K_positive; }

    std::string describe() const {
        std::string s = "Phi non-negative: ";
        s += phi_nonnegative ? "yes" : "NO";
        s += "; K = " + std::to_string(K) + (K_positive ? " > 0" : " <= 0 (must be strictly positive)");
        return s;
    }
};

class HypothesisError : public Error {
public:
    explicit HypothesisError(HypothesisReport report)
        : Error("valuation hypothesis violated: " + report.describe()), report_(report) {}
    const HypothesisReport& report() const { return report_; }

private:
    HypothesisReport report_;
};

inline HypothesisReport check_hypothesis(const RiskAdjustedIncome& adj) {
    HypothesisReport rep;
    rep.phi_nonnegative = adj.Phi.is_nonnegative();
    rep.K = constant_K(adj);
    rep.K_positive = rep.K > 0.0;
    return rep;
}

inline HypothesisReport check_hypothesis(const IncomeModel& model, const MarketParams& market) {
    return check_hypothesis(risk_adjust(model, market));
}

inline void require_hypothesis(const RiskAdjustedIncome& adj) {
    const auto rep = check_hypothesis(adj);
    if (!rep.ok()) throw HypothesisError(rep);
}

// The unique real root lambda0 of K, which is also the spectral bound of the
// delay generator when Phi >= 0. K is strictly increasing with K(+-inf) = +-inf,
// so a bracket always exists; it is widened geometrically and then bisected
// down to adjacent doubles.
inline double spectral_bound(const RiskAdjustedIncome& adj) {
    if (!adj.Phi.is_nonnegative())
        throw SignedMeasureError("spectral_bound: Phi is signed, K is not guaranteed monotone");
    const double mass = adj.Phi.total_mass();
    const double width = std::max(mass, 1e-3);
    double lo = adj.drift - width;
    double hi = adj.drift + width;
    double step = width;
    while (char_function(adj, lo) > 0.0) {
        step *= 2.0;
        lo -= step;
    }
    step = width;
    while (char_function(adj, hi) < 0.0) {
        step *= 2.0;
        hi += step;
    }
    for (int it = 0; it < 2000; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double k = char_function(adj, mid);
        if (k == 0.0) return mid;
        (k < 0.0 ? lo : hi) = mid;
    }
    return std::abs(char_function(adj, lo)) <= std::abs(char_function(adj, hi)) ? lo : hi;
}

inline double spectral_bound(const IncomeModel& model, const MarketParams& market) {
    return spectral_bound(risk_adjust(model, market));
}

// G(s) = int_{-d}^{s} e^{-r (s - tau)} Phi(dtau), with r the discount rate.
inline double kernel_G(const RiskAdjustedIncome& adj, double s) {
    return partial_exp_integral(adj.Phi, adj.discount_rate, s);
}

inline double kernel_G(const IncomeModel& model, const MarketParams& market, double s) {
    return kernel_G(risk_adjust(model, market), s);
}

// f(lambda) = 1 / K(lambda),  g(lambda, s) = int_{-d}^{s} e^{-lambda (s - tau)} Phi(dtau) / K(lambda).
struct ResolventPair {
    double lambda = 0.0;
    double K = 0.0;
    double f = 0.0;
    DelayMeasure Phi{1.0};

    double g(double s) const { return partial_exp_integral(Phi, lambda, s) * f; }
};

inline constexpr double kResolventPoleThreshold = 1e-14;

inline ResolventPair resolvent_pair(const RiskAdjustedIncome& adj, double lambda) {
    const double k = char_function(adj, lambda);
    if (std::abs(k) < kResolventPoleThreshold)
        throw ResolventPoleError("resolvent: K(" + std::to_string(lambda) + ") = 0, lambda is in the spectrum");
    return ResolventPair{lambda, k, 1.0 / k, adj.Phi};
}

inline ResolventPair resolvent_pair(const IncomeModel& model, const MarketParams& market, double lambda) {
    return resolvent_pair(risk_adjust(model, market), lambda);
}

}  // namespace sfde
