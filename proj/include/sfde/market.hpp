#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sfde/errors.hpp"

namespace sfde {

// Complete Black-Scholes market: money market at rate r and n risky assets
// dS = diag(S) (mu dt + sigma dZ). The market price of risk is cached.
class MarketParams {
public:
    MarketParams(double r, Eigen::VectorXd mu, Eigen::MatrixXd sigma)
        : r_(r), mu_(std::move(mu)), sigma_(std::move(sigma)) {
        const auto n = mu_.size();
        if (n == 0) throw InvalidArgumentError("market: at least one risky asset is required");
        if (sigma_.rows() != n || sigma_.cols() != n)
            throw InvalidArgumentError("market: sigma must be " + std::to_string(n) + "x" + std::to_string(n));
        if (!std::isfinite(r_) || !mu_.allFinite() || !sigma_.allFinite())
            throw InvalidArgumentError("market: non-finite parameter");
        Eigen::LLT<Eigen::MatrixXd> llt(sigma_ * sigma_.transpose());
        if (llt.info() != Eigen::Success)
            throw InvalidArgumentError("market: sigma sigma^T is not positive definite");
        const Eigen::VectorXd excess = mu_ - Eigen::VectorXd::Constant(n, r_);
        kappa_ = sigma_.transpose().fullPivLu().solve(excess);
        kappa_std_.assign(kappa_.data(), kappa_.data() + n);
    }

    // Scalar convenience: one asset with drift mu and volatility sigma.
    static MarketParams single(double r, double mu, double sigma) {
        return MarketParams(r, Eigen::VectorXd::Constant(1, mu), Eigen::MatrixXd::Constant(1, 1, sigma));
    }

    double r() const { return r_; }
    const Eigen::VectorXd& mu() const { return mu_; }
    const Eigen::MatrixXd& sigma() const { return sigma_; }
    std::size_t n() const { return static_cast<std::size_t>(mu_.size()); }

    const Eigen::VectorXd& kappa() const { return kappa_; }
    std::span<const double> kappa_span() const { return kappa_std_; }
    double kappa_norm2() const { return kappa_.squaredNorm(); }

private:
    double r_;
    Eigen::VectorXd mu_;
    Eigen::MatrixXd sigma_;
    Eigen::VectorXd kappa_;
    std::vector<double> kappa_std_;
};

// kappa = (sigma^T)^{-1} (mu - r 1).
inline const Eigen::VectorXd& market_price_of_risk(const MarketParams& mp) { return mp.kappa(); }

// Brownian path on a uniform grid; values[k] = Z(k dt), values[0] = 0.
struct BrownianPath {
    double dt = 0.0;
    std::vector<Eigen::VectorXd> values;
};

// xi(t) = exp(-(r + |kappa|^2 / 2) t - kappa^T Z(t)), the exact solution of the
// state-price density SDE.
inline double deflator_at(const MarketParams& mp, double t, const Eigen::VectorXd& z) {
    return std::exp(-(mp.r() + 0.5 * mp.kappa_norm2()) * t - mp.kappa().dot(z));
}

inline std::vector<double> deflator_path(const MarketParams& mp, const BrownianPath& z_path) {
    std::vector<double> xi;
    xi.reserve(z_path.values.size());
    for (std::size_t k = 0; k < z_path.values.size(); ++k) {
        if (static_cast<std::size_t>(z_path.values[k].size()) != mp.n())
            throw InvalidArgumentError("deflator_path: Brownian dimension does not match the market");
        xi.push_back(deflator_at(mp, double(k) * z_path.dt, z_path.values[k]));
    }
    if (!xi.empty() && z_path.values.front().norm() != 0.0)
        throw InvalidArgumentError("deflator_path: Brownian path must start at 0");
    return xi;
}

// Exact GBM asset prices along a Brownian path. Not used by the valuation;
// provided for demos and plots.
inline std::vector<Eigen::VectorXd> asset_path(const MarketParams& mp, const Eigen::VectorXd& s0,
                                               const BrownianPath& z_path) {
    const Eigen::VectorXd drift =
        mp.mu() - 0.5 * (mp.sigma() * mp.sigma().transpose()).diagonal();
    std::vector<Eigen::VectorXd> out;
    out.reserve(z_path.values.size());
    for (std::size_t k = 0; k < z_path.values.size(); ++k) {
        const double t = double(k) * z_path.dt;
        const Eigen::VectorXd log_growth = drift * t + mp.sigma() * z_path.values[k];
        out.push_back(s0.array() * log_growth.array().exp());
    }
    return out;
}

}  // namespace sfde
