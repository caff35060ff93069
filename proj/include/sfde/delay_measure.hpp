#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sfde/errors.hpp"

namespace sfde {

// Signed measure of bounded variation on [-d, 0]: point masses plus a
// piecewise-constant density on a uniform grid of cells. integrate() applies
// the midpoint rule to the density; exponential moments are exact.
//
// Immutable after construction.
class DelayMeasure {
public:
    struct Atom {
        double loc;
        double mass;
    };

    static constexpr std::size_t kDefaultCells = 256;

    explicit DelayMeasure(double window) : window_(window) { validate_window(); }

    DelayMeasure(double window, std::vector<Atom> atoms, std::vector<double> density = {})
        : window_(window), atoms_(std::move(atoms)), density_(std::move(density)) {
        validate_window();
        const double tol = location_tolerance();
        for (auto& a : atoms_) {
            if (!std::isfinite(a.loc) || !std::isfinite(a.mass))
                throw InvalidArgumentError("delay measure: non-finite atom");
            if (a.loc < -window_ - tol || a.loc > tol)
                throw InvalidArgumentError("delay measure: atom at " + std::to_string(a.loc) +
                                           " outside [-d, 0]");
            a.loc = std::clamp(a.loc, -window_, 0.0);
        }
        for (double v : density_)
            if (!std::isfinite(v)) throw InvalidArgumentError("delay measure: non-finite density");
        normalize_atoms();
    }

    static DelayMeasure dirac(double window, double loc, double mass = 1.0) {
        return DelayMeasure(window, {{loc, mass}});
    }

    static DelayMeasure uniform(double window, double value, std::size_t cells = kDefaultCells) {
        return DelayMeasure(window, {}, std::vector<double>(cells, value));
    }

    double window() const { return window_; }
    const std::vector<Atom>& atoms() const { return atoms_; }
    const std::vector<double>& density() const { return density_; }
    std::size_t cells() const { return density_.size(); }
    double cell_width() const { return density_.empty() ? 0.0 : window_ / double(density_.size()); }
    double cell_lower(std::size_t i) const { return -window_ + double(i) * cell_width(); }

    bool is_zero() const {
        return atoms_.empty() && std::all_of(density_.begin(), density_.end(),
                                             [](double v) { return v == 0.0; });
    }

    bool is_nonnegative() const {
        return std::all_of(atoms_.begin(), atoms_.end(), [](const Atom& a) { return a.mass >= 0.0; }) &&
               std::all_of(density_.begin(), density_.end(), [](double v) { return v >= 0.0; });
    }

    double total_variation() const {
        double tv = 0.0;
        for (const auto& a : atoms_) tv += std::abs(a.mass);
        for (double v : density_) tv += std::abs(v) * cell_width();
        return tv;
    }

    double total_mass() const {
        double m = 0.0;
        for (const auto& a : atoms_) m += a.mass;
        for (double v : density_) m += v * cell_width();
        return m;
    }

    // Mass of the atom at `loc` (0 when there is none).
    double atom_mass_at(double loc) const {
        for (const auto& a : atoms_)
            if (std::abs(a.loc - loc) <= location_tolerance()) return a.mass;
        return 0.0;
    }

    double location_tolerance() const { return 1e-12 * std::max(1.0, window_); }

    bool same_window(const DelayMeasure& other) const {
        return std::abs(window_ - other.window_) <= 1e-12 * std::max(1.0, window_);
    }

    DelayMeasure scaled(double c) const {
        std::vector<Atom> atoms = atoms_;
        for (auto& a : atoms) a.mass *= c;
        std::vector<double> dens = density_;
        for (auto& v : dens) v *= c;
        return DelayMeasure(window_, std::move(atoms), std::move(dens));
    }

    // Variation measure |m|.
    DelayMeasure absolute() const {
        std::vector<Atom> atoms = atoms_;
        for (auto& a : atoms) a.mass = std::abs(a.mass);
        std::vector<double> dens = density_;
        for (auto& v : dens) v = std::abs(v);
        return DelayMeasure(window_, std::move(atoms), std::move(dens));
    }

    friend DelayMeasure operator+(const DelayMeasure& a, const DelayMeasure& b) {
        if (!a.same_window(b))
            throw WindowMismatchError("delay measures on windows " + std::to_string(a.window_) +
                                      " and " + std::to_string(b.window_));
        std::vector<Atom> atoms = a.atoms_;
        atoms.insert(atoms.end(), b.atoms_.begin(), b.atoms_.end());
        return DelayMeasure(a.window_, std::move(atoms), add_densities(a.density_, b.density_));
    }

    friend DelayMeasure operator*(double c, const DelayMeasure& m) { return m.scaled(c); }

private:
    void validate_window() const {
        if (!(window_ > 0.0) || !std::isfinite(window_))
            throw InvalidArgumentError("delay window must be positive and finite");
    }

    // Sort by location, merge coincident atoms, drop exact zeros.
    void normalize_atoms() {
        std::sort(atoms_.begin(), atoms_.end(), [](const Atom& x, const Atom& y) { return x.loc < y.loc; });
        std::vector<Atom> merged;
        const double tol = location_tolerance();
        for (const auto& a : atoms_) {
            if (!merged.empty() && std::abs(merged.back().loc - a.loc) <= tol)
                merged.back().mass += a.mass;
            else
                merged.push_back(a);
        }
        std::erase_if(merged, [](const Atom& a) { return a.mass == 0.0; });
        atoms_ = std::move(merged);
    }

    // Gridwise sum; a coarse grid is refined when its cell count divides the other.
    static std::vector<double> add_densities(const std::vector<double>& x, const std::vector<double>& y) {
        if (x.empty()) return y;
        if (y.empty()) return x;
        const std::size_t n = std::max(x.size(), y.size());
        if (n % x.size() != 0 || n % y.size() != 0)
            throw InvalidArgumentError("density grids with " + std::to_string(x.size()) + " and " +
                                       std::to_string(y.size()) + " cells are not nested");
        std::vector<double> out(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            out[i] = x[i / (n / x.size())] + y[i / (n / y.size())];
        return out;
    }

    double window_;
    std::vector<Atom> atoms_;
    std::vector<double> density_;
};

// Integral of f against m: atoms exactly, density by the midpoint rule.
template <class F>
double integrate(const DelayMeasure& m, F&& f) {
    double acc = 0.0;
    for (const auto& a : m.atoms()) acc += a.mass * f(a.loc);
    const double h = m.cell_width();
    for (std::size_t i = 0; i < m.cells(); ++i) {
        const double v = m.density()[i];
        if (v != 0.0) acc += v * h * f(m.cell_lower(i) + 0.5 * h);
    }
    return acc;
}

// int_lo^hi e^{a t} dt.
inline double exp_cell_integral(double a, double lo, double hi) {
    const double h = hi - lo;
    if (a == 0.0) return h;
    return std::exp(a * hi) * (-std::expm1(-a * h)) / a;
}

// int e^{lambda tau} m(dtau), exact for atoms and piecewise-constant densities.
inline double exp_moment(const DelayMeasure& m, double lambda) {
    double acc = 0.0;
    for (const auto& a : m.atoms()) acc += a.mass * std::exp(lambda * a.loc);
    const double h = m.cell_width();
    for (std::size_t i = 0; i < m.cells(); ++i) {
        const double v = m.density()[i];
        if (v != 0.0) {
            const double lo = m.cell_lower(i);
            acc += v * exp_cell_integral(lambda, lo, lo + h);
        }
    }
    return acc;
}

// Integral of exp(-lambda (s - tau)) over [-d, s] (closed at s). A density cell
// cut by s contributes its covered part.
inline double partial_exp_integral(const DelayMeasure& m, double lambda, double s) {
    const double d = m.window();
    const double tol = m.location_tolerance();
    if (s < -d - tol || s > tol)
        throw InvalidArgumentError("partial_exp_integral: s outside [-d, 0]");
    double acc = 0.0;
    for (const auto& a : m.atoms()) {
        if (a.loc > s + tol) break;
        acc += a.mass * std::exp(-lambda * (s - a.loc));
    }
    const double h = m.cell_width();
    for (std::size_t i = 0; i < m.cells(); ++i) {
        const double lo = m.cell_lower(i);
        if (lo >= s) break;
        const double hi = std::min(lo + h, s);
        const double v = m.density()[i];
        if (v != 0.0) acc += v * exp_cell_integral(lambda, lo - s, hi - s);
    }
    return acc;
}

// Phi = phi - sum_i kappa_i phi_i.
inline DelayMeasure combine_risk_adjusted(const DelayMeasure& phi, std::span<const DelayMeasure> phi_vec,
                                          std::span<const double> kappa) {
    if (phi_vec.size() != kappa.size())
        throw InvalidArgumentError("combine_risk_adjusted: " + std::to_string(phi_vec.size()) +
                                   " volatility measures but kappa has " + std::to_string(kappa.size()) +
                                   " entries");
    DelayMeasure out = phi;
    DelayMeasure scale = phi.absolute();
    for (std::size_t i = 0; i < phi_vec.size(); ++i) {
        if (!phi.same_window(phi_vec[i]))
            throw WindowMismatchError("combine_risk_adjusted: volatility measure " + std::to_string(i) +
                                      " has a different delay window");
        if (phi_vec[i].is_zero() || kappa[i] == 0.0) continue;
        out = out + phi_vec[i].scaled(-kappa[i]);
        scale = scale + phi_vec[i].absolute().scaled(std::abs(kappa[i]));
    }
    // Cancellation at rounding level gives an exact zero.
    const double eps = 8.0 * std::numeric_limits<double>::epsilon();
    std::vector<DelayMeasure::Atom> atoms = out.atoms();
    for (auto& a : atoms)
        if (std::abs(a.mass) <= eps * scale.atom_mass_at(a.loc)) a.mass = 0.0;
    std::vector<double> dens = out.density();
    for (std::size_t i = 0; i < dens.size(); ++i)
        if (std::abs(dens[i]) <= eps * scale.density()[i]) dens[i] = 0.0;
    return DelayMeasure(out.window(), std::move(atoms), std::move(dens));
}

// Lag weights for evaluating  int x(t + tau) m(dtau)  from samples x(t - k dt),
// k = 0..N with N = d / dt. Atoms interpolate linearly between the two
// neighbouring samples; the density mass inside each sample cell is applied to
// the cell's midpoint value (average of its two end samples).
struct DelayStencil {
    std::vector<std::size_t> lags;
    std::vector<double> weights;

    bool empty() const { return lags.empty(); }

    // `lagged(k)` returns x(t - k dt).
    template <class Lookup>
    double apply(Lookup&& lagged) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < lags.size(); ++i) acc += weights[i] * lagged(lags[i]);
        return acc;
    }
};

inline DelayStencil make_stencil(const DelayMeasure& m, double dt, std::size_t n_lags) {
    std::vector<double> w(n_lags + 1, 0.0);
    for (const auto& a : m.atoms()) {
        const double p = std::clamp(-a.loc / dt, 0.0, double(n_lags));
        std::size_t k = std::min(static_cast<std::size_t>(std::floor(p)), n_lags);
        double frac = p - double(k);
        if (frac < 1e-9) frac = 0.0;
        if (k == n_lags) frac = 0.0;
        w[k] += a.mass * (1.0 - frac);
        if (frac > 0.0) w[k + 1] += a.mass * frac;
    }
    if (m.cells() > 0) {
        // Sample cell j covers tau in [-(j+1) dt, -j dt].
        const double h = m.cell_width();
        for (std::size_t j = 0; j < n_lags; ++j) {
            const double lo = -double(j + 1) * dt;
            const double hi = -double(j) * dt;
            double mass = 0.0;
            const auto first = static_cast<std::size_t>(std::max(0.0, std::floor((lo + m.window()) / h)));
            for (std::size_t i = first; i < m.cells(); ++i) {
                const double clo = m.cell_lower(i);
                if (clo >= hi) break;
                const double overlap = std::min(hi, clo + h) - std::max(lo, clo);
                if (overlap > 0.0) mass += m.density()[i] * overlap;
            }
            w[j] += 0.5 * mass;
            w[j + 1] += 0.5 * mass;
        }
    }
    DelayStencil st;
    for (std::size_t k = 0; k <= n_lags; ++k) {
        if (w[k] != 0.0) {
            st.lags.push_back(k);
            st.weights.push_back(w[k]);
        }
    }
    return st;
}

}  // namespace sfde
