#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "sfde/errors.hpp"

namespace sfde {

// Number of grid steps of size dt in a window d; throws unless dt divides d.
inline std::size_t steps_in_window(double d, double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgumentError("time step must be positive");
    const double ratio = d / dt;
    const double n = std::round(ratio);
    if (n < 1.0 || std::abs(ratio - n) > 1e-9 * std::max(1.0, ratio))
        throw InvalidArgumentError("time step " + std::to_string(dt) + " does not divide the delay window " +
                                   std::to_string(d));
    return static_cast<std::size_t>(n);
}

// Path segment on [t0 - d, t0] sampled on a uniform grid. values.back() is the
// current level X(t0); values.front() is X(t0 - d). Between nodes the path is
// reconstructed by linear interpolation.
class HistorySegment {
public:
    HistorySegment(double t0, double dt, std::vector<double> values)
        : t0_(t0), dt_(dt), values_(std::move(values)) {
        if (values_.size() < 2) throw InvalidArgumentError("history needs at least two samples");
        if (!(dt_ > 0.0) || !std::isfinite(dt_)) throw InvalidArgumentError("history step must be positive");
        for (double v : values_)
            if (!std::isfinite(v)) throw InvalidArgumentError("history contains a non-finite value");
    }

    // x0 at s = 0, x1(s) for s in [-d, 0).
    template <class F>
    static HistorySegment from_function(double t0, double d, double dt, double x0, F&& x1) {
        const std::size_t n = steps_in_window(d, dt);
        std::vector<double> v(n + 1);
        for (std::size_t k = 0; k < n; ++k) v[k] = x1(-d + double(k) * dt);
        v[n] = x0;
        return HistorySegment(t0, dt, std::move(v));
    }

    static HistorySegment flat(double t0, double d, double dt, double x0, double x1) {
        return from_function(t0, d, dt, x0, [x1](double) { return x1; });
    }
    static HistorySegment flat(double t0, double d, double dt, double level) {
        return flat(t0, d, dt, level, level);
    }

    double t0() const { return t0_; }
    double dt() const { return dt_; }
    double window() const { return dt_ * double(values_.size() - 1); }
    std::size_t n_steps() const { return values_.size() - 1; }
    const std::vector<double>& values() const { return values_; }
    double current() const { return values_.back(); }

    // Value at offset s in [-window, 0].
    double at(double s) const {
        const double p = (s + window()) / dt_;
        if (p <= 0.0) return values_.front();
        const auto k = static_cast<std::size_t>(std::floor(p));
        if (k >= n_steps()) return values_.back();
        const double frac = p - double(k);
        return values_[k] + frac * (values_[k + 1] - values_[k]);
    }

    // The last d of history, on this grid. Throws CoverageError if shorter than d.
    HistorySegment covering(double d) const {
        const double tol = 1e-9 * std::max(1.0, d);
        if (window() < d - tol)
            throw CoverageError("history covers " + std::to_string(window()) + " years but the delay window is " +
                                std::to_string(d));
        const std::size_t n = steps_in_window(d, dt_);
        if (n == n_steps()) return *this;
        return HistorySegment(t0_, dt_, std::vector<double>(values_.end() - std::ptrdiff_t(n + 1), values_.end()));
    }

    // Same segment on a grid with step dt (linear interpolation).
    HistorySegment resampled(double dt) const {
        if (dt == dt_) return *this;
        const std::size_t n = steps_in_window(window(), dt);
        std::vector<double> v(n + 1);
        for (std::size_t k = 0; k <= n; ++k) v[k] = at(-window() + double(k) * dt);
        v[n] = current();
        return HistorySegment(t0_, dt, std::move(v));
    }

    HistorySegment scaled(double c) const {
        std::vector<double> v = values_;
        for (auto& x : v) x *= c;
        return HistorySegment(t0_, dt_, std::move(v));
    }

    // Trapezoid rule of w(s) x(t0 + s) over [-window, 0] on the history grid.
    template <class W>
    double weighted_integral(W&& w) const {
        const std::size_t n = n_steps();
        double acc = 0.0;
        for (std::size_t k = 0; k <= n; ++k) {
            const double s = -window() + double(k) * dt_;
            const double term = w(s) * values_[k];
            acc += (k == 0 || k == n) ? 0.5 * term : term;
        }
        return acc * dt_;
    }

private:
    double t0_;
    double dt_;
    std::vector<double> values_;
};

}  // namespace sfde
