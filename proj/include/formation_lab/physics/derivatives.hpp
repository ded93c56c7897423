#pragma once

#include "formation_lab/errors.hpp"
#include "formation_lab/physics/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace formation_lab::physics {

/// Centered moving average. Near the ends the window shrinks symmetrically,
/// which keeps linear data unchanged.
inline std::vector<double> moving_average(const std::vector<double>& y, std::size_t window) {
    if (window == 0 || window > y.size()) throw WindowError("smoothing window larger than the curve");
    if (window % 2 == 0) throw WindowError("smoothing window must be odd");
    const std::size_t half = window / 2, n = y.size();
    std::vector<double> out(n);
    // Direct window sums: running prefix sums lose digits that the second
    // difference would amplify by 1/h^2.
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t h = std::min({half, i, n - 1 - i});
        double s = 0.0;
        for (std::size_t k = i - h; k <= i + h; ++k) s += y[k];
        out[i] = s / static_cast<double>(2 * h + 1);
    }
    return out;
}

/// First or second derivative on a uniform grid: smoothing, then central
/// differences with second-order one-sided formulas at the ends.
inline std::vector<double> differentiate_curve(const std::vector<double>& x, const std::vector<double>& y,
                                               int order, std::size_t window = 1) {
    if (x.size() != y.size()) throw ShapeError("differentiate_curve: lengths differ");
    if (order != 1 && order != 2) throw ValidationError("differentiate_curve: order must be 1 or 2");
    const std::size_t n = y.size();
    if (n < 4) throw WindowError("differentiate_curve: need at least four points");
    const double h = (x.back() - x.front()) / static_cast<double>(n - 1);
    for (std::size_t i = 1; i < n; ++i)
        if (std::abs(x[i] - x[i - 1] - h) > 1e-9 * std::max(1.0, std::abs(h)))
            throw ValidationError("differentiate_curve: grid is not uniform");
    const auto s = moving_average(y, window);
    std::vector<double> d(n);
    if (order == 1) {
        for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (s[i + 1] - s[i - 1]) / (2.0 * h);
        d[0] = (-3.0 * s[0] + 4.0 * s[1] - s[2]) / (2.0 * h);
        d[n - 1] = (3.0 * s[n - 1] - 4.0 * s[n - 2] + s[n - 3]) / (2.0 * h);
    } else {
        const double h2 = h * h;
        for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (s[i + 1] - 2.0 * s[i] + s[i - 1]) / h2;
        d[0] = (2.0 * s[0] - 5.0 * s[1] + 4.0 * s[2] - s[3]) / h2;
        d[n - 1] = (2.0 * s[n - 1] - 5.0 * s[n - 2] + 4.0 * s[n - 3] - s[n - 4]) / h2;
    }
    return d;
}

/// Normalized discharged capacity on a uniform voltage grid, by linear
/// interpolation along the falling voltage trace. Samples that do not
/// lower the voltage are skipped; grid points outside the trace are clamped.
inline std::vector<double> capacity_on_voltage_grid(const SimulatedCurve& s, const std::vector<double>& grid) {
    std::vector<double> v, q;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (v.empty() || s.voltage[i] < v.back()) {
            v.push_back(s.voltage[i]);
            q.push_back(s.q_norm[i]);
        }
    if (v.size() < 2) throw ValidationError("capacity_on_voltage_grid: trace has fewer than two points");
    std::reverse(v.begin(), v.end());
    std::reverse(q.begin(), q.end());
    std::vector<double> out(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double x = std::clamp(grid[g], v.front(), v.back());
        auto it = std::upper_bound(v.begin(), v.end(), x);
        if (it == v.end()) {
            out[g] = q.back();
            continue;
        }
        const auto k = static_cast<std::size_t>(it - v.begin());
        if (k == 0) {
            out[g] = q.front();
            continue;
        }
        const double w = (x - v[k - 1]) / (v[k] - v[k - 1]);
        out[g] = q[k - 1] + w * (q[k] - q[k - 1]);
    }
    return out;
}

/// max - min of the second derivative of smoothed Q(V) inside [v_lo, v_hi].
inline double second_derivative_amplitude(const std::vector<double>& grid, const std::vector<double>& q,
                                          double v_lo, double v_hi, std::size_t window = 21) {
    const auto d2 = differentiate_curve(grid, q, 2, window);
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (grid[i] >= v_lo && grid[i] <= v_hi) {
            lo = std::min(lo, d2[i]);
            hi = std::max(hi, d2[i]);
        }
    if (!(hi >= lo)) throw WindowError("second_derivative_amplitude: band outside the grid");
    return hi - lo;
}

} // namespace formation_lab::physics
