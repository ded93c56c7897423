#pragma once

#include "formation_lab/errors.hpp"
#include "formation_lab/physics/ocv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

namespace formation_lab::physics {

/// exp(-E_A/R (1/T - 1/298)), E_A in kJ/mol.
inline double arrhenius(double temperature, double activation_kj) {
    return std::exp(-activation_kj * 1e3 / kGasConstant * (1.0 / temperature - 1.0 / kReferenceTemperature));
}

/// (1 - c) sqrt(c); zero outside the open unit interval.
inline double filling_prefactor(double c) { return c > 0.0 && c < 1.0 ? (1.0 - c) * std::sqrt(c) : 0.0; }

/// ICET current density. Positive when eta < 0, i.e. the particle fills.
inline double icet_current_density(double c, double eta, double temperature, double k0,
                                   double activation_kj) {
    if (!(c >= 0.0 && c <= 1.0)) throw DomainError("icet_current_density: filling fraction outside [0, 1]");
    return k0 * arrhenius(temperature, activation_kj) * filling_prefactor(c) *
           std::sinh(-eta / (kBoltzmannOverCharge * temperature));
}

/// ln k0 ~ Normal(ln k0_mean, sigma).
inline std::vector<double> sample_rate_constants(double k0_mean, double sigma, std::size_t n,
                                                 std::mt19937_64& rng) {
    if (n == 0) throw ValidationError("sample_rate_constants: n must be positive");
    if (!(k0_mean > 0.0) || !(sigma >= 0.0)) throw ValidationError("sample_rate_constants: bad parameters");
    std::vector<double> k(n, k0_mean);
    if (sigma == 0.0) return k;
    std::normal_distribution<double> g(std::log(k0_mean), sigma);
    for (auto& v : k) v = std::exp(g(rng));
    return k;
}

inline std::vector<double> sample_rate_constants(double k0_mean, double sigma, std::size_t n,
                                                 std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sample_rate_constants(k0_mean, sigma, n, rng);
}

/// Summed ICET current of an ensemble at electrode potential v, with each
/// particle's eta = v - V_ocv(c).
inline double ensemble_current(std::span<const double> c, std::span<const double> k0, double v,
                               double temperature, const OcvModel& ocv, double activation_kj) {
    const double arr = arrhenius(temperature, activation_kj);
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        const double f = filling_prefactor(c[i]);
        if (f == 0.0) continue;
        s += k0[i] * arr * f * std::sinh((ocv_eval(ocv, c[i]) - v) / (kBoltzmannOverCharge * temperature));
    }
    return s;
}

namespace detail {

inline bool residual_ok(double residual, double target) {
    return target == 0.0 ? std::abs(residual) < 1e-12 : std::abs(residual) < 1e-10 * std::abs(target);
}

} // namespace detail

/// Electrode potential at which the summed particle current equals
/// `target_sum`. Writing sinh through z = exp(-b V) turns the balance into
/// a quadratic, so the root is explicit; Newton polishes it and a bracketed
/// bisection takes over when the residual is still too large.
inline double solve_electrode_voltage(std::span<const double> c, std::span<const double> k0,
                                      double target_sum, double temperature, const OcvModel& ocv,
                                      double activation_kj, std::vector<double>* ocv_out = nullptr) {
    if (c.size() != k0.size()) throw ShapeError("solve_electrode_voltage: state and rate lengths differ");
    const double b = 1.0 / (kBoltzmannOverCharge * temperature);
    const double arr = arrhenius(temperature, activation_kj);
    std::vector<double> u(c.size(), 0.0), w(c.size(), 0.0);
    double umin = std::numeric_limits<double>::infinity(), umax = -umin;
    for (std::size_t i = 0; i < c.size(); ++i) {
        w[i] = k0[i] * arr * filling_prefactor(c[i]);
        if (w[i] == 0.0) continue;
        u[i] = ocv_eval(ocv, c[i]);
        umin = std::min(umin, u[i]);
        umax = std::max(umax, u[i]);
    }
    if (ocv_out) *ocv_out = u;
    if (!(umax >= umin)) throw RootNotBracketed("solve_electrode_voltage: no particle can react");

    auto current = [&](double v, double* slope) {
        double s = 0.0, d = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (w[i] == 0.0) continue;
            const double x = b * (u[i] - v);
            s += w[i] * std::sinh(x);
            d -= w[i] * b * std::cosh(x);
        }
        if (slope) *slope = d;
        return s - target_sum;
    };

    const double uref = 0.5 * (umin + umax);
    double v = std::numeric_limits<double>::quiet_NaN();
    if (b * (umax - umin) < 600.0) {
        double a = 0.0, bb = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (w[i] == 0.0) continue;
            a += 0.5 * w[i] * std::exp(b * (u[i] - uref));
            bb += 0.5 * w[i] * std::exp(-b * (u[i] - uref));
        }
        // a z - bb / z = target, z = exp(-b (v - uref)); the stable root form.
        const double disc = std::sqrt(target_sum * target_sum + 4.0 * a * bb);
        const double z = target_sum >= 0.0 ? (target_sum + disc) / (2.0 * a) : 2.0 * bb / (disc - target_sum);
        v = uref - std::log(z) / b;
        for (int it = 0; it < 4 && std::isfinite(v); ++it) {
            double d = 0.0;
            const double r = current(v, &d);
            if (detail::residual_ok(r, target_sum)) return v;
            if (!(d < 0.0)) break;
            v -= r / d;
        }
        if (std::isfinite(v) && detail::residual_ok(current(v, nullptr), target_sum)) return v;
    }

    // The current falls monotonically in v.
    double lo = std::isfinite(v) ? v - 1e-3 : umin, hi = std::isfinite(v) ? v + 1e-3 : umax;
    double step = 1e-3;
    for (int it = 0; current(lo, nullptr) < 0.0; ++it, step *= 2.0) {
        if (it > 60) throw RootNotBracketed("solve_electrode_voltage: lower bracket not found");
        lo -= step;
    }
    step = 1e-3;
    for (int it = 0; current(hi, nullptr) > 0.0; ++it, step *= 2.0) {
        if (it > 60) throw RootNotBracketed("solve_electrode_voltage: upper bracket not found");
        hi += step;
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double r = current(mid, nullptr);
        if (detail::residual_ok(r, target_sum) || mid == lo || mid == hi) return mid;
        (r > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace formation_lab::physics
