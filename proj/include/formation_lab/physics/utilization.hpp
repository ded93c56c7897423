#pragma once

#include "formation_lab/errors.hpp"
#include "formation_lab/physics/ensemble.hpp"
#include "formation_lab/physics/ocv.hpp"

#include <cmath>

namespace formation_lab::physics {

struct UtilizationOptions {
    double v_start = 4.4;
    double v_floor = 3.0;
    double dq = 1e-4;  ///< capacity step, per cathode capacity
    double q_limit = 1.0;
};

/// Kinetics-free discharge: both electrodes follow their open-circuit
/// curves, linked by the inventory balance. Steps in capacity, so the
/// resulting Q(V) does not depend on the rate, which only sets the time axis.
inline SimulatedCurve utilization_simulate(const UtilizationState& u, const OcvModel& ocv_c,
                                           const OcvModel& ocv_a, double c_rate,
                                           const UtilizationOptions& opt = {}) {
    u.validate();
    if (!(c_rate > 0.0)) throw ValidationError("utilization_simulate: rate must be positive");
    if (!(opt.dq > 0.0)) throw ValidationError("utilization_simulate: dq must be positive");
    auto cell = [&](double c_c, double c_a) { return ocv_eval(ocv_c, c_c) - ocv_eval(ocv_a, c_a) - u.v_shift; };

    // Starting cathode filling at open circuit.
    constexpr double eps = 1e-9;
    double lo = std::max(eps, (u.q_rem - u.np_ratio * u.beta_a * (1.0 - eps)) / u.beta_c);
    double hi = std::min(1.0 - eps, (u.q_rem - u.np_ratio * u.beta_a * eps) / u.beta_c);
    if (!(lo < hi) || !(cell(lo, u.anode_filling(lo)) > opt.v_start) ||
        !(cell(hi, u.anode_filling(hi)) < opt.v_start))
        throw RootNotBracketed("utilization_simulate: starting voltage not reachable");
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        (cell(mid, u.anode_filling(mid)) > opt.v_start ? lo : hi) = mid;
    }
    const double c0 = 0.5 * (lo + hi), a0 = u.anode_filling(c0);

    SimulatedCurve out;
    out.id = "utilization";
    out.c_rate = c_rate;
    for (std::size_t k = 0;; ++k) {
        const double q = static_cast<double>(k) * opt.dq;
        const double c_c = c0 + q / u.beta_c;
        const double c_a = a0 - q / (u.np_ratio * u.beta_a);
        if (!(c_c < 1.0 && c_a > 0.0)) {
            out.stop = StopReason::electrode_exhausted;
            break;
        }
        const double v = cell(c_c, c_a);
        out.push(q * 3600.0 / c_rate, v, q, c_c, c_a);
        out.min_filling = std::min({out.min_filling, c_c, c_a});
        out.max_filling = std::max({out.max_filling, c_c, c_a});
        if (v <= opt.v_floor) {
            out.stop = StopReason::voltage_floor;
            break;
        }
        if (q >= opt.q_limit) {
            out.stop = StopReason::capacity_limit;
            break;
        }
    }
    return out;
}

} // namespace formation_lab::physics
