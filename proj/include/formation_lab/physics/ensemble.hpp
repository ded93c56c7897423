#pragma once

#include "formation_lab/errors.hpp"
#include "formation_lab/physics/kinetics.hpp"
#include "formation_lab/physics/ocv.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace formation_lab::physics {

/// Active fractions, remaining inventory (per cathode capacity), resistive
/// offset and N/P ratio. Defaults: the slow-formation state.
struct UtilizationState {
    double beta_c = 0.911;
    double beta_a = 0.854;
    double q_rem = 0.930;
    double v_shift = 0.014;
    double np_ratio = 1.16;

    void validate() const {
        for (double f : {beta_c, beta_a, q_rem})
            if (!(f > 0.0 && f <= 1.0)) throw ValidationError("utilization fractions must lie in (0, 1]");
        if (!(np_ratio > 0.0)) throw ValidationError("np_ratio must be positive");
        if (!std::isfinite(v_shift)) throw ValidationError("v_shift must be finite");
    }

    /// Anode filling that keeps the lithium inventory at q_rem.
    double anode_filling(double c_cathode) const {
        return (q_rem - beta_c * c_cathode) / (np_ratio * beta_a);
    }
};

enum class InitMode { loaded, ocv };

struct EnsembleConfig {
    std::string id = "sim";
    std::size_t n_particles = 2000;
    double k0_mean_c = 5e-7;
    double k0_mean_a = 1e-7;
    double sigma_c = 1.0;
    double sigma_a = 0.5;
    double activation_energy = 45.0;  ///< kJ/mol
    double temperature = 298.15;      ///< K
    double c_rate = 0.2;              ///< 1/h
    double dt = 1.0;                  ///< s
    std::uint64_t seed = 0;
    UtilizationState utilization;
    OcvModel ocv_c = OcvModel::cathode();
    OcvModel ocv_a = OcvModel::anode();
    double v_start = 4.4;
    double v_floor = 3.0;
    double q_limit = 1.0;  ///< stop once this much normalized capacity has passed
    double t_max = 0.0;    ///< s; 0 means twice the nominal discharge time
    bool apply_v_shift = false;
    InitMode init = InitMode::ocv;
    std::size_t record_every = 1;

    void validate() const {
        if (n_particles < 1) throw ValidationError("n_particles must be at least 1");
        if (!(sigma_c >= 0.0 && sigma_a >= 0.0)) throw ValidationError("sigma must be non-negative");
        if (!(dt > 0.0)) throw ValidationError("dt must be positive");
        if (!(k0_mean_c > 0.0 && k0_mean_a > 0.0)) throw ValidationError("k0 means must be positive");
        if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
        if (!(c_rate >= 0.0)) throw ValidationError("c_rate must be non-negative");
        if (c_rate == 0.0 && !(t_max > 0.0)) throw ValidationError("zero current needs t_max");
        if (record_every < 1) throw ValidationError("record_every must be at least 1");
        if (ocv_c.coeffs.empty() || ocv_a.coeffs.empty()) throw ValidationError("OCV coefficients missing");
        utilization.validate();
    }

    double duration_limit() const { return t_max > 0.0 ? t_max : 2.0 * 3600.0 / c_rate; }
};

enum class StopReason { voltage_floor, capacity_limit, time_limit, electrode_exhausted };

inline std::string to_string(StopReason r) {
    switch (r) {
    case StopReason::voltage_floor: return "voltage_floor";
    case StopReason::capacity_limit: return "capacity_limit";
    case StopReason::time_limit: return "time_limit";
    case StopReason::electrode_exhausted: return "electrode_exhausted";
    }
    return "unknown";
}

struct SimulatedCurve {
    std::string id;
    std::vector<double> time;
    std::vector<double> voltage;
    std::vector<double> q_norm;  ///< discharged capacity / cathode capacity
    std::vector<double> c_mean_cathode;
    std::vector<double> c_mean_anode;
    StopReason stop = StopReason::voltage_floor;
    double c_rate = 0.0;
    double min_filling = 1.0;  ///< over every particle and step
    double max_filling = 0.0;

    std::size_t size() const { return time.size(); }
    void push(double t, double v, double q, double cc, double ca) {
        time.push_back(t);
        voltage.push_back(v);
        q_norm.push_back(q);
        c_mean_cathode.push_back(cc);
        c_mean_anode.push_back(ca);
    }
};

namespace detail {

inline double mean(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Mean per-particle currents: the cathode fills at C/3600 per unit active
/// fraction, the anode empties at the same charge rate.
inline double cathode_mean_current(const EnsembleConfig& cfg) { return cfg.c_rate / 3600.0; }
inline double anode_mean_current(const EnsembleConfig& cfg) {
    return -cfg.c_rate / (3600.0 * cfg.utilization.np_ratio);
}

struct Potentials {
    double v_c = 0.0, v_a = 0.0;
};

inline Potentials potentials(const std::vector<double>& cc, const std::vector<double>& kc,
                             const std::vector<double>& ca, const std::vector<double>& ka,
                             const EnsembleConfig& cfg) {
    const auto n_c = static_cast<double>(cc.size()), n_a = static_cast<double>(ca.size());
    return {solve_electrode_voltage(cc, kc, n_c * cathode_mean_current(cfg), cfg.temperature, cfg.ocv_c,
                                    cfg.activation_energy),
            solve_electrode_voltage(ca, ka, n_a * anode_mean_current(cfg), cfg.temperature, cfg.ocv_a,
                                    cfg.activation_energy)};
}

} // namespace detail

/// Uniform electrode fillings that put the cell at cfg.v_start, either
/// under the discharge current or at open circuit.
struct InitialState {
    double c_cathode = 0.0;
    double c_anode = 0.0;
};

inline InitialState initial_fillings(const EnsembleConfig& cfg, const std::vector<double>& kc,
                                     const std::vector<double>& ka) {
    const auto& u = cfg.utilization;
    const double shift = cfg.apply_v_shift ? u.v_shift : 0.0;
    auto open_circuit = [&](double c_c) {
        return ocv_eval(cfg.ocv_c, c_c) - ocv_eval(cfg.ocv_a, u.anode_filling(c_c)) - shift;
    };
    auto loaded = [&](double c_c) {
        const std::vector<double> cc(kc.size(), c_c), ca(ka.size(), u.anode_filling(c_c));
        const auto p = detail::potentials(cc, kc, ca, ka, cfg);
        return p.v_c - p.v_a - shift;
    };
    auto bisect = [&](auto&& f, double lo, double hi) {
        for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
            const double mid = 0.5 * (lo + hi);
            (f(mid) - cfg.v_start > 0.0 ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    };
    // Cathode filling range keeping both electrodes strictly inside (0, 1).
    constexpr double eps = 1e-9;
    const double lo = std::max(eps, (u.q_rem - u.np_ratio * u.beta_a * (1.0 - eps)) / u.beta_c);
    const double hi = std::min(1.0 - eps, (u.q_rem - u.np_ratio * u.beta_a * eps) / u.beta_c);
    if (!(lo < hi) || !(open_circuit(lo) > cfg.v_start) || !(open_circuit(hi) < cfg.v_start))
        throw RootNotBracketed("initial_fillings: starting voltage not reachable at open circuit");
    double c_c = bisect(open_circuit, lo, hi);

    if (cfg.init == InitMode::loaded && cfg.c_rate > 0.0) {
        // The loaded voltage lies below the open-circuit one and collapses
        // again at very low filling, so walk down from the open-circuit root
        // to the nearest crossing.
        double upper = c_c, lower = c_c;
        const double step = 1e-3;
        while (true) {
            lower = std::max(lo, upper - step);
            if (loaded(lower) > cfg.v_start) break;
            if (lower == lo) throw RootNotBracketed("initial_fillings: starting voltage not reachable under load");
            upper = lower;
        }
        c_c = bisect(loaded, lower, upper);
    }
    return {c_c, u.anode_filling(c_c)};
}

/// Forward-Euler discharge of the two particle ensembles at constant current.
inline SimulatedCurve simulate_discharge(const EnsembleConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    const auto kc = sample_rate_constants(cfg.k0_mean_c, cfg.sigma_c, cfg.n_particles, rng);
    const auto ka = sample_rate_constants(cfg.k0_mean_a, cfg.sigma_a, cfg.n_particles, rng);
    const auto init = initial_fillings(cfg, kc, ka);
    std::vector<double> cc(cfg.n_particles, init.c_cathode), ca(cfg.n_particles, init.c_anode);

    const auto& u = cfg.utilization;
    const double shift = cfg.apply_v_shift ? u.v_shift : 0.0;
    const double arr = arrhenius(cfg.temperature, cfg.activation_energy);
    const double b = 1.0 / (kBoltzmannOverCharge * cfg.temperature);
    const double t_end = cfg.duration_limit();
    constexpr double tol = 1e-9;

    SimulatedCurve out;
    out.id = cfg.id;
    out.c_rate = cfg.c_rate;
    std::vector<double> uc, ua;
    double t = 0.0;
    for (std::size_t step = 0;; ++step) {
        detail::Potentials p;
        try {
            const auto n = static_cast<double>(cfg.n_particles);
            p.v_c = solve_electrode_voltage(cc, kc, n * detail::cathode_mean_current(cfg), cfg.temperature,
                                            cfg.ocv_c, cfg.activation_energy, &uc);
            p.v_a = solve_electrode_voltage(ca, ka, n * detail::anode_mean_current(cfg), cfg.temperature,
                                            cfg.ocv_a, cfg.activation_energy, &ua);
        } catch (const RootNotBracketed&) {
            out.stop = StopReason::electrode_exhausted;
            break;
        }
        const double v = p.v_c - p.v_a - shift;
        const double mc = detail::mean(cc), ma = detail::mean(ca);
        const double q = u.beta_c * (mc - init.c_cathode);
        const bool last = v <= cfg.v_floor || q >= cfg.q_limit || t >= t_end;
        if (last || step % cfg.record_every == 0) out.push(t, v, q, mc, ma);
        if (v <= cfg.v_floor) {
            out.stop = StopReason::voltage_floor;
            break;
        }
        if (q >= cfg.q_limit) {
            out.stop = StopReason::capacity_limit;
            break;
        }
        if (t >= t_end) {
            out.stop = StopReason::time_limit;
            break;
        }
        auto advance = [&](std::vector<double>& c, const std::vector<double>& k, const std::vector<double>& ocv,
                           double vj, double beta) {
            for (std::size_t i = 0; i < c.size(); ++i) {
                const double f = filling_prefactor(c[i]);
                if (f == 0.0) continue;
                c[i] += cfg.dt * k[i] * arr * f * std::sinh(b * (ocv[i] - vj)) / beta;
                if (c[i] < -tol || c[i] > 1.0 + tol)
                    throw StepSizeError("particle filling left [0, 1] at t = " + std::to_string(t) +
                                        " s; reduce dt");
                out.min_filling = std::min(out.min_filling, c[i]);
                out.max_filling = std::max(out.max_filling, c[i]);
            }
        };
        advance(cc, kc, uc, p.v_c, u.beta_c);
        advance(ca, ka, ua, p.v_a, u.beta_a);
        t = static_cast<double>(step + 1) * cfg.dt;
    }
    return out;
}

/// Relative mismatch between the charge moved through each electrode and
/// the imposed current integral; the larger of the two.
inline double conservation_error(const SimulatedCurve& s, const UtilizationState& u) {
    if (s.size() < 2 || s.c_rate == 0.0) return 0.0;
    const double imposed = s.c_rate * s.time.back() / 3600.0;
    const double cath = u.beta_c * (s.c_mean_cathode.back() - s.c_mean_cathode.front());
    const double anode = -u.np_ratio * u.beta_a * (s.c_mean_anode.back() - s.c_mean_anode.front());
    return std::max(std::abs(cath - imposed), std::abs(anode - imposed)) / imposed;
}

inline void to_json(nlohmann::json& j, const UtilizationState& u) {
    j = {{"beta_c", u.beta_c}, {"beta_a", u.beta_a}, {"q_rem", u.q_rem}, {"v_shift", u.v_shift},
         {"np_ratio", u.np_ratio}};
}

inline void from_json(const nlohmann::json& j, UtilizationState& u) {
    u.beta_c = j.value("beta_c", u.beta_c);
    u.beta_a = j.value("beta_a", u.beta_a);
    u.q_rem = j.value("q_rem", u.q_rem);
    u.v_shift = j.value("v_shift", u.v_shift);
    u.np_ratio = j.value("np_ratio", u.np_ratio);
}

inline void to_json(nlohmann::json& j, const OcvModel& m) { j = {{"coeffs", m.coeffs}, {"t_ref", m.t_ref}}; }

inline void from_json(const nlohmann::json& j, OcvModel& m) {
    m.coeffs = j.at("coeffs").get<std::vector<double>>();
    m.t_ref = j.value("t_ref", kReferenceTemperature);
}

inline void to_json(nlohmann::json& j, const EnsembleConfig& c) {
    j = {{"id", c.id},
         {"n_particles", c.n_particles},
         {"k0_mean_c", c.k0_mean_c},
         {"k0_mean_a", c.k0_mean_a},
         {"sigma_c", c.sigma_c},
         {"sigma_a", c.sigma_a},
         {"activation_energy", c.activation_energy},
         {"temperature", c.temperature},
         {"c_rate", c.c_rate},
         {"dt", c.dt},
         {"seed", c.seed},
         {"utilization", c.utilization},
         {"ocv_c", c.ocv_c},
         {"ocv_a", c.ocv_a},
         {"v_start", c.v_start},
         {"v_floor", c.v_floor},
         {"q_limit", c.q_limit},
         {"t_max", c.t_max},
         {"apply_v_shift", c.apply_v_shift},
         {"init", c.init == InitMode::ocv ? "ocv" : "loaded"},
         {"record_every", c.record_every}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, EnsembleConfig& c) {
    static const std::vector<std::string> known{
        "id",      "n_particles", "k0_mean_c", "k0_mean_a", "sigma_c", "sigma_a",     "activation_energy",
        "temperature", "c_rate",  "dt",        "seed",      "utilization", "ocv_c",   "ocv_a",
        "v_start", "v_floor",     "q_limit",   "t_max",     "apply_v_shift", "init",  "record_every"};
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("unknown simulation key: " + key);
    c.id = j.value("id", c.id);
    c.n_particles = j.value("n_particles", c.n_particles);
    c.k0_mean_c = j.value("k0_mean_c", c.k0_mean_c);
    c.k0_mean_a = j.value("k0_mean_a", c.k0_mean_a);
    c.sigma_c = j.value("sigma_c", c.sigma_c);
    c.sigma_a = j.value("sigma_a", c.sigma_a);
    c.activation_energy = j.value("activation_energy", c.activation_energy);
    c.temperature = j.value("temperature", c.temperature);
    c.c_rate = j.value("c_rate", c.c_rate);
    c.dt = j.value("dt", c.dt);
    c.seed = j.value("seed", c.seed);
    if (j.contains("utilization")) c.utilization = j["utilization"].get<UtilizationState>();
    if (j.contains("ocv_c")) c.ocv_c = j["ocv_c"].get<OcvModel>();
    if (j.contains("ocv_a")) c.ocv_a = j["ocv_a"].get<OcvModel>();
    c.v_start = j.value("v_start", c.v_start);
    c.v_floor = j.value("v_floor", c.v_floor);
    c.q_limit = j.value("q_limit", c.q_limit);
    c.t_max = j.value("t_max", c.t_max);
    c.apply_v_shift = j.value("apply_v_shift", c.apply_v_shift);
    const auto init = j.value("init", std::string(c.init == InitMode::ocv ? "ocv" : "loaded"));
    if (init != "loaded" && init != "ocv") throw ConfigError("init must be \"loaded\" or \"ocv\"");
    c.init = init == "ocv" ? InitMode::ocv : InitMode::loaded;
    c.record_every = j.value("record_every", c.record_every);
}

} // namespace formation_lab::physics
