#pragma once

#include "formation_lab/errors.hpp"
#include "formation_lab/ingest/csv_io.hpp"
#include "formation_lab/ingest/step_extraction.hpp"
#include "formation_lab/ingest/types.hpp"
#include "formation_lab/parallel.hpp"
#include "formation_lab/physics/ensemble.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace formation_lab::synthetic {

inline constexpr std::string_view kSimHeader = "time_s,voltage_v,q_norm,c_mean_cathode,c_mean_anode";

inline void write_sim_csv(const std::filesystem::path& path, const physics::SimulatedCurve& s) {
    using ingest::csv::format;
    std::ofstream out(path, std::ios::binary);
    out << kSimHeader << '\n';
    for (std::size_t i = 0; i < s.size(); ++i)
        out << format(s.time[i]) << ',' << format(s.voltage[i]) << ',' << format(s.q_norm[i]) << ','
            << format(s.c_mean_cathode[i]) << ',' << format(s.c_mean_anode[i]) << '\n';
}

/// Reads a `sim_<id>.csv`; c_rate is not stored in the file.
inline physics::SimulatedCurve read_sim_csv(const std::filesystem::path& path, std::string id, double c_rate) {
    const auto lines = ingest::csv::read_lines(path);
    ingest::csv::expect_header(lines, kSimHeader, path);
    physics::SimulatedCurve s;
    s.id = std::move(id);
    s.c_rate = c_rate;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = ingest::csv::split(lines[i]);
        if (f.size() != 5) throw ParseError("expected 5 fields, got " + std::to_string(f.size()), i + 1);
        using ingest::csv::to_double;
        s.push(to_double(f[0], i + 1), to_double(f[1], i + 1), to_double(f[2], i + 1), to_double(f[3], i + 1),
               to_double(f[4], i + 1));
    }
    return s;
}

/// One constant-current discharge step (cycle 1, step 1) in the raw time
/// series layout. Samples that do not lower the voltage are dropped so the
/// step has a monotone voltage axis.
inline ingest::CellTimeSeries to_time_series(const physics::SimulatedCurve& s, std::string cell_id,
                                             double capacity_ah, double temp_c) {
    ingest::CellTimeSeries out;
    out.cell_id = std::move(cell_id);
    const double current = -s.c_rate * capacity_ah;
    double energy = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!out.samples.empty() && !(s.voltage[i] < out.samples.back().voltage_v)) continue;
        ingest::Sample m;
        m.time_s = s.time[i];
        m.current_a = current;
        m.voltage_v = s.voltage[i];
        m.capacity_ah = s.q_norm[i] * capacity_ah;
        if (!out.samples.empty()) {
            const auto& prev = out.samples.back();
            energy += 0.5 * (prev.voltage_v + m.voltage_v) * (m.capacity_ah - prev.capacity_ah);
        }
        m.energy_wh = energy;
        m.temp_c = temp_c;
        m.cycle_index = 1;
        m.step_index = 1;
        out.samples.push_back(m);
    }
    return out;
}

/// What cycle life depends on: Q(V2) - Q(V1) or the mean of Q over the window.
enum class SignalKind { difference, mean };

inline std::string to_string(SignalKind k) { return k == SignalKind::difference ? "difference" : "mean"; }

inline SignalKind parse_signal_kind(std::string_view s) {
    if (s == "difference") return SignalKind::difference;
    if (s == "mean") return SignalKind::mean;
    throw ConfigError("unknown signal kind: " + std::string(s));
}

struct CorpusConfig {
    std::size_t n_protocols = 30;
    std::size_t replicates = 2;
    std::vector<double> temperatures_c{25.0, 40.0, 55.0};
    std::size_t n_particles = 200;
    double dt = 2.0;
    double c_rate = 0.2;
    double capacity_ah = 0.24;
    double k0_log_sd = 0.3;        ///< protocol-level rate-constant spread
    double sigma_spread = 0.0;     ///< protocol-level relative spread of the log-rate widths
    double utilization_sd = 0.02;  ///< cell-level beta_c, beta_a and q_rem spread
    double ocv_coeff_sd = 0.0;     ///< V; protocol-level jitter of every non-constant OCV coefficient
    double c_rate_spread = 0.0;    ///< relative; protocol-level uniform spread of the discharge rate
    ingest::GridRange range{3.0, 3.9};
    double window_lo = 3.24;  ///< hidden window
    double window_hi = 3.30;
    SignalKind signal = SignalKind::difference;
    double life_mean = 1000.0;
    double life_slope = 200.0;  ///< cycles per standard deviation of the signal
    double noise_fraction = 0.05;  ///< noise sd over the signal range
    std::uint64_t seed = 0;
};

struct Corpus {
    ingest::Dataset dataset;
    ingest::CurveMatrix curves;  ///< Q(V) of step B, ln cycle life
    std::vector<physics::SimulatedCurve> sims;
    Eigen::VectorXd signal;  ///< planted window statistic per cell
};

/// Physics-simulated cells whose cycle life is linear in a statistic of
/// Q(V) over the hidden window, plus Gaussian noise. Protocol p runs at
/// temperatures_c[(p-1) mod T] and sits in outer group 1 + (p-1) mod 5.
inline Corpus generate_corpus(const CorpusConfig& cfg) {
    if (cfg.n_protocols < 5 || cfg.n_protocols > 62) throw ConfigError("synthetic corpus needs 5..62 protocols");
    if (cfg.replicates < 1 || cfg.temperatures_c.empty()) throw ConfigError("synthetic corpus is empty");
    if (!(cfg.window_lo >= cfg.range.lo && cfg.window_hi <= cfg.range.hi && cfg.window_lo < cfg.window_hi))
        throw ConfigError("hidden window must lie inside the grid range");
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> g;

    Corpus out;
    std::vector<physics::EnsembleConfig> sims;
    for (std::size_t p = 1; p <= cfg.n_protocols; ++p) {
        const double temp = cfg.temperatures_c[(p - 1) % cfg.temperatures_c.size()];
        const double kc = std::exp(cfg.k0_log_sd * g(rng)), ka = std::exp(cfg.k0_log_sd * g(rng));
        std::uniform_real_distribution<double> spread(1.0 - cfg.sigma_spread, 1.0 + cfg.sigma_spread);
        const double sc = spread(rng), sa = spread(rng);
        std::uniform_real_distribution<double> rate(1.0 - cfg.c_rate_spread, 1.0 + cfg.c_rate_spread);
        const double c_rate = cfg.c_rate * rate(rng);
        auto ocv_c = physics::OcvModel::cathode(), ocv_a = physics::OcvModel::anode();
        for (auto* m : {&ocv_c, &ocv_a})
            for (std::size_t k = 1; k < m->coeffs.size(); ++k) m->coeffs[k] += cfg.ocv_coeff_sd * g(rng);
        for (std::size_t r = 0; r < cfg.replicates; ++r) {
            physics::EnsembleConfig e;
            char id[32];
            std::snprintf(id, sizeof id, "syn_%03zu", out.dataset.entries.size() + 1);
            e.id = id;
            e.n_particles = cfg.n_particles;
            e.dt = cfg.dt;
            e.c_rate = c_rate;
            e.ocv_c = ocv_c;
            e.ocv_a = ocv_a;
            e.temperature = temp + 273.15;
            e.k0_mean_c *= kc;
            e.k0_mean_a *= ka;
            e.sigma_c *= sc;
            e.sigma_a *= sa;
            e.utilization.beta_a = std::clamp(e.utilization.beta_a + cfg.utilization_sd * g(rng), 0.5, 1.0);
            e.utilization.beta_c = std::clamp(e.utilization.beta_c + cfg.utilization_sd * g(rng), 0.5, 1.0);
            e.utilization.q_rem = std::clamp(e.utilization.q_rem + cfg.utilization_sd * g(rng), 0.5, 1.0);
            e.seed = rng();
            sims.push_back(e);
            ingest::CellManifestEntry m;
            m.cell_id = e.id;
            m.protocol_id = static_cast<int>(p);
            m.cc1_a = m.cc2_a = c_rate * cfg.capacity_ah;
            m.temp_c = temp;
            m.outer_group = 1 + static_cast<int>((p - 1) % 5);
            out.dataset.entries.push_back(m);
        }
    }
    out.sims.resize(sims.size());
    parallel_for(sims.size(), [&](std::size_t i) { out.sims[i] = physics::simulate_discharge(sims[i]); });
    for (std::size_t i = 0; i < sims.size(); ++i)
        out.dataset.series.push_back(
            to_time_series(out.sims[i], sims[i].id, cfg.capacity_ah, out.dataset.entries[i].temp_c));

    // Life needs the curves first; build them with a placeholder.
    for (auto& e : out.dataset.entries) e.cycle_life = 1;
    out.curves = ingest::build_curve_matrix(out.dataset, ingest::InputCurve::QB_V, true, cfg.range);
    const auto& grid = out.curves.grid;
    const auto n = out.curves.rows();
    std::vector<Eigen::Index> inside;
    for (std::size_t j = 0; j < grid.size(); ++j)
        if (grid[j] >= cfg.window_lo && grid[j] <= cfg.window_hi) inside.push_back(static_cast<Eigen::Index>(j));
    if (inside.size() < 2) throw ConfigError("hidden window covers fewer than two grid points");
    if (cfg.signal == SignalKind::difference) {
        out.signal = out.curves.x.col(inside.back()) - out.curves.x.col(inside.front());
    } else {
        out.signal = Eigen::VectorXd::Zero(n);
        for (auto j : inside) out.signal += out.curves.x.col(j);
        out.signal /= static_cast<double>(inside.size());
    }
    const double mean = out.signal.mean();
    const double sd = std::sqrt((out.signal.array() - mean).square().mean());
    if (!(sd > 0.0)) throw DegenerateScale("synthetic corpus: window signal is constant");
    const Eigen::VectorXd clean = (cfg.life_mean + cfg.life_slope * (out.signal.array() - mean) / sd).matrix();
    const double noise_sd = cfg.noise_fraction * (clean.maxCoeff() - clean.minCoeff());
    for (Eigen::Index i = 0; i < n; ++i) {
        const double life = std::max(1.0, std::round(clean(i) + noise_sd * g(rng)));
        out.dataset.entries[static_cast<std::size_t>(i)].cycle_life = static_cast<int>(life);
        out.curves.y(i) = std::log(life);
    }
    return out;
}

inline void to_json(nlohmann::json& j, const CorpusConfig& c) {
    j = {{"n_protocols", c.n_protocols}, {"replicates", c.replicates}, {"temperatures_c", c.temperatures_c},
         {"n_particles", c.n_particles}, {"dt", c.dt}, {"c_rate", c.c_rate}, {"capacity_ah", c.capacity_ah},
         {"k0_log_sd", c.k0_log_sd}, {"sigma_spread", c.sigma_spread}, {"utilization_sd", c.utilization_sd},
         {"ocv_coeff_sd", c.ocv_coeff_sd}, {"c_rate_spread", c.c_rate_spread}, {"grid", {c.range.lo, c.range.hi}},
         {"window", {c.window_lo, c.window_hi}}, {"signal", to_string(c.signal)}, {"life_mean", c.life_mean},
         {"life_slope", c.life_slope},
         {"noise_fraction", c.noise_fraction}, {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, CorpusConfig& c) {
    static const std::vector<std::string> keys{"n_protocols", "replicates", "temperatures_c", "n_particles",
                                               "dt", "c_rate", "capacity_ah", "k0_log_sd", "sigma_spread",
                                               "utilization_sd", "ocv_coeff_sd", "c_rate_spread", "grid",
                                               "window", "signal", "life_mean", "life_slope", "noise_fraction",
                                               "seed"};
    for (const auto& [k, v] : j.items())
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw ConfigError("unknown synth key: " + k);
    try {
        c.n_protocols = j.value("n_protocols", c.n_protocols);
        c.replicates = j.value("replicates", c.replicates);
        c.temperatures_c = j.value("temperatures_c", c.temperatures_c);
        c.n_particles = j.value("n_particles", c.n_particles);
        c.dt = j.value("dt", c.dt);
        c.c_rate = j.value("c_rate", c.c_rate);
        c.capacity_ah = j.value("capacity_ah", c.capacity_ah);
        c.k0_log_sd = j.value("k0_log_sd", c.k0_log_sd);
        c.sigma_spread = j.value("sigma_spread", c.sigma_spread);
        c.utilization_sd = j.value("utilization_sd", c.utilization_sd);
        c.ocv_coeff_sd = j.value("ocv_coeff_sd", c.ocv_coeff_sd);
        c.c_rate_spread = j.value("c_rate_spread", c.c_rate_spread);
        if (j.contains("grid")) c.range = {j["grid"].at(0).get<double>(), j["grid"].at(1).get<double>()};
        if (j.contains("window")) {
            c.window_lo = j["window"].at(0).get<double>();
            c.window_hi = j["window"].at(1).get<double>();
        }
        if (j.contains("signal")) c.signal = parse_signal_kind(j["signal"].get<std::string>());
        c.life_mean = j.value("life_mean", c.life_mean);
        c.life_slope = j.value("life_slope", c.life_slope);
        c.noise_fraction = j.value("noise_fraction", c.noise_fraction);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed synth config: ") + e.what());
    }
}

} // namespace formation_lab::synthetic
