#pragma once

#include "formation_lab/errors.hpp"
#include "formation_lab/feature_design.hpp"
#include "formation_lab/ingest.hpp"
#include "formation_lab/model_eval.hpp"
#include "formation_lab/physics.hpp"
#include "formation_lab/synthetic.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

/// Configuration and file plumbing shared by the command-line front end.
namespace formation_lab::pipeline {

namespace fs = std::filesystem;

inline constexpr const char* kVersion =
#ifdef FORMATION_LAB_VERSION
    FORMATION_LAB_VERSION;
#else
    "0.1.0";
#endif

struct EvalRun {
    model_eval::FeatureSource source = model_eval::FeatureSource::designed;
    model_eval::ModelFamily model = model_eval::ModelFamily::linear;
};

struct PipelineConfig {
    fs::path manifest;
    fs::path data_dir;
    ingest::InputCurve input_curve = ingest::InputCurve::QB_V;
    ingest::GridRange voltage_range{3.0, 4.4};
    bool log_life = true;
    std::uint64_t seed = 0;
    int outer_loop = 1;          ///< 1-based, used by `design`
    double sim_capacity_ah = 0.24;  ///< scale for cells stored as sim_<id>.csv
    feature_design::DesignConfig design;
    fused_lasso::Options solver;
    std::vector<EvalRun> runs{{model_eval::FeatureSource::none, model_eval::ModelFamily::dummy},
                              {model_eval::FeatureSource::designed, model_eval::ModelFamily::linear},
                              {model_eval::FeatureSource::designed, model_eval::ModelFamily::nonlinear}};
    std::vector<double> l1_grid = model_eval::logspace(1e-4, 10.0, 15);
    std::vector<double> l2_grid = model_eval::logspace(1e-4, 10.0, 15);
    std::vector<int> degrees{1, 2, 3};
    std::vector<physics::EnsembleConfig> simulations;
    synthetic::CorpusConfig synth;
    nlohmann::json source;  ///< the effective JSON, hashed into run_meta.json
};

/// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string fnv1a_hex(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& keys, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [k, _] : j.items())
        if (std::find(keys.begin(), keys.end(), k) == keys.end())
            throw ConfigError("unknown key '" + k + "' in " + where);
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

inline void parse_design(const nlohmann::json& j, feature_design::DesignConfig& d) {
    reject_unknown(j,
                   {"lambda_count", "lambda_min_ratio", "lambda_grid", "jump_threshold", "th_merge",
                    "merge_on_validation", "th_x", "th_y", "one_se_rule", "dtw_ratio_max", "path_length_max"},
                   "design");
    d.lambda_count = j.value("lambda_count", d.lambda_count);
    d.lambda_min_ratio = j.value("lambda_min_ratio", d.lambda_min_ratio);
    d.lambda_grid = j.value("lambda_grid", d.lambda_grid);
    d.jump_threshold = j.value("jump_threshold", d.jump_threshold);
    d.th_merge = j.value("th_merge", d.th_merge);
    d.merge_on_validation = j.value("merge_on_validation", d.merge_on_validation);
    d.th_x = j.value("th_x", d.th_x);
    d.th_y = j.value("th_y", d.th_y);
    d.constraints.one_se_rule = j.value("one_se_rule", d.constraints.one_se_rule);
    d.constraints.dtw_ratio_max = j.value("dtw_ratio_max", d.constraints.dtw_ratio_max);
    d.constraints.path_length_max = j.value("path_length_max", d.constraints.path_length_max);
    if (d.lambda_count < 1) throw ConfigError("lambda_count must be positive");
    for (double l : d.lambda_grid)
        if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("lambda grid values must be non-negative");
    std::sort(d.lambda_grid.begin(), d.lambda_grid.end(), std::greater<>());
    if (std::adjacent_find(d.lambda_grid.begin(), d.lambda_grid.end()) != d.lambda_grid.end())
        throw ConfigError("lambda grid has repeated values");
    for (double t : {d.th_merge, d.th_x, d.th_y, d.jump_threshold, d.constraints.dtw_ratio_max,
                     d.constraints.path_length_max})
        if (!(t > 0.0)) throw ConfigError("design thresholds must be positive");
}

inline void parse_evaluate(const nlohmann::json& j, PipelineConfig& c) {
    reject_unknown(j, {"runs", "l1_grid", "l2_grid", "degrees"}, "evaluate");
    if (j.contains("runs")) {
        c.runs.clear();
        for (const auto& r : j["runs"]) {
            reject_unknown(r, {"features", "model"}, "evaluate.runs");
            EvalRun run;
            run.model = model_eval::parse_model_family(r.value("model", std::string("linear")));
            run.source = model_eval::parse_feature_source(
                r.value("features", std::string(run.model == model_eval::ModelFamily::dummy ? "none" : "designed")));
            c.runs.push_back(run);
        }
        if (c.runs.empty()) throw ConfigError("evaluate.runs is empty");
    }
    c.l1_grid = j.value("l1_grid", c.l1_grid);
    c.l2_grid = j.value("l2_grid", c.l2_grid);
    c.degrees = j.value("degrees", c.degrees);
    if (c.l1_grid.empty() || c.l2_grid.empty() || c.degrees.empty())
        throw ConfigError("evaluate grids must be nonempty");
}

/// `{"base": {...}, "temperatures_c": [...]}` or `{"runs": [{...}, ...]}`.
/// Runs without their own seed take the global one.
inline void parse_simulate(const nlohmann::json& j, PipelineConfig& c) {
    reject_unknown(j, {"base", "temperatures_c", "runs"}, "simulate");
    c.simulations.clear();
    auto with_seed = [&](nlohmann::json r) {
        if (!r.contains("seed")) r["seed"] = c.seed;
        return r.get<physics::EnsembleConfig>();
    };
    if (j.contains("runs")) {
        for (const auto& r : j["runs"]) c.simulations.push_back(with_seed(r));
    } else {
        const nlohmann::json base = j.value("base", nlohmann::json::object());
        const auto temps = j.value("temperatures_c", std::vector<double>{});
        if (temps.empty()) {
            c.simulations.push_back(with_seed(base));
        } else {
            for (double t : temps) {
                auto r = base;
                char id[32];
                std::snprintf(id, sizeof id, "%s_%gC", base.value("id", std::string("sim")).c_str(), t);
                r["id"] = id;
                r["temperature"] = t + 273.15;
                c.simulations.push_back(with_seed(r));
            }
        }
    }
    for (const auto& s : c.simulations) {
        s.validate();
        if (s.id.empty() || s.id.find_first_of("/\\") != std::string::npos)
            throw ConfigError("simulation id '" + s.id + "' is not a valid file stem");
    }
}

} // namespace detail

/// Parses a pipeline config; relative paths resolve against `base_dir`.
inline PipelineConfig parse_config(const nlohmann::json& j, const fs::path& base_dir = {}) {
    PipelineConfig c;
    c.source = j;
    try {
        detail::reject_unknown(j,
                               {"manifest", "data_dir", "input_curve", "voltage_range", "log_life", "seed",
                                "outer_loop", "sim_capacity_ah", "design", "solver", "evaluate", "simulate",
                                "synth"},
                               "config");
        if (j.contains("manifest")) c.manifest = detail::resolve(base_dir, j["manifest"].get<std::string>());
        if (j.contains("data_dir")) c.data_dir = detail::resolve(base_dir, j["data_dir"].get<std::string>());
        else if (!c.manifest.empty()) c.data_dir = c.manifest.parent_path();
        if (j.contains("input_curve")) c.input_curve = ingest::parse_input_curve(j["input_curve"].get<std::string>());
        if (j.contains("voltage_range"))
            c.voltage_range = {j["voltage_range"].at(0).get<double>(), j["voltage_range"].at(1).get<double>()};
        if (!(c.voltage_range.lo < c.voltage_range.hi)) throw ConfigError("voltage_range must be increasing");
        c.log_life = j.value("log_life", c.log_life);
        c.seed = j.value("seed", c.seed);
        c.outer_loop = j.value("outer_loop", c.outer_loop);
        if (c.outer_loop < 1 || c.outer_loop > ingest::FoldPlan::kOuterFolds)
            throw ConfigError("outer_loop must be in 1..5");
        c.sim_capacity_ah = j.value("sim_capacity_ah", c.sim_capacity_ah);
        if (!(c.sim_capacity_ah > 0.0)) throw ConfigError("sim_capacity_ah must be positive");
        if (j.contains("design")) detail::parse_design(j["design"], c.design);
        if (j.contains("solver")) {
            const auto& s = j["solver"];
            detail::reject_unknown(s, {"objective_tolerance", "max_iterations", "kkt_tolerance"}, "solver");
            c.solver.objective_tolerance = s.value("objective_tolerance", c.solver.objective_tolerance);
            c.solver.max_iterations = s.value("max_iterations", c.solver.max_iterations);
            c.solver.kkt_tolerance = s.value("kkt_tolerance", c.solver.kkt_tolerance);
        }
        if (j.contains("evaluate")) detail::parse_evaluate(j["evaluate"], c);
        if (j.contains("simulate")) detail::parse_simulate(j["simulate"], c);
        c.synth.seed = c.seed;
        if (j.contains("synth")) c.synth = j["synth"].get<synthetic::CorpusConfig>();
        if (j.contains("synth") && !j["synth"].contains("seed")) c.synth.seed = c.seed;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    return c;
}

inline nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    out << j.dump(2) << '\n';
}

/// Manifest plus per-cell data. A cell may be stored as `<cell_id>.csv` or,
/// for simulated cells, as `sim_<cell_id>.csv`; the latter runs at
/// cc1_a / sim_capacity_ah C.
inline ingest::Dataset load_dataset(const PipelineConfig& c) {
    if (c.manifest.empty()) throw ConfigError("config has no manifest");
    if (!fs::exists(c.manifest)) throw ConfigError("manifest not found: " + c.manifest.string());
    ingest::Dataset ds;
    ds.entries = ingest::read_manifest(c.manifest);
    for (const auto& e : ds.entries) {
        const auto plain = c.data_dir / (e.cell_id + ".csv");
        const auto sim = c.data_dir / ("sim_" + e.cell_id + ".csv");
        ingest::CellTimeSeries s;
        if (fs::exists(plain)) {
            s = ingest::read_time_series(plain, e.cell_id);
        } else if (fs::exists(sim)) {
            const double rate = e.cc1_a / c.sim_capacity_ah;
            s = synthetic::to_time_series(synthetic::read_sim_csv(sim, e.cell_id, rate), e.cell_id,
                                          c.sim_capacity_ah, e.temp_c);
        } else {
            throw MissingCell("no time series for cell " + e.cell_id + " in " + c.data_dir.string());
        }
        ingest::validate(s);
        ds.series.push_back(std::move(s));
    }
    return ds;
}

inline ingest::CurveMatrix curves(const ingest::Dataset& ds, const PipelineConfig& c) {
    return ingest::build_curve_matrix(ds, c.input_curve, c.log_life, c.voltage_range);
}

/// `cell_id,protocol_id,cycle_life,<grid values>`.
inline void write_curves_csv(const fs::path& path, const ingest::CurveMatrix& m) {
    using ingest::csv::format;
    std::ofstream out(path, std::ios::binary);
    out << "cell_id,protocol_id,cycle_life";
    for (double g : m.grid) out << ',' << format(g);
    out << '\n';
    const Eigen::VectorXd life = m.cycle_life();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        out << m.cell_ids[k] << ',' << m.protocol_ids[k] << ',' << format(std::round(life(i)));
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << format(m.x(i, j));
        out << '\n';
    }
}

inline nlohmann::json folds_json(const ingest::FoldPlan& plan) {
    nlohmann::json j;
    j["outer_folds"] = plan.outer_folds;
    auto inner = nlohmann::json::array();
    for (const auto& m : plan.inner_fold_of) {
        nlohmann::json o = nlohmann::json::object();
        for (const auto& [protocol, fold] : m) o[std::to_string(protocol)] = fold;
        inner.push_back(o);
    }
    j["inner_fold_of"] = inner;
    return j;
}

/// Contents of a `features.csv`.
struct FeatureTable {
    std::vector<std::string> cell_ids;
    std::vector<std::string> names;
    Eigen::MatrixXd values;
    Eigen::VectorXd cycle_life;
};

inline FeatureTable read_features_csv(const fs::path& path) {
    const auto lines = ingest::csv::read_lines(path);
    if (lines.empty()) throw ParseError("empty features file " + path.string());
    const auto head = ingest::csv::split(lines[0]);
    if (head.size() < 2 || head.front() != "cell_id" || head.back() != "cycle_life")
        throw ParseError("features header must start with cell_id and end with cycle_life", 1);
    FeatureTable t;
    for (std::size_t k = 1; k + 1 < head.size(); ++k) t.names.emplace_back(head[k]);
    std::vector<std::vector<double>> rows;
    std::vector<double> life;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = ingest::csv::split(lines[i]);
        if (f.size() != head.size()) throw ParseError("wrong field count", i + 1);
        t.cell_ids.emplace_back(f[0]);
        std::vector<double> r;
        for (std::size_t k = 1; k + 1 < f.size(); ++k) r.push_back(ingest::csv::to_double(f[k], i + 1));
        rows.push_back(std::move(r));
        life.push_back(ingest::csv::to_double(f.back(), i + 1));
    }
    t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.names.size()));
    t.cycle_life.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t k = 0; k < t.names.size(); ++k)
            t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
        t.cycle_life(static_cast<Eigen::Index>(i)) = life[i];
    }
    return t;
}

inline nlohmann::json run_meta(const std::string& command, const PipelineConfig& c, unsigned threads) {
    return {{"command", command},
            {"config_hash", fnv1a_hex(c.source.dump())},
            {"seed", c.seed},
            {"threads", threads},
            {"version", kVersion},
            {"libraries",
             {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)},
              {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}}};
}

inline nlohmann::json error_json(const Error& e) {
    static constexpr const char* kinds[] = {"config", "data", "numerical"};
    return {{"error", e.name()}, {"kind", kinds[static_cast<int>(e.kind())]}, {"message", e.what()}};
}

inline int exit_code(ErrorKind k) {
    switch (k) {
    case ErrorKind::config: return 2;
    case ErrorKind::data: return 3;
    case ErrorKind::numerical: return 4;
    }
    return 4;
}

} // namespace formation_lab::pipeline
