// Command-line front end: ingest, design, evaluate, simulate, diagnose,
// report, synth.

#include "formation_lab/formation_lab.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>

namespace fs = std::filesystem;
using namespace formation_lab;
using nlohmann::json;

namespace {

struct Options {
    std::string config;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::string lambda_grid;
    std::string input_curve;
    std::optional<int> outer_loop;
    std::string features;
};

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const auto comma = s.find(',', pos);
        const auto field = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        try {
            std::size_t used = 0;
            out.push_back(std::stod(field, &used));
            if (used != field.size()) throw std::invalid_argument(field);
        } catch (const std::exception&) {
            throw ConfigError("--lambda-grid: not a number: '" + field + "'");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

/// Config file with command-line overrides folded in.
pipeline::PipelineConfig load_config(const Options& o) {
    json j = json::object();
    fs::path base;
    if (!o.config.empty()) {
        j = pipeline::read_json(o.config);
        base = fs::path(o.config).parent_path();
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    if (o.seed) {
        j["seed"] = *o.seed;
        if (j.contains("synth") && j["synth"].is_object()) j["synth"].erase("seed");
        if (j.contains("simulate") && j["simulate"].is_object()) {
            auto& s = j["simulate"];
            if (s.contains("base") && s["base"].is_object()) s["base"].erase("seed");
            if (s.contains("runs") && s["runs"].is_array())
                for (auto& r : s["runs"])
                    if (r.is_object()) r.erase("seed");
        }
    }
    if (!o.lambda_grid.empty()) j["design"]["lambda_grid"] = parse_list(o.lambda_grid);
    if (!o.input_curve.empty()) j["input_curve"] = o.input_curve;
    if (o.outer_loop) j["outer_loop"] = *o.outer_loop;
    return pipeline::parse_config(j, base);
}

// ---------------------------------------------------------------- report

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string& name) const {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ParseError("missing column " + name);
        return static_cast<std::size_t>(it - header.begin());
    }
    std::vector<double> values(const std::string& name) const {
        const auto c = column(name);
        std::vector<double> v;
        for (const auto& r : rows) v.push_back(r[c]);
        return v;
    }
};

Table read_numeric_csv(const fs::path& path) {
    const auto lines = ingest::csv::read_lines(path);
    if (lines.empty()) throw ParseError("empty file " + path.string());
    Table t;
    for (auto f : ingest::csv::split(lines[0])) t.header.emplace_back(f);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = ingest::csv::split(lines[i]);
        if (f.size() != t.header.size()) throw ParseError("wrong field count in " + path.string(), i + 1);
        std::vector<double> r;
        for (auto x : f) r.push_back(ingest::csv::to_double(x, i + 1));
        t.rows.push_back(std::move(r));
    }
    return t;
}

std::vector<fs::path> sim_files(const fs::path& dir) {
    std::vector<fs::path> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (name.rfind("sim_", 0) == 0 && e.path().extension() == ".csv") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Q(V), dQ/dV and d2Q/dV2 of every sim_*.csv in `dir`.
bool render_simulations(const fs::path& dir, const fs::path& target, ingest::GridRange range) {
    const auto files = sim_files(dir);
    if (files.empty()) return false;
    const auto grid = ingest::uniform_grid(range);
    svg::Panel q{.title = "Q(V)", .x_label = "V", .y_label = "Q / Q_cathode"};
    svg::Panel d1{.title = "dQ/dV", .x_label = "V", .y_label = "dQ/dV"};
    svg::Panel d2{.title = "d2Q/dV2", .x_label = "V", .y_label = "d2Q/dV2"};
    for (std::size_t k = 0; k < files.size(); ++k) {
        const auto s = synthetic::read_sim_csv(files[k], files[k].stem().string(), 0.0);
        const auto qv = physics::capacity_on_voltage_grid(s, grid);
        const auto& color = svg::palette()[k % svg::palette().size()];
        const auto label = files[k].stem().string().substr(4);
        q.series.push_back({grid, qv, label, color});
        d1.series.push_back({grid, physics::differentiate_curve(grid, qv, 1, 21), label, color});
        d2.series.push_back({grid, physics::differentiate_curve(grid, qv, 2, 21), label, color});
    }
    svg::write(target, {q, d1, d2});
    return true;
}

int cmd_report(const Options& o, const pipeline::PipelineConfig& cfg, json& meta) {
    const fs::path out(o.out);
    std::vector<std::string> written;
    const auto bpath = out / "boundaries.json";
    if (fs::exists(bpath)) {
        const auto b = pipeline::read_json(bpath);
        const double lambda = b.at("lambda").get<double>();
        const auto boundaries = b.at("abscissa").get<std::vector<double>>();
        if (fs::exists(out / "beta_path.csv")) {
            const auto t = read_numeric_csv(out / "beta_path.csv");
            const auto lc = t.column("lambda"), xc = t.column("abscissa_value"), bc = t.column("beta");
            svg::Series s{{}, {}, "lambda = " + svg::num(lambda)};
            for (const auto& r : t.rows)
                if (r[lc] == lambda) {
                    s.x.push_back(r[xc]);
                    s.y.push_back(r[bc]);
                }
            svg::Panel p{.title = "Coefficients at the selected lambda",
                         .x_label = "abscissa",
                         .y_label = "beta",
                         .series = {s},
                         .vlines = boundaries};
            svg::write(out / "beta.svg", {p});
            written.push_back("beta.svg");
        }
        if (fs::exists(out / "lambda_metrics.csv")) {
            const auto t = read_numeric_csv(out / "lambda_metrics.csv");
            const auto lam = t.values("lambda"), mape = t.values("mean_mape"), se = t.values("se_mape");
            std::vector<double> upper(mape.size());
            for (std::size_t i = 0; i < mape.size(); ++i) upper[i] = mape[i] + se[i];
            svg::Panel a{"Prediction", "lambda", "mean inner MAPE (%)",
                         {{lam, mape, "mean", svg::palette()[0], true}, {lam, upper, "mean + SE", svg::palette()[1]}},
                         {lambda}, {}, true};
            svg::Panel r{"Robustness", "lambda", "DTW ratio",
                         {{lam, t.values("dtw_ratio"), "", svg::palette()[0], true}}, {lambda},
                         {cfg.design.constraints.dtw_ratio_max}, true};
            svg::Panel l{"Interpretability", "lambda", "mean path length",
                         {{lam, t.values("mean_path_length"), "", svg::palette()[0], true}}, {lambda},
                         {cfg.design.constraints.path_length_max}, true};
            svg::write(out / "lambda_metrics.svg", {a, r, l});
            written.push_back("lambda_metrics.svg");
        }
    }
    if (render_simulations(out, out / "simulation.svg", cfg.voltage_range)) written.push_back("simulation.svg");
    if (written.empty()) throw ConfigError("nothing to plot in " + out.string());
    meta["plots"] = written;
    return 0;
}

// ---------------------------------------------------------------- commands

int cmd_ingest(const Options& o, const pipeline::PipelineConfig& cfg, json& meta) {
    const auto ds = pipeline::load_dataset(cfg);
    const auto m = pipeline::curves(ds, cfg);
    const auto plan = ingest::assign_folds(ds.entries);
    pipeline::write_curves_csv(fs::path(o.out) / "curves.csv", m);
    pipeline::write_json(fs::path(o.out) / "folds.json", pipeline::folds_json(plan));
    meta["cells"] = m.rows();
    return 0;
}

int cmd_design(const Options& o, const pipeline::PipelineConfig& cfg, json& meta) {
    const fs::path out(o.out);
    const auto ds = pipeline::load_dataset(cfg);
    const auto m = pipeline::curves(ds, cfg);
    const auto plan = ingest::assign_folds(ds.entries);
    const int g = cfg.outer_loop - 1;
    const auto split = ingest::outer_split(m, plan, g);
    const auto train = m.subset(split.train);
    auto score = lambda_select::score_lambda_grid(train, plan, g, feature_design::lambda_grid_for(train, cfg.design),
                                                  cfg.design.constraints, cfg.solver);
    // Written before selection so an infeasible grid can still be inspected.
    lambda_select::write_lambda_metrics(out / "lambda_metrics.csv", score.metrics);
    const auto full = ingest::standardize(train);
    const auto path = fused_lasso::solve_path(full.x, full.y, score.lambdas, cfg.solver);
    lambda_select::write_beta_path(out / "beta_path.csv", path, train.grid);
    const auto d = feature_design::design_from_score(train, std::move(score), cfg.design, cfg.solver);
    auto b = feature_design::boundaries_json(d);
    b["outer_loop"] = cfg.outer_loop;
    b["input_curve"] = std::string(ingest::to_string(cfg.input_curve));
    pipeline::write_json(out / "boundaries.json", b);
    const std::string quantity = cfg.input_curve == ingest::InputCurve::VB_t || cfg.input_curve == ingest::InputCurve::VC_t
                                     ? "V"
                                     : (cfg.input_curve == ingest::InputCurve::tA_V ? "t" : "Q");
    feature_design::write_features_csv(out / "features.csv", m, d.specs, quantity);
    meta["outer_loop"] = cfg.outer_loop;
    meta["training_cells"] = train.rows();
    meta["lambda"] = d.lambda;
    return 0;
}

int cmd_evaluate(const Options& o, const pipeline::PipelineConfig& cfg, json& meta) {
    const fs::path out(o.out);
    const auto ds = pipeline::load_dataset(cfg);
    const auto data = model_eval::with_protocol_features(pipeline::curves(ds, cfg), ds.entries);
    const auto plan = ingest::assign_folds(ds.entries);
    std::vector<model_eval::EvalReport> reports;
    json all = json::array();
    for (const auto& run : cfg.runs) {
        model_eval::EvalConfig ec;
        ec.source = run.source;
        ec.model = run.model;
        ec.design = cfg.design;
        ec.solver = cfg.solver;
        ec.l1_grid = cfg.l1_grid;
        ec.l2_grid = cfg.l2_grid;
        ec.degrees = cfg.degrees;
        reports.push_back(model_eval::nested_evaluate(data, plan, ec));
        all.push_back(model_eval::to_json(reports.back()));
    }
    pipeline::write_json(out / "eval_report.json", {{"input_curve", std::string(ingest::to_string(cfg.input_curve))},
                                                    {"reports", all}});
    model_eval::write_eval_summary(out / "eval_summary.csv", reports);
    meta["runs"] = cfg.runs.size();
    return 0;
}

int cmd_simulate(const Options& o, const pipeline::PipelineConfig& cfg, json& meta) {
    const fs::path out(o.out);
    if (cfg.simulations.empty()) throw ConfigError("config has no 'simulate' section");
    std::vector<physics::SimulatedCurve> sims(cfg.simulations.size());
    parallel_for(sims.size(), [&](std::size_t i) { sims[i] = physics::simulate_discharge(cfg.simulations[i]); });
    const auto grid = ingest::uniform_grid(cfg.voltage_range);
    json summary = json::array();
    for (std::size_t i = 0; i < sims.size(); ++i) {
        const auto& c = cfg.simulations[i];
        synthetic::write_sim_csv(out / ("sim_" + c.id + ".csv"), sims[i]);
        const auto q = physics::capacity_on_voltage_grid(sims[i], grid);
        summary.push_back({{"id", c.id},
                           {"temperature_c", c.temperature - 273.15},
                           {"seed", c.seed},
                           {"points", sims[i].size()},
                           {"stop", physics::to_string(sims[i].stop)},
                           {"final_q_norm", sims[i].q_norm.back()},
                           {"conservation_error", physics::conservation_error(sims[i], c.utilization)},
                           {"min_filling", sims[i].min_filling},
                           {"max_filling", sims[i].max_filling},
                           {"d2q_amplitude_3.4_3.7", physics::second_derivative_amplitude(grid, q, 3.4, 3.7)}});
    }
    pipeline::write_json(out / "sim_summary.json", summary);
    render_simulations(out, out / "simulation.svg", cfg.voltage_range);
    meta["simulations"] = sims.size();
    return 0;
}

int cmd_diagnose(const Options& o, const pipeline::PipelineConfig&, json& meta) {
    const fs::path out(o.out);
    const fs::path in = o.features.empty() ? out / "features.csv" : fs::path(o.features);
    if (!fs::exists(in)) throw ConfigError("features file not found: " + in.string());
    const auto t = pipeline::read_features_csv(in);
    pipeline::write_json(out / "diagnostics.json", diagnostics::diagnostics_json(t.values, t.cycle_life, t.names));
    meta["features_file"] = in.string();
    return 0;
}

int cmd_synth(const Options& o, const pipeline::PipelineConfig& cfg, json& meta) {
    const fs::path out(o.out);
    const auto corpus = synthetic::generate_corpus(cfg.synth);
    ingest::write_manifest(out / "manifest.csv", corpus.dataset.entries);
    for (std::size_t i = 0; i < corpus.sims.size(); ++i)
        synthetic::write_sim_csv(out / ("sim_" + corpus.dataset.entries[i].cell_id + ".csv"), corpus.sims[i]);
    json truth{{"window", {cfg.synth.window_lo, cfg.synth.window_hi}},
               {"signal_kind", synthetic::to_string(cfg.synth.signal)},
               {"config", cfg.synth}};
    auto cells = json::array();
    for (std::size_t i = 0; i < corpus.dataset.entries.size(); ++i)
        cells.push_back({{"cell_id", corpus.dataset.entries[i].cell_id},
                         {"signal", corpus.signal(static_cast<Eigen::Index>(i))},
                         {"cycle_life", corpus.dataset.entries[i].cycle_life}});
    truth["cells"] = cells;
    pipeline::write_json(out / "synth_truth.json", truth);
    pipeline::write_json(out / "pipeline.json",
                         {{"manifest", "manifest.csv"},
                          {"sim_capacity_ah", cfg.synth.capacity_ah},
                          {"voltage_range", {cfg.synth.range.lo, cfg.synth.range.hi}}});
    meta["cells"] = corpus.dataset.entries.size();
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Formation-curve feature design and particle-ensemble simulation"};
    app.set_version_flag("--version", std::string(pipeline::kVersion));
    app.require_subcommand(1);
    app.fallthrough();
    Options o;
    app.add_option("--config", o.config, "pipeline config (JSON)");
    app.add_option("--out", o.out, "output directory")->capture_default_str();
    app.add_option("--seed", o.seed, "global seed");
    app.add_option("--threads", o.threads, "worker cap (default: FORMATION_LAB_THREADS or all cores)")
        ->check(CLI::PositiveNumber);
    app.add_option("--lambda-grid", o.lambda_grid, "comma-separated lambda values");
    app.add_option("--input-curve", o.input_curve, "QA_V, tA_V, QB_V, VB_t, QC_V or VC_t");
    app.add_option("--outer-loop", o.outer_loop, "outer loop used by design (1-5)");

    using Handler = int (*)(const Options&, const pipeline::PipelineConfig&, json&);
    const std::vector<std::tuple<std::string, std::string, Handler>> commands{
        {"ingest", "curve matrix and fold plan", cmd_ingest},
        {"design", "lambda selection, partitioning, merging and downselection", cmd_design},
        {"evaluate", "nested cross-validated model evaluation", cmd_evaluate},
        {"simulate", "particle-ensemble discharge simulations", cmd_simulate},
        {"diagnose", "correlation, VIF and F-tests on a features file", cmd_diagnose},
        {"report", "SVG plots from the artifacts in --out", cmd_report},
        {"synth", "simulated corpus with a planted life signal", cmd_synth},
    };
    std::map<const CLI::App*, Handler> handlers;
    for (const auto& [name, help, fn] : commands) {
        auto* sub = app.add_subcommand(name, help);
        if (name == "diagnose") sub->add_option("--features", o.features, "features CSV (default: OUT/features.csv)");
        handlers[sub] = fn;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    const auto* sub = app.get_subcommands().front();
    try {
        if (o.threads) set_thread_cap(*o.threads);
        const auto cfg = load_config(o);
        fs::create_directories(o.out);
        fs::remove(fs::path(o.out) / "error.json");
        json meta = pipeline::run_meta(sub->get_name(), cfg, thread_cap().load());
        const int rc = handlers.at(sub)(o, cfg, meta);
        pipeline::write_json(fs::path(o.out) / "run_meta.json", meta);
        return rc;
    } catch (const Error& e) {
        const auto j = pipeline::error_json(e);
        std::cerr << j.dump() << '\n';
        std::error_code ec;
        fs::create_directories(o.out, ec);
        if (!ec) pipeline::write_json(fs::path(o.out) / "error.json", j);
        return pipeline::exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "InternalError"}, {"kind", "numerical"}, {"message", e.what()}}.dump() << '\n';
        return 4;
    }
}
