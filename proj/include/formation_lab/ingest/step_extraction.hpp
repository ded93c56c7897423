#pragma once

#include "formation_lab/errors.hpp"
#include "formation_lab/ingest/csv_io.hpp"
#include "formation_lab/ingest/types.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace formation_lab::ingest {

/// Half-open sample range [begin, end) of one located step.
struct SampleRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
};

namespace detail {

struct Run {
    SampleRange range;
    std::int64_t cycle = 0;
    std::int64_t step = 0;
    double mean_current = 0.0;
};

/// Maximal contiguous runs of equal (cycle_index, step_index).
inline std::vector<Run> step_runs(const CellTimeSeries& s) {
    std::vector<Run> runs;
    const auto& smp = s.samples;
    std::size_t i = 0;
    while (i < smp.size()) {
        Run r;
        r.cycle = smp[i].cycle_index;
        r.step = smp[i].step_index;
        std::size_t j = i;
        double sum = 0.0;
        while (j < smp.size() && smp[j].cycle_index == r.cycle && smp[j].step_index == r.step)
            sum += smp[j++].current_a;
        r.range = {i, j};
        r.mean_current = sum / static_cast<double>(j - i);
        runs.push_back(r);
        i = j;
    }
    return runs;
}

} // namespace detail

/// Resolves a step locator to a nonempty contiguous sample range.
inline SampleRange locate_step(const CellTimeSeries& s, const StepSpec& spec) {
    const auto runs = detail::step_runs(s);
    if (spec.rule) {
        const bool want_charge = *spec.rule == LocatorRule::first_charge;
        auto matches = [&](const detail::Run& r) {
            return want_charge ? r.mean_current > 0.0 : r.mean_current < 0.0;
        };
        if (*spec.rule == LocatorRule::last_discharge) {
            const auto it = std::find_if(runs.rbegin(), runs.rend(), matches);
            if (it != runs.rend()) return it->range;
        } else {
            const auto it = std::find_if(runs.begin(), runs.end(), matches);
            if (it != runs.end()) return it->range;
        }
        throw StepNotFound(s.cell_id + ": no " + (want_charge ? "charge" : "discharge") +
                           " step found");
    }
    if (spec.pairs.empty()) throw StepNotFound(s.cell_id + ": empty step locator");
    std::vector<std::size_t> hit;
    for (std::size_t k = 0; k < runs.size(); ++k)
        for (const auto& [c, st] : spec.pairs)
            if (runs[k].cycle == c && runs[k].step == st) hit.push_back(k);
    if (hit.empty()) throw StepNotFound(s.cell_id + ": no samples match the (cycle, step) pairs");
    std::sort(hit.begin(), hit.end());
    hit.erase(std::unique(hit.begin(), hit.end()), hit.end());
    for (std::size_t k = 1; k < hit.size(); ++k)
        if (hit[k] != hit[k - 1] + 1)
            throw StepNotFound(s.cell_id + ": located samples are not contiguous");
    return {runs[hit.front()].range.begin, runs[hit.back()].range.end};
}

namespace detail {

/// Piecewise-linear interpolation of increasing `xs` at `q`, clamped at the ends.
inline double interp(const std::vector<double>& xs, const std::vector<double>& ys, double q) {
    if (q <= xs.front()) return ys.front();
    if (q >= xs.back()) return ys.back();
    const auto hi = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), q) - xs.begin());
    const std::size_t lo = hi - 1;
    const double t = (q - xs[lo]) / (xs[hi] - xs[lo]);
    return ys[lo] + t * (ys[hi] - ys[lo]);
}

} // namespace detail

/// Fraction of the grid span the data may fall short of at either end; the
/// missing stretch is filled with the nearest endpoint value.
inline constexpr double kCoverageTolerance = 0.005;

/// Interpolates one step onto a uniform grid of `n` points over `range`.
/// Capacity ordinates are |capacity - capacity at step start|; time
/// ordinates are seconds since step start.
inline InterpolatedCurve extract_step_curve(const CellTimeSeries& s, const StepSpec& spec,
                                            AbscissaKind abscissa, OrdinateKind ordinate,
                                            GridRange range, std::size_t n = kGridSize) {
    const auto r = locate_step(s, spec);
    if (r.size() == 0) throw StepNotFound(s.cell_id + ": empty step");
    const auto& first = s.samples[r.begin];
    const auto& last = s.samples[r.end - 1];
    const double cap_total = std::abs(last.capacity_ah - first.capacity_ah);
    const double t_total = last.time_s - first.time_s;

    std::vector<double> xs, ys;
    xs.reserve(r.size());
    ys.reserve(r.size());
    for (std::size_t i = r.begin; i < r.end; ++i) {
        const auto& m = s.samples[i];
        double x = 0.0;
        switch (abscissa) {
        case AbscissaKind::voltage: x = m.voltage_v; break;
        case AbscissaKind::normalized_time:
            if (!(t_total > 0.0)) throw StepNotFound(s.cell_id + ": step has zero duration");
            x = (m.time_s - first.time_s) / t_total;
            break;
        case AbscissaKind::normalized_capacity:
            if (!(cap_total > 0.0)) throw StepNotFound(s.cell_id + ": step moves no charge");
            x = std::abs(m.capacity_ah - first.capacity_ah) / cap_total;
            break;
        }
        double y = 0.0;
        switch (ordinate) {
        case OrdinateKind::capacity: y = std::abs(m.capacity_ah - first.capacity_ah); break;
        case OrdinateKind::voltage: y = m.voltage_v; break;
        case OrdinateKind::time: y = m.time_s - first.time_s; break;
        }
        // Equal abscissa (e.g. a constant-voltage hold): keep the later sample.
        if (!xs.empty() && x == xs.back()) {
            ys.back() = y;
            continue;
        }
        xs.push_back(x);
        ys.push_back(y);
    }

    if (xs.size() >= 2) {
        const bool decreasing = xs[1] < xs[0];
        for (std::size_t i = 1; i < xs.size(); ++i)
            if ((xs[i] < xs[i - 1]) != decreasing)
                throw NonMonotoneAbscissa(s.cell_id + ": abscissa changes direction at step sample " +
                                          std::to_string(i));
        if (decreasing) {
            std::reverse(xs.begin(), xs.end());
            std::reverse(ys.begin(), ys.end());
        }
    }

    const double slack = kCoverageTolerance * (range.hi - range.lo);
    if (xs.front() > range.lo + slack || xs.back() < range.hi - slack)
        throw ValidationError(s.cell_id + ": step spans [" + csv::format(xs.front()) + ", " +
                              csv::format(xs.back()) + "], short of the grid range [" +
                              csv::format(range.lo) + ", " + csv::format(range.hi) + "]");

    InterpolatedCurve out;
    out.abscissa_kind = abscissa;
    out.ordinate_kind = ordinate;
    out.grid = uniform_grid(range, n);
    out.ordinate.resize(n);
    for (std::size_t j = 0; j < n; ++j) out.ordinate[j] = detail::interp(xs, ys, out.grid[j]);
    return out;
}

/// The six step-by-abscissa input types.
enum class InputCurve { QA_V, tA_V, QB_V, VB_t, QC_V, VC_t };

struct InputCurveSpec {
    StepLabel step;
    AbscissaKind abscissa;
    OrdinateKind ordinate;
    GridRange range;
};

inline InputCurveSpec describe(InputCurve c, GridRange voltage_range = {}) {
    const GridRange unit{0.0, 1.0};
    switch (c) {
    case InputCurve::QA_V:
        return {StepLabel::A, AbscissaKind::voltage, OrdinateKind::capacity, voltage_range};
    case InputCurve::tA_V:
        return {StepLabel::A, AbscissaKind::voltage, OrdinateKind::time, voltage_range};
    case InputCurve::QB_V:
        return {StepLabel::B, AbscissaKind::voltage, OrdinateKind::capacity, voltage_range};
    case InputCurve::VB_t:
        return {StepLabel::B, AbscissaKind::normalized_time, OrdinateKind::voltage, unit};
    case InputCurve::QC_V:
        return {StepLabel::C, AbscissaKind::voltage, OrdinateKind::capacity, voltage_range};
    case InputCurve::VC_t:
        return {StepLabel::C, AbscissaKind::normalized_time, OrdinateKind::voltage, unit};
    }
    throw ConfigError("unknown input curve");
}

inline constexpr std::array<std::pair<std::string_view, InputCurve>, 6> kInputCurveNames{{
    {"QA_V", InputCurve::QA_V},
    {"tA_V", InputCurve::tA_V},
    {"QB_V", InputCurve::QB_V},
    {"VB_t", InputCurve::VB_t},
    {"QC_V", InputCurve::QC_V},
    {"VC_t", InputCurve::VC_t},
}};

inline InputCurve parse_input_curve(std::string_view name) {
    for (const auto& [n, c] : kInputCurveNames)
        if (n == name) return c;
    throw ConfigError("unknown input curve '" + std::string(name) +
                      "' (expected QA_V, tA_V, QB_V, VB_t, QC_V or VC_t)");
}

inline std::string_view to_string(InputCurve c) {
    for (const auto& [n, v] : kInputCurveNames)
        if (v == c) return n;
    return "?";
}

inline StepLabel parse_step_label(std::string_view s) {
    if (s == "A") return StepLabel::A;
    if (s == "B") return StepLabel::B;
    if (s == "C") return StepLabel::C;
    throw ConfigError("unknown step label '" + std::string(s) + "'");
}

/// `{"step":"B","locator":{"rule":"last_discharge"}}` or
/// `{"step":"B","locator":{"pairs":[[4,7]]}}`. A missing locator means the
/// label's default rule.
inline StepSpec parse_step_spec(const nlohmann::json& j) {
    try {
        const auto label = parse_step_label(j.at("step").get<std::string>());
        if (!j.contains("locator")) return StepSpec::for_label(label);
        const auto& loc = j.at("locator");
        if (loc.contains("rule")) {
            const auto rule = loc.at("rule").get<std::string>();
            if (rule == "first_charge") return StepSpec::from_rule(label, LocatorRule::first_charge);
            if (rule == "last_discharge")
                return StepSpec::from_rule(label, LocatorRule::last_discharge);
            if (rule == "first_discharge")
                return StepSpec::from_rule(label, LocatorRule::first_discharge);
            throw ConfigError("unknown locator rule '" + rule + "'");
        }
        if (loc.contains("pairs")) {
            std::vector<std::pair<std::int64_t, std::int64_t>> pairs;
            for (const auto& p : loc.at("pairs")) {
                if (!p.is_array() || p.size() != 2)
                    throw ConfigError("locator pairs must be [cycle_index, step_index]");
                pairs.emplace_back(p[0].get<std::int64_t>(), p[1].get<std::int64_t>());
            }
            if (pairs.empty()) throw ConfigError("locator pairs must be nonempty");
            return StepSpec::from_pairs(label, std::move(pairs));
        }
        throw ConfigError("locator needs 'rule' or 'pairs'");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed step spec: ") + e.what());
    }
}

inline nlohmann::json to_json(const StepSpec& spec) {
    static constexpr const char* labels[] = {"A", "B", "C"};
    nlohmann::json j;
    j["step"] = labels[static_cast<int>(spec.step)];
    if (spec.rule) {
        static constexpr const char* rules[] = {"first_charge", "last_discharge", "first_discharge"};
        j["locator"] = {{"rule", rules[static_cast<int>(*spec.rule)]}};
    } else {
        auto pairs = nlohmann::json::array();
        for (const auto& [c, s] : spec.pairs) pairs.push_back({c, s});
        j["locator"] = {{"pairs", pairs}};
    }
    return j;
}

/// Stacks one interpolated curve per cell in dataset order.
inline CurveMatrix build_curve_matrix(const Dataset& ds, const StepSpec& spec,
                                      AbscissaKind abscissa, OrdinateKind ordinate,
                                      GridRange range, bool log_output,
                                      std::size_t n = kGridSize) {
    if (ds.entries.size() != ds.series.size())
        throw ShapeError("build_curve_matrix: entries and series differ in length");
    CurveMatrix m;
    const auto rows = static_cast<Eigen::Index>(ds.entries.size());
    m.x.resize(rows, static_cast<Eigen::Index>(n));
    m.y.resize(rows);
    m.y_is_log = log_output;
    m.grid = uniform_grid(range, n);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto k = static_cast<std::size_t>(i);
        const auto curve = extract_step_curve(ds.series[k], spec, abscissa, ordinate, range, n);
        m.x.row(i) = Eigen::Map<const Eigen::RowVectorXd>(curve.ordinate.data(),
                                                          static_cast<Eigen::Index>(n));
        const double life = ds.entries[k].cycle_life;
        m.y(i) = log_output ? std::log(life) : life;
        m.cell_ids.push_back(ds.entries[k].cell_id);
        m.protocol_ids.push_back(ds.entries[k].protocol_id);
    }
    return m;
}

inline CurveMatrix build_curve_matrix(const Dataset& ds, InputCurve curve, bool log_output,
                                      GridRange voltage_range = {}) {
    const auto d = describe(curve, voltage_range);
    return build_curve_matrix(ds, StepSpec::for_label(d.step), d.abscissa, d.ordinate, d.range,
                              log_output);
}

} // namespace formation_lab::ingest
