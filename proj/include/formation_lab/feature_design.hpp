#pragma once

#include "formation_lab/errors.hpp"
#include "formation_lab/fused_lasso.hpp"
#include "formation_lab/ingest/csv_io.hpp"
#include "formation_lab/ingest/types.hpp"
#include "formation_lab/lambda_select.hpp"
#include "formation_lab/parallel.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

namespace formation_lab::feature_design {

/// Grid indices b where the coefficients jump between b - 1 and b.
struct BoundarySet {
    std::vector<std::size_t> indices;
    std::vector<double> abscissa;

    std::size_t size() const { return indices.size(); }
    bool empty() const { return indices.empty(); }
};

inline BoundarySet make_boundaries(std::vector<std::size_t> indices, const std::vector<double>& grid) {
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
    BoundarySet out;
    for (auto b : indices) {
        if (b < 1 || b >= grid.size()) throw ShapeError("boundary index outside [1, p-1]");
        out.indices.push_back(b);
        out.abscissa.push_back(grid[b]);
    }
    return out;
}

/// Jumps with |b_{j+1} - b_j| >= rel_threshold * (max b - min b).
inline BoundarySet detect_jumps(const Eigen::VectorXd& beta, const std::vector<double>& grid,
                                double rel_threshold = 0.001) {
    if (beta.size() < 2) throw ShapeError("detect_jumps: need at least two coefficients");
    if (static_cast<std::size_t>(beta.size()) != grid.size())
        throw ShapeError("detect_jumps: grid and coefficients differ in length");
    const double range = beta.maxCoeff() - beta.minCoeff();
    std::vector<std::size_t> idx;
    if (range > 0.0)
        for (Eigen::Index j = 0; j + 1 < beta.size(); ++j)
            if (std::abs(beta(j + 1) - beta(j)) >= rel_threshold * range)
                idx.push_back(static_cast<std::size_t>(j + 1));
    return make_boundaries(std::move(idx), grid);
}

/// Sum of x_j * b_j over j1..j2 inclusive.
inline double section_partial_prediction(const Eigen::VectorXd& beta, const Eigen::RowVectorXd& row,
                                         std::size_t j1, std::size_t j2) {
    if (j1 > j2 || j2 >= static_cast<std::size_t>(beta.size()) || row.size() != beta.size())
        throw ShapeError("section_partial_prediction: bad window");
    double s = 0.0;
    for (auto j = static_cast<Eigen::Index>(j1); j <= static_cast<Eigen::Index>(j2); ++j)
        s += row(j) * beta(j);
    return s;
}

/// Section edges: 0, every boundary, p - 1. Section i spans edges i..i+1.
inline std::vector<std::size_t> section_edges(const BoundarySet& b, std::size_t p) {
    std::vector<std::size_t> e{0};
    e.insert(e.end(), b.indices.begin(), b.indices.end());
    e.push_back(p - 1);
    return e;
}

/// One inner loop's ingredients for the merge criterion: its coefficient
/// vector, the standardized curves it is evaluated on and the output scale.
struct MergeFold {
    Eigen::VectorXd beta;
    Eigen::MatrixXd x;
    double y_scale = 1.0;
};

namespace detail {

/// Row-wise prefix sums of x and x .* beta, so any window sum costs O(1).
struct PrefixFold {
    Eigen::MatrixXd px;   ///< n x (p + 1)
    Eigen::MatrixXd pxb;  ///< n x (p + 1)
    Eigen::MatrixXd x;
    double y_scale = 1.0;

    explicit PrefixFold(const MergeFold& f) : x(f.x), y_scale(f.y_scale) {
        const Eigen::Index n = f.x.rows(), p = f.x.cols();
        if (f.beta.size() != p) throw ShapeError("merge fold: coefficient length mismatch");
        px = Eigen::MatrixXd::Zero(n, p + 1);
        pxb = Eigen::MatrixXd::Zero(n, p + 1);
        for (Eigen::Index j = 0; j < p; ++j) {
            px.col(j + 1) = px.col(j) + f.x.col(j);
            pxb.col(j + 1) = pxb.col(j) + f.x.col(j) * f.beta(j);
        }
    }

    /// RMSE of regressing the partial prediction over window lo..hi on the
    /// window's difference and mean features plus an intercept.
    double rmse(std::size_t lo, std::size_t hi) const {
        const Eigen::Index n = x.rows();
        const auto l = static_cast<Eigen::Index>(lo), h = static_cast<Eigen::Index>(hi);
        const Eigen::VectorXd target = (pxb.col(h + 1) - pxb.col(l)) * y_scale;
        Eigen::MatrixXd a(n, 3);
        a.col(0).setOnes();
        a.col(1) = x.col(h) - x.col(l);
        a.col(2) = (px.col(h + 1) - px.col(l)) / static_cast<double>(h - l + 1);
        // Center so the rank test sees the feature spread, not its offset.
        for (int c = 1; c < 3; ++c) a.col(c).array() -= a.col(c).mean();
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
        qr.setThreshold(1e-12);
        const Eigen::VectorXd coef = qr.solve(target);
        const Eigen::VectorXd resid = target - a * coef;
        return std::sqrt(resid.squaredNorm() / static_cast<double>(n));
    }
};

} // namespace detail

/// Mean over folds of the RMSE for merging the two sections around boundary
/// `j` into the window j_minus..j_plus.
inline double section_merge_rmse(std::size_t j_minus, std::size_t j, std::size_t j_plus,
                                 const std::vector<MergeFold>& folds) {
    if (!(j_minus < j && j < j_plus)) throw ShapeError("section_merge_rmse: j must be interior");
    if (folds.empty()) throw EmptyInput("section_merge_rmse: no folds");
    double sum = 0.0;
    for (const auto& f : folds) sum += detail::PrefixFold(f).rmse(j_minus, j_plus);
    return sum / static_cast<double>(folds.size());
}

struct MergeStep {
    std::size_t index = 0;
    double abscissa = 0.0;
    double rmse = 0.0;
};

struct MergeResult {
    BoundarySet boundaries;
    std::vector<MergeStep> history;  ///< removals in order
};

/// Greedily removes the boundary whose merge RMSE is smallest while that
/// RMSE is at most th_merge. Ties go to the lowest abscissa.
inline MergeResult merge_sections(const BoundarySet& initial, const std::vector<double>& grid,
                                  const std::vector<MergeFold>& folds, double th_merge = 0.01) {
    MergeResult out;
    out.boundaries = initial;
    if (initial.empty()) return out;
    if (folds.empty()) throw EmptyInput("merge_sections: no folds");
    std::vector<detail::PrefixFold> pre;
    pre.reserve(folds.size());
    for (const auto& f : folds) pre.emplace_back(f);
    const std::size_t p = grid.size();

    while (!out.boundaries.empty()) {
        const auto edges = section_edges(out.boundaries, p);
        const std::size_t nb = out.boundaries.size();
        std::vector<double> cost(nb);
        parallel_for(nb, [&](std::size_t i) {
            double s = 0.0;
            for (const auto& f : pre) s += f.rmse(edges[i], edges[i + 2]);
            cost[i] = s / static_cast<double>(pre.size());
        });
        const auto best = static_cast<std::size_t>(std::min_element(cost.begin(), cost.end()) -
                                                   cost.begin());
        if (!(cost[best] <= th_merge)) break;
        out.history.push_back({out.boundaries.indices[best], out.boundaries.abscissa[best], cost[best]});
        out.boundaries.indices.erase(out.boundaries.indices.begin() + static_cast<std::ptrdiff_t>(best));
        out.boundaries.abscissa.erase(out.boundaries.abscissa.begin() + static_cast<std::ptrdiff_t>(best));
    }
    return out;
}

enum class FeatureKind { difference, mean };

struct SectionFeatureSpec {
    FeatureKind kind = FeatureKind::difference;
    double v1 = 0.0;
    double v2 = 0.0;
    std::size_t j1 = 0;  ///< grid index of v1
    std::size_t j2 = 0;  ///< grid index of v2

    /// e.g. diff_Q_3.57_3.60; endpoints rounded to 0.01 for display only.
    std::string name(const std::string& quantity = "Q") const {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%s_%s_%.2f_%.2f", kind == FeatureKind::difference ? "diff" : "mean",
                      quantity.c_str(), v1, v2);
        return buf;
    }

    double evaluate(const Eigen::RowVectorXd& curve) const {
        const auto a = static_cast<Eigen::Index>(j1), b = static_cast<Eigen::Index>(j2);
        if (kind == FeatureKind::difference) return curve(b) - curve(a);
        return curve.segment(a, b - a + 1).mean();
    }
};

struct FeatureMatrix {
    Eigen::MatrixXd values;  ///< cells x features
    std::vector<SectionFeatureSpec> specs;
};

inline Eigen::MatrixXd compute_features(const Eigen::MatrixXd& curves,
                                        const std::vector<SectionFeatureSpec>& specs) {
    Eigen::MatrixXd out(curves.rows(), static_cast<Eigen::Index>(specs.size()));
    for (std::size_t f = 0; f < specs.size(); ++f) {
        if (specs[f].j2 >= static_cast<std::size_t>(curves.cols()))
            throw ShapeError("feature window beyond the curve grid");
        for (Eigen::Index i = 0; i < curves.rows(); ++i)
            out(i, static_cast<Eigen::Index>(f)) = specs[f].evaluate(curves.row(i));
    }
    return out;
}

/// Difference and mean feature of every section, on raw curves.
inline FeatureMatrix extract_section_features(const ingest::CurveMatrix& raw,
                                              const BoundarySet& boundaries) {
    const std::size_t p = raw.grid.size();
    if (static_cast<std::size_t>(raw.cols()) != p) throw ShapeError("curve matrix grid mismatch");
    FeatureMatrix out;
    const auto edges = section_edges(boundaries, p);
    for (std::size_t i = 0; i + 1 < edges.size(); ++i)
        for (auto kind : {FeatureKind::difference, FeatureKind::mean})
            out.specs.push_back({kind, raw.grid[edges[i]], raw.grid[edges[i + 1]], edges[i], edges[i + 1]});
    out.values = compute_features(raw.x, out.specs);
    return out;
}

/// Pearson correlation; zero when either side has no spread.
inline double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const Eigen::ArrayXd da = a.array() - a.mean();
    const Eigen::ArrayXd db = b.array() - b.mean();
    const double den = std::sqrt((da * da).sum() * (db * db).sum());
    if (!(den > 0.0)) return 0.0;
    return std::clamp((da * db).sum() / den, -1.0, 1.0);
}

struct Downselection {
    std::vector<std::size_t> selected;  ///< columns of the feature matrix, in pick order
    std::vector<double> r_with_output;  ///< per column
};

/// Repeatedly picks the column with the largest |r| against y while that
/// exceeds th_y, dropping every remaining column with |r| > th_x against
/// the pick.
inline Downselection downselect_features(const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
                                         double th_x = 0.2, double th_y = 0.4) {
    if (features.rows() != y.size()) throw ShapeError("downselect_features: row mismatch");
    Downselection out;
    const Eigen::Index m = features.cols();
    out.r_with_output.resize(static_cast<std::size_t>(m));
    for (Eigen::Index c = 0; c < m; ++c) out.r_with_output[static_cast<std::size_t>(c)] = pearson(features.col(c), y);
    std::vector<bool> alive(static_cast<std::size_t>(m), true);
    while (true) {
        Eigen::Index pick = -1;
        double best = th_y;
        for (Eigen::Index c = 0; c < m; ++c) {
            const double r = std::abs(out.r_with_output[static_cast<std::size_t>(c)]);
            if (alive[static_cast<std::size_t>(c)] && r > best) {
                best = r;
                pick = c;
            }
        }
        if (pick < 0) break;
        out.selected.push_back(static_cast<std::size_t>(pick));
        alive[static_cast<std::size_t>(pick)] = false;
        for (Eigen::Index c = 0; c < m; ++c)
            if (alive[static_cast<std::size_t>(c)] &&
                std::abs(pearson(features.col(c), features.col(pick))) > th_x)
                alive[static_cast<std::size_t>(c)] = false;
    }
    return out;
}

struct DesignConfig {
    std::size_t lambda_count = 60;
    double lambda_min_ratio = 1e-4;
    std::vector<double> lambda_grid;  ///< overrides the default grid when nonempty
    lambda_select::SelectionConstraints constraints;
    double jump_threshold = 0.001;
    double th_merge = 0.01;
    bool merge_on_validation = false;
    double th_x = 0.2;
    double th_y = 0.4;
    std::string quantity = "Q";
};

/// Outcome of the design pipeline on one outer training set.
struct DesignedFeatureSet {
    double lambda = 0.0;
    lambda_select::GridScore score;
    BoundarySet initial;
    MergeResult merged;
    FeatureMatrix candidates;  ///< all section features on the training cells
    Downselection selection;
    std::vector<SectionFeatureSpec> specs;  ///< selected, in pick order
};

/// Builds the merge ingredients of the inner folds at grid position `i`.
inline std::vector<MergeFold> merge_folds(const lambda_select::GridScore& score, std::size_t i,
                                          bool on_validation) {
    std::vector<MergeFold> out;
    for (const auto& f : score.folds)
        out.push_back({f.path[i].beta, on_validation ? f.validation_x : f.train.x, f.train.params.y_scale});
    return out;
}

inline std::vector<double> lambda_grid_for(const ingest::CurveMatrix& outer_train, const DesignConfig& cfg) {
    return cfg.lambda_grid.empty()
               ? lambda_select::default_grid(outer_train, cfg.lambda_count, cfg.lambda_min_ratio)
               : cfg.lambda_grid;
}

/// Partitioning, merging and downselection once the lambda grid is scored.
/// Throws NoFeasibleLambda when no lambda qualifies.
inline DesignedFeatureSet design_from_score(const ingest::CurveMatrix& outer_train,
                                            lambda_select::GridScore score, const DesignConfig& cfg = {},
                                            const fused_lasso::Options& opts = {}) {
    DesignedFeatureSet out;
    out.score = std::move(score);
    out.lambda = lambda_select::select_lambda(out.score.metrics, cfg.constraints);
    const std::size_t li = lambda_select::grid_index(out.score, out.lambda);

    // Partition from the coefficients fitted on the whole outer training set.
    const auto full = ingest::standardize(outer_train);
    const auto fit = fused_lasso::ChainProblem(full.x, full.y).solve(out.lambda, opts);
    out.initial = detect_jumps(fit.beta, outer_train.grid, cfg.jump_threshold);
    out.merged = merge_sections(out.initial, outer_train.grid,
                                merge_folds(out.score, li, cfg.merge_on_validation), cfg.th_merge);
    out.candidates = extract_section_features(outer_train, out.merged.boundaries);
    out.selection = downselect_features(out.candidates.values, outer_train.y, cfg.th_x, cfg.th_y);
    for (auto c : out.selection.selected) out.specs.push_back(out.candidates.specs[c]);
    return out;
}

/// Lambda selection, partitioning, merging and downselection on one outer
/// training set. Throws NoFeasibleLambda when no lambda qualifies.
inline DesignedFeatureSet design_features(const ingest::CurveMatrix& outer_train,
                                          const ingest::FoldPlan& plan, int outer_loop,
                                          const DesignConfig& cfg = {},
                                          const fused_lasso::Options& opts = {}) {
    auto score = lambda_select::score_lambda_grid(outer_train, plan, outer_loop, lambda_grid_for(outer_train, cfg),
                                                  cfg.constraints, opts);
    return design_from_score(outer_train, std::move(score), cfg, opts);
}

inline nlohmann::json boundaries_json(const DesignedFeatureSet& d) {
    nlohmann::json j;
    j["lambda"] = d.lambda;
    j["initial_abscissa"] = d.initial.abscissa;
    j["abscissa"] = d.merged.boundaries.abscissa;
    j["indices"] = d.merged.boundaries.indices;
    auto rounded = nlohmann::json::array();
    for (double v : d.merged.boundaries.abscissa) rounded.push_back(std::round(v * 100.0) / 100.0);
    j["abscissa_rounded"] = rounded;
    auto hist = nlohmann::json::array();
    for (const auto& h : d.merged.history)
        hist.push_back({{"index", h.index}, {"abscissa", h.abscissa}, {"rmse", h.rmse}});
    j["merge_history"] = hist;
    auto specs = nlohmann::json::array();
    for (std::size_t k = 0; k < d.specs.size(); ++k)
        specs.push_back({{"name", d.specs[k].name()},
                         {"kind", d.specs[k].kind == FeatureKind::difference ? "difference" : "mean"},
                         {"v1", d.specs[k].v1},
                         {"v2", d.specs[k].v2},
                         {"r_with_output", d.selection.r_with_output[d.selection.selected[k]]}});
    j["selected_features"] = specs;
    return j;
}

/// `cell_id,<spec_1>,...,cycle_life`.
inline void write_features_csv(const std::filesystem::path& path, const ingest::CurveMatrix& cells,
                               const std::vector<SectionFeatureSpec>& specs,
                               const std::string& quantity = "Q") {
    using ingest::csv::format;
    const Eigen::MatrixXd f = compute_features(cells.x, specs);
    const Eigen::VectorXd life = cells.cycle_life();
    std::ofstream out(path, std::ios::binary);
    out << "cell_id";
    for (const auto& s : specs) out << ',' << s.name(quantity);
    out << ",cycle_life\n";
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
        out << (cells.cell_ids.empty() ? std::to_string(i) : cells.cell_ids[static_cast<std::size_t>(i)]);
        for (Eigen::Index c = 0; c < f.cols(); ++c) out << ',' << format(f(i, c));
        out << ',' << format(std::round(life(i))) << '\n';
    }
}

} // namespace formation_lab::feature_design
