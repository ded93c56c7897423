#pragma once

#include "formation_lab/errors.hpp"
#include "formation_lab/fused_lasso.hpp"
#include "formation_lab/ingest/csv_io.hpp"
#include "formation_lab/ingest/folds.hpp"
#include "formation_lab/ingest/standardize.hpp"
#include "formation_lab/metrics.hpp"
#include "formation_lab/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <vector>

namespace formation_lab::lambda_select {

/// Dynamic time warping with |a_i - b_j| local cost, no window, both
/// sequences aligned end to end.
template <class SeqA, class SeqB>
double dtw_distance(const SeqA& a, const SeqB& b) {
    const auto n = static_cast<std::size_t>(a.size());
    const auto m = static_cast<std::size_t>(b.size());
    if (n == 0 || m == 0) throw EmptyInput("dtw_distance: empty sequence");
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
    prev[0] = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = inf;
        const double ai = a[static_cast<Eigen::Index>(i - 1)];
        for (std::size_t j = 1; j <= m; ++j) {
            const double cost = std::abs(ai - b[static_cast<Eigen::Index>(j - 1)]);
            cur[j] = cost + std::min({prev[j - 1], prev[j], cur[j - 1]});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

inline double dtw_distance(const std::vector<double>& a, const std::vector<double>& b) {
    return dtw_distance(Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size())),
                        Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size())));
}

/// Sum of |b_j - b_{j+1}|.
inline double path_length(const Eigen::VectorXd& beta) { return fused_lasso::total_variation(beta); }

/// max_k DTW(b_k, mean of the others) / DTW(0, mean of the others).
///
/// The denominator is evaluated in closed form: against an all-zero sequence
/// of the same length every warping path covers each element at least once,
/// so the diagonal path with cost sum |m_j| is optimal.
inline double robustness_ratio(const std::vector<Eigen::VectorXd>& betas) {
    if (betas.size() < 2) throw EmptyInput("robustness_ratio: need at least two vectors");
    const Eigen::Index p = betas.front().size();
    for (const auto& b : betas)
        if (b.size() != p) throw ShapeError("robustness_ratio: vectors differ in length");
    Eigen::VectorXd total = Eigen::VectorXd::Zero(p);
    for (const auto& b : betas) total += b;
    const auto k_count = static_cast<double>(betas.size());
    double worst = 0.0;
    bool any_denominator = false;
    for (const auto& b : betas) {
        const Eigen::VectorXd others = (total - b) / (k_count - 1.0);
        const double den = others.cwiseAbs().sum();
        const double num = dtw_distance(b, others);
        if (den > 0.0) {
            any_denominator = true;
            worst = std::max(worst, num / den);
        } else if (num > 0.0) {
            worst = std::numeric_limits<double>::infinity();
        }
    }
    if (!any_denominator)
        throw DegenerateDenominator("robustness_ratio: every leave-one-out mean is zero");
    return worst;
}

struct LambdaMetrics {
    double lambda = 0.0;
    double mean_mape = 0.0;  ///< percent, across inner validation sets
    double se_mape = 0.0;
    double dtw_ratio = 0.0;
    double mean_path_length = 0.0;
    bool converged = true;  ///< every inner fit certified
    bool feasible_pred = false;
    bool feasible_robust = false;
    bool feasible_interp = false;

    bool feasible() const { return converged && feasible_pred && feasible_robust && feasible_interp; }
};

struct SelectionConstraints {
    bool one_se_rule = true;
    double dtw_ratio_max = 0.7;
    double path_length_max = 5.0;
};

/// One inner loop of an outer training set: its split (rows of the outer
/// training matrix), its own standardization and the fused-lasso path.
struct InnerFold {
    std::vector<Eigen::Index> train_rows;
    std::vector<Eigen::Index> validation_rows;
    ingest::Standardized train;
    Eigen::MatrixXd validation_x;  ///< standardized with the training statistics
    std::vector<fused_lasso::Fit> path;
    std::vector<double> validation_mape;  ///< per lambda
};

struct GridScore {
    std::vector<double> lambdas;
    std::vector<LambdaMetrics> metrics;
    std::vector<InnerFold> folds;
};

/// The default grid: 60 log-spaced values below the lambda_max of the
/// standardized outer training set.
inline std::vector<double> default_grid(const ingest::CurveMatrix& outer_train,
                                        std::size_t count = 60, double min_ratio = 1e-4) {
    const auto s = ingest::standardize(outer_train);
    return fused_lasso::lambda_grid(fused_lasso::ChainProblem(s.x, s.y).lambda_max(), count,
                                    min_ratio);
}

/// Sets the feasibility flags of every entry. The one-standard-error band is
/// anchored at the lowest mean MAPE among certified entries.
inline void apply_constraints(std::vector<LambdaMetrics>& metrics,
                              const SelectionConstraints& c = {}) {
    const LambdaMetrics* anchor = nullptr;
    for (const auto& m : metrics)
        if (m.converged && (!anchor || m.mean_mape < anchor->mean_mape)) anchor = &m;
    const double bound = anchor ? anchor->mean_mape + (c.one_se_rule ? anchor->se_mape : 0.0)
                                : -std::numeric_limits<double>::infinity();
    for (auto& m : metrics) {
        m.feasible_pred = m.converged && m.mean_mape <= bound;
        m.feasible_robust = m.dtw_ratio < c.dtw_ratio_max;
        m.feasible_interp = m.mean_path_length < c.path_length_max;
    }
}

/// Scores every lambda over the inner loops of outer loop `outer_loop`.
/// `outer_train` holds only that loop's training cells.
inline GridScore score_lambda_grid(const ingest::CurveMatrix& outer_train,
                                   const ingest::FoldPlan& plan, int outer_loop,
                                   const std::vector<double>& lambdas,
                                   const SelectionConstraints& constraints = {},
                                   const fused_lasso::Options& opts = {}) {
    if (lambdas.empty()) throw EmptyInput("score_lambda_grid: empty lambda grid");
    GridScore out;
    out.lambdas = lambdas;
    // Inner folds left empty by a small training set are skipped.
    std::vector<ingest::Split> splits;
    for (int k = 0; k < ingest::FoldPlan::kInnerFolds; ++k) {
        auto split = ingest::inner_split(outer_train, plan, outer_loop, k);
        if (!split.train.empty() && !split.test.empty()) splits.push_back(std::move(split));
    }
    if (splits.size() < 2)
        throw EmptyInput("outer loop " + std::to_string(outer_loop + 1) + " has fewer than two usable inner folds");
    out.folds.resize(splits.size());
    const Eigen::VectorXd life = outer_train.cycle_life();

    parallel_for(out.folds.size(), [&](std::size_t k) {
        auto& fold = out.folds[k];
        const auto& split = splits[k];
        fold.train_rows = split.train;
        fold.validation_rows = split.test;
        fold.train = ingest::standardize(outer_train.subset(split.train));
        const auto val = ingest::standardize(outer_train.subset(split.test), fold.train.params);
        fold.validation_x = val.x;
        Eigen::VectorXd truth(static_cast<Eigen::Index>(split.test.size()));
        for (std::size_t r = 0; r < split.test.size(); ++r)
            truth(static_cast<Eigen::Index>(r)) = life(split.test[r]);
        fold.path = fused_lasso::solve_path(fused_lasso::ChainProblem(fold.train.x, fold.train.y),
                                            lambdas, opts);
        fold.validation_mape.resize(lambdas.size());
        for (std::size_t i = 0; i < lambdas.size(); ++i)
            fold.validation_mape[i] =
                metrics(fused_lasso::predict(fold.path[i], val.x, fold.train.params), truth).mape;
    });

    out.metrics.resize(lambdas.size());
    parallel_for(lambdas.size(), [&](std::size_t i) {
        auto& m = out.metrics[i];
        m.lambda = lambdas[i];
        std::vector<Eigen::VectorXd> betas;
        double sum = 0.0, sq = 0.0, len = 0.0;
        for (const auto& fold : out.folds) {
            const double v = fold.validation_mape[i];
            sum += v;
            sq += v * v;
            len += path_length(fold.path[i].beta);
            m.converged = m.converged && fold.path[i].converged;
            betas.push_back(fold.path[i].beta);
        }
        const double kk = static_cast<double>(out.folds.size());
        m.mean_mape = sum / kk;
        // Standard error from the population spread of the fold MAPEs.
        m.se_mape = std::sqrt(std::max(0.0, sq / kk - m.mean_mape * m.mean_mape) / kk);
        m.mean_path_length = len / kk;
        try {
            m.dtw_ratio = robustness_ratio(betas);
        } catch (const DegenerateDenominator&) {
            m.dtw_ratio = std::numeric_limits<double>::infinity();
        }
    });
    apply_constraints(out.metrics, constraints);
    return out;
}

/// Smallest feasible lambda.
inline double select_lambda(std::vector<LambdaMetrics> metrics,
                            const SelectionConstraints& constraints = {}) {
    if (metrics.empty()) throw EmptyInput("select_lambda: no metrics");
    apply_constraints(metrics, constraints);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& m : metrics)
        if (m.feasible() && m.lambda < best) best = m.lambda;
    if (!std::isfinite(best)) throw NoFeasibleLambda("no lambda satisfies every constraint");
    return best;
}

/// Index of `lambda` in the scored grid.
inline std::size_t grid_index(const GridScore& score, double lambda) {
    const auto it = std::find(score.lambdas.begin(), score.lambdas.end(), lambda);
    if (it == score.lambdas.end()) throw ShapeError("lambda is not on the scored grid");
    return static_cast<std::size_t>(it - score.lambdas.begin());
}

inline void write_lambda_metrics(const std::filesystem::path& path,
                                 const std::vector<LambdaMetrics>& metrics) {
    using ingest::csv::format;
    std::ofstream out(path, std::ios::binary);
    out << "lambda,mean_mape,se_mape,dtw_ratio,mean_path_length,feasible\n";
    for (const auto& m : metrics)
        out << format(m.lambda) << ',' << format(m.mean_mape) << ',' << format(m.se_mape) << ','
            << format(m.dtw_ratio) << ',' << format(m.mean_path_length) << ','
            << (m.feasible() ? 1 : 0) << '\n';
}

/// `lambda,grid_index,abscissa_value,beta`, one row per coefficient.
inline void write_beta_path(const std::filesystem::path& path,
                            const std::vector<fused_lasso::Fit>& fits,
                            const std::vector<double>& grid) {
    using ingest::csv::format;
    std::ofstream out(path, std::ios::binary);
    out << "lambda,grid_index,abscissa_value,beta\n";
    for (const auto& f : fits) {
        if (static_cast<std::size_t>(f.beta.size()) != grid.size())
            throw ShapeError("write_beta_path: grid and coefficients differ in length");
        for (Eigen::Index j = 0; j < f.beta.size(); ++j)
            out << format(f.lambda) << ',' << j << ',' << format(grid[static_cast<std::size_t>(j)])
                << ',' << format(f.beta(j)) << '\n';
    }
}

} // namespace formation_lab::lambda_select
