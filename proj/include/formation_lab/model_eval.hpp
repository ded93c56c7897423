#pragma once

#include "formation_lab/errors.hpp"
#include "formation_lab/feature_design.hpp"
#include "formation_lab/ingest/folds.hpp"
#include "formation_lab/ingest/types.hpp"
#include "formation_lab/metrics.hpp"
#include "formation_lab/parallel.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace formation_lab::model_eval {

/// Column indices multiplied together, nondecreasing.
using Monomial = std::vector<std::size_t>;

/// Every monomial of `inputs` variables with total degree 1..degree, ordered
/// by degree, then lexicographically (x1, x2, x1^2, x1 x2, x2^2, ...).
inline std::vector<Monomial> monomials(std::size_t inputs, int degree) {
    if (degree < 1 || degree > 3) throw ConfigError("polynomial degree must be 1, 2 or 3");
    std::vector<Monomial> out;
    Monomial cur;
    auto rec = [&](auto&& self, std::size_t start, int left) -> void {
        if (left == 0) {
            out.push_back(cur);
            return;
        }
        for (std::size_t i = start; i < inputs; ++i) {
            cur.push_back(i);
            self(self, i, left - 1);
            cur.pop_back();
        }
    };
    for (int d = 1; d <= degree; ++d) rec(rec, 0, d);
    return out;
}

inline Eigen::MatrixXd polynomial_expand(const Eigen::MatrixXd& x, int degree) {
    const auto terms = monomials(static_cast<std::size_t>(x.cols()), degree);
    Eigen::MatrixXd out = Eigen::MatrixXd::Ones(x.rows(), static_cast<Eigen::Index>(terms.size()));
    for (std::size_t t = 0; t < terms.size(); ++t)
        for (auto c : terms[t]) out.col(static_cast<Eigen::Index>(t)).array() *= x.col(static_cast<Eigen::Index>(c)).array();
    return out;
}

inline std::string monomial_name(const Monomial& m, const std::vector<std::string>& names) {
    std::string s;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (i) s += '*';
        s += names.at(m[i]);
    }
    return s;
}

struct ElasticNetOptions {
    std::size_t max_sweeps = 100000;
    double kkt_tolerance = 1e-10;  ///< relative to max |Z^T y|
};

/// Elastic net on an expanded basis. Coefficients act on raw columns.
struct LinearModel {
    Eigen::VectorXd coefficients;
    double intercept = 0.0;
    int degree = 1;
    double l1 = 0.0;
    double l2 = 0.0;
    Eigen::VectorXd x_mean;
    Eigen::VectorXd x_scale;     ///< ddof 0; zero marks a constant column
    Eigen::VectorXd beta_std;    ///< coefficients on the standardized columns
    std::size_t sweeps = 0;
    double kkt_violation = 0.0;
    bool converged = false;

    /// Prediction for already-expanded rows.
    Eigen::VectorXd predict(const Eigen::MatrixXd& expanded) const {
        if (expanded.cols() != coefficients.size()) throw ShapeError("LinearModel: column count mismatch");
        return (expanded * coefficients).array() + intercept;
    }
};

/// Standardized design and its Gram matrix, reused across penalties.
class ElasticNetProblem {
public:
    ElasticNetProblem(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
        if (x.rows() != y.size()) throw ShapeError("fit_elastic_net: row mismatch");
        if (x.rows() < 1) throw EmptyInput("fit_elastic_net: no observations");
        mean_ = x.colwise().mean().transpose();
        scale_ = ingest::column_std(x);
        y_mean_ = y.mean();
        Eigen::MatrixXd z = x.rowwise() - mean_.transpose();
        for (Eigen::Index j = 0; j < z.cols(); ++j) {
            if (scale_(j) > 1e-12 * std::max(1.0, std::abs(mean_(j))))
                z.col(j) /= scale_(j);
            else {
                scale_(j) = 0.0;
                z.col(j).setZero();
            }
        }
        const Eigen::VectorXd yc = y.array() - y_mean_;
        gram_ = z.transpose() * z;
        c_ = z.transpose() * yc;
        yy_ = yc.squaredNorm();
    }

    Eigen::Index cols() const { return c_.size(); }

    /// Smallest l1 with an all-zero solution.
    double l1_max() const { return c_.size() ? c_.cwiseAbs().maxCoeff() : 0.0; }

    /// ½‖y_c − Zβ‖² + l1‖β‖₁ + ½ l2‖β‖² on the standardized problem.
    double objective(const Eigen::VectorXd& beta, double l1, double l2) const {
        return 0.5 * (yy_ - 2.0 * c_.dot(beta) + beta.dot(gram_ * beta)) + l1 * beta.lpNorm<1>() +
               0.5 * l2 * beta.squaredNorm();
    }

    /// Largest violation of the optimality conditions.
    double kkt_violation(const Eigen::VectorXd& beta, double l1, double l2) const {
        const Eigen::VectorXd g = c_ - gram_ * beta - l2 * beta;
        double v = 0.0;
        for (Eigen::Index j = 0; j < beta.size(); ++j) {
            if (scale_(j) == 0.0) continue;
            v = std::max(v, beta(j) != 0.0 ? std::abs(g(j) - std::copysign(l1, beta(j)))
                                           : std::max(0.0, std::abs(g(j)) - l1));
        }
        return v;
    }

    LinearModel solve(double l1, double l2, const ElasticNetOptions& opt = {},
                      const Eigen::VectorXd* warm = nullptr) const {
        if (!(l1 >= 0.0 && l2 >= 0.0)) throw ConfigError("elastic net penalties must be nonnegative");
        const Eigen::Index p = cols();
        Eigen::VectorXd beta = warm && warm->size() == p ? *warm : Eigen::VectorXd::Zero(p);
        for (Eigen::Index j = 0; j < p; ++j)
            if (scale_(j) == 0.0) beta(j) = 0.0;
        Eigen::VectorXd q = gram_ * beta;
        const double tol = opt.kkt_tolerance * std::max(1.0, l1_max());
        LinearModel m;
        m.l1 = l1;
        m.l2 = l2;
        for (m.sweeps = 0; m.sweeps < opt.max_sweeps;) {
            ++m.sweeps;
            for (Eigen::Index j = 0; j < p; ++j) {
                const double gjj = gram_(j, j);
                if (scale_(j) == 0.0 || gjj <= 0.0) continue;
                const double rho = c_(j) - q(j) + gjj * beta(j);
                const double next = rho > l1 ? (rho - l1) / (gjj + l2) : rho < -l1 ? (rho + l1) / (gjj + l2) : 0.0;
                const double d = next - beta(j);
                if (d != 0.0) {
                    q += d * gram_.col(j);
                    beta(j) = next;
                }
            }
            if (m.sweeps % 64 == 0) q = gram_ * beta;
            if (kkt_violation(beta, l1, l2) <= tol) break;
            // Slow progress on correlated columns: solve the current sign
            // pattern exactly and keep it when it is optimal.
            if (m.sweeps % 16 == 0) {
                const Eigen::VectorXd polished = polish(beta, l1, l2);
                if (polished.size() && kkt_violation(polished, l1, l2) <= tol) {
                    beta = polished;
                    break;
                }
            }
        }
        m.kkt_violation = kkt_violation(beta, l1, l2);
        m.converged = m.kkt_violation <= tol;
        m.beta_std = beta;
        m.x_mean = mean_;
        m.x_scale = scale_;
        m.coefficients = Eigen::VectorXd::Zero(p);
        for (Eigen::Index j = 0; j < p; ++j)
            if (scale_(j) > 0.0) m.coefficients(j) = beta(j) / scale_(j);
        m.intercept = y_mean_ - m.coefficients.dot(mean_);
        return m;
    }

private:
    /// Stationary point for the support and signs of `beta`; empty when the
    /// signs do not survive.
    Eigen::VectorXd polish(const Eigen::VectorXd& beta, double l1, double l2) const {
        std::vector<Eigen::Index> act;
        for (Eigen::Index j = 0; j < beta.size(); ++j)
            if (beta(j) != 0.0) act.push_back(j);
        Eigen::VectorXd out = Eigen::VectorXd::Zero(beta.size());
        if (act.empty()) return out;
        const auto k = static_cast<Eigen::Index>(act.size());
        Eigen::MatrixXd a(k, k);
        Eigen::VectorXd rhs(k);
        for (Eigen::Index r = 0; r < k; ++r) {
            for (Eigen::Index c = 0; c < k; ++c) a(r, c) = gram_(act[r], act[c]);
            a(r, r) += l2;
            rhs(r) = c_(act[r]) - std::copysign(l1, beta(act[r]));
        }
        const Eigen::VectorXd sol = a.colPivHouseholderQr().solve(rhs);
        for (Eigen::Index r = 0; r < k; ++r) {
            if (!std::isfinite(sol(r)) || sol(r) * beta(act[r]) <= 0.0) return {};
            out(act[r]) = sol(r);
        }
        return out;
    }

    Eigen::VectorXd mean_, scale_;
    double y_mean_ = 0.0;
    Eigen::MatrixXd gram_;
    Eigen::VectorXd c_;
    double yy_ = 0.0;
};

/// Coordinate descent on internally standardized columns and centered y.
/// Check `converged` on the result; the sweep cap does not throw.
inline LinearModel fit_elastic_net(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double l1, double l2,
                                   const ElasticNetOptions& opt = {}) {
    return ElasticNetProblem(x, y).solve(l1, l2, opt);
}

/// `count` log-spaced values from lo to hi inclusive.
inline std::vector<double> logspace(double lo, double hi, std::size_t count) {
    if (!(lo > 0.0 && hi >= lo) || count == 0) throw ConfigError("logspace: invalid range");
    std::vector<double> out(count);
    const double a = std::log10(lo), b = std::log10(hi);
    for (std::size_t i = 0; i < count; ++i)
        out[i] = count == 1 ? lo : std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
    return out;
}

enum class FeatureSource { designed, protocol, none };
enum class ModelFamily { dummy, linear, nonlinear };

inline std::string to_string(FeatureSource s) {
    switch (s) {
    case FeatureSource::designed: return "designed";
    case FeatureSource::protocol: return "protocol";
    case FeatureSource::none: break;
    }
    return "none";
}

inline std::string to_string(ModelFamily m) {
    switch (m) {
    case ModelFamily::dummy: return "dummy";
    case ModelFamily::linear: return "linear";
    case ModelFamily::nonlinear: break;
    }
    return "nonlinear";
}

inline FeatureSource parse_feature_source(const std::string& s) {
    if (s == "designed") return FeatureSource::designed;
    if (s == "protocol") return FeatureSource::protocol;
    if (s == "none") return FeatureSource::none;
    throw ConfigError("unknown feature source: " + s);
}

inline ModelFamily parse_model_family(const std::string& s) {
    if (s == "dummy") return ModelFamily::dummy;
    if (s == "linear") return ModelFamily::linear;
    if (s == "nonlinear") return ModelFamily::nonlinear;
    throw ConfigError("unknown model family: " + s);
}

struct EvalConfig {
    FeatureSource source = FeatureSource::designed;
    ModelFamily model = ModelFamily::linear;
    feature_design::DesignConfig design;
    fused_lasso::Options solver;
    std::vector<double> l1_grid = logspace(1e-4, 10.0, 15);
    std::vector<double> l2_grid = logspace(1e-4, 10.0, 15);
    std::vector<int> degrees{1, 2, 3};  ///< used by the nonlinear family
    ElasticNetOptions net{20000, 1e-8};
};

/// Cells with curves plus optional protocol parameters, row-aligned.
struct EvalData {
    ingest::CurveMatrix curves;
    Eigen::MatrixXd protocol_x;
    std::vector<std::string> protocol_names;
};

/// The six formation protocol parameters of each manifest row.
inline EvalData with_protocol_features(ingest::CurveMatrix curves,
                                       const std::vector<ingest::CellManifestEntry>& entries) {
    if (entries.size() != static_cast<std::size_t>(curves.rows()))
        throw ShapeError("protocol features: manifest and curves differ in length");
    EvalData d;
    d.protocol_names = {"cc1_a", "cc2_a", "cv_v", "n_ver", "temp_c", "t_ocv_s"};
    d.protocol_x.resize(curves.rows(), 6);
    for (Eigen::Index i = 0; i < curves.rows(); ++i) {
        const auto& e = entries[static_cast<std::size_t>(i)];
        if (!curves.cell_ids.empty() && curves.cell_ids[static_cast<std::size_t>(i)] != e.cell_id)
            throw ShapeError("protocol features: row " + std::to_string(i) + " is not cell " + e.cell_id);
        d.protocol_x.row(i) << e.cc1_a, e.cc2_a, e.cv_v, e.n_ver, e.temp_c, e.t_ocv_s;
    }
    d.curves = std::move(curves);
    return d;
}

struct LoopResult {
    int loop = 0;  ///< 1-based
    bool failed = false;
    std::string failure;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    Metrics metrics;
    double lambda = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> boundaries;
    std::vector<std::string> features;
    std::vector<std::pair<double, double>> windows;  ///< designed feature endpoints, volts
    int degree = 0;
    double l1 = 0.0;
    double l2 = 0.0;
    double inner_mape = std::numeric_limits<double>::quiet_NaN();
    bool converged = true;
    std::size_t leakage = 0;  ///< outer-test cells seen by any inner loop
};

struct Summary {
    double median_rmse = 0.0, max_rmse = 0.0, median_mape = 0.0, max_mape = 0.0;
};

struct EvalReport {
    FeatureSource source = FeatureSource::designed;
    ModelFamily model = ModelFamily::linear;
    std::vector<LoopResult> loops;

    std::size_t completed() const {
        return static_cast<std::size_t>(std::count_if(loops.begin(), loops.end(), [](const auto& l) { return !l.failed; }));
    }

    /// Median and max over loops that finished.
    Summary summary() const {
        std::vector<double> rmse, mape;
        for (const auto& l : loops)
            if (!l.failed) {
                rmse.push_back(l.metrics.rmse);
                mape.push_back(l.metrics.mape);
            }
        if (rmse.empty()) throw NoFeasibleLambda("every outer loop failed");
        return {median(rmse), *std::max_element(rmse.begin(), rmse.end()), median(mape),
                *std::max_element(mape.begin(), mape.end())};
    }

    /// Largest feature count over the finished loops.
    std::size_t n_features() const {
        std::size_t n = 0;
        for (const auto& l : loops)
            if (!l.failed) n = std::max(n, l.features.size());
        return n;
    }
};

namespace detail {

inline Eigen::VectorXd rows_of(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& rows) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Eigen::Index>(r)) = v(rows[r]);
    return out;
}

inline Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(rows[r]);
    return out;
}

struct Tuned {
    int degree = 1;
    double l1 = 0.0, l2 = 0.0;
    double mape = std::numeric_limits<double>::infinity();
};

/// Grid search on mean inner-validation MAPE. Models are fitted to ln life
/// and scored on exp of the prediction. Ties keep the earliest grid point.
inline Tuned tune(const Eigen::MatrixXd& f, const Eigen::VectorXd& life, const std::vector<ingest::Split>& folds,
                  const std::vector<int>& degrees, const EvalConfig& cfg) {
    struct Point {
        int degree;
        double l1, l2;
    };
    std::vector<Point> points;
    for (int d : degrees)
        for (double l2 : cfg.l2_grid)
            for (double l1 : cfg.l1_grid) points.push_back({d, l1, l2});
    std::vector<double> score(points.size(), 0.0);
    const Eigen::VectorXd log_life = life.array().log();
    // One task per (degree, l2, fold); l1 runs from large to small with warm starts.
    const std::size_t per_degree = cfg.l2_grid.size();
    const std::size_t tasks = degrees.size() * per_degree * folds.size();
    std::vector<std::vector<double>> fold_mape(tasks);
    parallel_for(tasks, [&](std::size_t t) {
        const std::size_t k = t % folds.size(), dl = t / folds.size();
        const int degree = degrees[dl / per_degree];
        const double l2 = cfg.l2_grid[dl % per_degree];
        const auto& s = folds[k];
        const Eigen::MatrixXd xtr = polynomial_expand(rows_of(f, s.train), degree);
        const Eigen::MatrixXd xva = polynomial_expand(rows_of(f, s.test), degree);
        const Eigen::VectorXd truth = rows_of(life, s.test);
        const ElasticNetProblem prob(xtr, rows_of(log_life, s.train));
        std::vector<double> out(cfg.l1_grid.size());
        std::vector<std::size_t> order(cfg.l1_grid.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return cfg.l1_grid[a] > cfg.l1_grid[b]; });
        Eigen::VectorXd warm;
        for (auto i : order) {
            const auto m = prob.solve(cfg.l1_grid[i], l2, cfg.net, warm.size() ? &warm : nullptr);
            warm = m.beta_std;
            const Eigen::VectorXd pred = m.predict(xva).array().exp();
            out[i] = metrics(pred, truth).mape;
        }
        fold_mape[t] = std::move(out);
    });
    for (std::size_t t = 0; t < tasks; ++t) {
        const std::size_t dl = t / folds.size();
        for (std::size_t i = 0; i < cfg.l1_grid.size(); ++i)
            score[dl * cfg.l1_grid.size() + i] += fold_mape[t][i] / static_cast<double>(folds.size());
    }
    Tuned best;
    for (std::size_t i = 0; i < points.size(); ++i)
        if (score[i] < best.mape) best = {points[i].degree, points[i].l1, points[i].l2, score[i]};
    return best;
}

} // namespace detail

/// Nested cross-validation over the outer loops of `plan`. Outer loops run
/// one after another; each one designs features (when asked) and tunes the
/// model on its own training cells only.
inline EvalReport nested_evaluate(const EvalData& data, const ingest::FoldPlan& plan, const EvalConfig& cfg) {
    const auto& curves = data.curves;
    if (curves.protocol_ids.size() != static_cast<std::size_t>(curves.rows()))
        throw ShapeError("nested_evaluate: every row needs a protocol id");
    if (cfg.source == FeatureSource::protocol && data.protocol_x.rows() != curves.rows())
        throw ShapeError("nested_evaluate: protocol features are not row-aligned with the curves");
    if (cfg.model != ModelFamily::dummy && cfg.source == FeatureSource::none)
        throw ConfigError("a fitted model needs a feature source");
    const Eigen::VectorXd life = curves.cycle_life();
    if ((life.array() <= 0.0).any()) throw ValidationError("cycle life must be positive");

    EvalReport report;
    report.source = cfg.source;
    report.model = cfg.model;
    for (int g = 0; g < plan.outer_loops(); ++g) {
        LoopResult r;
        r.loop = g + 1;
        const auto outer = ingest::outer_split(curves, plan, g);
        r.n_train = outer.train.size();
        r.n_test = outer.test.size();
        if (outer.train.empty() || outer.test.empty()) {
            r.failed = true;
            r.failure = "EmptyInput";
            report.loops.push_back(std::move(r));
            continue;
        }
        const auto train = curves.subset(outer.train);
        const Eigen::VectorXd life_train = detail::rows_of(life, outer.train);
        const Eigen::VectorXd life_test = detail::rows_of(life, outer.test);
        std::set<std::string> test_ids;
        for (auto i : outer.test) test_ids.insert(curves.cell_ids.empty() ? std::to_string(i) : curves.cell_ids[static_cast<std::size_t>(i)]);
        std::set<std::string> inner_seen;
        auto see = [&](const std::vector<Eigen::Index>& rows) {
            for (auto i : rows) inner_seen.insert(train.cell_ids.empty() ? std::to_string(outer.train[static_cast<std::size_t>(i)]) : train.cell_ids[static_cast<std::size_t>(i)]);
        };

        Eigen::MatrixXd f_train, f_test;
        try {
            if (cfg.model != ModelFamily::dummy && cfg.source == FeatureSource::designed) {
                const auto d = feature_design::design_features(train, plan, g, cfg.design, cfg.solver);
                for (const auto& fold : d.score.folds) {
                    see(fold.train_rows);
                    see(fold.validation_rows);
                }
                r.lambda = d.lambda;
                r.boundaries = d.merged.boundaries.abscissa;
                for (const auto& s : d.specs) {
                    r.features.push_back(s.name(cfg.design.quantity));
                    r.windows.emplace_back(s.v1, s.v2);
                }
                f_train = feature_design::compute_features(train.x, d.specs);
                f_test = feature_design::compute_features(curves.subset(outer.test).x, d.specs);
            } else if (cfg.model != ModelFamily::dummy && cfg.source == FeatureSource::protocol) {
                f_train = detail::rows_of(data.protocol_x, outer.train);
                f_test = detail::rows_of(data.protocol_x, outer.test);
                r.features = data.protocol_names;
            }
        } catch (const NoFeasibleLambda& e) {
            r.failed = true;
            r.failure = e.name();
            report.loops.push_back(std::move(r));
            continue;
        }

        Eigen::VectorXd pred;
        if (cfg.model == ModelFamily::dummy || f_train.cols() == 0) {
            pred = Eigen::VectorXd::Constant(life_test.size(), life_train.mean());
        } else {
            std::vector<ingest::Split> folds;
            for (int k = 0; k < ingest::FoldPlan::kInnerFolds; ++k) {
                auto s = ingest::inner_split(train, plan, g, k);
                if (s.train.empty() || s.test.empty()) continue;
                see(s.train);
                see(s.test);
                folds.push_back(std::move(s));
            }
            if (folds.empty()) throw EmptyInput("outer loop " + std::to_string(g + 1) + " has no usable inner folds");
            const std::vector<int> degrees = cfg.model == ModelFamily::linear ? std::vector<int>{1} : cfg.degrees;
            const auto best = detail::tune(f_train, life_train, folds, degrees, cfg);
            r.degree = best.degree;
            r.l1 = best.l1;
            r.l2 = best.l2;
            r.inner_mape = best.mape;
            const Eigen::VectorXd log_life = life_train.array().log();
            const auto m = fit_elastic_net(polynomial_expand(f_train, best.degree), log_life, best.l1, best.l2, cfg.net);
            r.converged = m.converged;
            pred = m.predict(polynomial_expand(f_test, best.degree)).array().exp();
        }
        for (const auto& id : inner_seen) r.leakage += test_ids.count(id);
        r.metrics = metrics(pred, life_test);
        report.loops.push_back(std::move(r));
    }
    return report;
}

inline nlohmann::json to_json(const EvalReport& rep) {
    nlohmann::json j;
    j["model"] = to_string(rep.model);
    j["input"] = to_string(rep.source);
    j["completed_loops"] = rep.completed();
    j["total_loops"] = rep.loops.size();
    auto loops = nlohmann::json::array();
    for (const auto& l : rep.loops) {
        nlohmann::json e{{"loop", l.loop}, {"failed", l.failed}, {"n_train", l.n_train}, {"n_test", l.n_test}};
        if (l.failed) {
            e["failure"] = l.failure;
        } else {
            e["rmse"] = l.metrics.rmse;
            e["mape"] = l.metrics.mape;
            e["features"] = l.features;
            e["boundaries"] = l.boundaries;
            if (std::isfinite(l.lambda)) e["lambda"] = l.lambda;
            if (rep.model != ModelFamily::dummy)
                e["hyperparameters"] = {{"degree", l.degree}, {"l1", l.l1}, {"l2", l.l2}, {"inner_mape", l.inner_mape}};
            e["converged"] = l.converged;
            e["leakage"] = l.leakage;
        }
        loops.push_back(e);
    }
    j["loops"] = loops;
    if (rep.completed()) {
        const auto s = rep.summary();
        j["summary"] = {{"median_rmse", s.median_rmse}, {"max_rmse", s.max_rmse},
                        {"median_mape", s.median_mape}, {"max_mape", s.max_mape},
                        {"n_features", rep.n_features()}};
    }
    return j;
}

/// `model,input,n_features,median_rmse,max_rmse,median_mape,max_mape`.
inline void write_eval_summary(const std::filesystem::path& path, const std::vector<EvalReport>& reports) {
    using ingest::csv::format;
    std::ofstream out(path, std::ios::binary);
    out << "model,input,n_features,median_rmse,max_rmse,median_mape,max_mape\n";
    for (const auto& r : reports) {
        if (!r.completed()) continue;
        const auto s = r.summary();
        out << to_string(r.model) << ',' << to_string(r.source) << ',' << r.n_features() << ',' << format(s.median_rmse)
            << ',' << format(s.max_rmse) << ',' << format(s.median_mape) << ',' << format(s.max_mape) << '\n';
    }
}

} // namespace formation_lab::model_eval
