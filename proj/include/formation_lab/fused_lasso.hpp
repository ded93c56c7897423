#pragma once

// Fused lasso regression with a first-difference penalty:
//
//     minimize  1/2 ||y - X b||^2 + lambda * sum_j |b_{j+1} - b_j|
//
// Solved through b = L a with L the lower-triangular matrix of ones, which
// turns the problem into a lasso on Z = X L whose first coefficient is
// unpenalized. Z is column-normalized (an exact reweighting of the l1
// penalty) and the lasso is solved by a feature-sign active-set search;
// FISTA with adaptive restart polishes any point the search fails to certify.

#include "formation_lab/errors.hpp"
#include "formation_lab/ingest/standardize.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace formation_lab::fused_lasso {

struct Options {
    double objective_tolerance = 1e-10;  ///< relative objective change
    std::size_t max_iterations = 200000;
    double kkt_tolerance = 1e-6;
    int power_iterations = 50;
};

struct Fit {
    Eigen::VectorXd beta;
    double lambda = 0.0;
    std::size_t iterations = 0;
    double objective_value = 0.0;
    double kkt_residual = 0.0;
    bool converged = false;
};

/// Sum of |b_{j+1} - b_j|.
inline double total_variation(const Eigen::VectorXd& beta) {
    double s = 0.0;
    for (Eigen::Index j = 0; j + 1 < beta.size(); ++j) s += std::abs(beta(j + 1) - beta(j));
    return s;
}

inline double objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& beta, double lambda) {
    return 0.5 * (y - x * beta).squaredNorm() + lambda * total_variation(beta);
}

namespace detail {

/// g_k = sum_{j >= k} c_j : the gradient with respect to the increments a_k.
inline Eigen::VectorXd reverse_cumsum(const Eigen::VectorXd& c) {
    Eigen::VectorXd g(c.size());
    double acc = 0.0;
    for (Eigen::Index k = c.size() - 1; k >= 0; --k) {
        acc += c(k);
        g(k) = acc;
    }
    return g;
}

} // namespace detail

/// Largest violation of the subgradient optimality conditions. With
/// g = L^T X^T (X b - y) and a = increments of b: g_0 must vanish; on a jump
/// g_k = -lambda sign(a_k); on a flat stretch |g_k| <= lambda.
inline double kkt_residual(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& beta, double lambda) {
    const Eigen::VectorXd c = x.transpose() * (x * beta - y);
    const Eigen::VectorXd g = detail::reverse_cumsum(c);
    double worst = std::abs(g(0));
    for (Eigen::Index k = 1; k < beta.size(); ++k) {
        const double a = beta(k) - beta(k - 1);
        const double v = a != 0.0 ? std::abs(g(k) + (a > 0.0 ? lambda : -lambda))
                                  : std::max(0.0, std::abs(g(k)) - lambda);
        worst = std::max(worst, v);
    }
    return worst;
}

/// Standardized design with the cumulative-sum reparameterization cached,
/// so a lambda path reuses it.
class ChainProblem {
public:
    /// Relative singular value below which active columns count as dependent.
    static constexpr double kRankTolerance = 1e-10;

    ChainProblem(Eigen::MatrixXd x, Eigen::VectorXd y, int power_iterations = 50)
        : x_(std::move(x)), y_(std::move(y)) {
        if (x_.rows() != y_.size())
            throw ShapeError("fused lasso: X has " + std::to_string(x_.rows()) +
                             " rows but y has " + std::to_string(y_.size()));
        if (x_.rows() < 2 || x_.cols() < 2)
            throw ShapeError("fused lasso: need n >= 2 and p >= 2");
        const Eigen::Index p = x_.cols();
        z_.resize(x_.rows(), p);
        z_.col(p - 1) = x_.col(p - 1);
        for (Eigen::Index k = p - 2; k >= 0; --k) z_.col(k) = z_.col(k + 1) + x_.col(k);
        scale_.resize(p);
        for (Eigen::Index k = 0; k < p; ++k) {
            const double nrm = z_.col(k).norm();
            scale_(k) = nrm > 0.0 ? nrm : 1.0;
            z_.col(k) /= scale_(k);
        }
        gram_.g = z_.transpose() * z_;
        gram_.b = z_.transpose() * y_;
        lipschitz_ = estimate_lipschitz(power_iterations);
        compute_lambda_max();
    }

    const Eigen::MatrixXd& x() const { return x_; }
    const Eigen::VectorXd& y() const { return y_; }
    Eigen::Index n() const { return x_.rows(); }
    Eigen::Index p() const { return x_.cols(); }

    /// Smallest lambda at which the constant coefficient vector is optimal.
    double lambda_max() const { return lambda_max_; }
    /// Least-squares optimal constant coefficient vector.
    const Eigen::VectorXd& constant_solution() const { return constant_beta_; }

    Fit solve(double lambda, const Options& opts = {},
              const Eigen::VectorXd* warm_beta = nullptr) const {
        if (!(lambda >= 0.0)) throw ShapeError("fused lasso: lambda must be >= 0");
        if (warm_beta && warm_beta->size() != p())
            throw ShapeError("fused lasso: warm start length");
        Fit fit;
        fit.lambda = lambda;
        if (lambda >= lambda_max_) {
            fit.beta = constant_solution();
        } else if (lambda == 0.0) {
            fit.beta = x_.completeOrthogonalDecomposition().solve(y_);
        } else {
            Eigen::VectorXd a = warm_beta ? to_scaled(*warm_beta) : to_scaled(constant_beta_);
            fit.iterations = active_set(a, lambda, opts);
            fit.beta = to_beta(a);
        }
        finish(fit, opts);
        if (!fit.converged && lambda > 0.0) {
            Eigen::VectorXd a = to_scaled(fit.beta);
            fit.iterations += proximal_gradient(a, lambda, opts);
            fit.beta = to_beta(a);
            finish(fit, opts);
        }
        return fit;
    }

private:
    struct Gram {
        Eigen::MatrixXd g;  ///< Z^T Z
        Eigen::VectorXd b;  ///< Z^T y
    };

    /// Feature-sign active-set search on the reweighted lasso. Each step
    /// solves the sign-constrained quadratic on the active set exactly, then
    /// line-searches over the sign changes between the current point and
    /// that solution. Terminates when no inactive coordinate violates its
    /// subgradient bound. Returns the number of active-set steps taken.
    std::size_t active_set(Eigen::VectorXd& a, double lambda, const Options& opts) const {
        const Eigen::Index p = this->p();
        const Gram& gram = this->gram();
        // Unscaled violation margin for admitting a coordinate.
        const double admit = 0.1 * opts.kkt_tolerance;
        auto weight = [&](Eigen::Index k) { return k == 0 ? 0.0 : lambda / scale_(k); };

        std::vector<Eigen::Index> act{0};
        for (Eigen::Index k = 1; k < p; ++k)
            if (a(k) != 0.0) act.push_back(k);
        Eigen::VectorXd theta = Eigen::VectorXd::Zero(p);
        for (Eigen::Index k = 1; k < p; ++k) theta(k) = a(k) > 0.0 ? 1.0 : (a(k) < 0.0 ? -1.0 : 0.0);

        auto gradient = [&]() {
            Eigen::VectorXd g = -gram.b;
            for (Eigen::Index k : act)
                if (a(k) != 0.0) g.noalias() += gram.g.col(k) * a(k);
            return g;
        };

        std::size_t steps = 0;
        const std::size_t cap = std::max<std::size_t>(opts.max_iterations / 100, 1000);
        while (steps < cap) {
            // Optimize over the current active set.
            for (int inner = 0; inner < 10 * static_cast<int>(p) && steps < cap; ++inner) {
                ++steps;
                const auto m = static_cast<Eigen::Index>(act.size());
                Eigen::MatrixXd gaa(m, m);
                Eigen::VectorXd rhs(m), cur(m), lin(m);
                for (Eigen::Index r = 0; r < m; ++r) {
                    const Eigen::Index kr = act[static_cast<std::size_t>(r)];
                    for (Eigen::Index c = 0; c < m; ++c)
                        gaa(r, c) = gram.g(kr, act[static_cast<std::size_t>(c)]);
                    lin(r) = gram.b(kr);
                    rhs(r) = lin(r) - weight(kr) * theta(kr);
                    cur(r) = a(kr);
                }
                Eigen::VectorXd target = solve_active(act, gaa, rhs, lin - rhs, cur);

                auto local_obj = [&](const Eigen::VectorXd& v) {
                    double pen = 0.0;
                    for (Eigen::Index r = 0; r < m; ++r)
                        pen += weight(act[static_cast<std::size_t>(r)]) * std::abs(v(r));
                    return 0.5 * v.dot(gaa * v) - v.dot(lin) + pen;
                };
                // Candidates: the target and every zero crossing on the way.
                Eigen::VectorXd best = target;
                double best_obj = local_obj(target);
                for (Eigen::Index r = 0; r < m; ++r) {
                    if (cur(r) == 0.0 || target(r) * cur(r) > 0.0) continue;
                    const double t = cur(r) / (cur(r) - target(r));
                    Eigen::VectorXd v = cur + t * (target - cur);
                    v(r) = 0.0;
                    const double o = local_obj(v);
                    if (o < best_obj) {
                        best_obj = o;
                        best = v;
                    }
                }
                for (Eigen::Index r = 0; r < m; ++r) a(act[static_cast<std::size_t>(r)]) = best(r);

                std::vector<Eigen::Index> kept{0};
                for (std::size_t r = 1; r < act.size(); ++r)
                    if (a(act[r]) != 0.0) kept.push_back(act[r]);
                    else theta(act[r]) = 0.0;
                act.swap(kept);
                for (std::size_t r = 1; r < act.size(); ++r)
                    theta(act[r]) = a(act[r]) > 0.0 ? 1.0 : -1.0;

                const Eigen::VectorXd g = gradient();
                double worst = 0.0;
                for (Eigen::Index k : act)
                    worst = std::max(worst, std::abs(g(k) + weight(k) * theta(k)) * scale_(k));
                if (worst <= admit) break;
            }

            const Eigen::VectorXd g = gradient();
            Eigen::Index pick = -1;
            double pick_violation = admit;
            for (Eigen::Index k = 1; k < p; ++k) {
                if (a(k) != 0.0) continue;
                const double v = std::abs(g(k)) * scale_(k) - lambda;
                if (v > pick_violation) {
                    pick_violation = v;
                    pick = k;
                }
            }
            if (pick < 0) break;
            theta(pick) = g(pick) > 0.0 ? -1.0 : 1.0;
            // Exact coordinate step, so every active coefficient starts nonzero
            // with its assigned sign and the next line search strictly descends.
            const double curv = gram.g(pick, pick);
            if (!(curv > 0.0)) break;
            a(pick) = theta(pick) * (std::abs(g(pick)) - weight(pick)) / curv;
            act.insert(std::upper_bound(act.begin(), act.end(), pick), pick);
        }
        return steps;
    }

    /// Minimizer of 1/2 |Z_A v - y|^2 + c^T v. Through R v = Q^T y - R^-T c
    /// with Z_A = Q R, which keeps the accuracy of nearly collinear columns
    /// that the normal equations lose.
    ///
    /// Dependent columns leave a null space N. If c has a component along N
    /// the quadratic is unbounded below on it, so the step follows that ray
    /// from `cur` to its first zero crossing; otherwise it returns the
    /// minimizer closest to `cur`.
    Eigen::VectorXd solve_active(const std::vector<Eigen::Index>& act, const Eigen::MatrixXd& gaa,
                                 const Eigen::VectorXd& rhs, const Eigen::VectorXd& c,
                                 const Eigen::VectorXd& cur) const {
        const auto m = static_cast<Eigen::Index>(act.size());
        Eigen::MatrixXd za(n(), m);
        for (Eigen::Index r = 0; r < m; ++r) za.col(r) = z_.col(act[static_cast<std::size_t>(r)]);
        if (m <= n()) {
            const Eigen::HouseholderQR<Eigen::MatrixXd> qr(za);
            const auto rr = qr.matrixQR().topRows(m).template triangularView<Eigen::Upper>();
            const Eigen::VectorXd diag = qr.matrixQR().diagonal().cwiseAbs();
            if (diag.minCoeff() > kRankTolerance * diag.maxCoeff()) {
                const Eigen::VectorXd qty = (qr.householderQ().transpose() * y_).head(m);
                Eigen::VectorXd v = rr.solve(qty - rr.transpose().solve(c));
                // Iterative refinement against the exact normal-equation residual.
                for (int sweep = 0; sweep < 3; ++sweep) {
                    const Eigen::VectorXd res = za.transpose() * (y_ - za * v) - c;
                    v += rr.solve(rr.transpose().solve(res));
                }
                return v;
            }
        }
        const Eigen::JacobiSVD<Eigen::MatrixXd> svd(za, Eigen::ComputeThinU | Eigen::ComputeFullV);
        const Eigen::VectorXd& sv = svd.singularValues();
        const double cut = kRankTolerance * sv(0);
        Eigen::Index rank = 0;
        while (rank < sv.size() && sv(rank) > cut) ++rank;
        const Eigen::MatrixXd null = svd.matrixV().rightCols(m - rank);
        const Eigen::VectorXd d = -(null * (null.transpose() * c));
        if (d.norm() > 1e-12 * std::max(1.0, c.norm())) {
            double t_max = std::numeric_limits<double>::infinity();
            Eigen::Index hit = -1;
            for (Eigen::Index r = 0; r < m; ++r)
                if (cur(r) * d(r) < 0.0 && -cur(r) / d(r) < t_max) {
                    t_max = -cur(r) / d(r);
                    hit = r;
                }
            if (hit >= 0) {
                Eigen::VectorXd v = cur + t_max * d;
                v(hit) = 0.0;
                return v;
            }
        }
        // Closest minimizer: cur plus the minimum-norm correction.
        const Eigen::VectorXd res = gaa * cur - rhs;
        Eigen::VectorXd step = Eigen::VectorXd::Zero(m);
        const Eigen::MatrixXd vr = svd.matrixV().leftCols(rank);
        const Eigen::VectorXd proj = vr.transpose() * res;
        for (Eigen::Index k = 0; k < rank; ++k) step -= vr.col(k) * (proj(k) / (sv(k) * sv(k)));
        return cur + step;
    }

    /// FISTA with adaptive restart; used to polish an uncertified point.
    std::size_t proximal_gradient(Eigen::VectorXd& xk, double lambda, const Options& opts) const {
        const Eigen::Index p = this->p();
        const double step = 1.0 / lipschitz_;
        Eigen::VectorXd thresh(p);
        thresh(0) = 0.0;
        for (Eigen::Index k = 1; k < p; ++k) thresh(k) = lambda * step / scale_(k);

        Eigen::VectorXd rx = z_ * xk - y_;
        double obj = penalized(rx, xk, lambda);
        Eigen::VectorXd v = xk, rv = rx, xn(p), rn(x_.rows()), g(p);
        double t = 1.0;
        std::size_t it = 0;
        while (it < opts.max_iterations) {
            ++it;
            g.noalias() = z_.transpose() * rv;
            for (Eigen::Index k = 0; k < p; ++k) {
                const double u = v(k) - step * g(k);
                const double th = thresh(k);
                xn(k) = u > th ? u - th : (u < -th ? u + th : 0.0);
            }
            rn.noalias() = z_ * xn;
            rn -= y_;
            const double obj_new = penalized(rn, xn, lambda);

            // Drop momentum when it points uphill.
            const bool restart = (v - xn).dot(xn - xk) > 0.0 || obj_new > obj;
            const double t_new = restart ? 1.0 : 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            const double mom = restart ? 0.0 : (t - 1.0) / t_new;
            v = xn + mom * (xn - xk);
            rv = rn + mom * (rn - rx);
            t = t_new;

            const double change = std::abs(obj - obj_new) /
                                  std::max(std::abs(obj_new), std::numeric_limits<double>::min());
            xk.swap(xn);
            rx.swap(rn);
            obj = obj_new;
            if (change < opts.objective_tolerance || it % 1000 == 0) {
                if (kkt_residual(x_, y_, to_beta(xk), lambda) <= opts.kkt_tolerance) break;
            }
        }
        return it;
    }

    const Gram& gram() const { return gram_; }

    Eigen::VectorXd to_scaled(const Eigen::VectorXd& beta) const {
        Eigen::VectorXd a(beta.size());
        a(0) = beta(0) * scale_(0);
        for (Eigen::Index k = 1; k < beta.size(); ++k) a(k) = (beta(k) - beta(k - 1)) * scale_(k);
        return a;
    }

    double penalized(const Eigen::VectorXd& r, const Eigen::VectorXd& g, double lambda) const {
        double pen = 0.0;
        for (Eigen::Index k = 1; k < g.size(); ++k) pen += std::abs(g(k)) / scale_(k);
        return 0.5 * r.squaredNorm() + lambda * pen;
    }

    Eigen::VectorXd to_beta(const Eigen::VectorXd& g) const {
        Eigen::VectorXd beta(g.size());
        double acc = 0.0;
        for (Eigen::Index k = 0; k < g.size(); ++k) {
            acc += g(k) / scale_(k);
            beta(k) = acc;
        }
        return beta;
    }

    void finish(Fit& fit, const Options& opts) const {
        fit.objective_value = objective(x_, y_, fit.beta, fit.lambda);
        fit.kkt_residual = kkt_residual(x_, y_, fit.beta, fit.lambda);
        fit.converged = fit.kkt_residual <= opts.kkt_tolerance;
    }

    double estimate_lipschitz(int iterations) const {
        Eigen::VectorXd v = Eigen::VectorXd::Ones(p()) / std::sqrt(static_cast<double>(p()));
        double est = 0.0;
        for (int i = 0; i < iterations; ++i) {
            Eigen::VectorXd w = z_.transpose() * (z_ * v);
            est = w.norm();
            if (est == 0.0) return 1.0;
            v = w / est;
        }
        // Power iteration approaches from below.
        return 1.01 * est;
    }

    void compute_lambda_max() {
        const Eigen::VectorXd row_sums = x_.rowwise().sum();
        const double denom = row_sums.squaredNorm();
        const double level = denom > 0.0 ? row_sums.dot(y_) / denom : 0.0;
        constant_beta_ = Eigen::VectorXd::Constant(p(), level);
        const Eigen::VectorXd c = x_.transpose() * (x_ * constant_beta_ - y_);
        const Eigen::VectorXd g = detail::reverse_cumsum(c);
        lambda_max_ = g.tail(p() - 1).cwiseAbs().maxCoeff();
    }

    Eigen::MatrixXd x_;
    Eigen::VectorXd y_;
    Eigen::MatrixXd z_;
    Eigen::VectorXd scale_;
    double lipschitz_ = 1.0;
    double lambda_max_ = 0.0;
    Eigen::VectorXd constant_beta_;
    Gram gram_;
};

inline Fit solve(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                 const Options& opts = {}) {
    return ChainProblem(x, y, opts.power_iterations).solve(lambda, opts);
}

/// One fit per lambda; each warm-started from its predecessor. The grid must
/// be strictly descending.
inline std::vector<Fit> solve_path(const ChainProblem& problem, const std::vector<double>& lambdas,
                                   const Options& opts = {}) {
    for (std::size_t i = 1; i < lambdas.size(); ++i)
        if (!(lambdas[i] < lambdas[i - 1]))
            throw ShapeError("solve_path: lambda grid must be strictly descending");
    std::vector<Fit> fits;
    fits.reserve(lambdas.size());
    for (double lam : lambdas) {
        const Eigen::VectorXd* warm = fits.empty() ? nullptr : &fits.back().beta;
        fits.push_back(problem.solve(lam, opts, warm));
    }
    return fits;
}

inline std::vector<Fit> solve_path(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                   const std::vector<double>& lambdas, const Options& opts = {}) {
    return solve_path(ChainProblem(x, y, opts.power_iterations), lambdas, opts);
}

/// `count` log-spaced values from lambda_max down to lambda_max * min_ratio.
inline std::vector<double> lambda_grid(double lambda_max, std::size_t count = 60,
                                       double min_ratio = 1e-4) {
    std::vector<double> grid(count);
    if (count == 1) {
        grid[0] = lambda_max;
        return grid;
    }
    const double lo = std::log(min_ratio);
    for (std::size_t i = 0; i < count; ++i)
        grid[i] = lambda_max * std::exp(lo * static_cast<double>(i) / static_cast<double>(count - 1));
    return grid;
}

/// Standardized predictions mapped back to raw cycle life.
inline Eigen::VectorXd predict(const Fit& fit, const Eigen::MatrixXd& x_std,
                               const ingest::StandardizationParams& params) {
    if (x_std.cols() != fit.beta.size())
        throw ShapeError("predict: matrix has " + std::to_string(x_std.cols()) +
                         " columns, coefficients have " + std::to_string(fit.beta.size()));
    return ingest::to_cycle_life(x_std * fit.beta, params);
}

} // namespace formation_lab::fused_lasso
