#pragma once

#include "formation_lab/errors.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace formation_lab::diagnostics {

struct CorrelationMatrix {
    std::vector<std::string> names;
    Eigen::MatrixXd r;
};

namespace detail {

inline std::vector<std::string> default_names(Eigen::Index p) {
    std::vector<std::string> out;
    for (Eigen::Index j = 0; j < p; ++j) out.push_back("x" + std::to_string(j + 1));
    return out;
}

inline void check_columns(const Eigen::MatrixXd& x) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const Eigen::ArrayXd d = x.col(j).array() - x.col(j).mean();
        if (!((d * d).sum() > 0.0))
            throw DegenerateColumn("column " + std::to_string(j + 1) + " has zero variance");
    }
}

/// Residual sum of squares of the least-squares fit of y on the columns of a.
inline double rss(const Eigen::MatrixXd& a, const Eigen::VectorXd& y) {
    if (a.cols() == 0) return y.squaredNorm();
    const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(y);
    return (y - a * coef).squaredNorm();
}

} // namespace detail

/// Sample Pearson correlation between every pair of columns.
inline CorrelationMatrix pearson_matrix(const Eigen::MatrixXd& x, std::vector<std::string> names = {}) {
    if (x.rows() < 2) throw ShapeError("pearson_matrix: need at least two observations");
    if (names.empty()) names = detail::default_names(x.cols());
    if (static_cast<Eigen::Index>(names.size()) != x.cols()) throw ShapeError("pearson_matrix: name count mismatch");
    detail::check_columns(x);
    Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
    const Eigen::RowVectorXd norms = c.colwise().norm();
    c = c.array().rowwise() / norms.array();
    Eigen::MatrixXd r = c.transpose() * c;
    r = r.cwiseMax(-1.0).cwiseMin(1.0);
    r.diagonal().setOnes();
    r = 0.5 * (r + r.transpose()).eval();
    return {std::move(names), std::move(r)};
}

/// 1 / (1 - R_j^2) from regressing each column on the others plus an
/// intercept; +inf when a column is an exact combination of the others.
inline std::vector<double> vif(const Eigen::MatrixXd& x) {
    const Eigen::Index n = x.rows(), p = x.cols();
    if (p < 1) throw ShapeError("vif: no columns");
    if (n <= p) throw ShapeError("vif: need more observations than columns");
    detail::check_columns(x);
    std::vector<double> out(static_cast<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) {
        Eigen::MatrixXd others(n, p);
        others.col(0).setOnes();
        for (Eigen::Index k = 0, c = 1; k < p; ++k)
            if (k != j) others.col(c++) = x.col(k);
        const Eigen::VectorXd target = x.col(j);
        const double sst = (target.array() - target.mean()).square().sum();
        const double res = detail::rss(others, target);
        out[static_cast<std::size_t>(j)] =
            res <= 1e-12 * sst ? std::numeric_limits<double>::infinity() : sst / res;
    }
    return out;
}

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
inline double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0 && b > 0.0)) throw DomainError("incomplete_beta: parameters must be positive");
    if (!(x >= 0.0 && x <= 1.0)) throw DomainError("incomplete_beta: x outside [0, 1]");
    if (x == 0.0 || x == 1.0) return x;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    // The fraction converges fast for x < (a + 1) / (a + b + 2); use the
    // symmetry relation otherwise.
    if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, 1.0 - x);
    constexpr double tiny = 1e-300, eps = 1e-15;
    double c = 1.0, d = 1.0 - (a + b) * x / (a + 1.0);
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double f = d;
    for (int m = 1; m <= 10000; ++m) {
        const double mm = m;
        double num = mm * (b - mm) * x / ((a + 2.0 * mm - 1.0) * (a + 2.0 * mm));
        d = 1.0 + num * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        f *= d * c;
        num = -(a + mm) * (a + b + mm) * x / ((a + 2.0 * mm) * (a + 2.0 * mm + 1.0));
        d = 1.0 + num * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        f *= delta;
        if (std::abs(delta - 1.0) < eps) break;
    }
    return std::exp(log_front) * f / a;
}

/// P(F > f) for an F(d1, d2) variable.
inline double f_survival(double f, double d1, double d2) {
    if (!(f > 0.0)) return 1.0;
    if (std::isinf(f)) return 0.0;
    return incomplete_beta(0.5 * d2, 0.5 * d1, d2 / (d2 + d1 * f));
}

/// A product of columns; the empty term is the intercept.
using Term = std::vector<std::size_t>;

struct FTest {
    double f = 0.0;
    double p_value = 1.0;
    int df1 = 0;
    int df2 = 0;
    double rss_null = 0.0;
    double rss_alt = 0.0;
};

inline Eigen::MatrixXd term_matrix(const Eigen::MatrixXd& x, const std::vector<Term>& terms) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Ones(x.rows(), static_cast<Eigen::Index>(terms.size()));
    for (std::size_t t = 0; t < terms.size(); ++t)
        for (auto c : terms[t]) {
            if (c >= static_cast<std::size_t>(x.cols())) throw ShapeError("term refers to a missing column");
            a.col(static_cast<Eigen::Index>(t)).array() *= x.col(static_cast<Eigen::Index>(c)).array();
        }
    return a;
}

/// Nested OLS F-test of `alternative` against `null`, which must be a subset.
inline FTest nested_f_test(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<Term>& null,
                           const std::vector<Term>& alternative) {
    if (x.rows() != y.size()) throw ShapeError("nested_f_test: row mismatch");
    auto canon = [](Term t) {
        std::sort(t.begin(), t.end());
        return t;
    };
    std::vector<Term> alt_sorted;
    for (const auto& t : alternative) alt_sorted.push_back(canon(t));
    for (const auto& t : null)
        if (std::find(alt_sorted.begin(), alt_sorted.end(), canon(t)) == alt_sorted.end())
            throw ShapeError("nested_f_test: alternative does not contain the null model");
    const Eigen::MatrixXd a0 = term_matrix(x, null), a1 = term_matrix(x, alternative);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> q0(a0), q1(a1);
    FTest out;
    const auto n = static_cast<int>(x.rows());
    const int p0 = a0.cols() ? static_cast<int>(q0.rank()) : 0;
    const int p1 = a1.cols() ? static_cast<int>(q1.rank()) : 0;
    out.df1 = p1 - p0;
    out.df2 = n - p1;
    if (out.df2 <= 0) throw ShapeError("nested_f_test: no residual degrees of freedom");
    out.rss_null = detail::rss(a0, y);
    out.rss_alt = std::min(detail::rss(a1, y), out.rss_null);
    const double scale = std::max(1.0, y.squaredNorm());
    if (out.rss_null <= 1e-24 * scale) throw TestUndefined("nested_f_test: the null model fits exactly");
    if (out.df1 == 0) return out;
    if (out.rss_alt <= 1e-24 * scale) {
        out.f = std::numeric_limits<double>::infinity();
        out.p_value = 0.0;
        return out;
    }
    out.f = ((out.rss_null - out.rss_alt) / out.df1) / (out.rss_alt / out.df2);
    out.p_value = f_survival(out.f, out.df1, out.df2);
    return out;
}

/// y = w1 x + w0 against y = w2 x^2 + w1 x + w0.
inline FTest quadratic_test(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    return nested_f_test(x, y, {{}, {0}}, {{}, {0}, {0, 0}});
}

/// Linear in x1 and x2 against the same plus the x1 x2 product.
inline FTest bilinear_test(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2, const Eigen::VectorXd& y) {
    Eigen::MatrixXd x(x1.size(), 2);
    x << x1, x2;
    return nested_f_test(x, y, {{}, {0}, {1}}, {{}, {0}, {1}, {0, 1}});
}

inline nlohmann::json to_json(const FTest& t) {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json("inf"); };
    return {{"F", num(t.f)}, {"p_value", t.p_value}, {"df1", t.df1}, {"df2", t.df2}};
}

/// Correlations, VIFs and quadratic / bilinear tests of every feature
/// against y.
inline nlohmann::json diagnostics_json(const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
                                       const std::vector<std::string>& names) {
    nlohmann::json j;
    Eigen::MatrixXd all(features.rows(), features.cols() + 1);
    all << features, y;
    auto all_names = names;
    all_names.push_back("y");
    const auto corr = pearson_matrix(all, all_names);
    j["names"] = all_names;
    auto rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < corr.r.rows(); ++i) {
        std::vector<double> row(corr.r.cols());
        for (Eigen::Index k = 0; k < corr.r.cols(); ++k) row[static_cast<std::size_t>(k)] = corr.r(i, k);
        rows.push_back(row);
    }
    j["pearson"] = rows;
    auto v = nlohmann::json::array();
    if (features.rows() > features.cols())
        for (double x : vif(features)) v.push_back(std::isfinite(x) ? nlohmann::json(x) : nlohmann::json("inf"));
    j["vif"] = v;
    auto tests = nlohmann::json::array();
    for (Eigen::Index c = 0; c < features.cols(); ++c) {
        auto t = to_json(quadratic_test(features.col(c), y));
        t["kind"] = "quadratic";
        t["terms"] = {names[static_cast<std::size_t>(c)]};
        tests.push_back(t);
    }
    for (Eigen::Index a = 0; a < features.cols(); ++a)
        for (Eigen::Index b = a + 1; b < features.cols(); ++b) {
            auto t = to_json(bilinear_test(features.col(a), features.col(b), y));
            t["kind"] = "bilinear";
            t["terms"] = {names[static_cast<std::size_t>(a)], names[static_cast<std::size_t>(b)]};
            tests.push_back(t);
        }
    j["f_tests"] = tests;
    return j;
}

} // namespace formation_lab::diagnostics
