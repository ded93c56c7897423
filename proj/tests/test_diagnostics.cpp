#include "formation_lab/diagnostics.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/special_functions/beta.hpp>

#include <random>

using namespace formation_lab;
using namespace formation_lab::diagnostics;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Eigen::VectorXd noise(std::mt19937_64& rng, Eigen::Index n) {
    std::normal_distribution<double> g;
    return Eigen::VectorXd::NullaryExpr(n, [&] { return g(rng); });
}

/// Kolmogorov-Smirnov distance of a sample from the uniform law on [0, 1].
double ks_uniform(std::vector<double> p) {
    std::sort(p.begin(), p.end());
    const auto n = static_cast<double>(p.size());
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        d = std::max({d, (static_cast<double>(i) + 1.0) / n - p[i], p[i] - static_cast<double>(i) / n});
    return d;
}

} // namespace

TEST_CASE("pearson matrix examples") {
    Eigen::MatrixXd x(4, 3);
    x << 1, -1, 1,
         2, -2, -1,
         3, -3, -1,
         4, -4, 1;
    const auto c = pearson_matrix(x, {"a", "b", "c"});
    CHECK(c.names == std::vector<std::string>{"a", "b", "c"});
    CHECK(c.r(0, 0) == 1.0);
    CHECK_THAT(c.r(0, 1), WithinAbs(-1.0, 1e-15));
    CHECK_THAT(c.r(0, 2), WithinAbs(0.0, 1e-12));
    CHECK(c.r(1, 2) == c.r(2, 1));
    Eigen::MatrixXd flat = x;
    flat.col(2).setConstant(2.0);
    CHECK_THROWS_AS(pearson_matrix(flat), DegenerateColumn);
    CHECK_THROWS_AS(pearson_matrix(x.topRows(1)), ShapeError);
    CHECK_THROWS_AS(pearson_matrix(x, {"a"}), ShapeError);
}

TEST_CASE("pearson matrix properties") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.1, 5.0), s(-3.0, 3.0);
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index n = 5 + static_cast<Eigen::Index>(rng() % 30), p = 2 + static_cast<Eigen::Index>(rng() % 5);
        Eigen::MatrixXd x(n, p);
        for (Eigen::Index j = 0; j < p; ++j) { x.col(j) = noise(rng, n); if (j) x.col(j) += 0.5 * x.col(j - 1); }
        const auto c = pearson_matrix(x);
        CHECK((c.r - c.r.transpose()).cwiseAbs().maxCoeff() == 0.0);
        CHECK(c.r.cwiseAbs().maxCoeff() <= 1.0);
        for (Eigen::Index j = 0; j < p; ++j) CHECK(c.r(j, j) == 1.0);
        // Reference: textbook formula pair by pair.
        for (Eigen::Index a = 0; a < p; ++a)
            for (Eigen::Index b = 0; b < p; ++b) {
                const double ma = x.col(a).mean(), mb = x.col(b).mean();
                double sab = 0, saa = 0, sbb = 0;
                for (Eigen::Index i = 0; i < n; ++i) {
                    sab += (x(i, a) - ma) * (x(i, b) - mb);
                    saa += (x(i, a) - ma) * (x(i, a) - ma);
                    sbb += (x(i, b) - mb) * (x(i, b) - mb);
                }
                CHECK_THAT(c.r(a, b), WithinAbs(sab / std::sqrt(saa * sbb), 1e-12));
            }
        // Positive affine maps of any column leave r unchanged.
        Eigen::MatrixXd y = x;
        const Eigen::Index j = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(p));
        y.col(j) = u(rng) * y.col(j).array() + s(rng);
        CHECK((pearson_matrix(y).r - c.r).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("vif examples") {
    // Mean-centred orthogonal columns.
    Eigen::MatrixXd h(8, 3);
    h << 1, 1, 1,
         1, 1, -1,
         1, -1, 1,
         1, -1, -1,
         -1, 1, 1,
         -1, 1, -1,
         -1, -1, 1,
         -1, -1, -1;
    for (double v : vif(h)) CHECK_THAT(v, WithinAbs(1.0, 1e-10));

    // Two columns with sample correlation exactly 0.9.
    std::mt19937_64 rng(3);
    const Eigen::Index n = 200;
    Eigen::VectorXd a = noise(rng, n), b = noise(rng, n);
    a.array() -= a.mean();
    b -= b.dot(a) / a.squaredNorm() * a;
    b.array() -= b.mean();
    a.normalize();
    b.normalize();
    Eigen::MatrixXd x(n, 2);
    x << a, 0.9 * a + std::sqrt(1 - 0.81) * b;
    for (double v : vif(x)) CHECK_THAT(v, WithinAbs(1.0 / (1.0 - 0.81), 1e-3));

    Eigen::MatrixXd dup(n, 3);
    dup << a, b, a;
    const auto d = vif(dup);
    CHECK(std::isinf(d[0]));
    CHECK(std::isinf(d[2]));
    CHECK(std::isfinite(d[1]));
    CHECK_THROWS_AS(vif(h.topRows(3)), ShapeError);
}

TEST_CASE("vif is at least one") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index n = 20, p = 1 + static_cast<Eigen::Index>(rng() % 6);
        Eigen::MatrixXd x(n, p);
        for (Eigen::Index j = 0; j < p; ++j) {
            x.col(j) = noise(rng, n);
            if (j) x.col(j) += 0.7 * x.col(j - 1);
        }
        for (double v : vif(x)) CHECK(v >= 1.0 - 1e-12);
    }
}

TEST_CASE("incomplete beta against boost") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ab(0.1, 200.0), xs(0.0, 1.0);
    for (int trial = 0; trial < 2000; ++trial) {
        const double a = ab(rng), b = ab(rng), x = xs(rng);
        CHECK_THAT(incomplete_beta(a, b, x), WithinAbs(boost::math::ibeta(a, b, x), 1e-10));
    }
    CHECK(incomplete_beta(2, 3, 0.0) == 0.0);
    CHECK(incomplete_beta(2, 3, 1.0) == 1.0);
    CHECK_THROWS_AS(incomplete_beta(-1, 3, 0.5), DomainError);
    for (int d1 : {1, 2, 5})
        for (int d2 : {3, 10, 97})
            for (double f : {0.1, 1.0, 4.0, 30.0})
                CHECK_THAT(f_survival(f, d1, d2),
                           WithinAbs(boost::math::cdf(boost::math::complement(boost::math::fisher_f(d1, d2), f)), 1e-10));
}

TEST_CASE("nested f test examples") {
    std::mt19937_64 rng(6);
    const Eigen::Index n = 60;
    const Eigen::VectorXd x = noise(rng, n);
    const Eigen::VectorXd y = x.array().square().matrix() + 0.05 * noise(rng, n);
    const auto q = quadratic_test(x, y);
    CHECK(q.df1 == 1);
    CHECK(q.df2 == n - 3);
    CHECK(q.p_value < 1e-6);

    const auto same = nested_f_test(x, y, {{}, {0}}, {{0}, {}});
    CHECK(same.f == 0.0);
    CHECK(same.p_value == 1.0);

    // Hand check of the statistic.
    Eigen::MatrixXd a0(n, 2), a1(n, 3);
    a0 << Eigen::VectorXd::Ones(n), x;
    a1 << a0, x.array().square().matrix();
    const double r0 = (y - a0 * a0.householderQr().solve(y)).squaredNorm();
    const double r1 = (y - a1 * a1.householderQr().solve(y)).squaredNorm();
    CHECK_THAT(q.f, WithinRel((r0 - r1) / (r1 / static_cast<double>(n - 3)), 1e-9));

    // F is unchanged by affine rescaling of y.
    const Eigen::VectorXd y2 = (3.5 * y.array() - 7.0).matrix();
    CHECK_THAT(quadratic_test(x, y2).f, WithinRel(q.f, 1e-9));

    const Eigen::VectorXd line = (2.0 * x.array() + 1.0).matrix();
    CHECK_THROWS_AS(quadratic_test(x, line), TestUndefined);
    CHECK_THROWS_AS(nested_f_test(x, y, {{0, 0}}, {{}, {0}}), ShapeError);
    CHECK_THROWS_AS(nested_f_test(x.head(3), y.head(3), {{}}, {{}, {0}, {0, 0}}), ShapeError);

    const Eigen::VectorXd x2 = noise(rng, n);
    const Eigen::VectorXd yb = (x.array() * x2.array()).matrix() + 0.05 * noise(rng, n);
    CHECK(bilinear_test(x, x2, yb).p_value < 1e-6);
}

TEST_CASE("null p-values are uniform") {
    std::mt19937_64 rng(7);
    std::vector<double> pq, pb;
    for (int trial = 0; trial < 1000; ++trial) {
        const Eigen::VectorXd x = noise(rng, 40), x2 = noise(rng, 40), y = noise(rng, 40);
        pq.push_back(quadratic_test(x, y).p_value);
        pb.push_back(bilinear_test(x, x2, y).p_value);
    }
    CHECK(ks_uniform(pq) < 0.1);
    CHECK(ks_uniform(pb) < 0.1);
}

TEST_CASE("diagnostics json") {
    std::mt19937_64 rng(8);
    Eigen::MatrixXd f(30, 2);
    f << noise(rng, 30), noise(rng, 30);
    const Eigen::VectorXd y = f.col(0) + 0.3 * noise(rng, 30);
    const auto j = diagnostics_json(f, y, {"diff_Q_3.57_3.60", "mean_Q_3.60_3.66"});
    CHECK(j["names"].size() == 3);
    CHECK(j["pearson"].size() == 3);
    CHECK(j["vif"].size() == 2);
    CHECK(j["f_tests"].size() == 3);
    CHECK(j["f_tests"][2]["kind"] == "bilinear");
}
