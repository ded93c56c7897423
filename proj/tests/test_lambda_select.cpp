#include "formation_lab/lambda_select.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

using namespace formation_lab;
using namespace formation_lab::lambda_select;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

/// DTW straight from its definition: the cheapest of all monotone warping
/// paths, enumerated recursively.
double dtw_brute(const std::vector<double>& a, const std::vector<double>& b, std::size_t i,
                 std::size_t j) {
    const double c = std::abs(a[i] - b[j]);
    if (i == 0 && j == 0) return c;
    double best = std::numeric_limits<double>::infinity();
    if (i > 0) best = std::min(best, dtw_brute(a, b, i - 1, j));
    if (j > 0) best = std::min(best, dtw_brute(a, b, i, j - 1));
    if (i > 0 && j > 0) best = std::min(best, dtw_brute(a, b, i - 1, j - 1));
    return c + best;
}

double dtw_brute(const std::vector<double>& a, const std::vector<double>& b) {
    return dtw_brute(a, b, a.size() - 1, b.size() - 1);
}

std::vector<double> random_seq(std::mt19937_64& rng, std::size_t max_len = 8) {
    std::uniform_int_distribution<std::size_t> len(1, max_len);
    std::uniform_int_distribution<int> small(-3, 3);
    std::normal_distribution<double> g;
    std::vector<double> v(len(rng));
    // Mix integer-valued entries (exact ties) with continuous ones.
    const bool ints = rng() % 2;
    for (auto& x : v) x = ints ? small(rng) : g(rng);
    return v;
}

Eigen::VectorXd to_vec(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

} // namespace

TEST_CASE("dtw examples") {
    CHECK(dtw_distance(std::vector<double>{0, 1, 2}, std::vector<double>{0, 1, 2}) == 0.0);
    CHECK(dtw_distance(std::vector<double>{0}, std::vector<double>{3}) == 3.0);
    const std::vector<double> a{0, 2, 0}, b{0, 0};
    CHECK(dtw_distance(a, b) == dtw_brute(a, b));
    CHECK(dtw_distance(a, b) == 2.0);
    CHECK_THROWS_AS(dtw_distance(std::vector<double>{}, std::vector<double>{1}), EmptyInput);
}

TEST_CASE("dtw equals the exhaustive recursion") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 300; ++trial) {
        const auto a = random_seq(rng);
        const auto b = random_seq(rng);
        const double d = dtw_distance(a, b);
        CHECK(d == dtw_brute(a, b));
        CHECK(d == dtw_distance(b, a));
        CHECK(d >= 0.0);
    }
}

TEST_CASE("dtw vanishes on a zero-cost warp") {
    const std::vector<double> a{1, 1, 2, 3, 3, 3}, b{1, 2, 2, 3};
    CHECK(dtw_distance(a, b) == 0.0);
    CHECK(dtw_distance(a, std::vector<double>{1, 2, 4}) > 0.0);
}

TEST_CASE("dtw against zeros is the absolute sum") {
    std::mt19937_64 rng(32);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd m(50);
        for (auto& v : m) v = g(rng);
        CHECK_THAT(dtw_distance(Eigen::VectorXd::Zero(50), m), WithinRel(m.cwiseAbs().sum(), 1e-12));
    }
}

TEST_CASE("path length") {
    CHECK(path_length(Eigen::Vector3d(1, 1, 1)) == 0.0);
    CHECK(path_length(Eigen::Vector3d(0, 1, 0)) == 2.0);

    std::mt19937_64 rng(33);
    std::normal_distribution<double> g;
    Eigen::VectorXd b(1000);
    for (auto& v : b) v = g(rng);
    // Reference: differences first, then a sorted (smallest first) sum.
    std::vector<double> diffs;
    for (Eigen::Index j = 0; j + 1 < b.size(); ++j) diffs.push_back(std::abs(b(j) - b(j + 1)));
    std::sort(diffs.begin(), diffs.end());
    double ref = 0.0;
    for (double d : diffs) ref += d;
    CHECK_THAT(path_length(b), WithinRel(ref, 1e-12));
    CHECK_THAT(path_length((b.array() + 7.5).matrix()), WithinRel(path_length(b), 1e-12));
    CHECK_THAT(path_length(-3.0 * b), WithinRel(3.0 * path_length(b), 1e-12));
}

TEST_CASE("robustness ratio") {
    const Eigen::Vector4d base(0.0, 1.0, 1.0, -0.5);
    SECTION("identical vectors") {
        CHECK(robustness_ratio(std::vector<Eigen::VectorXd>(5, base)) == 0.0);
    }
    SECTION("one vector doubled") {
        std::vector<Eigen::VectorXd> betas(5, base);
        betas[4] = 2.0 * base;
        // Hand evaluation with the dynamic program and explicit zero sequences.
        double worst = 0.0;
        for (int k = 0; k < 5; ++k) {
            Eigen::VectorXd others = Eigen::VectorXd::Zero(4);
            for (int j = 0; j < 5; ++j)
                if (j != k) others += betas[static_cast<std::size_t>(j)];
            others /= 4.0;
            worst = std::max(worst, dtw_distance(betas[static_cast<std::size_t>(k)], others) /
                                        dtw_distance(Eigen::VectorXd::Zero(4), others));
        }
        CHECK_THAT(robustness_ratio(betas), WithinRel(worst, 1e-12));
        CHECK(worst > 0.0);
    }
    SECTION("all zero") {
        CHECK_THROWS_AS(robustness_ratio(std::vector<Eigen::VectorXd>(5, Eigen::VectorXd::Zero(4))),
                        DegenerateDenominator);
    }
    SECTION("scale invariant") {
        std::mt19937_64 rng(34);
        std::normal_distribution<double> g;
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<Eigen::VectorXd> betas(5, Eigen::VectorXd(30));
            for (auto& b : betas)
                for (auto& v : b) v = g(rng);
            auto scaled = betas;
            for (auto& b : scaled) b *= 3.7;
            CHECK_THAT(robustness_ratio(scaled), WithinRel(robustness_ratio(betas), 1e-12));
        }
    }
    SECTION("length mismatch") {
        CHECK_THROWS_AS(robustness_ratio({Eigen::VectorXd::Ones(3), Eigen::VectorXd::Ones(4)}),
                        ShapeError);
    }
}

namespace {

LambdaMetrics entry(double lambda, double mape, double se, double dtw, double len) {
    LambdaMetrics m;
    m.lambda = lambda;
    m.mean_mape = mape;
    m.se_mape = se;
    m.dtw_ratio = dtw;
    m.mean_path_length = len;
    return m;
}

} // namespace

TEST_CASE("select lambda") {
    SECTION("all feasible") {
        const std::vector ms{entry(3, 10, 1, 0.1, 1), entry(2, 10, 1, 0.1, 1), entry(1, 10, 1, 0.1, 1)};
        CHECK(select_lambda(ms) == 1.0);
    }
    SECTION("none feasible") {
        const std::vector ms{entry(3, 10, 1, 0.9, 1), entry(2, 10, 1, 0.1, 9)};
        CHECK_THROWS_AS(select_lambda(ms), NoFeasibleLambda);
    }
    SECTION("one feasible") {
        const std::vector ms{entry(3, 12, 1, 0.1, 1), entry(2, 10, 1, 0.1, 1),
                             entry(1, 10.5, 1, 0.8, 1)};
        CHECK(select_lambda(ms) == 2.0);
    }
    SECTION("one standard error band") {
        const std::vector ms{entry(3, 11.1, 1, 0.1, 1), entry(2, 10.9, 1, 0.1, 1),
                             entry(1, 10, 0.5, 0.1, 1), entry(0.5, 10.6, 1, 0.1, 1)};
        CHECK(select_lambda(ms) == 1.0);
        SelectionConstraints loose;
        loose.path_length_max = 10;
        CHECK(select_lambda(ms, loose) == 1.0);
    }
    SECTION("uncertified entries never qualify") {
        auto ms = std::vector{entry(2, 10, 1, 0.1, 1), entry(1, 5, 1, 0.1, 1)};
        ms[1].converged = false;
        CHECK(select_lambda(ms) == 2.0);
    }
    CHECK_THROWS_AS(select_lambda({}), EmptyInput);
}

TEST_CASE("removing an infeasible non-anchor lambda keeps the selection") {
    std::mt19937_64 rng(35);
    std::uniform_real_distribution<double> u(0, 1);
    int checked = 0;
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<LambdaMetrics> ms;
        for (int i = 0; i < 12; ++i)
            ms.push_back(entry(std::pow(0.7, i), 8 + 4 * u(rng), 0.5 * u(rng), u(rng) * 0.9,
                               u(rng) * 7));
        auto flagged = ms;
        apply_constraints(flagged);
        const auto anchor = std::min_element(ms.begin(), ms.end(), [](auto& a, auto& b) {
                                return a.mean_mape < b.mean_mape;
                            }) - ms.begin();
        double selected = -1;
        try {
            selected = select_lambda(ms);
        } catch (const NoFeasibleLambda&) {
        }
        for (std::size_t i = 0; i < ms.size(); ++i) {
            if (flagged[i].feasible() || static_cast<std::ptrdiff_t>(i) == anchor) continue;
            auto reduced = ms;
            reduced.erase(reduced.begin() + static_cast<std::ptrdiff_t>(i));
            double again = -1;
            try {
                again = select_lambda(reduced);
            } catch (const NoFeasibleLambda&) {
            }
            CHECK(again == selected);
            ++checked;
        }
    }
    CHECK(checked > 100);
}

namespace {

/// Curves on 200 points; the output depends on the integral of a bump
/// around point 120. `replicate` cells per protocol, protocols 1..n_prot.
ingest::CurveMatrix planted(std::mt19937_64& rng, int n_prot, int replicate, double noise) {
    std::normal_distribution<double> g;
    const Eigen::Index p = 200;
    ingest::CurveMatrix m;
    const Eigen::Index n = n_prot * replicate;
    m.x.resize(n, p);
    m.y.resize(n);
    m.y_is_log = true;
    m.grid.resize(static_cast<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) m.grid[static_cast<std::size_t>(j)] = 3.0 + 0.007 * static_cast<double>(j);
    Eigen::Index row = 0;
    for (int prot = 1; prot <= n_prot; ++prot)
        for (int r = 0; r < replicate; ++r, ++row) {
            const double a = g(rng), b = g(rng), c = g(rng);
            for (Eigen::Index j = 0; j < p; ++j) {
                const double v = static_cast<double>(j) / static_cast<double>(p);
                m.x(row, j) = 1.0 + 0.2 * a * v + 0.1 * b * std::sin(5 * v) +
                              0.1 * c * std::exp(-std::pow((v - 0.6) / 0.05, 2));
            }
            m.y(row) = std::log(600.0 * std::exp(0.3 * c + noise * g(rng)));
            m.protocol_ids.push_back(prot);
            m.cell_ids.push_back("c" + std::to_string(row));
        }
    return m;
}

ingest::FoldPlan plan_for(int n_prot, int test_protocols) {
    std::vector<ingest::CellManifestEntry> entries;
    for (int prot = 1; prot <= n_prot; ++prot) {
        ingest::CellManifestEntry e;
        e.cell_id = "p" + std::to_string(prot);
        e.protocol_id = prot;
        e.cycle_life = 100;
        e.outer_group = prot <= test_protocols ? 1 : 2 + prot % 4;
        entries.push_back(e);
    }
    return ingest::assign_folds(entries);
}

ingest::CurveMatrix outer_train(const ingest::CurveMatrix& m, const ingest::FoldPlan& plan) {
    return m.subset(ingest::outer_split(m, plan, 0).train);
}

} // namespace

TEST_CASE("scoring at lambda max gives constant coefficients") {
    std::mt19937_64 rng(36);
    const auto m = planted(rng, 20, 2, 0.05);
    const auto plan = plan_for(20, 4);
    const auto train = outer_train(m, plan);
    const auto grid = default_grid(train);
    // Above every inner lambda_max.
    const auto score = score_lambda_grid(train, plan, 0, {grid.front() * 10});
    REQUIRE(score.metrics.size() == 1);
    CHECK(score.metrics[0].mean_path_length < 1e-8);
    CHECK(score.metrics[0].feasible_interp);
}

TEST_CASE("identical inner training sets give zero dtw ratio") {
    // Every protocol carries the same three cells and each inner fold holds
    // two protocols, so every inner training set is the same multiset.
    std::mt19937_64 rng(37);
    const auto base = planted(rng, 1, 3, 0.05);
    ingest::CurveMatrix m;
    const int n_prot = 12;
    m.x.resize(3 * n_prot, base.cols());
    m.y.resize(3 * n_prot);
    m.y_is_log = true;
    m.grid = base.grid;
    for (int prot = 0; prot < n_prot; ++prot)
        for (int r = 0; r < 3; ++r) {
            m.x.row(prot * 3 + r) = base.x.row(r);
            m.y(prot * 3 + r) = base.y(r);
            m.protocol_ids.push_back(prot + 1);
        }
    const auto plan = plan_for(n_prot, 2);
    const auto train = outer_train(m, plan);
    const auto grid = default_grid(train, 10);
    const auto score = score_lambda_grid(train, plan, 0, grid);
    for (const auto& lm : score.metrics) CHECK(lm.dtw_ratio < 1e-9);
}

TEST_CASE("planted signal beats the mean predictor") {
    std::mt19937_64 rng(38);
    const auto m = planted(rng, 30, 2, 0.02);
    const auto plan = plan_for(30, 6);
    const auto train = outer_train(m, plan);
    const auto grid = default_grid(train, 30);
    const auto score = score_lambda_grid(train, plan, 0, grid);
    REQUIRE(score.metrics.size() == grid.size());
    CHECK(score.metrics.back().mean_mape < score.metrics.front().mean_mape);
    for (const auto& lm : score.metrics) {
        CHECK(lm.converged);
        CHECK(lm.se_mape >= 0.0);
        CHECK(lm.mean_path_length >= 0.0);
    }
    for (const auto& fold : score.folds) {
        CHECK(fold.path.size() == grid.size());
        for (auto i : fold.validation_rows)
            CHECK(std::find(fold.train_rows.begin(), fold.train_rows.end(), i) == fold.train_rows.end());
    }
    // Same answer with one worker and with several.
    set_thread_cap(1);
    const auto serial = score_lambda_grid(train, plan, 0, grid);
    set_thread_cap(4);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        CHECK(serial.metrics[i].mean_mape == score.metrics[i].mean_mape);
        CHECK(serial.metrics[i].dtw_ratio == score.metrics[i].dtw_ratio);
    }
    set_thread_cap(default_threads());
}

TEST_CASE("metrics and path export") {
    const auto dir = std::filesystem::temp_directory_path() / "formation_lab_lambda_export";
    std::filesystem::create_directories(dir);
    auto ms = std::vector{entry(2, 10, 1, 0.1, 1), entry(1, 9, 1, 0.9, 1)};
    apply_constraints(ms);
    write_lambda_metrics(dir / "lambda_metrics.csv", ms);
    std::ifstream in(dir / "lambda_metrics.csv");
    std::string header, row1, row2;
    std::getline(in, header);
    std::getline(in, row1);
    std::getline(in, row2);
    CHECK(header == "lambda,mean_mape,se_mape,dtw_ratio,mean_path_length,feasible");
    CHECK(row1 == "2,10,1,0.1,1,1");
    CHECK(row2 == "1,9,1,0.9,1,0");

    fused_lasso::Fit f;
    f.lambda = 0.5;
    f.beta = Eigen::Vector2d(1.5, -2);
    write_beta_path(dir / "beta_path.csv", {f}, {3.0, 3.1});
    std::ifstream bp(dir / "beta_path.csv");
    std::getline(bp, header);
    std::getline(bp, row1);
    CHECK(header == "lambda,grid_index,abscissa_value,beta");
    CHECK(row1 == "0.5,0,3,1.5");
    CHECK_THROWS_AS(write_beta_path(dir / "bad.csv", {f}, {3.0}), ShapeError);
    std::filesystem::remove_all(dir);
}
