#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace formation_lab::ingest {

/// Number of grid points every extracted curve is interpolated onto.
inline constexpr std::size_t kGridSize = 1000;

struct CellManifestEntry {
    std::string cell_id;
    int protocol_id = 0;
    double cc1_a = 0.0;
    double cc2_a = 0.0;
    double cv_v = 0.0;
    int n_ver = 0;
    double temp_c = 0.0;
    double t_ocv_s = 0.0;
    int cycle_life = 0;
    int outer_group = 0;
};

struct Sample {
    double time_s = 0.0;
    double current_a = 0.0;
    double voltage_v = 0.0;
    double capacity_ah = 0.0;
    double energy_wh = 0.0;
    double temp_c = 0.0;
    std::int64_t cycle_index = 0;
    std::int64_t step_index = 0;

    friend bool operator==(const Sample&, const Sample&) = default;
};

/// Raw formation record of one cell. Current is positive on charge.
struct CellTimeSeries {
    std::string cell_id;
    std::vector<Sample> samples;
};

enum class StepLabel { A, B, C };

enum class LocatorRule { first_charge, last_discharge, first_discharge };

/// Which contiguous block of samples forms a protocol step.
struct StepSpec {
    StepLabel step = StepLabel::B;
    /// Either a rule tag or an explicit list of (cycle_index, step_index).
    std::optional<LocatorRule> rule = LocatorRule::last_discharge;
    std::vector<std::pair<std::int64_t, std::int64_t>> pairs;

    static StepSpec from_rule(StepLabel step, LocatorRule rule) {
        return StepSpec{step, rule, {}};
    }
    static StepSpec from_pairs(StepLabel step,
                               std::vector<std::pair<std::int64_t, std::int64_t>> pairs) {
        return StepSpec{step, std::nullopt, std::move(pairs)};
    }
    /// The default locator for a step label: A first charge, B last
    /// discharge, C first discharge.
    static StepSpec for_label(StepLabel step) {
        switch (step) {
        case StepLabel::A: return from_rule(step, LocatorRule::first_charge);
        case StepLabel::C: return from_rule(step, LocatorRule::first_discharge);
        case StepLabel::B: break;
        }
        return from_rule(step, LocatorRule::last_discharge);
    }
};

enum class AbscissaKind { voltage, normalized_time, normalized_capacity };

/// Quantity sampled on the grid.
enum class OrdinateKind { capacity, voltage, time };

struct InterpolatedCurve {
    AbscissaKind abscissa_kind = AbscissaKind::voltage;
    OrdinateKind ordinate_kind = OrdinateKind::capacity;
    std::vector<double> grid;
    std::vector<double> ordinate;
};

struct GridRange {
    double lo = 3.0;
    double hi = 4.4;
};

/// Evenly spaced grid; the last point is exactly `hi`.
inline std::vector<double> uniform_grid(GridRange range, std::size_t n = kGridSize) {
    std::vector<double> grid(n);
    const double span = range.hi - range.lo;
    for (std::size_t j = 0; j < n; ++j)
        grid[j] = range.lo + span * static_cast<double>(j) / static_cast<double>(n - 1);
    grid.back() = range.hi;
    return grid;
}

/// Stacked curves of one input type. Row i belongs to cell_ids[i].
struct CurveMatrix {
    Eigen::MatrixXd x;
    std::vector<double> grid;
    std::vector<std::string> cell_ids;
    std::vector<int> protocol_ids;
    Eigen::VectorXd y;
    bool y_is_log = false;

    Eigen::Index rows() const { return x.rows(); }
    Eigen::Index cols() const { return x.cols(); }

    /// Row subset in the given order.
    CurveMatrix subset(const std::vector<Eigen::Index>& rows_to_keep) const {
        CurveMatrix out;
        out.grid = grid;
        out.y_is_log = y_is_log;
        out.x.resize(static_cast<Eigen::Index>(rows_to_keep.size()), x.cols());
        out.y.resize(static_cast<Eigen::Index>(rows_to_keep.size()));
        for (std::size_t r = 0; r < rows_to_keep.size(); ++r) {
            const auto i = rows_to_keep[r];
            out.x.row(static_cast<Eigen::Index>(r)) = x.row(i);
            out.y(static_cast<Eigen::Index>(r)) = y(i);
            if (!cell_ids.empty()) out.cell_ids.push_back(cell_ids[static_cast<std::size_t>(i)]);
            if (!protocol_ids.empty())
                out.protocol_ids.push_back(protocol_ids[static_cast<std::size_t>(i)]);
        }
        return out;
    }

    /// Cycle life in raw (cycles) space.
    Eigen::VectorXd cycle_life() const {
        return y_is_log ? Eigen::VectorXd(y.array().exp()) : y;
    }
};

struct StandardizationParams {
    Eigen::VectorXd column_means;
    double shared_scale = 1.0;
    double y_mean = 0.0;
    double y_scale = 1.0;
    bool y_is_log = false;
};

/// Nested cross-validation split over protocols.
struct FoldPlan {
    static constexpr int kOuterFolds = 5;
    static constexpr int kInnerFolds = 5;

    /// outer_folds[g] lists the test protocols of outer loop g (0-based).
    std::vector<std::vector<int>> outer_folds;
    /// inner_fold_of[g] maps each training protocol of outer loop g to its
    /// inner fold 0..4.
    std::vector<std::map<int, int>> inner_fold_of;

    int outer_loops() const { return static_cast<int>(outer_folds.size()); }
};

} // namespace formation_lab::ingest
