#pragma once

#include "formation_lab/errors.hpp"
#include "formation_lab/ingest/types.hpp"

#include <cmath>
#include <optional>

namespace formation_lab::ingest {

struct Standardized {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    StandardizationParams params;
};

/// Population (ddof = 0) standard deviation of each column.
inline Eigen::VectorXd column_std(const Eigen::MatrixXd& x) {
    const Eigen::RowVectorXd mean = x.colwise().mean();
    return ((x.rowwise() - mean).array().square().colwise().sum() /
            static_cast<double>(x.rows()))
        .sqrt()
        .transpose();
}

/// Centers every column and divides the whole matrix by the largest column
/// standard deviation, so the relative column variances survive. The output
/// is centered and divided by its own standard deviation.
///
/// Without `params` the statistics come from `m` (training mode); with
/// `params` they are applied as given (test mode).
inline Standardized standardize(const CurveMatrix& m,
                                const std::optional<StandardizationParams>& params = {}) {
    Standardized out;
    if (params) {
        if (params->column_means.size() != m.cols())
            throw ShapeError("standardize: column count differs from training parameters");
        out.params = *params;
    } else {
        if (m.rows() < 1 || m.cols() < 1) throw DegenerateScale("standardize: empty matrix");
        auto& p = out.params;
        p.column_means = m.x.colwise().mean().transpose();
        p.shared_scale = column_std(m.x).maxCoeff();
        if (!(p.shared_scale > 0.0))
            throw DegenerateScale("standardize: every column is constant");
        p.y_mean = m.y.mean();
        p.y_scale = std::sqrt((m.y.array() - p.y_mean).square().mean());
        if (!(p.y_scale > 0.0)) throw DegenerateScale("standardize: output is constant");
        p.y_is_log = m.y_is_log;
    }
    const auto& p = out.params;
    out.x = (m.x.rowwise() - p.column_means.transpose()) / p.shared_scale;
    out.y = (m.y.array() - p.y_mean) / p.y_scale;
    return out;
}

inline Eigen::MatrixXd destandardize_x(const Eigen::MatrixXd& xs, const StandardizationParams& p) {
    return (xs * p.shared_scale).rowwise() + p.column_means.transpose();
}

/// Standardized output back to the model's (possibly log) output space.
inline Eigen::VectorXd destandardize_y(const Eigen::VectorXd& ys, const StandardizationParams& p) {
    return (ys.array() * p.y_scale + p.y_mean).matrix();
}

/// Standardized output back to raw cycle life.
inline Eigen::VectorXd to_cycle_life(const Eigen::VectorXd& ys, const StandardizationParams& p) {
    Eigen::VectorXd out = destandardize_y(ys, p);
    if (p.y_is_log) out = out.array().exp().matrix();
    return out;
}

} // namespace formation_lab::ingest
