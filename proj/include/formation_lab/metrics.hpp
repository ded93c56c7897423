#pragma once

#include "formation_lab/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

namespace formation_lab {

struct Metrics {
    double rmse = 0.0;  ///< cycles
    double mape = 0.0;  ///< percent
};

inline Metrics metrics(const Eigen::VectorXd& predicted, const Eigen::VectorXd& truth) {
    if (predicted.size() != truth.size())
        throw ShapeError("metrics: prediction and truth lengths differ");
    if (truth.size() == 0) throw EmptyInput("metrics: no observations");
    if ((truth.array() == 0.0).any()) throw MapeUndefined("metrics: zero truth value");
    const Eigen::ArrayXd err = (predicted - truth).array();
    return {std::sqrt(err.square().mean()), 100.0 * (err.abs() / truth.array().abs()).mean()};
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw EmptyInput("median of an empty sequence");
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2) return *mid;
    return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

} // namespace formation_lab
