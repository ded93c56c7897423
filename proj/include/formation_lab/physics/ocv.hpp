#pragma once

#include "formation_lab/errors.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace formation_lab::physics {

inline constexpr double kBoltzmannOverCharge = 8.617333262e-5;  ///< V/K
inline constexpr double kGasConstant = 8.314462618;            ///< J/(mol K)
inline constexpr double kReferenceTemperature = 298.0;          ///< K

/// Legendre coefficients a_0..a_19 for the NMC532 cathode half cell.
inline constexpr std::array<double, 20> kCathodeCoeffs{
    3.9441,  -0.4024, 0.1444,  -0.0516, -0.0735, -0.0541, -0.0405, -0.0437, -0.0627, -0.0442,
    -0.0499, -0.0375, -0.0416, -0.0353, -0.0279, -0.0255, -0.0214, -0.0165, -0.0176, -0.0124};

/// Legendre coefficients a_0..a_24 for the artificial graphite anode.
inline constexpr std::array<double, 25> kAnodeCoeffs{
    0.1177,  -0.0352, 0.0801,  -0.0664, 0.0713,  -0.0662, 0.0507,  -0.0427, 0.0543,
    -0.0440, 0.0294,  -0.0099, 0.0118,  -0.0014, -0.0005, -0.0001, 0.0101,  -0.0071,
    0.0064,  -0.0087, 0.0111,  -0.0050, 0.0009,  0.0002,  -0.0007};

/// Lattice entropy plus a Legendre series in 2c - 1.
struct OcvModel {
    std::vector<double> coeffs;
    double t_ref = kReferenceTemperature;

    static OcvModel cathode() { return {{kCathodeCoeffs.begin(), kCathodeCoeffs.end()}}; }
    static OcvModel anode() { return {{kAnodeCoeffs.begin(), kAnodeCoeffs.end()}}; }
};

/// P_0..P_n at x by the three-term recurrence.
inline void legendre_values(double x, std::span<double> out) {
    if (out.empty()) return;
    out[0] = 1.0;
    if (out.size() > 1) out[1] = x;
    for (std::size_t n = 1; n + 1 < out.size(); ++n)
        out[n + 1] = ((2.0 * static_cast<double>(n) + 1.0) * x * out[n] - static_cast<double>(n) * out[n - 1]) /
                     (static_cast<double>(n) + 1.0);
}

/// Sum of a_n P_n(x), by Clenshaw's recurrence.
inline double legendre_series(std::span<const double> a, double x) {
    double b1 = 0.0, b2 = 0.0;
    for (std::size_t k = a.size(); k-- > 1;) {
        const auto n = static_cast<double>(k);
        const double b0 = a[k] + (2.0 * n + 1.0) / (n + 1.0) * x * b1 - (n + 1.0) / (n + 2.0) * b2;
        b2 = b1;
        b1 = b0;
    }
    return a.empty() ? 0.0 : a[0] + x * b1 - 0.5 * b2;
}

/// Entropic term only: -(kT/e) ln(c / (1 - c)).
inline double ocv_entropic(double c, double temperature) {
    return -kBoltzmannOverCharge * temperature * std::log(c / (1.0 - c));
}

/// Open-circuit voltage at filling c. The entropic term uses `temperature`
/// when given, the model's reference temperature otherwise.
inline double ocv_eval(const OcvModel& m, double c, double temperature = 0.0) {
    if (!(c > 0.0 && c < 1.0)) throw DomainError("ocv_eval: filling fraction outside (0, 1)");
    const double t = temperature > 0.0 ? temperature : m.t_ref;
    return ocv_entropic(c, t) + legendre_series(m.coeffs, 2.0 * c - 1.0);
}

/// Least-squares Legendre coefficients a_0..a_n of V minus the entropic term.
inline OcvModel ocv_fit(std::span<const double> c, std::span<const double> v, std::size_t n,
                        double t_ref = kReferenceTemperature) {
    if (c.size() != v.size()) throw ShapeError("ocv_fit: sample lengths differ");
    if (c.size() < n + 1) throw RankDeficient("ocv_fit: fewer samples than coefficients");
    const auto rows = static_cast<Eigen::Index>(c.size()), cols = static_cast<Eigen::Index>(n + 1);
    Eigen::MatrixXd design(rows, cols);
    Eigen::VectorXd rhs(rows);
    std::vector<double> p(n + 1);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const double ci = c[static_cast<std::size_t>(i)];
        if (!(ci > 0.0 && ci < 1.0)) throw DomainError("ocv_fit: filling fraction outside (0, 1)");
        legendre_values(2.0 * ci - 1.0, p);
        for (Eigen::Index k = 0; k < cols; ++k) design(i, k) = p[static_cast<std::size_t>(k)];
        rhs(i) = v[static_cast<std::size_t>(i)] - ocv_entropic(ci, t_ref);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < cols) throw RankDeficient("ocv_fit: design matrix is rank deficient");
    const Eigen::VectorXd a = qr.solve(rhs);
    return {{a.data(), a.data() + a.size()}, t_ref};
}

} // namespace formation_lab::physics
