#pragma once

#include <array>

namespace formation_lab::ingest {

/// One formation protocol of the public 62-protocol formation dataset:
/// the six protocol parameters and the outer cross-validation group.
struct ProtocolRecord {
    int label;
    double cc1_a;
    double cc2_a;
    double cv_v;
    int n_ver;
    double temp_c;
    double t_ocv_s;
    int outer_group;
};

// Protocols are labelled by ascending CC1, then CC2, CV, n_ver, T, t_OCV.
inline constexpr std::array<ProtocolRecord, 62> kFormationProtocols{{
    {1, 0.0048, 0.0048, 3.88, 0, 40, 0, 1},
    {2, 0.0048, 0.0048, 3.94, 5, 40, 72, 4},
    {3, 0.0048, 0.0216, 3.61, 2, 40, 72, 4},
    {4, 0.0048, 0.0216, 3.64, 2, 40, 72, 2},
    {5, 0.0048, 0.0216, 3.78, 2, 40, 72, 2},
    {6, 0.0048, 0.0216, 4.06, 0, 40, 72, 1},
    {7, 0.0048, 0.036, 3.9, 3, 40, 0, 2},
    {8, 0.0048, 0.0792, 3.81, 3, 40, 0, 5},
    {9, 0.0048, 0.2544, 3.86, 0, 40, 72, 2},
    {10, 0.0048, 0.312, 4.03, 3, 40, 168, 1},
    {11, 0.0168, 0.3408, 3.6, 3, 40, 72, 5},
    {12, 0.0168, 0.0048, 3.65, 2, 40, 168, 3},
    {13, 0.0168, 0.0504, 3.73, 5, 40, 168, 1},
    {14, 0.0168, 0.0504, 3.84, 2, 40, 72, 2},
    {15, 0.0168, 0.0648, 3.93, 0, 40, 72, 5},
    {16, 0.0168, 0.1368, 3.95, 3, 40, 0, 3},
    {17, 0.0168, 0.18, 3.68, 2, 40, 168, 1},
    {18, 0.0168, 0.5304, 3.99, 0, 40, 168, 2},
    {19, 0.0264, 0.0048, 3.71, 3, 40, 72, 5},
    {20, 0.0264, 0.0048, 3.98, 3, 40, 72, 2},
    {21, 0.0264, 0.036, 3.72, 2, 40, 0, 5},
    {22, 0.0264, 0.1656, 3.77, 2, 40, 0, 4},
    {23, 0.036, 0.0048, 3.69, 0, 40, 72, 5},
    {24, 0.036, 0.648, 4.02, 2, 40, 0, 4},
    {25, 0.0456, 0.0216, 4.01, 5, 40, 0, 3},
    {26, 0.0456, 0.588, 3.8, 3, 40, 168, 1},
    {27, 0.0456, 0.72, 3.87, 3, 40, 72, 3},
    {28, 0.0552, 0.0048, 4.09, 0, 40, 72, 3},
    {29, 0.0648, 0.0048, 4.07, 3, 40, 168, 5},
    {30, 0.0648, 0.4296, 3.76, 5, 40, 72, 4},
    {31, 0.0744, 0.0936, 4.08, 2, 40, 168, 1},
    {32, 0.084, 0.108, 3.97, 5, 25, 168, 2},
    {33, 0.0936, 0.2256, 3.92, 3, 55, 72, 3},
    {34, 0.1032, 0.4728, 3.67, 0, 40, 0, 2},
    {35, 0.1128, 0.0216, 3.7, 5, 55, 72, 2},
    {36, 0.1124, 0.0048, 3.91, 5, 25, 72, 4},
    {37, 0.132, 0.0048, 3.63, 2, 55, 0, 3},
    {38, 0.1512, 0.036, 3.74, 2, 45, 0, 4},
    {39, 0.1608, 0.0792, 4.05, 5, 35, 72, 5},
    {40, 0.18, 0.0504, 3.89, 5, 45, 72, 4},
    {41, 0.18, 0.4, 3.74, 1, 25, 0, 3},
    {42, 0.1992, 0.0648, 3.79, 0, 45, 72, 3},
    {43, 0.2184, 0.0048, 3.82, 3, 45, 72, 5},
    {44, 0.22, 0.31, 3.83, 1, 25, 0, 4},
    {45, 0.2376, 0.1512, 4.04, 5, 45, 168, 3},
    {46, 0.2664, 0.0048, 3.96, 2, 45, 168, 2},
    {47, 0.27, 0.22, 3.87, 1, 45, 0, 4},
    {48, 0.2952, 0.2832, 4.1, 3, 25, 168, 1},
    {49, 0.31, 0.62, 3.69, 1, 45, 0, 1},
    {50, 0.3264, 0.1944, 3.75, 2, 35, 72, 4},
    {51, 0.35, 0.35, 3.96, 1, 45, 0, 1},
    {52, 0.3552, 0.384, 4, 0, 35, 168, 5},
    {53, 0.3936, 0.0216, 3.62, 3, 45, 72, 2},
    {54, 0.4, 0.27, 3.65, 1, 25, 0, 3},
    {55, 0.432, 0.036, 3.66, 2, 25, 72, 2},
    {56, 0.44, 0.53, 4.05, 1, 35, 0, 4},
    {57, 0.48, 0.1224, 3.83, 3, 35, 168, 1},
    {58, 0.49, 0.18, 4.01, 1, 45, 0, 1},
    {59, 0.53, 0.49, 4.1, 1, 25, 0, 3},
    {60, 0.57, 0.66, 3.78, 1, 35, 0, 1},
    {61, 0.62, 0.44, 3.6, 1, 35, 0, 5},
    {62, 0.66, 0.57, 3.92, 1, 35, 0, 5},
}};

} // namespace formation_lab::ingest
