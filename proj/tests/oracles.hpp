#pragma once

// Reference values computed outside the library before the build:
// geodesic values with mpmath at 40 significant digits (R = 6,371,000 m),
// special functions likewise, and the z-score rejection rate by a numpy
// simulation of 2e5 Gaussian candidates (6 features x 100 points).

namespace fpt::oracle {

inline constexpr double kLat001DegMeters = 1111.949266445587373;       // +0.01 deg latitude
inline constexpr double kLon001At60Meters = 555.9746326935450670;      // +0.01 deg longitude at 60 deg
inline constexpr double kLon0001EquatorMeters = 111.1949266445587373;  // +0.001 deg longitude at 0 deg
inline constexpr double kLat03473DegMeters = 3861.799802365524948;     // +0.03473 deg latitude
inline constexpr double kLatDegFor1112Meters = 0.01000045625781628328;  // inverse of 1112 m from the equator

inline constexpr double kGeluOne = 0.8413447460685429;
inline constexpr double kSoftmax123[3] = {0.09003057317038046, 0.24472847105479765, 0.6652409557748219};

inline constexpr double kZScoreRejectRate = 0.767675;

}  // namespace fpt::oracle
