#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "flightpatch/geo.hpp"

namespace flightpatch {

inline constexpr std::size_t kTrajectoryPoints = 100;
inline constexpr std::int64_t kSampleIntervalSeconds = 10;
inline constexpr std::size_t kStateChannels = 6;
inline constexpr std::size_t kTargetChannels = 3;

/// One preprocessed flight state on the 10 s grid.
struct TrajectoryPoint {
  std::int64_t time = 0;
  double lon = 0.0;
  double lat = 0.0;
  double alt = 0.0;
  double vx = 0.0;  // east, m/s
  double vy = 0.0;  // north, m/s
  double vz = 0.0;  // up, m/s

  GeoPoint position() const { return {lon, lat, alt}; }
};

struct FlightTrajectory {
  std::string id;
  std::vector<TrajectoryPoint> points;

  std::int64_t start_time() const { return points.empty() ? 0 : points.front().time; }

  std::vector<GeoPoint> positions() const {
    std::vector<GeoPoint> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(p.position());
    return out;
  }
};

/// (d_lon_m, d_lat_m, alt, vx, vy, vz) for one encoded step.
using StateVector = std::array<double, kStateChannels>;

/// Step t (1-based over points) carries the signed delta from point t-1 to
/// point t plus the raw altitude and velocities of point t.
inline std::vector<StateVector> encode_input_series(const FlightTrajectory& traj, const EarthModel& earth = {}) {
  const auto& pts = traj.points;
  if (pts.size() < 2) {
    throw InsufficientDataError("differential coding needs at least 2 points, got " + std::to_string(pts.size()));
  }
  std::vector<StateVector> out;
  out.reserve(pts.size() - 1);
  for (std::size_t t = 1; t < pts.size(); ++t) {
    if (pts[t].time - pts[t - 1].time != kSampleIntervalSeconds) {
      throw ValidationError("trajectory '" + traj.id + "' is not on the 10 s grid at index " + std::to_string(t));
    }
    const SignedDelta d = delta_between(pts[t - 1].position(), pts[t].position(), earth);
    out.push_back({d.d_lon_m, d.d_lat_m, pts[t].alt, pts[t].vx, pts[t].vy, pts[t].vz});
  }
  return out;
}

}  // namespace flightpatch
