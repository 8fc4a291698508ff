#pragma once

// Differential geodesic coding of longitude/latitude.
//
// The magnitudes follow the haversine relation with separate longitude and
// latitude components:
//   |d_lon| = 2R asin(sqrt(cos^2(lat_ref) sin^2(dlon / 2)))
//   |d_lat| = 2R asin(|sin(dlat / 2)|)
// The sign comes from the raw coordinate difference, with longitude
// differences first reduced to (-180, 180] (shorter arc). lat_ref is the
// latitude of the earlier point.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "flightpatch/errors.hpp"
#include "flightpatch/tensor.hpp"

namespace flightpatch {

struct GeoPoint {
  double lon = 0.0;  // degrees, [-180, 180]
  double lat = 0.0;  // degrees, [-90, 90]
  double alt = 0.0;  // meters
};

struct SignedDelta {
  double d_lon_m = 0.0;
  double d_lat_m = 0.0;
  double ref_lat = 0.0;
};

struct EarthModel {
  static constexpr double kMeanRadius = 6'371'000.0;
  double radius = kMeanRadius;
};

inline constexpr const char* kSignConvention = "shorter-arc";

inline double to_radians(double degrees) { return degrees * std::numbers::pi / 180.0; }
inline double to_degrees(double radians) { return radians * 180.0 / std::numbers::pi; }

/// Longitude difference reduced to (-180, 180].
inline double wrap_longitude_delta(double delta_deg) {
  double d = std::fmod(delta_deg, 360.0);
  if (d > 180.0) d -= 360.0;
  if (d <= -180.0) d += 360.0;
  return d;
}

/// Longitude reduced to (-180, 180].
inline double wrap_longitude(double lon_deg) { return wrap_longitude_delta(lon_deg); }

inline bool is_valid(const GeoPoint& p) {
  return std::isfinite(p.lon) && std::isfinite(p.lat) && std::isfinite(p.alt) && p.lon >= -180.0 &&
         p.lon <= 180.0 && p.lat >= -90.0 && p.lat <= 90.0;
}

inline SignedDelta delta_between(const GeoPoint& prev, const GeoPoint& curr, const EarthModel& earth = {}) {
  const double dlon = to_radians(wrap_longitude_delta(curr.lon - prev.lon));
  const double dlat = to_radians(curr.lat - prev.lat);
  const double cos_ref = std::cos(to_radians(prev.lat));
  const double lon_arg = std::min(1.0, std::abs(cos_ref * std::sin(0.5 * dlon)));
  const double lat_arg = std::min(1.0, std::abs(std::sin(0.5 * dlat)));
  SignedDelta d;
  d.d_lon_m = std::copysign(2.0 * earth.radius * std::asin(lon_arg), dlon);
  d.d_lat_m = std::copysign(2.0 * earth.radius * std::asin(lat_arg), dlat);
  if (dlon == 0.0) d.d_lon_m = 0.0;
  if (dlat == 0.0) d.d_lat_m = 0.0;
  d.ref_lat = prev.lat;
  return d;
}

/// Point displaced from `origin` by a signed delta referenced to origin.lat.
/// Throws OutOfRangeError (carrying `step`) when the delta is outside the
/// arcsin domain of the inverse.
inline GeoPoint apply_delta(const GeoPoint& origin, double d_lon_m, double d_lat_m, double alt, std::size_t step,
                            const EarthModel& earth = {}) {
  if (!std::isfinite(d_lon_m) || !std::isfinite(d_lat_m)) {
    throw OutOfRangeError("non-finite differential at step " + std::to_string(step), step);
  }
  const double half_lat = std::abs(d_lat_m) / (2.0 * earth.radius);
  if (half_lat > std::numbers::pi / 2.0) {
    throw OutOfRangeError("latitude differential " + std::to_string(d_lat_m) + " m at step " + std::to_string(step) +
                              " exceeds half the circumference",
                          step);
  }
  const double cos_ref = std::cos(to_radians(origin.lat));
  const double s = cos_ref > 0.0 ? std::sin(std::abs(d_lon_m) / (2.0 * earth.radius)) / cos_ref : INFINITY;
  if (d_lon_m != 0.0 && (!(s <= 1.0) || std::abs(d_lon_m) / (2.0 * earth.radius) > std::numbers::pi / 2.0)) {
    throw OutOfRangeError("longitude differential " + std::to_string(d_lon_m) + " m at step " + std::to_string(step) +
                              " is outside the arcsin domain at latitude " + std::to_string(origin.lat),
                          step);
  }
  const double dlat = std::copysign(2.0 * std::asin(std::sin(half_lat)), d_lat_m);
  const double dlon = d_lon_m == 0.0 ? 0.0 : std::copysign(2.0 * std::asin(s), d_lon_m);
  GeoPoint p;
  p.lat = origin.lat + to_degrees(dlat);
  p.lon = wrap_longitude(origin.lon + to_degrees(dlon));
  p.alt = alt;
  if (p.lat > 90.0 || p.lat < -90.0) {
    throw OutOfRangeError("reconstructed latitude leaves [-90, 90] at step " + std::to_string(step), step);
  }
  return p;
}

/// Rows [d_lon_m, d_lat_m, alt] of targets coded relative to points[anchor].
inline Tensor encode_targets(const std::vector<GeoPoint>& points, std::size_t anchor, std::size_t horizon,
                             const EarthModel& earth = {}) {
  if (horizon == 0) throw InsufficientDataError("horizon must be at least 1");
  if (anchor + horizon >= points.size()) {
    throw InsufficientDataError("need " + std::to_string(anchor + horizon + 1) + " points to code a horizon of " +
                                std::to_string(horizon) + " after index " + std::to_string(anchor) + ", have " +
                                std::to_string(points.size()));
  }
  std::vector<double> values(3 * horizon);
  const GeoPoint& ref = points[anchor];
  for (std::size_t i = 0; i < horizon; ++i) {
    const GeoPoint& p = points[anchor + 1 + i];
    const SignedDelta d = delta_between(ref, p, earth);
    values[i] = d.d_lon_m;
    values[horizon + i] = d.d_lat_m;
    values[2 * horizon + i] = p.alt;
  }
  return Tensor({3, horizon}, std::move(values));
}

/// Inverse of encode_targets: absolute positions from a [3, T] coded prediction.
inline std::vector<GeoPoint> reconstruct(const GeoPoint& last_obs, const Tensor& predicted, const EarthModel& earth = {}) {
  if (predicted.rank() != 2 || predicted.dim(0) != 3) {
    throw DimensionError("reconstruct expects a [3, T] prediction, got " + to_string(predicted.shape()));
  }
  const std::size_t horizon = predicted.dim(1);
  const auto v = predicted.data();
  std::vector<GeoPoint> out;
  out.reserve(horizon);
  for (std::size_t i = 0; i < horizon; ++i) {
    out.push_back(apply_delta(last_obs, v[i], v[horizon + i], v[2 * horizon + i], i, earth));
  }
  return out;
}

/// Targets as raw-degree offsets from points[anchor] (differential coding disabled).
inline Tensor encode_offset_targets(const std::vector<GeoPoint>& points, std::size_t anchor, std::size_t horizon) {
  if (horizon == 0 || anchor + horizon >= points.size()) {
    throw InsufficientDataError("not enough points for horizon " + std::to_string(horizon));
  }
  std::vector<double> values(3 * horizon);
  const GeoPoint& ref = points[anchor];
  for (std::size_t i = 0; i < horizon; ++i) {
    const GeoPoint& p = points[anchor + 1 + i];
    values[i] = wrap_longitude_delta(p.lon - ref.lon);
    values[horizon + i] = p.lat - ref.lat;
    values[2 * horizon + i] = p.alt;
  }
  return Tensor({3, horizon}, std::move(values));
}

inline std::vector<GeoPoint> reconstruct_offsets(const GeoPoint& last_obs, const Tensor& predicted) {
  if (predicted.rank() != 2 || predicted.dim(0) != 3) {
    throw DimensionError("reconstruct expects a [3, T] prediction, got " + to_string(predicted.shape()));
  }
  const std::size_t horizon = predicted.dim(1);
  const auto v = predicted.data();
  std::vector<GeoPoint> out;
  for (std::size_t i = 0; i < horizon; ++i) {
    GeoPoint p{wrap_longitude(last_obs.lon + v[i]), last_obs.lat + v[horizon + i], v[2 * horizon + i]};
    if (!std::isfinite(p.lat) || p.lat > 90.0 || p.lat < -90.0) {
      throw OutOfRangeError("reconstructed latitude leaves [-90, 90] at step " + std::to_string(i), i);
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace flightpatch
