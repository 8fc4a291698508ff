#pragma once

// ADS-B ingestion, trajectory cleaning/segmentation, windowing, splitting,
// and a synthetic trajectory generator.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "flightpatch/errors.hpp"
#include "flightpatch/geo.hpp"
#include "flightpatch/parallel.hpp"
#include "flightpatch/rng.hpp"
#include "flightpatch/tensor.hpp"
#include "flightpatch/trajectory.hpp"

namespace flightpatch {

// ---------------------------------------------------------------------------
// Raw ADS-B records
// ---------------------------------------------------------------------------

struct RawRecord {
  std::int64_t time = 0;  // epoch seconds
  double lon = 0.0;
  double lat = 0.0;
  double alt = 0.0;      // geometric altitude, m
  double hspeed = 0.0;   // m/s
  double heading = 0.0;  // degrees clockwise from north
  double vspeed = 0.0;   // m/s
};

struct FlightStream {
  std::string id;
  std::vector<RawRecord> records;  // strictly increasing time
};

struct ParseResult {
  std::vector<FlightStream> streams;  // ordered by flight id
  std::size_t rows = 0;
  std::size_t rejected = 0;
};

inline constexpr std::string_view kRequiredColumns[] = {"time",    "lon",     "lat",     "geoaltitude",
                                                        "velocity", "heading", "vertrate"};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_number(std::string_view field) {
  field = trim(field);
  if (field.empty()) return std::nullopt;
  if (field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// Reads `time,lon,lat,geoaltitude,velocity,heading,vertrate` rows (any column
/// order, extra columns ignored). Rows are grouped by `icao24` (or `callsign`)
/// when such a column exists, else into a single stream. Rows with missing or
/// invalid values and duplicate timestamps are rejected and counted.
inline ParseResult parse_adsb_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("CSV is empty: header row required");
  const auto header = detail::split_csv_line(line);
  std::map<std::string, std::size_t, std::less<>> column;
  for (std::size_t i = 0; i < header.size(); ++i) column.emplace(std::string(detail::trim(header[i])), i);
  std::size_t index[7];
  for (std::size_t k = 0; k < 7; ++k) {
    auto it = column.find(kRequiredColumns[k]);
    if (it == column.end()) throw SchemaError("CSV is missing required column '" + std::string(kRequiredColumns[k]) + "'");
    index[k] = it->second;
  }
  std::optional<std::size_t> id_column;
  if (auto it = column.find("icao24"); it != column.end()) {
    id_column = it->second;
  } else if (auto it2 = column.find("callsign"); it2 != column.end()) {
    id_column = it2->second;
  }

  ParseResult result;
  std::map<std::string, std::vector<RawRecord>> groups;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++result.rows;
    const auto fields = detail::split_csv_line(line);
    double v[7];
    bool ok = true;
    for (std::size_t k = 0; k < 7 && ok; ++k) {
      if (index[k] >= fields.size()) {
        ok = false;
        break;
      }
      auto parsed = detail::parse_number(fields[index[k]]);
      if (!parsed) ok = false;
      else v[k] = *parsed;
    }
    if (ok) {
      ok = v[0] == std::floor(v[0]) && v[1] >= -180.0 && v[1] <= 180.0 && v[2] >= -90.0 && v[2] <= 90.0 &&
           v[4] >= 0.0;
    }
    if (!ok) {
      ++result.rejected;
      continue;
    }
    std::string id = "flight";
    if (id_column) {
      if (*id_column >= fields.size() || detail::trim(fields[*id_column]).empty()) {
        ++result.rejected;
        continue;
      }
      id = std::string(detail::trim(fields[*id_column]));
    }
    groups[id].push_back({static_cast<std::int64_t>(v[0]), v[1], v[2], v[3], v[4], v[5], v[6]});
  }

  for (auto& [id, records] : groups) {
    std::stable_sort(records.begin(), records.end(), [](const RawRecord& a, const RawRecord& b) { return a.time < b.time; });
    FlightStream stream{id, {}};
    for (const auto& r : records) {
      if (!stream.records.empty() && stream.records.back().time == r.time) {
        ++result.rejected;
        continue;
      }
      stream.records.push_back(r);
    }
    result.streams.push_back(std::move(stream));
  }
  return result;
}

inline ParseResult parse_adsb_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  return parse_adsb_csv(in);
}

// ---------------------------------------------------------------------------
// Cleaning and segmentation
// ---------------------------------------------------------------------------

struct HorizontalVelocity {
  double vx = 0.0;  // east
  double vy = 0.0;  // north
};

/// Splits ground speed along a heading measured clockwise from north.
inline HorizontalVelocity decompose_velocity(double hspeed, double heading_deg) {
  if (!(hspeed >= 0.0)) throw ValidationError("horizontal speed must be non-negative, got " + std::to_string(hspeed));
  const double h = to_radians(heading_deg);
  return {hspeed * std::sin(h), hspeed * std::cos(h)};
}

struct ZScoreDecision {
  bool accepted = true;
  std::size_t feature = 0;  // first offending feature when rejected
  double max_abs_z = 0.0;
};

inline constexpr double kZScoreThreshold = 3.0;

/// Rejects the trajectory when any feature has |x - mean| / stddev > 3, with
/// population statistics over the trajectory's own points. Near-constant
/// features (stddev below 1e-12 of the feature scale) never count as outliers.
inline ZScoreDecision zscore_filter(const std::vector<TrajectoryPoint>& points) {
  ZScoreDecision decision;
  if (points.empty()) return decision;
  const double n = static_cast<double>(points.size());
  auto feature = [](const TrajectoryPoint& p, std::size_t f) {
    switch (f) {
      case 0: return p.lon;
      case 1: return p.lat;
      case 2: return p.alt;
      case 3: return p.vx;
      case 4: return p.vy;
      default: return p.vz;
    }
  };
  for (std::size_t f = 0; f < kStateChannels; ++f) {
    double mean = 0.0;
    for (const auto& p : points) mean += feature(p, f);
    mean /= n;
    double var = 0.0;
    double scale = std::abs(mean);
    for (const auto& p : points) {
      const double d = feature(p, f) - mean;
      var += d * d;
      scale = std::max(scale, std::abs(feature(p, f)));
    }
    const double sigma = std::sqrt(var / n);
    if (sigma <= 1e-12 * std::max(1.0, scale)) continue;
    for (const auto& p : points) {
      const double z = std::abs(feature(p, f) - mean) / sigma;
      decision.max_abs_z = std::max(decision.max_abs_z, z);
      if (z > kZScoreThreshold && decision.accepted) {
        decision.accepted = false;
        decision.feature = f;
      }
    }
  }
  return decision;
}

inline TrajectoryPoint to_trajectory_point(const RawRecord& r) {
  const auto v = decompose_velocity(r.hspeed, r.heading);
  return {r.time, r.lon, r.lat, r.alt, v.vx, v.vy, r.vspeed};
}

struct SegmentResult {
  std::vector<FlightTrajectory> trajectories;
  std::size_t candidates = 0;
  std::size_t rejected = 0;  // candidates discarded by the z-score filter
};

/// Cuts every maximal run of 10 s-spaced records into consecutive
/// non-overlapping 100-point candidates and keeps those that pass the filter.
inline SegmentResult segment(const std::vector<FlightStream>& streams) {
  SegmentResult result;
  for (const auto& stream : streams) {
    std::size_t segment_index = 0;
    std::size_t run_start = 0;
    const auto& recs = stream.records;
    for (std::size_t i = 1; i <= recs.size(); ++i) {
      const bool run_ends = i == recs.size() || recs[i].time - recs[i - 1].time != kSampleIntervalSeconds;
      if (!run_ends) continue;
      for (std::size_t s = run_start; s + kTrajectoryPoints <= i; s += kTrajectoryPoints) {
        ++result.candidates;
        FlightTrajectory traj;
        std::ostringstream id;
        id << stream.id << '#' << std::setw(4) << std::setfill('0') << segment_index++;
        traj.id = id.str();
        for (std::size_t k = s; k < s + kTrajectoryPoints; ++k) traj.points.push_back(to_trajectory_point(recs[k]));
        if (zscore_filter(traj.points).accepted) {
          result.trajectories.push_back(std::move(traj));
        } else {
          ++result.rejected;
        }
      }
      run_start = i;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

enum class SplitMode { chronological, random };

inline std::string to_string(SplitMode m) { return m == SplitMode::chronological ? "chrono" : "random"; }

inline SplitMode parse_split_mode(std::string_view s) {
  if (s == "chrono" || s == "chronological") return SplitMode::chronological;
  if (s == "random") return SplitMode::random;
  throw ConfigError("split mode must be 'chrono' or 'random', got '" + std::string(s) + "'");
}

struct DatasetSplit {
  std::vector<FlightTrajectory> train;
  std::vector<FlightTrajectory> validation;
  std::vector<FlightTrajectory> test;
};

/// 8:1:1 by trajectory count. Chronological mode orders by start time (ties by
/// id); random mode shuffles that canonical order with `seed`.
inline DatasetSplit split_dataset(std::vector<FlightTrajectory> trajectories, SplitMode mode = SplitMode::chronological,
                                  std::uint64_t seed = 0) {
  const std::size_t n = trajectories.size();
  if (n < 10) {
    throw InsufficientDataError("an 8:1:1 split needs at least 10 trajectories, got " + std::to_string(n));
  }
  std::sort(trajectories.begin(), trajectories.end(), [](const FlightTrajectory& a, const FlightTrajectory& b) {
    if (a.start_time() != b.start_time()) return a.start_time() < b.start_time();
    return a.id < b.id;
  });
  if (mode == SplitMode::random) {
    Rng rng(seed);
    rng.shuffle(trajectories);
  }
  const auto tenth = static_cast<std::size_t>(std::llround(static_cast<double>(n) * 0.1));
  const std::size_t n_val = std::max<std::size_t>(1, tenth);
  const std::size_t n_test = n_val;
  const std::size_t n_train = n - n_val - n_test;
  DatasetSplit split;
  auto begin = std::make_move_iterator(trajectories.begin());
  split.train.assign(begin, begin + static_cast<std::ptrdiff_t>(n_train));
  split.validation.assign(begin + static_cast<std::ptrdiff_t>(n_train),
                          begin + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test.assign(begin + static_cast<std::ptrdiff_t>(n_train + n_val), std::make_move_iterator(trajectories.end()));
  return split;
}

// ---------------------------------------------------------------------------
// Windows
// ---------------------------------------------------------------------------

struct WindowSample {
  Tensor x;                     // [C, L]
  Tensor y;                     // [C', T]
  GeoPoint anchor;              // last observed point
  std::vector<GeoPoint> future;  // true absolute points L+1 .. L+T
};

/// Windows per 100-point trajectory: the 99-step encoded series must hold L
/// input steps plus T future steps.
inline std::size_t window_count(std::size_t lookback, std::size_t horizon,
                                std::size_t points = kTrajectoryPoints) {
  const std::size_t steps = points - 1;
  return lookback + horizon > steps ? 0 : steps - (lookback + horizon) + 1;
}

/// Stride-1 windows. Window w observes encoded steps w+1 .. w+L (points
/// w+1 .. w+L), anchors at point w+L and targets points w+L+1 .. w+L+T.
/// With diff disabled the lon/lat channels carry raw degrees and the targets
/// raw-degree offsets from the anchor.
inline std::vector<WindowSample> make_windows(const FlightTrajectory& traj, std::size_t lookback, std::size_t horizon,
                                              bool diff_enabled, const EarthModel& earth = {}) {
  const std::size_t steps = traj.points.size() - 1;
  if (lookback == 0 || horizon == 0 || lookback + horizon > steps) {
    throw InsufficientDataError("lookback + horizon = " + std::to_string(lookback + horizon) +
                                " exceeds the budget of " + std::to_string(steps) +
                                " differenced steps of a " + std::to_string(traj.points.size()) + "-point trajectory");
  }
  const auto encoded = encode_input_series(traj, earth);
  const auto positions = traj.positions();
  std::vector<WindowSample> out;
  for (std::size_t w = 0; w + lookback + horizon <= steps; ++w) {
    std::vector<double> x(kStateChannels * lookback);
    for (std::size_t t = 0; t < lookback; ++t) {
      const StateVector& s = encoded[w + t];
      for (std::size_t c = 0; c < kStateChannels; ++c) x[c * lookback + t] = s[c];
      if (!diff_enabled) {
        const auto& p = traj.points[w + 1 + t];
        x[0 * lookback + t] = p.lon;
        x[1 * lookback + t] = p.lat;
      }
    }
    const std::size_t anchor = w + lookback;
    WindowSample sample;
    sample.x = Tensor({kStateChannels, lookback}, std::move(x));
    sample.y = diff_enabled ? encode_targets(positions, anchor, horizon, earth)
                            : encode_offset_targets(positions, anchor, horizon);
    sample.anchor = positions[anchor];
    sample.future.assign(positions.begin() + static_cast<std::ptrdiff_t>(anchor + 1),
                         positions.begin() + static_cast<std::ptrdiff_t>(anchor + 1 + horizon));
    out.push_back(std::move(sample));
  }
  return out;
}

/// Windows of one split plus the coding parameters they were built with.
struct WindowSet {
  std::size_t lookback = 0;
  std::size_t horizon = 0;
  bool diff = true;
  std::vector<WindowSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

/// Windows of every trajectory in order; workers split the trajectories but
/// the result is concatenated in input order.
inline WindowSet build_windows(const std::vector<FlightTrajectory>& trajectories, std::size_t lookback,
                               std::size_t horizon, bool diff_enabled) {
  std::vector<std::vector<WindowSample>> per(trajectories.size());
  parallel_for(trajectories.size(),
               [&](std::size_t i) { per[i] = make_windows(trajectories[i], lookback, horizon, diff_enabled); });
  WindowSet set{lookback, horizon, diff_enabled, {}};
  for (auto& v : per) {
    for (auto& s : v) set.samples.push_back(std::move(s));
  }
  return set;
}

// ---------------------------------------------------------------------------
// Synthetic trajectories
// ---------------------------------------------------------------------------

enum class MotionProfile { straight, curved };

inline std::string to_string(MotionProfile m) { return m == MotionProfile::straight ? "straight" : "curved"; }

inline MotionProfile parse_motion_profile(std::string_view s) {
  if (s == "straight") return MotionProfile::straight;
  if (s == "curved") return MotionProfile::curved;
  throw ConfigError("profile must be 'straight' or 'curved', got '" + std::string(s) + "'");
}

struct SynthProfile {
  MotionProfile motion = MotionProfile::curved;
  double min_speed = 140.0;  // m/s
  double max_speed = 250.0;
  double max_turn_rate = 1.0;  // deg/s
  double max_climb_rate = 8.0;  // m/s
  double min_alt = 1500.0;
  double max_alt = 11000.0;
  double position_noise = 10.0;   // m, per horizontal axis
  double altitude_noise = 5.0;    // m
  double velocity_noise = 0.5;    // m/s
  std::int64_t start_epoch = 1'600'000'000;

  static SynthProfile straight_noise_free() {
    SynthProfile p;
    p.motion = MotionProfile::straight;
    p.position_noise = p.altitude_noise = p.velocity_noise = 0.0;
    return p;
  }

  bool noisy() const { return position_noise > 0.0 || altitude_noise > 0.0 || velocity_noise > 0.0; }
};

namespace detail {

inline FlightTrajectory synthesize_one(std::size_t index, const SynthProfile& profile, Rng& rng,
                                       const EarthModel& earth) {
  FlightTrajectory traj;
  std::ostringstream id;
  id << "synth-" << std::setw(6) << std::setfill('0') << index;
  traj.id = id.str();

  const double speed = rng.uniform(profile.min_speed, profile.max_speed);
  double heading = rng.uniform(0.0, 360.0);
  double lat = rng.uniform(-45.0, 60.0);
  double lon = rng.uniform(-170.0, 170.0);
  double alt = rng.uniform(profile.min_alt, profile.max_alt);
  double turn_rate = 0.0;
  double climb_rate = 0.0;
  std::size_t turn_left = 0;
  std::size_t climb_left = 0;
  const std::int64_t t0 = profile.start_epoch + static_cast<std::int64_t>(index) * 3600;
  const double dt = static_cast<double>(kSampleIntervalSeconds);

  std::vector<TrajectoryPoint> truth;
  for (std::size_t k = 0; k < kTrajectoryPoints; ++k) {
    if (profile.motion == MotionProfile::curved) {
      if (turn_left == 0) {
        turn_left = 10 + static_cast<std::size_t>(rng.below(31));
        turn_rate = rng.uniform() < 0.3 ? 0.0 : rng.uniform(-profile.max_turn_rate, profile.max_turn_rate);
      }
      if (climb_left == 0) {
        climb_left = 15 + static_cast<std::size_t>(rng.below(36));
        climb_rate = rng.uniform() < 0.4 ? 0.0 : rng.uniform(-profile.max_climb_rate, profile.max_climb_rate);
      }
      --turn_left;
      --climb_left;
      if ((alt + climb_rate * dt > profile.max_alt + 1000.0) || (alt + climb_rate * dt < profile.min_alt - 1000.0)) {
        climb_rate = 0.0;
      }
    }
    const double h = to_radians(heading);
    truth.push_back({t0 + static_cast<std::int64_t>(k) * kSampleIntervalSeconds, lon, lat, alt, speed * std::sin(h),
                     speed * std::cos(h), climb_rate});
    // Midpoint-heading step so the recorded velocity matches the displacement.
    const double mid = to_radians(heading + 0.5 * turn_rate * dt);
    const GeoPoint next = apply_delta({lon, lat, alt}, speed * std::sin(mid) * dt, speed * std::cos(mid) * dt,
                                      alt + climb_rate * dt, k, earth);
    lon = next.lon;
    lat = next.lat;
    alt = next.alt;
    heading = std::fmod(heading + turn_rate * dt + 360.0, 360.0);
  }

  if (profile.noisy()) {
    for (auto& p : truth) {
      const GeoPoint noisy = apply_delta(p.position(), rng.normal(0.0, profile.position_noise),
                                         rng.normal(0.0, profile.position_noise),
                                         p.alt + rng.normal(0.0, profile.altitude_noise), 0, earth);
      p.lon = noisy.lon;
      p.lat = noisy.lat;
      p.alt = std::max(0.0, noisy.alt);
      p.vx += rng.normal(0.0, profile.velocity_noise);
      p.vy += rng.normal(0.0, profile.velocity_noise);
      p.vz += rng.normal(0.0, profile.velocity_noise);
    }
  }
  traj.points = std::move(truth);
  return traj;
}

}  // namespace detail

/// Deterministic smooth trajectories. Candidates failing the z-score filter
/// are redrawn, so every returned trajectory passes it.
inline std::vector<FlightTrajectory> synthesize_trajectories(std::size_t n, std::uint64_t seed,
                                                             const SynthProfile& profile = {},
                                                             const EarthModel& earth = {}) {
  if (n == 0) throw ConfigError("synthesize_trajectories: n must be at least 1");
  Rng rng(seed);
  std::vector<FlightTrajectory> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    FlightTrajectory traj;
    do {
      traj = detail::synthesize_one(i, profile, rng, earth);
    } while (!zscore_filter(traj.points).accepted);
    out.push_back(std::move(traj));
  }
  return out;
}

/// Writes trajectories as ADS-B CSV rows (icao24 + the seven required columns).
inline void write_adsb_csv(std::ostream& out, const std::vector<FlightTrajectory>& trajectories) {
  out << "icao24,time,lon,lat,geoaltitude,velocity,heading,vertrate\n";
  out << std::setprecision(17);
  for (const auto& traj : trajectories) {
    const std::string id = traj.id.substr(0, traj.id.find('#'));
    for (const auto& p : traj.points) {
      double heading = to_degrees(std::atan2(p.vx, p.vy));
      if (heading < 0.0) heading += 360.0;
      out << id << ',' << p.time << ',' << p.lon << ',' << p.lat << ',' << p.alt << ','
          << std::hypot(p.vx, p.vy) << ',' << heading << ',' << p.vz << '\n';
    }
  }
}

}  // namespace flightpatch
