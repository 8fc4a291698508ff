#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "support.hpp"

using namespace fpt;

namespace {

ParseResult parse_string(const std::string& s) {
  std::istringstream in(s);
  return parse_adsb_csv(in);
}

std::vector<FlightTrajectory> fake_trajectories(std::size_t n) {
  std::vector<FlightTrajectory> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto t = straight_trajectory(0, 0, 1000, 100, 0, kTrajectoryPoints, static_cast<std::int64_t>(i) * 5000);
    t.id = "t" + std::to_string(1000 + i);
    out.push_back(std::move(t));
  }
  return out;
}

std::set<std::string> ids(const std::vector<FlightTrajectory>& v) {
  std::set<std::string> s;
  for (const auto& t : v) s.insert(t.id);
  return s;
}

}  // namespace

// --- CSV ingestion ---------------------------------------------------------

TEST(ParseCsv, HeaderOnlyGivesNoStreams) {
  const auto r = parse_string(kHeader);
  EXPECT_TRUE(r.streams.empty());
  EXPECT_EQ(r.rows, 0u);
  EXPECT_EQ(r.rejected, 0u);
}

TEST(ParseCsv, OneFlightHundredRows) {
  const auto r = parse_string(kHeader + flight_rows("abc123", contiguous(100)));
  ASSERT_EQ(r.streams.size(), 1u);
  EXPECT_EQ(r.streams[0].id, "abc123");
  ASSERT_EQ(r.streams[0].records.size(), 100u);
  EXPECT_EQ(r.rejected, 0u);
  const auto& rec = r.streams[0].records[3];
  EXPECT_EQ(rec.time, 30);
  EXPECT_DOUBLE_EQ(rec.lon, 10.006);
  EXPECT_EQ(rec.alt, 9003.0);
  EXPECT_EQ(rec.hspeed, 200.0);
  EXPECT_EQ(rec.heading, 90.0);
  EXPECT_EQ(rec.vspeed, 0.1);
}

TEST(ParseCsv, NonNumericAltitudeIsRejected) {
  std::string csv = kHeader + flight_rows("a", contiguous(5));
  csv += "a,50,10.0,50.0,high,200,90,0\n";
  const auto r = parse_string(csv);
  EXPECT_EQ(r.rejected, 1u);
  EXPECT_EQ(r.rows, 6u);
  EXPECT_EQ(r.streams[0].records.size(), 5u);
}

TEST(ParseCsv, OtherInvalidRows) {
  std::string csv = "time,lon,lat,geoaltitude,velocity,heading,vertrate\n";
  csv += "0,1,2,3,4,5,6\n";
  csv += "10,181,2,3,4,5,6\n";    // lon out of range
  csv += "20,1,-91,3,4,5,6\n";    // lat out of range
  csv += "30,1,2,3,-4,5,6\n";     // negative speed
  csv += "40.5,1,2,3,4,5,6\n";    // fractional time
  csv += "50,1,2,3,4,5\n";        // short row
  csv += "0,1,2,3,4,5,6\n";       // duplicate timestamp
  csv += "60,1,2,nan,4,5,6\n";    // non-finite
  const auto r = parse_string(csv);
  ASSERT_EQ(r.streams.size(), 1u);
  EXPECT_EQ(r.streams[0].id, "flight");
  EXPECT_EQ(r.streams[0].records.size(), 1u);
  EXPECT_EQ(r.rejected, 7u);
}

TEST(ParseCsv, GroupsAndOrdersByFlight) {
  std::string csv = "callsign,vertrate,heading,velocity,geoaltitude,lat,lon,time\n";
  csv += "ZZ1,0,0,100,1000,1,2,20\n";
  csv += "AA9,0,0,100,1000,1,2,10\n";
  csv += "ZZ1,0,0,100,1000,1,2,10\n";
  const auto r = parse_string(csv);
  ASSERT_EQ(r.streams.size(), 2u);
  EXPECT_EQ(r.streams[0].id, "AA9");
  EXPECT_EQ(r.streams[1].id, "ZZ1");
  ASSERT_EQ(r.streams[1].records.size(), 2u);
  EXPECT_EQ(r.streams[1].records[0].time, 10);
  EXPECT_EQ(r.streams[1].records[1].time, 20);
  EXPECT_EQ(r.streams[1].records[0].lon, 2.0);
}

TEST(ParseCsv, SchemaAndIoErrors) {
  try {
    parse_string("time,lon,lat,velocity,heading,vertrate\n");
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("geoaltitude"), std::string::npos);
  }
  EXPECT_THROW(parse_string(""), SchemaError);
  EXPECT_THROW(parse_adsb_csv(std::filesystem::path("/nonexistent/flights.csv")), IoError);
}

// --- filtering / velocity -------------------------------------------------

TEST(ZScore, ConstantFeaturesAreAccepted) {
  std::vector<TrajectoryPoint> pts(100, TrajectoryPoint{0, 1.0, 2.0, 3000.0, 4.0, 5.0, 0.0});
  EXPECT_TRUE(zscore_filter(pts).accepted);
}

TEST(ZScore, AltitudeSpikeIsRejected) {
  std::vector<TrajectoryPoint> pts;
  for (int k = 0; k < 99; ++k) pts.push_back({k * 10, 0, 0, 5000.0 + (k % 2 ? 1.0 : -1.0), 0, 0, 0});
  // the other 99 points have mean ~5000 and sigma ~1
  double mean = 0, var = 0;
  for (const auto& p : pts) mean += p.alt / 99.0;
  for (const auto& p : pts) var += (p.alt - mean) * (p.alt - mean) / 99.0;
  pts.push_back({990, 0, 0, mean + 10.0 * std::sqrt(var), 0, 0, 0});
  const auto d = zscore_filter(pts);
  EXPECT_FALSE(d.accepted);
  EXPECT_EQ(d.feature, 2u);
  EXPECT_GT(d.max_abs_z, 3.0);
  pts.pop_back();
  EXPECT_TRUE(zscore_filter(pts).accepted);
}

TEST(ZScore, GaussianRejectionRateMatchesSimulation) {
  Rng rng(2718);
  std::size_t rejected = 0;
  const std::size_t n = 10000;
  std::vector<TrajectoryPoint> pts(100);
  for (std::size_t c = 0; c < n; ++c) {
    for (auto& p : pts) p = {0, rng.normal(), rng.normal(), rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    if (!zscore_filter(pts).accepted) ++rejected;
  }
  const double rate = static_cast<double>(rejected) / static_cast<double>(n);
  EXPECT_NEAR(rate, oracle::kZScoreRejectRate, 0.02);
}

TEST(DecomposeVelocity, Examples) {
  auto north = decompose_velocity(10, 0);
  EXPECT_NEAR(north.vx, 0.0, 1e-12);
  EXPECT_NEAR(north.vy, 10.0, 1e-12);
  auto east = decompose_velocity(10, 90);
  EXPECT_NEAR(east.vx, 10.0, 1e-12);
  EXPECT_NEAR(east.vy, 0.0, 1e-12);
  auto thirty = decompose_velocity(10, 30);
  EXPECT_NEAR(thirty.vx, 5.0, 1e-4);
  EXPECT_NEAR(thirty.vy, 8.6603, 1e-4);
  EXPECT_THROW(decompose_velocity(-1, 0), ValidationError);
}

// --- segmentation -----------------------------------------------------------

TEST(Segment, TwoHundredFiftyContiguousPoints) {
  const auto parsed = parse_string(kHeader + flight_rows("f", contiguous(250)));
  const auto seg = segment(parsed.streams);
  ASSERT_EQ(seg.trajectories.size(), 2u);
  EXPECT_EQ(seg.candidates, 2u);
  EXPECT_EQ(seg.trajectories[0].id, "f#0000");
  EXPECT_EQ(seg.trajectories[1].start_time(), 1000);
  for (const auto& t : seg.trajectories) {
    ASSERT_EQ(t.points.size(), kTrajectoryPoints);
    for (std::size_t k = 1; k < t.points.size(); ++k) EXPECT_EQ(t.points[k].time - t.points[k - 1].time, 10);
  }
  // velocity decomposition happened on the way in
  EXPECT_NEAR(seg.trajectories[0].points[0].vx, 200.0, 1e-9);
  EXPECT_NEAR(seg.trajectories[0].points[0].vy, 0.0, 1e-9);
}

TEST(Segment, GapRestartsSegments) {
  auto times = contiguous(40);
  const auto after = contiguous(200, 410);  // 20 s gap between index 39 (390 s) and index 40
  times.insert(times.end(), after.begin(), after.end());
  const auto seg = segment(parse_string(kHeader + flight_rows("g", times)).streams);
  ASSERT_EQ(seg.trajectories.size(), 2u);
  EXPECT_EQ(seg.trajectories[0].start_time(), 410);
  EXPECT_EQ(seg.trajectories[1].start_time(), 1410);
}

TEST(Segment, NinetyNinePointsGiveNothing) {
  const auto seg = segment(parse_string(kHeader + flight_rows("s", contiguous(99))).streams);
  EXPECT_TRUE(seg.trajectories.empty());
  EXPECT_EQ(seg.candidates, 0u);
}

TEST(Segment, OutlierCandidatesAreDropped) {
  std::string rows = flight_rows("o", contiguous(200));
  // corrupt the altitude of row 150 (second candidate)
  std::istringstream in(rows);
  std::string line, out;
  for (int i = 0; std::getline(in, line); ++i) {
    if (i == 150) line = "o,1500,10.3,50.0,60000,200.0,90.0,0.1";
    out += line + "\n";
  }
  const auto seg = segment(parse_string(kHeader + out).streams);
  EXPECT_EQ(seg.candidates, 2u);
  EXPECT_EQ(seg.rejected, 1u);
  ASSERT_EQ(seg.trajectories.size(), 1u);
  EXPECT_EQ(seg.trajectories[0].id, "o#0000");
}

// --- splitting ----------------------------------------------------------------

TEST(Split, RatiosAndDisjointness) {
  for (auto [n, tr, va, te] : std::vector<std::array<std::size_t, 4>>{{10, 8, 1, 1}, {100, 80, 10, 10}, {14, 12, 1, 1}}) {
    const auto s = split_dataset(fake_trajectories(n));
    EXPECT_EQ(s.train.size(), tr);
    EXPECT_EQ(s.validation.size(), va);
    EXPECT_EQ(s.test.size(), te);
    auto all = ids(s.train);
    for (const auto& id : ids(s.validation)) EXPECT_TRUE(all.insert(id).second);
    for (const auto& id : ids(s.test)) EXPECT_TRUE(all.insert(id).second);
    EXPECT_EQ(all.size(), n);
  }
  EXPECT_THROW(split_dataset(fake_trajectories(9)), InsufficientDataError);
}

TEST(Split, ChronologicalIgnoresInputOrder) {
  auto trajs = fake_trajectories(30);
  const auto a = split_dataset(trajs);
  Rng rng(5);
  rng.shuffle(trajs);
  const auto b = split_dataset(trajs);
  EXPECT_EQ(ids(a.train), ids(b.train));
  EXPECT_EQ(ids(a.validation), ids(b.validation));
  EXPECT_EQ(ids(a.test), ids(b.test));
  // earliest 80% train, latest 10% test
  for (const auto& t : a.train) EXPECT_LT(t.start_time(), a.validation.front().start_time());
  for (const auto& t : a.test) EXPECT_GT(t.start_time(), a.validation.back().start_time());
}

TEST(Split, RandomModeIsSeeded) {
  auto trajs = fake_trajectories(50);
  const auto a = split_dataset(trajs, SplitMode::random, 3);
  std::reverse(trajs.begin(), trajs.end());
  const auto b = split_dataset(trajs, SplitMode::random, 3);
  EXPECT_EQ(ids(a.test), ids(b.test));
  const auto chrono = split_dataset(trajs);
  EXPECT_NE(ids(a.test), ids(chrono.test));
  EXPECT_EQ(parse_split_mode("chrono"), SplitMode::chronological);
  EXPECT_THROW(parse_split_mode("sideways"), ConfigError);
}

// --- windows ----------------------------------------------------------------

TEST(Windows, CountsAndShapes) {
  const auto traj = straight_trajectory(5, 5, 3000, 150, 80);
  EXPECT_EQ(window_count(60, 15), 25u);
  EXPECT_EQ(window_count(60, 1), 39u);
  const auto w15 = make_windows(traj, 60, 15, true);
  ASSERT_EQ(w15.size(), 25u);
  EXPECT_EQ(make_windows(traj, 60, 1, true).size(), 39u);
  for (const auto& w : w15) {
    EXPECT_EQ(w.x.shape(), (Shape{6, 60}));
    EXPECT_EQ(w.y.shape(), (Shape{3, 15}));
    EXPECT_EQ(w.future.size(), 15u);
  }
}

TEST(Windows, CountMatchesEnumeration) {
  for (std::size_t points : {20u, 37u, 100u}) {
    const auto traj = straight_trajectory(0, 0, 100, 50, 50, points);
    for (std::size_t l = 1; l < points; ++l) {
      for (std::size_t t = 1; l + t < points; ++t) {
        // window w uses encoded steps w..w+L-1 (0-based) and target points up to w+L+T
        std::size_t enumerated = 0;
        for (std::size_t w = 0; w < points; ++w) {
          if (w + l + t <= points - 1) ++enumerated;
        }
        ASSERT_EQ(window_count(l, t, points), enumerated) << points << " " << l << " " << t;
        ASSERT_EQ(make_windows(traj, l, t, true).size(), enumerated);
      }
    }
  }
}

TEST(Windows, ContentMatchesCoding) {
  const auto trajs = synthesize_trajectories(1, 8);
  const auto& traj = trajs[0];
  const auto enc = encode_input_series(traj);
  const auto pos = traj.positions();
  const std::size_t l = 12, t = 5;
  const auto ws = make_windows(traj, l, t, true);
  for (std::size_t w : {std::size_t{0}, std::size_t{7}, ws.size() - 1}) {
    for (std::size_t c = 0; c < 6; ++c) {
      for (std::size_t s = 0; s < l; ++s) ASSERT_EQ(ws[w].x.at({c, s}), enc[w + s][c]);
    }
    const auto y = encode_targets(pos, w + l, t);
    for (std::size_t i = 0; i < y.numel(); ++i) ASSERT_EQ(ws[w].y.data()[i], y.data()[i]);
    EXPECT_EQ(ws[w].anchor.lon, pos[w + l].lon);
    EXPECT_EQ(ws[w].future.back().lat, pos[w + l + t].lat);
  }
}

TEST(Windows, NoDiffCarriesRawDegrees) {
  const auto traj = synthesize_trajectories(1, 9)[0];
  const auto ws = make_windows(traj, 10, 4, false);
  const auto& w = ws[3];
  for (std::size_t s = 0; s < 10; ++s) {
    EXPECT_EQ(w.x.at({0, s}), traj.points[3 + 1 + s].lon);
    EXPECT_EQ(w.x.at({1, s}), traj.points[3 + 1 + s].lat);
    EXPECT_EQ(w.x.at({2, s}), traj.points[3 + 1 + s].alt);
  }
  EXPECT_NEAR(w.y.at({1, 0}), traj.points[14].lat - traj.points[13].lat, 1e-15);
}

TEST(Windows, BudgetError) {
  const auto traj = straight_trajectory(0, 0, 100, 50, 50);
  try {
    make_windows(traj, 90, 10, true);
    FAIL() << "expected InsufficientDataError";
  } catch (const InsufficientDataError& e) {
    EXPECT_NE(std::string(e.what()).find("99"), std::string::npos);
  }
  EXPECT_NO_THROW(make_windows(traj, 90, 9, true));
}

TEST(Windows, BuildWindowsIsCanonical) {
  const auto trajs = synthesize_trajectories(12, 4);
  const auto set = build_windows(trajs, 20, 3, true);
  ASSERT_EQ(set.size(), 12u * window_count(20, 3));
  const auto first = make_windows(trajs[5], 20, 3, true);
  const std::size_t off = 5 * window_count(20, 3);
  for (std::size_t i = 0; i < first.size(); ++i) {
    ASSERT_EQ(set.samples[off + i].anchor.lon, first[i].anchor.lon);
  }
}

// --- synthetic data -----------------------------------------------------------

TEST(Synth, StraightNoiseFreeHasConstantSteps) {
  const auto trajs = synthesize_trajectories(5, 11, SynthProfile::straight_noise_free());
  for (const auto& t : trajs) {
    const auto enc = encode_input_series(t);
    for (const auto& s : enc) {
      EXPECT_NEAR(s[0], enc[0][0], 1e-6);
      EXPECT_NEAR(s[1], enc[0][1], 1e-6);
    }
  }
}

TEST(Synth, SameSeedIsBitIdentical) {
  const auto a = synthesize_trajectories(20, 42);
  const auto b = synthesize_trajectories(20, 42);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].id, b[i].id);
    for (std::size_t k = 0; k < a[i].points.size(); ++k) {
      const auto &p = a[i].points[k], &q = b[i].points[k];
      ASSERT_EQ(std::memcmp(&p, &q, sizeof(TrajectoryPoint)), 0);
    }
  }
  EXPECT_NE(synthesize_trajectories(1, 43)[0].points[0].lon, a[0].points[0].lon);
}

TEST(Synth, VelocityMatchesDisplacement) {
  SynthProfile clean;
  clean.position_noise = clean.altitude_noise = clean.velocity_noise = 0.0;
  for (const auto& t : synthesize_trajectories(30, 12, clean)) {
    for (std::size_t k = 0; k + 1 < t.points.size(); ++k) {
      const auto d = delta_between(t.points[k].position(), t.points[k + 1].position());
      const double moved = std::hypot(d.d_lon_m, d.d_lat_m);
      const double expected = std::hypot(t.points[k].vx, t.points[k].vy) * 10.0;
      ASSERT_NEAR(moved / expected, 1.0, 0.01);
      ASSERT_NEAR(t.points[k + 1].alt - t.points[k].alt, t.points[k].vz * 10.0, 0.01 * 80.0 + 1e-9);
    }
  }
}

TEST(Synth, ProfileContract) {
  const auto trajs = synthesize_trajectories(50, 13);
  for (const auto& t : trajs) {
    ASSERT_EQ(t.points.size(), kTrajectoryPoints);
    EXPECT_TRUE(zscore_filter(t.points).accepted);
    for (std::size_t k = 1; k < t.points.size(); ++k) ASSERT_EQ(t.points[k].time - t.points[k - 1].time, 10);
  }
  EXPECT_THROW(synthesize_trajectories(0, 1), ConfigError);
}

TEST(Synth, CsvRoundTrip) {
  const auto trajs = synthesize_trajectories(3, 14);
  std::stringstream csv;
  write_adsb_csv(csv, trajs);
  const auto seg = segment(parse_adsb_csv(csv).streams);
  ASSERT_EQ(seg.trajectories.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(seg.trajectories[i].id, trajs[i].id + "#0000");
    for (std::size_t k = 0; k < kTrajectoryPoints; ++k) {
      const auto &p = seg.trajectories[i].points[k], &q = trajs[i].points[k];
      ASSERT_EQ(p.lon, q.lon);
      ASSERT_EQ(p.lat, q.lat);
      ASSERT_NEAR(p.vx, q.vx, 1e-9);
      ASSERT_NEAR(p.vy, q.vy, 1e-9);
    }
  }
}

// --- dataset files ------------------------------------------------------------

TEST(DatasetFile, RoundTripIsExact) {
  const auto set = build_windows(synthesize_trajectories(2, 15), 12, 4, true);
  const auto bytes = serialize_windows(set, "abc");
  const auto back = deserialize_windows(bytes);
  EXPECT_EQ(back.config_hash, "abc");
  ASSERT_EQ(back.set.size(), set.size());
  EXPECT_EQ(back.set.lookback, 12u);
  EXPECT_EQ(back.set.horizon, 4u);
  EXPECT_TRUE(back.set.diff);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto &a = set.samples[i], &b = back.set.samples[i];
    ASSERT_TRUE(std::equal(a.x.data().begin(), a.x.data().end(), b.x.data().begin()));
    ASSERT_TRUE(std::equal(a.y.data().begin(), a.y.data().end(), b.y.data().begin()));
    ASSERT_EQ(a.anchor.lat, b.anchor.lat);
    ASSERT_EQ(a.future[3].alt, b.future[3].alt);
  }
  EXPECT_EQ(bytes.rfind("format=flightpatch-data-v1\n", 0), 0u);
  EXPECT_THROW(deserialize_windows(bytes.substr(0, bytes.size() - 8)), FormatError);
  EXPECT_THROW(deserialize_windows("format=other\nend\n"), FormatError);
}

TEST(DatasetFile, ManifestIsDeterministic) {
  DataConfig cfg;
  cfg.lookback = 12;
  cfg.horizon = 3;
  cfg.source = "synth";
  const auto a = render_manifest(prepare_dataset(synthesize_trajectories(20, 16), cfg, {}));
  const auto b = render_manifest(prepare_dataset(synthesize_trajectories(20, 16), cfg, {}));
  EXPECT_EQ(a, b);
  EXPECT_NE(a.find("data.diff=true"), std::string::npos);
  EXPECT_NE(a.find("data.seed=1"), std::string::npos);
  EXPECT_NE(a.find("train.windows=" + std::to_string(16 * window_count(12, 3))), std::string::npos);
  cfg.diff = false;
  const auto c = render_manifest(prepare_dataset(synthesize_trajectories(20, 16), cfg, {}));
  EXPECT_NE(c.find("data.diff=false"), std::string::npos);
  EXPECT_NE(cfg.hash(), DataConfig{}.hash());
}

TEST(DatasetFile, CsvPipelineCounts) {
  TempDir dir("csv");
  std::string csv = kHeader;
  for (int f = 0; f < 5; ++f) csv += flight_rows("fl" + std::to_string(f), contiguous(250, f * 100000));
  csv += "fl0,5,1,1,oops,1,1,1\n";
  std::ofstream(dir / "in.csv") << csv;
  DataConfig cfg;
  cfg.lookback = 20;
  cfg.horizon = 5;
  const auto d = prepare_from_csv(dir / "in.csv", cfg);
  EXPECT_EQ(d.counts.flights, 5u);
  EXPECT_EQ(d.counts.rows, 1251u);
  EXPECT_EQ(d.counts.malformed_rows, 1u);
  EXPECT_EQ(d.counts.candidates, 10u);
  EXPECT_EQ(d.counts.trajectories, 10u);
  EXPECT_EQ(d.split.train.size(), 8u);
  EXPECT_EQ(d.test.size(), window_count(20, 5));
  EXPECT_EQ(d.config.source, "in.csv");
}
