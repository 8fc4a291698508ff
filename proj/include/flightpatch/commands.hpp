#pragma once

// The CLI subcommands as library functions. Each takes the resolved
// RunConfig, writes its artifacts plus run_config.txt into `out`, logs a
// summary to `log`, and throws on any failure.

#include <cstddef>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "flightpatch/checkpoint.hpp"
#include "flightpatch/config.hpp"
#include "flightpatch/data.hpp"
#include "flightpatch/dataset.hpp"
#include "flightpatch/errors.hpp"
#include "flightpatch/geo.hpp"
#include "flightpatch/model.hpp"
#include "flightpatch/train.hpp"

namespace flightpatch {

namespace fs = std::filesystem;

namespace cmd_detail {

inline fs::path output_dir(const RunConfig& rc) {
  if (rc.out.empty()) throw UsageError("--out must name an output directory");
  const fs::path dir(rc.out);
  fs::create_directories(dir);
  return dir;
}

inline void write_run_config(const fs::path& dir, const RunConfig& rc) {
  detail::write_file(dir / "run_config.txt", rc.render());
}

inline void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required option --") + flag);
}

inline void log_prepared(std::ostream& log, const PreparedDataset& d) {
  log << "flights: " << d.counts.flights << "\n"
      << "rows: " << d.counts.rows << " (malformed " << d.counts.malformed_rows << ")\n"
      << "trajectories: " << d.counts.trajectories << " (z-score rejected " << d.counts.rejected << ")\n"
      << "windows: train " << d.train.size() << ", validation " << d.validation.size() << ", test "
      << d.test.size() << "\n";
}

inline std::vector<std::size_t> parse_indices(const std::string& s) {
  return config_parse::to_sizes("windows", s);
}

}  // namespace cmd_detail

/// parse -> segment -> filter -> split -> window on an ADS-B CSV.
inline PreparedDataset cmd_preprocess(const RunConfig& rc, std::ostream& log) {
  cmd_detail::require(rc.input, "input");
  const fs::path input(rc.input);
  if (!fs::exists(input)) throw IoError("input CSV '" + rc.input + "' does not exist");
  const fs::path dir = cmd_detail::output_dir(rc);
  PreparedDataset d = prepare_from_csv(input, rc.data_config(input.filename().string()));
  write_dataset({dir}, d);
  cmd_detail::write_run_config(dir, rc);
  cmd_detail::log_prepared(log, d);
  return d;
}

/// Synthetic trajectories through the same split/window path. Also writes
/// the trajectories as trajectories.csv in the ADS-B schema.
inline PreparedDataset cmd_synth(const RunConfig& rc, std::ostream& log) {
  if (rc.n < 10) throw ConfigError("synth needs --n >= 10 to form an 8:1:1 split, got " + std::to_string(rc.n));
  const MotionProfile motion = parse_motion_profile(rc.profile);
  SynthProfile profile = motion == MotionProfile::straight ? SynthProfile::straight_noise_free() : SynthProfile{};
  const fs::path dir = cmd_detail::output_dir(rc);
  auto trajectories = synthesize_trajectories(rc.n, rc.seed, profile);
  {
    std::ostringstream csv;
    write_adsb_csv(csv, trajectories);
    detail::write_file(dir / "trajectories.csv", csv.str());
  }
  PipelineCounts counts;
  counts.flights = rc.n;
  counts.candidates = rc.n;
  counts.rows = rc.n * kTrajectoryPoints;
  const std::string source = "synth:" + to_string(motion) + ":n=" + std::to_string(rc.n);
  PreparedDataset d = prepare_dataset(std::move(trajectories), rc.data_config(source), counts);
  write_dataset({dir}, d);
  cmd_detail::write_run_config(dir, rc);
  cmd_detail::log_prepared(log, d);
  return d;
}

struct TrainOutcome {
  TrainResult result;
  std::size_t parameter_count = 0;
  fs::path checkpoint;
};

inline TrainOutcome cmd_train(const RunConfig& rc, std::ostream& log) {
  cmd_detail::require(rc.data, "data");
  const DatasetLayout layout{rc.data};
  if (!fs::exists(layout.train())) throw IoError("dataset '" + rc.data + "' has no train.fpd");
  const auto train_set = read_windows(layout.train());
  const auto val_set = read_windows(layout.validation());
  if (train_set.set.diff != rc.diff) {
    throw ConfigError(std::string("dataset was built with diff=") + (train_set.set.diff ? "true" : "false") +
                      " but the run requests diff=" + (rc.diff ? "true" : "false"));
  }
  FlightPatchNet net(rc.model_config());
  const fs::path dir = cmd_detail::output_dir(rc);
  log << "parameters: " << net.parameters().scalar_count() << "\n";
  TrainOutcome out;
  out.parameter_count = net.parameters().scalar_count();
  out.result = train(net, train_set.set, val_set.set, rc.train_config(), [&](const EpochRecord& e) {
    log << "epoch " << e.epoch << "  train_mse " << e.train_mse << "  val_mse " << e.val_mse << "\n";
  });
  out.checkpoint = dir / "checkpoint.fpc";
  save_checkpoint(out.checkpoint, net, {EarthModel{}, train_set.config_hash, train_set.set.diff});
  detail::write_file(dir / "loss_history.csv", render_loss_history(out.result));
  detail::write_file(dir / "model.txt", net.describe());
  cmd_detail::write_run_config(dir, rc);
  log << "best validation mse: " << std::setprecision(10) << out.result.best_val_mse << " (epoch "
      << out.result.best_epoch << ", stopped by " << to_string(out.result.reason) << ")\n";
  return out;
}

struct EvalOutcome {
  EvalReport model;
  std::optional<EvalReport> baseline;
};

inline EvalOutcome cmd_eval(const RunConfig& rc, std::ostream& log) {
  cmd_detail::require(rc.checkpoint, "checkpoint");
  cmd_detail::require(rc.data, "data");
  if (!rc.baseline.empty() && rc.baseline != "persistence") {
    throw UsageError("--baseline accepts only 'persistence', got '" + rc.baseline + "'");
  }
  auto ckpt = load_checkpoint(rc.checkpoint);
  const auto test = read_windows(DatasetLayout{rc.data}.test());
  if (test.config_hash != ckpt.meta.data_config_hash) {
    throw ValidationError("checkpoint was trained on dataset config " + ckpt.meta.data_config_hash +
                          " but the test set has config " + test.config_hash + "; refusing to evaluate");
  }
  check_compatible(ckpt.net.config(), test.set, "test");
  const EvalSpace space = rc.coded_space ? EvalSpace::coded : EvalSpace::reconstructed;
  const fs::path dir = cmd_detail::output_dir(rc);
  EvalOutcome out;
  out.model = evaluate(ckpt.net, test.set, space, ckpt.meta.earth);
  detail::write_file(dir / "report.txt", out.model.render_kv());
  detail::write_file(dir / "report_table.txt", out.model.render_table());
  log << out.model.render_table();
  if (rc.baseline == "persistence") {
    out.baseline = persistence_baseline(test.set, space, ckpt.meta.earth);
    out.baseline->config_hash = out.model.config_hash;
    detail::write_file(dir / "baseline_report.txt", out.baseline->render_kv());
    detail::write_file(dir / "baseline_report_table.txt", out.baseline->render_table());
    log << out.baseline->render_table();
  }
  cmd_detail::write_run_config(dir, rc);
  return out;
}

/// Model input [C, L] for a run of L+1 raw points; the last point is the anchor.
inline Tensor encode_observation(const FlightTrajectory& traj, bool diff, const EarthModel& earth = {}) {
  const auto steps = encode_input_series(traj, earth);
  const std::size_t l = steps.size();
  std::vector<double> x(kStateChannels * l);
  for (std::size_t t = 0; t < l; ++t) {
    for (std::size_t c = 0; c < kStateChannels; ++c) x[c * l + t] = steps[t][c];
    if (!diff) {
      x[t] = traj.points[t + 1].lon;
      x[l + t] = traj.points[t + 1].lat;
    }
  }
  return Tensor({kStateChannels, l}, std::move(x));
}

/// Absolute positions predicted from one coded prediction.
inline std::vector<GeoPoint> reconstruct_prediction(const GeoPoint& anchor, const Tensor& pred, bool diff,
                                                    const EarthModel& earth = {}) {
  return diff ? reconstruct(anchor, pred, earth) : reconstruct_offsets(anchor, pred);
}

inline std::string render_prediction_csv(const std::vector<GeoPoint>& points) {
  std::ostringstream os;
  os << std::setprecision(17) << "step,lon,lat,alt\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    os << i + 1 << ',' << points[i].lon << ',' << points[i].lat << ',' << points[i].alt << '\n';
  }
  return os.str();
}

/// Reads L+1 raw points from an ADS-B CSV and writes prediction.csv.
inline std::vector<GeoPoint> cmd_predict(const RunConfig& rc, std::ostream& log) {
  cmd_detail::require(rc.checkpoint, "checkpoint");
  cmd_detail::require(rc.input, "input");
  auto ckpt = load_checkpoint(rc.checkpoint);
  const auto& mc = ckpt.net.config();
  const std::size_t need = mc.lookback + 1;
  const ParseResult parsed = parse_adsb_csv(fs::path(rc.input));
  if (parsed.streams.size() != 1) {
    throw ValidationError("predict expects one flight in '" + rc.input + "', found " +
                          std::to_string(parsed.streams.size()));
  }
  const auto& recs = parsed.streams[0].records;
  if (recs.size() != need || parsed.rejected != 0) {
    throw ValidationError("predict needs exactly " + std::to_string(need) + " valid points (lookback " +
                          std::to_string(mc.lookback) + " + 1 anchor), got " + std::to_string(recs.size()) +
                          " valid and " + std::to_string(parsed.rejected) + " rejected rows");
  }
  FlightTrajectory traj{parsed.streams[0].id, {}};
  for (const auto& r : recs) traj.points.push_back(to_trajectory_point(r));
  const Tensor x = encode_observation(traj, ckpt.meta.diff, ckpt.meta.earth);
  const Tensor pred = ckpt.net.predict(x);
  const auto points = reconstruct_prediction(traj.points.back().position(), pred, ckpt.meta.diff, ckpt.meta.earth);
  const fs::path dir = cmd_detail::output_dir(rc);
  const std::string csv = render_prediction_csv(points);
  detail::write_file(dir / "prediction.csv", csv);
  cmd_detail::write_run_config(dir, rc);
  log << csv;
  return points;
}

/// `window,variable,t,truth,prediction` rows in the coded space: t = 1..L
/// are observed inputs (no prediction), t = L+1..L+T the horizon.
inline std::string cmd_export_plot(const RunConfig& rc, std::ostream& log) {
  cmd_detail::require(rc.checkpoint, "checkpoint");
  cmd_detail::require(rc.data, "data");
  auto ckpt = load_checkpoint(rc.checkpoint);
  const auto test = read_windows(DatasetLayout{rc.data}.test());
  check_compatible(ckpt.net.config(), test.set, "test");
  const auto indices = cmd_detail::parse_indices(rc.windows);
  for (auto w : indices) {
    if (w >= test.set.size()) {
      throw UsageError("window index " + std::to_string(w) + " out of range: test set has " +
                       std::to_string(test.set.size()) + " windows");
    }
  }
  std::ostringstream os;
  os << std::setprecision(17) << "window,variable,t,truth,prediction\n";
  const std::size_t l = test.set.lookback;
  const std::size_t t = test.set.horizon;
  for (auto w : indices) {
    const auto& s = test.set.samples[w];
    const Tensor pred = ckpt.net.predict(s.x);
    for (std::size_t v = 0; v < kTargetChannels; ++v) {
      for (std::size_t i = 0; i < l; ++i) {
        os << w << ',' << kVariableNames[v] << ',' << i + 1 << ',' << s.x.data()[v * l + i] << ",\n";
      }
      for (std::size_t i = 0; i < t; ++i) {
        os << w << ',' << kVariableNames[v] << ',' << l + i + 1 << ',' << s.y.data()[v * t + i] << ','
           << pred.data()[v * t + i] << '\n';
      }
    }
  }
  const fs::path dir = cmd_detail::output_dir(rc);
  detail::write_file(dir / "plot_data.csv", os.str());
  cmd_detail::write_run_config(dir, rc);
  log << "wrote " << indices.size() << " window(s) to " << (dir / "plot_data.csv").string() << "\n";
  return os.str();
}

}  // namespace flightpatch
