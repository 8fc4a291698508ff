#pragma once

// Minibatch training with Adam and early stopping, MAE/RMSE evaluation and
// the persistence baseline.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "flightpatch/adam.hpp"
#include "flightpatch/data.hpp"
#include "flightpatch/errors.hpp"
#include "flightpatch/geo.hpp"
#include "flightpatch/model.hpp"
#include "flightpatch/parallel.hpp"

namespace flightpatch {

struct TrainConfig {
  std::size_t max_epochs = 30;
  std::size_t patience = 3;
  std::size_t batch_size = 64;
  double lr = 1e-4;
  std::uint64_t seed = 1;
  bool shuffle = true;
  std::size_t max_steps = 0;  // 0 = unlimited

  void validate() const {
    if (max_epochs == 0) throw ConfigError("max_epochs must be at least 1");
    if (patience == 0 || patience >= max_epochs) {
      throw ConfigError("patience (" + std::to_string(patience) + ") must lie in [1, max_epochs=" +
                        std::to_string(max_epochs) + ")");
    }
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  }
};

enum class StopReason { none, patience, max_epochs, max_steps };

inline std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::patience: return "patience";
    case StopReason::max_epochs: return "max_epochs";
    case StopReason::max_steps: return "max_steps";
    default: return "none";
  }
}

/// Tracks validation losses. A round counts as "not decreased" when its loss
/// is >= the best so far; `patience` such rounds in a row stop training.
class EarlyStopper {
 public:
  EarlyStopper(std::size_t patience, std::size_t max_epochs) : patience_(patience), max_epochs_(max_epochs) {}

  /// Records the loss of the next epoch. Returns true when training must stop.
  bool observe(double val_loss) {
    ++epoch_;
    improved_ = epoch_ == 1 || val_loss < best_loss_;
    if (improved_) {
      best_loss_ = val_loss;
      best_epoch_ = epoch_;
      stale_ = 0;
    } else {
      ++stale_;
    }
    if (stale_ >= patience_) reason_ = StopReason::patience;
    else if (epoch_ >= max_epochs_) reason_ = StopReason::max_epochs;
    return reason_ != StopReason::none;
  }

  bool improved() const { return improved_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t best_epoch() const { return best_epoch_; }  // 1-based
  double best_loss() const { return best_loss_; }
  StopReason reason() const { return reason_; }

 private:
  std::size_t patience_;
  std::size_t max_epochs_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t stale_ = 0;
  double best_loss_ = 0.0;
  bool improved_ = false;
  StopReason reason_ = StopReason::none;
};

/// Stacks samples[indices] into X [B, C, L] and Y [B, C', T].
inline std::pair<Tensor, Tensor> make_batch(const WindowSet& set, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw UsageError("make_batch: empty batch");
  const auto& first = set.samples[indices[0]];
  const Shape xs = first.x.shape();
  const Shape ys = first.y.shape();
  std::vector<double> x;
  std::vector<double> y;
  x.reserve(indices.size() * first.x.numel());
  y.reserve(indices.size() * first.y.numel());
  for (auto i : indices) {
    const auto& s = set.samples[i];
    x.insert(x.end(), s.x.data().begin(), s.x.data().end());
    y.insert(y.end(), s.y.data().begin(), s.y.data().end());
  }
  return {Tensor({indices.size(), xs[0], xs[1]}, std::move(x)), Tensor({indices.size(), ys[0], ys[1]}, std::move(y))};
}

inline void check_compatible(const ModelConfig& c, const WindowSet& set, const std::string& what) {
  if (set.empty()) return;
  const Shape want_x{c.channels, c.lookback};
  const Shape want_y{c.out_channels, c.horizon};
  const auto& s = set.samples.front();
  if (s.x.shape() != want_x || s.y.shape() != want_y) {
    throw ConfigError(what + " windows have X " + to_string(s.x.shape()) + " / Y " + to_string(s.y.shape()) +
                      " but the model expects X " + to_string(want_x) + " / Y " + to_string(want_y));
  }
}

/// Eval-mode predictions for every sample, in sample order.
inline std::vector<Tensor> predict_all(const FlightPatchNet& net, const WindowSet& set, std::size_t batch_size = 64) {
  check_compatible(net.config(), set, "evaluation");
  const std::size_t n = set.size();
  const std::size_t batches = (n + batch_size - 1) / batch_size;
  std::vector<Tensor> out(n);
  parallel_for(batches, [&](std::size_t b) {
    std::vector<std::size_t> idx;
    for (std::size_t i = b * batch_size; i < std::min(n, (b + 1) * batch_size); ++i) idx.push_back(i);
    const Tensor y = net.predict(make_batch(set, idx).first);
    const std::size_t per = y.numel() / idx.size();
    const Shape shape(y.shape().begin() + 1, y.shape().end());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      out[idx[k]] = Tensor(shape, std::vector<double>(y.data().begin() + static_cast<std::ptrdiff_t>(k * per),
                                                      y.data().begin() + static_cast<std::ptrdiff_t>((k + 1) * per)));
    }
  });
  return out;
}

/// Mean squared error over every element of every sample, eval mode.
inline double dataset_mse(const FlightPatchNet& net, const WindowSet& set, std::size_t batch_size = 64) {
  if (set.empty()) throw InsufficientDataError("dataset_mse: empty window set");
  const auto pred = predict_all(net, set, batch_size);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto p = pred[i].data();
    const auto y = set.samples[i].y.data();
    for (std::size_t k = 0; k < p.size(); ++k) total += (p[k] - y[k]) * (p[k] - y[k]);
    count += p.size();
  }
  return total / static_cast<double>(count);
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_mse = 0.0;  // mean training-mode minibatch loss
  double val_mse = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_mse = 0.0;
  std::size_t steps = 0;
  StopReason reason = StopReason::none;
};

inline std::string render_loss_history(const TrainResult& r) {
  std::ostringstream os;
  os << std::setprecision(17) << "epoch,train_mse,val_mse\n";
  for (const auto& e : r.history) os << e.epoch << ',' << e.train_mse << ',' << e.val_mse << '\n';
  return os.str();
}

using EpochCallback = std::function<void(const EpochRecord&)>;
/// Validation loss of the current parameters; defaults to dataset_mse on the
/// validation set. Tests substitute scripted sequences.
using ValidationFn = std::function<double(const FlightPatchNet&)>;

/// Trains in place and leaves the best-validation parameters in `net`.
inline TrainResult train(FlightPatchNet& net, const WindowSet& train_set, const WindowSet& val_set,
                         const TrainConfig& config, const EpochCallback& on_epoch = {},
                         const ValidationFn& validation = {}) {
  config.validate();
  if (train_set.empty()) throw InsufficientDataError("training set is empty");
  if (val_set.empty()) throw InsufficientDataError("validation set is empty");
  check_compatible(net.config(), train_set, "training");
  check_compatible(net.config(), val_set, "validation");

  Adam adam(AdamOptions{config.lr});
  Rng order_rng(config.seed);
  Rng dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  EarlyStopper stopper(config.patience, config.max_epochs);
  auto& params = net.parameters();
  std::vector<std::vector<double>> best;
  auto snapshot = [&] {
    best.clear();
    for (const auto& p : params.entries()) best.emplace_back(p.value.data().begin(), p.value.data().end());
  };

  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  bool out_of_steps = false;
  while (!out_of_steps) {
    const std::size_t epoch = stopper.epoch() + 1;
    if (config.shuffle) order_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += config.batch_size, ++b) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(
                                                             std::min(order.size(), start + config.batch_size)));
      const auto [x, y] = make_batch(train_set, idx);
      params.zero_grad();
      double loss_value = 0.0;
      try {
        const Tensor loss = mse_loss(net.forward(x, true, dropout_rng).y_hat, y);
        loss.backward();
        loss_value = loss.item();
      } catch (const NumericError& e) {
        throw NumericError("non-finite value in epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                           ": " + e.what());
      }
      adam.step(params);
      for (const auto& p : params.entries()) {
        for (double v : p.value.data()) {
          if (!std::isfinite(v)) {
            throw NumericError("parameter '" + p.name + "' became non-finite after epoch " + std::to_string(epoch) +
                               ", batch " + std::to_string(b));
          }
        }
      }
      loss_sum += loss_value * static_cast<double>(idx.size());
      seen += idx.size();
      ++result.steps;
      if (config.max_steps && result.steps >= config.max_steps) {
        out_of_steps = true;
        break;
      }
    }
    const double val = validation ? validation(net) : dataset_mse(net, val_set, config.batch_size);
    EpochRecord rec{epoch, loss_sum / static_cast<double>(seen), val};
    result.history.push_back(rec);
    const bool stop = stopper.observe(rec.val_mse);
    if (stopper.improved()) snapshot();
    if (on_epoch) on_epoch(rec);
    if (stop) break;
  }
  result.reason = stopper.reason() != StopReason::none ? stopper.reason() : StopReason::max_steps;
  result.best_epoch = stopper.best_epoch();
  result.best_val_mse = stopper.best_loss();
  for (std::size_t k = 0; k < best.size(); ++k) {
    auto dst = params.entries()[k].value.mutable_data();
    std::copy(best[k].begin(), best[k].end(), dst.begin());
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

enum class EvalSpace { reconstructed, coded };

inline std::string to_string(EvalSpace s) { return s == EvalSpace::reconstructed ? "reconstructed" : "coded"; }

inline constexpr const char* kVariableNames[3] = {"lon", "lat", "alt"};

struct EvalReport {
  std::string model = "flightpatchnet";
  EvalSpace space = EvalSpace::reconstructed;
  bool diff = true;
  std::size_t horizon = 0;
  std::size_t samples = 0;   // windows scored
  std::size_t excluded = 0;  // windows dropped after a reconstruction failure
  std::string config_hash;
  std::array<double, 3> mae{};
  std::array<double, 3> rmse{};

  /// Units of the lon/lat rows.
  std::string position_unit() const {
    if (space == EvalSpace::reconstructed || !diff) return "deg";
    return "m";
  }

  std::string render_kv() const {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "model=" << model << "\n"
       << "space=" << to_string(space) << "\n"
       << "diff=" << (diff ? "true" : "false") << "\n"
       << "horizon=" << horizon << "\n"
       << "samples=" << samples << "\n"
       << "excluded=" << excluded << "\n"
       << "config_hash=" << config_hash << "\n"
       << "position_unit=" << position_unit() << "\n";
    for (std::size_t v = 0; v < 3; ++v) {
      os << kVariableNames[v] << ".mae=" << mae[v] << "\n" << kVariableNames[v] << ".rmse=" << rmse[v] << "\n";
    }
    if (position_unit() == "deg") {
      for (std::size_t v = 0; v < 2; ++v) {
        os << kVariableNames[v] << ".mae_e5=" << mae[v] * 1e5 << "\n"
           << kVariableNames[v] << ".rmse_e5=" << rmse[v] * 1e5 << "\n";
      }
    }
    return os.str();
  }

  std::string render_table() const {
    std::ostringstream os;
    const bool deg = position_unit() == "deg";
    os << "model: " << model << "   space: " << to_string(space) << "   diff: " << (diff ? "on" : "off")
       << "   T=" << horizon << "   windows: " << samples << " (excluded " << excluded << ")\n";
    os << std::left << std::setw(10) << "variable" << std::setw(10) << "unit" << std::right << std::setw(16) << "MAE"
       << std::setw(16) << "RMSE";
    if (deg) os << std::setw(16) << "MAE x1e5" << std::setw(16) << "RMSE x1e5";
    os << "\n";
    for (std::size_t v = 0; v < 3; ++v) {
      const std::string unit = v == 2 ? "m" : position_unit();
      os << std::left << std::setw(10) << kVariableNames[v] << std::setw(10) << unit << std::right << std::setprecision(8)
         << std::setw(16) << mae[v] << std::setw(16) << rmse[v];
      if (deg) {
        if (v < 2) os << std::setw(16) << mae[v] * 1e5 << std::setw(16) << rmse[v] * 1e5;
        else os << std::setw(16) << "-" << std::setw(16) << "-";
      }
      os << "\n";
    }
    return os.str();
  }
};

/// Per-step errors (prediction - truth) of one window, rows lon/lat/alt.
/// Throws OutOfRangeError when reconstruction fails.
inline std::array<std::vector<double>, 3> window_errors(const WindowSample& s, const Tensor& pred, EvalSpace space,
                                                        bool diff, const EarthModel& earth) {
  const std::size_t t = pred.dim(1);
  std::array<std::vector<double>, 3> err;
  for (auto& e : err) e.resize(t);
  if (space == EvalSpace::coded) {
    const auto p = pred.data();
    const auto y = s.y.data();
    for (std::size_t v = 0; v < 3; ++v) {
      for (std::size_t i = 0; i < t; ++i) err[v][i] = p[v * t + i] - y[v * t + i];
    }
    return err;
  }
  const auto points = diff ? reconstruct(s.anchor, pred, earth) : reconstruct_offsets(s.anchor, pred);
  for (std::size_t i = 0; i < t; ++i) {
    err[0][i] = wrap_longitude_delta(points[i].lon - s.future[i].lon);
    err[1][i] = points[i].lat - s.future[i].lat;
    err[2][i] = points[i].alt - s.future[i].alt;
  }
  return err;
}

/// Per-window MAE = mean|e| and RMSE = sqrt(mean e^2) over the T steps,
/// averaged over the windows that reconstruct successfully.
inline EvalReport evaluate_predictions(const WindowSet& set, const std::vector<Tensor>& predictions, EvalSpace space,
                                       const EarthModel& earth = {}) {
  if (predictions.size() != set.size()) {
    throw DimensionError("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(set.size()) + " windows");
  }
  struct Slot {
    bool ok = false;
    std::array<double, 3> mae{};
    std::array<double, 3> rmse{};
  };
  std::vector<Slot> slots(set.size());
  parallel_for(set.size(), [&](std::size_t w) {
    const auto& pred = predictions[w];
    if (pred.shape() != set.samples[w].y.shape()) {
      throw DimensionError("evaluate: prediction " + to_string(pred.shape()) + " vs target " +
                           to_string(set.samples[w].y.shape()));
    }
    std::array<std::vector<double>, 3> err;
    try {
      err = window_errors(set.samples[w], pred, space, set.diff, earth);
    } catch (const OutOfRangeError&) {
      return;
    }
    Slot& s = slots[w];
    s.ok = true;
    for (std::size_t v = 0; v < 3; ++v) {
      double a = 0.0;
      double q = 0.0;
      for (double e : err[v]) {
        a += std::abs(e);
        q += e * e;
      }
      const double n = static_cast<double>(err[v].size());
      s.mae[v] = a / n;
      s.rmse[v] = std::sqrt(q / n);
    }
  });
  EvalReport r;
  r.space = space;
  r.diff = set.diff;
  r.horizon = set.horizon;
  for (const auto& s : slots) {
    if (!s.ok) {
      ++r.excluded;
      continue;
    }
    ++r.samples;
    for (std::size_t v = 0; v < 3; ++v) {
      r.mae[v] += s.mae[v];
      r.rmse[v] += s.rmse[v];
    }
  }
  if (r.samples) {
    for (std::size_t v = 0; v < 3; ++v) {
      r.mae[v] /= static_cast<double>(r.samples);
      r.rmse[v] /= static_cast<double>(r.samples);
    }
  }
  return r;
}

inline EvalReport evaluate(const FlightPatchNet& net, const WindowSet& set, EvalSpace space = EvalSpace::reconstructed,
                           const EarthModel& earth = {}) {
  if (set.empty()) throw InsufficientDataError("evaluate: empty window set");
  EvalReport r = evaluate_predictions(set, predict_all(net, set), space, earth);
  r.config_hash = to_hex(fnv1a(net.config().canonical()));
  return r;
}

/// Zero displacement from the anchor and the anchor's altitude at every step.
inline std::vector<Tensor> persistence_predictions(const WindowSet& set) {
  std::vector<Tensor> out;
  out.reserve(set.size());
  for (const auto& s : set.samples) {
    const std::size_t t = s.y.dim(1);
    std::vector<double> v(3 * t, 0.0);
    std::fill(v.begin() + static_cast<std::ptrdiff_t>(2 * t), v.end(), s.anchor.alt);
    out.emplace_back(Shape{3, t}, std::move(v));
  }
  return out;
}

inline EvalReport persistence_baseline(const WindowSet& set, EvalSpace space = EvalSpace::reconstructed,
                                       const EarthModel& earth = {}) {
  if (set.empty()) throw InsufficientDataError("persistence_baseline: empty window set");
  EvalReport r = evaluate_predictions(set, persistence_predictions(set), space, earth);
  r.model = "persistence";
  return r;
}

}  // namespace flightpatch
