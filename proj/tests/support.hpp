#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "flightpatch/flightpatch.hpp"

namespace fpt {

using namespace flightpatch;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "<tensor>[<index>]"
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  double min_abs_nonzero = 0.0;  // smallest analytic |g| above 1e-15, to show gradients stay above the floor
  double max_abs = 0.0;
};

/// Compares reverse-mode gradients of `loss()` with central differences
/// (h = 1e-5) for every element of every tensor in `inputs`.
/// Relative error is |a - f| / max(|a|, |f|, 1e-8).
inline GradCheckResult grad_check(const std::function<Tensor()>& loss, std::vector<Tensor> inputs,
                                  const std::vector<std::string>& names = {}, double h = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    if (t.has_grad()) analytic.emplace_back(t.grad().begin(), t.grad().end());
    else analytic.emplace_back(t.numel(), 0.0);
  }
  GradCheckResult r;
  NoGradGuard guard;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto data = inputs[k].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = loss().item();
      data[i] = saved - h;
      const double down = loss().item();
      data[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double a = analytic[k][i];
      if (std::abs(a) > 1e-15 && (r.min_abs_nonzero == 0.0 || std::abs(a) < r.min_abs_nonzero)) {
        r.min_abs_nonzero = std::abs(a);
      }
      r.max_abs = std::max(r.max_abs, std::abs(a));
      const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8});
      ++r.checked;
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst = (k < names.size() ? names[k] : "input" + std::to_string(k)) + "[" + std::to_string(i) + "]";
        r.worst_analytic = a;
        r.worst_numeric = fd;
      }
    }
  }
  return r;
}

/// Projection loss weight * mean(out * R) with a fixed random R.
/// Attention key biases have an exactly zero gradient (softmax ignores a
/// per-row shift), so their central difference is pure rounding noise of
/// order ulp(loss)/h. Checks that contain attention pass a small weight to keep
/// that noise well under the 1e-8 floor of the relative-error formula.
inline std::function<Tensor(const Tensor&)> projection_loss(const Shape& shape, std::uint64_t seed,
                                                            double weight = 1.0) {
  Rng rng(seed);
  std::vector<double> r(element_count(shape));
  for (auto& v : r) v = weight * rng.uniform(-1.0, 1.0);
  const Tensor weights(shape, std::move(r));
  return [weights](const Tensor& out) { return mean(mul(out, weights)); };
}

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool grad = false) {
  std::vector<double> v(element_count(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(shape, std::move(v), grad);
}

inline GradCheckResult check_store(const std::function<Tensor()>& loss, const ParameterStore& store,
                                   std::vector<Tensor> extra = {}) {
  std::vector<Tensor> inputs;
  std::vector<std::string> names;
  for (const auto& p : store.entries()) {
    inputs.push_back(p.value);
    names.push_back(p.name);
  }
  for (std::size_t i = 0; i < extra.size(); ++i) {
    inputs.push_back(extra[i]);
    names.push_back("extra" + std::to_string(i));
  }
  return grad_check(loss, inputs, names);
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("flightpatch-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

/// Toy model configuration used by the gradient and overfit checks.
inline ModelConfig toy_config() {
  ModelConfig c;
  c.lookback = 12;
  c.horizon = 3;
  c.d_model = 8;
  c.heads = 2;
  c.temporal_layers = c.scale_layers = c.channel_layers = 1;
  c.patch_sizes = {6, 2};
  c.predictor_hidden = 8;
  c.dropout = 0.0;
  c.seed = 11;
  return c;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Straight constant-velocity trajectory along a fixed heading.
inline FlightTrajectory straight_trajectory(double lon, double lat, double alt, double east_mps, double north_mps,
                                            std::size_t points = kTrajectoryPoints, std::int64_t t0 = 0) {
  FlightTrajectory traj{"straight", {}};
  GeoPoint p{lon, lat, alt};
  for (std::size_t k = 0; k < points; ++k) {
    traj.points.push_back({t0 + static_cast<std::int64_t>(k) * 10, p.lon, p.lat, p.alt, east_mps, north_mps, 0.0});
    p = apply_delta(p, east_mps * 10.0, north_mps * 10.0, alt, k);
  }
  return traj;
}

inline constexpr const char* kHeader = "icao24,time,lon,lat,geoaltitude,velocity,heading,vertrate\n";

/// Smooth eastbound rows for one flight; `times` gives each row's timestamp.
inline std::string flight_rows(const std::string& id, const std::vector<std::int64_t>& times) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t k = 0; k < times.size(); ++k) {
    os << id << ',' << times[k] << ',' << 10.0 + 0.002 * static_cast<double>(k) << ",50.0,"
       << 9000.0 + static_cast<double>(k) << ",200.0,90.0,0.1\n";
  }
  return os.str();
}

inline std::vector<std::int64_t> contiguous(std::size_t n, std::int64_t t0 = 0) {
  std::vector<std::int64_t> t(n);
  for (std::size_t k = 0; k < n; ++k) t[k] = t0 + static_cast<std::int64_t>(k) * 10;
  return t;
}

}  // namespace fpt
