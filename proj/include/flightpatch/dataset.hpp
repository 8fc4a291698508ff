#pragma once

// On-disk processed datasets ("flightpatch-data-v1") and the split manifest.
//
// A dataset file is a block of `key=value` text lines terminated by `end`,
// followed by little-endian f64 payload sections X[n][C][L], Y[n][C'][T],
// anchor[n][3] and future[n][T][3].

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "flightpatch/binary_io.hpp"
#include "flightpatch/data.hpp"
#include "flightpatch/errors.hpp"
#include "flightpatch/hash.hpp"

namespace flightpatch {

inline constexpr const char* kDataFormat = "flightpatch-data-v1";

/// Everything that determines the content of a processed dataset.
struct DataConfig {
  std::size_t lookback = 60;
  std::size_t horizon = 15;
  bool diff = true;
  SplitMode split = SplitMode::chronological;
  std::uint64_t seed = 1;
  std::string source;  // input CSV name or synth descriptor

  std::string canonical() const {
    std::ostringstream os;
    os << "data.lookback=" << lookback << "\n"
       << "data.horizon=" << horizon << "\n"
       << "data.diff=" << (diff ? "true" : "false") << "\n"
       << "data.split=" << to_string(split) << "\n"
       << "data.seed=" << seed << "\n"
       << "data.source=" << source << "\n";
    return os.str();
  }

  std::string hash() const { return to_hex(fnv1a(canonical())); }
};

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

/// Splits `key=value` lines up to the `end` line. Returns the header map and
/// the offset of the first payload byte.
inline std::size_t parse_header(const std::string& bytes, const std::string& what,
                                std::vector<std::pair<std::string, std::string>>& lines) {
  std::size_t pos = 0;
  while (true) {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw FormatError(what + ": header is not terminated by 'end'");
    const std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    if (line == "end") return pos;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(what + ": malformed header line '" + line + "'");
    lines.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
}

inline const std::string& header_value(const std::vector<std::pair<std::string, std::string>>& lines,
                                       const std::string& key, const std::string& what) {
  for (const auto& [k, v] : lines) {
    if (k == key) return v;
  }
  throw FormatError(what + ": header lacks '" + key + "'");
}

inline std::size_t parse_count(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw FormatError(what + ": bad integer '" + s + "'");
    return static_cast<std::size_t>(v);
  } catch (const std::logic_error&) {
    throw FormatError(what + ": bad integer '" + s + "'");
  }
}

}  // namespace detail

/// Serialized bytes of one split. Deterministic for identical inputs.
inline std::string serialize_windows(const WindowSet& set, const std::string& config_hash) {
  std::ostringstream header;
  header << "format=" << kDataFormat << "\n"
         << "samples=" << set.size() << "\n"
         << "channels=" << kStateChannels << "\n"
         << "lookback=" << set.lookback << "\n"
         << "target_channels=" << kTargetChannels << "\n"
         << "horizon=" << set.horizon << "\n"
         << "diff=" << (set.diff ? "true" : "false") << "\n"
         << "config_hash=" << config_hash << "\n"
         << "sections=X,Y,anchor,future\n"
         << "end\n";
  std::string out = header.str();
  for (const auto& s : set.samples) binary::put_f64s(out, s.x.data());
  for (const auto& s : set.samples) binary::put_f64s(out, s.y.data());
  for (const auto& s : set.samples) {
    binary::put_f64(out, s.anchor.lon);
    binary::put_f64(out, s.anchor.lat);
    binary::put_f64(out, s.anchor.alt);
  }
  for (const auto& s : set.samples) {
    for (const auto& p : s.future) {
      binary::put_f64(out, p.lon);
      binary::put_f64(out, p.lat);
      binary::put_f64(out, p.alt);
    }
  }
  return out;
}

struct LoadedWindows {
  WindowSet set;
  std::string config_hash;
};

inline LoadedWindows deserialize_windows(const std::string& bytes, const std::string& what = "dataset") {
  std::vector<std::pair<std::string, std::string>> h;
  const std::size_t offset = detail::parse_header(bytes, what, h);
  if (detail::header_value(h, "format", what) != kDataFormat) {
    throw FormatError(what + ": expected format " + kDataFormat + ", got '" + detail::header_value(h, "format", what) +
                      "'");
  }
  const std::size_t n = detail::parse_count(detail::header_value(h, "samples", what), what);
  const std::size_t c = detail::parse_count(detail::header_value(h, "channels", what), what);
  const std::size_t l = detail::parse_count(detail::header_value(h, "lookback", what), what);
  const std::size_t co = detail::parse_count(detail::header_value(h, "target_channels", what), what);
  const std::size_t t = detail::parse_count(detail::header_value(h, "horizon", what), what);
  const std::string& diff = detail::header_value(h, "diff", what);
  if (c != kStateChannels || co != kTargetChannels || l == 0 || t == 0 || (diff != "true" && diff != "false")) {
    throw FormatError(what + ": unsupported layout");
  }
  const std::size_t expected = 8 * n * (c * l + co * t + 3 + 3 * t);
  if (bytes.size() - offset != expected) {
    throw FormatError(what + ": payload has " + std::to_string(bytes.size() - offset) + " bytes, header implies " +
                      std::to_string(expected));
  }
  LoadedWindows out;
  out.config_hash = detail::header_value(h, "config_hash", what);
  out.set.lookback = l;
  out.set.horizon = t;
  out.set.diff = diff == "true";
  out.set.samples.resize(n);
  binary::Reader r(std::string_view(bytes).substr(offset));
  for (auto& s : out.set.samples) {
    std::vector<double> x(c * l);
    r.f64s(x);
    s.x = Tensor({c, l}, std::move(x));
  }
  for (auto& s : out.set.samples) {
    std::vector<double> y(co * t);
    r.f64s(y);
    s.y = Tensor({co, t}, std::move(y));
  }
  for (auto& s : out.set.samples) {
    s.anchor.lon = r.f64();
    s.anchor.lat = r.f64();
    s.anchor.alt = r.f64();
  }
  for (auto& s : out.set.samples) {
    s.future.resize(t);
    for (auto& p : s.future) {
      p.lon = r.f64();
      p.lat = r.f64();
      p.alt = r.f64();
    }
  }
  return out;
}

inline void write_windows(const std::filesystem::path& path, const WindowSet& set, const std::string& config_hash) {
  detail::write_file(path, serialize_windows(set, config_hash));
}

inline LoadedWindows read_windows(const std::filesystem::path& path) {
  return deserialize_windows(detail::read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

struct PipelineCounts {
  std::size_t flights = 0;
  std::size_t rows = 0;
  std::size_t malformed_rows = 0;
  std::size_t candidates = 0;
  std::size_t trajectories = 0;
  std::size_t rejected = 0;  // z-score rejections
};

struct PreparedDataset {
  DataConfig config;
  PipelineCounts counts;
  DatasetSplit split;
  WindowSet train;
  WindowSet validation;
  WindowSet test;
};

/// split -> window, shared by the CSV and synthetic paths.
inline PreparedDataset prepare_dataset(std::vector<FlightTrajectory> trajectories, const DataConfig& config,
                                       PipelineCounts counts) {
  PreparedDataset out;
  out.config = config;
  counts.trajectories = trajectories.size();
  out.counts = counts;
  out.split = split_dataset(std::move(trajectories), config.split, config.seed);
  out.train = build_windows(out.split.train, config.lookback, config.horizon, config.diff);
  out.validation = build_windows(out.split.validation, config.lookback, config.horizon, config.diff);
  out.test = build_windows(out.split.test, config.lookback, config.horizon, config.diff);
  return out;
}

/// parse -> segment/filter -> split -> window.
inline PreparedDataset prepare_from_csv(const std::filesystem::path& csv, DataConfig config) {
  const ParseResult parsed = parse_adsb_csv(csv);
  SegmentResult seg = segment(parsed.streams);
  PipelineCounts counts;
  counts.flights = parsed.streams.size();
  counts.rows = parsed.rows;
  counts.malformed_rows = parsed.rejected;
  counts.candidates = seg.candidates;
  counts.rejected = seg.rejected;
  if (config.source.empty()) config.source = csv.filename().string();
  return prepare_dataset(std::move(seg.trajectories), config, counts);
}

inline std::string render_manifest(const PreparedDataset& d) {
  std::ostringstream os;
  os << "format=" << kDataFormat << "\n"
     << d.config.canonical() << "config_hash=" << d.config.hash() << "\n"
     << "counts.flights=" << d.counts.flights << "\n"
     << "counts.rows=" << d.counts.rows << "\n"
     << "counts.malformed_rows=" << d.counts.malformed_rows << "\n"
     << "counts.candidates=" << d.counts.candidates << "\n"
     << "counts.trajectories=" << d.counts.trajectories << "\n"
     << "counts.rejected=" << d.counts.rejected << "\n";
  auto section = [&](const char* name, const std::vector<FlightTrajectory>& trajs, const WindowSet& windows) {
    os << name << ".trajectories=" << trajs.size() << "\n" << name << ".windows=" << windows.size() << "\n";
    os << name << ".members=";
    for (std::size_t i = 0; i < trajs.size(); ++i) os << (i ? "," : "") << trajs[i].id;
    os << "\n";
  };
  section("train", d.split.train, d.train);
  section("validation", d.split.validation, d.validation);
  section("test", d.split.test, d.test);
  return os.str();
}

/// File names inside a dataset directory.
struct DatasetLayout {
  std::filesystem::path dir;
  std::filesystem::path train() const { return dir / "train.fpd"; }
  std::filesystem::path validation() const { return dir / "validation.fpd"; }
  std::filesystem::path test() const { return dir / "test.fpd"; }
  std::filesystem::path manifest() const { return dir / "manifest.txt"; }
};

inline void write_dataset(const DatasetLayout& layout, const PreparedDataset& d) {
  const std::string hash = d.config.hash();
  write_windows(layout.train(), d.train, hash);
  write_windows(layout.validation(), d.validation, hash);
  write_windows(layout.test(), d.test, hash);
  detail::write_file(layout.manifest(), render_manifest(d));
}

}  // namespace flightpatch
