#pragma once

// Model checkpoints ("flightpatch-ckpt-v1").
//
// Text header of key=value lines, with `config_hash` fingerprinting every
// line before it and `payload_hash` fingerprinting the binary section, then
// `end` and one entry per parameter: u32 name length, name, u32 rank,
// u64 extents, f64 values (all little-endian).

#include <filesystem>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "flightpatch/binary_io.hpp"
#include "flightpatch/config.hpp"
#include "flightpatch/dataset.hpp"
#include "flightpatch/errors.hpp"
#include "flightpatch/geo.hpp"
#include "flightpatch/hash.hpp"
#include "flightpatch/model.hpp"

namespace flightpatch {

inline constexpr const char* kCheckpointFormat = "flightpatch-ckpt-v1";

struct CheckpointMeta {
  EarthModel earth;
  std::string data_config_hash;  // dataset the model was trained on
  bool diff = true;
};

inline std::string serialize_checkpoint(const FlightPatchNet& net, const CheckpointMeta& meta) {
  std::ostringstream header;
  header << std::setprecision(17);
  header << "format=" << kCheckpointFormat << "\n"
         << "earth_radius_m=" << meta.earth.radius << "\n"
         << "sign_convention=" << kSignConvention << "\n"
         << "diff=" << (meta.diff ? "true" : "false") << "\n"
         << "data_config_hash=" << meta.data_config_hash << "\n";
  std::istringstream model_lines(net.config().canonical());
  for (std::string line; std::getline(model_lines, line);) header << "model." << line << "\n";

  std::string payload;
  for (const auto& p : net.parameters().entries()) {
    binary::put_u32(payload, static_cast<std::uint32_t>(p.name.size()));
    payload += p.name;
    binary::put_u32(payload, static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) binary::put_u64(payload, d);
    binary::put_f64s(payload, p.value.data());
  }

  std::string out = header.str();
  out += "config_hash=" + to_hex(fnv1a(out)) + "\n";
  out += "payload_hash=" + to_hex(fnv1a(payload)) + "\n";
  out += "parameters=" + std::to_string(net.parameters().entries().size()) + "\n";
  out += "end\n";
  out += payload;
  return out;
}

struct LoadedCheckpoint {
  FlightPatchNet net;
  CheckpointMeta meta;
};

inline LoadedCheckpoint deserialize_checkpoint(const std::string& bytes, const std::string& what = "checkpoint") {
  const auto line = bytes.find("\nconfig_hash=");
  const auto marker = line == std::string::npos ? line : line + 1;
  if (bytes.rfind(std::string("format=") + kCheckpointFormat + "\n", 0) != 0) {
    throw FormatError(what + ": not a " + std::string(kCheckpointFormat) + " file");
  }
  if (marker == std::string::npos) throw FormatError(what + ": header lacks config_hash");
  std::vector<std::pair<std::string, std::string>> h;
  const std::size_t offset = detail::parse_header(bytes, what, h);
  const std::string expected_hash = to_hex(fnv1a(std::string_view(bytes).substr(0, marker)));
  const std::string& stored_hash = detail::header_value(h, "config_hash", what);
  if (stored_hash != expected_hash) {
    throw ValidationError(what + ": header fingerprint " + stored_hash + " does not match its contents (" +
                          expected_hash + "); the checkpoint header was modified, refusing to load");
  }
  const std::string_view payload = std::string_view(bytes).substr(offset);
  if (detail::header_value(h, "payload_hash", what) != to_hex(fnv1a(payload))) {
    throw ValidationError(what + ": parameter payload does not match payload_hash, refusing to load");
  }
  if (detail::header_value(h, "sign_convention", what) != kSignConvention) {
    throw ValidationError(what + ": unsupported sign convention '" + detail::header_value(h, "sign_convention", what) +
                          "'");
  }

  CheckpointMeta meta;
  meta.earth.radius = config_parse::to_double("earth_radius_m", detail::header_value(h, "earth_radius_m", what));
  meta.diff = config_parse::to_bool("diff", detail::header_value(h, "diff", what));
  meta.data_config_hash = detail::header_value(h, "data_config_hash", what);

  ModelConfig mc;
  for (const auto& [k, v] : h) {
    if (k.rfind("model.", 0) != 0) continue;
    const std::string key = k.substr(6);
    using namespace config_parse;
    if (key == "channels") mc.channels = to_size(key, v);
    else if (key == "out_channels") mc.out_channels = to_size(key, v);
    else if (key == "lookback") mc.lookback = to_size(key, v);
    else if (key == "horizon") mc.horizon = to_size(key, v);
    else if (key == "d_model") mc.d_model = to_size(key, v);
    else if (key == "heads") mc.heads = to_size(key, v);
    else if (key == "temporal_layers") mc.temporal_layers = to_size(key, v);
    else if (key == "scale_layers") mc.scale_layers = to_size(key, v);
    else if (key == "channel_layers") mc.channel_layers = to_size(key, v);
    else if (key == "patch_sizes") mc.patch_sizes = to_sizes(key, v);
    else if (key == "dropout") mc.dropout = to_double(key, v);
    else if (key == "mlp_hidden_factor") mc.mlp_hidden_factor = to_size(key, v);
    else if (key == "predictor_hidden") mc.predictor_hidden = to_size(key, v);
    else if (key == "layer_norm_eps") mc.layer_norm_eps = to_double(key, v);
    else if (key == "seed") mc.seed = to_u64(key, v);
    else throw FormatError(what + ": unknown model key '" + key + "'");
  }

  FlightPatchNet net(mc);
  auto& entries = net.parameters().entries();
  const std::size_t count = detail::parse_count(detail::header_value(h, "parameters", what), what);
  if (count != entries.size()) {
    throw FormatError(what + ": holds " + std::to_string(count) + " parameters, the configured model has " +
                      std::to_string(entries.size()));
  }
  binary::Reader r(payload);
  for (auto& p : entries) {
    const std::string name = r.bytes(r.u32());
    if (name != p.name) throw FormatError(what + ": expected parameter '" + p.name + "', found '" + name + "'");
    Shape shape(r.u32());
    for (auto& d : shape) d = static_cast<std::size_t>(r.u64());
    if (shape != p.value.shape()) {
      throw FormatError(what + ": parameter '" + name + "' has shape " + to_string(shape) + ", model expects " +
                        to_string(p.value.shape()));
    }
    r.f64s(p.value.mutable_data());
  }
  if (!r.done()) throw FormatError(what + ": trailing bytes after parameters");
  return {std::move(net), meta};
}

inline void save_checkpoint(const std::filesystem::path& path, const FlightPatchNet& net, const CheckpointMeta& meta) {
  detail::write_file(path, serialize_checkpoint(net, meta));
}

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(detail::read_file(path), path.string());
}

}  // namespace flightpatch
