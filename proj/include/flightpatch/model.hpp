#pragma once

// FlightPatchNet: global temporal attention, a stack of multi-scale patch
// mixer blocks, scale/channel fusion, and an ensemble of direct predictors.
//
// All functions operate on the trailing axes, so inputs may carry any number
// of leading batch axes: X is [..., C, L] and the prediction is [..., C', T].

#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "flightpatch/errors.hpp"
#include "flightpatch/hash.hpp"
#include "flightpatch/layers.hpp"
#include "flightpatch/ops.hpp"
#include "flightpatch/rng.hpp"
#include "flightpatch/tensor.hpp"

namespace flightpatch {

struct ModelConfig {
  std::size_t channels = 6;
  std::size_t out_channels = 3;
  std::size_t lookback = 60;
  std::size_t horizon = 15;
  std::size_t d_model = 128;
  std::size_t heads = 8;
  std::size_t temporal_layers = 3;
  std::size_t scale_layers = 3;
  std::size_t channel_layers = 3;
  std::vector<std::size_t> patch_sizes{30, 20, 10, 6, 2};
  double dropout = 0.1;
  std::size_t mlp_hidden_factor = 2;
  std::size_t predictor_hidden = 128;
  double layer_norm_eps = 1e-5;
  std::uint64_t seed = 1;

  std::size_t scales() const { return patch_sizes.size(); }

  /// ceil(L / P_k).
  std::size_t patch_count(std::size_t k) const { return (lookback + patch_sizes[k] - 1) / patch_sizes[k]; }

  /// Heads actually used for an attention stage of the given token width:
  /// the largest divisor of `width` not exceeding `heads`.
  std::size_t heads_for_width(std::size_t width) const {
    for (std::size_t h = heads; h > 1; --h) {
      if (width % h == 0) return h;
    }
    return 1;
  }
  std::size_t scale_heads() const { return heads_for_width(channels * lookback); }
  std::size_t channel_heads() const { return heads_for_width(scales() * lookback); }

  void validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
    if (channels == 0 || out_channels == 0) fail("channel counts must be positive");
    if (lookback == 0 || horizon == 0) fail("lookback and horizon must be positive");
    if (d_model == 0 || heads == 0) fail("d_model and heads must be positive");
    if (d_model % heads != 0) {
      fail("d_model " + std::to_string(d_model) + " is not divisible by " + std::to_string(heads) + " heads");
    }
    if (patch_sizes.empty()) fail("patch_sizes must not be empty");
    for (auto p : patch_sizes) {
      if (p == 0 || p > lookback) {
        fail("patch size " + std::to_string(p) + " outside [1, lookback=" + std::to_string(lookback) + "]");
      }
    }
    if (!(dropout >= 0.0) || dropout >= 1.0) fail("dropout must lie in [0, 1)");
    if (mlp_hidden_factor == 0 || predictor_hidden == 0) fail("hidden widths must be positive");
    if (!(layer_norm_eps > 0.0)) fail("layer_norm_eps must be positive");
  }

  /// Canonical key=value text; the basis of the config hash.
  std::string canonical() const {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "channels=" << channels << "\n"
       << "out_channels=" << out_channels << "\n"
       << "lookback=" << lookback << "\n"
       << "horizon=" << horizon << "\n"
       << "d_model=" << d_model << "\n"
       << "heads=" << heads << "\n"
       << "temporal_layers=" << temporal_layers << "\n"
       << "scale_layers=" << scale_layers << "\n"
       << "channel_layers=" << channel_layers << "\n"
       << "patch_sizes=" << join(patch_sizes) << "\n"
       << "dropout=" << dropout << "\n"
       << "mlp_hidden_factor=" << mlp_hidden_factor << "\n"
       << "predictor_hidden=" << predictor_hidden << "\n"
       << "layer_norm_eps=" << layer_norm_eps << "\n"
       << "seed=" << seed << "\n";
    return os.str();
  }

  static std::string join(const std::vector<std::size_t>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) out += ',';
      out += std::to_string(values[i]);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Shape helpers over trailing axes
// ---------------------------------------------------------------------------

namespace detail {

inline Shape leading(const Tensor& x, std::size_t trailing) {
  return Shape(x.shape().begin(), x.shape().end() - static_cast<std::ptrdiff_t>(trailing));
}

inline Shape with_trailing(Shape lead, std::initializer_list<std::size_t> trailing) {
  lead.insert(lead.end(), trailing);
  return lead;
}

/// Permutes the last perm.size() axes, keeping leading axes in place.
inline Tensor permute_trailing(const Tensor& x, std::initializer_list<std::size_t> perm) {
  const std::size_t lead = x.rank() - perm.size();
  std::vector<std::size_t> full(x.rank());
  for (std::size_t i = 0; i < lead; ++i) full[i] = i;
  std::size_t k = lead;
  for (auto p : perm) full[k++] = lead + p;
  return permute(x, std::move(full));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Components
// ---------------------------------------------------------------------------

struct TemporalParams {
  Linear embedding;                    // C -> d
  std::vector<AttentionBlock> blocks;  // over the L axis
  Linear projection;                   // d -> C
};

struct PatchEncoderParams {
  MixerMlp inter;     // over N
  MixerMlp intra;     // over P
  Linear projection;  // N -> 1
};

struct PatchDecoderParams {
  Linear expand;   // 1 -> N
  MixerMlp intra;  // over P
  MixerMlp inter;  // over N
};

struct PatchMixerParams {
  std::size_t patch = 1;
  std::size_t count = 1;
  PatchEncoderParams encoder;
  PatchDecoderParams decoder;
};

struct PredictorParams {
  Linear channel_fc1;  // C -> hidden
  Linear channel_fc2;  // hidden -> C'
  Linear time_fc1;     // L -> hidden
  Linear time_fc2;     // hidden -> T
};

/// Projects every time step C -> d: [..., C, L] -> [..., L, d].
inline Tensor time_embedding(const Tensor& x, const Linear& embedding) {
  if (x.rank() < 2 || x.dim(-2) != embedding.weight.dim(0)) {
    throw DimensionError("time_embedding: input " + to_string(x.shape()) + " does not match embedding weight " +
                         to_string(embedding.weight.shape()));
  }
  return embedding(transpose_last(x));
}

struct TemporalAttentionOutput {
  std::vector<Tensor> states;  // T^0 .. T^l, each [..., L, d]
  Tensor z;                    // [..., C, L]
};

inline TemporalAttentionOutput global_temporal_attention(const Tensor& t0, const TemporalParams& params) {
  TemporalAttentionOutput out;
  out.states.push_back(t0);
  Tensor t = t0;
  for (const auto& block : params.blocks) {
    t = block(t);
    out.states.push_back(t);
  }
  out.z = transpose_last(params.projection(t));
  return out;
}

/// Front zero-padding to N*P steps, then [..., C, L] -> [..., C, P, N] with
/// element [c, p, j] = padded[c, j*P + p].
inline Tensor patchify(const Tensor& z, std::size_t patch) {
  const std::size_t length = z.dim(-1);
  if (patch == 0 || patch > length) {
    throw DimensionError("patchify: patch length " + std::to_string(patch) + " invalid for series of length " +
                         std::to_string(length));
  }
  const std::size_t count = (length + patch - 1) / patch;
  const Tensor padded = pad_front(z, -1, count * patch - length);
  const Tensor rows = reshape(padded, detail::with_trailing(detail::leading(z, 2), {z.dim(-2), count, patch}));
  return transpose_last(rows);
}

/// Inverse of patchify: [..., C, P, N] -> [..., C, length], dropping the padding.
inline Tensor depatchify(const Tensor& zp, std::size_t length) {
  const std::size_t patch = zp.dim(-2);
  const std::size_t count = zp.dim(-1);
  if (length > patch * count) throw DimensionError("depatchify: length exceeds patched extent");
  const Tensor rows = transpose_last(zp);
  const Tensor flat = reshape(rows, detail::with_trailing(detail::leading(zp, 3), {zp.dim(-3), patch * count}));
  return slice(flat, -1, patch * count - length, length);
}

struct PatchEncoderOutput {
  Tensor n_inter;  // [..., C, P, N]
  Tensor n_intra;  // [..., C, N, P]
  Tensor e;        // [..., C, P, 1]
};

inline PatchEncoderOutput patch_encoder(const Tensor& zp, const PatchEncoderParams& params, bool training, Rng& rng) {
  PatchEncoderOutput out;
  out.n_inter = params.inter(zp, training, rng);
  out.n_intra = params.intra(transpose_last(out.n_inter), training, rng);
  out.e = params.projection(transpose_last(out.n_intra));
  return out;
}

struct PatchDecoderOutput {
  Tensor d;        // [..., C, P, N]
  Tensor p_intra;  // [..., C, N, P]
  Tensor p_out;    // [..., C, P, N]
};

inline PatchDecoderOutput patch_decoder(const Tensor& e, const PatchDecoderParams& params, bool training, Rng& rng) {
  PatchDecoderOutput out;
  out.d = params.expand(e);
  out.p_intra = params.intra(transpose_last(out.d), training, rng);
  out.p_out = params.inter(transpose_last(out.p_intra), training, rng);
  return out;
}

/// Stacks per-scale series [..., C, L] into S^0 [..., K, C*L] (channel-major)
/// and runs the attention stack over K. Returns S^0 .. S^l.
inline std::vector<Tensor> scale_fusion(const std::vector<Tensor>& series, const std::vector<AttentionBlock>& blocks) {
  if (series.empty()) throw DimensionError("scale_fusion: no scales");
  const std::size_t channels = series[0].dim(-2);
  const std::size_t length = series[0].dim(-1);
  std::vector<Tensor> tokens;
  for (const auto& s : series) {
    if (s.shape() != series[0].shape()) {
      throw DimensionError("scale_fusion: scale output " + to_string(s.shape()) + " does not flatten to " +
                           std::to_string(channels * length) + " elements like " + to_string(series[0].shape()));
    }
    tokens.push_back(reshape(s, detail::with_trailing(detail::leading(s, 2), {1, channels * length})));
  }
  std::vector<Tensor> states{concat(tokens, -2)};
  for (const auto& block : blocks) states.push_back(block(states.back()));
  return states;
}

struct ChannelFusionOutput {
  std::vector<Tensor> states;  // C^0 .. C^l, each [..., C, K*L]
  Tensor h;                    // [..., C, L, K]
};

/// Regroups S^l [..., K, C*L] into one token per variable, C^0 [..., C, K*L]
/// (scale-major within a variable), attends over C, and reshapes to H.
inline ChannelFusionOutput channel_fusion(const Tensor& s, std::size_t channels,
                                          const std::vector<AttentionBlock>& blocks) {
  const std::size_t scales = s.dim(-2);
  if (s.dim(-1) % channels != 0) throw DimensionError("channel_fusion: token width not divisible by channels");
  const std::size_t length = s.dim(-1) / channels;
  const Shape lead = detail::leading(s, 2);
  const Tensor split = reshape(s, detail::with_trailing(lead, {scales, channels, length}));
  ChannelFusionOutput out;
  out.states.push_back(
      reshape(detail::permute_trailing(split, {1, 0, 2}), detail::with_trailing(lead, {channels, scales * length})));
  for (const auto& block : blocks) out.states.push_back(block(out.states.back()));
  const Tensor grouped = reshape(out.states.back(), detail::with_trailing(lead, {channels, scales, length}));
  out.h = transpose_last(grouped);
  return out;
}

struct EnsembleOutput {
  std::vector<Tensor> members;  // Y_i, each [..., C', T]
  Tensor y_hat;                 // sum of members in index order
};

inline Tensor predictor_forward(const Tensor& h_i, const PredictorParams& p) {
  const Tensor per_step = transpose_last(h_i);  // [..., L, C]
  const Tensor mixed = p.channel_fc2(gelu(p.channel_fc1(per_step)));
  const Tensor series = transpose_last(mixed);  // [..., C', L]
  return p.time_fc2(gelu(p.time_fc1(series)));
}

inline EnsembleOutput predict_ensemble(const Tensor& h, const std::vector<PredictorParams>& predictors) {
  if (h.dim(-1) != predictors.size()) {
    throw DimensionError("predict: H " + to_string(h.shape()) + " has " + std::to_string(h.dim(-1)) +
                         " scales but there are " + std::to_string(predictors.size()) + " predictors");
  }
  EnsembleOutput out;
  for (std::size_t i = 0; i < predictors.size(); ++i) {
    out.members.push_back(predictor_forward(select(h, -1, i), predictors[i]));
  }
  out.y_hat = out.members[0];
  for (std::size_t i = 1; i < out.members.size(); ++i) out.y_hat = add(out.y_hat, out.members[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Full network
// ---------------------------------------------------------------------------

struct ScaleTrace {
  std::size_t patch = 0;
  std::size_t count = 0;
  Tensor input;    // [..., C, L]
  Tensor z_p;      // [..., C, P, N]
  Tensor n_inter;  // [..., C, P, N]
  Tensor n_intra;  // [..., C, N, P]
  Tensor e;        // [..., C, P, 1]
  Tensor d;        // [..., C, P, N]
  Tensor p_intra;  // [..., C, N, P]
  Tensor p_out;    // [..., C, P, N]
  Tensor output;   // [..., C, L], padding stripped
};

/// Every named intermediate of one forward pass.
struct ForwardTrace {
  std::vector<Tensor> temporal;  // T^0 .. T^l
  Tensor z;
  std::vector<ScaleTrace> scales;
  std::vector<Tensor> scale_fusion;    // S^0 .. S^l
  std::vector<Tensor> channel_fusion;  // C^0 .. C^l
  Tensor h;
  std::vector<Tensor> members;
  Tensor y_hat;
};

class FlightPatchNet {
 public:
  explicit FlightPatchNet(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    Rng rng(config_.seed);
    const auto& c = config_;
    temporal_.embedding = Linear::create(store_, "temporal.embedding", c.channels, c.d_model, rng);
    for (std::size_t i = 0; i < c.temporal_layers; ++i) {
      temporal_.blocks.push_back(AttentionBlock::create(store_, "temporal.block" + std::to_string(i), c.d_model,
                                                        c.heads, c.layer_norm_eps, rng));
    }
    temporal_.projection = Linear::create(store_, "temporal.projection", c.d_model, c.channels, rng);

    for (std::size_t k = 0; k < c.scales(); ++k) {
      PatchMixerParams m;
      m.patch = c.patch_sizes[k];
      m.count = c.patch_count(k);
      const std::string p = "mixer" + std::to_string(k);
      const std::size_t hn = c.mlp_hidden_factor * m.count;
      const std::size_t hp = c.mlp_hidden_factor * m.patch;
      m.encoder.inter = MixerMlp::create(store_, p + ".encoder.inter", m.count, hn, c.dropout, rng);
      m.encoder.intra = MixerMlp::create(store_, p + ".encoder.intra", m.patch, hp, c.dropout, rng);
      m.encoder.projection = Linear::create(store_, p + ".encoder.projection", m.count, 1, rng);
      m.decoder.expand = Linear::create(store_, p + ".decoder.expand", 1, m.count, rng);
      m.decoder.intra = MixerMlp::create(store_, p + ".decoder.intra", m.patch, hp, c.dropout, rng);
      m.decoder.inter = MixerMlp::create(store_, p + ".decoder.inter", m.count, hn, c.dropout, rng);
      mixers_.push_back(std::move(m));
    }

    const std::size_t scale_width = c.channels * c.lookback;
    for (std::size_t i = 0; i < c.scale_layers; ++i) {
      scale_blocks_.push_back(AttentionBlock::create(store_, "scale_fusion.block" + std::to_string(i), scale_width,
                                                     c.scale_heads(), c.layer_norm_eps, rng));
    }
    const std::size_t channel_width = c.scales() * c.lookback;
    for (std::size_t i = 0; i < c.channel_layers; ++i) {
      channel_blocks_.push_back(AttentionBlock::create(store_, "channel_fusion.block" + std::to_string(i),
                                                       channel_width, c.channel_heads(), c.layer_norm_eps, rng));
    }

    for (std::size_t k = 0; k < c.scales(); ++k) {
      const std::string p = "predictor" + std::to_string(k);
      PredictorParams pr;
      pr.channel_fc1 = Linear::create(store_, p + ".channel.fc1", c.channels, c.predictor_hidden, rng);
      pr.channel_fc2 = Linear::create(store_, p + ".channel.fc2", c.predictor_hidden, c.out_channels, rng);
      pr.time_fc1 = Linear::create(store_, p + ".time.fc1", c.lookback, c.predictor_hidden, rng);
      pr.time_fc2 = Linear::create(store_, p + ".time.fc2", c.predictor_hidden, c.horizon, rng);
      predictors_.push_back(std::move(pr));
    }
  }

  FlightPatchNet(const FlightPatchNet&) = delete;
  FlightPatchNet& operator=(const FlightPatchNet&) = delete;
  FlightPatchNet(FlightPatchNet&&) = default;
  FlightPatchNet& operator=(FlightPatchNet&&) = default;

  const ModelConfig& config() const { return config_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }

  const TemporalParams& temporal() const { return temporal_; }
  const std::vector<PatchMixerParams>& mixers() const { return mixers_; }
  const std::vector<AttentionBlock>& scale_blocks() const { return scale_blocks_; }
  const std::vector<AttentionBlock>& channel_blocks() const { return channel_blocks_; }
  const std::vector<PredictorParams>& predictors() const { return predictors_; }

  /// X is [C, L] or [B, C, L]. Dropout draws come from `rng` in module order.
  ForwardTrace forward(const Tensor& x, bool training, Rng& rng) const {
    const auto& c = config_;
    if (x.rank() < 2 || x.dim(-2) != c.channels || x.dim(-1) != c.lookback) {
      throw DimensionError("forward: input " + to_string(x.shape()) + " does not match [..., " +
                           std::to_string(c.channels) + ", " + std::to_string(c.lookback) + "]");
    }
    ForwardTrace trace;
    auto temporal_out = global_temporal_attention(time_embedding(x, temporal_.embedding), temporal_);
    trace.temporal = std::move(temporal_out.states);
    trace.z = temporal_out.z;

    Tensor current = trace.z;
    std::vector<Tensor> series;
    for (const auto& m : mixers_) {
      ScaleTrace st;
      st.patch = m.patch;
      st.count = m.count;
      st.input = current;
      st.z_p = patchify(current, m.patch);
      auto enc = patch_encoder(st.z_p, m.encoder, training, rng);
      st.n_inter = enc.n_inter;
      st.n_intra = enc.n_intra;
      st.e = enc.e;
      auto dec = patch_decoder(st.e, m.decoder, training, rng);
      st.d = dec.d;
      st.p_intra = dec.p_intra;
      st.p_out = dec.p_out;
      st.output = depatchify(st.p_out, c.lookback);
      current = st.output;
      series.push_back(st.output);
      trace.scales.push_back(std::move(st));
    }

    trace.scale_fusion = scale_fusion(series, scale_blocks_);
    auto fused = channel_fusion(trace.scale_fusion.back(), c.channels, channel_blocks_);
    trace.channel_fusion = std::move(fused.states);
    trace.h = fused.h;
    auto ensemble = predict_ensemble(trace.h, predictors_);
    trace.members = std::move(ensemble.members);
    trace.y_hat = ensemble.y_hat;
    return trace;
  }

  /// Eval-mode prediction without graph recording.
  Tensor predict(const Tensor& x) const {
    NoGradGuard guard;
    Rng unused(0);
    return forward(x, false, unused).y_hat;
  }

  /// Layer / shape / parameter-count table.
  std::string describe() const {
    std::ostringstream os;
    const auto& c = config_;
    os << "FlightPatchNet  C=" << c.channels << " C'=" << c.out_channels << " L=" << c.lookback << " T=" << c.horizon
       << " d=" << c.d_model << " patches=" << ModelConfig::join(c.patch_sizes) << "\n";
    os << "attention heads: temporal=" << c.heads << " scale=" << c.scale_heads() << " channel=" << c.channel_heads()
       << "  layers: temporal=" << c.temporal_layers << " scale=" << c.scale_layers
       << " channel=" << c.channel_layers << "\n";
    for (std::size_t k = 0; k < mixers_.size(); ++k) {
      os << "scale " << k << ": P=" << mixers_[k].patch << " N=" << mixers_[k].count
         << " padding=" << mixers_[k].patch * mixers_[k].count - c.lookback << "\n";
    }
    std::size_t width = 0;
    for (const auto& p : store_.entries()) width = std::max(width, p.name.size());
    for (const auto& p : store_.entries()) {
      os << std::left << std::setw(static_cast<int>(width + 2)) << p.name << std::setw(14) << to_string(p.value.shape())
         << std::right << std::setw(10) << p.value.numel() << "\n";
    }
    os << "total parameters: " << store_.scalar_count() << "\n";
    return os.str();
  }

 private:
  ModelConfig config_;
  ParameterStore store_;
  TemporalParams temporal_;
  std::vector<PatchMixerParams> mixers_;
  std::vector<AttentionBlock> scale_blocks_;
  std::vector<AttentionBlock> channel_blocks_;
  std::vector<PredictorParams> predictors_;
};

}  // namespace flightpatch
