#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "flightpatch/errors.hpp"
#include "flightpatch/ops.hpp"
#include "flightpatch/rng.hpp"
#include "flightpatch/tensor.hpp"

namespace flightpatch {

struct Parameter {
  std::string name;
  Tensor value;
};

/// Named trainable tensors in creation order.
class ParameterStore {
 public:
  Tensor add(std::string name, Tensor value) {
    if (index_.contains(name)) throw UsageError("duplicate parameter name '" + name + "'");
    if (!value.requires_grad()) value = Tensor(value.shape(), std::vector<double>(value.data().begin(), value.data().end()), true);
    index_.emplace(name, params_.size());
    params_.push_back({std::move(name), value});
    return value;
  }

  const std::vector<Parameter>& entries() const { return params_; }
  std::vector<Parameter>& entries() { return params_; }

  bool contains(std::string_view name) const { return index_.contains(std::string(name)); }

  const Tensor& get(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw UsageError("unknown parameter '" + std::string(name) + "'");
    return params_[it->second].value;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
  }

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
inline Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> values(element_count(shape));
  for (auto& v : values) v = rng.uniform(-limit, limit);
  return Tensor(std::move(shape), std::move(values), true);
}

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  static Linear create(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
    Linear layer;
    layer.weight = store.add(prefix + ".weight", xavier_uniform({in, out}, in, out, rng));
    layer.bias = store.add(prefix + ".bias", Tensor::zeros({out}, true));
    return layer;
  }

  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;
  double epsilon = 1e-5;

  static LayerNorm create(ParameterStore& store, const std::string& prefix, std::size_t width, double epsilon) {
    LayerNorm norm;
    norm.gamma = store.add(prefix + ".gamma", Tensor::full({width}, 1.0, true));
    norm.beta = store.add(prefix + ".beta", Tensor::zeros({width}, true));
    norm.epsilon = epsilon;
    return norm;
  }

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta, epsilon); }
};

/// Residual two-layer MLP over the trailing axis: x + Dropout(FC(GELU(FC(x)))).
struct MixerMlp {
  Linear fc1;
  Linear fc2;
  double dropout_rate = 0.0;

  static MixerMlp create(ParameterStore& store, const std::string& prefix, std::size_t width, std::size_t hidden,
                         double dropout_rate, Rng& rng) {
    MixerMlp mlp;
    mlp.fc1 = Linear::create(store, prefix + ".fc1", width, hidden, rng);
    mlp.fc2 = Linear::create(store, prefix + ".fc2", hidden, width, rng);
    mlp.dropout_rate = dropout_rate;
    return mlp;
  }

  Tensor operator()(const Tensor& x, bool training, Rng& rng) const {
    return add(x, dropout(fc2(gelu(fc1(x))), dropout_rate, training, rng));
  }
};

struct AttentionParams {
  Linear query;
  Linear key;
  Linear value;
  Linear output;

  static AttentionParams create(ParameterStore& store, const std::string& prefix, std::size_t width, Rng& rng) {
    AttentionParams p;
    p.query = Linear::create(store, prefix + ".query", width, width, rng);
    p.key = Linear::create(store, prefix + ".key", width, width, rng);
    p.value = Linear::create(store, prefix + ".value", width, width, rng);
    p.output = Linear::create(store, prefix + ".output", width, width, rng);
    return p;
  }
};

struct AttentionResult {
  Tensor output;   // [..., S, D]
  Tensor weights;  // [..., heads, S, S]
};

/// Scaled dot-product self-attention over the S axis of [..., S, D] tokens.
inline AttentionResult multi_head_self_attention(const Tensor& tokens, std::size_t heads, const AttentionParams& p) {
  if (tokens.rank() < 2) throw DimensionError("attention expects [..., S, D] tokens, got " + to_string(tokens.shape()));
  const std::size_t seq = tokens.dim(-2);
  const std::size_t width = tokens.dim(-1);
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("attention width " + std::to_string(width) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  const std::size_t head_width = width / heads;
  const std::size_t batch = tokens.numel() / (seq * width);
  Shape lead(tokens.shape().begin(), tokens.shape().end() - 2);

  auto split_heads = [&](const Tensor& x) {
    return reshape(permute(reshape(x, {batch, seq, heads, head_width}), {0, 2, 1, 3}), {batch * heads, seq, head_width});
  };
  const Tensor q = split_heads(p.query(tokens));
  const Tensor k = split_heads(p.key(tokens));
  const Tensor v = split_heads(p.value(tokens));
  const Tensor weights = softmax(batched_matmul(q, k, true, 1.0 / std::sqrt(static_cast<double>(head_width))));
  const Tensor context = batched_matmul(weights, v);
  Shape merged = lead;
  merged.push_back(seq);
  merged.push_back(width);
  const Tensor joined = reshape(permute(reshape(context, {batch, heads, seq, head_width}), {0, 2, 1, 3}), merged);

  Shape weight_shape = lead;
  weight_shape.insert(weight_shape.end(), {heads, seq, seq});
  return {p.output(joined), reshape(weights, weight_shape)};
}

/// LayerNorm(y + FC(y)) with y = LayerNorm(x + MSA(x)).
struct AttentionBlock {
  AttentionParams attention;
  std::size_t heads = 1;
  LayerNorm norm1;
  Linear fc;
  LayerNorm norm2;

  static AttentionBlock create(ParameterStore& store, const std::string& prefix, std::size_t width, std::size_t heads,
                               double epsilon, Rng& rng) {
    AttentionBlock b;
    b.attention = AttentionParams::create(store, prefix + ".msa", width, rng);
    b.heads = heads;
    b.norm1 = LayerNorm::create(store, prefix + ".norm1", width, epsilon);
    b.fc = Linear::create(store, prefix + ".fc", width, width, rng);
    b.norm2 = LayerNorm::create(store, prefix + ".norm2", width, epsilon);
    return b;
  }

  Tensor operator()(const Tensor& x) const {
    const Tensor y = norm1(add(x, multi_head_self_attention(x, heads, attention).output));
    return norm2(add(y, fc(y)));
  }
};

}  // namespace flightpatch
