#pragma once

// Finite-difference checks for every layer and the full toy model. Shared by
// the unit tests and the acceptance binary.

#include <string>
#include <utility>
#include <vector>

#include "support.hpp"

namespace fpt {

struct NamedCheck {
  std::string name;
  GradCheckResult result;
};

namespace grad_detail {

/// Gives all zero-initialized biases/betas random values so their gradient
/// paths are exercised away from the trivial point.
inline void randomize(ParameterStore& store, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : store.entries()) {
    for (auto& v : p.value.mutable_data()) v += rng.uniform(-0.3, 0.3);
  }
}

}  // namespace grad_detail

inline std::vector<NamedCheck> run_gradient_suite() {
  std::vector<NamedCheck> out;
  Rng rng(2024);

  {  // elementwise / structural ops
    auto a = random_tensor({3, 4}, rng, -1, 1, true);
    auto b = random_tensor({3, 4}, rng, -1, 1, true);
    auto loss = projection_loss({3, 4}, 1);
    out.push_back({"add/sub/mul/scale", grad_check([&] { return loss(scale(mul(add(a, b), sub(a, b)), 1.7)); },
                                                   {a, b})});
    auto bw = random_tensor({4, 4}, rng, -1, 1, true);
    out.push_back({"batched_matmul", grad_check(
                                         [&] {
                                           return mean(mul(batched_matmul(reshape(a, {1, 3, 4}), reshape(bw, {1, 4, 4})),
                                                           reshape(b, {1, 3, 4})));
                                         },
                                         {a, bw, b})});
    out.push_back({"batched_matmul^T", grad_check(
                                           [&] {
                                             return mean(mul(batched_matmul(reshape(a, {1, 3, 4}),
                                                                            reshape(b, {1, 3, 4}), true, 0.7),
                                                             Tensor({1, 3, 3}, {1, -2, 3, 0.5, 0.1, -1, 2, 1, -0.3})));
                                           },
                                           {a, b})});
    auto ploss = projection_loss({4, 3, 2}, 2);
    auto c = random_tensor({2, 3, 4}, rng, -1, 1, true);
    out.push_back({"permute/reshape", grad_check([&] { return ploss(permute(reshape(c, {2, 3, 4}), {2, 1, 0})); }, {c})});
    out.push_back({"slice/pad_front/concat/select",
                   grad_check(
                       [&] {
                         auto s = slice(c, -1, 1, 2);
                         auto p = pad_front(s, -1, 1);
                         auto cc = concat({s, slice(p, -1, 0, 1), reshape(select(c, -1, 3), {2, 3, 1})}, -1);
                         return mean(mul(slice(cc, -1, 0, 2), Tensor({2, 3, 2}, {1, 2, 3, 4, 5, 6, -1, -2, -3, 7, 8, 9})));
                       },
                       {c})});
  }
  {
    auto x = random_tensor({5, 3}, rng, -2, 2, true);
    ParameterStore store;
    auto lin = Linear::create(store, "linear", 3, 4, rng);
    grad_detail::randomize(store, 5);
    auto loss = projection_loss({5, 4}, 4);
    out.push_back({"linear", check_store([&] { return loss(lin(x)); }, store, {x})});
  }
  {
    auto x = random_tensor({4, 6}, rng, -3, 3, true);
    auto loss = projection_loss({4, 6}, 6);
    out.push_back({"gelu", grad_check([&] { return loss(gelu(x)); }, {x})});
    out.push_back({"softmax", grad_check([&] { return loss(softmax(x)); }, {x})});
    out.push_back({"dropout", grad_check(
                                  [&] {
                                    Rng mask_rng(77);
                                    return loss(dropout(x, 0.4, true, mask_rng));
                                  },
                                  {x})});
    ParameterStore store;
    auto norm = LayerNorm::create(store, "norm", 6, 1e-5);
    grad_detail::randomize(store, 7);
    out.push_back({"layer_norm", check_store([&] { return loss(norm(x)); }, store, {x})});
    auto target = random_tensor({4, 6}, rng);
    out.push_back({"mse_loss", grad_check([&] { return scale(mse_loss(x, target), 0.01); }, {x})});
  }
  {
    auto x = random_tensor({2, 3, 4}, rng, -1, 1, true);
    ParameterStore store;
    auto mlp = MixerMlp::create(store, "mlp", 4, 8, 0.0, rng);
    grad_detail::randomize(store, 8);
    auto loss = projection_loss({2, 3, 4}, 9);
    Rng unused(0);
    out.push_back({"mixer_mlp", check_store([&] { return loss(mlp(x, true, unused)); }, store, {x})});
  }
  {
    auto x = random_tensor({2, 3, 4}, rng, -1, 1, true);
    ParameterStore store;
    auto attn = AttentionParams::create(store, "msa", 4, rng);
    grad_detail::randomize(store, 10);
    auto loss = projection_loss({2, 3, 4}, 11, 1e-2);
    out.push_back({"multi_head_self_attention",
                   check_store([&] { return loss(multi_head_self_attention(x, 2, attn).output); }, store, {x})});
    ParameterStore store2;
    auto block = AttentionBlock::create(store2, "block", 4, 2, 1e-5, rng);
    grad_detail::randomize(store2, 12);
    out.push_back({"attention_block", check_store([&] { return loss(block(x)); }, store2, {x})});
  }
  {  // time embedding + temporal attention at L=4, d=8, heads=2
    auto x = random_tensor({3, 4}, rng, -1, 1, true);  // C=3, L=4
    ParameterStore store;
    TemporalParams tp;
    tp.embedding = Linear::create(store, "embedding", 3, 8, rng);
    tp.blocks.push_back(AttentionBlock::create(store, "block0", 8, 2, 1e-5, rng));
    tp.projection = Linear::create(store, "projection", 8, 3, rng);
    grad_detail::randomize(store, 13);
    auto loss = projection_loss({3, 4}, 14, 1e-2);
    out.push_back({"time_embedding+global_temporal_attention",
                   check_store([&] { return loss(global_temporal_attention(time_embedding(x, tp.embedding), tp).z); },
                               store, {x})});
  }
  {  // patch encoder / decoder at C=2, P=3, N=2
    auto z = random_tensor({2, 5}, rng, -1, 1, true);
    ParameterStore store;
    PatchEncoderParams enc;
    enc.inter = MixerMlp::create(store, "enc.inter", 2, 4, 0.0, rng);
    enc.intra = MixerMlp::create(store, "enc.intra", 3, 6, 0.0, rng);
    enc.projection = Linear::create(store, "enc.projection", 2, 1, rng);
    PatchDecoderParams dec;
    dec.expand = Linear::create(store, "dec.expand", 1, 2, rng);
    dec.intra = MixerMlp::create(store, "dec.intra", 3, 6, 0.0, rng);
    dec.inter = MixerMlp::create(store, "dec.inter", 2, 4, 0.0, rng);
    grad_detail::randomize(store, 15);
    Rng unused(0);
    auto eloss = projection_loss({2, 3, 1}, 16);
    out.push_back({"patch_encoder", check_store([&] { return eloss(patch_encoder(patchify(z, 3), enc, false, unused).e); },
                                                store, {z})});
    auto dloss = projection_loss({2, 5}, 17);
    out.push_back({"patch_encoder+decoder+depatchify",
                   check_store(
                       [&] {
                         auto e = patch_encoder(patchify(z, 3), enc, false, unused).e;
                         return dloss(depatchify(patch_decoder(e, dec, false, unused).p_out, 5));
                       },
                       store, {z})});
  }
  {  // scale fusion at K=2, C=2, L=4 and channel fusion
    auto s1 = random_tensor({2, 4}, rng, -1, 1, true);
    auto s2 = random_tensor({2, 4}, rng, -1, 1, true);
    ParameterStore store;
    std::vector<AttentionBlock> sblocks{AttentionBlock::create(store, "scale0", 8, 2, 1e-5, rng)};
    std::vector<AttentionBlock> cblocks{AttentionBlock::create(store, "channel0", 8, 2, 1e-5, rng)};
    grad_detail::randomize(store, 18);
    auto sloss = projection_loss({2, 8}, 19, 1e-2);
    out.push_back({"scale_fusion", check_store([&] { return sloss(scale_fusion({s1, s2}, sblocks).back()); }, store,
                                               {s1, s2})});
    auto hloss = projection_loss({2, 4, 2}, 20, 1e-2);
    out.push_back({"channel_fusion", check_store(
                                         [&] {
                                           auto s = scale_fusion({s1, s2}, sblocks).back();
                                           return hloss(channel_fusion(s, 2, cblocks).h);
                                         },
                                         store, {s1, s2})});
  }
  {  // predictor ensemble
    auto h = random_tensor({3, 4, 2}, rng, -1, 1, true);  // C=3, L=4, K=2
    ParameterStore store;
    std::vector<PredictorParams> preds;
    for (int k = 0; k < 2; ++k) {
      PredictorParams p;
      const std::string n = "pred" + std::to_string(k);
      p.channel_fc1 = Linear::create(store, n + ".c1", 3, 5, rng);
      p.channel_fc2 = Linear::create(store, n + ".c2", 5, 2, rng);
      p.time_fc1 = Linear::create(store, n + ".t1", 4, 5, rng);
      p.time_fc2 = Linear::create(store, n + ".t2", 5, 3, rng);
      preds.push_back(p);
    }
    grad_detail::randomize(store, 21);
    auto loss = projection_loss({2, 3}, 22);
    out.push_back({"predict_ensemble", check_store([&] { return loss(predict_ensemble(h, preds).y_hat); }, store, {h})});
  }
  {  // full toy model: C=6, C'=3, L=12, d=8, heads=2, l=1, patches {6,2}
    FlightPatchNet net(toy_config());
    grad_detail::randomize(net.parameters(), 23);
    auto x = random_tensor({2, 6, 12}, rng, -1, 1, true);
    auto y = random_tensor({2, 3, 3}, rng);
    out.push_back({"flightpatchnet(full toy model, mse)", check_store(
                                                              [&] {
                                                                Rng unused(0);
                                                                return scale(mse_loss(net.forward(x, false, unused).y_hat, y),
                                                                             5e-4);
                                                              },
                                                              net.parameters(), {x})});
  }
  return out;
}

}  // namespace fpt
