#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vitprobe/config.hpp"
#include "vitprobe/tensor.hpp"

namespace vitprobe {

struct BlockWeights {
  Tensor ln1_gamma, ln1_beta;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gamma, ln2_beta;
  Tensor mlp_in_w, mlp_in_b;
  Tensor mlp_out_w, mlp_out_b;
};

// Patch kernels are stored as [D, P, P, C]: D kernels laid out in the same
// (row, column, channel) order as the input image. Projection matrices are
// [in, out] so activations right-multiply them.
struct ViTWeights {
  ViTConfig config;
  std::vector<std::string> labels;

  Tensor patch_kernel, patch_bias;
  Tensor cls_token, pos_embed;
  std::vector<BlockWeights> blocks;
  Tensor final_ln_gamma, final_ln_beta;
  Tensor head_weight, head_bias;
};

namespace detail {

template <typename W, typename Fn>
void visit_parameters(W& w, Fn&& fn) {
  fn("embed.patch_kernel", w.patch_kernel);
  fn("embed.patch_bias", w.patch_bias);
  fn("embed.cls_token", w.cls_token);
  fn("embed.pos_embed", w.pos_embed);
  for (std::size_t l = 0; l < w.blocks.size(); ++l) {
    auto& b = w.blocks[l];
    const std::string p = "block." + std::to_string(l) + ".";
    fn(p + "ln1.gamma", b.ln1_gamma);
    fn(p + "ln1.beta", b.ln1_beta);
    fn(p + "attn.wq", b.wq);
    fn(p + "attn.bq", b.bq);
    fn(p + "attn.wk", b.wk);
    fn(p + "attn.bk", b.bk);
    fn(p + "attn.wv", b.wv);
    fn(p + "attn.bv", b.bv);
    fn(p + "attn.wo", b.wo);
    fn(p + "attn.bo", b.bo);
    fn(p + "ln2.gamma", b.ln2_gamma);
    fn(p + "ln2.beta", b.ln2_beta);
    fn(p + "mlp_in.weight", b.mlp_in_w);
    fn(p + "mlp_in.bias", b.mlp_in_b);
    fn(p + "mlp_out.weight", b.mlp_out_w);
    fn(p + "mlp_out.bias", b.mlp_out_b);
  }
  fn("final_ln.gamma", w.final_ln_gamma);
  fn("final_ln.beta", w.final_ln_beta);
  fn("head.weight", w.head_weight);
  fn("head.bias", w.head_bias);
}

}  // namespace detail

// Calls fn(name, tensor) for every parameter in canonical order.
template <typename Fn>
void for_each_parameter(ViTWeights& w, Fn&& fn) {
  detail::visit_parameters(w, std::forward<Fn>(fn));
}
template <typename Fn>
void for_each_parameter(const ViTWeights& w, Fn&& fn) {
  detail::visit_parameters(w, std::forward<Fn>(fn));
}

// Every required parameter name with its shape for `cfg`, sorted by name.
inline std::map<std::string, Shape> expected_shapes(const ViTConfig& cfg) {
  const std::size_t d = cfg.embed_dim, h = cfg.mlp_hidden;
  std::map<std::string, Shape> out;
  out["embed.patch_kernel"] = {d, cfg.patch, cfg.patch, cfg.channels};
  out["embed.patch_bias"] = {d};
  out["embed.cls_token"] = {1, d};
  out["embed.pos_embed"] = {cfg.n_tokens(), d};
  for (std::size_t l = 0; l < cfg.n_blocks; ++l) {
    const std::string p = "block." + std::to_string(l) + ".";
    for (const char* ln : {"ln1", "ln2"}) {
      out[p + ln + ".gamma"] = {d};
      out[p + ln + ".beta"] = {d};
    }
    for (const char* m : {"q", "k", "v", "o"}) {
      out[p + "attn.w" + m] = {d, d};
      out[p + "attn.b" + m] = {d};
    }
    out[p + "mlp_in.weight"] = {d, h};
    out[p + "mlp_in.bias"] = {h};
    out[p + "mlp_out.weight"] = {h, d};
    out[p + "mlp_out.bias"] = {d};
  }
  out["final_ln.gamma"] = {d};
  out["final_ln.beta"] = {d};
  out["head.weight"] = {d, cfg.n_classes};
  out["head.bias"] = {cfg.n_classes};
  return out;
}

// Checks every tensor against the config-derived shape and for finiteness.
inline void validate(const ViTWeights& w) {
  w.config.validate();
  if (w.blocks.size() != w.config.n_blocks)
    throw ValidationError("expected " + std::to_string(w.config.n_blocks) + " blocks, got " +
                          std::to_string(w.blocks.size()));
  if (!w.labels.empty() && w.labels.size() != w.config.n_classes)
    throw ValidationError("label count " + std::to_string(w.labels.size()) + " does not match n_classes " +
                          std::to_string(w.config.n_classes));
  const auto shapes = expected_shapes(w.config);
  for_each_parameter(w, [&](const std::string& name, const Tensor& t) {
    const auto& want = shapes.at(name);
    if (t.empty()) throw ValidationError("missing parameter " + name);
    if (t.shape() != want)
      throw ValidationError("shape mismatch for " + name + ": expected " + shape_str(want) + ", got " +
                            shape_str(t.shape()));
    if (!t.all_finite()) throw ValidationError("non-finite values in " + name);
  });
}

// Allocates every parameter for `cfg` filled with zeros (LN gammas included).
inline ViTWeights zero_weights(const ViTConfig& cfg) {
  cfg.validate();
  ViTWeights w;
  w.config = cfg;
  w.blocks.resize(cfg.n_blocks);
  const auto shapes = expected_shapes(cfg);
  for_each_parameter(w, [&](const std::string& name, Tensor& t) { t = Tensor(shapes.at(name)); });
  return w;
}

// Gaussian weights with the given standard deviation; LN gammas are drawn
// around 1. Deterministic for a given seed and standard library.
inline ViTWeights random_weights(const ViTConfig& cfg, std::uint64_t seed, float stddev = 0.05f) {
  ViTWeights w = zero_weights(cfg);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  for_each_parameter(w, [&](const std::string& name, Tensor& t) {
    const bool gamma = name.ends_with(".gamma");
    const float s = name == "embed.cls_token" || name == "embed.pos_embed" ? 0.5f : stddev;
    for (auto& v : t.data()) v = gamma ? 1.0f + 0.1f * dist(rng) : s * dist(rng);
  });
  return w;
}

}  // namespace vitprobe
