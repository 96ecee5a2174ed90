#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "vitprobe/config.hpp"
#include "vitprobe/tensor.hpp"
#include "vitprobe/weights.hpp"

namespace vitprobe {

// Intermediates of one encoder block. Per-head tensors are stacked along
// the leading axis: q/k/v are [heads, T, d_k], attention is [heads, T, T].
struct BlockTrace {
  Tensor attn_input;  // LN1(z_{l-1})
  Tensor q, k, v;
  Tensor attention;
  Tensor msa_out;
  Tensor z_prime;
  Tensor mlp_input;  // LN2(z'_l)
  Tensor mlp_hidden_act;
  Tensor z;
};

// Every named intermediate of a single forward pass. Treat as immutable once
// `forward` returns; the service shares it as shared_ptr<const>.
struct ActivationTrace {
  ViTConfig config;
  Tensor patches;  // [N, D]
  Tensor z0;       // [N+1, D]
  std::vector<BlockTrace> blocks;
  Tensor y;       // [1, D]
  Tensor logits;  // [1, classes]
  Tensor probs;   // [1, classes]

  // Layer 0 is the embedding output, layer l in 1..L the output of block l.
  const Tensor& layer_output(std::size_t layer) const {
    if (layer > blocks.size())
      throw std::out_of_range("layer " + std::to_string(layer) + " outside 0.." + std::to_string(blocks.size()));
    return layer == 0 ? z0 : blocks[layer - 1].z;
  }
};

// Splits an [H, W, C] image into non-overlapping P x P patches (row-major
// over the patch grid) and projects each onto the D kernels plus bias.
inline Tensor patch_embed(const Tensor& image, const ViTWeights& w) {
  const auto& cfg = w.config;
  const Shape want{cfg.image_h, cfg.image_w, cfg.channels};
  if (image.shape() != want) throw DimensionError("patch_embed image shape", image.shape(), want);
  const std::size_t p = cfg.patch, c = cfg.channels, gw = cfg.grid_w();

  // im2row: one flattened (row, col, channel) patch per output row.
  Tensor rows({cfg.n_patches(), cfg.patch_dim()});
  for (std::size_t n = 0; n < cfg.n_patches(); ++n) {
    const std::size_t py = (n / gw) * p, px = (n % gw) * p;
    auto dst = rows.row(n);
    std::size_t i = 0;
    for (std::size_t y = 0; y < p; ++y)
      for (std::size_t x = 0; x < p; ++x)
        for (std::size_t ch = 0; ch < c; ++ch) dst[i++] = image[((py + y) * cfg.image_w + px + x) * c + ch];
  }
  const Tensor kernels = transpose(w.patch_kernel.reshaped({cfg.embed_dim, cfg.patch_dim()}));
  return linear(rows, kernels, w.patch_bias);
}

// z0 = [x_cls; patches] + E_pos
inline Tensor assemble_embedding(const Tensor& patches, const ViTWeights& w) {
  const auto& cfg = w.config;
  const Shape want{cfg.n_patches(), cfg.embed_dim};
  if (patches.shape() != want) throw DimensionError("assemble_embedding patches", patches.shape(), want);
  Tensor z({cfg.n_tokens(), cfg.embed_dim});
  for (std::size_t j = 0; j < cfg.embed_dim; ++j) z.at(0, j) = w.cls_token[j] + w.pos_embed.at(0, j);
  for (std::size_t t = 1; t < cfg.n_tokens(); ++t)
    for (std::size_t j = 0; j < cfg.embed_dim; ++j) z.at(t, j) = patches.at(t - 1, j) + w.pos_embed.at(t, j);
  return z;
}

struct AttentionResult {
  Tensor out;        // [T, D]
  Tensor attention;  // [heads, T, T]
  Tensor q, k, v;    // [heads, T, d_k]
};

namespace detail {

// Copies columns [h*dk, (h+1)*dk) of a [T, D] projection into head slot h.
inline void split_head(const Tensor& full, std::size_t h, std::size_t dk, Tensor& stacked) {
  const std::size_t t_len = full.dim(0);
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t j = 0; j < dk; ++j) stacked[(h * t_len + t) * dk + j] = full.at(t, h * dk + j);
}

}  // namespace detail

// Multi-head self-attention over a post-LN input x [T, D]. Head h uses the
// contiguous column group h*d_k..(h+1)*d_k of each projection; head outputs
// are concatenated in head order and projected by W^O + bias.
inline AttentionResult multi_head_attention(const Tensor& x, const BlockWeights& b, const ViTConfig& cfg) {
  const std::size_t t_len = x.dim(0), d = cfg.embed_dim, heads = cfg.n_heads, dk = cfg.head_dim();
  if (x.rank() != 2 || x.dim(1) != d) throw DimensionError("attention input", x.shape(), Shape{t_len, d});

  const Tensor q = linear(x, b.wq, b.bq);
  const Tensor k = linear(x, b.wk, b.bk);
  const Tensor v = linear(x, b.wv, b.bv);

  AttentionResult r;
  r.q = Tensor({heads, t_len, dk});
  r.k = Tensor({heads, t_len, dk});
  r.v = Tensor({heads, t_len, dk});
  r.attention = Tensor({heads, t_len, t_len});
  Tensor context({t_len, d});

  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  Tensor scores({t_len, t_len});
  for (std::size_t h = 0; h < heads; ++h) {
    detail::split_head(q, h, dk, r.q);
    detail::split_head(k, h, dk, r.k);
    detail::split_head(v, h, dk, r.v);
    const float* qh = r.q.data().data() + h * t_len * dk;
    const float* kh = r.k.data().data() + h * t_len * dk;
    const float* vh = r.v.data().data() + h * t_len * dk;

    for (std::size_t i = 0; i < t_len; ++i) {
      for (std::size_t j = 0; j < t_len; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dk; ++c) dot += static_cast<double>(qh[i * dk + c]) * kh[j * dk + c];
        scores.at(i, j) = static_cast<float>(dot * inv_sqrt_dk);
      }
    }
    const Tensor a = softmax(scores, 1);
    std::copy(a.data().begin(), a.data().end(), r.attention.data().begin() + h * t_len * t_len);

    // context[:, head cols] = A_h V_h
    std::vector<double> acc(dk);
    for (std::size_t i = 0; i < t_len; ++i) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t j = 0; j < t_len; ++j) {
        const double aij = a.at(i, j);
        for (std::size_t c = 0; c < dk; ++c) acc[c] += aij * vh[j * dk + c];
      }
      for (std::size_t c = 0; c < dk; ++c) context.at(i, h * dk + c) = static_cast<float>(acc[c]);
    }
  }
  r.out = linear(context, b.wo, b.bo);
  return r;
}

// Pre-norm block:
//   z'_l = MSA(LN1(z_{l-1})) + z_{l-1}
//   z_l  = MLP(LN2(z'_l)) + z'_l,   MLP = linear -> GELU -> linear
inline BlockTrace encoder_block(const Tensor& z_prev, const BlockWeights& b, const ViTConfig& cfg) {
  BlockTrace t;
  t.attn_input = layer_norm(z_prev, b.ln1_gamma, b.ln1_beta);
  auto attn = multi_head_attention(t.attn_input, b, cfg);
  t.q = std::move(attn.q);
  t.k = std::move(attn.k);
  t.v = std::move(attn.v);
  t.attention = std::move(attn.attention);
  t.msa_out = std::move(attn.out);
  t.z_prime = add(t.msa_out, z_prev);
  t.mlp_input = layer_norm(t.z_prime, b.ln2_gamma, b.ln2_beta);
  t.mlp_hidden_act = gelu(linear(t.mlp_input, b.mlp_in_w, b.mlp_in_b));
  t.z = add(linear(t.mlp_hidden_act, b.mlp_out_w, b.mlp_out_b), t.z_prime);
  return t;
}

struct Classification {
  Tensor y;       // LN(token)
  Tensor logits;  // [1, classes]
  Tensor probs;   // [1, classes]
};

// Final LayerNorm, linear head, softmax. Accepts any single token so it can
// probe patch tokens as well as CLS.
inline Classification classify_head(const Tensor& token, const ViTWeights& w) {
  const Shape want{1, w.config.embed_dim};
  if (token.shape() != want) throw DimensionError("classify_head token", token.shape(), want);
  Classification c;
  c.y = layer_norm(token, w.final_ln_gamma, w.final_ln_beta);
  c.logits = linear(c.y, w.head_weight, w.head_bias);
  c.probs = softmax(c.logits, 1);
  return c;
}

// Row `index` of a 2-D tensor as a [1, D] tensor.
inline Tensor token_row(const Tensor& z, std::size_t index) {
  if (index >= z.dim(0))
    throw std::out_of_range("token " + std::to_string(index) + " outside 0.." + std::to_string(z.dim(0) - 1));
  auto r = z.row(index);
  return Tensor({1, r.size()}, std::vector<float>(r.begin(), r.end()));
}

// Full forward pass over an [H, W, C] image. Weights are validated before
// any compute.
inline ActivationTrace forward(const Tensor& image, const ViTWeights& w) {
  validate(w);
  ActivationTrace trace;
  trace.config = w.config;
  trace.patches = patch_embed(image, w);
  trace.z0 = assemble_embedding(trace.patches, w);
  trace.blocks.reserve(w.config.n_blocks);
  const Tensor* z = &trace.z0;
  for (const auto& b : w.blocks) {
    trace.blocks.push_back(encoder_block(*z, b, w.config));
    z = &trace.blocks.back().z;
  }
  auto cls = classify_head(token_row(*z, 0), w);
  trace.y = std::move(cls.y);
  trace.logits = std::move(cls.logits);
  trace.probs = std::move(cls.probs);
  return trace;
}

}  // namespace vitprobe
