#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vitprobe/model.hpp"
#include "vitprobe/weights.hpp"

namespace vitprobe {

// Row-major 2-D grid of scalars.
struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const double> flatten() const { return values; }
};

// A patch-grid scalar field plus the CLS scalar. Cell (r, c) corresponds to
// token 1 + cols * r + c.
struct HeatGrid {
  std::string kind;  // similarity | positional | attention | channel
  Grid grid;
  std::optional<double> cls_value;
  Grid normalized;
  std::optional<double> cls_normalized;
  std::size_t layer = 0;
  std::size_t ref_index = 0;
  std::optional<std::size_t> head;
  std::optional<std::size_t> channel;
  // Tokens whose zero norm forced a similarity of 0.
  std::vector<std::size_t> zero_norm_tokens;
};

// Min-max to [0, 1]; a degenerate range maps every value to 0.5.
inline std::vector<double> normalize_display(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("normalize_display needs at least one value");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double mn = *lo, mx = *hi;
  std::vector<double> out(values.size(), 0.5);
  if (mx > mn) {
    const double range = mx - mn;
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - mn) / range;
  }
  return out;
}

inline Grid reshape_grid(std::span<const double> vec, std::size_t rows = 14, std::size_t cols = 14) {
  if (vec.size() != rows * cols)
    throw std::invalid_argument("reshape_grid expects " + std::to_string(rows * cols) + " values, got " +
                                std::to_string(vec.size()));
  return Grid{rows, cols, std::vector<double>(vec.begin(), vec.end())};
}

namespace detail {

inline void check_index(std::size_t value, std::size_t lo, std::size_t hi, const char* what) {
  if (value < lo || value > hi)
    throw std::out_of_range(std::string(what) + " " + std::to_string(value) + " outside " + std::to_string(lo) +
                            ".." + std::to_string(hi));
}

inline double norm(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

// Cosine similarity of token `ref` against every row of `tokens`. A zero-norm
// pair yields 0 and records the offending token.
inline std::vector<double> cosine_row(const Tensor& tokens, std::size_t ref, std::vector<std::size_t>& zero_norm) {
  const std::size_t n = tokens.dim(0);
  std::vector<double> norms(n);
  for (std::size_t t = 0; t < n; ++t) {
    norms[t] = norm(tokens.row(t));
    if (norms[t] == 0.0) zero_norm.push_back(t);
  }
  const auto a = tokens.row(ref);
  std::vector<double> out(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    if (norms[ref] == 0.0 || norms[t] == 0.0) continue;
    const auto b = tokens.row(t);
    double dot = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) dot += static_cast<double>(a[j]) * b[j];
    out[t] = std::clamp(dot / (norms[ref] * norms[t]), -1.0, 1.0);
  }
  return out;
}

// Splits a per-token vector into CLS + grid; the grid alone is normalised.
inline HeatGrid grid_from_tokens(std::string kind, const std::vector<double>& per_token, const ViTConfig& cfg) {
  HeatGrid g;
  g.kind = std::move(kind);
  g.cls_value = per_token[0];
  std::span<const double> patches(per_token.data() + 1, per_token.size() - 1);
  g.grid = reshape_grid(patches, cfg.grid_h(), cfg.grid_w());
  g.normalized = reshape_grid(normalize_display(patches), cfg.grid_h(), cfg.grid_w());
  return g;
}

}  // namespace detail

// Cosine similarity between token `ref` and each patch token of layer
// `layer` (0 = embedding output). cls_value is s(ref, CLS).
inline HeatGrid similarity_map(const ActivationTrace& trace, std::size_t layer, std::size_t ref) {
  detail::check_index(layer, 0, trace.blocks.size(), "layer");
  const Tensor& tokens = trace.layer_output(layer);
  detail::check_index(ref, 0, tokens.dim(0) - 1, "ref");
  std::vector<std::size_t> zero_norm;
  auto sims = detail::cosine_row(tokens, ref, zero_norm);
  HeatGrid g = detail::grid_from_tokens("similarity", sims, trace.config);
  g.layer = layer;
  g.ref_index = ref;
  g.zero_norm_tokens = std::move(zero_norm);
  return g;
}

// Cosine similarity between positional-embedding rows.
inline HeatGrid positional_similarity(const ViTWeights& w, std::size_t ref) {
  detail::check_index(ref, 0, w.config.n_tokens() - 1, "ref");
  std::vector<std::size_t> zero_norm;
  auto sims = detail::cosine_row(w.pos_embed, ref, zero_norm);
  HeatGrid g = detail::grid_from_tokens("positional", sims, w.config);
  g.ref_index = ref;
  g.zero_norm_tokens = std::move(zero_norm);
  return g;
}

// Row `ref` of head `head`'s attention matrix in block `layer` (1-based).
inline HeatGrid attention_map(const ActivationTrace& trace, std::size_t layer, std::size_t head, std::size_t ref) {
  detail::check_index(layer, 1, trace.blocks.size(), "layer");
  detail::check_index(head, 0, trace.config.n_heads - 1, "head");
  const std::size_t t_len = trace.config.n_tokens();
  detail::check_index(ref, 0, t_len - 1, "ref");
  const Tensor& a = trace.blocks[layer - 1].attention;
  const float* row = a.data().data() + (head * t_len + ref) * t_len;
  std::vector<double> weights(row, row + t_len);
  HeatGrid g = detail::grid_from_tokens("attention", weights, trace.config);
  g.layer = layer;
  g.head = head;
  g.ref_index = ref;
  return g;
}

// Final LN + head applied to token `ref` of the last block instead of CLS.
inline Classification patch_probe(const ActivationTrace& trace, const ViTWeights& w, std::size_t ref) {
  detail::check_index(ref, 0, trace.config.n_tokens() - 1, "ref");
  return classify_head(token_row(trace.layer_output(trace.blocks.size()), ref), w);
}

// One embedding channel across all tokens. Normalisation spans all tokens,
// CLS included, so the extremes may sit in cls_normalized.
inline HeatGrid channel_grid(const ActivationTrace& trace, std::size_t layer, std::size_t channel) {
  detail::check_index(layer, 0, trace.blocks.size(), "layer");
  detail::check_index(channel, 0, trace.config.embed_dim - 1, "channel");
  const Tensor& tokens = trace.layer_output(layer);
  const auto& cfg = trace.config;
  std::vector<double> column(tokens.dim(0));
  for (std::size_t t = 0; t < column.size(); ++t) column[t] = tokens.at(t, channel);
  const auto norm = normalize_display(column);

  HeatGrid g;
  g.kind = "channel";
  g.cls_value = column[0];
  g.cls_normalized = norm[0];
  g.grid = reshape_grid(std::span(column).subspan(1), cfg.grid_h(), cfg.grid_w());
  g.normalized = reshape_grid(std::span(norm).subspan(1), cfg.grid_h(), cfg.grid_w());
  g.layer = layer;
  g.channel = channel;
  return g;
}

}  // namespace vitprobe
