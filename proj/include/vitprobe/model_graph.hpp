#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "vitprobe/config.hpp"

namespace vitprobe {

namespace detail {

inline std::string shape2(std::size_t a, std::size_t b) { return std::to_string(a) + "x" + std::to_string(b); }

inline nlohmann::ordered_json graph_node(std::string id, std::string label, std::string tooltip,
                                         std::string output_shape) {
  return {{"id", std::move(id)},
          {"label", std::move(label)},
          {"tooltip", std::move(tooltip)},
          {"output_shape", std::move(output_shape)},
          {"children", nlohmann::ordered_json::array()}};
}

}  // namespace detail

// Three-level architecture description for the overview: embedding ->
// encoder -> head at the top, the encoder expanding to its blocks and each
// block to its layers.
inline nlohmann::ordered_json model_graph(const ViTConfig& cfg) {
  using detail::graph_node;
  using detail::shape2;
  const std::size_t t = cfg.n_tokens(), d = cfg.embed_dim;
  const std::string image = std::to_string(cfg.image_h) + "x" + std::to_string(cfg.image_w) + "x" +
                            std::to_string(cfg.channels);

  auto root = graph_node("vit", "Vision Transformer", "Image in, class probabilities out.",
                         shape2(1, cfg.n_classes));
  root["input_shape"] = image;

  auto embedding = graph_node("embedding", "Embedding",
                              "Cuts the image into patches, projects each to a token, prepends CLS and adds "
                              "positional embeddings.",
                              shape2(t, d));
  embedding["children"].push_back(graph_node("embedding.patch", "Patch embedding",
                                             std::to_string(d) + " convolution kernels of " + std::to_string(cfg.patch) +
                                                 "x" + std::to_string(cfg.patch) + "x" + std::to_string(cfg.channels) +
                                                 " with stride " + std::to_string(cfg.patch) + ", plus bias.",
                                             shape2(cfg.n_patches(), d)));
  embedding["children"].push_back(
      graph_node("embedding.cls", "CLS token", "Learned token prepended to the patch tokens.", shape2(t, d)));
  embedding["children"].push_back(graph_node("embedding.position", "Position embedding",
                                             "Learned per-index vectors added to every token.", shape2(t, d)));

  auto encoder = graph_node("encoder", "Transformer encoder",
                            std::to_string(cfg.n_blocks) + " pre-norm transformer blocks.", shape2(t, d));
  for (std::size_t l = 1; l <= cfg.n_blocks; ++l) {
    const std::string p = "encoder.block" + std::to_string(l);
    auto block = graph_node(p, "Block " + std::to_string(l), "LayerNorm, multi-head attention and MLP with residuals.",
                            shape2(t, d));
    block["layer"] = l;
    block["children"].push_back(graph_node(p + ".ln1", "LayerNorm", "Normalises each token's features.", shape2(t, d)));
    block["children"].push_back(graph_node(p + ".attn", "Multi-head attention",
                                           std::to_string(cfg.n_heads) + " heads of width " +
                                               std::to_string(cfg.head_dim()) + ", softmax(QK^T / sqrt(d_k)) V.",
                                           shape2(t, d)));
    block["children"].push_back(graph_node(p + ".residual1", "Residual add", "Adds the block input back.", shape2(t, d)));
    block["children"].push_back(graph_node(p + ".ln2", "LayerNorm", "Normalises each token's features.", shape2(t, d)));
    block["children"].push_back(graph_node(p + ".mlp", "MLP",
                                           "Linear " + std::to_string(d) + "->" + std::to_string(cfg.mlp_hidden) +
                                               ", GELU, linear " + std::to_string(cfg.mlp_hidden) + "->" +
                                               std::to_string(d) + ".",
                                           shape2(t, d)));
    block["children"].push_back(
        graph_node(p + ".residual2", "Residual add", "Adds the attention output back.", shape2(t, d)));
    encoder["children"].push_back(std::move(block));
  }

  auto head = graph_node("head", "MLP head", "LayerNorm of the CLS token then a linear classifier.",
                         shape2(1, cfg.n_classes));
  head["children"].push_back(graph_node("head.cls", "CLS token", "Row 0 of the last block output.", shape2(1, d)));
  head["children"].push_back(graph_node("head.ln", "LayerNorm", "Final normalisation.", shape2(1, d)));
  head["children"].push_back(
      graph_node("head.linear", "Linear", "Projects to class logits.", shape2(1, cfg.n_classes)));
  head["children"].push_back(
      graph_node("head.softmax", "Softmax", "Turns logits into probabilities.", shape2(1, cfg.n_classes)));

  root["children"].push_back(std::move(embedding));
  root["children"].push_back(std::move(encoder));
  root["children"].push_back(std::move(head));
  return root;
}

}  // namespace vitprobe
