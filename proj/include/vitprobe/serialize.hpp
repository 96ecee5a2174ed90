#pragma once

// JSON encodings shared by the CLI and the HTTP service. Key order is fixed
// (ordered_json) and every float is rounded to 9 significant digits before
// encoding, so identical inputs give byte-identical documents.

#include <cstdio>
#include <cstdlib>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vitprobe/graphlayout.hpp"
#include "vitprobe/interpret.hpp"
#include "vitprobe/model.hpp"

namespace vitprobe {

using ojson = nlohmann::ordered_json;

// Nearest double to the 9-significant-digit decimal rendering of v. The
// JSON writer emits the shortest round-trip form, which is then <= 9 digits.
inline double round_sig9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return std::strtod(buf, nullptr);
}

inline ojson number_array(std::span<const double> values) {
  ojson a = ojson::array();
  for (double v : values) a.push_back(round_sig9(v));
  return a;
}

inline ojson number_array(std::span<const float> values) {
  ojson a = ojson::array();
  for (float v : values) a.push_back(round_sig9(v));
  return a;
}

inline ojson grid_rows(const Grid& g) {
  ojson rows = ojson::array();
  for (std::size_t r = 0; r < g.rows; ++r) rows.push_back(number_array(g.flatten().subspan(r * g.cols, g.cols)));
  return rows;
}

inline ojson to_json(const HeatGrid& g) {
  ojson j;
  j["kind"] = g.kind;
  j["layer"] = g.layer;
  j["ref_index"] = g.ref_index;
  if (g.head) j["head"] = *g.head;
  if (g.channel) j["channel"] = *g.channel;
  j["rows"] = g.grid.rows;
  j["cols"] = g.grid.cols;
  j["cls_value"] = g.cls_value ? ojson(round_sig9(*g.cls_value)) : ojson(nullptr);
  if (g.cls_normalized) j["cls_normalized"] = round_sig9(*g.cls_normalized);
  j["raw"] = grid_rows(g.grid);
  j["normalized"] = grid_rows(g.normalized);
  j["zero_norm_tokens"] = g.zero_norm_tokens;
  return j;
}

inline ojson probs_to_json(const Tensor& probs, const std::vector<std::string>& labels) {
  ojson j;
  j["labels"] = labels;
  j["probs"] = number_array(probs.data());
  return j;
}

inline std::size_t argmax(std::span<const float> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

// Labels from the weights, falling back to "class_<i>".
inline std::vector<std::string> class_labels(const ViTWeights& w) {
  if (!w.labels.empty()) return w.labels;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < w.config.n_classes; ++i) out.push_back("class_" + std::to_string(i));
  return out;
}

inline ojson prediction_to_json(const Tensor& probs, const std::vector<std::string>& labels) {
  ojson j;
  const std::size_t top = argmax(probs.data());
  j["predicted_class"] = labels.at(top);
  j["predicted_index"] = top;
  j["labels"] = labels;
  j["probs"] = number_array(probs.data());
  return j;
}

// GraphSpec <-> JSON: {"nodes": [{"id","label","payload"}], "edges": [{"source","target"}]}
inline GraphSpec graph_from_json(const nlohmann::json& j) {
  GraphSpec g;
  try {
    for (const auto& n : j.at("nodes"))
      g.nodes.push_back({n.at("id").get<std::string>(), n.value("label", n.at("id").get<std::string>()),
                         n.value("payload", std::string{})});
    if (j.contains("edges"))
      for (const auto& e : j.at("edges")) g.edges.push_back({e.at("source").get<std::string>(), e.at("target").get<std::string>()});
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed graph JSON: ") + e.what());
  }
  g.validate();
  return g;
}

inline ojson graph_to_json(const GraphSpec& g) {
  ojson j;
  j["nodes"] = ojson::array();
  for (const auto& n : g.nodes) j["nodes"].push_back({{"id", n.id}, {"label", n.label}, {"payload", n.payload}});
  j["edges"] = ojson::array();
  for (const auto& e : g.edges) j["edges"].push_back({{"source", e.source}, {"target", e.target}});
  return j;
}

inline ojson layout_to_json(const GraphSpec& g, const LayoutState& s, std::uint64_t seed) {
  ojson j;
  j["seed"] = seed;
  j["iterations"] = s.iteration;
  j["alpha"] = round_sig9(s.alpha);
  j["nodes"] = ojson::array();
  for (std::size_t i = 0; i < s.entity_count; ++i) {
    const Vec2 p = s.entity(i), l = s.label(i);
    j["nodes"].push_back({{"id", g.nodes[i].id},
                          {"label", g.nodes[i].label},
                          {"x", round_sig9(p.x)},
                          {"y", round_sig9(p.y)},
                          {"label_x", round_sig9(l.x)},
                          {"label_y", round_sig9(l.y)}});
  }
  j["edges"] = ojson::array();
  for (const auto& e : g.edges) j["edges"].push_back({{"source", e.source}, {"target", e.target}});
  return j;
}

}  // namespace vitprobe
