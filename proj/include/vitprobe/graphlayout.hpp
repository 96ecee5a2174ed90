#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace vitprobe {

struct GraphNode {
  std::string id;
  std::string label;
  std::string payload;
};

struct GraphEdge {
  std::string source;
  std::string target;
};

struct GraphSpec {
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;

  // Throws std::invalid_argument on duplicate ids or dangling edges.
  void validate() const {
    std::map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (!seen.emplace(nodes[i].id, i).second) throw std::invalid_argument("duplicate node id " + nodes[i].id);
    for (const auto& e : edges) {
      if (!seen.contains(e.source)) throw std::invalid_argument("edge source " + e.source + " is not a node");
      if (!seen.contains(e.target)) throw std::invalid_argument("edge target " + e.target + " is not a node");
    }
  }

  std::size_t index_of(const std::string& id) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].id == id) return i;
    throw std::invalid_argument("unknown node id " + id);
  }
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  Vec2& operator-=(Vec2 o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
  friend bool operator==(Vec2, Vec2) = default;
  double norm() const { return std::hypot(x, y); }
};

// Simulation nodes: entities occupy [0, entity_count), the label of entity i
// sits at entity_count + i.
struct LayoutState {
  std::size_t entity_count = 0;
  std::vector<Vec2> positions;
  std::vector<Vec2> velocities;
  double alpha = 1.0;
  std::size_t iteration = 0;

  Vec2 entity(std::size_t i) const { return positions[i]; }
  Vec2 label(std::size_t i) const { return positions[entity_count + i]; }
  friend bool operator==(const LayoutState&, const LayoutState&) = default;
};

struct LayoutParams {
  double repulsion = 0.003;       // many-body strength, force = repulsion / dist^2
  double link_rest = 1.0;         // edge spring rest length
  double link_stiffness = 1.0;    // edge spring constant, divided by the smaller endpoint degree
  double label_strength = 1.0;    // entity <-> label spring constant (rest length 0)
  double centering = 0.02;        // pull of every node toward the origin
  double velocity_decay = 0.4;    // fraction of velocity removed per step
  double alpha_decay = 0.995;     // geometric cooling factor per step
  double alpha_min = 0.02;        // cooling floor
  double min_distance = 1e-3;     // clamp for the repulsion singularity
  std::size_t iterations = 1000;

  void validate() const {
    auto non_negative = [](double v, const char* name) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(name) + " must be >= 0");
    };
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(name) + " must be > 0");
    };
    non_negative(repulsion, "repulsion");
    positive(link_rest, "link_rest");
    non_negative(link_stiffness, "link_stiffness");
    non_negative(label_strength, "label_strength");
    non_negative(centering, "centering");
    if (!(velocity_decay > 0.0 && velocity_decay < 1.0)) throw std::invalid_argument("velocity_decay must be in (0,1)");
    if (!(alpha_decay > 0.0 && alpha_decay <= 1.0)) throw std::invalid_argument("alpha_decay must be in (0,1]");
    if (!(alpha_min > 0.0 && alpha_min <= 1.0)) throw std::invalid_argument("alpha_min must be in (0,1]");
    positive(min_distance, "min_distance");
  }
};

class LayoutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Offset of a label from its entity at seeding time.
inline constexpr Vec2 kLabelSeedOffset{0.05, 0.05};

// Uniform placement in the unit disk from mt19937_64, whose output sequence
// is fixed by the standard; doubles are formed from the top 53 bits.
inline LayoutState seed_positions(const GraphSpec& graph, std::uint64_t seed) {
  LayoutState s;
  const std::size_t n = graph.nodes.size();
  s.entity_count = n;
  s.positions.resize(2 * n);
  s.velocities.assign(2 * n, Vec2{});
  std::mt19937_64 rng(seed);
  auto unit = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  for (std::size_t i = 0; i < n; ++i) {
    const double r = std::sqrt(unit());
    const double theta = 2.0 * std::numbers::pi * unit();
    s.positions[i] = {r * std::cos(theta), r * std::sin(theta)};
    s.positions[n + i] = s.positions[i] + kLabelSeedOffset;
  }
  return s;
}

// Advances `state` by `iterations` steps. Per step every simulation node
// receives: pairwise repulsion among all nodes, edge springs between
// entities, the entity-label spring, and centering. Velocities are updated
// semi-implicitly (v += alpha F, v *= 1 - decay, p += v).
inline LayoutState simulate(const GraphSpec& graph, LayoutState state, std::size_t iterations,
                            const LayoutParams& params = {}) {
  params.validate();
  graph.validate();
  const std::size_t n = graph.nodes.size();
  if (state.entity_count != n || state.positions.size() != 2 * n || state.velocities.size() != 2 * n)
    throw std::invalid_argument("layout state does not match graph");

  std::vector<std::pair<std::size_t, std::size_t>> links;
  {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) index[graph.nodes[i].id] = i;
    for (const auto& e : graph.edges) links.emplace_back(index.at(e.source), index.at(e.target));
  }
  // Edge stiffness is divided by the smaller endpoint degree so hubs stay stable.
  std::vector<double> link_k;
  {
    std::vector<std::size_t> degree(n, 0);
    for (auto [a, b] : links) ++degree[a], ++degree[b];
    for (auto [a, b] : links) link_k.push_back(params.link_stiffness / static_cast<double>(std::min(degree[a], degree[b])));
  }

  const std::size_t total = 2 * n;
  const double min_d2 = params.min_distance * params.min_distance;
  std::vector<Vec2> force(total);

  for (std::size_t step = 0; step < iterations; ++step) {
    std::fill(force.begin(), force.end(), Vec2{});
    const auto& p = state.positions;

    if (params.repulsion > 0.0) {
      for (std::size_t i = 0; i < total; ++i) {
        for (std::size_t j = i + 1; j < total; ++j) {
          const Vec2 d = p[i] - p[j];
          const double len = d.norm();
          if (len == 0.0) continue;
          const double mag = params.repulsion / std::max(len * len, min_d2);
          const Vec2 f = (mag / len) * d;
          force[i] += f;
          force[j] -= f;
        }
      }
    }

    auto spring = [&](std::size_t a, std::size_t b, double k, double rest) {
      const Vec2 d = p[b] - p[a];
      const double len = d.norm();
      if (len == 0.0) return;
      const Vec2 f = (k * (len - rest) / len) * d;
      force[a] += f;
      force[b] -= f;
    };
    for (std::size_t e = 0; e < links.size(); ++e) spring(links[e].first, links[e].second, link_k[e], params.link_rest);
    for (std::size_t i = 0; i < n; ++i) spring(i, n + i, params.label_strength, 0.0);

    for (std::size_t i = 0; i < total; ++i) force[i] -= params.centering * p[i];

    for (std::size_t i = 0; i < total; ++i) {
      Vec2& v = state.velocities[i];
      v = (1.0 - params.velocity_decay) * (v + state.alpha * force[i]);
      state.positions[i] += v;
      if (!std::isfinite(state.positions[i].x) || !std::isfinite(state.positions[i].y))
        throw LayoutError("non-finite position at step " + std::to_string(state.iteration));
    }
    state.alpha = std::max(params.alpha_min, state.alpha * params.alpha_decay);
    ++state.iteration;
  }
  return state;
}

inline LayoutState layout(const GraphSpec& graph, std::uint64_t seed, std::size_t iterations,
                          const LayoutParams& params = {}) {
  if (iterations < 1) throw std::invalid_argument("layout needs at least one iteration");
  graph.validate();
  return simulate(graph, seed_positions(graph, seed), iterations, params);
}

inline LayoutState layout(const GraphSpec& graph, std::uint64_t seed, const LayoutParams& params = {}) {
  return layout(graph, seed, params.iterations, params);
}

inline double max_speed(const LayoutState& s) {
  double m = 0.0;
  for (const auto& v : s.velocities) m = std::max(m, v.norm());
  return m;
}

// Fraction of entities whose own label is strictly closer than every other label.
inline double label_proximity(const LayoutState& s) {
  const std::size_t n = s.entity_count;
  if (n == 0) return 1.0;
  std::size_t good = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double own = (s.label(i) - s.entity(i)).norm();
    bool closest = true;
    for (std::size_t j = 0; j < n && closest; ++j)
      if (j != i && (s.label(j) - s.entity(i)).norm() <= own) closest = false;
    good += closest;
  }
  return static_cast<double>(good) / static_cast<double>(n);
}

}  // namespace vitprobe
