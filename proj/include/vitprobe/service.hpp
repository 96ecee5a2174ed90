#pragma once

// HTTP facade over the model and interpretation routines. `Service` holds
// the request logic as plain member functions returning ApiResponse so it
// can be exercised without sockets; `mount` binds it to a cpp-httplib
// server under /api/v1.

#include <cctype>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <openssl/evp.h>
#include <openssl/rand.h>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "vitprobe/graphlayout.hpp"
#include "vitprobe/image.hpp"
#include "vitprobe/interpret.hpp"
#include "vitprobe/model.hpp"
#include "vitprobe/model_graph.hpp"
#include "vitprobe/serialize.hpp"
#include "vitprobe/weights.hpp"

namespace vitprobe {

struct Session {
  std::string id;
  std::chrono::system_clock::time_point created_at;
  std::shared_ptr<const ActivationTrace> trace;
  RasterImage source_image;
  std::size_t predicted_index = 0;
  std::string predicted_class;
};

// 128 random bits from the OpenSSL CSPRNG, hex encoded.
inline std::string new_session_id() {
  unsigned char bytes[16];
  if (RAND_bytes(bytes, sizeof bytes) != 1) throw std::runtime_error("RAND_bytes failed");
  std::string out;
  static constexpr char hex[] = "0123456789abcdef";
  for (unsigned char b : bytes) {
    out.push_back(hex[b >> 4]);
    out.push_back(hex[b & 0xf]);
  }
  return out;
}

inline std::optional<std::vector<std::uint8_t>> base64_decode(std::string_view in) {
  std::string clean;
  for (char c : in)
    if (!std::isspace(static_cast<unsigned char>(c))) clean.push_back(c);
  if (clean.empty() || clean.size() % 4 != 0) return std::nullopt;
  std::vector<std::uint8_t> out(clean.size() / 4 * 3);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(clean.data()),
                                static_cast<int>(clean.size()));
  if (n < 0) return std::nullopt;
  std::size_t pad = 0;
  if (clean.ends_with("==")) pad = 2;
  else if (clean.ends_with("=")) pad = 1;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

// Capacity-bounded LRU table. Lookups refresh recency; inserts past
// capacity drop the least recently used session. Sessions are handed out
// as shared_ptr<const>, so an evicted session stays valid for readers that
// already hold it.
class SessionStore {
 public:
  explicit SessionStore(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("session capacity must be positive");
  }

  void insert(std::shared_ptr<const Session> s) {
    std::lock_guard lock(mu_);
    if (auto it = index_.find(s->id); it != index_.end()) {
      order_.erase(it->second);
      index_.erase(it);
    }
    order_.push_front(s);
    index_[s->id] = order_.begin();
    while (order_.size() > capacity_) {
      index_.erase(order_.back()->id);
      order_.pop_back();
    }
  }

  std::shared_ptr<const Session> find(const std::string& id) {
    std::lock_guard lock(mu_);
    auto it = index_.find(id);
    if (it == index_.end()) return nullptr;
    order_.splice(order_.begin(), order_, it->second);
    return *it->second;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return order_.size();
  }
  std::size_t capacity() const { return capacity_; }

 private:
  using List = std::list<std::shared_ptr<const Session>>;
  std::size_t capacity_;
  mutable std::mutex mu_;
  List order_;
  std::unordered_map<std::string, List::iterator> index_;
};

struct ApiResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";

  nlohmann::json json() const { return nlohmann::json::parse(body); }
};

struct ServiceOptions {
  std::size_t session_capacity = 32;
  LayoutParams layout;
};

class Service {
 public:
  Service(std::shared_ptr<const ViTWeights> weights, GraphSpec knowledge_graph, ServiceOptions options = {})
      : weights_(std::move(weights)),
        knowledge_graph_(std::move(knowledge_graph)),
        options_(std::move(options)),
        sessions_(options_.session_capacity) {
    knowledge_graph_.validate();
    options_.layout.validate();
    if (weights_) validate(*weights_);
  }

  bool ready() const { return weights_ != nullptr; }
  SessionStore& sessions() { return sessions_; }

  ApiResponse create_session(std::span<const std::uint8_t> image_bytes) {
    if (!weights_) return error(503, "weights not loaded");
    RasterImage img;
    try {
      img = decode_image(image_bytes);
    } catch (const FormatError& e) {
      return error(400, e.what());
    }
    const auto& cfg = weights_->config;
    if (cfg.image_h != cfg.image_w) return error(500, "non-square model input is not supported");
    auto trace = std::make_shared<const ActivationTrace>(forward(preprocess(img, cfg.image_h), *weights_));

    auto s = std::make_shared<Session>();
    s->id = new_session_id();
    s->created_at = std::chrono::system_clock::now();
    s->trace = trace;
    s->source_image = std::move(img);
    const auto labels = class_labels(*weights_);
    s->predicted_index = argmax(trace->probs.data());
    s->predicted_class = labels[s->predicted_index];
    sessions_.insert(s);

    ojson j;
    j["session_id"] = s->id;
    auto pred = prediction_to_json(trace->probs, labels);
    for (auto& [k, v] : pred.items()) j[k] = v;
    return ok(j);
  }

  ApiResponse similarity(const std::string& id, std::size_t layer, std::size_t ref) {
    return with_session(id, [&](const Session& s) { return ok(to_json(similarity_map(*s.trace, layer, ref))); });
  }

  ApiResponse attention(const std::string& id, std::size_t layer, std::size_t head, std::size_t ref) {
    return with_session(id, [&](const Session& s) { return ok(to_json(attention_map(*s.trace, layer, head, ref))); });
  }

  ApiResponse probe(const std::string& id, std::size_t ref) {
    return with_session(id, [&](const Session& s) {
      const auto c = patch_probe(*s.trace, *weights_, ref);
      ojson j;
      j["ref_index"] = ref;
      auto pred = prediction_to_json(c.probs, class_labels(*weights_));
      for (auto& [k, v] : pred.items()) j[k] = v;
      return ok(j);
    });
  }

  ApiResponse channel(const std::string& id, std::size_t layer, std::size_t channel_index) {
    return with_session(id,
                        [&](const Session& s) { return ok(to_json(channel_grid(*s.trace, layer, channel_index))); });
  }

  ApiResponse session_image(const std::string& id) {
    return with_session(id, [&](const Session& s) {
      const auto png = encode_png(s.source_image);
      return ApiResponse{200, std::string(png.begin(), png.end()), "image/png"};
    });
  }

  ApiResponse positional(std::size_t ref) {
    if (!weights_) return error(503, "weights not loaded");
    return guarded([&] { return ok(to_json(positional_similarity(*weights_, ref))); });
  }

  ApiResponse config() const {
    if (!weights_) return error(503, "weights not loaded");
    const auto& c = weights_->config;
    ojson j = {{"image_h", c.image_h},   {"image_w", c.image_w},       {"channels", c.channels},
               {"patch", c.patch},       {"n_patches", c.n_patches()}, {"embed_dim", c.embed_dim},
               {"n_blocks", c.n_blocks}, {"n_heads", c.n_heads},       {"head_dim", c.head_dim()},
               {"mlp_hidden", c.mlp_hidden}, {"n_classes", c.n_classes}, {"labels", class_labels(*weights_)}};
    return ok(j);
  }

  ApiResponse model_graph_json() const {
    return ok(model_graph(weights_ ? weights_->config : vit_b16()));
  }

  ApiResponse knowledge_graph() const { return ok(graph_to_json(knowledge_graph_)); }

  ApiResponse layout(std::uint64_t seed, std::optional<std::size_t> iterations = std::nullopt) const {
    return guarded([&] {
      const auto state = vitprobe::layout(knowledge_graph_, seed, iterations.value_or(options_.layout.iterations),
                                          options_.layout);
      return ok(layout_to_json(knowledge_graph_, state, seed));
    });
  }

  // Registers every route on `server`; static UI assets are served from
  // `static_dir` when it exists.
  void mount(httplib::Server& server, const std::filesystem::path& static_dir = {}) {
    auto reply = [](httplib::Response& res, const ApiResponse& r) {
      res.status = r.status;
      res.set_content(r.body, r.content_type);
    };

    server.Post("/api/v1/session", [this, reply](const httplib::Request& req, httplib::Response& res) {
      auto bytes = request_image(req);
      if (!bytes) return reply(res, error(400, "request carries no image (multipart file, image_base64 JSON or raw body)"));
      reply(res, create_session(*bytes));
    });

    const std::string sid = R"(/api/v1/session/([0-9a-f]+))";
    server.Get(sid + "/similarity", [this, reply](const httplib::Request& req, httplib::Response& res) {
      auto layer = uint_param(req, "layer"), ref = uint_param(req, "ref");
      if (!layer || !ref) return reply(res, error(400, "layer and ref are required non-negative integers"));
      reply(res, similarity(req.matches[1], *layer, *ref));
    });
    server.Get(sid + "/attention", [this, reply](const httplib::Request& req, httplib::Response& res) {
      auto layer = uint_param(req, "layer"), head = uint_param(req, "head"), ref = uint_param(req, "ref");
      if (!layer || !head || !ref) return reply(res, error(400, "layer, head and ref are required non-negative integers"));
      reply(res, attention(req.matches[1], *layer, *head, *ref));
    });
    server.Get(sid + "/probe", [this, reply](const httplib::Request& req, httplib::Response& res) {
      auto ref = uint_param(req, "ref");
      if (!ref) return reply(res, error(400, "ref is a required non-negative integer"));
      reply(res, probe(req.matches[1], *ref));
    });
    server.Get(sid + "/channel", [this, reply](const httplib::Request& req, httplib::Response& res) {
      auto layer = uint_param(req, "layer"), ch = uint_param(req, "channel");
      if (!layer || !ch) return reply(res, error(400, "layer and channel are required non-negative integers"));
      reply(res, channel(req.matches[1], *layer, *ch));
    });
    server.Get(sid + "/image", [this, reply](const httplib::Request& req, httplib::Response& res) {
      reply(res, session_image(req.matches[1]));
    });
    server.Get("/api/v1/positional", [this, reply](const httplib::Request& req, httplib::Response& res) {
      auto ref = uint_param(req, "ref");
      if (!ref) return reply(res, error(400, "ref is a required non-negative integer"));
      reply(res, positional(*ref));
    });
    server.Get("/api/v1/config", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, config()); });
    server.Get("/api/v1/model-graph",
               [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, model_graph_json()); });
    server.Get("/api/v1/knowledge-graph",
               [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, knowledge_graph()); });
    server.Get("/api/v1/layout", [this, reply](const httplib::Request& req, httplib::Response& res) {
      auto seed = uint_param(req, "seed");
      if (!seed) return reply(res, error(400, "seed is a required non-negative integer"));
      std::optional<std::size_t> iterations;
      if (req.has_param("iterations")) {
        iterations = uint_param(req, "iterations");
        if (!iterations || *iterations == 0) return reply(res, error(422, "iterations must be a positive integer"));
      }
      reply(res, layout(*seed, iterations));
    });

    if (!static_dir.empty() && std::filesystem::is_directory(static_dir)) server.set_mount_point("/", static_dir.string());
  }

  static std::optional<std::uint64_t> parse_uint(const std::string& s) {
    if (s.empty() || s.size() > 19) return std::nullopt;
    std::uint64_t v = 0;
    for (char c : s) {
      if (c < '0' || c > '9') return std::nullopt;
      v = v * 10 + static_cast<std::uint64_t>(c - '0');
    }
    return v;
  }

 private:
  static ApiResponse ok(const ojson& j) { return {200, j.dump(), "application/json"}; }

  static ApiResponse error(int status, const std::string& message) {
    return {status, ojson{{"error", message}, {"status", status}}.dump(), "application/json"};
  }

  template <typename Fn>
  static ApiResponse guarded(Fn&& fn) {
    try {
      return fn();
    } catch (const std::out_of_range& e) {
      return error(422, e.what());
    } catch (const std::invalid_argument& e) {
      return error(422, e.what());
    }
  }

  template <typename Fn>
  ApiResponse with_session(const std::string& id, Fn&& fn) {
    if (!weights_) return error(503, "weights not loaded");
    auto s = sessions_.find(id);
    if (!s) return error(404, "unknown session " + id);
    return guarded([&] { return fn(*s); });
  }

  static std::optional<std::uint64_t> uint_param(const httplib::Request& req, const char* key) {
    if (!req.has_param(key)) return std::nullopt;
    return parse_uint(req.get_param_value(key));
  }

  static std::optional<std::vector<std::uint8_t>> request_image(const httplib::Request& req) {
    if (req.is_multipart_form_data()) {
      for (const char* key : {"image", "file"})
        if (req.has_file(key)) {
          const auto& f = req.get_file_value(key);
          return std::vector<std::uint8_t>(f.content.begin(), f.content.end());
        }
      if (!req.files.empty()) {
        const auto& f = req.files.begin()->second;
        return std::vector<std::uint8_t>(f.content.begin(), f.content.end());
      }
      return std::nullopt;
    }
    if (req.get_header_value("Content-Type").starts_with("application/json")) {
      try {
        const auto j = nlohmann::json::parse(req.body);
        return base64_decode(j.at("image_base64").get<std::string>());
      } catch (const nlohmann::json::exception&) {
        return std::nullopt;
      }
    }
    if (req.body.empty()) return std::nullopt;
    return std::vector<std::uint8_t>(req.body.begin(), req.body.end());
  }

  std::shared_ptr<const ViTWeights> weights_;
  GraphSpec knowledge_graph_;
  ServiceOptions options_;
  SessionStore sessions_;
};

}  // namespace vitprobe
