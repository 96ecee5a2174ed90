// vitprobe: headless driver for classification, heatmap dumps, the
// knowledge-graph layout and the HTTP service.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "vitprobe/graphlayout.hpp"
#include "vitprobe/image.hpp"
#include "vitprobe/interpret.hpp"
#include "vitprobe/model.hpp"
#include "vitprobe/serialize.hpp"
#include "vitprobe/service.hpp"
#include "vitprobe/weights_io.hpp"

#ifndef VITPROBE_ASSET_DIR
#define VITPROBE_ASSET_DIR "assets"
#endif
#ifndef VITPROBE_WEB_DIR
#define VITPROBE_WEB_DIR "web"
#endif

namespace fs = std::filesystem;
using namespace vitprobe;

namespace {

// Bad user input (indices, flags); exits with status 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

ActivationTrace run_image(const ViTWeights& w, const fs::path& image_path) {
  const auto img = load_image(image_path);
  return forward(preprocess(img, w.config.image_h), w);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

// P5, 8-bit, value = round(normalized * 255).
void write_pgm(const fs::path& path, const HeatGrid& g) {
  std::string data = "P5\n" + std::to_string(g.normalized.cols) + " " + std::to_string(g.normalized.rows) + "\n255\n";
  for (double v : g.normalized.values) data.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  write_text(path, data);
}

void emit_grid(const HeatGrid& g, const std::string& out, const std::string& pgm) {
  const auto text = to_json(g).dump(2) + "\n";
  if (out.empty() || out == "-")
    std::cout << text;
  else
    write_text(out, text);
  if (!pgm.empty()) write_pgm(pgm, g);
}

void print_probs(const Tensor& probs, const std::vector<std::string>& labels, std::size_t top_k) {
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return probs[a] > probs[b]; });
  order.resize(std::min(top_k, order.size()));
  for (auto i : order) std::cout << labels[i] << " " << fmt9(probs[i]) << "\n";
}

fs::path default_graph() { return fs::path(VITPROBE_ASSET_DIR) / "knowledge_graph.json"; }

GraphSpec read_graph(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("graph " + path.string() + " is not valid JSON: " + e.what());
  }
  return graph_from_json(j);
}

template <typename Fn>
auto index_guard(Fn&& fn) {
  try {
    return fn();
  } catch (const std::out_of_range& e) {
    throw UsageError(e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vitprobe: ViT inference with activation tracing and interpretability maps"};
  app.require_subcommand(1);

  std::string weights, image, out, pgm, graph_path;
  std::size_t layer = 12, head = 0, patch = 0, top_k = 0, iterations = 0, capacity = 32;
  std::uint64_t seed = 0;
  int port = 8080;
  std::string host = "127.0.0.1", static_dir = VITPROBE_WEB_DIR;

  auto add_weights = [&](CLI::App* c) {
    c->add_option("--weights", weights, "weight manifest (JSON); the blob is resolved next to it")
        ->envname("VITPROBE_WEIGHTS")
        ->required();
  };

  auto* classify = app.add_subcommand("classify", "print class probabilities, highest first");
  add_weights(classify);
  classify->add_option("--image", image, "PNG, JPEG or .rgb8 image")->required();
  classify->add_option("--top-k", top_k, "number of classes to print (default: all)");

  auto* similarity = app.add_subcommand("similarity", "cosine-similarity heatmap of one token against all patches");
  add_weights(similarity);
  similarity->add_option("--image", image)->required();
  similarity->add_option("--layer", layer, "0 = embedding output, 1..L = block output")->capture_default_str();
  similarity->add_option("--patch", patch, "reference token index (0 = CLS)")->capture_default_str();
  similarity->add_option("--out", out, "output JSON path (default stdout)");
  similarity->add_option("--pgm", pgm, "also write the normalised grid as 8-bit PGM");

  auto* attention = app.add_subcommand("attention", "attention-row heatmap for one head");
  add_weights(attention);
  attention->add_option("--image", image)->required();
  attention->add_option("--layer", layer, "block 1..L")->capture_default_str();
  attention->add_option("--head", head)->capture_default_str();
  attention->add_option("--patch", patch, "query token index (0 = CLS)")->capture_default_str();
  attention->add_option("--out", out, "output JSON path (default stdout)");
  attention->add_option("--pgm", pgm, "also write the normalised grid as 8-bit PGM");

  auto* probe = app.add_subcommand("probe", "classify an arbitrary token of the last block");
  add_weights(probe);
  probe->add_option("--image", image)->required();
  probe->add_option("--patch", patch, "token index (0 = CLS)")->capture_default_str();

  auto* layout_cmd = app.add_subcommand("layout", "run the knowledge-graph force layout");
  layout_cmd->add_option("--graph", graph_path, "graph JSON (default: shipped knowledge graph)");
  layout_cmd->add_option("--seed", seed)->capture_default_str();
  layout_cmd->add_option("--iterations", iterations, "simulation steps (default from layout params)");
  layout_cmd->add_option("--out", out, "output JSON path (default stdout)");

  auto* serve = app.add_subcommand("serve", "start the HTTP service");
  serve->add_option("--weights", weights, "weight manifest (JSON)")->envname("VITPROBE_WEIGHTS");
  serve->add_option("--port", port)->envname("VITPROBE_PORT")->capture_default_str();
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--capacity", capacity, "session capacity (LRU)")->capture_default_str();
  serve->add_option("--static", static_dir, "web UI directory")->capture_default_str();
  serve->add_option("--graph", graph_path, "knowledge graph JSON");

  auto* make_weights = app.add_subcommand("make-weights", "write a randomly initialised weight container");
  std::string config_name = "vit-b16";
  make_weights->add_option("--config", config_name, "vit-b16 or tiny")->check(CLI::IsMember({"vit-b16", "tiny"}))
      ->capture_default_str();
  make_weights->add_option("--seed", seed)->capture_default_str();
  make_weights->add_option("--out", out, "manifest path; the blob is written alongside as <stem>.bin")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version come through here with code 0
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*classify) {
      const auto w = load_weights(weights);
      const auto trace = run_image(w, image);
      const auto labels = class_labels(w);
      std::cout << "predicted: " << labels[argmax(trace.probs.data())] << "\n";
      print_probs(trace.probs, labels, top_k ? top_k : labels.size());
    } else if (*similarity) {
      const auto w = load_weights(weights);
      const auto trace = run_image(w, image);
      emit_grid(index_guard([&] { return similarity_map(trace, layer, patch); }), out, pgm);
    } else if (*attention) {
      const auto w = load_weights(weights);
      const auto trace = run_image(w, image);
      emit_grid(index_guard([&] { return attention_map(trace, layer, head, patch); }), out, pgm);
    } else if (*probe) {
      const auto w = load_weights(weights);
      const auto trace = run_image(w, image);
      const auto c = index_guard([&] { return patch_probe(trace, w, patch); });
      const auto labels = class_labels(w);
      std::cout << "patch " << patch << "\n";
      for (std::size_t i = 0; i < labels.size(); ++i) std::cout << labels[i] << " " << fmt9(c.probs[i]) << "\n";
    } else if (*layout_cmd) {
      const auto graph = read_graph(graph_path.empty() ? default_graph() : fs::path(graph_path));
      LayoutParams params;
      const auto state = layout(graph, seed, iterations ? iterations : params.iterations, params);
      const auto text = layout_to_json(graph, state, seed).dump(2) + "\n";
      if (out.empty() || out == "-")
        std::cout << text;
      else
        write_text(out, text);
    } else if (*serve) {
      std::shared_ptr<const ViTWeights> w;
      if (!weights.empty()) {
        w = std::make_shared<const ViTWeights>(load_weights(weights));
      } else {
        std::cerr << "warning: no weights given; session endpoints will answer 503\n";
      }
      ServiceOptions opts;
      opts.session_capacity = capacity;
      Service service(w, read_graph(graph_path.empty() ? default_graph() : fs::path(graph_path)), opts);
      httplib::Server server;
      service.mount(server, static_dir);
      std::cerr << "listening on http://" << host << ":" << port << "\n";
      if (!server.listen(host, port)) {
        std::cerr << "error: cannot listen on " << host << ":" << port << "\n";
        return 1;
      }
    } else if (*make_weights) {
      const auto cfg = config_name == "tiny" ? tiny_config() : vit_b16();
      auto w = random_weights(cfg, seed);
      if (cfg.n_classes == 10) w.labels = cifar10_labels();
      const fs::path manifest(out);
      auto blob = manifest;
      blob.replace_extension(".bin");
      if (manifest.has_parent_path()) fs::create_directories(manifest.parent_path());
      save_weights(w, manifest, blob);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
