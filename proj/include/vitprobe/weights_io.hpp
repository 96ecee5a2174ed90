#pragma once

// On-disk weight container: a UTF-8 JSON manifest plus one raw blob of
// little-endian float32 values, row-major, entries sorted by name.
//
//   {
//     "format_version": 1,
//     "blob": "model.bin",
//     "blob_bytes": 12345,
//     "config": { "image_h": 224, ... },
//     "labels": ["airplane", ...],
//     "entries": [
//       {"name": "block.0.attn.bk", "shape": [768], "byte_offset": 0,
//        "byte_length": 3072, "checksum": "a1b2c3d4e5f60718"}, ...
//     ]
//   }
//
// `checksum` is the 64-bit FNV-1a hash of the entry's blob bytes as 16
// lower-case hex digits.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vitprobe/config.hpp"
#include "vitprobe/weights.hpp"

namespace vitprobe {

inline constexpr int kWeightFormatVersion = 1;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ManifestEntry {
  std::string name;
  Shape shape;
  std::uint64_t byte_offset = 0;
  std::uint64_t byte_length = 0;
  std::uint64_t checksum = 0;
};

struct WeightManifest {
  int format_version = kWeightFormatVersion;
  std::string blob;
  std::uint64_t blob_bytes = 0;
  ViTConfig config;
  std::vector<std::string> labels;
  std::vector<ManifestEntry> entries;
};

inline std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace detail {

inline nlohmann::ordered_json config_to_json(const ViTConfig& c) {
  return {{"image_h", c.image_h},     {"image_w", c.image_w},   {"channels", c.channels},
          {"patch", c.patch},         {"embed_dim", c.embed_dim}, {"n_blocks", c.n_blocks},
          {"n_heads", c.n_heads},     {"mlp_hidden", c.mlp_hidden}, {"n_classes", c.n_classes}};
}

inline ViTConfig config_from_json(const nlohmann::json& j) {
  ViTConfig c;
  auto get = [&](const char* key, std::size_t& field) {
    if (!j.contains(key)) throw ValidationError(std::string("manifest config missing ") + key);
    field = j.at(key).get<std::size_t>();
  };
  get("image_h", c.image_h);
  get("image_w", c.image_w);
  get("channels", c.channels);
  get("patch", c.patch);
  get("embed_dim", c.embed_dim);
  get("n_blocks", c.n_blocks);
  get("n_heads", c.n_heads);
  get("mlp_hidden", c.mlp_hidden);
  get("n_classes", c.n_classes);
  c.validate();
  return c;
}

inline void float_to_le(float v, unsigned char* out) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out[i] = static_cast<unsigned char>(bits >> (8 * i));
}

inline float float_from_le(const unsigned char* in) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(in[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path.string());
  return bytes;
}

inline void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace detail

inline WeightManifest parse_manifest(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("manifest is not valid JSON: ") + e.what());
  }
  try {
    WeightManifest m;
    m.format_version = j.at("format_version").get<int>();
    m.blob = j.value("blob", std::string{});
    m.blob_bytes = j.at("blob_bytes").get<std::uint64_t>();
    m.config = detail::config_from_json(j.at("config"));
    if (j.contains("labels")) m.labels = j.at("labels").get<std::vector<std::string>>();
    for (const auto& e : j.at("entries")) {
      ManifestEntry me;
      me.name = e.at("name").get<std::string>();
      me.shape = e.at("shape").get<Shape>();
      me.byte_offset = e.at("byte_offset").get<std::uint64_t>();
      me.byte_length = e.at("byte_length").get<std::uint64_t>();
      const auto sum = e.at("checksum").get<std::string>();
      std::size_t used = 0;
      me.checksum = std::stoull(sum, &used, 16);
      if (used != sum.size() || sum.size() != 16) throw ValidationError("malformed checksum for " + me.name);
      m.entries.push_back(std::move(me));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed manifest: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw ValidationError("malformed checksum in manifest");
  } catch (const std::out_of_range&) {
    throw ValidationError("malformed checksum in manifest");
  }
}

inline std::string manifest_to_json(const WeightManifest& m) {
  nlohmann::ordered_json j;
  j["format_version"] = m.format_version;
  j["blob"] = m.blob;
  j["blob_bytes"] = m.blob_bytes;
  j["config"] = detail::config_to_json(m.config);
  j["labels"] = m.labels;
  auto& entries = j["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : m.entries) {
    entries.push_back({{"name", e.name},
                       {"shape", e.shape},
                       {"byte_offset", e.byte_offset},
                       {"byte_length", e.byte_length},
                       {"checksum", hex64(e.checksum)}});
  }
  return j.dump(2) + "\n";
}

// Structural checks that need no blob bytes: names cover the parameter set
// exactly, shapes and lengths match the config, ranges fit and are disjoint.
inline void validate_manifest(const WeightManifest& m) {
  if (m.format_version != kWeightFormatVersion)
    throw ValidationError("unsupported format_version " + std::to_string(m.format_version));
  m.config.validate();
  if (!m.labels.empty() && m.labels.size() != m.config.n_classes)
    throw ValidationError("label count " + std::to_string(m.labels.size()) + " does not match n_classes " +
                          std::to_string(m.config.n_classes));

  const auto shapes = expected_shapes(m.config);
  std::map<std::string, const ManifestEntry*> by_name;
  for (const auto& e : m.entries) {
    if (!by_name.emplace(e.name, &e).second) throw ValidationError("duplicate entry " + e.name);
    if (!shapes.contains(e.name)) throw ValidationError("unexpected entry " + e.name);
  }
  for (const auto& [name, shape] : shapes)
    if (!by_name.contains(name)) throw ValidationError("missing entry " + name);

  for (const auto& e : m.entries) {
    const Shape& want = shapes.at(e.name);
    if (e.shape != want)
      throw ValidationError("shape mismatch for " + e.name + ": expected " + shape_str(want) + ", got " +
                            shape_str(e.shape));
    const std::uint64_t numel = shape_numel(want);
    if (e.byte_length != numel * 4)
      throw ValidationError("entry " + e.name + " byte_length " + std::to_string(e.byte_length) +
                            " does not match " + std::to_string(numel) + " float32 values");
    if (e.byte_offset > m.blob_bytes || e.byte_length > m.blob_bytes - e.byte_offset)
      throw ValidationError("entry " + e.name + " byte range exceeds blob");
  }

  std::vector<const ManifestEntry*> ranges;
  for (const auto& e : m.entries) ranges.push_back(&e);
  std::sort(ranges.begin(), ranges.end(), [](auto* a, auto* b) { return a->byte_offset < b->byte_offset; });
  for (std::size_t i = 1; i < ranges.size(); ++i)
    if (ranges[i - 1]->byte_offset + ranges[i - 1]->byte_length > ranges[i]->byte_offset)
      throw ValidationError("entries " + ranges[i - 1]->name + " and " + ranges[i]->name + " overlap");
}

// Materialises and validates weights from a parsed manifest and blob bytes.
inline ViTWeights weights_from_container(const WeightManifest& m, std::span<const unsigned char> blob) {
  validate_manifest(m);
  if (blob.size() != m.blob_bytes)
    throw ValidationError("blob is " + std::to_string(blob.size()) + " bytes, manifest says " +
                          std::to_string(m.blob_bytes));

  std::map<std::string, const ManifestEntry*> by_name;
  for (const auto& e : m.entries) by_name.emplace(e.name, &e);

  ViTWeights w;
  w.config = m.config;
  w.labels = m.labels;
  w.blocks.resize(m.config.n_blocks);
  for_each_parameter(w, [&](const std::string& name, Tensor& t) {
    const ManifestEntry& e = *by_name.at(name);
    auto bytes = blob.subspan(e.byte_offset, e.byte_length);
    if (fnv1a64(bytes) != e.checksum) throw ValidationError("checksum mismatch for " + name);
    std::vector<float> data(e.byte_length / 4);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = detail::float_from_le(bytes.data() + 4 * i);
    t = Tensor(e.shape, std::move(data));
  });
  validate(w);
  return w;
}

inline ViTWeights load_weights(const std::filesystem::path& manifest_path, const std::filesystem::path& blob_path) {
  const auto text = detail::read_file(manifest_path);
  const auto manifest = parse_manifest(std::string(text.begin(), text.end()));
  validate_manifest(manifest);
  const auto blob = detail::read_file(blob_path);
  return weights_from_container(manifest, blob);
}

// Resolves the blob from the manifest's "blob" field, relative to the manifest.
inline ViTWeights load_weights(const std::filesystem::path& manifest_path) {
  const auto text = detail::read_file(manifest_path);
  const auto manifest = parse_manifest(std::string(text.begin(), text.end()));
  if (manifest.blob.empty()) throw ValidationError("manifest " + manifest_path.string() + " names no blob");
  validate_manifest(manifest);
  const auto blob = detail::read_file(manifest_path.parent_path() / manifest.blob);
  return weights_from_container(manifest, blob);
}

// Builds manifest and blob in memory. Entries and blob layout follow name order.
inline std::pair<WeightManifest, std::vector<unsigned char>> weights_to_container(const ViTWeights& w,
                                                                                  std::string blob_name) {
  validate(w);
  std::map<std::string, const Tensor*> sorted;
  for_each_parameter(w, [&](const std::string& name, const Tensor& t) { sorted.emplace(name, &t); });

  WeightManifest m;
  m.blob = std::move(blob_name);
  m.config = w.config;
  m.labels = w.labels;
  std::vector<unsigned char> blob;
  for (const auto& [name, t] : sorted) {
    ManifestEntry e;
    e.name = name;
    e.shape = t->shape();
    e.byte_offset = blob.size();
    e.byte_length = t->size() * 4;
    blob.resize(blob.size() + e.byte_length);
    unsigned char* out = blob.data() + e.byte_offset;
    for (std::size_t i = 0; i < t->size(); ++i) detail::float_to_le((*t)[i], out + 4 * i);
    e.checksum = fnv1a64(std::span<const unsigned char>(out, e.byte_length));
    m.entries.push_back(std::move(e));
  }
  m.blob_bytes = blob.size();
  return {std::move(m), std::move(blob)};
}

inline void save_weights(const ViTWeights& w, const std::filesystem::path& manifest_path,
                         const std::filesystem::path& blob_path) {
  auto [manifest, blob] = weights_to_container(w, blob_path.filename().string());
  detail::write_file(blob_path, blob);
  const auto text = manifest_to_json(manifest);
  detail::write_file(manifest_path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

}  // namespace vitprobe
