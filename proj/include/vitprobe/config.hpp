#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace vitprobe {

// Thrown when weights, manifests or configs disagree with what the model needs.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ViTConfig {
  std::size_t image_h = 224;
  std::size_t image_w = 224;
  std::size_t channels = 3;
  std::size_t patch = 16;
  std::size_t embed_dim = 768;
  std::size_t n_blocks = 12;
  std::size_t n_heads = 12;
  std::size_t mlp_hidden = 3072;
  std::size_t n_classes = 10;

  std::size_t grid_h() const { return image_h / patch; }
  std::size_t grid_w() const { return image_w / patch; }
  std::size_t n_patches() const { return grid_h() * grid_w(); }
  std::size_t n_tokens() const { return n_patches() + 1; }
  std::size_t head_dim() const { return embed_dim / n_heads; }
  std::size_t patch_dim() const { return patch * patch * channels; }

  void validate() const {
    const std::initializer_list<std::pair<const char*, std::size_t>> fields = {
        {"image_h", image_h},     {"image_w", image_w}, {"channels", channels},
        {"patch", patch},         {"embed_dim", embed_dim}, {"n_blocks", n_blocks},
        {"n_heads", n_heads},     {"mlp_hidden", mlp_hidden}, {"n_classes", n_classes}};
    for (auto [name, v] : fields) {
      if (v == 0) throw ValidationError(std::string("config field ") + name + " must be positive");
    }
    if (image_h % patch != 0 || image_w % patch != 0)
      throw ValidationError("image extents must be multiples of the patch size");
    if (embed_dim % n_heads != 0) throw ValidationError("embed_dim must be divisible by n_heads");
  }

  friend bool operator==(const ViTConfig&, const ViTConfig&) = default;
};

// ViT-B/16 with a 10-way head.
inline ViTConfig vit_b16() { return ViTConfig{}; }

// 4 patches, D=8, 2 blocks, 2 heads, 3 classes. Used by tests and oracles.
inline ViTConfig tiny_config() {
  return ViTConfig{.image_h = 4, .image_w = 4, .channels = 3, .patch = 2, .embed_dim = 8,
                   .n_blocks = 2, .n_heads = 2, .mlp_hidden = 16, .n_classes = 3};
}

inline std::vector<std::string> cifar10_labels() {
  return {"airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"};
}

}  // namespace vitprobe
