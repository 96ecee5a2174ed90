#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "reference_vit.hpp"
#include "vitprobe/model.hpp"

using namespace vitprobe;

namespace {

Tensor random_image(const ViTConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  Tensor img({cfg.image_h, cfg.image_w, cfg.channels});
  for (auto& v : img.data()) v = d(rng);
  return img;
}

double rel_err(double got, double want) { return std::fabs(got - want) / std::max(std::fabs(want), 1e-30); }

// Patch-embedding-only weights for full-size configs.
ViTWeights patch_only(const ViTConfig& cfg) {
  ViTWeights w;
  w.config = cfg;
  w.patch_kernel = Tensor({cfg.embed_dim, cfg.patch, cfg.patch, cfg.channels});
  w.patch_bias = Tensor({cfg.embed_dim});
  return w;
}

}  // namespace

TEST(PatchEmbedTest, ZeroKernelsGiveBias) {
  auto w = patch_only(vit_b16());
  for (std::size_t k = 0; k < 768; ++k) w.patch_bias[k] = static_cast<float>(k) * 0.01f;
  const Tensor out = patch_embed(random_image(w.config, 1), w);
  ASSERT_EQ(out.shape(), (Shape{196, 768}));
  for (std::size_t n = 0; n < 196; ++n)
    for (std::size_t k = 0; k < 768; ++k) ASSERT_EQ(out.at(n, k), w.patch_bias[k]);
}

TEST(PatchEmbedTest, MatchesDirectConvolution) {
  const ViTConfig cfg{.image_h = 12, .image_w = 8, .channels = 3, .patch = 4, .embed_dim = 5,
                      .n_blocks = 1, .n_heads = 1, .mlp_hidden = 4, .n_classes = 2};
  const auto w = random_weights(cfg, 11, 0.3f);
  const Tensor img = random_image(cfg, 12);
  const Tensor out = patch_embed(img, w);
  ASSERT_EQ(out.shape(), (Shape{6, 5}));
  const std::size_t P = 4, gw = 2;
  for (std::size_t n = 0; n < 6; ++n) {
    for (std::size_t k = 0; k < 5; ++k) {
      double s = w.patch_bias[k];
      for (std::size_t y = 0; y < P; ++y)
        for (std::size_t x = 0; x < P; ++x)
          for (std::size_t c = 0; c < 3; ++c)
            s += img[(((n / gw) * P + y) * 8 + (n % gw) * P + x) * 3 + c] * w.patch_kernel[((k * P + y) * P + x) * 3 + c];
      EXPECT_NEAR(out.at(n, k), s, 1e-5);
    }
  }
}

TEST(PatchEmbedTest, RejectsWrongImageShape) {
  const auto w = patch_only(vit_b16());
  EXPECT_THROW(patch_embed(Tensor({224, 224, 1}), w), DimensionError);
}

TEST(AssembleEmbeddingTest, ZeroClsAndPositions) {
  const auto cfg = tiny_config();
  auto w = zero_weights(cfg);
  std::mt19937 rng(3);
  std::normal_distribution<float> d;
  Tensor patches({4, 8});
  for (auto& v : patches.data()) v = d(rng);
  const Tensor z = assemble_embedding(patches, w);
  ASSERT_EQ(z.shape(), (Shape{5, 8}));
  for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(z.at(0, j), 0.0f);
  for (std::size_t t = 1; t < 5; ++t)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(z.at(t, j), patches.at(t - 1, j));
}

TEST(AssembleEmbeddingTest, RowwiseSum) {
  const auto cfg = tiny_config();
  const auto w = random_weights(cfg, 5);
  std::mt19937 rng(4);
  std::normal_distribution<float> d;
  Tensor patches({4, 8});
  for (auto& v : patches.data()) v = d(rng);
  const Tensor z = assemble_embedding(patches, w);
  for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(z.at(0, j), w.cls_token[j] + w.pos_embed.at(0, j), 1e-7);
  for (std::size_t t = 1; t < 5; ++t)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(z.at(t, j), patches.at(t - 1, j) + w.pos_embed.at(t, j), 1e-7);

  auto no_pos = w;
  no_pos.pos_embed = Tensor(w.pos_embed.shape());
  const Tensor z2 = assemble_embedding(patches, no_pos);
  for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(z2.at(0, j), w.cls_token[j]);
}

TEST(AttentionTest, ZeroQueryKeyGivesUniformRows) {
  auto cfg = vit_b16();
  cfg.n_blocks = 1;
  // Only the attention weights of block 0 matter here.
  BlockWeights b;
  const std::size_t d = cfg.embed_dim;
  b.wq = Tensor({d, d});
  b.bq = Tensor({d});
  b.wk = Tensor({d, d});
  b.bk = Tensor({d});
  std::mt19937 rng(9);
  std::normal_distribution<float> nd(0.0f, 0.02f);
  b.wv = Tensor({d, d});
  for (auto& v : b.wv.data()) v = nd(rng);
  b.bv = Tensor({d});
  b.wo = Tensor({d, d});
  b.bo = Tensor({d});
  Tensor x({197, d});
  for (auto& v : x.data()) v = nd(rng);
  const auto r = multi_head_attention(x, b, cfg);
  ASSERT_EQ(r.attention.shape(), (Shape{12, 197, 197}));
  for (float v : r.attention.data()) ASSERT_FLOAT_EQ(v, 1.0f / 197.0f);
}

TEST(AttentionTest, RowsSumToOne) {
  const auto cfg = tiny_config();
  const auto w = random_weights(cfg, 21, 0.8f);
  std::mt19937 rng(22);
  std::normal_distribution<float> nd;
  Tensor x({5, 8});
  for (auto& v : x.data()) v = nd(rng);
  const auto r = multi_head_attention(x, w.blocks[0], cfg);
  for (std::size_t row = 0; row < 2 * 5; ++row) {
    double s = 0;
    for (std::size_t j = 0; j < 5; ++j) {
      const float a = r.attention[row * 5 + j];
      ASSERT_GE(a, 0.0f);
      s += a;
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

// One head, two tokens, D = 4, projections chosen so every step can be
// written out by hand.
TEST(AttentionTest, OneHeadToyMatchesHandOracle) {
  const ViTConfig cfg{.image_h = 1, .image_w = 2, .channels = 1, .patch = 1, .embed_dim = 4,
                      .n_blocks = 1, .n_heads = 1, .mlp_hidden = 4, .n_classes = 2};
  BlockWeights b;
  auto diag = [](float s) {
    Tensor t({4, 4});
    for (std::size_t i = 0; i < 4; ++i) t.at(i, i) = s;
    return t;
  };
  b.wq = diag(1.0f);
  b.bq = Tensor({4});
  b.wk = diag(2.0f);
  b.bk = Tensor({4}, {0.5f, 0, 0, 0});
  b.wv = diag(1.0f);
  b.bv = Tensor({4}, {0, 0, 0, 1.0f});
  b.wo = diag(1.0f);
  b.bo = Tensor({4}, {0.25f, 0, 0, 0});
  const Tensor x({2, 4}, {1, 0, 0, 0, 0, 1, 0, 0});
  const auto r = multi_head_attention(x, b, cfg);

  // Q = x; K rows = 2x + [0.5,0,0,0]: k0 = [2.5,0,0,0], k1 = [0.5,2,0,0]
  // scores / sqrt(4): row0 = [2.5, 0.5]/2, row1 = [0, 2]/2
  auto sm2 = [](double a, double c) {
    const double e0 = std::exp(a), e1 = std::exp(c);
    return std::pair{e0 / (e0 + e1), e1 / (e0 + e1)};
  };
  const auto [a00, a01] = sm2(1.25, 0.25);
  const auto [a10, a11] = sm2(0.0, 1.0);
  EXPECT_NEAR(r.attention[0], a00, 1e-6);
  EXPECT_NEAR(r.attention[1], a01, 1e-6);
  EXPECT_NEAR(r.attention[2], a10, 1e-6);
  EXPECT_NEAR(r.attention[3], a11, 1e-6);
  // V rows: v0 = [1,0,0,1], v1 = [0,1,0,1]; out = A V + [0.25,0,0,0]
  const double want[2][4] = {{a00 + 0.25, a01, 0, 1}, {a10 + 0.25, a11, 0, 1}};
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(r.out.at(i, j), want[i][j], 1e-6);
}

TEST(EncoderBlockTest, ZeroWeightsAreIdentity) {
  const auto cfg = vit_b16();
  const auto zeros = zero_weights(ViTConfig{.image_h = 224, .image_w = 224, .channels = 3, .patch = 16,
                                            .embed_dim = 768, .n_blocks = 1, .n_heads = 12, .mlp_hidden = 3072,
                                            .n_classes = 10});
  std::mt19937 rng(31);
  std::normal_distribution<float> nd;
  Tensor z({197, 768});
  for (auto& v : z.data()) v = nd(rng);
  const auto t = encoder_block(z, zeros.blocks[0], cfg);
  EXPECT_EQ(t.z_prime, z);
  EXPECT_EQ(t.z, z);
  EXPECT_EQ(t.z.shape(), (Shape{197, 768}));
}

TEST(EncoderBlockTest, MatchesReferenceOnTinyConfig) {
  const auto cfg = tiny_config();
  const auto w = random_weights(cfg, 41, 0.4f);
  const Tensor img = random_image(cfg, 42);
  const auto ref = reference::forward<float>(img, w);
  const auto z0 = assemble_embedding(patch_embed(img, w), w);
  const auto t = encoder_block(z0, w.blocks[0], cfg);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_LT(rel_err(t.z.at(i, j), ref.z[0][i][j]), 1e-5);
}

TEST(ForwardTest, TinyConfigMatchesReference) {
  const auto cfg = tiny_config();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto w = random_weights(cfg, seed, 0.4f);
    const Tensor img = random_image(cfg, seed + 1000);
    const auto trace = forward(img, w);
    const auto ref = reference::forward<float>(img, w);
    for (std::size_t l = 0; l < 2; ++l)
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 8; ++j) ASSERT_LT(rel_err(trace.blocks[l].z.at(i, j), ref.z[l][i][j]), 1e-5);
    for (std::size_t c = 0; c < 3; ++c) {
      ASSERT_LT(rel_err(trace.logits[c], ref.logits[c]), 1e-5);
      ASSERT_LT(rel_err(trace.probs[c], ref.probs[c]), 1e-5);
    }
  }
}

// Against double storage the float32 rounding of O(1) activations shows up
// as absolute error wherever a result cancels towards zero, so the bound
// is relative to max(|want|, 1).
TEST(ForwardTest, TinyConfigCloseToDoubleReference) {
  const auto cfg = tiny_config();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto w = random_weights(cfg, seed, 0.4f);
    const Tensor img = random_image(cfg, seed + 1000);
    const auto trace = forward(img, w);
    const auto ref = reference::forward<double>(img, w);
    auto err = [](double got, double want) { return std::fabs(got - want) / std::max(std::fabs(want), 1.0); };
    for (std::size_t l = 0; l < 2; ++l)
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 8; ++j) ASSERT_LT(err(trace.blocks[l].z.at(i, j), ref.z[l][i][j]), 1e-5);
    for (std::size_t c = 0; c < 3; ++c) ASSERT_LT(err(trace.probs[c], ref.probs[c]), 1e-5);
  }
}

TEST(ForwardTest, DeterministicAndShapes) {
  const auto cfg = tiny_config();
  const auto w = random_weights(cfg, 7);
  const Tensor img = random_image(cfg, 8);
  const auto a = forward(img, w);
  const auto b = forward(img, w);
  EXPECT_EQ(a.z0, b.z0);
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_EQ(a.blocks[l].attention, b.blocks[l].attention);
    EXPECT_EQ(a.blocks[l].z, b.blocks[l].z);
  }
  EXPECT_EQ(a.probs, b.probs);
  EXPECT_EQ(a.patches.shape(), (Shape{4, 8}));
  EXPECT_EQ(a.blocks[0].q.shape(), (Shape{2, 5, 4}));
  EXPECT_EQ(a.blocks[0].mlp_hidden_act.shape(), (Shape{5, 16}));
  EXPECT_EQ(a.y.shape(), (Shape{1, 8}));
  EXPECT_EQ(a.logits.shape(), (Shape{1, 3}));
}

TEST(ForwardTest, ValidatesWeightsBeforeCompute) {
  auto w = random_weights(tiny_config(), 1);
  w.blocks[1].mlp_out_b = Tensor({7});
  EXPECT_THROW(forward(random_image(w.config, 1), w), ValidationError);
  w = random_weights(tiny_config(), 1);
  w.blocks.pop_back();
  EXPECT_THROW(forward(random_image(w.config, 1), w), ValidationError);
}

TEST(ClassifyHeadTest, ProbsSumToOne) {
  const auto w = random_weights(tiny_config(), 3);
  const auto c = classify_head(Tensor({1, 8}, {1, -2, 3, 0, 0.5f, 1, -1, 2}), w);
  double s = 0;
  for (float p : c.probs.data()) s += p;
  EXPECT_NEAR(s, 1.0, 1e-6);
}

TEST(ClassifyHeadTest, ZeroTokenUsesFinalLnBeta) {
  auto w = random_weights(tiny_config(), 4);
  const auto c = classify_head(Tensor({1, 8}), w);
  for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(c.y[j], w.final_ln_beta[j]);
  for (std::size_t k = 0; k < 3; ++k) {
    double want = w.head_bias[k];
    for (std::size_t j = 0; j < 8; ++j) want += static_cast<double>(w.final_ln_beta[j]) * w.head_weight.at(j, k);
    EXPECT_NEAR(c.logits[k], want, 1e-6);
  }
}

TEST(ClassifyHeadTest, RowZeroOfLastBlockReproducesTraceBitwise) {
  const auto w = random_weights(tiny_config(), 5);
  const auto trace = forward(random_image(w.config, 6), w);
  const auto c = classify_head(token_row(trace.blocks.back().z, 0), w);
  EXPECT_EQ(c.logits, trace.logits);
  EXPECT_EQ(c.probs, trace.probs);
  EXPECT_EQ(c.y, trace.y);
}
