#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "ssm/errors.hpp"
#include "ssm/matching/model.hpp"
#include "ssm/set_model/checkpoint.hpp"
#include "ssm/set_model/encoder.hpp"
#include "ssm/set_model/feature_set.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace ssm;

namespace {

ModelConfig small_config(std::size_t d, std::size_t heads) {
  ModelConfig cfg = ModelConfig::with_width(d, d, heads, 1, Variant::Attention);
  cfg.ffn_hidden = 2 * d;
  return cfg;
}

TEST(FeatureSet, RejectsEmptySet) { EXPECT_THROW(FeatureSet(Matrix(0, 3)), PreconditionError); }

TEST(FeatureSet, RejectsLabelCountMismatch) {
  EXPECT_THROW(FeatureSet(Matrix(3, 2), {1, 2}), PreconditionError);
  EXPECT_NO_THROW(FeatureSet(Matrix(3, 2), {1, 2, 3}));
}

TEST(FeatureSet, PermutedMovesLabelsWithItems) {
  const FeatureSet s(Matrix{{1, 0}, {2, 0}, {3, 0}}, {10, 20, 30}, 7);
  const std::vector<std::size_t> order{2, 0, 1};
  const FeatureSet p = s.permuted(order);
  EXPECT_EQ(p.items(), (Matrix{{3, 0}, {1, 0}, {2, 0}}));
  EXPECT_EQ(p.labels(), (std::vector<int>{30, 10, 20}));
  EXPECT_EQ(p.set_id(), 7u);
}

TEST(FeatureSet, UnionConcatenatesItemsAndLabels) {
  const FeatureSet a(Matrix{{1}}, {4}), b(Matrix{{2}, {3}}, {5, 6});
  const FeatureSet u = union_of(a, b, 9);
  EXPECT_EQ(u.items(), (Matrix{{1}, {2}, {3}}));
  EXPECT_EQ(u.labels(), (std::vector<int>{4, 5, 6}));
}

TEST(ModelConfig, RejectsHeadWidthMismatch) {
  ModelConfig cfg = small_config(8, 2);
  cfg.d_g = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config(8, 2);
  cfg.heads = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_NO_THROW(small_config(8, 2).validate());
}

TEST(InputProject, IdentityLeavesItemsUnchanged) {
  SeededRng rng(1);
  const FeatureSet raw = gen::feature_set(rng, 4, 5);
  EXPECT_EQ(input_project(raw, GradSlot(Matrix::identity(5))).items(), raw.items());
}

TEST(InputProject, CommutesWithPermutation) {
  SeededRng rng(2);
  const FeatureSet raw = gen::feature_set(rng, 5, 4);
  const GradSlot w(gen::uniform(rng, 3, 4));
  const auto order = gen::permutation(rng, 5);
  EXPECT_EQ(input_project(raw.permuted(order), w).items(), select_rows(input_project(raw, w).items(), order));
}

TEST(InputProject, MatchesPerItemProduct) {
  SeededRng rng(3);
  const FeatureSet raw(gen::uniform(rng, 3, 4), {1, 2, 3});
  const GradSlot w(gen::uniform(rng, 2, 4));
  const FeatureSet out = input_project(raw, w);
  EXPECT_LE(oracle::max_abs_diff(oracle::apply_all(oracle::rows_of(w.value), oracle::rows_of(raw.items())), out.items()),
            1e-15);
  EXPECT_EQ(out.labels(), raw.labels());
}

TEST(InputProject, WidthMismatchThrows) {
  SeededRng rng(4);
  EXPECT_THROW(input_project(gen::feature_set(rng, 2, 3), GradSlot(Matrix(2, 4))), DimensionError);
}

TEST(Ffn, IdentityWeightsPassNonNegativeInput) {
  FfnParams p;
  p.w1 = GradSlot(Matrix::identity(3));
  p.b1 = GradSlot(Matrix(1, 3));
  p.w2 = GradSlot(Matrix::identity(3));
  p.b2 = GradSlot(Matrix(1, 3));
  const FeatureSet x(Matrix{{0, 1, 2}, {3.5, 0.25, 0}});
  EXPECT_EQ(ffn(x, p).items(), x.items());
}

TEST(Ffn, CommutesWithPermutation) {
  SeededRng rng(5);
  const FfnParams p = init_ffn(rng, 6, 12);
  const FeatureSet x = gen::feature_set(rng, 5, 6);
  const auto order = gen::permutation(rng, 5);
  EXPECT_EQ(ffn(x.permuted(order), p).items(), select_rows(ffn(x, p).items(), order));
}

TEST(Ffn, SingleItemMatchesScalarLoop) {
  SeededRng rng(7);
  FfnParams p = init_ffn(rng, 4, 8);
  p.b1 = GradSlot(gen::uniform(rng, 1, 8));
  p.b2 = GradSlot(gen::uniform(rng, 1, 4));
  const FeatureSet x = gen::feature_set(rng, 1, 4);
  EXPECT_LE(oracle::max_abs_diff(oracle::ffn(p, oracle::rows_of(x.items())), ffn(x, p).items()), 1e-13);
}

TEST(Encoder, SingletonAttentionIsForced) {
  SeededRng rng(8);
  const ModelConfig cfg = small_config(4, 2);
  const EncoderParams p = init_encoder(rng, cfg);
  const FeatureSet x = gen::feature_set(rng, 1, 4);
  // With one key the softmax weight is 1: z = x + merge * (V x), out = z + ffn(z).
  const Matrix v = matmul_nt(x.items(), p.value.value);
  const Matrix z = add(x.items(), matmul_nt(v, p.merge.value));
  const Matrix expect = add(z, ffn(FeatureSet(z), p.ffn).items());
  EXPECT_LE(max_abs_diff(encoder(x, p, 2).items(), expect), 1e-14);
}

TEST(Encoder, MatchesNestedLoopAttention) {
  SeededRng rng(9);
  const ModelConfig cfg = small_config(4, 2);
  EncoderParams p = init_encoder(rng, cfg);
  p.ffn.b1 = GradSlot(gen::uniform(rng, 1, cfg.ffn_hidden));
  p.ffn.b2 = GradSlot(gen::uniform(rng, 1, 4));
  const FeatureSet x = gen::feature_set(rng, 3, 4);
  EXPECT_LE(oracle::max_abs_diff(oracle::encoder(p, oracle::rows_of(x.items()), 2), encoder(x, p, 2).items()), 1e-12);
}

TEST(Encoder, MatchesOracleOverRandomShapes) {
  SeededRng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = gen::pick(rng, std::vector<std::size_t>{4, 8, 16});
    const std::size_t h = gen::pick(rng, std::vector<std::size_t>{1, 2, 4});
    const EncoderParams p = init_encoder(rng, small_config(d, h));
    const FeatureSet x = gen::feature_set(rng, gen::between(rng, 1, 6), d);
    EXPECT_LE(oracle::max_abs_diff(oracle::encoder(p, oracle::rows_of(x.items()), h), encoder(x, p, h).items()), 1e-12)
        << "trial " << trial;
  }
}

TEST(Encoder, PermutationEquivariantOverRandomConfigs) {
  SeededRng rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t d = gen::pick(rng, std::vector<std::size_t>{8, 16, 32});
    const std::size_t h = gen::pick(rng, std::vector<std::size_t>{1, 2, 4});
    const std::size_t n = gen::between(rng, 1, 6);
    const EncoderParams p = init_encoder(rng, small_config(d, h));
    const FeatureSet x = gen::feature_set(rng, n, d);
    const auto order = gen::permutation(rng, n);
    const Matrix out = encoder(x, p, h).items();
    const Matrix permuted = encoder(x.permuted(order), p, h).items();
    EXPECT_EQ(permuted.cols(), d);
    EXPECT_LE(max_abs_diff(permuted, select_rows(out, order)), 1e-9) << "trial " << trial;
  }
}

TEST(Encoder, WidthMismatchThrows) {
  SeededRng rng(12);
  const EncoderParams p = init_encoder(rng, small_config(8, 2));
  EXPECT_THROW(encoder(gen::feature_set(rng, 3, 4), p, 2), DimensionError);
}

TEST(Init, WeightsFollowFanInScale) {
  SeededRng rng(13);
  const GradSlot w = init_weight(rng, 200, 100);
  double sum2 = 0.0;
  for (double v : w.value.data()) sum2 += v * v;
  EXPECT_NEAR(sum2 / static_cast<double>(w.value.size()), 1.0 / 100.0, 0.0005);
  EXPECT_EQ(w.grad, Matrix(200, 100));
}

// --- checkpoint ---------------------------------------------------------

TEST(Checkpoint, RoundTripIsExact) {
  for (Variant v : {Variant::Attention, Variant::Affinity, Variant::Baseline}) {
    ModelConfig cfg = ModelConfig::with_width(5, 8, 2, 2, v);
    const ModelParams m = init_model(cfg, 42);
    std::stringstream buf;
    write_checkpoint(buf, m);
    const ModelParams back = read_checkpoint(buf);
    EXPECT_EQ(checkpoint_bytes(back), checkpoint_bytes(m));
    const auto a = m.blocks(), b = back.blocks();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].name, b[i].name);
      EXPECT_EQ(a[i].slot->value, b[i].slot->value);
    }
  }
}

TEST(Checkpoint, UntiedModelRoundTrips) {
  ModelConfig cfg = ModelConfig::with_width(5, 8, 2, 1, Variant::Attention);
  cfg.untie_directions = true;
  const ModelParams m = init_model(cfg, 3);
  std::stringstream buf;
  write_checkpoint(buf, m);
  EXPECT_EQ(checkpoint_bytes(read_checkpoint(buf)), checkpoint_bytes(m));
}

TEST(Checkpoint, StartsWithMagic) {
  const auto bytes = checkpoint_bytes(init_model(ModelConfig::with_width(4, 4, 1, 1, Variant::Affinity), 0));
  ASSERT_GE(bytes.size(), 4u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "SSM1");
}

TEST(Checkpoint, RejectsBadMagicAndTruncation) {
  const auto bytes = checkpoint_bytes(init_model(ModelConfig::with_width(4, 4, 1, 1, Variant::Affinity), 0));
  std::string data(bytes.begin(), bytes.end());
  std::string bad = data;
  bad[0] = 'X';
  std::stringstream b1(bad);
  EXPECT_THROW(read_checkpoint(b1), FormatError);
  std::stringstream b2(data.substr(0, data.size() - 5));
  EXPECT_THROW(read_checkpoint(b2), FormatError);
  std::stringstream b3(data.substr(0, 20));
  EXPECT_THROW(read_checkpoint(b3), FormatError);
}

}  // namespace
