#include <gtest/gtest.h>

#include <filesystem>

#include "colab/attacks.hpp"
#include "colab/classifier.hpp"
#include "colab/diffcore.hpp"
#include "support/fixtures.hpp"

using namespace colab;

TEST(BuildMlp, SameSeedIsBitIdentical) {
  const auto layers = mlp_layers(10, {16, 8}, 3);
  const auto a = build_mlp(layers, 5);
  const auto b = build_mlp(layers, 5);
  EXPECT_EQ(a.params(), b.params());
}

TEST(BuildMlp, DifferentSeedsDiffer) {
  const auto layers = mlp_layers(10, {16}, 3);
  EXPECT_NE(build_mlp(layers, 5).params(), build_mlp(layers, 6).params());
}

TEST(BuildMlp, ParameterCount) {
  const std::vector<LayerSpec> layers{{2, 8, Activation::relu}, {8, 2, Activation::none}};
  EXPECT_EQ(build_mlp(layers, 0).parameter_count(), 42u);
}

TEST(BuildMlp, InitWithinFanInBound) {
  const auto clf = build_mlp(mlp_layers(16, {4}, 2), 9);
  for (double v : clf.params()[0].values()) EXPECT_LE(std::abs(v), 0.25);
  for (double v : clf.params()[2].values()) EXPECT_LE(std::abs(v), 0.5);
}

TEST(BuildMlp, RejectsInvalidDims) {
  EXPECT_THROW(build_mlp({{2, 8, Activation::relu}, {7, 2, Activation::none}}, 0),
               std::invalid_argument);
  EXPECT_THROW(build_mlp({{2, 1, Activation::none}}, 0), std::invalid_argument);
  EXPECT_THROW(build_mlp({{0, 2, Activation::none}}, 0), std::invalid_argument);
  EXPECT_THROW(build_mlp({}, 0), std::invalid_argument);
}

TEST(BuildAffine, IdentityLogits) {
  const auto clf = build_affine(Tensor::matrix(2, 2, {1, 0, 0, 1}), Tensor({2}));
  EXPECT_EQ(forward(clf, Tensor::vector({3, 1})), Tensor::matrix(1, 2, {3, 1}));
}

TEST(BuildAffine, BinaryMarginAndDeepFoolDistance) {
  const auto clf = build_affine(Tensor::matrix(2, 2, {0, 0, 1, 0}), Tensor({2}));
  const auto x = Tensor::matrix(1, 2, {2, 0});
  const auto logits = forward(clf, x);
  EXPECT_EQ(predict(clf, x)[0], 1);
  EXPECT_EQ(logits[1] - logits[0], 2.0);
  const int y[1] = {1};
  const auto df = deepfool_l2(clf, x, y, {});
  EXPECT_NEAR(norm_l2(df.raw.values()), 2.0, 1e-12);
  EXPECT_EQ(df.iterations[0], 1u);
}

TEST(BuildAffine, MatchesDirectArithmetic) {
  const auto W = colab::testing::random_normal({4, 7}, 1);
  const auto b = colab::testing::random_normal({4}, 2);
  const auto clf = build_affine(W, b);
  const auto x = colab::testing::random_tensor({3, 7}, 3);
  const auto logits = forward(clf, x);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      double acc = b[c];
      for (std::size_t i = 0; i < 7; ++i) acc += W.at(c, i) * x.at(r, i);
      EXPECT_NEAR(logits.at(r, c), acc, 1e-12 * std::max(1.0, std::abs(acc)));
    }
  }
}

TEST(BuildAffine, RejectsShapeMismatch) {
  EXPECT_THROW(build_affine(Tensor({2, 3}), Tensor({3})), std::invalid_argument);
  EXPECT_THROW(build_affine(Tensor({6}), Tensor({2})), std::invalid_argument);
}

TEST(Classifier, RejectsNonFiniteParams) {
  Tensor W({2, 2});
  W[1] = std::nan("");
  EXPECT_THROW(build_affine(W, Tensor({2})), std::invalid_argument);
}

TEST(Snapshot, RoundTripsThroughBytesAndFile) {
  const auto clf = build_mlp(mlp_layers(5, {6}, 3), 17);
  const auto snap = ModelSnapshot::of(clf, 12, "best-by-test-PGD10");
  const auto bytes = encode_snapshot(snap);
  ASSERT_GE(bytes.size(), 4u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "COLB");
  const auto back = decode_snapshot(bytes);
  EXPECT_EQ(back.layers, snap.layers);
  EXPECT_EQ(back.params, snap.params);
  EXPECT_EQ(back.epoch, 12);
  EXPECT_EQ(back.tag, "best-by-test-PGD10");

  const auto path = std::filesystem::temp_directory_path() / "colab_models_test.colb";
  save_snapshot(snap, path);
  const auto loaded = load_snapshot(path).to_classifier();
  std::filesystem::remove(path);
  const auto x = colab::testing::random_tensor({2, 5}, 18);
  EXPECT_EQ(forward(loaded, x), forward(clf, x));
}

TEST(Snapshot, RejectsCorruptBytes) {
  const auto snap = ModelSnapshot::of(build_mlp(mlp_layers(3, {}, 2), 1), 0, "t");
  auto bytes = encode_snapshot(snap);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_snapshot(bad_magic), std::runtime_error);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_snapshot(truncated), std::runtime_error);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_snapshot(trailing), std::runtime_error);
  EXPECT_THROW(load_snapshot("/nonexistent/snapshot.colb"), std::runtime_error);
}
