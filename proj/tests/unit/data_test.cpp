#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "colab/data.hpp"
#include "colab/diffcore.hpp"
#include "colab/trainer.hpp"

using namespace colab;

namespace {

constexpr double kEps = 8.0 / 255.0;

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::vector<std::uint8_t> idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                                     std::uint32_t magic = kIdxImageMagic) {
  std::vector<std::uint8_t> out;
  put32(out, magic);
  put32(out, n);
  put32(out, rows);
  put32(out, cols);
  for (std::uint32_t i = 0; i < n * rows * cols; ++i) out.push_back(static_cast<std::uint8_t>(i * 37));
  return out;
}

std::vector<std::uint8_t> idx_labels(std::uint32_t n, std::uint32_t magic = kIdxLabelMagic) {
  std::vector<std::uint8_t> out;
  put32(out, magic);
  put32(out, n);
  for (std::uint32_t i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(i % 10));
  return out;
}

IdxError::Kind idx_error_kind(const std::vector<std::uint8_t>& img,
                              const std::vector<std::uint8_t>& lbl) {
  try {
    parse_idx(img, lbl);
  } catch (const IdxError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "parse_idx accepted malformed input";
  return IdxError::Kind::io;
}

}  // namespace

TEST(Blobs, ZeroNoiseGivesCenters) {
  const auto ds = gen_blobs(3, 6, 4, 0.2, 0.0, 1);
  ASSERT_EQ(ds.size(), 12u);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto c = blob_center(3, 6, 0.2, static_cast<std::size_t>(ds.labels[i]));
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(ds.inputs.at(i, j), c[j]);
  }
}

TEST(Blobs, CentersAreSeparationApartInLinf) {
  for (std::size_t c1 = 0; c1 < 4; ++c1) {
    for (std::size_t c2 = c1 + 1; c2 < 4; ++c2) {
      const auto a = blob_center(4, 5, 0.3, c1);
      const auto b = blob_center(4, 5, 0.3, c2);
      double m = 0.0;
      for (std::size_t j = 0; j < 5; ++j) m = std::max(m, std::abs(a[j] - b[j]));
      EXPECT_NEAR(m, 0.3, 1e-15);
    }
  }
}

TEST(Blobs, RobustBayesClassifierHasPositiveWorstCaseMargin) {
  // Linear rule w = c1 - c0 through the midpoint; the worst l∞ perturbation
  // of size eps reduces |w.x + b| by eps * ||w||_1.
  for (double sigma : {0.0, 0.01, 0.05}) {
    const auto ds = gen_blobs(2, 20, 200, 8 * kEps, sigma, 3);
    const auto c0 = blob_center(2, 20, 8 * kEps, 0);
    const auto c1 = blob_center(2, 20, 8 * kEps, 1);
    std::vector<double> w(20), mid(20);
    for (std::size_t j = 0; j < 20; ++j) {
      w[j] = c1[j] - c0[j];
      mid[j] = 0.5 * (c0[j] + c1[j]);
    }
    const double bias = -dot(w, mid);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const double score = dot(w, ds.inputs.row(i)) + bias;
      const double signed_margin = ds.labels[i] == 1 ? score : -score;
      EXPECT_GT(signed_margin - kEps * norm_l1(w), 0.0) << "sigma " << sigma << " row " << i;
    }
  }
}

TEST(Blobs, SeedDeterminismAndValidation) {
  const auto a = gen_blobs(2, 5, 10, 0.2, 0.1, 7);
  const auto b = gen_blobs(2, 5, 10, 0.2, 0.1, 7);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.inputs, gen_blobs(2, 5, 10, 0.2, 0.1, 8).inputs);
  EXPECT_NO_THROW(a.validate());
  EXPECT_THROW(gen_blobs(2, 0, 10, 0.2, 0.1, 7), std::invalid_argument);
  EXPECT_THROW(gen_blobs(2, 5, 10, 0.0, 0.1, 7), std::invalid_argument);
  EXPECT_THROW(gen_blobs(2, 5, 10, 0.2, -1.0, 7), std::invalid_argument);
}

TEST(Rings, ZeroNoisePointsLieOnTheirRing) {
  const auto ds = gen_rings(20, {1.0, 2.5}, 0.0, 4);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double r = norm_l2(ds.inputs.row(i));
    EXPECT_NEAR(r, ds.labels[i] == 0 ? 1.0 : 2.5, 1e-12);
  }
  EXPECT_EQ(ds.input_dim(), 2u);
}

TEST(Rings, DeterminismAndValidation) {
  EXPECT_EQ(gen_rings(10, {1, 2}, 0.1, 3).inputs, gen_rings(10, {1, 2}, 0.1, 3).inputs);
  EXPECT_THROW(gen_rings(10, {1}, 0.1, 3), std::invalid_argument);
  EXPECT_THROW(gen_rings(10, {2, 1}, 0.1, 3), std::invalid_argument);
}

TEST(Rings, LinearModelFailsWhereMlpSucceeds) {
  const auto train_set = gen_rings(200, {0.5, 1.0}, 0.05, 11);
  const auto test_set = gen_rings(100, {0.5, 1.0}, 0.05, 12);
  TrainConfig cfg;
  cfg.epochs = 80;
  cfg.batch_size = 32;
  cfg.base_lr = 0.05;
  cfg.epoch_probes = false;
  cfg.eval_attack = AttackSpec::none();
  cfg.seed = 1;
  const auto linear = train(cfg, build_mlp(mlp_layers(2, {}, 2), 1), train_set, test_set);
  const auto mlp = train(cfg, build_mlp(mlp_layers(2, {32}, 2), 1), train_set, test_set);
  const double linear_acc = evaluate(linear.model, test_set, AttackSpec::none(), 0);
  const double mlp_acc = evaluate(mlp.model, test_set, AttackSpec::none(), 0);
  EXPECT_LE(linear_acc, 0.75);
  EXPECT_GT(mlp_acc, 0.95);
}

TEST(Idx, AcceptsStandardMagicsAndScalesPixels) {
  auto img = idx_images(3, 2, 2);
  img[16] = 255;
  img[17] = 0;
  const auto ds = parse_idx(img, idx_labels(3));
  EXPECT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.input_dim(), 4u);
  EXPECT_EQ(ds.inputs[0], 1.0);
  EXPECT_EQ(ds.inputs[1], 0.0);
  EXPECT_EQ(ds.labels, (std::vector<int>{0, 1, 2}));
  EXPECT_TRUE(ds.pixel_domain);
  EXPECT_NO_THROW(ds.validate());
}

TEST(Idx, DistinctErrorKinds) {
  EXPECT_EQ(idx_error_kind(idx_images(3, 2, 2, 0x0803u + 1), idx_labels(3)), IdxError::Kind::bad_magic);
  EXPECT_EQ(idx_error_kind(idx_images(3, 2, 2), idx_labels(3, 0x0803u)), IdxError::Kind::bad_magic);
  EXPECT_EQ(idx_error_kind(idx_images(3, 2, 2), idx_labels(2)), IdxError::Kind::count_mismatch);
  auto short_img = idx_images(3, 2, 2);
  short_img.pop_back();
  EXPECT_EQ(idx_error_kind(short_img, idx_labels(3)), IdxError::Kind::truncated);
  auto short_lbl = idx_labels(3);
  short_lbl.pop_back();
  EXPECT_EQ(idx_error_kind(idx_images(3, 2, 2), short_lbl), IdxError::Kind::truncated);
  EXPECT_EQ(idx_error_kind(std::vector<std::uint8_t>{0, 0, 8}, idx_labels(3)), IdxError::Kind::truncated);
}

TEST(Idx, CountMismatchAtMnistScaleHeader) {
  // Headers alone decide the mismatch before any payload is read.
  std::vector<std::uint8_t> img, lbl;
  put32(img, kIdxImageMagic);
  put32(img, 60000);
  put32(img, 28);
  put32(img, 28);
  put32(lbl, kIdxLabelMagic);
  put32(lbl, 59999);
  EXPECT_EQ(idx_error_kind(img, lbl), IdxError::Kind::count_mismatch);
}

TEST(Idx, LoadsFromFilesAndReportsMissing) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto ip = dir / "colab_idx_images", lp = dir / "colab_idx_labels";
  const auto img = idx_images(2, 1, 3);
  const auto lbl = idx_labels(2);
  std::ofstream(ip, std::ios::binary).write(reinterpret_cast<const char*>(img.data()), static_cast<long>(img.size()));
  std::ofstream(lp, std::ios::binary).write(reinterpret_cast<const char*>(lbl.data()), static_cast<long>(lbl.size()));
  const auto ds = load_idx(ip, lp);
  EXPECT_EQ(ds.size(), 2u);
  std::filesystem::remove(ip);
  std::filesystem::remove(lp);
  try {
    load_idx(ip, lp);
    FAIL() << "missing file accepted";
  } catch (const IdxError& e) {
    EXPECT_EQ(e.kind(), IdxError::Kind::io);
  }
}

TEST(Batches, SizesOrderAndCoverage) {
  const auto plan = BatchPlan{4, 9, 2};
  const auto b = batch_indices(10, plan);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[0].size(), 4u);
  EXPECT_EQ(b[1].size(), 4u);
  EXPECT_EQ(b[2].size(), 2u);
  EXPECT_EQ(b, batch_indices(10, plan));
  EXPECT_NE(b, batch_indices(10, BatchPlan{4, 9, 3}));
  std::vector<std::size_t> all;
  for (const auto& v : b) all.insert(all.end(), v.begin(), v.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(all[i], i);
  EXPECT_THROW(batch_indices(10, BatchPlan{0, 0, 0}), std::invalid_argument);
}

TEST(Batches, GatherMatchesIndices) {
  const auto ds = gen_blobs(2, 3, 5, 0.2, 0.1, 1);
  const auto bs = batches(ds, BatchPlan{3, 1, 0});
  for (const auto& b : bs) {
    for (std::size_t r = 0; r < b.indices.size(); ++r) {
      EXPECT_EQ(b.y[r], ds.labels[b.indices[r]]);
      for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(b.x.at(r, j), ds.inputs.at(b.indices[r], j));
    }
  }
}

TEST(SampleIndices, SortedUniqueAndDeterministic) {
  const auto s = sample_indices(100, 10, 5);
  EXPECT_EQ(s.size(), 10u);
  EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
  EXPECT_EQ(std::adjacent_find(s.begin(), s.end()), s.end());
  EXPECT_EQ(s, sample_indices(100, 10, 5));
  EXPECT_EQ(sample_indices(5, 10, 5).size(), 5u);
}

TEST(Dataset, ValidateRejectsBadLabelsAndPixels) {
  auto ds = gen_blobs(2, 3, 2, 0.2, 0.0, 1);
  ds.labels[0] = 2;
  EXPECT_THROW(ds.validate(), std::invalid_argument);
  ds.labels[0] = 0;
  ds.inputs[0] = 1.5;
  EXPECT_THROW(ds.validate(), std::invalid_argument);
}
