/* Copyright (c) 2026 The stylediff Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include "support.hpp"

namespace sd = stylediff;
using sd::ImageTensor;
using sd::TransferConfig;

namespace {

TransferConfig tiny_config(std::uint64_t seed = 0, long iterations = 10) {
  TransferConfig c = TransferConfig::defaults(sd::BackendDescriptor::tiny(seed));
  c.precision = sd::Precision::f64;
  c.iterations = iterations;
  return c;
}

struct Triple {
  ImageTensor content, style1, style2;
};

Triple random_triple(int size, std::uint64_t seed) {
  return {sd::testing::random_image(size, size, seed), sd::testing::random_image(size, size, seed + 100),
          sd::testing::random_image(size, size, seed + 200)};
}

Triple glyph_triple(int size) {
  return {sd::testing::glyph("KaTeX_SansSerif-Regular.ttf", U'H', size),
          sd::testing::glyph("DejaVuSerif.ttf", U'H', size), sd::testing::glyph("DejaVuSans.ttf", U'H', size)};
}

// Extractor whose features turn NaN from the `poison_at`-th forward pass on.
class PoisonedExtractor : public sd::testing::CountingExtractor<double> {
 public:
  PoisonedExtractor(const sd::FeatureExtractor<double>& inner, long poison_at)
      : CountingExtractor(inner), poison_at_(poison_at) {}
  sd::LayerFeatures<double> features(const Pass& p, const sd::LayerList& layers) const {
    auto f = CountingExtractor::features(p, layers);
    if (forwards >= poison_at_)
      for (auto& [l, m] : f) m(0, 0) = std::numeric_limits<double>::quiet_NaN();
    return f;
  }
  sd::LayerFeatures<double> extract_features(const ImageTensor& img, const sd::LayerList& layers) const {
    const auto buf = to_scalar(img);
    return features(forward(sd::FeatureExtractor<double>::grid_of(img, buf), layers), layers);
  }

 private:
  long poison_at_;
};

}  // namespace

TEST(InitGenerated, ContentCopy) {
  const ImageTensor c = sd::testing::random_image(9, 7, 1);
  EXPECT_EQ(sd::init_generated(c, sd::InitMode::content, 5), c);
}

TEST(InitGenerated, SeededRandom) {
  const ImageTensor c(12, 12, 1, 0.3);
  const ImageTensor a = sd::init_generated(c, sd::InitMode::random, 7);
  EXPECT_EQ(a, sd::init_generated(c, sd::InitMode::random, 7));
  EXPECT_NE(a, sd::init_generated(c, sd::InitMode::random, 8));
  EXPECT_TRUE(a.same_shape(c));
  EXPECT_NO_THROW(a.validate());
}

TEST(TransferConfig, DefaultsMatchStandardTable) {
  const TransferConfig c = TransferConfig::defaults();
  EXPECT_EQ(c.iterations, 1000);
  EXPECT_EQ(c.init, sd::InitMode::content);
  EXPECT_EQ(c.optimizer, sd::OptimizerKind::lbfgs);
  EXPECT_EQ(c.projection, sd::PixelProjection::clamp_final);
  EXPECT_EQ(c.style_layers, (sd::LayerList{"conv1_2", "conv2_2", "conv3_2", "conv4_2", "conv5_2"}));
  EXPECT_EQ(c.content_layers, (sd::LayerList{"conv4_2"}));
  EXPECT_EQ(c.weights.style.at("conv1_2"), 1e3 / (64.0 * 64.0));
  EXPECT_EQ(c.weights.style.at("conv2_2"), 1e3 / (128.0 * 128.0));
  EXPECT_EQ(c.weights.style.at("conv3_2"), 1e3 / (256.0 * 256.0));
  EXPECT_EQ(c.weights.style.at("conv4_2"), 1e3 / (512.0 * 512.0));
  EXPECT_EQ(c.weights.style.at("conv5_2"), 1e3 / (512.0 * 512.0));
  EXPECT_EQ(c.weights.content.at("conv4_2"), 1e4);
  EXPECT_EQ(c.lbfgs.history, 20);
  EXPECT_EQ(c.lbfgs.max_evals_per_step, 25);
  EXPECT_EQ(c.adam.step, 1e-2);
  EXPECT_FALSE(c.early_stop);
  EXPECT_NO_THROW(c.validate());
}

TEST(TransferConfig, Validation) {
  TransferConfig c = tiny_config();
  c.iterations = 0;
  EXPECT_THROW(c.validate(), sd::ArgumentError);
  c = tiny_config();
  c.style_layers.push_back("conv4_2");
  EXPECT_THROW(c.validate(), sd::ArgumentError);
  c = tiny_config();
  c.weights.style["conv1"] = -1;
  EXPECT_THROW(c.validate(), sd::ArgumentError);
  c = tiny_config();
  c.weights.content["conv1"] = 1;  // not a selected content layer
  EXPECT_THROW(c.validate(), sd::ArgumentError);
}

TEST(RunTransfer, EqualStylesKeepContent) {
  const Triple t = random_triple(16, 1);
  const TransferConfig cfg = tiny_config(0, 20);
  const auto r = sd::run_transfer(cfg, t.content, t.style1, t.style1);
  ASSERT_FALSE(r.loss_trace.empty());
  EXPECT_LT(r.loss_trace.front().total, 1e-8);
  for (std::size_t i = 0; i < r.generated.size(); ++i)
    EXPECT_LE(std::abs(r.generated.pixels[i] - t.content.pixels[i]), 1.0 / 255);
}

TEST(EvaluateLoss, AnalyticOptimumStyle2EqualsContent) {
  const Triple t = random_triple(16, 2);
  const TransferConfig cfg = tiny_config();
  const auto at_c = sd::evaluate_loss(cfg, t.content, t.style1, t.content, t.content);
  const auto at_s1 = sd::evaluate_loss(cfg, t.content, t.style1, t.content, t.style1);
  EXPECT_GT(at_c.total, 0.0);
  EXPECT_LT(at_s1.total, 1e-8 * at_c.total);
}

TEST(EvaluateLoss, EqualStylesAtContentIsZero) {
  const Triple t = random_triple(16, 3);
  const auto l = sd::evaluate_loss(tiny_config(), t.content, t.style1, t.style1, t.content);
  EXPECT_NEAR(l.content_diff, 0.0, 1e-8);
  EXPECT_NEAR(l.style_diff, 0.0, 1e-8);
  EXPECT_NEAR(l.total, 0.0, 1e-8);
}

TEST(EvaluateLoss, TotalIsSum) {
  const Triple t = random_triple(16, 4);
  const auto l = sd::evaluate_loss(tiny_config(), t.content, t.style1, t.style2, t.style2);
  EXPECT_EQ(l.total, l.content_diff + l.style_diff);
  EXPECT_GT(l.content_diff, 0.0);
  EXPECT_GT(l.style_diff, 0.0);
}

TEST(EvaluateLoss, MatchesLossEngine) {
  // Recompute through the loss functions directly.
  const Triple t = random_triple(16, 5);
  const ImageTensor x = sd::testing::random_image(16, 16, 77);
  const TransferConfig cfg = tiny_config();
  const sd::FeatureExtractor<double> ex(cfg.backend);
  const auto layers = cfg.all_layers();
  const auto fx = ex.extract_features(x, layers), fc = ex.extract_features(t.content, layers);
  const auto f1 = ex.extract_features(t.style1, layers), f2 = ex.extract_features(t.style2, layers);
  const sd::LayerDims dims = sd::dims_of(fx);
  const double style = sd::style_difference_loss(sd::gram_difference(sd::gram_set(fx), sd::gram_set(fc)),
                                                 sd::gram_difference(sd::gram_set(f1), sd::gram_set(f2)),
                                                 cfg.weights, dims);
  const double content =
      sd::content_difference_loss(sd::feature_difference(fx, fc), sd::feature_difference(f1, f2), cfg.weights);
  const auto l = sd::evaluate_loss(cfg, t.content, t.style1, t.style2, x);
  EXPECT_NEAR(l.style_diff, style, 1e-10 * style);
  EXPECT_NEAR(l.content_diff, content, 1e-10 * content);
}

TEST(RunTransfer, SizeMismatchBeforeAnyComputation) {
  const TransferConfig cfg = tiny_config();
  const sd::FeatureExtractor<double> inner(cfg.backend);
  const sd::testing::CountingExtractor<double> ex(inner);
  const ImageTensor a(16, 16, 1), b(16, 12, 1);
  EXPECT_THROW(sd::run_transfer_with(ex, cfg, a, a, b), sd::ArgumentError);
  EXPECT_THROW(sd::run_transfer_with(ex, cfg, a, b, a), sd::ArgumentError);
  EXPECT_EQ(ex.forwards, 0);
  EXPECT_THROW(sd::run_transfer(cfg, a, a, b), sd::ArgumentError);
  EXPECT_THROW(sd::evaluate_loss(cfg, a, a, a, b), sd::ArgumentError);
}

TEST(RunTransfer, FixedImagesExtractedOnce) {
  const Triple t = random_triple(16, 6);
  TransferConfig cfg = tiny_config(0, 15);
  const sd::FeatureExtractor<double> inner(cfg.backend);
  const sd::testing::CountingExtractor<double> ex(inner);
  const auto r = sd::run_transfer_with(ex, cfg, t.content, t.style1, t.style2);
  EXPECT_GT(r.evaluations, 1);
  EXPECT_EQ(ex.forwards, 3 + r.evaluations);
}

TEST(RunTransfer, InputsUnchanged) {
  const Triple t = random_triple(16, 7);
  const Triple copy = t;
  sd::run_transfer(tiny_config(0, 5), t.content, t.style1, t.style2);
  EXPECT_EQ(t.content, copy.content);
  EXPECT_EQ(t.style1, copy.style1);
  EXPECT_EQ(t.style2, copy.style2);
}

TEST(RunTransfer, DeterministicOnTiny) {
  const Triple t = random_triple(16, 8);
  TransferConfig cfg = tiny_config(3, 12);
  cfg.init = sd::InitMode::random;
  cfg.seed = 9;
  cfg.precision = sd::Precision::f32;
  const auto a = sd::run_transfer(cfg, t.content, t.style1, t.style2);
  const auto b = sd::run_transfer(cfg, t.content, t.style1, t.style2);
  EXPECT_EQ(a.generated, b.generated);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
}

TEST(RunTransfer, LbfgsTraceNonIncreasing) {
  const Triple t = glyph_triple(32);
  TransferConfig cfg = tiny_config(1, 60);
  cfg.precision = sd::Precision::f32;
  const auto r = sd::run_transfer(cfg, t.content, t.style1, t.style2);
  ASSERT_GT(r.loss_trace.size(), 10u);
  for (std::size_t i = 1; i < r.loss_trace.size(); ++i)
    EXPECT_LE(r.loss_trace[i].total, r.loss_trace[i - 1].total * (1 + 1e-6)) << i;
  EXPECT_LT(r.loss_trace.back().total, r.loss_trace.front().total);
  for (const auto& e : r.loss_trace) {
    EXPECT_TRUE(std::isfinite(e.total));
    EXPECT_GE(e.content_diff, 0.0);
    EXPECT_GE(e.style_diff, 0.0);
  }
}

TEST(RunTransfer, ProjectionPoliciesEndInRange) {
  const Triple t = random_triple(16, 9);
  for (auto opt : {sd::OptimizerKind::lbfgs, sd::OptimizerKind::first_order})
    for (auto p : {sd::PixelProjection::none, sd::PixelProjection::clamp_each_step, sd::PixelProjection::clamp_final}) {
      TransferConfig cfg = tiny_config(0, 8);
      cfg.optimizer = opt;
      cfg.projection = p;
      cfg.init = sd::InitMode::random;
      cfg.adam.step = 0.3;
      const auto r = sd::run_transfer(cfg, t.content, t.style1, t.style2);
      EXPECT_NO_THROW(r.generated.validate());
    }
}

TEST(RunTransfer, SnapshotsAtCadence) {
  const Triple t = random_triple(16, 10);
  TransferConfig cfg = tiny_config(0, 5);
  cfg.optimizer = sd::OptimizerKind::first_order;
  cfg.snapshot_every = 2;
  const auto r = sd::run_transfer(cfg, t.content, t.style1, t.style2);
  ASSERT_EQ(r.snapshots.size(), 3u);
  EXPECT_EQ(r.snapshots[0].iteration, 0);
  EXPECT_EQ(r.snapshots[1].iteration, 2);
  EXPECT_EQ(r.snapshots[2].iteration, 4);
  EXPECT_EQ(r.loss_trace.size(), 6u);
}

TEST(RunTransfer, EarlyStop) {
  const Triple t = random_triple(16, 11);
  TransferConfig cfg = tiny_config(0, 100);
  cfg.optimizer = sd::OptimizerKind::first_order;
  cfg.early_stop = true;
  cfg.early_stop_threshold = 10.0;  // any relative improvement is "too small"
  cfg.early_stop_window = 4;
  const auto r = sd::run_transfer(cfg, t.content, t.style1, t.style2);
  EXPECT_EQ(r.loss_trace.back().iteration, 4);
}

TEST(RunTransfer, NonFiniteLossReportsIteration) {
  const Triple t = random_triple(16, 12);
  TransferConfig cfg = tiny_config(0, 10);
  cfg.optimizer = sd::OptimizerKind::first_order;  // one evaluation per iteration
  const sd::FeatureExtractor<double> inner(cfg.backend);
  const PoisonedExtractor ex(inner, 3 + 4);  // 4th evaluation = iteration 3
  try {
    sd::run_transfer_with(ex, cfg, t.content, t.style1, t.style2);
    FAIL() << "expected NumericError";
  } catch (const sd::NumericError& e) {
    EXPECT_EQ(e.iteration(), 3);
  }
}

TEST(RunNst, IdenticalImagesZeroLoss) {
  const ImageTensor c = sd::testing::random_image(16, 16, 13);
  TransferConfig cfg = tiny_config(0, 1);
  cfg.mode = sd::TransferMode::classic_nst;
  const auto r = sd::run_nst(cfg, c, c);
  EXPECT_EQ(r.loss_trace.front().total, 0.0);
}

TEST(RunNst, ContentReconstruction) {
  const Triple t = glyph_triple(32);
  TransferConfig cfg = tiny_config(2, 300);
  cfg.mode = sd::TransferMode::classic_nst;
  cfg.nst = {1.0, 0.0};
  cfg.init = sd::InitMode::random;
  const auto r = sd::run_nst(cfg, t.content, t.style1);
  EXPECT_LT(r.loss_trace.back().content_diff, 0.01 * r.loss_trace.front().content_diff);
}

TEST(RunNst, AlphaZeroIgnoresContent) {
  const Triple t = random_triple(16, 14);
  TransferConfig cfg = tiny_config(0, 3);
  cfg.mode = sd::TransferMode::classic_nst;
  cfg.nst = {0.0, 5.0};
  const auto r = sd::run_nst(cfg, t.content, t.style1);
  for (const auto& e : r.loss_trace) EXPECT_EQ(e.total, 5.0 * e.style_diff);
  EXPECT_GT(r.loss_trace.front().content_diff + r.loss_trace.back().content_diff, 0.0);
}

TEST(RunNst, ModeChecked) {
  const ImageTensor c(16, 16, 1);
  EXPECT_THROW(sd::run_nst(tiny_config(), c, c), sd::ArgumentError);
  TransferConfig cfg = tiny_config();
  cfg.mode = sd::TransferMode::classic_nst;
  EXPECT_THROW(sd::run_transfer(cfg, c, c, c), sd::ArgumentError);
}

TEST(GradientCheck, TinyBackendWithinTolerance) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Triple t = random_triple(16, 20 + seed);
    const TransferConfig cfg = tiny_config(seed);
    const auto rep = sd::gradient_check(cfg, t.content, t.style1, t.style2, sd::testing::random_image(16, 16, seed),
                                        {seed, 20});
    EXPECT_EQ(rep.checked + rep.excluded, 20);
    EXPECT_LT(rep.max_relative_error, 1e-4) << "seed " << seed;
  }
}

TEST(GradientCheck, Deterministic) {
  const Triple t = random_triple(16, 30);
  const auto a = sd::gradient_check(tiny_config(1), t.content, t.style1, t.style2, t.style2, {4, 25});
  const auto b = sd::gradient_check(tiny_config(1), t.content, t.style1, t.style2, t.style2, {4, 25});
  EXPECT_EQ(a, b);
}

TEST(GradientCheck, ConstantLossPixelsExcluded) {
  const Triple t = random_triple(16, 31);
  TransferConfig cfg = tiny_config();
  for (auto& [l, w] : cfg.weights.style) w = 0.0;
  for (auto& [l, w] : cfg.weights.content) w = 0.0;
  const auto rep = sd::gradient_check(cfg, t.content, t.style1, t.style2, t.style2, {0, 20});
  EXPECT_EQ(rep.excluded, 20);
  EXPECT_EQ(rep.checked, 0);
  EXPECT_EQ(rep.max_relative_error, 0.0);
}

TEST(GradientCheck, Preconditions) {
  const Triple t = random_triple(16, 32);
  TransferConfig cfg = tiny_config();
  cfg.precision = sd::Precision::f32;
  EXPECT_THROW(sd::gradient_check(cfg, t.content, t.style1, t.style2, t.content), sd::ArgumentError);
  EXPECT_THROW(sd::gradient_check(TransferConfig::defaults(), t.content, t.style1, t.style2, t.content),
               sd::ArgumentError);
}

TEST(RunOutputs, TraceRoundTripAndArtifacts) {
  const Triple t = random_triple(16, 33);
  TransferConfig cfg = tiny_config(0, 4);
  cfg.snapshot_every = 2;
  const auto r = sd::run_transfer(cfg, t.content, t.style1, t.style2);
  sd::testing::TempDir dir("outputs");
  sd::write_run_outputs(r, dir.path());
  EXPECT_EQ(sd::read_loss_trace(dir / "loss_trace.csv"), r.loss_trace);
  std::ifstream csv(dir / "loss_trace.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "iteration,content_diff,style_diff,total");
  EXPECT_TRUE(std::filesystem::exists(dir / "generated.png"));
  for (const auto& s : r.snapshots)
    EXPECT_TRUE(std::filesystem::exists(dir / ("iter_" + std::to_string(s.iteration) + ".png")));
}
