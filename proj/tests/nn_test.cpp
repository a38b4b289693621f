#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "palm/dataset.hpp"
#include "palm/errors.hpp"
#include "palm/gradcheck.hpp"
#include "palm/model.hpp"
#include "palm/train.hpp"
#include "support.hpp"

namespace palm::nn {
namespace {

using test::TempDir;

Tensor random_batch(std::size_t n, const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  const Shape shape{n, static_cast<std::size_t>(cfg.input_channels),
                    static_cast<std::size_t>(cfg.input_side), static_cast<std::size_t>(cfg.input_side)};
  std::vector<float> data(element_count(shape));
  for (float& v : data) v = static_cast<float>(rng.uniform());
  return Tensor(shape, std::move(data));
}

Model zero_model(const ModelConfig& cfg) {
  Model m = build_model(cfg, 1);
  for (auto& p : m.params) {
    for (float& v : p.weight.data()) v = 0.0f;
    for (float& v : p.bias.data()) v = 0.0f;
  }
  return m;
}

ModelConfig small_config(int side = 12, int channels = 1) {
  ModelConfig cfg;
  cfg.input_side = side;
  cfg.input_channels = channels;
  cfg.layers = {ConvLayer{4, 3}, ReluLayer{}, MaxPoolLayer{2}, DenseLayer{8}, ReluLayer{},
                DenseLayer{2}, SoftmaxLayer{}};
  return cfg;
}

TEST(BuildModel, SameSeedSameParameters) {
  EXPECT_EQ(build_model(ModelConfig::lenet(), 7), build_model(ModelConfig::lenet(), 7));
}

TEST(BuildModel, DifferentSeedsDiffer) {
  EXPECT_NE(build_model(ModelConfig::lenet(), 7).params, build_model(ModelConfig::lenet(), 8).params);
}

TEST(BuildModel, LenetShapesOnRgbInput) {
  const Model m = build_model(ModelConfig::lenet(3, 40), 1);
  // 40 -conv5-> 36 -pool2-> 18 -conv5-> 14 -pool2-> 7; 16 * 7 * 7 values reach the first dense layer.
  const std::size_t flat = 16 * ((((40 - 5 + 1) / 2) - 5 + 1) / 2) * ((((40 - 5 + 1) / 2) - 5 + 1) / 2);
  ASSERT_EQ(flat, 784u);
  EXPECT_EQ(m.params[0].weight.shape(), (Shape{6, 3, 5, 5}));
  EXPECT_EQ(m.params[0].bias.shape(), (Shape{6}));
  EXPECT_EQ(m.params[3].weight.shape(), (Shape{16, 6, 5, 5}));
  EXPECT_EQ(m.params[6].weight.shape(), (Shape{120, flat}));
  EXPECT_EQ(m.params[8].weight.shape(), (Shape{84, 120}));
  EXPECT_EQ(m.params[10].weight.shape(), (Shape{2, 84}));
  EXPECT_EQ(m.params[1].weight.size(), 0u);
}

TEST(BuildModel, GlorotBoundsAndZeroBias) {
  const Model m = build_model(ModelConfig::lenet(), 3);
  const double bound = std::sqrt(6.0 / (25.0 + 6 * 25.0));
  for (float v : m.params[0].weight.data()) EXPECT_LE(std::abs(v), bound);
  for (float v : m.params[0].bias.data()) EXPECT_EQ(v, 0.0f);
}

TEST(BuildModel, InconsistentChainsThrow) {
  ModelConfig cfg = ModelConfig::lenet();
  cfg.layers.pop_back();
  EXPECT_THROW(build_model(cfg, 1), ShapeError);
  cfg = ModelConfig::lenet();
  cfg.layers[10] = DenseLayer{3};
  EXPECT_THROW(build_model(cfg, 1), ShapeError);
  cfg = ModelConfig::lenet(1, 8);
  EXPECT_THROW(build_model(cfg, 1), ShapeError);
  cfg = ModelConfig::lenet();
  cfg.layers.insert(cfg.layers.begin(), SoftmaxLayer{});
  EXPECT_THROW(build_model(cfg, 1), ShapeError);
  EXPECT_THROW(build_model(ModelConfig::lenet(2), 1), ShapeError);
}

TEST(Forward, ZeroModelGivesEvenOdds) {
  const ModelConfig cfg = ModelConfig::lenet();
  const Tensor probs = forward(zero_model(cfg), random_batch(5, cfg, 2));
  ASSERT_EQ(probs.shape(), (Shape{5, 2}));
  for (float p : probs.data()) EXPECT_FLOAT_EQ(p, 0.5f);
}

TEST(Forward, RowsSumToOne) {
  const ModelConfig cfg = ModelConfig::lenet(3);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Tensor probs = forward(build_model(cfg, seed), random_batch(8, cfg, seed + 100));
    for (std::size_t i = 0; i < 8; ++i) {
      EXPECT_NEAR(probs[2 * i] + probs[2 * i + 1], 1.0, 1e-6);
      EXPECT_GE(probs[2 * i], 0.0f);
      EXPECT_LE(probs[2 * i], 1.0f);
    }
  }
}

TEST(Forward, OneByOneConvMatchesHandComputedSoftmax) {
  ModelConfig cfg;
  cfg.input_side = 1;
  cfg.input_channels = 1;
  cfg.layers = {ConvLayer{2, 1}, SoftmaxLayer{}};
  Model m = build_model(cfg, 1);
  m.params[0].weight = Tensor({2, 1, 1, 1}, std::vector<float>{2.0f, -1.0f});
  m.params[0].bias = Tensor({2}, std::vector<float>{0.25f, 0.5f});
  const Tensor probs = forward(m, Tensor({1, 1, 1, 1}, std::vector<float>{0.9f}));
  const double x = 0.9 - 0.5;
  const double z0 = 2.0 * x + 0.25, z1 = -1.0 * x + 0.5;
  const double p1 = 1.0 / (1.0 + std::exp(z0 - z1));
  EXPECT_NEAR(probs[1], p1, 1e-6);
  EXPECT_NEAR(probs[0], 1.0 - p1, 1e-6);
}

TEST(Forward, RejectsBadBatches) {
  const ModelConfig cfg = ModelConfig::lenet();
  const Model m = build_model(cfg, 1);
  EXPECT_THROW(forward(m, Tensor({1, 3, 40, 40})), ShapeError);
  EXPECT_THROW(forward(m, Tensor({1, 1, 39, 40})), ShapeError);
  Tensor bad({1, 1, 40, 40});
  bad[17] = NAN;
  EXPECT_THROW(forward(m, bad), InvalidArgument);
}

TEST(Loss, ZeroModelLossIsLn2) {
  const ModelConfig cfg = small_config();
  const std::vector<int> labels{0, 1, 1};
  const auto lg = loss_and_grads(zero_model(cfg), random_batch(3, cfg, 4), labels);
  EXPECT_NEAR(lg.loss, std::log(2.0), 1e-6);
}

TEST(Loss, DuplicatedRowsKeepTheMean) {
  const ModelConfig cfg = small_config();
  const Model m = build_model(cfg, 9);
  const Tensor one = random_batch(1, cfg, 5);
  std::vector<float> twice(one.data().begin(), one.data().end());
  twice.insert(twice.end(), one.data().begin(), one.data().end());
  const std::vector<int> l1{1}, l2{1, 1};
  const double a = loss_and_grads(m, one, l1).loss;
  const double b = loss_and_grads(m, Tensor({2, 1, 12, 12}, twice), l2).loss;
  EXPECT_NEAR(a, b, 1e-6);
}

TEST(Loss, GradientShapesAndErrors) {
  const ModelConfig cfg = small_config();
  const Model m = build_model(cfg, 2);
  const std::vector<int> labels{0, 1};
  const auto lg = loss_and_grads(m, random_batch(2, cfg, 1), labels);
  ASSERT_EQ(lg.grads.size(), m.params.size());
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    EXPECT_EQ(lg.grads[i].weight.shape(), m.params[i].weight.shape());
    EXPECT_EQ(lg.grads[i].bias.shape(), m.params[i].bias.shape());
    EXPECT_TRUE(lg.grads[i].weight.all_finite());
  }
  const std::vector<int> short_labels{0};
  EXPECT_THROW(loss_and_grads(m, random_batch(2, cfg, 1), short_labels), ShapeError);
  const std::vector<int> bad_label{0, 2};
  EXPECT_THROW(loss_and_grads(m, random_batch(2, cfg, 1), bad_label), InvalidArgument);
  const std::vector<int> none;
  EXPECT_THROW(loss_and_grads(m, random_batch(0, cfg, 1), none), ShapeError);
}

// Central differences over every parameter of a small double-precision
// network, computed here without the gradcheck module.
TEST(Loss, GradientsMatchFiniteDifferences) {
  ModelConfig cfg;
  cfg.input_side = 8;
  cfg.input_channels = 3;
  cfg.layers = {ConvLayer{3, 3}, ReluLayer{}, MaxPoolLayer{2}, ConvLayer{2, 2}, ReluLayer{},
                DenseLayer{4}, ReluLayer{}, DenseLayer{2}, SoftmaxLayer{}};
  auto m = cast_model<double>(build_model(cfg, 21));
  for (auto& p : m.params)
    for (double& v : p.bias.data()) v = 0.05;
  const Tensor fb = random_batch(3, cfg, 22);
  const BasicTensor<double> batch(fb.shape(), std::vector<double>(fb.data().begin(), fb.data().end()));
  const std::vector<int> labels{1, 0, 1};
  const auto analytic = loss_and_grads(m, batch, labels);
  const double h = 1e-5;
  double worst = 0.0;
  std::size_t kinks = 0, checked = 0;
  auto probe = [&](double& param, double grad) {
    const double saved = param;
    param = saved + h;
    const double up = loss_and_grads(m, batch, labels).loss;
    param = saved - h;
    const double down = loss_and_grads(m, batch, labels).loss;
    param = saved + h / 2;
    const double up_half = loss_and_grads(m, batch, labels).loss;
    param = saved;
    const double numeric = (up - down) / (2 * h);
    // A ReLU/max-pool kink inside [-h, h] shows up as disagreeing one-sided slopes.
    const double right = (up - analytic.loss) / h, right_half = (up_half - analytic.loss) / (h / 2);
    if (std::abs(right - right_half) > 1e-3 * std::max(1.0, std::abs(right))) {
      ++kinks;
      return;
    }
    const double denom = std::max({std::abs(grad), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(grad - numeric) / denom);
    ++checked;
  };
  for (std::size_t l = 0; l < m.params.size(); ++l) {
    for (std::size_t i = 0; i < m.params[l].weight.size(); ++i)
      probe(m.params[l].weight[i], analytic.grads[l].weight[i]);
    for (std::size_t i = 0; i < m.params[l].bias.size(); ++i)
      probe(m.params[l].bias[i], analytic.grads[l].bias[i]);
  }
  EXPECT_GT(checked, 100u);
  EXPECT_LT(kinks, checked / 20 + 1);
  EXPECT_LT(worst, 1e-3);
}

TEST(GradCheck, EveryLayerTypeIsCovered) {
  const auto results = run_gradient_checks(5);
  std::vector<std::string> names;
  for (const auto& r : results) {
    names.push_back(r.layer);
    EXPECT_GT(r.checked, 0u) << r.layer;
    EXPECT_LT(r.max_rel_error, 1e-3) << r.layer;
  }
  for (const char* want : {"conv", "maxpool", "dense", "relu", "softmax", "network"}) {
    EXPECT_NE(std::find(names.begin(), names.end(), want), names.end()) << want;
  }
}

TEST(GradCheck, RelativeErrorFloor) {
  EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_NEAR(relative_error(1e-12, 2e-12), 1e-4, 1e-12);
  EXPECT_NEAR(relative_error(1.0, 1.1), 0.1 / 1.1, 1e-12);
}

Gradients constant_grads(const Model& m, float g) {
  Gradients out = zeros_like(m.params);
  for (auto& p : out) {
    for (float& v : p.weight.data()) v = g;
    for (float& v : p.bias.data()) v = g;
  }
  return out;
}

TEST(Sgd, ZeroGradientZeroVelocityIsANoOp) {
  Model m = build_model(small_config(), 3);
  const Model before = m;
  Gradients v = zeros_like(m.params);
  sgd_step(m, zeros_like(m.params), v, TrainConfig{});
  EXPECT_EQ(m, before);
}

TEST(Sgd, PlainGradientDescent) {
  Model m = build_model(small_config(), 3);
  const Model before = m;
  Gradients v = zeros_like(m.params);
  TrainConfig cfg;
  cfg.momentum = 0.0;
  cfg.learning_rate = 0.1;
  sgd_step(m, constant_grads(m, 0.5f), v, cfg);
  for (std::size_t l = 0; l < m.params.size(); ++l)
    for (std::size_t i = 0; i < m.params[l].weight.size(); ++i)
      EXPECT_FLOAT_EQ(m.params[l].weight[i], before.params[l].weight[i] - 0.05f);
}

TEST(Sgd, MomentumMatchesUnrolledRecurrence) {
  Model m = build_model(small_config(), 3);
  const Model before = m;
  Gradients v = zeros_like(m.params);
  TrainConfig cfg;
  cfg.momentum = 0.9;
  cfg.learning_rate = 0.01;
  const float g = 2.0f;
  sgd_step(m, constant_grads(m, g), v, cfg);
  sgd_step(m, constant_grads(m, g), v, cfg);
  // v1 = -lr g, v2 = 0.9 v1 - lr g; param moves by v1 + v2 = -lr g (2 + 0.9).
  const double shift = -0.01 * 2.0 * (2.0 + 0.9);
  EXPECT_NEAR(v[0].weight[0], -0.01 * 2.0 * 1.9, 1e-6);
  for (std::size_t i = 0; i < m.params[0].weight.size(); ++i)
    EXPECT_NEAR(m.params[0].weight[i], before.params[0].weight[i] + shift, 1e-6);
}

TEST(Sgd, ShapeMismatchThrows) {
  Model m = build_model(small_config(), 3);
  Gradients v = zeros_like(m.params);
  Gradients g = zeros_like(m.params);
  g[0].weight = Tensor({1});
  EXPECT_THROW(sgd_step(m, g, v, TrainConfig{}), ShapeError);
  g.pop_back();
  EXPECT_THROW(sgd_step(m, g, v, TrainConfig{}), ShapeError);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.validation_fraction = 1.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

// Crops whose class is fixed by mean brightness: palm ~ U[0.55, 0.95],
// no_palm ~ U[0.05, 0.45] per pixel.
Dataset brightness_dataset(int side, std::size_t n_palm, std::size_t n_nopalm, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d{side, 1, {}, 1};
  auto make = [&](Label label) {
    Raster r(side, side, 1);
    const double lo = label == Label::Palm ? 0.55 : 0.05;
    for (float& v : r.pixels()) v = static_cast<float>(rng.uniform(lo, lo + 0.4));
    append_crop(d, {{}, std::move(r), label, "bright", {side / 2, side / 2}});
  };
  for (std::size_t i = 0; i < n_palm; ++i) make(Label::Palm);
  for (std::size_t i = 0; i < n_nopalm; ++i) make(Label::NoPalm);
  return d;
}

double mean_brightness(const Raster& r) {
  double s = 0;
  for (float v : r.pixels()) s += v;
  return s / static_cast<double>(r.pixels().size());
}

TEST(Train, LearnsBrightnessRule) {
  const Dataset d = brightness_dataset(12, 60, 100, 31);
  // Threshold oracle: a single cut on mean brightness separates the classes.
  for (const auto& item : d.items) ASSERT_EQ(mean_brightness(item.crop) > 0.5, item.label == Label::Palm);
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.seed = 4;
  const TrainReport r = train(small_config(), d, cfg);
  EXPECT_GE(r.best_validation_accuracy, 0.99);
  ASSERT_EQ(r.train_loss.size(), 8u);
  ASSERT_EQ(r.validation_accuracy.size(), 8u);
  EXPECT_EQ(r.best_validation_accuracy,
            *std::max_element(r.validation_accuracy.begin(), r.validation_accuracy.end()));
  for (double a : r.validation_accuracy) EXPECT_TRUE(a >= 0.0 && a <= 1.0);
  for (double l : r.train_loss) EXPECT_TRUE(std::isfinite(l));
  EXPECT_EQ(accuracy(r.model, split(d, {0.2, derive_seed(4, 1)}).second), r.best_validation_accuracy);
}

TEST(Train, ReturnsTheBestEpochModel) {
  const Dataset d = brightness_dataset(12, 30, 40, 8);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 2;
  cfg.learning_rate = 0.05;
  const TrainReport full = train(small_config(), d, cfg);
  cfg.epochs = full.best_epoch + 1;
  const TrainReport cut = train(small_config(), d, cfg);
  EXPECT_EQ(full.model, cut.model);
}

TEST(Train, IsDeterministic) {
  const Dataset d = brightness_dataset(12, 30, 50, 6);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 11;
  cfg.augment = true;
  const TrainReport a = train(small_config(), d, cfg);
  const TrainReport b = train(small_config(), d, cfg);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.train_loss, b.train_loss);
}

Dataset swap_labels(Dataset d) {
  for (auto& item : d.items) item.label = item.label == Label::Palm ? Label::NoPalm : Label::Palm;
  return d;
}

TEST(Train, LabelSwapLeavesBestAccuracyUnchanged) {
  // Harder than the brightness set so accuracy is not saturated.
  Dataset d = brightness_dataset(12, 40, 60, 12);
  Rng rng(3);
  for (auto& item : d.items)
    if (rng.uniform() < 0.15) item.label = item.label == Label::Palm ? Label::NoPalm : Label::Palm;
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.seed = 5;
  const Model initial = build_model(small_config(), 17);
  Model mirrored = initial;
  auto& last = mirrored.params[5];
  for (std::size_t i = 0; i < last.weight.shape()[1]; ++i)
    std::swap(last.weight[i], last.weight[last.weight.shape()[1] + i]);
  std::swap(last.bias[0], last.bias[1]);
  const TrainReport a = train(initial, d, cfg);
  const TrainReport b = train(mirrored, swap_labels(d), cfg);
  EXPECT_EQ(a.best_validation_accuracy, b.best_validation_accuracy);
  EXPECT_EQ(a.validation_accuracy, b.validation_accuracy);
}

TEST(Train, RejectsUnusableData) {
  TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(train(small_config(), brightness_dataset(12, 10, 0, 1), cfg), InvalidArgument);
  EXPECT_THROW(train(small_config(), brightness_dataset(12, 0, 10, 1), cfg), InvalidArgument);
  EXPECT_THROW(train(small_config(), Dataset{12, 1, {}, 1}, cfg), InvalidArgument);
  EXPECT_THROW(train(small_config(16), brightness_dataset(12, 10, 10, 1), cfg), InvalidArgument);
}

TEST(ModelFile, RoundTripIsBitwise) {
  TempDir dir("model");
  const Model m = build_model(ModelConfig::lenet(3), 44);
  save_model(m, dir / "m.bin");
  EXPECT_EQ(load_model(dir / "m.bin"), m);
}

TEST(ModelFile, TruncatedFileIsCorrupt) {
  TempDir dir("model");
  save_model(build_model(small_config(), 1), dir / "m.bin");
  std::string bytes = test::read_bytes(dir / "m.bin");
  bytes.resize(bytes.size() - 9);
  test::write_bytes(dir / "t.bin", bytes);
  EXPECT_THROW(load_model(dir / "t.bin"), CorruptFileError);
}

TEST(ModelFile, AlteredVersionIsRejected) {
  TempDir dir("model");
  save_model(build_model(small_config(), 1), dir / "m.bin");
  std::string bytes = test::read_bytes(dir / "m.bin");
  const auto pos = bytes.find("\"format_version\":1");
  ASSERT_NE(pos, std::string::npos);
  bytes.replace(pos, 18, "\"format_version\":9");
  test::write_bytes(dir / "v.bin", bytes);
  EXPECT_THROW(load_model(dir / "v.bin"), VersionMismatchError);
}

TEST(ModelFile, FlippedWeightByteFailsChecksum) {
  TempDir dir("model");
  save_model(build_model(small_config(), 1), dir / "m.bin");
  std::string bytes = test::read_bytes(dir / "m.bin");
  bytes[bytes.size() - 3] ^= 0x40;
  test::write_bytes(dir / "c.bin", bytes);
  EXPECT_THROW(load_model(dir / "c.bin"), CorruptFileError);
}

TEST(ModelFile, OtherFilesAreRejected) {
  TempDir dir("model");
  EXPECT_THROW(load_model(dir / "none.bin"), IoError);
  test::write_bytes(dir / "junk.bin", "hello\nworld");
  EXPECT_THROW(load_model(dir / "junk.bin"), CorruptFileError);
  test::write_bytes(dir / "other.bin", "{\"format\":\"something\"}\n");
  EXPECT_THROW(load_model(dir / "other.bin"), FormatError);
}

TEST(ModelFile, BlobIsLittleEndianFloat32InLayerOrder) {
  TempDir dir("model");
  const Model m = build_model(small_config(), 9);
  save_model(m, dir / "m.bin");
  const std::string bytes = test::read_bytes(dir / "m.bin");
  const std::string blob = bytes.substr(bytes.find('\n') + 1);
  std::size_t expect = 0;
  for (const auto& p : m.params) expect += 4 * (p.weight.size() + p.bias.size());
  ASSERT_EQ(blob.size(), expect);
  const float w0 = m.params[0].weight[0];
  std::uint32_t bits;
  std::memcpy(&bits, &w0, 4);
  for (int b = 0; b < 4; ++b)
    EXPECT_EQ(static_cast<unsigned char>(blob[b]), (bits >> (8 * b)) & 0xFF);
}

} // namespace
} // namespace palm::nn
