#include "palm/train.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "palm/errors.hpp"
#include "palm/random.hpp"

namespace palm::nn {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must lie in [0, 1)");
  if (batch_size < 1) throw InvalidArgument("batch size must be at least 1");
  if (epochs < 1) throw InvalidArgument("epoch count must be at least 1");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw InvalidArgument("validation fraction must lie strictly between 0 and 1");
  }
}

void sgd_step(Model& m, const Gradients& grads, Gradients& velocity, const TrainConfig& cfg) {
  if (grads.size() != m.params.size() || velocity.size() != m.params.size()) {
    throw ShapeError("gradient/velocity sets do not match the model's layers");
  }
  const auto momentum = static_cast<float>(cfg.momentum);
  const auto lr = static_cast<float>(cfg.learning_rate);
  auto update = [&](Tensor& param, const Tensor& grad, Tensor& vel) {
    if (grad.shape() != param.shape() || vel.shape() != param.shape()) {
      throw ShapeError("gradient shape " + to_string(grad.shape()) + " / velocity shape " +
                       to_string(vel.shape()) + " differ from parameter shape " +
                       to_string(param.shape()));
    }
    for (std::size_t i = 0; i < param.size(); ++i) {
      vel[i] = momentum * vel[i] - lr * grad[i];
      param[i] += vel[i];
    }
  };
  for (std::size_t l = 0; l < m.params.size(); ++l) {
    update(m.params[l].weight, grads[l].weight, velocity[l].weight);
    update(m.params[l].bias, grads[l].bias, velocity[l].bias);
  }
}

void to_planar(const Raster& r, float* out) {
  const int c = r.channels();
  const std::size_t plane = static_cast<std::size_t>(r.width()) * r.height();
  const auto px = r.pixels();
  for (std::size_t i = 0; i < plane; ++i) {
    for (int ch = 0; ch < c; ++ch) out[static_cast<std::size_t>(ch) * plane + i] = px[i * c + ch];
  }
}

namespace {

struct Samples {
  std::vector<float> pixels; // n * per, planar
  std::vector<int> labels;
  std::size_t per = 0;
};

Samples to_samples(const Dataset& d) {
  Samples s;
  s.per = static_cast<std::size_t>(d.channels) * d.side * d.side;
  s.pixels.resize(s.per * d.items.size());
  for (std::size_t i = 0; i < d.items.size(); ++i) {
    to_planar(d.items[i].crop, s.pixels.data() + i * s.per);
    s.labels.push_back(class_index(d.items[i].label));
  }
  return s;
}

// One of the eight symmetries of the square, applied per channel plane.
void dihedral(const float* in, float* out, int channels, int side, int which) {
  for (int c = 0; c < channels; ++c) {
    const float* src = in + static_cast<std::size_t>(c) * side * side;
    float* dst = out + static_cast<std::size_t>(c) * side * side;
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        int sx = x, sy = y;
        if (which & 1) sx = side - 1 - sx;
        if (which & 2) sy = side - 1 - sy;
        if (which & 4) std::swap(sx, sy);
        dst[y * side + x] = src[sy * side + sx];
      }
    }
  }
}

// Palm probability of every sample.
std::vector<float> palm_probs(const Model& m, const Samples& s) {
  constexpr std::size_t kChunk = 256;
  const std::size_t n = s.labels.size();
  const auto side = static_cast<std::size_t>(m.config.input_side);
  const auto channels = static_cast<std::size_t>(m.config.input_channels);
  std::vector<float> out;
  out.reserve(n);
  for (std::size_t begin = 0; begin < n; begin += kChunk) {
    const std::size_t count = std::min(kChunk, n - begin);
    std::vector<float> chunk(s.pixels.begin() + static_cast<std::ptrdiff_t>(begin * s.per),
                             s.pixels.begin() + static_cast<std::ptrdiff_t>((begin + count) * s.per));
    const Tensor probs = forward(m, Tensor({count, channels, side, side}, std::move(chunk)));
    for (std::size_t i = 0; i < count; ++i) out.push_back(probs[i * kClassCount + kPalmClass]);
  }
  return out;
}

struct Score {
  double accuracy = 0.0;
  double loss = 0.0; // mean cross-entropy
};

// A tie between the two class probabilities counts as no_palm.
Score score(const Model& m, const Samples& s) {
  if (s.labels.empty()) return {};
  const auto probs = palm_probs(m, s);
  std::size_t correct = 0;
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    const int predicted = p > 1.0 - p ? kPalmClass : kNoPalmClass;
    correct += predicted == s.labels[i];
    const double q = s.labels[i] == kPalmClass ? p : 1.0 - p;
    loss -= std::log(std::max(q, 1e-12));
  }
  const auto n = static_cast<double>(probs.size());
  return {static_cast<double>(correct) / n, loss / n};
}

} // namespace

double accuracy(const Model& m, const Dataset& data) { return score(m, to_samples(data)).accuracy; }

TrainReport train(const ModelConfig& config, const Dataset& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  return train(build_model(config, cfg.seed), data, cfg, on_epoch);
}

TrainReport train(Model initial, const Dataset& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  const ModelConfig& config = initial.config;
  layer_shapes(config);
  if (data.items.empty()) throw InvalidArgument("training dataset is empty");
  if (data.count(Label::Palm) == 0 || data.count(Label::NoPalm) == 0) {
    throw InvalidArgument("training dataset must contain both palm and no_palm crops");
  }
  if (data.side != config.input_side || data.channels != config.input_channels) {
    throw InvalidArgument("dataset crops are " + std::to_string(data.side) + "px x " +
                          std::to_string(data.channels) + "ch, model expects " +
                          std::to_string(config.input_side) + "px x " +
                          std::to_string(config.input_channels) + "ch");
  }

  const auto [train_set, val_set] = split(data, {cfg.validation_fraction, derive_seed(cfg.seed, 1)});
  const Samples train_samples = to_samples(train_set);
  const Samples val_samples = to_samples(val_set);
  const std::size_t n = train_samples.labels.size();
  const std::size_t per = train_samples.per;
  const auto side = static_cast<std::size_t>(config.input_side);
  const auto channels = static_cast<std::size_t>(config.input_channels);

  Model model = std::move(initial);
  Gradients velocity = zeros_like(model.params);
  Rng order_rng(derive_seed(cfg.seed, 2));
  Rng augment_rng(derive_seed(cfg.seed, 3));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  TrainReport report;
  report.model = model;
  double best_loss = 0.0;
  std::vector<float> buffer;
  std::vector<int> labels;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t count = std::min(static_cast<std::size_t>(cfg.batch_size), n - begin);
      buffer.resize(count * per);
      labels.resize(count);
      for (std::size_t b = 0; b < count; ++b) {
        const std::size_t src = order[begin + b];
        const float* from = train_samples.pixels.data() + src * per;
        if (cfg.augment) {
          dihedral(from, buffer.data() + b * per, config.input_channels, config.input_side,
                   static_cast<int>(augment_rng.integer(0, 7)));
        } else {
          std::copy(from, from + per, buffer.begin() + static_cast<std::ptrdiff_t>(b * per));
        }
        labels[b] = train_samples.labels[src];
      }
      const Tensor batch({count, channels, side, side}, buffer);
      const auto lg = loss_and_grads(model, batch, labels);
      loss_sum += lg.loss * static_cast<double>(count);
      sgd_step(model, lg.grads, velocity, cfg);
    }
    const double loss = loss_sum / static_cast<double>(n);
    const Score val = score(model, val_samples);
    const double acc = val.accuracy;
    report.train_loss.push_back(loss);
    report.validation_accuracy.push_back(acc);
    report.validation_loss.push_back(val.loss);
    if (report.best_epoch < 0 || acc > report.best_validation_accuracy ||
        (acc == report.best_validation_accuracy && val.loss < best_loss)) {
      best_loss = val.loss;
      report.best_validation_accuracy = acc;
      report.best_epoch = epoch;
      report.model = model;
    }
    if (on_epoch) on_epoch(epoch, loss, acc);
  }
  return report;
}

} // namespace palm::nn
