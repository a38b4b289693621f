#include "palm/model.hpp"

#include <cmath>
#include <string>

#include "palm/layer_kernels.hpp"
#include "palm/random.hpp"

namespace palm::nn {

std::string layer_name(const LayerSpec& layer) {
  return std::visit(
      [](const auto& l) -> std::string {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, ConvLayer>) return "conv";
        if constexpr (std::is_same_v<L, MaxPoolLayer>) return "maxpool";
        if constexpr (std::is_same_v<L, DenseLayer>) return "dense";
        if constexpr (std::is_same_v<L, ReluLayer>) return "relu";
        return "softmax";
      },
      layer);
}

ModelConfig ModelConfig::lenet(int input_channels, int input_side) {
  ModelConfig cfg;
  cfg.input_side = input_side;
  cfg.input_channels = input_channels;
  cfg.layers = {ConvLayer{6, 5}, ReluLayer{},    MaxPoolLayer{2}, ConvLayer{16, 5},
                ReluLayer{},     MaxPoolLayer{2}, DenseLayer{120}, ReluLayer{},
                DenseLayer{84},  ReluLayer{},    DenseLayer{kClassCount}, SoftmaxLayer{}};
  return cfg;
}

std::vector<ActivationShape> layer_shapes(const ModelConfig& config) {
  if (config.input_side < 1) throw ShapeError("input side must be positive");
  if (config.input_channels != 1 && config.input_channels != 3) {
    throw ShapeError("input channels must be 1 or 3, got " +
                     std::to_string(config.input_channels));
  }
  if (config.layers.empty() || !std::holds_alternative<SoftmaxLayer>(config.layers.back())) {
    throw ShapeError("layer stack must end in a softmax");
  }
  std::vector<ActivationShape> shapes;
  ActivationShape s{config.input_channels, config.input_side, config.input_side};
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const std::string where = "layer " + std::to_string(i) + " (" + layer_name(config.layers[i]) + ")";
    std::visit(
        [&](const auto& layer) {
          using L = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<L, ConvLayer>) {
            if (layer.out_channels < 1 || layer.kernel < 1) {
              throw ShapeError(where + ": channels and kernel must be positive");
            }
            if (layer.kernel > s.height || layer.kernel > s.width) {
              throw ShapeError(where + ": kernel " + std::to_string(layer.kernel) +
                               " exceeds input " + std::to_string(s.height) + "x" +
                               std::to_string(s.width));
            }
            s = {layer.out_channels, s.height - layer.kernel + 1, s.width - layer.kernel + 1};
          } else if constexpr (std::is_same_v<L, MaxPoolLayer>) {
            if (layer.size < 1 || layer.size > s.height || layer.size > s.width) {
              throw ShapeError(where + ": pool size does not fit the input");
            }
            s = {s.channels, s.height / layer.size, s.width / layer.size};
          } else if constexpr (std::is_same_v<L, DenseLayer>) {
            if (layer.units < 1) throw ShapeError(where + ": units must be positive");
            s = {layer.units, 1, 1};
          } else if constexpr (std::is_same_v<L, SoftmaxLayer>) {
            if (i + 1 != config.layers.size()) throw ShapeError(where + ": softmax must be last");
            if (s.size() != static_cast<std::size_t>(kClassCount)) {
              throw ShapeError(where + ": softmax needs " + std::to_string(kClassCount) +
                               " inputs, got " + std::to_string(s.size()));
            }
          }
        },
        config.layers[i]);
    shapes.push_back(s);
  }
  return shapes;
}

Model build_model(const ModelConfig& config, std::uint64_t seed) {
  const auto shapes = layer_shapes(config);
  Rng rng(seed);
  Model m{config, {}};
  ActivationShape in{config.input_channels, config.input_side, config.input_side};
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    LayerParams<float> p{Tensor({0}), Tensor({0})};
    auto init = [&](Shape wshape, std::size_t bias, double fan_in, double fan_out) {
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      std::vector<float> w(element_count(wshape));
      for (float& v : w) v = static_cast<float>(rng.uniform(-bound, bound));
      p.weight = Tensor(std::move(wshape), std::move(w));
      p.bias = Tensor({bias});
    };
    if (const auto* conv = std::get_if<ConvLayer>(&config.layers[i])) {
      const auto k = static_cast<std::size_t>(conv->kernel);
      const auto oc = static_cast<std::size_t>(conv->out_channels);
      init({oc, static_cast<std::size_t>(in.channels), k, k}, oc,
           static_cast<double>(in.channels) * k * k, static_cast<double>(oc) * k * k);
    } else if (const auto* dense = std::get_if<DenseLayer>(&config.layers[i])) {
      const auto units = static_cast<std::size_t>(dense->units);
      init({units, in.size()}, units, static_cast<double>(in.size()), static_cast<double>(units));
    }
    m.params.push_back(std::move(p));
    in = shapes[i];
  }
  return m;
}

template <typename T>
std::size_t check_batch(const ModelConfig& config, const BasicTensor<T>& batch, bool allow_empty) {
  const auto side = static_cast<std::size_t>(config.input_side);
  const auto& s = batch.shape();
  if (s.size() != 4 || s[1] != static_cast<std::size_t>(config.input_channels) || s[2] != side ||
      s[3] != side) {
    throw ShapeError("batch shape " + to_string(s) + " does not match model input (n," +
                     std::to_string(config.input_channels) + "," + std::to_string(side) + "," +
                     std::to_string(side) + ")");
  }
  if (s[0] == 0 && !allow_empty) throw ShapeError("empty batch");
  return s[0];
}

namespace {

template <typename T>
void check_params(const BasicModel<T>& m) {
  if (m.params.size() != m.config.layers.size()) {
    throw ShapeError("model has " + std::to_string(m.params.size()) + " parameter sets for " +
                     std::to_string(m.config.layers.size()) + " layers");
  }
}

} // namespace

template <typename T>
BasicTensor<T> forward(const BasicModel<T>& m, const BasicTensor<T>& batch) {
  check_params(m);
  const std::size_t n = check_batch(m.config, batch, true);
  if (!batch.all_finite()) throw InvalidArgument("non-finite value in input batch");
  const std::size_t per = batch.size() / std::max<std::size_t>(n, 1);
  kernels::Engine<T> engine(m);
  BasicTensor<T> out({n, static_cast<std::size_t>(kClassCount)});
  for (std::size_t i = 0; i < n; ++i) {
    const auto probs = engine.forward(batch.data().subspan(i * per, per));
    std::copy(probs.begin(), probs.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * kClassCount));
  }
  return out;
}

template <typename T>
LossAndGrads<T> loss_and_grads(const BasicModel<T>& m, const BasicTensor<T>& batch,
                               std::span<const int> labels) {
  check_params(m);
  const std::size_t n = check_batch(m.config, batch);
  if (labels.size() != n) {
    throw ShapeError("got " + std::to_string(labels.size()) + " labels for a batch of " +
                     std::to_string(n));
  }
  for (int label : labels) {
    if (label < 0 || label >= kClassCount) throw InvalidArgument("label must be 0 or 1");
  }
  if (!batch.all_finite()) throw InvalidArgument("non-finite value in input batch");
  const std::size_t per = batch.size() / n;
  kernels::Engine<T> engine(m);
  LossAndGrads<T> result{0.0, zeros_like(m.params)};
  std::vector<T> d_logits(kClassCount);
  const T inv_n = T(1) / static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto probs = engine.forward(batch.data().subspan(i * per, per));
    result.loss += kernels::cross_entropy(engine.logits().data(), kClassCount, labels[i]);
    for (int c = 0; c < kClassCount; ++c) {
      const auto ci = static_cast<std::size_t>(c);
      d_logits[ci] = (probs[ci] - (c == labels[i] ? T(1) : T(0))) * inv_n;
    }
    engine.backward(d_logits, result.grads);
  }
  result.loss /= static_cast<double>(n);
  return result;
}

template std::size_t check_batch(const ModelConfig&, const BasicTensor<float>&, bool);
template std::size_t check_batch(const ModelConfig&, const BasicTensor<double>&, bool);
template BasicTensor<float> forward(const BasicModel<float>&, const BasicTensor<float>&);
template BasicTensor<double> forward(const BasicModel<double>&, const BasicTensor<double>&);
template LossAndGrads<float> loss_and_grads(const BasicModel<float>&, const BasicTensor<float>&,
                                            std::span<const int>);
template LossAndGrads<double> loss_and_grads(const BasicModel<double>&, const BasicTensor<double>&,
                                             std::span<const int>);

} // namespace palm::nn
