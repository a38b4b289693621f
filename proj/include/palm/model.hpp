#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "palm/tensor.hpp"

namespace palm::nn {

/// Valid (unpadded) convolution, stride 1.
struct ConvLayer {
  int out_channels = 0;
  int kernel = 0;
  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

/// Non-overlapping max pooling; trailing rows/columns that do not fill a
/// window are dropped.
struct MaxPoolLayer {
  int size = 2;
  friend bool operator==(const MaxPoolLayer&, const MaxPoolLayer&) = default;
};

/// Fully connected; flattens its input.
struct DenseLayer {
  int units = 0;
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct ReluLayer {
  friend bool operator==(const ReluLayer&, const ReluLayer&) = default;
};

struct SoftmaxLayer {
  friend bool operator==(const SoftmaxLayer&, const SoftmaxLayer&) = default;
};

using LayerSpec = std::variant<ConvLayer, MaxPoolLayer, DenseLayer, ReluLayer, SoftmaxLayer>;

std::string layer_name(const LayerSpec& layer);

inline constexpr int kClassCount = 2;
inline constexpr int kNoPalmClass = 0;
inline constexpr int kPalmClass = 1;

struct ModelConfig {
  int input_side = 40;
  int input_channels = 1;
  std::vector<LayerSpec> layers;

  /// conv 5x5x6, pool 2, conv 5x5x16, pool 2, dense 120, dense 84, dense 2,
  /// softmax; ReLU after every hidden conv/dense layer.
  static ModelConfig lenet(int input_channels = 1, int input_side = 40);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Channels x height x width of one sample's activation.
struct ActivationShape {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::size_t size() const { return static_cast<std::size_t>(channels) * height * width; }
  friend bool operator==(const ActivationShape&, const ActivationShape&) = default;
};

/// Output shape after each layer. Throws ShapeError when the chain does not
/// run from the input to a single terminal softmax over kClassCount values.
std::vector<ActivationShape> layer_shapes(const ModelConfig& config);

/// Weight and bias of one layer; both empty for parameter-free layers.
/// Conv weight is (out, in, k, k), dense weight is (units, inputs).
template <typename T>
struct LayerParams {
  BasicTensor<T> weight;
  BasicTensor<T> bias;
  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

template <typename T>
using ParamSet = std::vector<LayerParams<T>>;

template <typename T>
struct BasicModel {
  ModelConfig config;
  ParamSet<T> params; // one entry per layer

  friend bool operator==(const BasicModel&, const BasicModel&) = default;
};

using Model = BasicModel<float>;
using Gradients = ParamSet<float>;

/// Glorot-uniform weights (bound sqrt(6 / (fan_in + fan_out))), zero biases,
/// drawn layer by layer from `seed`.
Model build_model(const ModelConfig& config, std::uint64_t seed);

template <typename To, typename From>
BasicModel<To> cast_model(const BasicModel<From>& m) {
  BasicModel<To> out{m.config, {}};
  for (const auto& p : m.params) {
    auto convert = [](const BasicTensor<From>& t) {
      std::vector<To> data(t.data().begin(), t.data().end());
      return BasicTensor<To>(t.shape(), std::move(data));
    };
    out.params.push_back({convert(p.weight), convert(p.bias)});
  }
  return out;
}

template <typename T>
ParamSet<T> zeros_like(const ParamSet<T>& params) {
  ParamSet<T> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    out.push_back({BasicTensor<T>(p.weight.shape()), BasicTensor<T>(p.bias.shape())});
  }
  return out;
}

/// Class probabilities (n, 2) for a batch shaped (n, channels, side, side)
/// holding pixel values; the model subtracts 0.5 before the first layer.
template <typename T>
BasicTensor<T> forward(const BasicModel<T>& m, const BasicTensor<T>& batch);

template <typename T>
struct LossAndGrads {
  double loss = 0.0;
  ParamSet<T> grads;
};

/// Mean softmax cross-entropy over the batch and its parameter gradients.
template <typename T>
LossAndGrads<T> loss_and_grads(const BasicModel<T>& m, const BasicTensor<T>& batch,
                               std::span<const int> labels);

/// Throws ShapeError unless `batch` is (n, channels, side, side) for `config`
/// with n >= 1 (or n >= 0 when allow_empty).
template <typename T>
std::size_t check_batch(const ModelConfig& config, const BasicTensor<T>& batch,
                        bool allow_empty = false);

void save_model(const Model& m, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

extern template BasicTensor<float> forward(const BasicModel<float>&, const BasicTensor<float>&);
extern template BasicTensor<double> forward(const BasicModel<double>&, const BasicTensor<double>&);
extern template LossAndGrads<float> loss_and_grads(const BasicModel<float>&,
                                                   const BasicTensor<float>&,
                                                   std::span<const int>);
extern template LossAndGrads<double> loss_and_grads(const BasicModel<double>&,
                                                    const BasicTensor<double>&,
                                                    std::span<const int>);

} // namespace palm::nn
