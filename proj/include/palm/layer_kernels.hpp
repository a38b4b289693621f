#pragma once

// Per-sample forward/backward kernels for each layer type, shared by the
// model, the trainer, and the gradient checker. Activations are laid out
// channel-major (c, y, x) for a single sample.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <type_traits>
#include <variant>
#include <vector>

#include "palm/model.hpp"

namespace palm::nn::kernels {

/// Dot product with eight independent partial sums so the loop vectorizes
/// without reassociation flags. Summation order is fixed, so results are
/// reproducible.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  }
  T tail = T{};
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail;
}

/// y += alpha * x
template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// ---- convolution -------------------------------------------------------------

template <typename T>
void im2col(const T* in, const ActivationShape& s, int k, T* col) {
  const int oh = s.height - k + 1;
  const int ow = s.width - k + 1;
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < s.channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + (static_cast<std::size_t>(c * k + ky) * k + kx) * plane;
        for (int oy = 0; oy < oh; ++oy) {
          const T* src = in + (static_cast<std::size_t>(c) * s.height + oy + ky) * s.width + kx;
          std::copy(src, src + ow, row + static_cast<std::size_t>(oy) * ow);
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ActivationShape& s, int k, T* in) {
  const int oh = s.height - k + 1;
  const int ow = s.width - k + 1;
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < s.channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + (static_cast<std::size_t>(c * k + ky) * k + kx) * plane;
        for (int oy = 0; oy < oh; ++oy) {
          T* dst = in + (static_cast<std::size_t>(c) * s.height + oy + ky) * s.width + kx;
          const T* src = row + static_cast<std::size_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) dst[ox] += src[ox];
        }
      }
    }
  }
}

/// out[oc] = bias[oc] + sum_k W[oc][k] * col[k]; `col` receives the im2col
/// expansion of `in` and is kept for the backward pass.
template <typename T>
void conv_forward(const T* in, const ActivationShape& s, const LayerParams<T>& p, int k, T* out,
                  std::vector<T>& col) {
  const int oc_count = static_cast<int>(p.bias.size());
  const std::size_t taps = static_cast<std::size_t>(s.channels) * k * k;
  const std::size_t plane = static_cast<std::size_t>(s.height - k + 1) * (s.width - k + 1);
  col.resize(taps * plane);
  im2col(in, s, k, col.data());
  const T* w = p.weight.data().data();
  for (int oc = 0; oc < oc_count; ++oc) {
    T* o = out + static_cast<std::size_t>(oc) * plane;
    std::fill(o, o + plane, p.bias[static_cast<std::size_t>(oc)]);
    const T* wrow = w + static_cast<std::size_t>(oc) * taps;
    for (std::size_t t = 0; t < taps; ++t) axpy(wrow[t], col.data() + t * plane, o, plane);
  }
}

/// Accumulates dW, db; writes d_in (when non-null) from d_out.
template <typename T>
void conv_backward(const ActivationShape& s, const LayerParams<T>& p, int k, const std::vector<T>& col,
                   const T* d_out, LayerParams<T>& grad, T* d_in, std::vector<T>& dcol) {
  const int oc_count = static_cast<int>(p.bias.size());
  const std::size_t taps = static_cast<std::size_t>(s.channels) * k * k;
  const std::size_t plane = static_cast<std::size_t>(s.height - k + 1) * (s.width - k + 1);
  T* dw = grad.weight.data().data();
  for (int oc = 0; oc < oc_count; ++oc) {
    const T* g = d_out + static_cast<std::size_t>(oc) * plane;
    T sum = T{};
    for (std::size_t i = 0; i < plane; ++i) sum += g[i];
    grad.bias[static_cast<std::size_t>(oc)] += sum;
    T* dwrow = dw + static_cast<std::size_t>(oc) * taps;
    for (std::size_t t = 0; t < taps; ++t) dwrow[t] += dot(g, col.data() + t * plane, plane);
  }
  if (!d_in) return;
  dcol.assign(taps * plane, T{});
  const T* w = p.weight.data().data();
  for (int oc = 0; oc < oc_count; ++oc) {
    const T* g = d_out + static_cast<std::size_t>(oc) * plane;
    const T* wrow = w + static_cast<std::size_t>(oc) * taps;
    for (std::size_t t = 0; t < taps; ++t) axpy(wrow[t], g, dcol.data() + t * plane, plane);
  }
  std::fill(d_in, d_in + s.size(), T{});
  col2im_add(dcol.data(), s, k, d_in);
}

// ---- max pooling -------------------------------------------------------------

template <typename T>
void maxpool_forward(const T* in, const ActivationShape& s, int size, T* out,
                     std::vector<std::uint32_t>& argmax) {
  const int oh = s.height / size;
  const int ow = s.width / size;
  argmax.resize(static_cast<std::size_t>(s.channels) * oh * ow);
  std::size_t o = 0;
  for (int c = 0; c < s.channels; ++c) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox, ++o) {
        std::size_t best = (static_cast<std::size_t>(c) * s.height + oy * size) * s.width + ox * size;
        for (int dy = 0; dy < size; ++dy) {
          for (int dx = 0; dx < size; ++dx) {
            const std::size_t idx =
                (static_cast<std::size_t>(c) * s.height + oy * size + dy) * s.width + ox * size + dx;
            if (in[idx] > in[best]) best = idx;
          }
        }
        out[o] = in[best];
        argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

template <typename T>
void maxpool_backward(const ActivationShape& in_shape, const std::vector<std::uint32_t>& argmax,
                      const T* d_out, T* d_in) {
  std::fill(d_in, d_in + in_shape.size(), T{});
  for (std::size_t o = 0; o < argmax.size(); ++o) d_in[argmax[o]] += d_out[o];
}

// ---- dense -------------------------------------------------------------------

template <typename T>
void dense_forward(const T* in, std::size_t n_in, const LayerParams<T>& p, T* out) {
  const std::size_t units = p.bias.size();
  const T* w = p.weight.data().data();
  for (std::size_t u = 0; u < units; ++u) out[u] = p.bias[u] + dot(w + u * n_in, in, n_in);
}

template <typename T>
void dense_backward(const T* in, std::size_t n_in, const LayerParams<T>& p, const T* d_out,
                    LayerParams<T>& grad, T* d_in) {
  const std::size_t units = p.bias.size();
  T* dw = grad.weight.data().data();
  for (std::size_t u = 0; u < units; ++u) {
    grad.bias[u] += d_out[u];
    axpy(d_out[u], in, dw + u * n_in, n_in);
  }
  if (!d_in) return;
  std::fill(d_in, d_in + n_in, T{});
  const T* w = p.weight.data().data();
  for (std::size_t u = 0; u < units; ++u) axpy(d_out[u], w + u * n_in, d_in, n_in);
}

// ---- activations -------------------------------------------------------------

template <typename T>
void relu_forward(const T* in, std::size_t n, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > T{} ? in[i] : T{};
}

template <typename T>
void relu_backward(const T* in, std::size_t n, const T* d_out, T* d_in) {
  for (std::size_t i = 0; i < n; ++i) d_in[i] = in[i] > T{} ? d_out[i] : T{};
}

template <typename T>
void softmax(const T* logits, std::size_t n, T* probs) {
  const T top = *std::max_element(logits, logits + n);
  T sum = T{};
  for (std::size_t i = 0; i < n; ++i) {
    probs[i] = std::exp(logits[i] - top);
    sum += probs[i];
  }
  for (std::size_t i = 0; i < n; ++i) probs[i] /= sum;
}

/// -log softmax(logits)[label], evaluated in double.
template <typename T>
double cross_entropy(const T* logits, std::size_t n, int label) {
  double top = static_cast<double>(logits[0]);
  for (std::size_t i = 1; i < n; ++i) top = std::max(top, static_cast<double>(logits[i]));
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += std::exp(static_cast<double>(logits[i]) - top);
  return std::log(sum) + top - static_cast<double>(logits[static_cast<std::size_t>(label)]);
}

// ---- whole network -----------------------------------------------------------

/// Runs one sample at a time through a model, keeping the intermediate
/// state needed to backpropagate. Not thread-safe; use one per worker.
template <typename T>
class Engine {
public:
  explicit Engine(const BasicModel<T>& m) : model_(m), shapes_(layer_shapes(m.config)) {
    const auto& cfg = m.config;
    input_shape_ = {cfg.input_channels, cfg.input_side, cfg.input_side};
    acts_.resize(shapes_.size() + 1);
    acts_[0].resize(input_shape_.size());
    for (std::size_t i = 0; i < shapes_.size(); ++i) acts_[i + 1].resize(shapes_[i].size());
    argmax_.resize(shapes_.size());
    cols_.resize(shapes_.size());
  }

  const ActivationShape& input_shape(std::size_t layer) const {
    return layer == 0 ? input_shape_ : shapes_[layer - 1];
  }

  /// `pixels` holds c * side * side raw values; returns class probabilities.
  std::span<const T> forward(std::span<const T> pixels) {
    std::transform(pixels.begin(), pixels.end(), acts_[0].begin(),
                   [](T v) { return v - T(0.5); });
    for (std::size_t i = 0; i < shapes_.size(); ++i) {
      const T* in = acts_[i].data();
      T* out = acts_[i + 1].data();
      const ActivationShape& s = input_shape(i);
      const auto& p = model_.params[i];
      std::visit(
          [&](const auto& layer) {
            using L = std::decay_t<decltype(layer)>;
            if constexpr (std::is_same_v<L, ConvLayer>) {
              conv_forward(in, s, p, layer.kernel, out, cols_[i]);
            } else if constexpr (std::is_same_v<L, MaxPoolLayer>) {
              maxpool_forward(in, s, layer.size, out, argmax_[i]);
            } else if constexpr (std::is_same_v<L, DenseLayer>) {
              dense_forward(in, s.size(), p, out);
            } else if constexpr (std::is_same_v<L, ReluLayer>) {
              relu_forward(in, s.size(), out);
            } else {
              softmax(in, s.size(), out);
            }
          },
          model_.config.layers[i]);
    }
    return acts_.back();
  }

  /// Pre-softmax activations of the last forward call.
  std::span<const T> logits() const { return acts_[acts_.size() - 2]; }

  /// Backpropagates dloss/dlogits from the last forward call, accumulating
  /// parameter gradients into `grads`.
  void backward(std::span<const T> d_logits, ParamSet<T>& grads) {
    const std::size_t last = shapes_.size() - 1; // softmax
    deltas_.resize(acts_.size());
    deltas_[last].assign(d_logits.begin(), d_logits.end());
    for (std::size_t i = last; i-- > 0;) {
      const ActivationShape& s = input_shape(i);
      const T* in = acts_[i].data();
      const T* d_out = deltas_[i + 1].data();
      T* d_in = nullptr;
      if (i > 0) {
        deltas_[i].resize(s.size());
        d_in = deltas_[i].data();
      }
      const auto& p = model_.params[i];
      std::visit(
          [&](const auto& layer) {
            using L = std::decay_t<decltype(layer)>;
            if constexpr (std::is_same_v<L, ConvLayer>) {
              conv_backward(s, p, layer.kernel, cols_[i], d_out, grads[i], d_in, dcol_);
            } else if constexpr (std::is_same_v<L, MaxPoolLayer>) {
              if (d_in) maxpool_backward(s, argmax_[i], d_out, d_in);
            } else if constexpr (std::is_same_v<L, DenseLayer>) {
              dense_backward(in, s.size(), p, d_out, grads[i], d_in);
            } else if constexpr (std::is_same_v<L, ReluLayer>) {
              if (d_in) relu_backward(in, s.size(), d_out, d_in);
            }
          },
          model_.config.layers[i]);
    }
  }

private:
  const BasicModel<T>& model_;
  std::vector<ActivationShape> shapes_;
  ActivationShape input_shape_;
  std::vector<std::vector<T>> acts_;
  std::vector<std::vector<T>> deltas_;
  std::vector<std::vector<std::uint32_t>> argmax_;
  std::vector<std::vector<T>> cols_;
  std::vector<T> dcol_;
};

} // namespace palm::nn::kernels
