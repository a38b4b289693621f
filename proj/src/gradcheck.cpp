#include "palm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "palm/layer_kernels.hpp"
#include "palm/random.hpp"

namespace palm::nn {

namespace {

using Vec = std::vector<double>;

constexpr double kDenominatorFloor = 1e-8;

Vec random_vec(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  Vec v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Updates `result` with the worst mismatch between analytic[i] and the
// central difference of f when values[i] is perturbed.
void compare(GradCheckResult& result, Vec& values, const Vec& analytic,
             const std::function<double()>& f, double step) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + step;
    const double plus = f();
    values[i] = saved - step;
    const double minus = f();
    values[i] = saved;
    const double numeric = (plus - minus) / (2.0 * step);
    result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[i], numeric));
    ++result.checked;
  }
}

double project(const Vec& r, const Vec& out) {
  double s = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) s += r[i] * out[i];
  return s;
}

LayerParams<double> make_params(Shape wshape, Vec w, Shape bshape, Vec b) {
  return {BasicTensor<double>(std::move(wshape), std::move(w)),
          BasicTensor<double>(std::move(bshape), std::move(b))};
}

GradCheckResult check_conv(Rng& rng, double step) {
  const ActivationShape in_shape{2, 7, 6};
  const int k = 3, oc = 3;
  const ActivationShape out_shape{oc, in_shape.height - k + 1, in_shape.width - k + 1};
  Vec x = random_vec(rng, in_shape.size());
  auto params = make_params({3, 2, 3, 3}, random_vec(rng, oc * 2 * k * k), {3}, random_vec(rng, oc));
  const Vec r = random_vec(rng, out_shape.size());

  std::vector<double> col, dcol, out(out_shape.size());
  auto loss = [&] {
    kernels::conv_forward(x.data(), in_shape, params, k, out.data(), col);
    return project(r, out);
  };
  loss();
  auto grads = zeros_like(ParamSet<double>{params}).front();
  Vec dx(in_shape.size());
  kernels::conv_backward(in_shape, params, k, col, r.data(), grads, dx.data(), dcol);

  GradCheckResult res{"conv", 0.0, 0};
  Vec w(params.weight.data().begin(), params.weight.data().end());
  Vec b(params.bias.data().begin(), params.bias.data().end());
  auto with_params = [&] {
    std::copy(w.begin(), w.end(), params.weight.data().begin());
    std::copy(b.begin(), b.end(), params.bias.data().begin());
    return loss();
  };
  compare(res, w, Vec(grads.weight.data().begin(), grads.weight.data().end()), with_params, step);
  compare(res, b, Vec(grads.bias.data().begin(), grads.bias.data().end()), with_params, step);
  compare(res, x, dx, loss, step);
  return res;
}

GradCheckResult check_dense(Rng& rng, double step) {
  const std::size_t n_in = 11, units = 4;
  Vec x = random_vec(rng, n_in);
  auto params = make_params({units, n_in}, random_vec(rng, units * n_in), {units}, random_vec(rng, units));
  const Vec r = random_vec(rng, units);
  Vec out(units);
  auto loss = [&] {
    kernels::dense_forward(x.data(), n_in, params, out.data());
    return project(r, out);
  };
  auto grads = zeros_like(ParamSet<double>{params}).front();
  Vec dx(n_in);
  kernels::dense_backward(x.data(), n_in, params, r.data(), grads, dx.data());

  GradCheckResult res{"dense", 0.0, 0};
  Vec w(params.weight.data().begin(), params.weight.data().end());
  Vec b(params.bias.data().begin(), params.bias.data().end());
  auto with_params = [&] {
    std::copy(w.begin(), w.end(), params.weight.data().begin());
    std::copy(b.begin(), b.end(), params.bias.data().begin());
    return loss();
  };
  compare(res, w, Vec(grads.weight.data().begin(), grads.weight.data().end()), with_params, step);
  compare(res, b, Vec(grads.bias.data().begin(), grads.bias.data().end()), with_params, step);
  compare(res, x, dx, loss, step);
  return res;
}

GradCheckResult check_relu(Rng& rng, double step) {
  const std::size_t n = 40;
  Vec x(n);
  for (double& v : x) {
    const double mag = rng.uniform(std::max(0.05, 10 * step), 1.0);
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  const Vec r = random_vec(rng, n);
  Vec out(n), dx(n);
  auto loss = [&] {
    kernels::relu_forward(x.data(), n, out.data());
    return project(r, out);
  };
  kernels::relu_backward(x.data(), n, r.data(), dx.data());
  GradCheckResult res{"relu", 0.0, 0};
  compare(res, x, dx, loss, step);
  return res;
}

GradCheckResult check_maxpool(Rng& rng, double step) {
  const ActivationShape in_shape{2, 6, 7}; // odd width exercises the dropped column
  const int size = 2;
  const ActivationShape out_shape{2, 3, 3};
  // Distinct values on a grid coarser than 2 * step: no perturbation can
  // change which element wins a window.
  std::vector<std::size_t> perm(in_shape.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm.begin(), perm.end());
  const double spacing = std::max(0.01, 10 * step);
  Vec x(in_shape.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(perm[i]) * spacing - 0.3;
  const Vec r = random_vec(rng, out_shape.size());
  Vec out(out_shape.size()), dx(in_shape.size());
  std::vector<std::uint32_t> argmax;
  auto loss = [&] {
    kernels::maxpool_forward(x.data(), in_shape, size, out.data(), argmax);
    return project(r, out);
  };
  loss();
  kernels::maxpool_backward(in_shape, argmax, r.data(), dx.data());
  GradCheckResult res{"maxpool", 0.0, 0};
  compare(res, x, dx, loss, step);
  return res;
}

GradCheckResult check_softmax(Rng& rng, double step) {
  GradCheckResult res{"softmax", 0.0, 0};
  for (int label = 0; label < kClassCount; ++label) {
    Vec logits = random_vec(rng, kClassCount, -3.0, 3.0);
    Vec probs(kClassCount);
    kernels::softmax(logits.data(), logits.size(), probs.data());
    Vec analytic(kClassCount);
    for (int c = 0; c < kClassCount; ++c) analytic[c] = probs[c] - (c == label ? 1.0 : 0.0);
    auto loss = [&] { return kernels::cross_entropy(logits.data(), logits.size(), label); };
    compare(res, logits, analytic, loss, step);
  }
  return res;
}

GradCheckResult check_network(Rng& rng, double step) {
  ModelConfig cfg;
  cfg.input_side = 9;
  cfg.input_channels = 3;
  cfg.layers = {ConvLayer{3, 3}, ReluLayer{}, MaxPoolLayer{2}, DenseLayer{5},
                ReluLayer{},     DenseLayer{kClassCount}, SoftmaxLayer{}};
  auto model = cast_model<double>(build_model(cfg, rng.next()));
  // Non-zero biases so no ReLU input sits exactly at zero.
  for (auto& p : model.params) {
    for (double& b : p.bias.data()) b = rng.uniform(-0.1, 0.1);
  }
  const std::size_t n = 3;
  BasicTensor<double> batch({n, 3, 9, 9}, random_vec(rng, n * 3 * 81, 0.0, 1.0));
  const std::vector<int> labels{0, 1, 1};
  const auto analytic = loss_and_grads(model, batch, labels);

  GradCheckResult res{"network", 0.0, 0};
  for (std::size_t l = 0; l < model.params.size(); ++l) {
    for (auto* which : {&model.params[l].weight, &model.params[l].bias}) {
      const auto& grad_tensor = which == &model.params[l].weight ? analytic.grads[l].weight
                                                                 : analytic.grads[l].bias;
      Vec values(which->data().begin(), which->data().end());
      auto loss = [&] {
        std::copy(values.begin(), values.end(), which->data().begin());
        return loss_and_grads(model, batch, labels).loss;
      };
      compare(res, values, Vec(grad_tensor.data().begin(), grad_tensor.data().end()), loss, step);
      std::copy(values.begin(), values.end(), which->data().begin());
    }
  }
  return res;
}

} // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kDenominatorFloor});
  return std::abs(analytic - numeric) / denom;
}

std::vector<GradCheckResult> run_gradient_checks(std::uint64_t seed, double step) {
  Rng rng(seed);
  return {check_conv(rng, step),    check_maxpool(rng, step), check_dense(rng, step),
          check_relu(rng, step),    check_softmax(rng, step), check_network(rng, step)};
}

} // namespace palm::nn
