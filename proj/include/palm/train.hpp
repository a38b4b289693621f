#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "palm/dataset.hpp"
#include "palm/model.hpp"

namespace palm::nn {

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 32;
  int epochs = 30;
  std::uint64_t seed = 1;
  double validation_fraction = 0.2;
  bool augment = false; // random flips and quarter turns of training crops

  /// Throws InvalidArgument when any field is out of range.
  void validate() const;
};

struct TrainReport {
  std::vector<double> train_loss;          // per epoch
  std::vector<double> validation_accuracy; // per epoch
  std::vector<double> validation_loss;     // per epoch, mean cross-entropy
  double best_validation_accuracy = 0.0;
  int best_epoch = -1; // 0-based
  Model model;         // parameters after the best epoch: highest validation
                       // accuracy, ties broken by lower validation loss
};

/// velocity = momentum * velocity - lr * grad; param += velocity.
void sgd_step(Model& m, const Gradients& grads, Gradients& velocity, const TrainConfig& cfg);

/// Called after every epoch with (epoch, train loss, validation accuracy).
using EpochCallback = std::function<void(int, double, double)>;

/// Builds the model from `config` seeded with cfg.seed and trains it.
TrainReport train(const ModelConfig& config, const Dataset& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Trains starting from the given parameters.
TrainReport train(Model initial, const Dataset& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Channel-planar copy (c, y, x) of a raster, as the model consumes it.
void to_planar(const Raster& r, float* out);

/// Fraction of crops whose argmax class matches their label.
double accuracy(const Model& m, const Dataset& data);

} // namespace palm::nn
