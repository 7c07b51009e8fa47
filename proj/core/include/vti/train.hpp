#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vti/image.hpp"
#include "vti/model.hpp"

namespace vti {

struct TrainingExample {
  Image image;
  std::vector<int> tokens;  // full text sequence: BOS ... EOS
};

struct TrainOptions {
  int epochs = 20;
  double lr = 3e-3;
  std::uint64_t seed = 1;
  int batch_size = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int threads = 0;  // 0 = hardware default (capped); result is thread-count independent
};

struct TrainResult {
  ModelParams params;
  std::vector<double> epoch_loss;  // mean next-token cross-entropy per epoch
};

/// Train from N(0, 0.02^2) seeded init with Adam on next-token
/// cross-entropy. Gradients are accumulated in fixed-size example blocks
/// folded in block order, so checkpoints are byte-identical for any
/// thread count. Throws DivergenceError (with the epoch) on NaN loss.
TrainResult train(const ModelConfig& config, const std::vector<TrainingExample>& dataset,
                  const TrainOptions& options);

/// Training-path loss of the current weights (no gradient, float path).
double dataset_loss(const ModelConfig& config, const ModelParams& params,
                    std::span<const TrainingExample> dataset);

namespace detail {

// Double-precision twins of the training graph, for finite-difference
// gradient checks. Same formulas as the float path.
std::vector<double> params_to_f64(const ModelParams& params);
double loss_f64(const ModelConfig& config, const std::vector<double>& weights,
                const TrainingExample& example);
double loss_and_grad_f64(const ModelConfig& config, const std::vector<double>& weights,
                         const TrainingExample& example, std::vector<double>& grads);

}  // namespace detail

}  // namespace vti
