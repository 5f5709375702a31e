#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "occ/augment.hpp"
#include "occ/dataset.hpp"
#include "occ/network.hpp"

namespace occ {

// Momentum SGD with coupled L2 weight decay and a single cosine cycle over
// total_steps. Velocity slots align with model parameters by index.
struct OptimizerState {
  std::vector<Tensor> velocity;
  double base_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0003;
  std::uint64_t total_steps = 0;
  std::uint64_t step = 0;
};

OptimizerState make_optimizer(const ModelBundle& model, double base_lr, double momentum,
                              double weight_decay, std::uint64_t total_steps);

// lr = 0.5 * base_lr * (1 + cos(pi * step / total_steps)); no warmup or
// restarts. Errors when step is outside [0, total_steps].
double lr_at(std::uint64_t step, const OptimizerState& state);

// g <- grad + weight_decay * w (biases and batch-norm affine params exempt);
// v <- momentum * v + g; w <- w - lr_at(step) * v. Aborts on NaN gradients.
void sgd_step(ModelBundle& model, const std::vector<Tensor>& grads, OptimizerState& state);

struct TrainRun {
  Objective objective = Objective::contrastive;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double base_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0003;
  double temperature = 0.2;
  bool symmetric_contrastive = false;
  std::size_t checkpoint_every = 0;  // epochs; 0 disables checkpoints
  std::string checkpoint_dir;
};

struct StepRecord {
  std::uint64_t step;
  double lr;
  double loss;
};

struct TrainResult {
  std::vector<StepRecord> trace;
  std::vector<double> epoch_mean_loss;
};

// Epoch loop with seeded reshuffling; only full batches are visited (the
// remainder is reshuffled into later epochs). For contrastive_distaug the
// dataset is expanded through the plan's dist_set first and an epoch covers
// the expanded dataset once. Pure function of (run, model, data, plan).
TrainResult train(const TrainRun& run, ModelBundle& model, const Dataset& data,
                  const AugmentPlan& plan);

void write_loss_trace(const std::string& path, const std::vector<StepRecord>& trace);

}  // namespace occ
