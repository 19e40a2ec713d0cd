#pragma once

// Mini-batch SGD with momentum, weight decay and a step-halving learning
// rate, over P x K identity-balanced batches.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <vector>

#include "wbc/dataio.hpp"
#include "wbc/loss.hpp"
#include "wbc/model.hpp"
#include "wbc/random.hpp"

namespace wbc {

struct SGDConfig {
  double initial_lr = 0.008;
  std::size_t halve_period = 4000;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::size_t batch_size = 300;
  std::size_t identities_per_batch = 0;  // P; 0 derives P = batch_size / images_per_identity
  std::size_t images_per_identity = 4;   // K
  std::size_t max_iters = 500;
  std::uint64_t seed = 1;
  /// Worker threads for per-sample forward/backward; results do not depend on it.
  std::size_t threads = 1;

  /// Desk-scale profile: batch 32 as 8 x 4, halving every 200 of 500 iterations.
  static SGDConfig desk_scale();
};

void validate_sgd_config(const SGDConfig& cfg);

/// initial_lr / 2^floor(iter / halve_period)
double lr_schedule(std::size_t iter, const SGDConfig& cfg);

struct TrainState {
  std::size_t iteration = 0;
  ModelParams velocity;  // mirrors the parameter layout
};

TrainState init_train_state(const ModelParams& params);

/// v <- momentum v - lr (g + weight_decay theta); theta <- theta + v.
void sgd_step(ModelParams& params, const ModelParams& grads, TrainState& state,
              const SGDConfig& cfg);

/// Deterministic P x K batches covering one epoch without replacement.
/// Throws ConfigError when the dataset cannot supply a single batch.
std::vector<std::vector<std::size_t>> make_batches(std::span<const int> labels,
                                                   const SGDConfig& cfg, Rng& epoch_rng);

struct LogRow {
  std::size_t iter = 0;
  double lr = 0.0;
  double loss = 0.0;
  double active_frac = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<LogRow> log;
};

TrainResult train(const std::vector<Sample>& dataset, const ModelConfig& model_cfg,
                  const SGDConfig& sgd_cfg, const LossConfig& loss_cfg = {});

/// Same as train() but starting from explicit parameters.
TrainResult train_from(const std::vector<Sample>& dataset, ModelParams params,
                       const SGDConfig& sgd_cfg, const LossConfig& loss_cfg = {});

/// `iter,lr,loss,active_frac` with a header line.
void write_log_csv(std::ostream& os, const std::vector<LogRow>& log);

}  // namespace wbc
