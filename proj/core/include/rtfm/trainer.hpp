#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rtfm/dataset.hpp"
#include "rtfm/losses.hpp"
#include "rtfm/model.hpp"

namespace rtfm {

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 5e-4;
  std::size_t batch_abnormal = 32;
  std::size_t batch_normal = 32;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
  LossConfig loss;

  void validate() const;
};

/// Adam moments for a fixed list of parameter tensors.
struct OptimState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update from each tensor's accumulated grad, with
/// decoupled weight decay applied first: p <- p * (1 - lr * wd).
/// A non-finite gradient raises NumericError and leaves everything untouched.
void adam_step(std::span<Tensor* const> params, OptimState& state, double learning_rate,
               double weight_decay);

/// Draws class-balanced mini-batches. Each class is cycled through a fresh
/// random permutation, so within an epoch every video is used once before any
/// repeats.
class BatchSampler {
 public:
  BatchSampler(std::vector<std::size_t> abnormal, std::vector<std::size_t> normal,
               std::size_t batch_abnormal, std::size_t batch_normal, std::uint64_t seed);

  /// Dataset indices: batch_abnormal abnormal videos, then batch_normal normal.
  std::vector<std::size_t> next();
  std::size_t steps_per_epoch() const;

 private:
  struct Pool {
    std::vector<std::size_t> items;
    std::size_t cursor = 0;
  };
  void draw(Pool& pool, std::size_t count, std::vector<std::size_t>& out);

  Pool abnormal_, normal_;
  std::size_t batch_abnormal_, batch_normal_;
  std::mt19937_64 rng_;
};

/// Spec-level wrapper: a sampler over `videos` split by label.
BatchSampler make_sampler(std::span<const Video* const> videos, const TrainConfig& config);

struct StepLog {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss_total = 0.0;
  double loss_s = 0.0;
  double loss_f = 0.0;
  double g_abnormal = 0.0;
  double g_normal = 0.0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss_total = 0.0;
  double loss_s = 0.0;
  double loss_f = 0.0;
  double g_abnormal = 0.0;
  double g_normal = 0.0;
  double val_auc = 0.0;  // NaN without a usable validation split
};

struct TrainResult {
  ModelParams params;
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;
  bool diverged = false;
  std::string message;
};

/// Writes the header for the CSV training log.
void write_log_header(std::ostream& out);

/// Full training loop. `params` seeds the optimisation (use ModelParams::xavier
/// for a fresh model). When `log_csv` is given, one row per step is appended;
/// the last row of each epoch carries that epoch's validation AUC.
/// On a non-finite loss, gradient or validation score, training stops and the
/// result holds the last parameters that produced a finite loss, with
/// diverged = true.
TrainResult train(std::span<const Video* const> train_set, std::span<const Video* const> val_set,
                  ModelParams params, const TrainConfig& config, std::ostream* log_csv = nullptr);

/// Snippet-level AUC of `params` over videos carrying snippet labels.
/// Returns NaN when the pooled labels lack a class.
double snippet_auc(const ModelParams& params, std::span<const Video* const> videos);

}  // namespace rtfm
