// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tsert/data.hpp"
#include "tsert/model.hpp"

namespace tsert {

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 512;
  std::size_t max_epochs = 80;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  double val_fraction = 0.2;  // of training trials, held out for early stopping

  void validate() const;
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<std::vector<double>> m, v;
};

/// One bias-corrected Adam update of every parameter from its grad(); params
/// without a gradient are treated as having zero gradient.
void adam_step(std::span<Tensor> params, AdamState& state, double lr);

/// base_lr * 0.5 * (1 + cos(pi * epoch / max_epochs)).
double cosine_lr(std::size_t epoch, std::size_t max_epochs, double base_lr);

inline constexpr double kBceClamp = 1e-7;
Tensor bce_loss(const Tensor& probs, std::span<const int> labels);

/// Tracks validation loss; an epoch counts as an improvement only when it
/// beats the best loss by more than min_delta.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience, double min_delta = 1e-5)
      : patience_(patience), min_delta_(min_delta) {}

  /// Records the loss of the next epoch; returns true when it is a new best.
  bool update(double loss);
  bool should_stop() const { return stale_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_; }
  std::size_t epochs_seen() const { return seen_; }

 private:
  std::size_t patience_;
  double min_delta_;
  double best_ = 0.0;
  std::size_t best_epoch_ = 0;
  std::size_t seen_ = 0;
  std::size_t stale_ = 0;
};

/// Convenience form over a whole history.
bool early_stop(std::span<const double> history, std::size_t patience);

struct Metrics {
  double accuracy = 0.0;
  double f1 = 0.0;
};

/// Accuracy and positive-class F1; F1 is 0 when precision or recall is
/// undefined. Throws DimensionError on empty or mismatched input.
Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels);

/// Probabilities for the selected samples, computed without recording.
std::vector<double> predict(const TsertModel& model, const std::vector<Sample>& samples,
                            std::span<const std::size_t> indices, std::size_t batch_size = 64);

std::vector<int> threshold(std::span<const double> probs, double cut = 0.5);

struct TrainResult {
  TsertModel model;
  double initial_loss = 0.0;  // mean training loss before the first update
  std::vector<double> train_loss;
  std::vector<double> val_loss;  // empty when training without validation
  std::vector<double> train_accuracy;
  std::vector<double> lr;
  std::size_t best_epoch = 0;
  double best_loss = 0.0;  // monitored loss at best_epoch
};

using EpochCallback = std::function<void(std::size_t epoch, const TrainResult&)>;

/// Trains a fresh model on `train` for config.target. When `val` is
/// non-empty it drives early stopping; otherwise the training loss does. The
/// returned model holds the best-epoch weights.
TrainResult train_fold(const std::vector<Sample>& samples, const std::vector<std::size_t>& train,
                       const std::vector<std::size_t>& val, const TrainConfig& config,
                       const ModelConfig& model_config, const EpochCallback& on_epoch = {});

/// Mean BCE of the model on the selected samples, without recording.
double evaluate_loss(const TsertModel& model, const std::vector<Sample>& samples,
                     std::span<const std::size_t> indices, Target target);

struct FoldResult {
  std::uint32_t subject = 0;
  Target target = Target::kArousal;
  double accuracy = 0.0;
  double f1 = 0.0;
  std::size_t n_test = 0;
  std::size_t best_epoch = 0;
};

struct LosoResult {
  std::vector<FoldResult> folds;
  double mean_accuracy = 0.0;
  double mean_f1 = 0.0;
};

using FoldCallback = std::function<void(const FoldResult&)>;

/// One model per subject fold for model_config.target: training subjects'
/// labelled samples are split by trial into train/validation, the held-out
/// subject is scored with accuracy and F1.
LosoResult run_loso(const std::vector<Sample>& samples, const ModelConfig& model_config,
                    const TrainConfig& config, const FoldCallback& on_fold = {});

/// Tab-separated: header `subject target variant accuracy f1 n_test`, one row
/// per fold, then a `# mean` comment line.
void write_results(const std::string& path, const LosoResult& result, Variant variant);

}  // namespace tsert
