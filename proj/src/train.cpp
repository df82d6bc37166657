// SPDX-License-Identifier: Apache-2.0
#include "tsert/train.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>

#include "tsert/ops.hpp"

namespace tsert {

namespace {

std::vector<int> labels_of(const std::vector<Sample>& samples, std::span<const std::size_t> idx,
                           Target target) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) {
    const auto y = samples[i].label(target);
    if (!y) {
      throw ConfigError("sample of subject " + std::to_string(samples[i].subject_id) +
                        " has no " + to_string(target) + " label");
    }
    out.push_back(*y);
  }
  return out;
}

std::vector<std::vector<double>> snapshot(const nn::NamedTensors& params) {
  std::vector<std::vector<double>> out;
  for (const auto& [name, t] : params) out.emplace_back(t.data().begin(), t.data().end());
  return out;
}

void restore(nn::NamedTensors& params, const std::vector<std::vector<double>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].second.mutable_data();
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (max_epochs == 0) throw ConfigError("max_epochs must be at least 1");
  if (patience > max_epochs) throw ConfigError("patience exceeds max_epochs");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
}

void adam_step(std::span<Tensor> params, AdamState& state, double lr) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam: parameter count changed");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != p.numel()) {
      throw DimensionError("adam: parameter " + std::to_string(k) + " changed shape to " +
                           to_string(p.shape()));
    }
    const auto g = p.grad();
    auto w = p.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
    }
  }
}

double cosine_lr(std::size_t epoch, std::size_t max_epochs, double base_lr) {
  if (max_epochs == 0 || epoch > max_epochs) throw ConfigError("cosine_lr: epoch outside [0, max_epochs]");
  const double frac = static_cast<double>(epoch) / static_cast<double>(max_epochs);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

Tensor bce_loss(const Tensor& probs, std::span<const int> labels) {
  std::vector<double> targets(labels.begin(), labels.end());
  return ops::binary_cross_entropy(probs, targets, kBceClamp);
}

bool EarlyStopping::update(double loss) {
  ++seen_;
  if (seen_ == 1 || loss < best_ - min_delta_) {
    best_ = loss;
    best_epoch_ = seen_ - 1;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

bool early_stop(std::span<const double> history, std::size_t patience) {
  EarlyStopping es(patience);
  for (double v : history) es.update(v);
  return es.should_stop();
}

Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.empty()) throw DimensionError("metrics on empty input");
  if (predictions.size() != labels.size()) {
    throw DimensionError("metrics: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
  }
  std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predictions[i] == 1, y = labels[i] == 1;
    correct += p == y;
    tp += p && y;
    fp += p && !y;
    fn += !p && y;
  }
  Metrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  if (tp > 0) {
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    m.f1 = 2.0 * precision * recall / (precision + recall);
  }
  return m;
}

std::vector<double> predict(const TsertModel& model, const std::vector<Sample>& samples,
                            std::span<const std::size_t> indices, std::size_t batch_size) {
  NoGradGuard guard;
  std::vector<double> out;
  out.reserve(indices.size());
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const auto chunk = indices.subspan(start, std::min(batch_size, indices.size() - start));
    const Tensor probs = model.forward(stack_inputs(samples, chunk));
    out.insert(out.end(), probs.data().begin(), probs.data().end());
  }
  return out;
}

std::vector<int> threshold(std::span<const double> probs, double cut) {
  std::vector<int> out;
  out.reserve(probs.size());
  for (double p : probs) out.push_back(p >= cut ? 1 : 0);
  return out;
}

double evaluate_loss(const TsertModel& model, const std::vector<Sample>& samples,
                     std::span<const std::size_t> indices, Target target) {
  const auto probs = predict(model, samples, indices);
  const auto labels = labels_of(samples, indices, target);
  NoGradGuard guard;
  return bce_loss(Tensor::from({probs.size()}, probs), labels).item();
}

TrainResult train_fold(const std::vector<Sample>& samples, const std::vector<std::size_t>& train,
                       const std::vector<std::size_t>& val, const TrainConfig& config,
                       const ModelConfig& model_config, const EpochCallback& on_epoch) {
  config.validate();
  if (train.empty()) throw ConfigError("training set is empty");
  const Target target = model_config.target;
  TrainResult result{TsertModel(model_config, config.seed)};
  auto named = result.model.parameters();
  std::vector<Tensor> params;
  for (const auto& [name, t] : named) params.push_back(t);

  const auto train_labels = labels_of(samples, train, target);
  (void)labels_of(samples, val, target);
  result.initial_loss = evaluate_loss(result.model, samples, train, target);

  AdamState adam;
  EarlyStopping stopper(config.patience);
  auto best = snapshot(named);
  nn::Rng dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const nn::Context ctx{true, model_config.dropout, &dropout_rng, nullptr};
  auto& tape = Tape::current();

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    const double lr = cosine_lr(epoch, config.max_epochs, config.lr);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    const auto batches = batch_indices(train.size(), config.batch_size, config.seed + 1000003ULL * (epoch + 1));
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<std::size_t> idx;
      std::vector<int> labels;
      for (auto j : batches[b]) {
        idx.push_back(train[j]);
        labels.push_back(train_labels[j]);
      }
      tape.reset();
      try {
        const Tensor probs = result.model.forward(stack_inputs(samples, idx), &ctx);
        const Tensor loss = bce_loss(probs, labels);
        backward(loss);
        loss_sum += loss.item() * static_cast<double>(idx.size());
        const auto preds = threshold(probs.data());
        for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i];
      } catch (const NonFiniteError& e) {
        tape.reset();
        throw NonFiniteError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(b) + ": " + e.what());
      }
      adam_step(params, adam, lr);
      for (auto& p : params) p.zero_grad();
    }
    tape.reset();

    const double train_loss = loss_sum / static_cast<double>(train.size());
    result.train_loss.push_back(train_loss);
    result.train_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(train.size()));
    result.lr.push_back(lr);
    double monitored = train_loss;
    if (!val.empty()) {
      monitored = evaluate_loss(result.model, samples, val, target);
      result.val_loss.push_back(monitored);
    }
    if (stopper.update(monitored)) best = snapshot(named);
    if (on_epoch) on_epoch(epoch, result);
    if (stopper.should_stop()) break;
  }
  restore(named, best);
  result.best_epoch = stopper.best_epoch();
  result.best_loss = stopper.best_loss();
  return result;
}

LosoResult run_loso(const std::vector<Sample>& samples, const ModelConfig& model_config,
                    const TrainConfig& config, const FoldCallback& on_fold) {
  const auto plan = loso_split(samples);
  const Target target = model_config.target;
  LosoResult result;
  for (const auto& fold : plan.folds) {
    const auto train_all = labelled(samples, fold.train, target);
    const auto test = labelled(samples, fold.test, target);
    if (test.empty()) continue;
    const auto [train, val] = split_by_trial(samples, train_all, config.val_fraction,
                                             config.seed + fold.test_subject);
    const auto trained = train_fold(samples, train, val, config, model_config);
    const auto probs = predict(trained.model, samples, test);
    const auto metrics = compute_metrics(threshold(probs), labels_of(samples, test, target));
    FoldResult fr{fold.test_subject, target, metrics.accuracy, metrics.f1, test.size(),
                  trained.best_epoch};
    if (on_fold) on_fold(fr);
    result.folds.push_back(fr);
  }
  if (result.folds.empty()) throw ConfigError("no fold has labelled test samples");
  for (const auto& f : result.folds) {
    result.mean_accuracy += f.accuracy;
    result.mean_f1 += f.f1;
  }
  result.mean_accuracy /= static_cast<double>(result.folds.size());
  result.mean_f1 /= static_cast<double>(result.folds.size());
  return result;
}

void write_results(const std::string& path, const LosoResult& result, Variant variant) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os << std::setprecision(17);
  os << "subject\ttarget\tvariant\taccuracy\tf1\tn_test\n";
  for (const auto& f : result.folds) {
    os << f.subject << '\t' << to_string(f.target) << '\t' << to_string(variant) << '\t'
       << f.accuracy << '\t' << f.f1 << '\t' << f.n_test << '\n';
  }
  os << "# mean\taccuracy=" << result.mean_accuracy << "\tf1=" << result.mean_f1 << '\n';
}

}  // namespace tsert
