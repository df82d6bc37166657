// SPDX-License-Identifier: Apache-2.0
//
// tsert: synthetic data, preprocessing, training and evaluation driver.
//
//   tsert synth --subjects 6 --trials 40 --seed 1 --out data/raw
//   tsert preprocess --dataset data/raw/manifest.txt --out data/pre
//   tsert loso --dataset data/pre/manifest.txt --variant tsert --profile desk --out runs/a
//   tsert train --dataset ... --test-subject 3 --out runs/b
//   tsert eval --checkpoint runs/b/model.tsck --dataset ... --out runs/b
//   tsert gradcheck
//
// Metrics go to stdout as `key=value` records and to a results file in --out.
#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "tsert/checkpoint.hpp"
#include "tsert/data.hpp"
#include "tsert/error.hpp"
#include "tsert/gradcheck_suite.hpp"
#include "tsert/profiles.hpp"
#include "tsert/recording.hpp"
#include "tsert/synth.hpp"
#include "tsert/train.hpp"

namespace fs = std::filesystem;
using namespace tsert;

namespace {

struct RunOptions {
  std::string dataset;
  std::string target = "arousal";
  std::string variant = "tsert";
  std::string profile = "desk";
  std::uint64_t seed = 0;
  std::string out = ".";
  std::string partition;
  std::size_t epochs = 0;  // 0 keeps the profile value
};

void add_run_options(CLI::App* app, RunOptions& o, bool needs_model = true) {
  app->add_option("--dataset", o.dataset, "manifest of EEG1 recordings")->required();
  app->add_option("--target", o.target, "arousal|valence")->check(CLI::IsMember({"arousal", "valence"}));
  app->add_option("--out", o.out, "output directory");
  if (!needs_model) return;
  app->add_option("--variant", o.variant, "tsert|sert|tert|stert|tsert-psd")
      ->check(CLI::IsMember({"tsert", "sert", "tert", "stert", "tsert-psd"}));
  app->add_option("--profile", o.profile, "paper|desk")->check(CLI::IsMember({"paper", "desk"}));
  app->add_option("--seed", o.seed, "seed for initialization, splits and batching");
  app->add_option("--partition", o.partition, "brain-region partition file");
  app->add_option("--epochs", o.epochs, "override the profile's epoch budget");
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

struct Dataset {
  std::vector<std::string> labels;
  double sample_rate = 0.0;
  std::vector<Sample> samples;
};

Dataset load_dataset(const std::string& manifest, const signal::PreprocessOptions& opts = {}) {
  const auto paths = read_manifest(manifest);
  if (paths.empty()) throw ConfigError(manifest + " lists no recordings");
  Dataset ds;
  ds.labels = read_recording(paths.front()).channel_labels;
  ds.sample_rate = opts.target_rate;
  ds.samples = load_samples(manifest, opts);
  if (ds.samples.empty()) throw ConfigError(manifest + " yields no labelled windows");
  return ds;
}

ModelConfig make_model_config(const RunOptions& o, const Dataset& ds) {
  ModelConfig mc = model_profile(parse_profile(o.profile));
  mc.variant = parse_variant(o.variant);
  mc.target = parse_target(o.target);
  mc.n_channels = ds.labels.size();
  mc.signal_len = ds.samples.front().length;
  if (!o.partition.empty()) {
    mc.partition = RegionPartition::load(o.partition, ds.labels);
  } else if (ds.labels != default_channel_labels()) {
    throw ConfigError("dataset channel layout differs from the default 32-channel montage; pass --partition");
  }
  mc.validate();
  return mc;
}

TrainConfig make_train_config(const RunOptions& o) {
  TrainConfig tc = train_profile(parse_profile(o.profile));
  tc.seed = o.seed;
  if (o.epochs > 0) {
    tc.max_epochs = o.epochs;
    tc.patience = std::min(tc.patience, tc.max_epochs);
  }
  return tc;
}

std::vector<Sample> model_inputs(const std::vector<Sample>& samples, const ModelConfig& mc, double fs) {
  if (mc.variant != Variant::kTsertPsd) return samples;
  std::vector<Sample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(to_psd_form(s, mc.patches, fs));
  return out;
}

int cmd_synth(std::size_t subjects, std::size_t trials, std::uint64_t seed, double trial_seconds,
              const std::string& out) {
  signal::SynthOptions opts;
  opts.n_subjects = subjects;
  opts.trials_per_subject = trials;
  opts.seed = seed;
  if (trial_seconds > 0.0) opts.trial_seconds = trial_seconds;
  const auto recs = signal::synth_generate(opts);
  fs::create_directories(out);
  std::vector<fs::path> files;
  for (const auto& rec : recs) {
    char name[64];
    std::snprintf(name, sizeof name, "s%02u_t%03u.eeg1", rec.subject_id, rec.trial_id);
    write_recording(rec, fs::path(out) / name);
    files.emplace_back(name);
  }
  write_manifest(fs::path(out) / "manifest.txt", files);
  std::cout << "synth subjects=" << subjects << " trials=" << trials << " seed=" << seed
            << " recordings=" << recs.size() << " manifest=" << (fs::path(out) / "manifest.txt").string()
            << '\n';
  return 0;
}

int cmd_preprocess(const std::string& dataset, const std::string& out) {
  fs::create_directories(out);
  std::vector<fs::path> files;
  std::size_t windows = 0;
  for (const auto& path : read_manifest(dataset)) {
    const auto rec = preprocess_recording(read_recording(path));
    windows += make_samples(rec).size();
    const auto name = path.filename();
    write_recording(rec, fs::path(out) / name);
    files.push_back(name);
  }
  write_manifest(fs::path(out) / "manifest.txt", files);
  std::cout << "preprocess recordings=" << files.size() << " windows=" << windows
            << " manifest=" << (fs::path(out) / "manifest.txt").string() << '\n';
  return 0;
}

void log_epoch(std::size_t epoch, const TrainResult& r) {
  std::cout << "epoch " << epoch << " lr=" << fmt(r.lr.back()) << " train_loss=" << fmt(r.train_loss.back())
            << " train_acc=" << fmt(r.train_accuracy.back());
  if (!r.val_loss.empty()) std::cout << " val_loss=" << fmt(r.val_loss.back());
  std::cout << '\n';
}

int cmd_train(const RunOptions& o, std::optional<std::uint32_t> test_subject) {
  const auto ds = load_dataset(o.dataset);
  const auto mc = make_model_config(o, ds);
  const auto tc = make_train_config(o);
  const auto samples = model_inputs(ds.samples, mc, ds.sample_rate);

  std::set<std::uint32_t> subjects;
  for (const auto& s : samples) subjects.insert(s.subject_id);
  const std::uint32_t held_out = test_subject.value_or(*subjects.rbegin());
  if (!subjects.contains(held_out)) throw ConfigError("subject " + std::to_string(held_out) + " not in dataset");
  std::vector<std::size_t> pool, test_all;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (samples[i].subject_id == held_out ? test_all : pool).push_back(i);
  }
  const auto [train, val] =
      split_by_trial(samples, labelled(samples, pool, mc.target), tc.val_fraction, tc.seed + held_out);
  const auto test = labelled(samples, test_all, mc.target);

  const auto result = train_fold(samples, train, val, tc, mc, log_epoch);
  fs::create_directories(o.out);
  save_checkpoint(result.model, fs::path(o.out) / "model.tsck");
  {
    std::ofstream os(fs::path(o.out) / "train_log.tsv");
    os << std::setprecision(17) << "epoch\tlr\ttrain_loss\ttrain_accuracy\tval_loss\n";
    for (std::size_t e = 0; e < result.train_loss.size(); ++e) {
      os << e << '\t' << result.lr[e] << '\t' << result.train_loss[e] << '\t' << result.train_accuracy[e] << '\t'
         << (result.val_loss.empty() ? 0.0 : result.val_loss[e]) << '\n';
    }
  }
  std::cout << "train variant=" << to_string(mc.variant) << " target=" << o.target << " train=" << train.size()
            << " val=" << val.size() << " best_epoch=" << result.best_epoch
            << " best_loss=" << fmt(result.best_loss) << '\n';
  if (!test.empty()) {
    std::vector<int> labels;
    for (auto i : test) labels.push_back(*samples[i].label(mc.target));
    const auto m = compute_metrics(threshold(predict(result.model, samples, test)), labels);
    LosoResult lr;
    lr.folds.push_back({held_out, mc.target, m.accuracy, m.f1, test.size(), result.best_epoch});
    lr.mean_accuracy = m.accuracy;
    lr.mean_f1 = m.f1;
    write_results((fs::path(o.out) / "results.tsv").string(), lr, mc.variant);
    std::cout << "test subject=" << held_out << " accuracy=" << fmt(m.accuracy) << " f1=" << fmt(m.f1)
              << " n_test=" << test.size() << '\n';
  }
  return 0;
}

int cmd_loso(const RunOptions& o) {
  const auto ds = load_dataset(o.dataset);
  const auto mc = make_model_config(o, ds);
  const auto tc = make_train_config(o);
  const auto samples = model_inputs(ds.samples, mc, ds.sample_rate);
  const auto start = std::chrono::steady_clock::now();
  const auto result = run_loso(samples, mc, tc, [](const FoldResult& f) {
    std::cout << "fold subject=" << f.subject << " target=" << to_string(f.target) << " accuracy=" << fmt(f.accuracy)
              << " f1=" << fmt(f.f1) << " n_test=" << f.n_test << " best_epoch=" << f.best_epoch << std::endl;
  });
  fs::create_directories(o.out);
  const auto path = fs::path(o.out) / "results.tsv";
  write_results(path.string(), result, mc.variant);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << "loso variant=" << to_string(mc.variant) << " target=" << o.target << " folds=" << result.folds.size()
            << " mean_accuracy=" << fmt(result.mean_accuracy) << " mean_f1=" << fmt(result.mean_f1)
            << " seconds=" << fmt(seconds) << " results=" << path.string() << '\n';
  return 0;
}

int cmd_eval(const RunOptions& o, const std::string& checkpoint, std::optional<std::uint32_t> subject) {
  auto model = load_checkpoint(checkpoint);
  auto mc = model.config();
  if (o.target != to_string(mc.target)) {
    throw ConfigError("checkpoint was trained for " + to_string(mc.target) + ", not " + o.target);
  }
  const auto ds = load_dataset(o.dataset);
  if (ds.labels.size() != mc.n_channels) {
    throw ConfigError("dataset has " + std::to_string(ds.labels.size()) + " channels, checkpoint expects " +
                      std::to_string(mc.n_channels));
  }
  const auto samples = model_inputs(ds.samples, mc, ds.sample_rate);
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!subject || samples[i].subject_id == *subject) pool.push_back(i);
  }
  const auto idx = labelled(samples, pool, mc.target);
  if (idx.empty()) throw ConfigError("no labelled samples to evaluate");
  std::map<std::uint32_t, std::vector<std::size_t>> by_subject;
  for (auto i : idx) by_subject[samples[i].subject_id].push_back(i);

  LosoResult result;
  for (const auto& [sid, sel] : by_subject) {
    std::vector<int> labels;
    for (auto i : sel) labels.push_back(*samples[i].label(mc.target));
    const auto m = compute_metrics(threshold(predict(model, samples, sel)), labels);
    result.folds.push_back({sid, mc.target, m.accuracy, m.f1, sel.size(), 0});
    std::cout << "eval subject=" << sid << " accuracy=" << fmt(m.accuracy) << " f1=" << fmt(m.f1)
              << " n_test=" << sel.size() << '\n';
    result.mean_accuracy += m.accuracy;
    result.mean_f1 += m.f1;
  }
  result.mean_accuracy /= static_cast<double>(result.folds.size());
  result.mean_f1 /= static_cast<double>(result.folds.size());
  fs::create_directories(o.out);
  write_results((fs::path(o.out) / "eval.tsv").string(), result, mc.variant);
  std::cout << "eval mean_accuracy=" << fmt(result.mean_accuracy) << " mean_f1=" << fmt(result.mean_f1) << '\n';
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  const auto checks = run_gradcheck_suite(seed);
  std::size_t failed = 0;
  for (const auto& c : checks) {
    std::cout << "gradcheck name=" << c.name << " checked=" << c.checked << " max_rel_error=" << fmt(c.max_error)
              << " status=" << (c.passed ? "ok" : "FAIL") << '\n';
    failed += !c.passed;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << "gradcheck total=" << checks.size() << " failed=" << failed << " seconds=" << fmt(seconds) << '\n';
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"temporal-spatial transformer for EEG emotion recognition"};
  app.require_subcommand(1);

  std::size_t subjects = 6, trials = 40;
  std::uint64_t synth_seed = 1;
  double trial_seconds = 0.0;
  std::string synth_out = "synth";
  auto* synth = app.add_subcommand("synth", "generate a synthetic EEG1 dataset");
  synth->add_option("--subjects", subjects)->check(CLI::Range(2, 1000));
  synth->add_option("--trials", trials)->check(CLI::Range(1, 100000));
  synth->add_option("--seed", synth_seed);
  synth->add_option("--trial-seconds", trial_seconds, "trial duration (default from generator)");
  synth->add_option("--out", synth_out);

  RunOptions pre_opts;
  auto* preprocess = app.add_subcommand("preprocess", "resample and band-pass raw EEG1 recordings");
  add_run_options(preprocess, pre_opts, false);

  RunOptions train_opts;
  std::optional<std::uint32_t> test_subject;
  auto* train = app.add_subcommand("train", "train on all but one subject, test on that subject");
  add_run_options(train, train_opts);
  train->add_option("--test-subject", test_subject, "held-out subject (default: highest id)");

  RunOptions loso_opts;
  auto* loso = app.add_subcommand("loso", "leave-one-subject-out cross-validation");
  add_run_options(loso, loso_opts);

  RunOptions eval_opts;
  std::string checkpoint;
  std::optional<std::uint32_t> eval_subject;
  auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset");
  add_run_options(eval, eval_opts, false);
  eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--subject", eval_subject, "restrict to one subject");

  std::uint64_t grad_seed = 7;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gradcheck->add_option("--seed", grad_seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(subjects, trials, synth_seed, trial_seconds, synth_out);
    if (*preprocess) return cmd_preprocess(pre_opts.dataset, pre_opts.out);
    if (*train) return cmd_train(train_opts, test_subject);
    if (*loso) return cmd_loso(loso_opts);
    if (*eval) return cmd_eval(eval_opts, checkpoint, eval_subject);
    if (*gradcheck) return cmd_gradcheck(grad_seed);
  } catch (const std::exception& e) {
    std::cerr << "tsert: error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
