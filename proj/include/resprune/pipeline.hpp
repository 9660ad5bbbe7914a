// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "resprune/distill.hpp"
#include "resprune/prune.hpp"

namespace resprune {

/// Every knob of a run. Keys in the config file match the field names.
struct RunConfig {
  // Data. source is "synthetic" or "idx".
  std::string data_source = "synthetic";
  std::string train_images, train_labels, test_images, test_labels;
  std::size_t class_count = 10;
  std::size_t samples_per_class = 60;
  std::size_t test_samples_per_class = 100;
  std::size_t image_side = 32;
  std::uint64_t data_seed = 7;

  // Architecture.
  std::size_t stem_width = 16;
  std::vector<std::size_t> stage_widths{32, 64, 128};
  std::vector<std::size_t> blocks_per_stage{2, 2, 2};
  bool depthwise = false;

  // Teacher training.
  std::size_t train_epochs = 30;
  double train_lr = 0.1;
  double train_mixup_alpha = 1.0;
  bool train_flip = true;
  std::size_t batch_size = 32;
  std::size_t warmup_epochs = 5;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t train_seed = 0;

  // Pruning.
  Criterion criterion = Criterion::kKl;
  PlanTarget target = PlanTarget::parse("macs:0.5");
  std::string scope = "all";
  double retention_floor = 0.3;
  std::size_t proxy_size = 256;
  std::uint64_t prune_seed = 0;
  std::size_t workers = 1;

  // Fine-tuning.
  std::size_t step1_epochs = 200;
  std::size_t step2_epochs = 16;
  double step1_lr = 0.01;
  double step2_lr = 1e-4;
  double step1_temperature = 2.0;
  double step1_alpha = 0.7;
  double step2_temperature = 1.0;
  double step2_alpha = 0.7;
  double eta = 1.0;
  double mixup_alpha = 1.0;
  bool use_kd = true;
  bool use_mixup = true;
  bool run_step2 = true;
  bool expand = true;
  bool refine = true;
  bool step2_flip = true;
  std::uint64_t finetune_seed = 0;
  /// Optional directory written by the expand command; generated on the fly when absent.
  std::string expanded_dir;

  std::string output_dir;

  /// Throws InvalidArgument listing every problem found.
  void validate() const;
  /// Sets one field from its text form; throws on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  /// "key=value" form.
  void apply_override(const std::string& assignment);
  /// Resolved snapshot, one "key = value" line per field, in a fixed order.
  std::string to_text() const;

  static std::vector<std::string> keys();
  /// Parses "key = value" lines; '#' starts a comment. Unknown keys are errors.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);

  TinyResNetConfig architecture() const;
  TrainConfig train_config() const;
  FinetuneConfig finetune_config() const;
  PlanOptions plan_options() const;
};

/// Output root: RESPRUNE_OUT if set, else "runs".
std::string default_output_root();

struct DataSplits {
  Dataset train;
  Dataset test;
  ChannelStats stats;
};
DataSplits load_data(const RunConfig& cfg);

struct TrainSummary {
  std::string checkpoint;
  double train_accuracy = 0;
  std::optional<double> test_accuracy;
};

struct PruneSummary {
  std::string checkpoint;
  std::string plan_path;
  Cost before, after;
  std::size_t removed_groups = 0;
  std::optional<double> test_accuracy;  // before fine-tuning
  std::string shortfall;
};

struct FinetuneSummary {
  std::string checkpoint;
  std::optional<double> final_accuracy;
  std::size_t epochs = 0;
};

// Each command writes into cfg.output_dir (created if missing), including a
// resolved config snapshot and line-delimited JSON metrics.
TrainSummary cmd_train(const RunConfig& cfg);
PruneSummary cmd_prune(const RunConfig& cfg, const std::string& teacher_checkpoint);
FinetuneSummary cmd_finetune(const RunConfig& cfg, const std::string& pruned_checkpoint,
                             const std::string& teacher_checkpoint);
/// Writes the expanded training set as IDX files plus a provenance sidecar.
std::string cmd_expand(const RunConfig& cfg);
double cmd_eval(const RunConfig& cfg, const std::string& checkpoint);
/// Collects every run below run_dir into a criterion table; writes
/// report.txt and report.json into run_dir and returns the text.
std::string cmd_report(const std::string& run_dir);

}  // namespace resprune
