// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "resprune/augment.hpp"
#include "resprune/autograd.hpp"
#include "resprune/data.hpp"
#include "resprune/nn.hpp"

namespace resprune {

enum class DistillStep { kStep1, kStep2 };

struct DistillConfig {
  double temperature = 2.0;
  double alpha = 0.7;
  DistillStep step = DistillStep::kStep1;

  static DistillConfig step1() { return {2.0, 0.7, DistillStep::kStep1}; }
  static DistillConfig step2() { return {1.0, 0.7, DistillStep::kStep2}; }
  void validate() const;
};

template <typename T>
struct LossParts {
  Var<T> total;
  double kl = 0;  // the divergence itself, before alpha * T^2
  double ce = 0;
};

/// alpha * T^2 * KL(p || q) + (1 - alpha) * CE(q_1, soft_labels), averaged
/// over rows. p = softmax(teacher / T) is a constant, q = softmax(student / T),
/// q_1 is the student's temperature-1 distribution.
template <typename T>
LossParts<T> step1_loss(Tape<T>& tape, Var<T> student, const Tensor<T>& teacher, const Tensor<T>& soft_labels,
                        const DistillConfig& cfg);

/// alpha * T^2 * KL(q || p) + (1 - alpha) * CE(q_1, labels). Gradients reach
/// both the student logits and the stored logits.
template <typename T>
LossParts<T> step2_loss(Tape<T>& tape, Var<T> student, Var<T> stored, std::span<const int> labels,
                        const DistillConfig& cfg);

/// Soft-label cross-entropy, averaged over rows.
template <typename T>
Var<T> soft_cross_entropy(Tape<T>& tape, Var<T> logits, const Tensor<T>& targets);

/// Per-record teacher logits, refined by plain SGD during step 2.
class LogitStore {
 public:
  LogitStore() = default;
  LogitStore(Tensor<float> logits, double eta);

  std::size_t size() const { return logits_.dim(0); }
  std::size_t class_count() const { return logits_.dim(1); }
  double eta() const { return eta_; }
  std::uint64_t epoch() const { return epoch_; }
  void set_epoch(std::uint64_t e) { epoch_ = e; }
  const Tensor<float>& logits() const { return logits_; }

  Tensor<float> gather(std::span<const std::size_t> ids) const;
  /// u <- u - eta * grad for each listed record; rows with non-finite
  /// gradients are skipped. Returns the number skipped.
  std::size_t update(std::span<const std::size_t> ids, const Tensor<float>& grads);

  void write(std::ostream& out) const;
  static LogitStore read(std::istream& in);
  void save(const std::string& path) const;
  static LogitStore load(const std::string& path);

 private:
  Tensor<float> logits_{Shape{0, 0}};
  double eta_ = 1.0;
  std::uint64_t epoch_ = 0;
};

std::size_t refine_logits(LogitStore& store, std::span<const std::size_t> ids, const Tensor<float>& grads);

/// Teacher logits for every record, eval mode.
Tensor<float> teacher_logits(NetworkGraph& teacher, const Dataset& ds, const ChannelStats& stats);

struct EpochMetrics {
  std::string phase;
  std::size_t epoch = 0;
  double lr = 0;
  double loss = 0;
  double kl = 0;
  double ce = 0;
  double train_accuracy = 0;
  std::optional<double> eval_accuracy;
  std::size_t skipped_refinements = 0;
};
using MetricsSink = std::function<void(const EpochMetrics&)>;

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr = 0.1;
  std::size_t warmup_epochs = 5;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  /// Beta parameter for mixup; 0 disables mixup.
  double mixup_alpha = 1.0;
  bool flip = true;
  std::uint64_t seed = 0;
};

/// Supervised training with optional mixup, warmup and cosine decay.
std::vector<EpochMetrics> train_supervised(NetworkGraph& net, const Dataset& train, const ChannelStats& stats,
                                           const TrainConfig& cfg, const Dataset* eval = nullptr,
                                           const MetricsSink& sink = {});

struct FinetuneConfig {
  std::size_t step1_epochs = 200;
  std::size_t step2_epochs = 16;
  std::size_t batch_size = 32;
  double step1_lr = 0.01;
  double step2_lr = 1e-4;
  std::size_t warmup_epochs = 5;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double mixup_alpha = 1.0;
  DistillConfig step1 = DistillConfig::step1();
  DistillConfig step2 = DistillConfig::step2();
  double eta = 1.0;
  bool use_kd = true;
  bool use_mixup = true;
  bool run_step2 = true;
  bool expand = true;
  bool refine = true;
  /// Random horizontal flips during step 2.
  bool step2_flip = true;
  std::uint64_t seed = 0;
  /// Where the logit store is persisted after each step-2 epoch (optional).
  std::string store_path;

  void validate() const;
};

struct FinetuneResult {
  std::vector<EpochMetrics> metrics;
  std::optional<double> final_accuracy;
};

/// Step 1: distillation (optional) with mixup (optional) on the original set.
/// Step 2 (optional): logit store seeded from the teacher on the expanded
/// (or original) set, reversed-KL distillation with logit refinement.
/// The teacher is only read.
FinetuneResult finetune(NetworkGraph& student, NetworkGraph& teacher, const Dataset& train,
                        const ChannelStats& stats, const FinetuneConfig& cfg, const Dataset* eval = nullptr,
                        const MetricsSink& sink = {}, const ExpandedDataset* expanded = nullptr);

double accuracy(NetworkGraph& net, const Dataset& ds, const ChannelStats& stats);

}  // namespace resprune
