// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "resprune/autograd.hpp"
#include "resprune/tensor.hpp"

namespace resprune {

/// Per-channel batch normalisation, y = gamma * (x - mean) / sqrt(var + eps) + beta.
struct BatchNormLayer {
  Parameter<float> gamma;
  Parameter<float> beta;
  Tensor<float> running_mean;
  Tensor<float> running_var;
  float eps = 1e-5f;
  float momentum = 0.1f;

  BatchNormLayer() = default;
  explicit BatchNormLayer(std::size_t channels);
  std::size_t width() const { return gamma.value.numel(); }
};

struct ConvLayer {
  Parameter<float> weight;  // [out_c, in_c / groups, kh, kw]
  std::optional<Parameter<float>> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;

  std::size_t out_channels() const { return weight.value.dim(0); }
  std::size_t in_channels() const { return weight.value.dim(1) * groups; }
  std::size_t kernel_h() const { return weight.value.dim(2); }
  std::size_t kernel_w() const { return weight.value.dim(3); }
  bool depthwise() const { return groups > 1 && groups == in_channels() && groups == out_channels(); }
};

/// conv -> optional BN. Units without BN carry a conv bias.
struct ConvUnit {
  std::string name;
  ConvLayer conv;
  std::optional<BatchNormLayer> bn;

  std::size_t out_channels() const { return conv.out_channels(); }
};

/// Sequence of conv units with ReLU after every unit except the last; the
/// shortcut is added to the last unit's output and ReLU follows the add.
struct ResidualBlock {
  std::vector<ConvUnit> layers;
};

struct ResidualStage {
  std::vector<ResidualBlock> blocks;
  /// conv -> BN on the identity path of the first block.
  std::optional<ConvUnit> downsample;
  /// Output channel count shared by every block and the downsample.
  std::size_t width = 0;
  /// False for the last stage: its outputs feed the classifier and are never pruned.
  bool prunable_output = true;
};

struct LinearLayer {
  Parameter<float> weight;  // [out, in]
  Parameter<float> bias;    // [out]
};

struct TinyResNetConfig {
  std::size_t in_channels = 1;
  std::size_t stem_width = 16;
  std::vector<std::size_t> stage_widths{32, 64, 128};
  std::vector<std::size_t> blocks_per_stage{2, 2, 2};
  std::size_t class_count = 10;
  /// Middle 3x3 conv of each block becomes depthwise (MobileNet-style coupling).
  bool depthwise = false;
  std::uint64_t seed = 0;
};

/// Identifies one conv unit inside a NetworkGraph. layer == kDownsample
/// addresses the stage's downsample unit; stage == kStem addresses the stem.
struct UnitRef {
  static constexpr int kDownsample = -1;
  static constexpr int kStem = -1;
  int stage = 0;
  int block = 0;
  int layer = 0;

  bool is_stem() const { return stage == kStem; }
  bool is_downsample() const { return stage >= 0 && layer == kDownsample; }
  auto operator<=>(const UnitRef&) const = default;
};

std::string unit_name(const UnitRef& ref);

enum class Mode { kTraining, kEval };

class NetworkGraph {
 public:
  ConvUnit stem;
  std::vector<ResidualStage> stages;
  LinearLayer classifier;
  std::size_t class_count = 0;
  std::size_t in_channels = 1;

  ConvUnit& unit(const UnitRef& ref);
  const ConvUnit& unit(const UnitRef& ref) const;

  /// Every conv unit in canonical order: stem, then per stage the downsample
  /// followed by blocks in order.
  std::vector<UnitRef> units() const;

  /// Trainable parameters in canonical order (stem, stages, classifier).
  std::vector<Parameter<float>*> parameters();

  /// Structural checks: widths chain correctly and every stage's blocks and
  /// downsample share one output width. Throws InternalError naming the layer.
  void validate() const;

  /// Digest of the architecture (layer names + shapes), not the weights.
  std::string architecture_digest() const;
};

NetworkGraph build_tiny_resnet(const TinyResNetConfig& config);

// Forward passes. Parameters are watched (gradients flow into
// Parameter::grad) only when `track` is true; otherwise they enter as
// constants and no backward closures are recorded.
struct ForwardOptions {
  Mode mode = Mode::kEval;
  bool track = false;
};

Var<float> unit_forward(Tape<float>& tape, ConvUnit& unit, Var<float> x, const ForwardOptions& opt);
Var<float> stem_forward(Tape<float>& tape, NetworkGraph& net, Var<float> x, const ForwardOptions& opt);
Var<float> block_forward(Tape<float>& tape, NetworkGraph& net, std::size_t stage, std::size_t block,
                         Var<float> x, const ForwardOptions& opt);
Var<float> head_forward(Tape<float>& tape, NetworkGraph& net, Var<float> x, const ForwardOptions& opt);

/// Runs blocks from (stage, block) to the end of the network plus the head.
Var<float> forward_from(Tape<float>& tape, NetworkGraph& net, std::size_t stage, std::size_t block,
                        Var<float> x, const ForwardOptions& opt);

Var<float> forward(Tape<float>& tape, NetworkGraph& net, Var<float> batch, const ForwardOptions& opt);

/// Convenience: logits [batch, class_count]. Training mode updates BN
/// running statistics.
Tensor<float> forward_logits(NetworkGraph& net, const Tensor<float>& batch, Mode mode);

/// Eval-mode logits computed in chunks to bound tape memory.
Tensor<float> predict_logits(NetworkGraph& net, const Tensor<float>& batch, std::size_t chunk = 64);

Tensor<float> bn_forward(const Tensor<float>& x, BatchNormLayer& bn, Mode mode);

// Checkpoint file: "RPCKPT01", u32 manifest length, JSON manifest (layer
// names, shapes, hyperparameters), then every tensor in manifest order using
// the tensor wire format.
void save_checkpoint(const NetworkGraph& net, const std::string& path);
NetworkGraph load_checkpoint(const std::string& path);
void write_checkpoint(std::ostream& out, const NetworkGraph& net);
NetworkGraph read_checkpoint(std::istream& in);

}  // namespace resprune
