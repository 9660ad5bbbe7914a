// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "resprune/data.hpp"
#include "resprune/nn.hpp"

namespace resprune {

enum class SlotRole { kBlockOutput, kInnerChannel };

/// One output channel of one conv unit.
struct ChannelSlot {
  UnitRef unit;
  std::size_t channel = 0;
  SlotRole role = SlotRole::kInnerChannel;
};

/// Channels that must be removed together to keep the graph valid.
struct PruneGroup {
  std::size_t id = 0;
  int stage = 0;
  SlotRole role = SlotRole::kInnerChannel;
  std::vector<ChannelSlot> slots;
};

/// Groups in canonical order: per stage, inner groups (block, layer,
/// channel) then the stage's block-output groups. A pointwise layer followed
/// by depthwise layers forms multi-slot inner groups. Throws InvalidArgument
/// when a depthwise layer sits first or last in a block, where its channels
/// would be tied to the stage width.
std::vector<PruneGroup> discover_groups(const NetworkGraph& net);

/// Fixed scoring sample and the unpruned model's probabilities on it.
struct ProxySet {
  Tensor<float> images;  // normalised [n, C, H, W]
  std::vector<int> labels;
  std::vector<std::size_t> indices;
  Tensor<double> reference_probs;  // [n, class_count]
  std::string digest;
};

ProxySet make_proxy(NetworkGraph& net, const Dataset& ds, const ChannelStats& stats, std::size_t n,
                    std::uint64_t seed);
/// Recomputes reference_probs from the current weights.
void refresh_reference(NetworkGraph& net, ProxySet& proxy);

struct ImportanceScore {
  std::size_t group_id = 0;
  double score = 0;
};

enum class Criterion { kKl, kWeightSum, kDeltaLoss, kRandom };
std::string criterion_name(Criterion c);
Criterion parse_criterion(const std::string& name);

/// Sets gamma = beta = 0 on every slot's BN channel (or zeroes the filter and
/// bias when the unit has no BN).
void zero_group(NetworkGraph& net, const PruneGroup& group);

/// Mean over proxy images of sum_i p_i log(p_i / q_i), q clamped at 1e-12.
/// Runs a full forward pass; parameters are restored bitwise afterwards.
ImportanceScore kl_score(NetworkGraph& net, const PruneGroup& group, const ProxySet& proxy);
ImportanceScore weight_sum_score(const NetworkGraph& net, const PruneGroup& group);
/// Cross-entropy on the proxy with the group zeroed minus the unpruned one.
ImportanceScore delta_loss_score(NetworkGraph& net, const PruneGroup& group, const ProxySet& proxy);

/// KL divergence rows of reference vs. candidate probabilities, averaged.
double mean_kl(const Tensor<double>& p, const Tensor<double>& q);
Tensor<double> softmax_rows(const Tensor<float>& logits);

struct ScoreOptions {
  std::uint64_t seed = 0;  // random criterion only
  std::size_t workers = 1;
  std::size_t chunk = 64;
};

/// Scores every group. KL and delta-loss reuse cached block inputs so only
/// the network downstream of each group is recomputed. Results are ordered by
/// group id regardless of worker count.
std::vector<ImportanceScore> score_groups(NetworkGraph& net, const std::vector<PruneGroup>& groups,
                                          const ProxySet* proxy, Criterion criterion,
                                          const ScoreOptions& opt = {});

struct PlanTarget {
  enum class Kind { kGroups, kFraction, kMacs };
  Kind kind = Kind::kFraction;
  double value = 0.5;

  /// "groups:<k>", "fraction:<f>" (of in-scope groups) or "macs:<ratio>".
  static PlanTarget parse(const std::string& text);
  std::string str() const;
};

struct PlanOptions {
  double retention_floor = 0.3;
  /// Comma-separated selectors: "all", "stageN", "stageN.inner", "stageN.output" (N is 1-based).
  std::string scope = "all";
  std::size_t input_height = 32;
  std::size_t input_width = 32;
};

struct PlanRow {
  std::size_t group_id = 0;
  double score = 0;
  bool removed = false;
};

struct PruningPlan {
  std::string criterion;
  std::uint64_t seed = 0;
  std::string proxy_digest;
  std::string architecture;
  double retention_floor = 0.3;
  std::string target;
  std::string scope;
  std::size_t group_count = 0;
  /// Every scored group in ascending (score, stage, id) order.
  std::vector<PlanRow> rows;
  /// Empty when the target was met.
  std::string shortfall;

  std::vector<std::size_t> removed_ids() const;
};

bool scope_contains(const std::string& scope, const PruneGroup& group);

PruningPlan make_plan(const NetworkGraph& net, const std::vector<PruneGroup>& groups,
                      const std::vector<ImportanceScore>& scores, const PlanTarget& target,
                      const PlanOptions& opt = {});

void write_plan(std::ostream& out, const PruningPlan& plan);
PruningPlan read_plan(std::istream& in);
void save_plan(const PruningPlan& plan, const std::string& path);
PruningPlan load_plan(const std::string& path);

/// Removes the planned channels, their BN entries and every consumer's input
/// slice. The result is validated before returning.
NetworkGraph apply_surgery(const NetworkGraph& net, const PruningPlan& plan);
NetworkGraph apply_surgery(const NetworkGraph& net, const std::vector<PruneGroup>& groups,
                           const std::vector<std::size_t>& removed_ids);
/// Copy of the network with the planned groups zeroed in place of removal.
NetworkGraph apply_zeroing(const NetworkGraph& net, const std::vector<PruneGroup>& groups,
                           const std::vector<std::size_t>& removed_ids);

struct Cost {
  std::uint64_t macs = 0;
  std::uint64_t params = 0;
};

/// out_h * out_w * out_c * (in_c / groups) * kh * kw.
std::uint64_t conv_macs(const ConvLayer& conv, std::size_t in_height, std::size_t in_width);
/// Weight, bias and BN scale/shift scalars. Running statistics are buffers, not parameters.
std::uint64_t unit_params(const ConvUnit& unit);
Cost count_macs_params(const NetworkGraph& net, std::size_t in_height, std::size_t in_width);
/// Cost the network would have with `removed` output channels taken from each unit.
Cost count_macs_params(const NetworkGraph& net, std::size_t in_height, std::size_t in_width,
                       const std::map<UnitRef, std::size_t>& removed);
/// Unit whose output feeds `ref`; empty for the stem.
std::optional<UnitRef> input_producer(const NetworkGraph& net, const UnitRef& ref);

/// Output channel count of every conv unit.
std::map<UnitRef, std::size_t> unit_widths(const NetworkGraph& net);

}  // namespace resprune
