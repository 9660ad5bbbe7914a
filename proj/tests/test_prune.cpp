// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "resprune/prune.hpp"

using namespace resprune;

namespace {

std::string checkpoint_bytes(const NetworkGraph& net) {
  std::stringstream ss;
  write_checkpoint(ss, net);
  return ss.str();
}

// Small net with non-trivial BN statistics and affine parameters.
NetworkGraph busy_net(bool depthwise = false, std::uint64_t seed = 3) {
  TinyResNetConfig cfg;
  cfg.stem_width = 8;
  cfg.stage_widths = {16, 32, 32};
  cfg.depthwise = depthwise;
  cfg.seed = seed;
  NetworkGraph net = build_tiny_resnet(cfg);
  std::mt19937_64 rng(seed + 100);
  std::normal_distribution<float> d(0.0f, 1.0f);
  for (const auto& ref : net.units()) {
    auto& bn = *net.unit(ref).bn;
    for (auto& g : bn.gamma.value.data()) g = 1.0f + 0.3f * d(rng);
    for (auto& b : bn.beta.value.data()) b = 0.2f * d(rng);
  }
  for (int i = 0; i < 3; ++i) {
    Tensor<float> x({8, 1, 16, 16});
    for (auto& v : x.data()) v = d(rng);
    forward_logits(net, x, Mode::kTraining);
  }
  return net;
}

Dataset tiny_dataset(std::size_t per_class = 8) {
  SyntheticSpec spec;
  spec.side = 16;
  spec.samples_per_class = per_class;
  return make_synthetic(spec);
}

double max_softmax_gap(NetworkGraph& a, NetworkGraph& b, const Tensor<float>& x) {
  const Tensor<double> pa = softmax_rows(predict_logits(a, x));
  const Tensor<double> pb = softmax_rows(predict_logits(b, x));
  double gap = 0;
  for (std::size_t i = 0; i < pa.numel(); ++i) gap = std::max(gap, std::abs(pa[i] - pb[i]));
  return gap;
}

}  // namespace

TEST_CASE("group discovery on the default desk net") {
  const NetworkGraph net = build_tiny_resnet({});
  const auto groups = discover_groups(net);
  std::size_t inner = 0, outer = 0;
  for (const auto& g : groups) {
    if (g.role == SlotRole::kInnerChannel) {
      ++inner;
      CHECK(g.slots.size() == 1);
    } else {
      ++outer;
      CHECK(g.slots.size() == 3);
      CHECK(g.stage != 2);
    }
  }
  CHECK(inner == 2 * 2 * (8 + 16 + 32));
  CHECK(outer == 32 + 64);
  for (std::size_t i = 0; i < groups.size(); ++i) CHECK(groups[i].id == i);
}

TEST_CASE("a width-256 stage with two blocks and a downsample yields 256 three-slot groups") {
  TinyResNetConfig cfg;
  cfg.stage_widths = {256, 32};
  cfg.blocks_per_stage = {2, 1};
  const NetworkGraph net = build_tiny_resnet(cfg);
  std::size_t outer = 0;
  for (const auto& g : discover_groups(net)) {
    if (g.role != SlotRole::kBlockOutput) continue;
    ++outer;
    CHECK(g.slots.size() == 3);
    std::set<UnitRef> units;
    for (const auto& s : g.slots) units.insert(s.unit);
    CHECK(units.count(UnitRef{0, 0, UnitRef::kDownsample}) == 1);
  }
  CHECK(outer == 256);
}

TEST_CASE("pointwise then depthwise couples into two-slot groups") {
  TinyResNetConfig cfg;
  cfg.stage_widths = {128};
  cfg.blocks_per_stage = {1};
  cfg.depthwise = true;
  const NetworkGraph net = build_tiny_resnet(cfg);
  std::size_t pairs = 0;
  for (const auto& g : discover_groups(net)) {
    if (g.role == SlotRole::kInnerChannel) {
      CHECK(g.slots.size() == 2);
      CHECK(g.slots[0].unit.layer == 0);
      CHECK(g.slots[1].unit.layer == 1);
      ++pairs;
    }
  }
  CHECK(pairs == 32);
}

TEST_CASE("depthwise layer at a block boundary is rejected") {
  TinyResNetConfig cfg;
  cfg.stage_widths = {16};
  cfg.blocks_per_stage = {1};
  NetworkGraph net = build_tiny_resnet(cfg);
  ConvUnit& last = net.stages[0].blocks[0].layers[2];
  last.conv.groups = 4;
  last.conv.weight = Parameter<float>(Tensor<float>({4, 1, 1, 1}, 1.0f));
  last.bn = BatchNormLayer(4);
  net.stages[0].width = 4;
  net.stages[0].downsample->conv.weight = Parameter<float>(Tensor<float>({4, 16, 1, 1}, 1.0f));
  net.stages[0].downsample->bn = BatchNormLayer(4);
  net.classifier.weight = Parameter<float>(Tensor<float>({10, 4}));
  CHECK_THROWS_AS(discover_groups(net), InvalidArgument);
}

TEST_CASE("groups partition every prunable channel exactly once") {
  const NetworkGraph net = busy_net(true);
  std::map<UnitRef, std::multiset<std::size_t>> covered;
  for (const auto& g : discover_groups(net))
    for (const auto& s : g.slots) covered[s.unit].insert(s.channel);
  for (const auto& ref : net.units()) {
    const std::size_t w = net.unit(ref).out_channels();
    const bool frozen = ref.is_stem() ||
                        (!net.stages[static_cast<std::size_t>(ref.stage)].prunable_output &&
                         (ref.is_downsample() ||
                          ref.layer + 1 == static_cast<int>(net.stages[ref.stage].blocks[ref.block].layers.size())));
    if (frozen) {
      CHECK(covered.count(ref) == 0);
      continue;
    }
    REQUIRE(covered.count(ref) == 1);
    CHECK(covered[ref].size() == w);
    for (std::size_t c = 0; c < w; ++c) CHECK(covered[ref].count(c) == 1);
  }
}

TEST_CASE("two-class KL toy equals ln 2") {
  const Tensor<double> p({1, 2}, std::vector<double>{1.0, 0.0});
  const Tensor<double> q({1, 2}, std::vector<double>{0.5, 0.5});
  CHECK(std::abs(mean_kl(p, q) - std::numbers::ln2) < 1e-15);
  const Tensor<double> z({1, 2}, std::vector<double>{0.0, 1.0});
  CHECK(std::isfinite(mean_kl(p, z)));
  // unnormalized rows a few ulps apart must not score below zero
  const Tensor<double> a({1, 3}, std::vector<double>{0.2, 0.3, 0.5 + 1e-15});
  const Tensor<double> b({1, 3}, std::vector<double>{0.2, 0.3 + 1e-15, 0.5 + 2e-15});
  CHECK(mean_kl(a, b) >= 0.0);
}

TEST_CASE("KL scores: zeroed group scores zero, all nonnegative, parameters restored") {
  NetworkGraph net = busy_net();
  const Dataset ds = tiny_dataset();
  const ChannelStats st = compute_stats(ds);
  const auto groups = discover_groups(net);
  zero_group(net, groups[3]);
  zero_group(net, groups.back());
  ProxySet proxy = make_proxy(net, ds, st, 40, 1);
  const std::string before = checkpoint_bytes(net);
  const auto fast = score_groups(net, groups, &proxy, Criterion::kKl);
  CHECK(checkpoint_bytes(net) == before);
  CHECK(std::abs(fast[3].score) <= 1e-12);
  CHECK(std::abs(fast.back().score) <= 1e-12);
  CHECK(std::abs(kl_score(net, groups[3], proxy).score) <= 1e-12);
  for (const auto& s : fast) CHECK(s.score >= 0.0);
  CHECK(checkpoint_bytes(net) == before);

  // The cached downstream path agrees with full forward passes.
  for (std::size_t id : {0ul, 20ul, 40ul, groups.size() - 2}) {
    const double full = kl_score(net, groups[id], proxy).score;
    CHECK(std::abs(full - fast[id].score) <= 1e-9 * std::max(1.0, full));
  }
  const auto threaded = score_groups(net, groups, &proxy, Criterion::kKl, ScoreOptions{0, 3, 64});
  for (std::size_t i = 0; i < groups.size(); ++i) CHECK(threaded[i].score == fast[i].score);
  CHECK(checkpoint_bytes(net) == before);
}

TEST_CASE("delta-loss scoring") {
  NetworkGraph net = busy_net();
  const Dataset ds = tiny_dataset();
  const auto groups = discover_groups(net);
  zero_group(net, groups[5]);
  ProxySet proxy = make_proxy(net, ds, compute_stats(ds), 40, 2);
  const std::string before = checkpoint_bytes(net);
  const auto s = score_groups(net, groups, &proxy, Criterion::kDeltaLoss);
  CHECK(s[5].score == 0.0);
  CHECK(std::abs(delta_loss_score(net, groups[7], proxy).score - s[7].score) < 1e-9);
  CHECK(checkpoint_bytes(net) == before);
}

TEST_CASE("weight-sum scoring") {
  NetworkGraph net = build_tiny_resnet({});
  const auto groups = discover_groups(net);
  const PruneGroup* g = nullptr;
  for (const auto& x : groups)
    if (x.role == SlotRole::kBlockOutput) {
      g = &x;
      break;
    }
  REQUIRE(g);
  for (std::size_t i = 0; i < g->slots.size(); ++i) {
    auto& w = net.unit(g->slots[i].unit).conv.weight.value;
    const std::size_t per = w.numel() / w.dim(0);
    std::fill_n(w.ptr() + g->slots[i].channel * per, per, 0.0f);
    if (i == 0) {
      w[g->slots[i].channel * per] = 1.0f;
      w[g->slots[i].channel * per + 1] = -1.0f;
    }
    if (i == 1) w[g->slots[i].channel * per] = 2.0f;
  }
  CHECK(weight_sum_score(net, *g).score == 4.0);
  const auto& inner = groups[0];
  auto& w = net.unit(inner.slots[0].unit).conv.weight.value;
  const std::size_t per = w.numel() / w.dim(0);
  double l1 = 0;
  for (std::size_t i = 0; i < per; ++i) l1 += std::abs(w[i]);
  CHECK(weight_sum_score(net, inner).score == doctest::Approx(l1));
  std::fill_n(w.ptr(), per, 0.0f);
  CHECK(weight_sum_score(net, inner).score == 0.0);
}

TEST_CASE("random scores are seeded") {
  NetworkGraph net = build_tiny_resnet({});
  const auto groups = discover_groups(net);
  const auto a = score_groups(net, groups, nullptr, Criterion::kRandom, {11});
  const auto b = score_groups(net, groups, nullptr, Criterion::kRandom, {11});
  const auto c = score_groups(net, groups, nullptr, Criterion::kRandom, {12});
  bool differ = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].score == b[i].score);
    differ |= a[i].score != c[i].score;
  }
  CHECK(differ);
  CHECK_THROWS_AS(score_groups(net, groups, nullptr, Criterion::kKl), InvalidArgument);
}

TEST_CASE("equal scores break ties by group id") {
  const NetworkGraph net = build_tiny_resnet({});
  const auto groups = discover_groups(net);
  std::vector<ImportanceScore> scores;
  for (const auto& g : groups) scores.push_back({g.id, 0.5});
  const PruningPlan plan = make_plan(net, groups, scores, PlanTarget::parse("groups:2"));
  CHECK(plan.removed_ids() == std::vector<std::size_t>{0, 1});
  CHECK(plan.shortfall.empty());
}

TEST_CASE("negative scores sort first") {
  const NetworkGraph net = build_tiny_resnet({});
  const auto groups = discover_groups(net);
  std::vector<ImportanceScore> scores;
  for (const auto& g : groups) scores.push_back({g.id, 1.0});
  scores[50].score = -2.0;
  const PruningPlan plan = make_plan(net, groups, scores, PlanTarget::parse("groups:1"));
  CHECK(plan.removed_ids() == std::vector<std::size_t>{50});
}

TEST_CASE("retention floor and shortfall") {
  NetworkGraph net = build_tiny_resnet({});
  const auto groups = discover_groups(net);
  const auto scores = score_groups(net, groups, nullptr, Criterion::kRandom, {4});
  const PruningPlan plan = make_plan(net, groups, scores, PlanTarget::parse("fraction:1"));
  CHECK_FALSE(plan.shortfall.empty());
  const NetworkGraph pruned = apply_surgery(net, plan);
  const auto before = unit_widths(net), after = unit_widths(pruned);
  for (const auto& [ref, w] : before) {
    CHECK(after.at(ref) >= static_cast<std::size_t>(std::ceil(0.3 * static_cast<double>(w))));
  }
  CHECK(pruned.stages[2].width == 128);
  CHECK_THROWS_AS(PlanTarget::parse("fraction:1.5"), InvalidArgument);
  CHECK_THROWS_AS(PlanTarget::parse("bogus"), InvalidArgument);
}

TEST_CASE("scope restricts candidates") {
  const NetworkGraph net = build_tiny_resnet({});
  const auto groups = discover_groups(net);
  std::vector<ImportanceScore> scores;
  for (const auto& g : groups) scores.push_back({g.id, static_cast<double>(g.id)});
  PlanOptions opt;
  opt.scope = "stage2.inner";
  const PruningPlan plan = make_plan(net, groups, scores, PlanTarget::parse("fraction:0.5"), opt);
  CHECK(plan.rows.size() == 64);
  CHECK(plan.removed_ids().size() == 32);
  for (std::size_t id : plan.removed_ids()) {
    CHECK(groups[id].stage == 1);
    CHECK(groups[id].role == SlotRole::kInnerChannel);
  }
  CHECK_THROWS_AS(scope_contains("layer3", groups[0]), InvalidArgument);
}

TEST_CASE("macs target") {
  NetworkGraph net = build_tiny_resnet({});
  const auto groups = discover_groups(net);
  const auto scores = score_groups(net, groups, nullptr, Criterion::kRandom, {2});
  const Cost orig = count_macs_params(net, 32, 32);
  const PruningPlan plan = make_plan(net, groups, scores, PlanTarget::parse("macs:0.6"));
  CHECK(plan.shortfall.empty());
  NetworkGraph pruned = apply_surgery(net, plan);
  const Cost now = count_macs_params(pruned, 32, 32);
  CHECK(static_cast<double>(now.macs) <= 0.6 * static_cast<double>(orig.macs));
  // Dropping the last removal would overshoot the target.
  auto ids = plan.removed_ids();
  std::size_t last = 0;
  for (const auto& r : plan.rows)
    if (r.removed) last = r.group_id;
  ids.erase(std::find(ids.begin(), ids.end(), last));
  const Cost prev = count_macs_params(apply_surgery(net, groups, ids), 32, 32);
  CHECK(static_cast<double>(prev.macs) > 0.6 * static_cast<double>(orig.macs));
}

TEST_CASE("surgery equals zeroing on random plans") {
  for (bool depthwise : {false, true}) {
    NetworkGraph net = busy_net(depthwise);
    const auto groups = discover_groups(net);
    const Dataset ds = tiny_dataset(4);
    std::vector<std::size_t> all(ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const Tensor<float> x = gather_batch(ds, all, compute_stats(ds));
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const auto scores = score_groups(net, groups, nullptr, Criterion::kRandom, {seed});
      const PruningPlan plan = make_plan(net, groups, scores, PlanTarget{PlanTarget::Kind::kFraction, 0.2 + 0.2 * seed});
      NetworkGraph cut = apply_surgery(net, plan);
      NetworkGraph zeroed = apply_zeroing(net, groups, plan.removed_ids());
      CHECK(max_softmax_gap(cut, zeroed, x) < 1e-5);
      const Cost a = count_macs_params(net, 16, 16), b = count_macs_params(cut, 16, 16);
      CHECK(b.macs < a.macs);
      CHECK(b.params < a.params);
      std::map<UnitRef, std::size_t> removed;
      for (std::size_t id : plan.removed_ids())
        for (const auto& s : groups[id].slots) ++removed[s.unit];
      const Cost predicted = count_macs_params(net, 16, 16, removed);
      CHECK(predicted.macs == b.macs);
      CHECK(predicted.params == b.params);
    }
  }
}

TEST_CASE("surgery edge cases") {
  NetworkGraph net = busy_net();
  const auto groups = discover_groups(net);
  CHECK(checkpoint_bytes(apply_surgery(net, groups, {})) == checkpoint_bytes(net));
  std::size_t first_output = 0;
  while (groups[first_output].role != SlotRole::kBlockOutput) ++first_output;
  const NetworkGraph cut = apply_surgery(net, groups, {first_output});
  CHECK(cut.stages[0].width == 15);
  CHECK(cut.stages[0].downsample->out_channels() == 15);
  for (const auto& b : cut.stages[0].blocks) CHECK(b.layers.back().out_channels() == 15);
  CHECK(cut.stages[1].blocks[0].layers[0].conv.in_channels() == 15);
  CHECK(cut.stages[0].blocks[1].layers[0].conv.in_channels() == 15);
  CHECK_THROWS_AS(apply_surgery(net, groups, {groups.size()}), InvalidArgument);
  CHECK_THROWS_AS(apply_surgery(net, groups, {1, 1}), InvalidArgument);

  PruningPlan plan;
  plan.architecture = "0000";
  plan.group_count = groups.size();
  CHECK_THROWS_AS(apply_surgery(net, plan), InvalidArgument);
}

TEST_CASE("plan text round trip") {
  NetworkGraph net = build_tiny_resnet({});
  const auto groups = discover_groups(net);
  const auto scores = score_groups(net, groups, nullptr, Criterion::kRandom, {7});
  PruningPlan plan = make_plan(net, groups, scores, PlanTarget::parse("groups:10"));
  plan.criterion = "random";
  plan.seed = 7;
  std::stringstream a;
  write_plan(a, plan);
  const PruningPlan back = read_plan(a);
  std::stringstream b;
  write_plan(b, back);
  CHECK(a.str() == b.str());
  CHECK(back.removed_ids() == plan.removed_ids());
  for (std::size_t i = 0; i < plan.rows.size(); ++i) CHECK(back.rows[i].score == plan.rows[i].score);
  std::stringstream bad("resprune-plan 1\ncriterion kl\nseed x\n");
  CHECK_THROWS_AS(read_plan(bad), FormatError);
}

TEST_CASE("hand-derived MACs and parameter counts") {
  ConvLayer c;
  c.weight = Parameter<float>(Tensor<float>({16, 3, 3, 3}));
  c.padding = 1;
  CHECK(conv_macs(c, 32, 32) == 442368);
  ConvLayer dw;
  dw.weight = Parameter<float>(Tensor<float>({32, 1, 3, 3}));
  dw.groups = 32;
  dw.padding = 1;
  CHECK(conv_macs(dw, 16, 16) == 73728);
  ConvUnit pw;
  pw.conv.weight = Parameter<float>(Tensor<float>({4, 8, 1, 1}));
  CHECK(unit_params(pw) == 32);
}
