// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#include "resprune/prune.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include "resprune/digest.hpp"
#include "resprune/log.hpp"

namespace resprune {

// --- groups --------------------------------------------------------------------

std::vector<PruneGroup> discover_groups(const NetworkGraph& net) {
  net.validate();
  std::vector<PruneGroup> groups;
  auto add_group = [&](int stage, SlotRole role, std::vector<ChannelSlot> slots) {
    PruneGroup g;
    g.id = groups.size();
    g.stage = stage;
    g.role = role;
    g.slots = std::move(slots);
    groups.push_back(std::move(g));
  };
  for (std::size_t s = 0; s < net.stages.size(); ++s) {
    const ResidualStage& st = net.stages[s];
    const int si = static_cast<int>(s);
    for (std::size_t b = 0; b < st.blocks.size(); ++b) {
      const auto& layers = st.blocks[b].layers;
      const int bi = static_cast<int>(b);
      if (layers.front().conv.depthwise() || layers.back().conv.depthwise()) {
        throw InvalidArgument("discover_groups: " + unit_name({si, bi, layers.front().conv.depthwise() ? 0 : static_cast<int>(layers.size()) - 1}) +
                              " is depthwise at a block boundary; its channels would couple to the stage width");
      }
      // Layers before the last own inner channels; depthwise layers join the
      // group of the layer that feeds them.
      for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
        if (layers[i].conv.depthwise()) continue;
        std::vector<int> chain{static_cast<int>(i)};
        for (std::size_t j = i + 1; j + 1 < layers.size() && layers[j].conv.depthwise(); ++j) {
          chain.push_back(static_cast<int>(j));
        }
        for (std::size_t c = 0; c < layers[i].out_channels(); ++c) {
          std::vector<ChannelSlot> slots;
          for (int l : chain) slots.push_back({UnitRef{si, bi, l}, c, SlotRole::kInnerChannel});
          add_group(si, SlotRole::kInnerChannel, std::move(slots));
        }
      }
    }
    if (!st.prunable_output) continue;
    for (std::size_t c = 0; c < st.width; ++c) {
      std::vector<ChannelSlot> slots;
      for (std::size_t b = 0; b < st.blocks.size(); ++b) {
        const int last = static_cast<int>(st.blocks[b].layers.size()) - 1;
        slots.push_back({UnitRef{si, static_cast<int>(b), last}, c, SlotRole::kBlockOutput});
      }
      if (st.downsample) slots.push_back({UnitRef{si, 0, UnitRef::kDownsample}, c, SlotRole::kBlockOutput});
      add_group(si, SlotRole::kBlockOutput, std::move(slots));
    }
  }
  return groups;
}

// --- proxy ---------------------------------------------------------------------

Tensor<double> softmax_rows(const Tensor<float>& logits) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor<double> p({n, k});
  for (std::size_t r = 0; r < n; ++r) {
    const float* row = logits.ptr() + r * k;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, static_cast<double>(row[c]));
    double z = 0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(static_cast<double>(row[c]) - mx);
    for (std::size_t c = 0; c < k; ++c) p[r * k + c] = std::exp(static_cast<double>(row[c]) - mx) / z;
  }
  return p;
}

double mean_kl(const Tensor<double>& p, const Tensor<double>& q) {
  if (p.shape() != q.shape() || p.rank() != 2) {
    throw ShapeError("mean_kl: shapes " + shape_str(p.shape()) + " and " + shape_str(q.shape()) + " differ");
  }
  const std::size_t n = p.dim(0), k = p.dim(1);
  if (n == 0) return 0.0;
  double total = 0;
  std::size_t clamped = 0;
  for (std::size_t r = 0; r < n; ++r) {
    double row = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const double pi = p[r * k + c];
      if (pi <= 0) continue;
      double qi = q[r * k + c];
      if (qi < 1e-12) {
        qi = 1e-12;
        ++clamped;
      }
      row += pi * std::log(pi / qi);
    }
    total += std::max(row, 0.0);  // rounding can push a near-identical row below zero
  }
  if (clamped) logger()->debug("mean_kl: clamped {} probabilities at 1e-12", clamped);
  return total / static_cast<double>(n);
}

namespace {

double mean_cross_entropy(const Tensor<double>& probs, std::span<const int> labels) {
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  if (n == 0) return 0.0;
  double total = 0;
  for (std::size_t r = 0; r < n; ++r) total -= std::log(std::max(probs[r * k + labels[r]], 1e-12));
  return total / static_cast<double>(n);
}

bool same_bits(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape() == b.shape() && std::memcmp(a.ptr(), b.ptr(), a.numel() * sizeof(float)) == 0;
}

// Saves every tensor a group's zeroing touches and restores it bitwise.
class ZeroingGuard {
 public:
  ZeroingGuard(NetworkGraph& net, const PruneGroup& group) : net_(net) {
    std::set<UnitRef> seen;
    for (const auto& slot : group.slots) {
      if (!seen.insert(slot.unit).second) continue;
      ConvUnit& u = net.unit(slot.unit);
      Saved s{slot.unit, {}};
      if (u.bn) {
        s.tensors = {u.bn->gamma.value, u.bn->beta.value};
      } else {
        s.tensors = {u.conv.weight.value};
        if (u.conv.bias) s.tensors.push_back(u.conv.bias->value);
      }
      saved_.push_back(std::move(s));
    }
    zero_group(net, group);
  }
  ZeroingGuard(const ZeroingGuard&) = delete;
  ZeroingGuard& operator=(const ZeroingGuard&) = delete;

  /// Restores and verifies; throws InternalError on any bit difference.
  void restore() {
    for (auto& s : saved_) {
      std::vector<Tensor<float>*> live = targets(s.unit);
      for (std::size_t i = 0; i < live.size(); ++i) *live[i] = s.tensors[i];
      for (std::size_t i = 0; i < live.size(); ++i) {
        if (!same_bits(*live[i], s.tensors[i])) {
          throw InternalError("scoring: parameters of " + unit_name(s.unit) + " not restored");
        }
      }
    }
    restored_ = true;
  }
  ~ZeroingGuard() {
    if (!restored_) {
      for (auto& s : saved_) {
        auto live = targets(s.unit);
        for (std::size_t i = 0; i < live.size(); ++i) *live[i] = s.tensors[i];
      }
    }
  }

 private:
  struct Saved {
    UnitRef unit;
    std::vector<Tensor<float>> tensors;
  };
  std::vector<Tensor<float>*> targets(const UnitRef& ref) {
    ConvUnit& u = net_.unit(ref);
    if (u.bn) return {&u.bn->gamma.value, &u.bn->beta.value};
    std::vector<Tensor<float>*> t{&u.conv.weight.value};
    if (u.conv.bias) t.push_back(&u.conv.bias->value);
    return t;
  }
  NetworkGraph& net_;
  std::vector<Saved> saved_;
  bool restored_ = false;
};

constexpr std::size_t kProxyChunk = 64;

}  // namespace

void refresh_reference(NetworkGraph& net, ProxySet& proxy) {
  proxy.reference_probs = softmax_rows(predict_logits(net, proxy.images, kProxyChunk));
}

ProxySet make_proxy(NetworkGraph& net, const Dataset& ds, const ChannelStats& stats, std::size_t n,
                    std::uint64_t seed) {
  ProxySet proxy;
  proxy.indices = sample_proxy_indices(ds, n, seed);
  proxy.images = gather_batch(ds, proxy.indices, stats);
  proxy.labels = gather_labels(ds, proxy.indices);
  refresh_reference(net, proxy);
  Fnv1a h;
  h.update_span(std::span<const std::size_t>(proxy.indices));
  h.update_span(std::span<const float>(proxy.images.data()));
  proxy.digest = h.hex();
  return proxy;
}

std::string criterion_name(Criterion c) {
  switch (c) {
    case Criterion::kKl: return "kl";
    case Criterion::kWeightSum: return "weight_sum";
    case Criterion::kDeltaLoss: return "delta_loss";
    case Criterion::kRandom: return "random";
  }
  return "unknown";
}

Criterion parse_criterion(const std::string& name) {
  for (Criterion c : {Criterion::kKl, Criterion::kWeightSum, Criterion::kDeltaLoss, Criterion::kRandom}) {
    if (criterion_name(c) == name) return c;
  }
  throw InvalidArgument("unknown criterion '" + name + "' (expected kl, weight_sum, delta_loss or random)");
}

// --- scoring -------------------------------------------------------------------

void zero_group(NetworkGraph& net, const PruneGroup& group) {
  for (const auto& slot : group.slots) {
    ConvUnit& u = net.unit(slot.unit);
    if (slot.channel >= u.out_channels()) {
      throw InvalidArgument("group " + std::to_string(group.id) + ": channel " + std::to_string(slot.channel) +
                            " out of range for " + u.name);
    }
    if (u.bn) {
      u.bn->gamma.value[slot.channel] = 0.0f;
      u.bn->beta.value[slot.channel] = 0.0f;
    } else {
      const std::size_t per = u.conv.weight.value.numel() / u.out_channels();
      std::fill_n(u.conv.weight.value.ptr() + slot.channel * per, per, 0.0f);
      if (u.conv.bias) u.conv.bias->value[slot.channel] = 0.0f;
    }
  }
}

ImportanceScore kl_score(NetworkGraph& net, const PruneGroup& group, const ProxySet& proxy) {
  ZeroingGuard guard(net, group);
  const Tensor<double> q = softmax_rows(predict_logits(net, proxy.images, kProxyChunk));
  guard.restore();
  return {group.id, mean_kl(proxy.reference_probs, q)};
}

ImportanceScore delta_loss_score(NetworkGraph& net, const PruneGroup& group, const ProxySet& proxy) {
  const double base = mean_cross_entropy(proxy.reference_probs, proxy.labels);
  ZeroingGuard guard(net, group);
  const Tensor<double> q = softmax_rows(predict_logits(net, proxy.images, kProxyChunk));
  guard.restore();
  return {group.id, mean_cross_entropy(q, proxy.labels) - base};
}

ImportanceScore weight_sum_score(const NetworkGraph& net, const PruneGroup& group) {
  double s = 0;
  for (const auto& slot : group.slots) {
    const ConvUnit& u = net.unit(slot.unit);
    if (slot.channel >= u.out_channels()) {
      throw InvalidArgument("group " + std::to_string(group.id) + ": channel out of range for " + u.name);
    }
    const std::size_t per = u.conv.weight.value.numel() / u.out_channels();
    const float* w = u.conv.weight.value.ptr() + slot.channel * per;
    for (std::size_t i = 0; i < per; ++i) s += std::abs(static_cast<double>(w[i]));
  }
  return {group.id, s};
}

namespace {

// Start block of the downstream recomputation for a group.
std::pair<std::size_t, std::size_t> start_block(const PruneGroup& g) {
  const auto s = static_cast<std::size_t>(g.stage);
  if (g.role == SlotRole::kBlockOutput) return {s, 0};
  return {s, static_cast<std::size_t>(g.slots.front().unit.block)};
}

struct BlockCache {
  // inputs[s][b][chunk]
  std::vector<std::vector<std::vector<Tensor<float>>>> inputs;
};

BlockCache cache_block_inputs(NetworkGraph& net, const Tensor<float>& images, std::size_t chunk) {
  BlockCache cache;
  cache.inputs.resize(net.stages.size());
  for (std::size_t s = 0; s < net.stages.size(); ++s) cache.inputs[s].resize(net.stages[s].blocks.size());
  const std::size_t n = images.dim(0);
  const std::size_t per = n ? images.numel() / n : 0;
  const ForwardOptions opt{Mode::kEval, false};
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t len = std::min(chunk, n - start);
    Shape shape = images.shape();
    shape[0] = len;
    Tensor<float> part(shape, std::vector<float>(images.ptr() + start * per, images.ptr() + (start + len) * per));
    Tape<float> tape;
    Var<float> x = stem_forward(tape, net, tape.constant(part), opt);
    for (std::size_t s = 0; s < net.stages.size(); ++s) {
      for (std::size_t b = 0; b < net.stages[s].blocks.size(); ++b) {
        cache.inputs[s][b].push_back(x.value());
        x = block_forward(tape, net, s, b, x, opt);
      }
    }
  }
  return cache;
}

Tensor<double> downstream_probs(NetworkGraph& net, const BlockCache& cache, std::size_t s, std::size_t b,
                                std::size_t n) {
  Tensor<float> logits({n, net.class_count});
  std::size_t offset = 0;
  const ForwardOptions opt{Mode::kEval, false};
  for (const auto& part : cache.inputs[s][b]) {
    Tape<float> tape;
    Tensor<float> out = forward_from(tape, net, s, b, tape.constant(part), opt).value();
    std::copy(out.data().begin(), out.data().end(), logits.ptr() + offset);
    offset += out.numel();
  }
  return softmax_rows(logits);
}

}  // namespace

std::vector<ImportanceScore> score_groups(NetworkGraph& net, const std::vector<PruneGroup>& groups,
                                          const ProxySet* proxy, Criterion criterion, const ScoreOptions& opt) {
  std::vector<ImportanceScore> scores(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (groups[i].id != i) throw InvalidArgument("score_groups: group ids must be 0..n-1 in order");
  }
  if (criterion == Criterion::kRandom) {
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < groups.size(); ++i) scores[i] = {i, u(rng)};
    return scores;
  }
  if (criterion == Criterion::kWeightSum) {
    for (std::size_t i = 0; i < groups.size(); ++i) scores[i] = weight_sum_score(net, groups[i]);
    return scores;
  }
  if (!proxy) throw InvalidArgument("score_groups: criterion " + criterion_name(criterion) + " needs a proxy set");
  if (opt.chunk == 0) throw InvalidArgument("score_groups: chunk must be positive");
  const std::size_t n = proxy->images.dim(0);
  const BlockCache cache = cache_block_inputs(net, proxy->images, opt.chunk);
  const double base = mean_cross_entropy(proxy->reference_probs, proxy->labels);

  auto score_range = [&](NetworkGraph& model, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto [s, b] = start_block(groups[i]);
      ZeroingGuard guard(model, groups[i]);
      const Tensor<double> q = downstream_probs(model, cache, s, b, n);
      guard.restore();
      const double v = criterion == Criterion::kKl ? mean_kl(proxy->reference_probs, q)
                                                   : mean_cross_entropy(q, proxy->labels) - base;
      if (!std::isfinite(v)) throw NumericError("score_groups: non-finite score for group " + std::to_string(i));
      scores[i] = {i, v};
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(opt.workers, 1, std::max<std::size_t>(groups.size(), 1));
  if (workers == 1) {
    score_range(net, 0, groups.size());
    return scores;
  }
  // Each worker zeroes a private copy; the shared cache is read-only.
  std::vector<NetworkGraph> copies(workers, net);
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t per = (groups.size() + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = std::min(groups.size(), w * per), hi = std::min(groups.size(), lo + per);
    threads.emplace_back([&, w, lo, hi] {
      try {
        score_range(copies[w], lo, hi);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return scores;
}

// --- plans ---------------------------------------------------------------------

PlanTarget PlanTarget::parse(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    throw InvalidArgument("target '" + text + "' must look like groups:<k>, fraction:<f> or macs:<ratio>");
  }
  const std::string kind = text.substr(0, colon), num = text.substr(colon + 1);
  PlanTarget t;
  std::size_t used = 0;
  try {
    t.value = std::stod(num, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != num.size() || !std::isfinite(t.value)) {
    throw InvalidArgument("target '" + text + "': '" + num + "' is not a number");
  }
  if (kind == "groups") {
    t.kind = Kind::kGroups;
    if (t.value < 0 || t.value != std::floor(t.value)) throw InvalidArgument("target groups must be a whole number >= 0");
  } else if (kind == "fraction") {
    t.kind = Kind::kFraction;
    if (t.value < 0 || t.value > 1) throw InvalidArgument("target fraction must lie in [0, 1]");
  } else if (kind == "macs") {
    t.kind = Kind::kMacs;
    if (t.value <= 0 || t.value > 1) throw InvalidArgument("target macs ratio must lie in (0, 1]");
  } else {
    throw InvalidArgument("target kind '" + kind + "' is not one of groups, fraction, macs");
  }
  return t;
}

std::string PlanTarget::str() const {
  char buf[64];
  const char* k = kind == Kind::kGroups ? "groups" : kind == Kind::kFraction ? "fraction" : "macs";
  std::snprintf(buf, sizeof buf, "%s:%.17g", k, value);
  return buf;
}

std::vector<std::size_t> PruningPlan::removed_ids() const {
  std::vector<std::size_t> ids;
  for (const auto& r : rows) {
    if (r.removed) ids.push_back(r.group_id);
  }
  return ids;
}

bool scope_contains(const std::string& scope, const PruneGroup& group) {
  std::stringstream ss(scope);
  std::string item;
  bool any = false;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    if (item.empty()) continue;
    any = true;
    if (item == "all") return true;
    if (item.rfind("stage", 0) != 0) throw InvalidArgument("scope selector '" + item + "' is not recognised");
    const auto dot = item.find('.');
    const std::string num = item.substr(5, dot == std::string::npos ? std::string::npos : dot - 5);
    if (num.empty() || num.find_first_not_of("0123456789") != std::string::npos) {
      throw InvalidArgument("scope selector '" + item + "' has no stage number");
    }
    const int stage = std::stoi(num) - 1;
    const std::string part = dot == std::string::npos ? "" : item.substr(dot + 1);
    if (!part.empty() && part != "inner" && part != "output") {
      throw InvalidArgument("scope selector '" + item + "': expected .inner or .output");
    }
    if (stage != group.stage) continue;
    if (part.empty() || (part == "inner") == (group.role == SlotRole::kInnerChannel)) return true;
  }
  if (!any) throw InvalidArgument("scope is empty");
  return false;
}

PruningPlan make_plan(const NetworkGraph& net, const std::vector<PruneGroup>& groups,
                      const std::vector<ImportanceScore>& scores, const PlanTarget& target, const PlanOptions& opt) {
  if (scores.size() != groups.size()) {
    throw InvalidArgument("make_plan: " + std::to_string(scores.size()) + " scores for " +
                          std::to_string(groups.size()) + " groups");
  }
  if (!(opt.retention_floor > 0 && opt.retention_floor <= 1)) {
    throw InvalidArgument("make_plan: retention floor must lie in (0, 1]");
  }
  std::vector<double> by_id(groups.size(), std::numeric_limits<double>::quiet_NaN());
  for (const auto& s : scores) {
    if (s.group_id >= groups.size()) throw InvalidArgument("make_plan: score for unknown group");
    if (!std::isfinite(s.score)) throw InvalidArgument("make_plan: non-finite score for group " + std::to_string(s.group_id));
    by_id[s.group_id] = s.score;
  }
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (std::isnan(by_id[i])) throw InvalidArgument("make_plan: group " + std::to_string(i) + " has no score");
  }

  std::vector<std::size_t> order;
  for (const auto& g : groups) {
    const bool frozen =
        g.role == SlotRole::kBlockOutput && !net.stages.at(static_cast<std::size_t>(g.stage)).prunable_output;
    if (!frozen && scope_contains(opt.scope, g)) order.push_back(g.id);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(by_id[a], groups[a].stage, a) < std::tie(by_id[b], groups[b].stage, b);
  });

  const auto widths = unit_widths(net);
  std::map<UnitRef, std::size_t> removable;
  for (const auto& [ref, w] : widths) {
    const auto keep = static_cast<std::size_t>(std::ceil(opt.retention_floor * static_cast<double>(w) - 1e-9));
    removable[ref] = w - std::min(w, std::max<std::size_t>(keep, 1));
  }

  PruningPlan plan;
  plan.architecture = net.architecture_digest();
  plan.retention_floor = opt.retention_floor;
  plan.target = target.str();
  plan.scope = opt.scope;
  plan.group_count = groups.size();

  std::map<UnitRef, std::size_t> removed_counts;
  const Cost original = count_macs_params(net, opt.input_height, opt.input_width);
  std::size_t want = 0;
  if (target.kind == PlanTarget::Kind::kGroups) want = static_cast<std::size_t>(target.value);
  if (target.kind == PlanTarget::Kind::kFraction) {
    want = static_cast<std::size_t>(std::llround(target.value * static_cast<double>(order.size())));
  }
  auto met = [&](std::size_t removed) {
    if (target.kind != PlanTarget::Kind::kMacs) return removed >= want;
    const Cost now = count_macs_params(net, opt.input_height, opt.input_width, removed_counts);
    return static_cast<double>(now.macs) <= target.value * static_cast<double>(original.macs);
  };

  std::size_t removed = 0;
  for (std::size_t id : order) {
    PlanRow row{id, by_id[id], false};
    if (!met(removed)) {
      bool fits = true;
      for (const auto& slot : groups[id].slots) {
        if (removed_counts[slot.unit] + 1 > removable.at(slot.unit)) fits = false;
      }
      if (fits) {
        for (const auto& slot : groups[id].slots) ++removed_counts[slot.unit];
        row.removed = true;
        ++removed;
      }
    }
    plan.rows.push_back(row);
  }
  if (!met(removed)) {
    char buf[160];
    if (target.kind == PlanTarget::Kind::kMacs) {
      const Cost now = count_macs_params(net, opt.input_height, opt.input_width, removed_counts);
      std::snprintf(buf, sizeof buf, "macs ratio %.6f above target %.6f under retention floor %.3g",
                    static_cast<double>(now.macs) / static_cast<double>(original.macs), target.value,
                    opt.retention_floor);
    } else {
      std::snprintf(buf, sizeof buf, "removed %zu of %zu requested groups under retention floor %.3g", removed, want,
                    opt.retention_floor);
    }
    plan.shortfall = buf;
    logger()->warn("make_plan: {}", plan.shortfall);
  }
  return plan;
}

// Plain text, one "key value" per line, then one row per scored group.
void write_plan(std::ostream& out, const PruningPlan& plan) {
  char buf[96];
  out << "resprune-plan 1\n";
  out << "criterion " << plan.criterion << "\n";
  out << "seed " << plan.seed << "\n";
  out << "proxy_digest " << (plan.proxy_digest.empty() ? "-" : plan.proxy_digest) << "\n";
  out << "architecture " << plan.architecture << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", plan.retention_floor);
  out << "retention_floor " << buf << "\n";
  out << "target " << plan.target << "\n";
  out << "scope " << plan.scope << "\n";
  out << "group_count " << plan.group_count << "\n";
  out << "shortfall " << (plan.shortfall.empty() ? "-" : plan.shortfall) << "\n";
  out << "rows " << plan.rows.size() << "\n";
  for (const auto& r : plan.rows) {
    std::snprintf(buf, sizeof buf, "%zu %.17g %d\n", r.group_id, r.score, r.removed ? 1 : 0);
    out << buf;
  }
  if (!out) throw IoError("write_plan: write failed");
}

PruningPlan read_plan(std::istream& in) {
  PruningPlan plan;
  std::string line;
  std::size_t line_no = 0;
  auto next = [&](const std::string& key) {
    if (!std::getline(in, line)) throw FormatError("plan: missing '" + key + "' line");
    ++line_no;
    if (line.rfind(key + " ", 0) != 0) {
      throw FormatError("plan line " + std::to_string(line_no) + ": expected '" + key + "', got '" + line + "'");
    }
    return line.substr(key.size() + 1);
  };
  auto number = [&](const std::string& text, auto parse) {
    try {
      std::size_t used = 0;
      auto v = parse(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return v;
    } catch (const std::exception&) {
      throw FormatError("plan line " + std::to_string(line_no) + ": bad number '" + text + "'");
    }
  };
  const auto to_u64 = [](const std::string& s, std::size_t* u) { return std::stoull(s, u); };
  const auto to_d = [](const std::string& s, std::size_t* u) { return std::stod(s, u); };
  if (next("resprune-plan") != "1") throw FormatError("plan: unsupported version");
  plan.criterion = next("criterion");
  plan.seed = number(next("seed"), to_u64);
  plan.proxy_digest = next("proxy_digest");
  if (plan.proxy_digest == "-") plan.proxy_digest.clear();
  plan.architecture = next("architecture");
  plan.retention_floor = number(next("retention_floor"), to_d);
  plan.target = next("target");
  plan.scope = next("scope");
  plan.group_count = number(next("group_count"), to_u64);
  plan.shortfall = next("shortfall");
  if (plan.shortfall == "-") plan.shortfall.clear();
  const std::size_t rows = number(next("rows"), to_u64);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!std::getline(in, line)) throw FormatError("plan: expected " + std::to_string(rows) + " rows, got " + std::to_string(i));
    ++line_no;
    std::istringstream ls(line);
    std::string id, score, removed;
    if (!(ls >> id >> score >> removed) || (removed != "0" && removed != "1")) {
      throw FormatError("plan line " + std::to_string(line_no) + ": malformed row '" + line + "'");
    }
    PlanRow r;
    r.group_id = number(id, to_u64);
    r.score = number(score, to_d);
    r.removed = removed == "1";
    if (r.group_id >= plan.group_count) throw FormatError("plan line " + std::to_string(line_no) + ": group id out of range");
    plan.rows.push_back(r);
  }
  return plan;
}

void save_plan(const PruningPlan& plan, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_plan(out, plan);
}

PruningPlan load_plan(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_plan(in);
}

}  // namespace resprune
