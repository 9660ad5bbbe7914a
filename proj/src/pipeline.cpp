// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#include "resprune/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

#include "resprune/log.hpp"

namespace resprune {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw InvalidArgument(key + ": '" + v + "' is not a number");
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw InvalidArgument(key + ": '" + v + "' is not a non-negative integer");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw InvalidArgument(key + ": '" + v + "' is out of range");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InvalidArgument(key + ": '" + v + "' is not a boolean");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_uint(key, trim(item)));
  if (out.empty()) throw InvalidArgument(key + ": empty list");
  return out;
}

std::string fmt_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define RP_STR(name) \
  Field { #name, [](const RunConfig& c) { return c.name; }, [](RunConfig& c, const std::string& v) { c.name = v; } }
#define RP_UINT(name)                                                                  \
  Field {                                                                              \
    #name, [](const RunConfig& c) { return std::to_string(c.name); },                  \
        [](RunConfig& c, const std::string& v) {                                       \
          c.name = static_cast<decltype(c.name)>(parse_uint(#name, v));                \
        }                                                                              \
  }
#define RP_DOUBLE(name)                                                                                     \
  Field {                                                                                                   \
    #name, [](const RunConfig& c) { return fmt_double(c.name); },                                           \
        [](RunConfig& c, const std::string& v) { c.name = parse_double(#name, v); }                         \
  }
#define RP_BOOL(name)                                                                                       \
  Field {                                                                                                   \
    #name, [](const RunConfig& c) { return std::string(c.name ? "true" : "false"); },                       \
        [](RunConfig& c, const std::string& v) { c.name = parse_bool(#name, v); }                           \
  }
#define RP_LIST(name)                                                                                       \
  Field {                                                                                                   \
    #name, [](const RunConfig& c) { return fmt_list(c.name); },                                             \
        [](RunConfig& c, const std::string& v) { c.name = parse_list(#name, v); }                           \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      RP_STR(data_source),
      RP_STR(train_images),
      RP_STR(train_labels),
      RP_STR(test_images),
      RP_STR(test_labels),
      RP_UINT(class_count),
      RP_UINT(samples_per_class),
      RP_UINT(test_samples_per_class),
      RP_UINT(image_side),
      RP_UINT(data_seed),
      RP_UINT(stem_width),
      RP_LIST(stage_widths),
      RP_LIST(blocks_per_stage),
      RP_BOOL(depthwise),
      RP_UINT(train_epochs),
      RP_DOUBLE(train_lr),
      RP_DOUBLE(train_mixup_alpha),
      RP_BOOL(train_flip),
      RP_UINT(batch_size),
      RP_UINT(warmup_epochs),
      RP_DOUBLE(momentum),
      RP_DOUBLE(weight_decay),
      RP_UINT(train_seed),
      Field{"criterion", [](const RunConfig& c) { return criterion_name(c.criterion); },
            [](RunConfig& c, const std::string& v) { c.criterion = parse_criterion(v); }},
      Field{"target", [](const RunConfig& c) { return c.target.str(); },
            [](RunConfig& c, const std::string& v) { c.target = PlanTarget::parse(v); }},
      RP_STR(scope),
      RP_DOUBLE(retention_floor),
      RP_UINT(proxy_size),
      RP_UINT(prune_seed),
      RP_UINT(workers),
      RP_UINT(step1_epochs),
      RP_UINT(step2_epochs),
      RP_DOUBLE(step1_lr),
      RP_DOUBLE(step2_lr),
      RP_DOUBLE(step1_temperature),
      RP_DOUBLE(step1_alpha),
      RP_DOUBLE(step2_temperature),
      RP_DOUBLE(step2_alpha),
      RP_DOUBLE(eta),
      RP_DOUBLE(mixup_alpha),
      RP_BOOL(use_kd),
      RP_BOOL(use_mixup),
      RP_BOOL(run_step2),
      RP_BOOL(expand),
      RP_BOOL(refine),
      RP_BOOL(step2_flip),
      RP_UINT(finetune_seed),
      RP_STR(expanded_dir),
      RP_STR(output_dir),
  };
  return table;
}

#undef RP_STR
#undef RP_UINT
#undef RP_DOUBLE
#undef RP_BOOL
#undef RP_LIST

const Field& field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw InvalidArgument("unknown config key '" + key + "'");
}

}  // namespace

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) { field(key).set(*this, trim(value)); }
std::string RunConfig::get(const std::string& key) const { return field(key).get(*this); }

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw InvalidArgument("override '" + assignment + "' must look like key=value");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::vector<std::string> problems;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    try {
      cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const InvalidArgument& e) {
      problems.push_back("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = "config has " + std::to_string(problems.size()) + " problem(s):";
    for (const auto& p : problems) msg += "\n  " + p;
    throw InvalidArgument(msg);
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void RunConfig::validate() const {
  std::vector<std::string> p;
  auto unit_interval = [&](const char* k, double v) {
    if (!(v >= 0 && v <= 1)) p.push_back(std::string(k) + " must lie in [0, 1]");
  };
  auto non_negative = [&](const char* k, double v) {
    if (!(v >= 0) || !std::isfinite(v)) p.push_back(std::string(k) + " must be a finite value >= 0");
  };
  if (data_source != "synthetic" && data_source != "idx") p.push_back("data_source must be synthetic or idx");
  if (data_source == "idx" && (train_images.empty() || train_labels.empty())) {
    p.push_back("data_source idx needs train_images and train_labels");
  }
  if (data_source == "idx" && test_images.empty() != test_labels.empty()) {
    p.push_back("test_images and test_labels must be given together");
  }
  if (class_count < 1) p.push_back("class_count must be >= 1");
  if (data_source == "synthetic" && samples_per_class < 1) p.push_back("samples_per_class must be >= 1");
  if (image_side < 8) p.push_back("image_side must be >= 8");
  if (stem_width < 1) p.push_back("stem_width must be >= 1");
  if (stage_widths.empty()) p.push_back("stage_widths must list at least one stage");
  for (auto w : stage_widths) {
    if (w < 4) p.push_back("stage width " + std::to_string(w) + " is below the minimum of 4");
  }
  if (blocks_per_stage.size() != stage_widths.size()) p.push_back("blocks_per_stage must have one entry per stage");
  for (auto b : blocks_per_stage) {
    if (b < 1) p.push_back("every stage needs at least one block");
  }
  if (batch_size < 1) p.push_back("batch_size must be >= 1");
  non_negative("train_lr", train_lr);
  non_negative("train_mixup_alpha", train_mixup_alpha);
  non_negative("weight_decay", weight_decay);
  if (!(momentum >= 0 && momentum < 1)) p.push_back("momentum must lie in [0, 1)");
  if (!(retention_floor > 0 && retention_floor <= 1)) p.push_back("retention_floor must lie in (0, 1]");
  if (proxy_size < 1) p.push_back("proxy_size must be >= 1");
  if (workers < 1) p.push_back("workers must be >= 1");
  try {
    PruneGroup probe;
    scope_contains(scope, probe);
    const auto dot = scope.find("stage");
    if (dot != std::string::npos) {
      std::stringstream ss(scope);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.rfind("stage", 0) != 0) continue;
        const auto n = std::stoul(item.substr(5));
        if (n < 1 || n > stage_widths.size()) p.push_back("scope '" + item + "' names a stage that does not exist");
      }
    }
  } catch (const InvalidArgument& e) {
    p.push_back(e.what());
  }
  non_negative("step1_lr", step1_lr);
  non_negative("step2_lr", step2_lr);
  if (!(step1_temperature > 0)) p.push_back("step1_temperature must be positive");
  if (!(step2_temperature > 0)) p.push_back("step2_temperature must be positive");
  unit_interval("step1_alpha", step1_alpha);
  unit_interval("step2_alpha", step2_alpha);
  non_negative("eta", eta);
  if (use_mixup && !(mixup_alpha > 0)) p.push_back("mixup_alpha must be positive when use_mixup is on");
  if (!p.empty()) {
    std::string msg = "config has " + std::to_string(p.size()) + " problem(s):";
    for (const auto& s : p) msg += "\n  " + s;
    throw InvalidArgument(msg);
  }
}

TinyResNetConfig RunConfig::architecture() const {
  TinyResNetConfig a;
  a.in_channels = 1;
  a.stem_width = stem_width;
  a.stage_widths = stage_widths;
  a.blocks_per_stage = blocks_per_stage;
  a.class_count = class_count;
  a.depthwise = depthwise;
  a.seed = train_seed;
  return a;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.epochs = train_epochs;
  t.batch_size = batch_size;
  t.lr = train_lr;
  t.warmup_epochs = warmup_epochs;
  t.momentum = momentum;
  t.weight_decay = weight_decay;
  t.mixup_alpha = train_mixup_alpha;
  t.flip = train_flip;
  t.seed = train_seed;
  return t;
}

FinetuneConfig RunConfig::finetune_config() const {
  FinetuneConfig f;
  f.step1_epochs = step1_epochs;
  f.step2_epochs = step2_epochs;
  f.batch_size = batch_size;
  f.step1_lr = step1_lr;
  f.step2_lr = step2_lr;
  f.warmup_epochs = warmup_epochs;
  f.momentum = momentum;
  f.weight_decay = weight_decay;
  f.mixup_alpha = mixup_alpha;
  f.step1 = DistillConfig{step1_temperature, step1_alpha, DistillStep::kStep1};
  f.step2 = DistillConfig{step2_temperature, step2_alpha, DistillStep::kStep2};
  f.eta = eta;
  f.use_kd = use_kd;
  f.use_mixup = use_mixup;
  f.run_step2 = run_step2;
  f.expand = expand;
  f.refine = refine;
  f.step2_flip = step2_flip;
  f.seed = finetune_seed;
  return f;
}

PlanOptions RunConfig::plan_options() const {
  PlanOptions o;
  o.retention_floor = retention_floor;
  o.scope = scope;
  o.input_height = image_side;
  o.input_width = image_side;
  return o;
}

std::string default_output_root() {
  const char* env = std::getenv("RESPRUNE_OUT");
  return env && *env ? env : "runs";
}

DataSplits load_data(const RunConfig& cfg) {
  DataSplits d;
  if (cfg.data_source == "synthetic") {
    SyntheticSpec spec;
    spec.class_count = cfg.class_count;
    spec.samples_per_class = cfg.samples_per_class;
    spec.side = cfg.image_side;
    spec.seed = cfg.data_seed;
    d.train = make_synthetic(spec);
    spec.samples_per_class = cfg.test_samples_per_class;
    spec.seed = derive_seed(cfg.data_seed, 1);
    if (spec.samples_per_class) d.test = make_synthetic(spec);
  } else {
    d.train = load_idx(cfg.train_images, cfg.train_labels, cfg.class_count);
    if (!cfg.test_images.empty()) d.test = load_idx(cfg.test_images, cfg.test_labels, cfg.class_count);
  }
  d.train.split = "train";
  d.test.split = "test";
  if (d.train.size() == 0) throw InvalidArgument("training split is empty");
  d.stats = compute_stats(d.train);
  return d;
}

// --- commands ----------------------------------------------------------------

namespace {

fs::path prepare_output(const RunConfig& cfg) {
  cfg.validate();
  const fs::path dir = cfg.output_dir.empty() ? fs::path(default_output_root()) : fs::path(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  std::ofstream snap(dir / "config.resolved");
  if (!snap) throw IoError("cannot write " + (dir / "config.resolved").string());
  RunConfig resolved = cfg;
  resolved.output_dir = dir.string();
  snap << resolved.to_text();
  return dir;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

class MetricsLog {
 public:
  explicit MetricsLog(const fs::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw IoError("cannot write " + path.string());
  }
  void operator()(const EpochMetrics& m) {
    json j = {{"phase", m.phase},   {"epoch", m.epoch},          {"lr", m.lr},
              {"loss", m.loss},     {"kl", m.kl},                {"ce", m.ce},
              {"train_accuracy", m.train_accuracy}, {"eval_accuracy", opt_json(m.eval_accuracy)},
              {"skipped_refinements", m.skipped_refinements}};
    out_ << j.dump() << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

void check_input_side(const NetworkGraph& net, const Dataset& ds, const std::string& what) {
  if (ds.channels() != net.in_channels) {
    throw InvalidArgument(what + ": network expects " + std::to_string(net.in_channels) + " input channel(s), data has " +
                          std::to_string(ds.channels()));
  }
  if (ds.class_count != net.class_count) {
    throw InvalidArgument(what + ": network has " + std::to_string(net.class_count) + " classes, data has " +
                          std::to_string(ds.class_count));
  }
}

}  // namespace

TrainSummary cmd_train(const RunConfig& cfg) {
  const fs::path dir = prepare_output(cfg);
  DataSplits data = load_data(cfg);
  NetworkGraph net = build_tiny_resnet(cfg.architecture());
  check_input_side(net, data.train, "train");
  MetricsLog log(dir / "train_metrics.jsonl");
  const Dataset* eval = data.test.size() ? &data.test : nullptr;
  train_supervised(net, data.train, data.stats, cfg.train_config(), eval, std::ref(log));
  TrainSummary s;
  s.checkpoint = (dir / "teacher.ckpt").string();
  save_checkpoint(net, s.checkpoint);
  s.train_accuracy = accuracy(net, data.train, data.stats);
  if (eval) s.test_accuracy = accuracy(net, *eval, data.stats);
  write_json(dir / "train_summary.json", {{"checkpoint", s.checkpoint},
                                          {"train_accuracy", s.train_accuracy},
                                          {"test_accuracy", opt_json(s.test_accuracy)},
                                          {"architecture", net.architecture_digest()}});
  return s;
}

PruneSummary cmd_prune(const RunConfig& cfg, const std::string& teacher_checkpoint) {
  const fs::path dir = prepare_output(cfg);
  NetworkGraph teacher = load_checkpoint(teacher_checkpoint);
  DataSplits data = load_data(cfg);
  check_input_side(teacher, data.train, "prune");
  const auto groups = discover_groups(teacher);
  std::optional<ProxySet> proxy;
  if (cfg.criterion == Criterion::kKl || cfg.criterion == Criterion::kDeltaLoss) {
    proxy = make_proxy(teacher, data.train, data.stats, cfg.proxy_size, cfg.prune_seed);
  }
  ScoreOptions so;
  so.seed = cfg.prune_seed;
  so.workers = cfg.workers;
  const auto scores = score_groups(teacher, groups, proxy ? &*proxy : nullptr, cfg.criterion, so);
  PruningPlan plan = make_plan(teacher, groups, scores, cfg.target, cfg.plan_options());
  plan.seed = cfg.prune_seed;
  if (proxy) plan.proxy_digest = proxy->digest;
  NetworkGraph pruned = apply_surgery(teacher, plan);

  PruneSummary s;
  s.plan_path = (dir / "plan.txt").string();
  s.checkpoint = (dir / "pruned.ckpt").string();
  save_plan(plan, s.plan_path);
  save_checkpoint(pruned, s.checkpoint);
  s.before = count_macs_params(teacher, cfg.image_side, cfg.image_side);
  s.after = count_macs_params(pruned, cfg.image_side, cfg.image_side);
  s.removed_groups = plan.removed_ids().size();
  s.shortfall = plan.shortfall;
  if (data.test.size()) s.test_accuracy = accuracy(pruned, data.test, data.stats);
  write_json(dir / "prune_summary.json",
             {{"criterion", criterion_name(cfg.criterion)},
              {"target", cfg.target.str()},
              {"scope", cfg.scope},
              {"seed", cfg.prune_seed},
              {"group_count", groups.size()},
              {"removed_groups", s.removed_groups},
              {"macs_before", s.before.macs},
              {"macs_after", s.after.macs},
              {"params_before", s.before.params},
              {"params_after", s.after.params},
              {"macs_ratio", s.before.macs ? double(s.after.macs) / double(s.before.macs) : 0.0},
              {"pre_finetune_accuracy", opt_json(s.test_accuracy)},
              {"shortfall", s.shortfall}});
  return s;
}

FinetuneSummary cmd_finetune(const RunConfig& cfg, const std::string& pruned_checkpoint,
                             const std::string& teacher_checkpoint) {
  const fs::path dir = prepare_output(cfg);
  NetworkGraph student = load_checkpoint(pruned_checkpoint);
  NetworkGraph teacher = load_checkpoint(teacher_checkpoint);
  if (student.class_count != teacher.class_count) {
    throw InvalidArgument("finetune: student has " + std::to_string(student.class_count) + " classes, teacher " +
                          std::to_string(teacher.class_count));
  }
  DataSplits data = load_data(cfg);
  check_input_side(student, data.train, "finetune");

  FinetuneConfig fc = cfg.finetune_config();
  fc.store_path = (dir / "logits.bin").string();
  std::optional<ExpandedDataset> expanded;
  if (fc.run_step2 && fc.expand && !cfg.expanded_dir.empty()) {
    const fs::path ed(cfg.expanded_dir);
    if (fs::exists(ed / "images.idx") && fs::exists(ed / "labels.idx")) {
      expanded.emplace();
      expanded->data = load_idx((ed / "images.idx").string(), (ed / "labels.idx").string(), cfg.class_count);
      if (expanded->data.size() != 6 * data.train.size()) {
        throw InvalidArgument("finetune: expanded set in " + ed.string() + " has " +
                              std::to_string(expanded->data.size()) + " records, expected " +
                              std::to_string(6 * data.train.size()));
      }
    } else {
      logger()->warn("finetune: no expanded set in {}; generating it with seed {}", ed.string(), cfg.finetune_seed);
    }
  }
  MetricsLog log(dir / "finetune_metrics.jsonl");
  const Dataset* eval = data.test.size() ? &data.test : nullptr;
  FinetuneResult r = finetune(student, teacher, data.train, data.stats, fc, eval, std::ref(log),
                              expanded ? &*expanded : nullptr);

  FinetuneSummary s;
  s.checkpoint = (dir / "finetuned.ckpt").string();
  save_checkpoint(student, s.checkpoint);
  s.final_accuracy = r.final_accuracy;
  s.epochs = r.metrics.size();
  json j = {{"checkpoint", s.checkpoint},
            {"final_accuracy", opt_json(s.final_accuracy)},
            {"epochs", s.epochs},
            {"macs", count_macs_params(student, cfg.image_side, cfg.image_side).macs},
            {"params", count_macs_params(student, cfg.image_side, cfg.image_side).params}};
  const fs::path plan_path = fs::path(pruned_checkpoint).parent_path() / "plan.txt";
  if (fs::exists(plan_path)) j["criterion"] = load_plan(plan_path.string()).criterion;
  write_json(dir / "finetune_summary.json", j);
  return s;
}

std::string cmd_expand(const RunConfig& cfg) {
  const fs::path dir = prepare_output(cfg);
  DataSplits data = load_data(cfg);
  const std::uint64_t seed = derive_seed(cfg.finetune_seed, 2);
  const ExpandedDataset ex = expand_dataset(data.train, seed);
  const fs::path out = dir / "expanded";
  fs::create_directories(out);
  save_idx(ex.data, (out / "images.idx").string(), (out / "labels.idx").string());
  save_provenance(ex, seed, (out / "provenance.json").string());
  return out.string();
}

double cmd_eval(const RunConfig& cfg, const std::string& checkpoint) {
  cfg.validate();
  NetworkGraph net = load_checkpoint(checkpoint);
  DataSplits data = load_data(cfg);
  const Dataset& ds = data.test.size() ? data.test : data.train;
  check_input_side(net, ds, "eval");
  return accuracy(net, ds, data.stats);
}

// --- report ------------------------------------------------------------------

namespace {

struct Column {
  std::vector<double> pre, final_acc, macs_ratio, params_after;
};

std::string mean_cell(const std::vector<double>& v, int precision, double scale) {
  if (v.empty()) return "no data";
  double s = 0;
  for (double x : v) s += x;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, scale * s / static_cast<double>(v.size()));
  return buf;
}

json mean_json(const std::vector<double>& v) {
  if (v.empty()) return nullptr;
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

std::string cmd_report(const std::string& run_dir) {
  const fs::path root(run_dir);
  if (!fs::is_directory(root)) throw IoError("report: " + run_dir + " is not a directory");
  const std::vector<std::pair<Criterion, std::string>> order = {{Criterion::kRandom, "Random"},
                                                                {Criterion::kWeightSum, "Weight Sum"},
                                                                {Criterion::kDeltaLoss, "ΔLoss"},
                                                                {Criterion::kKl, "KL"}};
  std::map<Criterion, Column> cols;
  std::vector<fs::path> summaries;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().filename() == "prune_summary.json") summaries.push_back(e.path());
  }
  std::sort(summaries.begin(), summaries.end());
  std::size_t runs = 0;
  for (const auto& p : summaries) {
    const json j = read_json(p);
    const Criterion c = parse_criterion(j.at("criterion").get<std::string>());
    Column& col = cols[c];
    ++runs;
    if (!j.at("pre_finetune_accuracy").is_null()) col.pre.push_back(j["pre_finetune_accuracy"].get<double>());
    col.macs_ratio.push_back(j.at("macs_ratio").get<double>());
    col.params_after.push_back(j.at("params_after").get<double>());
    const fs::path ft = p.parent_path() / "finetune_summary.json";
    if (fs::exists(ft)) {
      const json f = read_json(ft);
      if (!f.at("final_accuracy").is_null()) col.final_acc.push_back(f["final_accuracy"].get<double>());
    }
  }

  struct Row {
    std::string name;
    std::vector<double> Column::*member;
    int precision;
    double scale;
  };
  const std::vector<Row> rows = {{"pre-finetune acc (%)", &Column::pre, 2, 100.0},
                                 {"final acc (%)", &Column::final_acc, 2, 100.0},
                                 {"MACs ratio", &Column::macs_ratio, 4, 1.0},
                                 {"params", &Column::params_after, 0, 1.0}};
  std::vector<std::vector<std::string>> cells;
  cells.push_back({"metric"});
  for (const auto& [c, name] : order) cells.back().push_back(name);
  for (const auto& r : rows) {
    std::vector<std::string> line{r.name};
    for (const auto& [c, name] : order) {
      auto it = cols.find(c);
      line.push_back(it == cols.end() ? "no data" : mean_cell(it->second.*(r.member), r.precision, r.scale));
    }
    cells.push_back(std::move(line));
  }
  // Display width: count code points, not bytes.
  auto width = [](const std::string& s) {
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char ch) { return (ch & 0xC0) != 0x80; }));
  };
  std::vector<std::size_t> w(cells[0].size(), 0);
  for (const auto& line : cells)
    for (std::size_t i = 0; i < line.size(); ++i) w[i] = std::max(w[i], width(line[i]));
  std::string text;
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      const std::string pad(w[i] - width(line[i]), ' ');
      text += i == 0 ? line[i] + pad : "  " + pad + line[i];
    }
    text += "\n";
  }
  text += "runs: " + std::to_string(runs) + "\n";

  json j = {{"runs", runs}, {"columns", json::array()}};
  for (const auto& [c, name] : order) {
    auto it = cols.find(c);
    const Column empty;
    const Column& col = it == cols.end() ? empty : it->second;
    j["columns"].push_back({{"criterion", criterion_name(c)},
                            {"label", name},
                            {"runs", col.macs_ratio.size()},
                            {"pre_finetune_accuracy", mean_json(col.pre)},
                            {"final_accuracy", mean_json(col.final_acc)},
                            {"macs_ratio", mean_json(col.macs_ratio)},
                            {"params", mean_json(col.params_after)}});
  }
  std::ofstream(root / "report.txt") << text;
  write_json(root / "report.json", j);
  return text;
}

}  // namespace resprune
