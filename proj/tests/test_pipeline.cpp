// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "resprune/error.hpp"
#include "resprune/pipeline.hpp"

using namespace resprune;
namespace fs = std::filesystem;

namespace {

RunConfig tiny(const fs::path& out) {
  RunConfig c;
  c.samples_per_class = 3;
  c.test_samples_per_class = 2;
  c.stem_width = 8;
  c.stage_widths = {8, 8};
  c.blocks_per_stage = {1, 1};
  c.train_epochs = 1;
  c.step1_epochs = 1;
  c.step2_epochs = 1;
  c.proxy_size = 8;
  c.output_dir = out.string();
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("resprune_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("config defaults follow the documented training settings") {
  const RunConfig c;
  CHECK(c.batch_size == 32);
  CHECK(c.step1_temperature == 2.0);
  CHECK(c.step2_temperature == 1.0);
  CHECK(c.step1_alpha == 0.7);
  CHECK(c.step2_alpha == 0.7);
  CHECK(c.step1_lr == 0.01);
  CHECK(c.step2_lr == 1e-4);
  CHECK(c.eta == 1.0);
  CHECK(c.warmup_epochs == 5);
  CHECK(c.step1_epochs == 200);
  CHECK(c.step2_epochs == 16);
  CHECK(c.proxy_size == 256);
  CHECK(c.retention_floor == 0.3);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("config text round-trips and overrides win") {
  RunConfig c;
  c.apply_override("criterion=random");
  c.apply_override("target = groups:12");
  c.apply_override("stage_widths=16,24");
  c.apply_override("blocks_per_stage=1,3");
  c.apply_override("step2_lr=3.5e-5");
  const RunConfig back = RunConfig::parse(c.to_text());
  CHECK(back.to_text() == c.to_text());
  CHECK(back.criterion == Criterion::kRandom);
  CHECK(back.target.kind == PlanTarget::Kind::kGroups);
  CHECK(back.blocks_per_stage == std::vector<std::size_t>{1, 3});
  CHECK(back.step2_lr == 3.5e-5);
  CHECK(RunConfig::parse("# comment\n\neta = 0   # trailing\n").eta == 0.0);
}

TEST_CASE("config errors are reported together") {
  try {
    RunConfig::parse("eta = x\nunknown = 1\nnot a line\n");
    FAIL("expected rejection");
  } catch (const InvalidArgument& e) {
    const std::string m = e.what();
    CHECK(m.find("3 problem") != std::string::npos);
    CHECK(m.find("line 1") != std::string::npos);
    CHECK(m.find("unknown") != std::string::npos);
    CHECK(m.find("line 3") != std::string::npos);
  }
  RunConfig c;
  c.momentum = 1.0;
  c.step2_alpha = -0.1;
  c.blocks_per_stage = {2, 2};
  c.scope = "stage4.inner";
  c.data_source = "idx";
  try {
    c.validate();
    FAIL("expected rejection");
  } catch (const InvalidArgument& e) {
    const std::string m = e.what();
    for (const char* key : {"momentum", "step2_alpha", "blocks_per_stage", "stage4", "train_images"}) {
      INFO(key);
      CHECK(m.find(key) != std::string::npos);
    }
  }
  CHECK_THROWS_AS(c.apply_override("no-equals"), InvalidArgument);
  CHECK_THROWS_AS(c.apply_override("depthwise=maybe"), InvalidArgument);
}

TEST_CASE("output root comes from the environment") {
  ::setenv("RESPRUNE_OUT", "/tmp/somewhere", 1);
  CHECK(default_output_root() == "/tmp/somewhere");
  ::unsetenv("RESPRUNE_OUT");
  CHECK(default_output_root() == "runs");
}

TEST_CASE("train, prune, finetune and report on a tiny run") {
  const fs::path root = scratch("pipeline");
  RunConfig c = tiny(root / "teacher");
  const TrainSummary t = cmd_train(c);
  CHECK(fs::exists(t.checkpoint));
  CHECK(fs::exists(root / "teacher" / "config.resolved"));
  CHECK(RunConfig::load((root / "teacher" / "config.resolved").string()).train_epochs == 1);

  c.output_dir = (root / "kl").string();
  c.target = PlanTarget::parse("fraction:0.25");
  const PruneSummary p = cmd_prune(c, t.checkpoint);
  CHECK(p.after.macs < p.before.macs);
  CHECK(p.removed_groups > 0);

  c.refine = false;
  const FinetuneSummary f = cmd_finetune(c, p.checkpoint, t.checkpoint);
  CHECK(f.final_accuracy.has_value());
  CHECK(f.epochs == 2);
  CHECK(fs::exists(root / "kl" / "logits.bin"));
  const LogitStore store = LogitStore::load((root / "kl" / "logits.bin").string());
  CHECK(store.eta() == 0.0);
  CHECK(store.size() == 6 * 10 * 3);

  const std::string first = cmd_report(root.string());
  CHECK(first.find("no data") != std::string::npos);  // only KL has runs
  CHECK(first.find("Random") < first.find("Weight Sum"));
  CHECK(first.find("Weight Sum") < first.find("KL"));
  const std::string again = cmd_report(root.string());
  CHECK(first == again);
  CHECK(slurp(root / "report.json").find("\"final_accuracy\": null") != std::string::npos);

  RunConfig bad = c;
  bad.class_count = 5;
  CHECK_THROWS_AS(cmd_finetune(bad, p.checkpoint, t.checkpoint), InvalidArgument);
  fs::remove_all(root);
}

TEST_CASE("expanded set on disk feeds fine-tuning") {
  const fs::path root = scratch("expand");
  RunConfig c = tiny(root);
  const std::string dir = cmd_expand(c);
  const Dataset ex = load_idx(dir + "/images.idx", dir + "/labels.idx");
  CHECK(ex.size() == 6 * 30);
  CHECK(fs::exists(fs::path(dir) / "provenance.json"));
  fs::remove_all(root);
}
