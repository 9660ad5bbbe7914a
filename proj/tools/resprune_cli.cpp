// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

// Command-line front end. Talks to the library only through the C API.

#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

#include "resprune/resprune.h"

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "Config file (key = value lines)")->check(CLI::ExistingFile);
  cmd->add_option("-s,--set", c.overrides, "Override a config key: key=value (repeatable)");
  cmd->add_option("-o,--out", c.out, "Output directory (default: $RESPRUNE_OUT or ./runs)");
}

int fail(rp_status s) {
  std::fprintf(stderr, "error (%s): %s\n", rp_status_name(s), rp_last_error());
  return 1;
}

// Builds the config from file, overrides and flags. Returns nullptr on error.
rp_config* build_config(const Common& c, const std::vector<std::pair<std::string, std::string>>& extra) {
  rp_config* cfg = nullptr;
  rp_status s = c.config.empty() ? rp_config_new(&cfg) : rp_config_load(c.config.c_str(), &cfg);
  if (s != RP_OK) {
    fail(s);
    return nullptr;
  }
  auto set = [&](const std::string& k, const std::string& v) {
    const rp_status st = rp_config_set(cfg, k.c_str(), v.c_str());
    if (st != RP_OK) fail(st);
    return st == RP_OK;
  };
  for (const auto& o : c.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: override '%s' must look like key=value\n", o.c_str());
      rp_config_free(cfg);
      return nullptr;
    }
    if (!set(o.substr(0, eq), o.substr(eq + 1))) {
      rp_config_free(cfg);
      return nullptr;
    }
  }
  if (!c.out.empty() && !set("output_dir", c.out)) {
    rp_config_free(cfg);
    return nullptr;
  }
  for (const auto& [k, v] : extra) {
    if (!set(k, v)) {
      rp_config_free(cfg);
      return nullptr;
    }
  }
  if ((s = rp_config_validate(cfg)) != RP_OK) {
    fail(s);
    rp_config_free(cfg);
    return nullptr;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Channel-group pruning and limited-data distillation for small residual networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", rp_version());

  Common train_opts, prune_opts, ft_opts, expand_opts, eval_opts, cfg_opts;
  std::string teacher, pruned, checkpoint, run_dir;
  bool no_refine = false, no_expand = false;

  auto* train = app.add_subcommand("train", "Train the reference network");
  add_common(train, train_opts);

  auto* prune = app.add_subcommand("prune", "Score channel groups, plan and apply surgery");
  add_common(prune, prune_opts);
  prune->add_option("-t,--teacher", teacher, "Teacher checkpoint")->required()->check(CLI::ExistingFile);

  auto* ft = app.add_subcommand("finetune", "Two-step distillation of a pruned network");
  add_common(ft, ft_opts);
  ft->add_option("-p,--pruned", pruned, "Pruned checkpoint")->required()->check(CLI::ExistingFile);
  ft->add_option("-t,--teacher", teacher, "Teacher checkpoint")->required()->check(CLI::ExistingFile);
  ft->add_flag("--no-refine", no_refine, "Keep stored teacher logits fixed (eta = 0)");
  ft->add_flag("--no-expand", no_expand, "Run step 2 on the original records");

  auto* expand = app.add_subcommand("expand", "Write the 6x expanded training set");
  add_common(expand, expand_opts);

  auto* eval = app.add_subcommand("eval", "Accuracy of a checkpoint on the test split");
  add_common(eval, eval_opts);
  eval->add_option("checkpoint", checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);

  auto* report = app.add_subcommand("report", "Criterion comparison table over finished runs");
  report->add_option("run_dir", run_dir, "Directory holding runs")->required()->check(CLI::ExistingDirectory);

  auto* show = app.add_subcommand("config", "Print the resolved configuration");
  add_common(show, cfg_opts);

  CLI11_PARSE(app, argc, argv);

  if (*report) {
    char* text = nullptr;
    const rp_status s = rp_cmd_report(run_dir.c_str(), &text);
    if (s != RP_OK) return fail(s);
    std::fputs(text, stdout);
    rp_string_free(text);
    return 0;
  }

  std::vector<std::pair<std::string, std::string>> extra;
  const Common* opts = &train_opts;
  if (*prune) opts = &prune_opts;
  if (*ft) {
    opts = &ft_opts;
    if (no_refine) extra.emplace_back("refine", "false");
    if (no_expand) extra.emplace_back("expand", "false");
  }
  if (*expand) opts = &expand_opts;
  if (*eval) opts = &eval_opts;
  if (*show) opts = &cfg_opts;

  rp_config* cfg = build_config(*opts, extra);
  if (!cfg) return 1;
  rp_status s = RP_OK;
  if (*train) {
    double acc = 0;
    if ((s = rp_cmd_train(cfg, &acc)) == RP_OK) std::printf("train accuracy %.4f\n", acc);
  } else if (*prune) {
    uint64_t before = 0, after = 0;
    if ((s = rp_cmd_prune(cfg, teacher.c_str(), &before, &after)) == RP_OK) {
      std::printf("MACs %llu -> %llu (%.4f)\n", static_cast<unsigned long long>(before),
                  static_cast<unsigned long long>(after), before ? double(after) / double(before) : 0.0);
    }
  } else if (*ft) {
    double acc = 0;
    if ((s = rp_cmd_finetune(cfg, pruned.c_str(), teacher.c_str(), &acc)) == RP_OK) {
      if (acc >= 0) std::printf("final accuracy %.4f\n", acc);
    }
  } else if (*expand) {
    char* dir = nullptr;
    if ((s = rp_cmd_expand(cfg, &dir)) == RP_OK) {
      std::printf("%s\n", dir);
      rp_string_free(dir);
    }
  } else if (*eval) {
    double acc = 0;
    if ((s = rp_cmd_eval(cfg, checkpoint.c_str(), &acc)) == RP_OK) std::printf("accuracy %.4f\n", acc);
  } else if (*show) {
    char* text = nullptr;
    if ((s = rp_config_dump(cfg, &text)) == RP_OK) {
      std::fputs(text, stdout);
      rp_string_free(text);
    }
  }
  rp_config_free(cfg);
  return s == RP_OK ? 0 : fail(s);
}
