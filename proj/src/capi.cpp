// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#include "resprune/resprune.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "resprune/error.hpp"
#include "resprune/pipeline.hpp"

struct rp_config {
  resprune::RunConfig cfg;
};

struct rp_net {
  resprune::NetworkGraph net;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
rp_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return RP_OK;
  } catch (const resprune::ShapeError& e) {
    g_last_error = e.what();
    return RP_SHAPE_ERROR;
  } catch (const resprune::InvalidArgument& e) {
    g_last_error = e.what();
    return RP_INVALID_ARGUMENT;
  } catch (const resprune::IoError& e) {
    g_last_error = e.what();
    return RP_IO_ERROR;
  } catch (const resprune::FormatError& e) {
    g_last_error = e.what();
    return RP_FORMAT_ERROR;
  } catch (const resprune::NumericError& e) {
    g_last_error = e.what();
    return RP_NUMERIC_ERROR;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return RP_INTERNAL_ERROR;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return RP_INTERNAL_ERROR;
  } catch (...) {
    g_last_error = "unknown error";
    return RP_INTERNAL_ERROR;
  }
}

void need(const void* p, const char* what) {
  if (!p) throw resprune::InvalidArgument(std::string(what) + " must not be null");
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* rp_version(void) { return "0.1.0"; }
const char* rp_last_error(void) { return g_last_error.c_str(); }

const char* rp_status_name(rp_status status) {
  switch (status) {
    case RP_OK: return "ok";
    case RP_INVALID_ARGUMENT: return "invalid argument";
    case RP_SHAPE_ERROR: return "shape error";
    case RP_IO_ERROR: return "i/o error";
    case RP_FORMAT_ERROR: return "format error";
    case RP_NUMERIC_ERROR: return "numeric error";
    case RP_INTERNAL_ERROR: return "internal error";
  }
  return "unknown status";
}

rp_status rp_config_new(rp_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new rp_config{};
  });
}

rp_status rp_config_load(const char* path, rp_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new rp_config{resprune::RunConfig::load(path)};
  });
}

void rp_config_free(rp_config* cfg) { delete cfg; }

rp_status rp_config_set(rp_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    need(cfg, "cfg");
    need(key, "key");
    need(value, "value");
    cfg->cfg.set(key, value);
  });
}

rp_status rp_config_get(const rp_config* cfg, const char* key, char* buf, size_t len, size_t* needed) {
  return guarded([&] {
    need(cfg, "cfg");
    need(key, "key");
    const std::string v = cfg->cfg.get(key);
    if (needed) *needed = v.size() + 1;
    if (buf && len) {
      const size_t n = std::min(len - 1, v.size());
      std::memcpy(buf, v.data(), n);
      buf[n] = '\0';
    }
  });
}

rp_status rp_config_validate(const rp_config* cfg) {
  return guarded([&] {
    need(cfg, "cfg");
    cfg->cfg.validate();
  });
}

rp_status rp_config_dump(const rp_config* cfg, char** out) {
  return guarded([&] {
    need(cfg, "cfg");
    need(out, "out");
    *out = dup_string(cfg->cfg.to_text());
  });
}

void rp_string_free(char* s) { delete[] s; }

rp_status rp_cmd_train(const rp_config* cfg, double* train_accuracy) {
  return guarded([&] {
    need(cfg, "cfg");
    const auto s = resprune::cmd_train(cfg->cfg);
    if (train_accuracy) *train_accuracy = s.train_accuracy;
  });
}

rp_status rp_cmd_prune(const rp_config* cfg, const char* teacher_checkpoint, uint64_t* macs_before,
                       uint64_t* macs_after) {
  return guarded([&] {
    need(cfg, "cfg");
    need(teacher_checkpoint, "teacher_checkpoint");
    const auto s = resprune::cmd_prune(cfg->cfg, teacher_checkpoint);
    if (macs_before) *macs_before = s.before.macs;
    if (macs_after) *macs_after = s.after.macs;
  });
}

rp_status rp_cmd_finetune(const rp_config* cfg, const char* pruned_checkpoint, const char* teacher_checkpoint,
                          double* final_accuracy) {
  return guarded([&] {
    need(cfg, "cfg");
    need(pruned_checkpoint, "pruned_checkpoint");
    need(teacher_checkpoint, "teacher_checkpoint");
    const auto s = resprune::cmd_finetune(cfg->cfg, pruned_checkpoint, teacher_checkpoint);
    if (final_accuracy) *final_accuracy = s.final_accuracy.value_or(-1.0);
  });
}

rp_status rp_cmd_expand(const rp_config* cfg, char** out_dir) {
  return guarded([&] {
    need(cfg, "cfg");
    const std::string dir = resprune::cmd_expand(cfg->cfg);
    if (out_dir) *out_dir = dup_string(dir);
  });
}

rp_status rp_cmd_eval(const rp_config* cfg, const char* checkpoint, double* accuracy) {
  return guarded([&] {
    need(cfg, "cfg");
    need(checkpoint, "checkpoint");
    need(accuracy, "accuracy");
    *accuracy = resprune::cmd_eval(cfg->cfg, checkpoint);
  });
}

rp_status rp_cmd_report(const char* run_dir, char** text) {
  return guarded([&] {
    need(run_dir, "run_dir");
    const std::string t = resprune::cmd_report(run_dir);
    if (text) *text = dup_string(t);
  });
}

rp_status rp_net_load(const char* path, rp_net** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new rp_net{resprune::load_checkpoint(path)};
  });
}

void rp_net_free(rp_net* net) { delete net; }

rp_status rp_net_cost(const rp_net* net, size_t height, size_t width, uint64_t* macs, uint64_t* params) {
  return guarded([&] {
    need(net, "net");
    const auto c = resprune::count_macs_params(net->net, height, width);
    if (macs) *macs = c.macs;
    if (params) *params = c.params;
  });
}

rp_status rp_net_class_count(const rp_net* net, size_t* out) {
  return guarded([&] {
    need(net, "net");
    need(out, "out");
    *out = net->net.class_count;
  });
}

}  // extern "C"
