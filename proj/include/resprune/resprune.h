/* SPDX-License-Identifier: Apache-2.0 */
/* Copyright 2026 The resprune Authors */

/* C interface to resprune. Every call returns an rp_status; on failure the
 * message is available from rp_last_error() on the same thread until the
 * next call. Handles are opaque and owned by the caller. */

#ifndef RESPRUNE_H_
#define RESPRUNE_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define RP_API __attribute__((visibility("default")))
#else
#define RP_API
#endif

typedef enum rp_status {
  RP_OK = 0,
  RP_INVALID_ARGUMENT = 1,
  RP_SHAPE_ERROR = 2,
  RP_IO_ERROR = 3,
  RP_FORMAT_ERROR = 4,
  RP_NUMERIC_ERROR = 5,
  RP_INTERNAL_ERROR = 6
} rp_status;

typedef struct rp_config rp_config;
typedef struct rp_net rp_net;

RP_API const char* rp_version(void);
RP_API const char* rp_last_error(void);
RP_API const char* rp_status_name(rp_status status);

/* Run configuration. */
RP_API rp_status rp_config_new(rp_config** out);
RP_API rp_status rp_config_load(const char* path, rp_config** out);
RP_API void rp_config_free(rp_config* cfg);
/* key=value, same keys as the config file. */
RP_API rp_status rp_config_set(rp_config* cfg, const char* key, const char* value);
/* Copies the value into buf (NUL-terminated); *needed receives the full length + 1. */
RP_API rp_status rp_config_get(const rp_config* cfg, const char* key, char* buf, size_t len, size_t* needed);
RP_API rp_status rp_config_validate(const rp_config* cfg);
/* Resolved snapshot text; free with rp_string_free. */
RP_API rp_status rp_config_dump(const rp_config* cfg, char** out);
RP_API void rp_string_free(char* s);

/* Commands. Output paths are written into the configured output directory. */
RP_API rp_status rp_cmd_train(const rp_config* cfg, double* train_accuracy);
RP_API rp_status rp_cmd_prune(const rp_config* cfg, const char* teacher_checkpoint, uint64_t* macs_before,
                              uint64_t* macs_after);
RP_API rp_status rp_cmd_finetune(const rp_config* cfg, const char* pruned_checkpoint,
                                 const char* teacher_checkpoint, double* final_accuracy);
RP_API rp_status rp_cmd_expand(const rp_config* cfg, char** out_dir);
RP_API rp_status rp_cmd_eval(const rp_config* cfg, const char* checkpoint, double* accuracy);
RP_API rp_status rp_cmd_report(const char* run_dir, char** text);

/* Networks. */
RP_API rp_status rp_net_load(const char* path, rp_net** out);
RP_API void rp_net_free(rp_net* net);
RP_API rp_status rp_net_cost(const rp_net* net, size_t height, size_t width, uint64_t* macs, uint64_t* params);
RP_API rp_status rp_net_class_count(const rp_net* net, size_t* out);

#ifdef __cplusplus
}
#endif

#endif /* RESPRUNE_H_ */
