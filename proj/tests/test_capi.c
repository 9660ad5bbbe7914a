/* SPDX-License-Identifier: Apache-2.0 */
/* Copyright 2026 The resprune Authors */

/* Exercises the C interface from plain C. */

#define _POSIX_C_SOURCE 200809L

#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "resprune/resprune.h"

static int failures = 0;

#define EXPECT(cond)                                              \
  do {                                                            \
    if (!(cond)) {                                                \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                 \
    }                                                             \
  } while (0)

int main(void) {
  rp_config* cfg = NULL;
  EXPECT(rp_config_new(&cfg) == RP_OK);
  EXPECT(rp_config_validate(cfg) == RP_OK);

  char buf[64];
  size_t needed = 0;
  EXPECT(rp_config_get(cfg, "batch_size", buf, sizeof buf, &needed) == RP_OK);
  EXPECT(strcmp(buf, "32") == 0);
  EXPECT(needed == 3);
  EXPECT(rp_config_get(cfg, "criterion", buf, sizeof buf, NULL) == RP_OK);
  EXPECT(strcmp(buf, "kl") == 0);

  EXPECT(rp_config_set(cfg, "no_such_key", "1") == RP_INVALID_ARGUMENT);
  EXPECT(strstr(rp_last_error(), "no_such_key") != NULL);
  EXPECT(rp_config_set(cfg, "eta", "abc") == RP_INVALID_ARGUMENT);
  EXPECT(rp_config_set(cfg, "step1_alpha", "1.5") == RP_OK);
  EXPECT(rp_config_validate(cfg) == RP_INVALID_ARGUMENT);
  EXPECT(strstr(rp_last_error(), "step1_alpha") != NULL);
  EXPECT(rp_config_set(cfg, "step1_alpha", "0.7") == RP_OK);
  EXPECT(rp_config_validate(cfg) == RP_OK);
  EXPECT(rp_last_error()[0] == '\0');

  char* text = NULL;
  EXPECT(rp_config_dump(cfg, &text) == RP_OK);
  EXPECT(text != NULL && strstr(text, "step2_temperature = 1") != NULL);
  rp_string_free(text);

  rp_net* net = NULL;
  EXPECT(rp_net_load("/nonexistent/teacher.ckpt", &net) == RP_IO_ERROR);
  EXPECT(net == NULL);
  EXPECT(rp_config_load("/nonexistent/run.cfg", &cfg) == RP_IO_ERROR);
  EXPECT(rp_net_cost(NULL, 32, 32, NULL, NULL) == RP_INVALID_ARGUMENT);

  char tmpl[] = "/tmp/rp_capi_XXXXXX";
  const char* dir = mkdtemp(tmpl);
  EXPECT(dir != NULL);
  if (dir) {
    text = NULL;
    EXPECT(rp_cmd_report(dir, &text) == RP_OK);
    EXPECT(text != NULL && strstr(text, "no data") != NULL);
    rp_string_free(text);
  }
  EXPECT(rp_cmd_report("/nonexistent/dir", NULL) == RP_IO_ERROR);
  EXPECT(strcmp(rp_status_name(RP_FORMAT_ERROR), "format error") == 0);

  rp_config_free(cfg);
  if (failures) {
    fprintf(stderr, "%d failure(s)\n", failures);
    return 1;
  }
  printf("capi: all checks passed\n");
  return 0;
}
