#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "pvrecon.h"

static int failures = 0;

#define EXPECT(cond)                                              \
  do {                                                            \
    if (!(cond)) {                                                \
      fprintf(stderr, "%s:%d: failed: %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                 \
    }                                                             \
  } while (0)

static void count_lines(const char* message, void* user) {
  (void)message;
  ++*(int*)user;
}

int main(int argc, char** argv) {
  const char* out_dir = argc > 1 ? argv[1] : "pvrecon_capi_out";
  pvr_config* cfg = NULL;
  char buf[64];
  size_t needed = 0;

  EXPECT(strcmp(pvr_version(), "1.0.0") == 0);
  EXPECT(strcmp(pvr_status_name(PVR_ERR_CONFIG), "config") == 0);
  EXPECT(pvr_config_default(NULL) == PVR_ERR_INVALID_ARGUMENT);

  EXPECT(pvr_config_parse("mu = 1.5\n", &cfg) == PVR_ERR_CONFIG);
  EXPECT(strstr(pvr_last_error(), "[0, 1]") != NULL);

  EXPECT(pvr_config_parse("grid.nx = 101\ngrid.nt = 101\nnet.hidden_layers = 2\nnet.hidden_width = 8\n"
                          "train.n_phy = 200\ntrain.iterations = 50\n",
                          &cfg) == PVR_OK);
  EXPECT(pvr_config_set(cfg, "output_dir", out_dir) == PVR_OK);
  EXPECT(pvr_config_set(cfg, "mu", "2") == PVR_ERR_CONFIG);
  EXPECT(pvr_config_get(cfg, "mu", buf, sizeof buf, &needed) == PVR_OK);
  EXPECT(strcmp(buf, "0.5") == 0 && needed == 4);
  EXPECT(pvr_config_get(cfg, "mu", buf, 2, &needed) == PVR_OK);
  EXPECT(strcmp(buf, "0") == 0);

  const char* text = NULL;
  EXPECT(pvr_config_serialize(cfg, &text) == PVR_OK);
  EXPECT(text && strstr(text, "grid.nx = 101") != NULL);

  int lines = 0;
  pvr_report* report = NULL;
  EXPECT(pvr_run(cfg, "bogus", NULL, NULL, &report) == PVR_ERR_CONFIG);
  EXPECT(pvr_run(cfg, "full", count_lines, &lines, &report) == PVR_OK);
  EXPECT(lines > 0);
  double l2 = -1.0;
  EXPECT(pvr_report_get_number(report, "l2.rms", &l2) == PVR_OK);
  EXPECT(l2 >= 0.0 && l2 < 1.0);
  EXPECT(pvr_report_get_number(report, "nope", &l2) == PVR_ERR_INVALID_ARGUMENT);
  EXPECT(strstr(pvr_report_manifest_json(report), "\"status\": \"ok\"") != NULL);
  pvr_report_free(report);

  char path[1024];
  snprintf(path, sizeof path, "%s/network.txt", out_dir);
  pvr_network* net = NULL;
  EXPECT(pvr_network_load(path, &net) == PVR_OK);
  double rho = -1.0, rho_t = 0.0, rho_x = 0.0, rho_xx = 0.0, rho2 = -2.0;
  EXPECT(pvr_network_eval(net, 0.5, 0.3, &rho) == PVR_OK);
  EXPECT(rho > 0.0 && rho < 1.0);
  EXPECT(pvr_network_derivatives(net, 0.5, 0.3, &rho2, &rho_t, &rho_x, &rho_xx) == PVR_OK);
  EXPECT(fabs(rho - rho2) < 1e-15);
  EXPECT(pvr_network_derivatives(net, 0.5, 0.3, NULL, NULL, &rho_x, NULL) == PVR_OK);
  pvr_network_free(net);
  EXPECT(pvr_network_load("/nonexistent/network.txt", &net) == PVR_ERR_IO);

  pvr_config_free(cfg);
  if (failures) fprintf(stderr, "%d check(s) failed\n", failures);
  else printf("all C API checks passed\n");
  return failures ? EXIT_FAILURE : EXIT_SUCCESS;
}
