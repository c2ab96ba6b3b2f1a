/* C interface to the pvrecon toolkit. All functions return a pvr_status;
 * on failure pvr_last_error() describes the problem for the calling thread. */
#ifndef PVRECON_H
#define PVRECON_H

#include <stddef.h>
#include <stdint.h>

#if defined(PVRECON_BUILDING_LIBRARY)
#define PVR_API __attribute__((visibility("default")))
#else
#define PVR_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pvr_status {
  PVR_OK = 0,
  PVR_ERR_DOMAIN = 1,
  PVR_ERR_OUT_OF_DOMAIN = 2,
  PVR_ERR_CONFIG = 3,
  PVR_ERR_COLLISION = 4,
  PVR_ERR_STEP_SIZE = 5,
  PVR_ERR_UNSUPPORTED = 6,
  PVR_ERR_DIVERGENCE = 7,
  PVR_ERR_COVERAGE = 8,
  PVR_ERR_EMPTY_INPUT = 9,
  PVR_ERR_PARSE = 10,
  PVR_ERR_IO = 11,
  PVR_ERR_INVALID_ARGUMENT = 100,
  PVR_ERR_INTERNAL = 101
} pvr_status;

typedef struct pvr_config pvr_config;
typedef struct pvr_report pvr_report;
typedef struct pvr_network pvr_network;

typedef void (*pvr_log_fn)(const char* message, void* user);

PVR_API const char* pvr_version(void);
PVR_API const char* pvr_status_name(pvr_status status);
/* Message of the last failed call on this thread; "" if none. */
PVR_API const char* pvr_last_error(void);

/* Configuration documents: `key = value` lines, `#` comments. */
PVR_API pvr_status pvr_config_default(pvr_config** out);
PVR_API pvr_status pvr_config_parse(const char* text, pvr_config** out);
PVR_API pvr_status pvr_config_load(const char* path, pvr_config** out);
PVR_API pvr_status pvr_config_set(pvr_config* config, const char* key, const char* value);
/* Copies the value into buf (NUL-terminated); *needed receives the full length + 1. */
PVR_API pvr_status pvr_config_get(const pvr_config* config, const char* key, char* buf, size_t size, size_t* needed);
/* Returned string stays valid until the next call on the same handle or pvr_config_free. */
PVR_API pvr_status pvr_config_serialize(pvr_config* config, const char** text);
PVR_API void pvr_config_free(pvr_config* config);

/* Runs simulate | reconstruct | identify | evaluate | sweep-mu | full. log may be NULL. */
PVR_API pvr_status pvr_run(const pvr_config* config, const char* subcommand, pvr_log_fn log, void* user,
                           pvr_report** out);
PVR_API pvr_status pvr_report_get_number(const pvr_report* report, const char* key, double* value);
PVR_API const char* pvr_report_manifest_json(const pvr_report* report);
PVR_API void pvr_report_free(pvr_report* report);

/* Trained estimator networks as written by reconstruct. */
PVR_API pvr_status pvr_network_load(const char* path, pvr_network** out);
PVR_API pvr_status pvr_network_eval(const pvr_network* network, double t, double x, double* rho);
/* rho and its t, x and xx derivatives; any output pointer may be NULL. */
PVR_API pvr_status pvr_network_derivatives(const pvr_network* network, double t, double x, double* rho,
                                           double* rho_t, double* rho_x, double* rho_xx);
PVR_API void pvr_network_free(pvr_network* network);

#ifdef __cplusplus
}
#endif

#endif
