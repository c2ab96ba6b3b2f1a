#include "pvrecon.h"

#include <algorithm>
#include <cstring>
#include <new>
#include <string>

#include "pvrecon/config.hpp"
#include "pvrecon/error.hpp"
#include "pvrecon/mlp.hpp"
#include "pvrecon/pipeline.hpp"

struct pvr_config {
  pvrecon::ScenarioConfig cfg;
  std::string text;
};

struct pvr_report {
  pvrecon::RunReport report;
};

struct pvr_network {
  pvrecon::LoadedNetwork net;
};

namespace {

thread_local std::string last_error;

pvr_status ok() {
  last_error.clear();
  return PVR_OK;
}

pvr_status invalid(const char* what) {
  last_error = what;
  return PVR_ERR_INVALID_ARGUMENT;
}

template <class F>
pvr_status guarded(F&& fn) {
  try {
    fn();
    return ok();
  } catch (const pvrecon::Error& e) {
    last_error = e.what();
    return static_cast<pvr_status>(static_cast<int>(e.code()));
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return PVR_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return PVR_ERR_INTERNAL;
  }
}

}  // namespace

extern "C" {

const char* pvr_version(void) { return "1.0.0"; }

const char* pvr_status_name(pvr_status status) {
  switch (status) {
    case PVR_OK: return "ok";
    case PVR_ERR_INVALID_ARGUMENT: return "invalid-argument";
    case PVR_ERR_INTERNAL: return "internal";
    default:
      if (status >= PVR_ERR_DOMAIN && status <= PVR_ERR_IO)
        return pvrecon::error_code_name(static_cast<pvrecon::ErrorCode>(static_cast<int>(status)));
      return "unknown";
  }
}

const char* pvr_last_error(void) { return last_error.c_str(); }

pvr_status pvr_config_default(pvr_config** out) {
  if (!out) return invalid("null output handle");
  return guarded([&] { *out = new pvr_config{}; });
}

pvr_status pvr_config_parse(const char* text, pvr_config** out) {
  if (!text || !out) return invalid("null argument");
  return guarded([&] { *out = new pvr_config{pvrecon::parse_config(text), {}}; });
}

pvr_status pvr_config_load(const char* path, pvr_config** out) {
  if (!path || !out) return invalid("null argument");
  return guarded([&] { *out = new pvr_config{pvrecon::load_config(path), {}}; });
}

pvr_status pvr_config_set(pvr_config* config, const char* key, const char* value) {
  if (!config || !key || !value) return invalid("null argument");
  return guarded([&] {
    pvrecon::ScenarioConfig next = config->cfg;
    next.set(key, value);
    config->cfg = next;
  });
}

pvr_status pvr_config_get(const pvr_config* config, const char* key, char* buf, size_t size, size_t* needed) {
  if (!config || !key) return invalid("null argument");
  return guarded([&] {
    const std::string v = config->cfg.get(key);
    if (needed) *needed = v.size() + 1;
    if (buf && size > 0) {
      const size_t n = std::min(size - 1, v.size());
      std::memcpy(buf, v.data(), n);
      buf[n] = '\0';
    }
  });
}

pvr_status pvr_config_serialize(pvr_config* config, const char** text) {
  if (!config || !text) return invalid("null argument");
  return guarded([&] {
    config->text = pvrecon::serialize_config(config->cfg);
    *text = config->text.c_str();
  });
}

void pvr_config_free(pvr_config* config) { delete config; }

pvr_status pvr_run(const pvr_config* config, const char* subcommand, pvr_log_fn log, void* user, pvr_report** out) {
  if (!config || !subcommand || !out) return invalid("null argument");
  *out = nullptr;
  return guarded([&] {
    pvrecon::LogSink sink;
    if (log) sink = [log, user](const std::string& msg) { log(msg.c_str(), user); };
    auto report = pvrecon::run_command(subcommand, config->cfg, sink);
    *out = new pvr_report{std::move(report)};
  });
}

pvr_status pvr_report_get_number(const pvr_report* report, const char* key, double* value) {
  if (!report || !key || !value) return invalid("null argument");
  const auto it = report->report.numbers.find(key);
  if (it == report->report.numbers.end()) {
    last_error = std::string("report has no number named '") + key + "'";
    return PVR_ERR_INVALID_ARGUMENT;
  }
  *value = it->second;
  return ok();
}

const char* pvr_report_manifest_json(const pvr_report* report) {
  return report ? report->report.manifest_json.c_str() : "";
}

void pvr_report_free(pvr_report* report) { delete report; }

pvr_status pvr_network_load(const char* path, pvr_network** out) {
  if (!path || !out) return invalid("null argument");
  return guarded([&] { *out = new pvr_network{pvrecon::load_network(path)}; });
}

pvr_status pvr_network_eval(const pvr_network* network, double t, double x, double* rho) {
  if (!network || !rho) return invalid("null argument");
  return guarded([&] { *rho = pvrecon::forward(network->net.params, network->net.spec, t, x); });
}

pvr_status pvr_network_derivatives(const pvr_network* network, double t, double x, double* rho, double* rho_t,
                                   double* rho_x, double* rho_xx) {
  if (!network) return invalid("null argument");
  return guarded([&] {
    const pvrecon::Jet j = pvrecon::derivatives(network->net.params, network->net.spec, t, x);
    if (rho) *rho = j.value;
    if (rho_t) *rho_t = j.d_a;
    if (rho_x) *rho_x = j.d_b;
    if (rho_xx) *rho_xx = j.d_bb;
  });
}

void pvr_network_free(pvr_network* network) { delete network; }

}  // extern "C"
