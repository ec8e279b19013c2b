#include "argex.h"

#include <cstring>
#include <string>

#include "experiment.hpp"

namespace {

struct HandleState {
  std::unique_ptr<argex::ExperimentContext> context;
  std::string last_error;
};

argex_status status_of(const argex::Error& e) {
  using Kind = argex::Error::Kind;
  switch (e.kind()) {
    case Kind::invalid_argument: return ARGEX_ERR_INVALID_ARGUMENT;
    case Kind::config: return ARGEX_ERR_CONFIG;
    case Kind::io: return ARGEX_ERR_IO;
    case Kind::missing_prerequisite: return ARGEX_ERR_MISSING_PREREQUISITE;
    case Kind::stage: return ARGEX_ERR_STAGE_FAILED;
    case Kind::locked: return ARGEX_ERR_LOCKED;
    case Kind::internal: return ARGEX_ERR_INTERNAL;
  }
  return ARGEX_ERR_INTERNAL;
}

void copy_message(const std::string& message, char* buf, size_t cap) {
  if (!buf || cap == 0) return;
  const size_t n = std::min(message.size(), cap - 1);
  std::memcpy(buf, message.data(), n);
  buf[n] = '\0';
}

}  // namespace

extern "C" {

struct argex_experiment {
  HandleState state;
};

const char* argex_version(void) {
  static const std::string version = argex::argex_version_string();
  return version.c_str();
}

argex_status argex_experiment_open(const char* config_path, const char* out_dir_override,
                                   argex_experiment** out, char* err_buf, size_t err_cap) {
  if (out) *out = nullptr;
  if (!config_path || !out) {
    copy_message("config_path and out must be non-NULL", err_buf, err_cap);
    return ARGEX_ERR_INVALID_ARGUMENT;
  }
  try {
    std::optional<std::string> override_dir;
    if (out_dir_override && out_dir_override[0] != '\0') override_dir = out_dir_override;
    const argex::ExperimentConfig config =
        argex::load_experiment_config(config_path, override_dir);
    auto handle = new argex_experiment();
    handle->state.context = std::make_unique<argex::ExperimentContext>(config);
    *out = handle;
    return ARGEX_OK;
  } catch (const argex::Error& e) {
    copy_message(e.what(), err_buf, err_cap);
    return status_of(e);
  } catch (const std::exception& e) {
    copy_message(e.what(), err_buf, err_cap);
    return ARGEX_ERR_INTERNAL;
  }
}

void argex_experiment_close(argex_experiment* experiment) { delete experiment; }

const char* argex_experiment_error(const argex_experiment* experiment) {
  return experiment ? experiment->state.last_error.c_str() : "";
}

argex_status argex_experiment_run(argex_experiment* experiment, const char* stage,
                                  const char* options_json) {
  if (!experiment) return ARGEX_ERR_INVALID_ARGUMENT;
  if (!stage) {
    experiment->state.last_error = "stage must be non-NULL";
    return ARGEX_ERR_INVALID_ARGUMENT;
  }
  try {
    const argex::StageOptions options =
        argex::parse_stage_options(options_json ? options_json : "");
    experiment->state.context->run_stage(stage, options);
    experiment->state.last_error.clear();
    return ARGEX_OK;
  } catch (const argex::Error& e) {
    experiment->state.last_error = e.what();
    return status_of(e);
  } catch (const std::exception& e) {
    experiment->state.last_error = e.what();
    return ARGEX_ERR_INTERNAL;
  }
}

argex_status argex_make_fixture(const char* out_dir, const char* options_json, char* err_buf,
                                size_t err_cap) {
  if (!out_dir) {
    copy_message("out_dir must be non-NULL", err_buf, err_cap);
    return ARGEX_ERR_INVALID_ARGUMENT;
  }
  try {
    argex::make_fixture(out_dir, options_json ? options_json : "");
    return ARGEX_OK;
  } catch (const argex::Error& e) {
    copy_message(e.what(), err_buf, err_cap);
    return status_of(e);
  } catch (const std::exception& e) {
    copy_message(e.what(), err_buf, err_cap);
    return ARGEX_ERR_INTERNAL;
  }
}

}  // extern "C"
