#include "qmi_info.h"

#include "experiments/experiments.hpp"
#include "support/json_io.hpp"

#include <cstring>
#include <string>

struct qi_dataset {
  qi::io::DatasetDoc doc;
};

namespace {

thread_local std::string t_last_error;

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

qi_status fail(qi_status code, const std::string& msg) {
  t_last_error = msg;
  return code;
}

template <typename Fn>
qi_status guarded(Fn&& fn) {
  try {
    t_last_error.clear();
    return fn();
  } catch (const nlohmann::json::exception& e) {
    return fail(QI_CONFIG_ERROR, e.what());
  } catch (const qi::experiments::ConfigError& e) {
    return fail(QI_CONFIG_ERROR, e.what());
  } catch (const qi::MatError& e) {
    return fail(QI_SOLVER_ERROR, e.what());
  } catch (const std::exception& e) {
    return fail(QI_INTERNAL_ERROR, e.what());
  }
}

}  // namespace

extern "C" {

uint32_t qi_version(void) { return 10000; }  /* 1.0.0 */

const char* qi_last_error(void) { return t_last_error.c_str(); }

void qi_string_free(char* s) { delete[] s; }

qi_status qi_dataset_generate(const char* config_json, qi_dataset** out) {
  if (!config_json || !out) return fail(QI_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    auto doc = qi::experiments::dataset_from_config(qi::io::Json::parse(config_json));
    *out = new qi_dataset{std::move(doc)};
    return QI_OK;
  });
}

qi_status qi_dataset_from_json(const char* json, qi_dataset** out) {
  if (!json || !out) return fail(QI_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    *out = new qi_dataset{qi::io::dataset_from_json(qi::io::Json::parse(json))};
    return QI_OK;
  });
}

qi_status qi_dataset_to_json(const qi_dataset* ds, char** json) {
  if (!ds || !json) return fail(QI_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    *json = dup_string(qi::io::dataset_to_json(ds->doc.sigma, ds->doc.seed).dump());
    return QI_OK;
  });
}

void qi_dataset_free(qi_dataset* ds) { delete ds; }

qi_status qi_dataset_synth(const qi_dataset* ds, const char* task_json,
                           char** result_json) {
  if (!ds || !task_json || !result_json) return fail(QI_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    qi::io::Json config = qi::io::Json::parse(task_json);
    config["dataset"] = qi::io::dataset_to_json(ds->doc.sigma, ds->doc.seed);
    const auto outcome = qi::experiments::run_synth(config);
    *result_json = dup_string(outcome.summary.dump());
    return static_cast<qi_status>(outcome.exit_code);
  });
}

qi_status qi_dataset_verify(const qi_dataset* ds, const char* config_json,
                            char** report_json) {
  if (!ds || !config_json || !report_json) {
    return fail(QI_INVALID_ARGUMENT, "null argument");
  }
  return guarded([&] {
    qi::io::Json config = qi::io::Json::parse(config_json);
    if (!config.contains("input")) config["input"] = qi::io::Json::object();
    config["input"]["dataset"] = qi::io::dataset_to_json(ds->doc.sigma, ds->doc.seed);
    const auto outcome = qi::experiments::run_verify(config);
    *report_json = dup_string(outcome.summary.dump());
    return static_cast<qi_status>(outcome.exit_code);
  });
}

qi_status qi_run_command(const char* command, const char* config_json,
                         const char* out_dir, char** summary_json) {
  if (!command) return fail(QI_INVALID_ARGUMENT, "null command");
  return guarded([&] {
    const auto outcome = qi::experiments::run_command(
        command, config_json ? config_json : "", out_dir ? out_dir : "");
    if (summary_json) *summary_json = dup_string(outcome.summary.dump(2));
    if (outcome.exit_code != 0 && outcome.summary.contains("error")) {
      t_last_error = outcome.summary.at("error").get<std::string>();
    }
    return static_cast<qi_status>(outcome.exit_code);
  });
}

}  // extern "C"
