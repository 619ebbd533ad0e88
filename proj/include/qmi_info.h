/* qmi-info: data informativity toolkit, C interface.
 *
 * All functions return qi_status; QI_OK means success. Rich results travel as
 * JSON strings allocated by the library; release them with qi_string_free.
 * The most recent error message for the calling thread is available through
 * qi_last_error.
 */
#ifndef QMI_INFO_H
#define QMI_INFO_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum qi_status {
  QI_OK = 0,
  QI_NOT_CERTIFIED = 2,  /* solved cleanly; the data are not informative */
  QI_SOLVER_ERROR = 3,
  QI_CONFIG_ERROR = 4,
  QI_INVALID_ARGUMENT = 5,
  QI_INTERNAL_ERROR = 6
} qi_status;

/* Opaque measured-dataset handle (data matrices plus perturbation model). */
typedef struct qi_dataset qi_dataset;

uint32_t qi_version(void);

/* Message for the last failing call on this thread; empty string if none. */
const char* qi_last_error(void);

void qi_string_free(char* s);

/* Generate a dataset from a scenario config (system/model/T/seed JSON). */
qi_status qi_dataset_generate(const char* config_json, qi_dataset** out);
/* Load a serialized dataset document. */
qi_status qi_dataset_from_json(const char* json, qi_dataset** out);
/* Serialize; round-trips at full double precision. */
qi_status qi_dataset_to_json(const qi_dataset* ds, char** json);
void qi_dataset_free(qi_dataset* ds);

/* Run one synthesis on the dataset. task_json example:
 *   {"task": "h2", "gamma": 2.0}
 * Returns QI_OK when certified, QI_NOT_CERTIFIED or QI_SOLVER_ERROR otherwise;
 * *result_json carries the full result document in every solved case. */
qi_status qi_dataset_synth(const qi_dataset* ds, const char* task_json,
                           char** result_json);

/* Sampled closed-loop verification. config_json carries kind/n_samples/seed
 * and, unless a controller is given inline, the result document to check. */
qi_status qi_dataset_verify(const qi_dataset* ds, const char* config_json,
                            char** report_json);

/* Command runner backing the CLI: experiment-a..d, synth, verify. Artifacts
 * are written under out_dir (may be NULL); *summary_json receives the run
 * summary. The status doubles as the CLI exit code. */
qi_status qi_run_command(const char* command, const char* config_json,
                         const char* out_dir, char** summary_json);

#ifdef __cplusplus
}
#endif

#endif /* QMI_INFO_H */
