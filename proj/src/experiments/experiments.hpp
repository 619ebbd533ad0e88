#pragma once

#include "support/json_io.hpp"

#include <functional>
#include <stdexcept>
#include <string>

namespace qi::experiments {

// Raised on malformed or inconsistent configuration documents.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Paper-matched presets.
datagen::LinearSystem pendulum();            // inverted pendulum, n = 3, m = 1
datagen::LinearSystem scalar_1d();           // (A, B) = (1.2, 0.6)
datagen::LinearSystem rank_deficient_3x2();  // the 3x3 / 3x2 pair of the
                                             // unbounded-set example

// Exit codes shared by the CLI and the C API.
inline constexpr int kExitOk = 0;
inline constexpr int kExitNotCertified = 2;
inline constexpr int kExitSolverError = 3;
inline constexpr int kExitConfigError = 4;

struct Outcome {
  int exit_code = kExitOk;
  io::Json summary;
};

// Build a system from config ("preset" or inline matrices).
datagen::LinearSystem system_from_config(const io::Json& j);
// Build a model descriptor for given dims from config.
datagen::PerturbationModel model_from_config(const io::Json& j, Index n, Index m, Index t);
// Build or load a dataset (and its model) from config.
io::DatasetDoc dataset_from_config(const io::Json& config);

// Scenario runners; artifacts are written under out_dir when non-empty.
Outcome run_experiment_a(const io::Json& config, const std::string& out_dir);
Outcome run_experiment_b(const io::Json& config, const std::string& out_dir);
Outcome run_experiment_c(const io::Json& config, const std::string& out_dir);
Outcome run_experiment_d(const io::Json& config, const std::string& out_dir);

// Generic one-shot synthesis / verification drivers.
Outcome run_synth(const io::Json& config);
Outcome run_verify(const io::Json& config);

// Entry point keyed by command name; config parse failures map to exit 4.
Outcome run_command(const std::string& command, const std::string& config_json,
                    const std::string& out_dir);

// Deterministic worker pool: results are produced in task order regardless of
// scheduling.
void parallel_for(int n_tasks, const std::function<void(int)>& fn);

}  // namespace qi::experiments
