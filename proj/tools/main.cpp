// Command-line front end; talks to the library through the C API only.

#include "qmi_info.h"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

int run(const std::string& command, const std::string& config_path, long long seed,
        int repeat, const std::string& out_dir) {
  nlohmann::json config = nlohmann::json::object();
  if (!config_path.empty()) {
    std::ifstream is(config_path);
    if (!is) {
      std::fprintf(stderr, "error: cannot open config file %s\n", config_path.c_str());
      return QI_CONFIG_ERROR;
    }
    try {
      config = nlohmann::json::parse(is);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "error: config parse failed: %s\n", e.what());
      return QI_CONFIG_ERROR;
    }
  }
  if (seed >= 0) config["seed"] = static_cast<uint64_t>(seed);
  if (repeat > 0) config["repeat"] = repeat;

  char* summary = nullptr;
  const qi_status st = qi_run_command(command.c_str(), config.dump().c_str(),
                                      out_dir.empty() ? nullptr : out_dir.c_str(),
                                      &summary);
  if (summary) {
    std::fputs(summary, stdout);
    std::fputc('\n', stdout);
    qi_string_free(summary);
  }
  if (st != QI_OK && qi_last_error()[0] != '\0') {
    std::fprintf(stderr, "error: %s\n", qi_last_error());
  }
  return st;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qmi-info: data informativity analysis and controller synthesis"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  long long seed = -1;
  int repeat = 0;

  const std::vector<std::string> commands = {"experiment-a", "experiment-b", "experiment-c",
                                             "experiment-d", "synth", "verify"};
  const std::vector<std::string> descriptions = {
      "1-D stabilization picture: consistency ellipse vs stabilized band",
      "rank-deficient data, range-restricted controller",
      "H2 performance versus data length",
      "structured noise: co-design vs two-step feasibility rates",
      "run one synthesis task from a config file",
      "sampled closed-loop verification of a synthesis result"};
  std::string chosen;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    CLI::App* sub = app.add_subcommand(commands[i], descriptions[i]);
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out", out_dir, "artifact output directory");
    sub->add_option("--repeat", repeat, "override the config repeat count");
    sub->callback([&, i] { chosen = commands[i]; });
  }

  CLI11_PARSE(app, argc, argv);
  return run(chosen, config_path, seed, repeat, out_dir);
}
