// psm: command line driver for the statistical multiscale pipeline.
// Exit codes: 0 success, 2 configuration or missing input, 3 numerical failure.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "psm/psm.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kNumericalError = 3;

struct Options {
  std::string config;
  std::optional<std::size_t> samples;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> out;
  std::string stage = "all";
  std::string tensor;
};

void add_common(CLI::App* app, Options& o) {
  app->add_option("--config", o.config, "JSON configuration file (defaults when omitted)")->check(CLI::ExistingFile);
  app->add_option("--samples", o.samples, "number of RVE samples M");
  app->add_option("--seed", o.seed, "base seed of the sample generator");
  app->add_option("--jobs", o.jobs, "worker threads for the per-sample stages");
  app->add_option("--out", o.out, "output directory");
}

psm::PipelineConfig resolve(const Options& o) {
  psm::PipelineConfig c = o.config.empty() ? psm::config_from_json(psm::Json::object()) : psm::load_config(o.config);
  if (o.samples) c.samples = *o.samples;
  if (o.seed) c.seed = *o.seed;
  if (o.jobs) c.jobs = *o.jobs;
  if (o.out) c.out = *o.out;
  c.validate();
  return c;
}

int run(const std::string& command, const Options& o) {
  const auto c = resolve(o);
  if (command == "fit" && !o.tensor.empty()) {
    psm::fit_tensor_file(c, o.tensor);
    return kOk;
  }
  const auto stage = psm::parse_stage(command == "pipeline" ? o.stage : command);
  psm::run_pipeline(c, stage);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Peridynamics-based statistical multiscale fracture pipeline"};
  app.require_subcommand(1);
  Options o;

  struct Command {
    const char* name;
    const char* help;
  };
  const Command commands[] = {
      {"generate-rve", "draw random RVE samples"},
      {"correct", "correct the bond micromoduli of each sample"},
      {"rve-fracture", "run the per-axis RVE fracture tests"},
      {"homogenize", "solve the cell problems of each sample"},
      {"fit", "aggregate samples and fit the equivalent micromodulus"},
      {"macro-sim", "run the homogenized macroscale plate"},
      {"pipeline", "run all stages, skipping samples that are up to date"},
  };
  for (const auto& cmd : commands) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    add_common(sub, o);
    if (std::string(cmd.name) == "pipeline") {
      sub->add_option("--stage", o.stage, "run a single stage")
          ->check(CLI::IsMember({"all", "generate-rve", "correct", "rve-fracture", "homogenize", "fit", "macro-sim"}));
    }
    if (std::string(cmd.name) == "fit") {
      sub->add_option("--tensor", o.tensor, "fit a hand-written effective tensor file instead")->check(CLI::ExistingFile);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    return run(app.get_subcommands().front()->get_name(), o);
  } catch (const psm::Error& e) {
    std::cerr << "psm: " << e.what() << '\n';
    return e.kind() == psm::ErrorKind::Numerical ? kNumericalError : kConfigError;
  } catch (const psm::Json::exception& e) {
    std::cerr << "psm: malformed input: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "psm: " << e.what() << '\n';
    return kNumericalError;
  }
}
