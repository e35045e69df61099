// qclab: run experiment stages from a JSON config.
//
// exit codes: 0 all checks pass, 1 some check failed, 2 invalid input

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <qclab/experiment.hpp>

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

void add_common(CLI::App* cmd, Options& opt)
{
  cmd->add_option("--config", opt.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", opt.out, "output directory; defaults to outputs.dir of the config");
  cmd->add_option("--seed", opt.seed, "override the config seed");
  cmd->add_option("--jobs", opt.jobs, "worker threads")->check(CLI::PositiveNumber);
}

int run_stages(const Options& opt, const std::vector<std::string>& stages)
{
  const auto config = qclab::load_config(opt.config, opt.seed);
  const std::string out = opt.out.empty() ? config.outputs.dir : opt.out;
  const auto summary = qclab::run_experiment(config, stages.empty() ? config.pipeline : stages, out, opt.jobs);
  for (const auto& s : summary.stages) {
    std::cout << s.stage << ": " << (s.checks - s.failures) << "/" << s.checks << " checks passed\n";
    for (const auto& m : s.messages) {
      std::cout << "  " << m << "\n";
    }
  }
  std::cout << "payload " << summary.payload_hash << " -> " << out << "\n";
  return summary.ok() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"quasicentral approximate units and functional decomposition experiments"};
  app.require_subcommand(1);

  Options opt;
  std::vector<std::string> stages;
  std::vector<std::pair<CLI::App*, std::string>> stage_commands;
  for (const auto& stage : qclab::kStages) {
    auto* cmd = app.add_subcommand(stage, "run the " + stage + " stage");
    add_common(cmd, opt);
    stage_commands.emplace_back(cmd, stage);
  }
  auto* run = app.add_subcommand("run", "run the pipeline listed in the config");
  add_common(run, opt);

  std::string bundle;
  auto* report = app.add_subcommand("report", "write plot data files from an output bundle");
  report->add_option("bundle", bundle, "output directory of an earlier run");
  report->add_option("--out", bundle, "same as the positional bundle");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (report->parsed()) {
      if (bundle.empty()) {
        std::cerr << "report: a bundle directory is required\n";
        return 2;
      }
      const auto files = qclab::render_report(bundle, std::cerr);
      for (const auto& f : files) {
        std::cout << f.string() << "\n";
      }
      return 0;
    }
    for (const auto& [cmd, stage] : stage_commands) {
      if (cmd->parsed()) {
        stages = {stage};
      }
    }
    return run_stages(opt, stages);
  } catch (const qclab::InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
