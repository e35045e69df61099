#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include <qclab/lebesgue.hpp>

namespace qclab {

//
// Declarative experiments: one JSON file names the model, gauges, solver,
// windows, functionals and test operators; each pipeline stage writes JSON and
// CSV artifacts into an output directory.
//

/// Config validation failure; the message starts with the offending field path.
class ConfigError : public InvalidInput {
public:
  using InvalidInput::InvalidInput;
};

struct GaugeCheckSpec {
  int trials = 100;
  int min_dim = 2;
  int max_dim = 12;
};

struct NamedFunctional {
  std::string id;
  FunctionalSpec spec;
};

struct OutputSpec {
  std::string dir = "out";
  bool json = true;
  bool csv = true;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  OperatorModelSpec model;
  int dimension = 0;
  std::vector<GaugeSpec> gauges;
  SolverParams solver;
  std::vector<int> floors;
  std::vector<int> caps;
  std::vector<std::pair<int, int>> windows;
  ScheduleMode schedule_mode = ScheduleMode::Ramp;
  GaugeCheckSpec gauge_check;
  std::vector<NamedFunctional> functionals;
  TestSetSpec test_set;
  int depth = -1;
  OutputSpec outputs;
  std::vector<std::string> pipeline; ///< stages run by `run`
};

inline const std::vector<std::string> kStages = {"gauge-check", "k-estimate", "schedule", "decompose"};

/// Parse a config document. Random blocks in functionals are drawn from `seed`,
/// so the override must be applied here rather than after parsing.
ExperimentConfig parse_config(const nlohmann::json& doc, std::optional<std::uint64_t> seed_override = std::nullopt);
ExperimentConfig load_config(const std::filesystem::path& path,
                             std::optional<std::uint64_t> seed_override = std::nullopt);

GaugeSpec parse_gauge(const nlohmann::json& j, const std::string& path);

struct StageResult {
  std::string stage;
  int checks = 0;
  int failures = 0;
  std::vector<std::string> messages;
  std::vector<std::string> artifacts;
};

struct RunSummary {
  std::vector<StageResult> stages;
  std::string payload_hash; ///< FNV-1a over artifact bytes in file-name order

  int checks() const;
  int failures() const;
  bool ok() const { return failures() == 0; }
};

/// Runs the stages in the given order and writes artifacts plus summary.json.
/// `jobs` bounds the worker threads used for independent per-gauge and
/// per-functional work; outputs do not depend on it.
RunSummary run_experiment(const ExperimentConfig& config, const std::vector<std::string>& stages,
                          const std::filesystem::path& out, int jobs = 1);

/// Plot-ready whitespace-separated data files under <bundle>/plots; returns the files written.
std::vector<std::filesystem::path> render_report(const std::filesystem::path& bundle, std::ostream& notices);

/// "%.17g"
std::string format_double(double v);

} // namespace qclab
