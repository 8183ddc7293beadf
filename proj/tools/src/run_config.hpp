#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "recnn/harness.hpp"

namespace recnn::cli {

struct GradcheckSettings {
  std::size_t patterns = 5;
  double tolerance = 1e-6;
  double step = 1e-5;
};

struct TheorySettings {
  std::vector<double> hessian{1.0, 1.0};
  double noise_variance = 0.01;
  std::size_t samples = 100000;
  std::size_t chain_depth = 10;
  std::size_t chains = 20;
  double learning_rate = 0.05;
  double phi = 0.0;
};

/// Everything a subcommand may need. Every field has a default, so an empty
/// JSON object is a valid config.
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0 = all hardware threads
  std::size_t epochs = 20;
  Architecture architecture = parse_architecture("23x20x1");
  TaskSpec task;
  bool task_seed_set = false;  // otherwise the task follows `seed`
  std::optional<std::filesystem::path> dataset;
  std::optional<std::filesystem::path> checkpoint;

  Algorithm train_algorithm = Algorithm::kVets;
  VetsConfig vets;
  BptsConfig bpts;
  QntsConfig qnts;

  std::vector<Algorithm> compare_algorithms{Algorithm::kVets, Algorithm::kBpts};
  std::size_t simulations = 10;

  GradcheckSettings gradcheck;
  TheorySettings theory;

  /// Task spec with the seed rule applied.
  TaskSpec effective_task() const;
  AlgorithmRun algorithm_run(Algorithm kind) const;
};

/// Parses a JSON config. Unknown keys and wrong types raise ConfigError.
/// Relative paths are taken against `base_dir` and must exist.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace recnn::cli
