#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "recnn/model.hpp"
#include "recnn/optim.hpp"
#include "recnn/tasks.hpp"

namespace recnn {

/// "A x B x C": n_a = A state units, g with one hidden layer of B units and
/// C outputs; f is a single tanh layer.
struct Architecture {
  std::string name;
  std::size_t state_dim = 23;
  std::vector<std::size_t> f_hidden;
  std::vector<std::size_t> g_hidden{160};
  Activation g_output = Activation::kTanh;

  bool operator==(const Architecture&) const = default;
};

/// Parses "AxBxC" (e.g. "23x160x1", "60x80x1", "23x20x1").
Architecture parse_architecture(const std::string& text);

ModelConfig make_model_config(const Architecture& arch, const DatasetSchema& schema);

enum class Algorithm { kBpts, kVets, kQnts };

std::string to_string(Algorithm algorithm);
Algorithm algorithm_from_string(const std::string& text);

struct AlgorithmRun {
  Algorithm kind = Algorithm::kVets;
  BptsConfig bpts;
  VetsConfig vets;
  QntsConfig qnts;
};

struct ExperimentSpec {
  TaskSpec task;
  Architecture architecture;
  std::vector<AlgorithmRun> algorithms;
  std::size_t simulations = 10;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;  // simulation s initializes its weights with seed + s
  std::size_t threads = 1;

  void check() const;
};

/// Curves indexed [algorithm][simulation][epoch]; epoch 0 is the initial loss.
using CurveTable = std::vector<std::vector<std::vector<double>>>;

struct CurveSet {
  std::vector<std::string> algorithms;
  CurveTable raw;
  CurveTable normalized;  // empty curve where a run was excluded
  std::vector<std::vector<double>> averaged;  // [algorithm][epoch] over included simulations
  std::vector<std::string> warnings;
};

/// Per simulation, jointly over algorithms: the smallest final-epoch value
/// maps to 0 and the largest value anywhere maps to 1 (all zeros when they
/// coincide). Curves holding non-finite values are excluded with a warning.
/// Normalized curves are then averaged over simulations.
CurveSet normalize_curves(const std::vector<std::string>& algorithms, const CurveTable& raw);

struct RunRecord {
  std::size_t algorithm = 0;
  std::size_t simulation = 0;
  std::optional<std::string> error;
  Trajectory trajectory;
  double wall_ms = 0.0;
};

struct ResourceRow {
  std::string algorithm;
  std::size_t param_count = 0;
  std::size_t pattern_count = 0;
  double mean_epoch_ms = 0.0;
  std::size_t aux_bytes = 0;
};

struct ExperimentReport {
  CurveSet curves;
  std::vector<RunRecord> runs;
  std::vector<ResourceRow> resources;
  std::size_t param_count = 0;
};

/// Trains every algorithm from the same initial weights for each simulation.
/// Failing runs are recorded and do not abort the others.
ExperimentReport run_experiment(const ExperimentSpec& spec);
ExperimentReport run_experiment(const ExperimentSpec& spec, const Dataset& dataset);

void write_summary_csv(const CurveSet& curves, std::ostream& out);
void write_resources_csv(const std::vector<ResourceRow>& rows, std::ostream& out);
void write_curves_svg(const CurveSet& curves, std::ostream& out);

struct ExpectedErrorResult {
  double empirical = 0.0;       // Monte Carlo <E(W + dW)> - E(W)
  double predicted = 0.0;       // 0.5 * s2 * sum h_i
  double standard_error = 0.0;  // of the Monte Carlo mean
  double relative_gap = 0.0;    // |empirical - predicted| / predicted (0 when both vanish)
};

/// Second-order expected-error check on E(W) = 0.5 * sum h_i w_i^2 at W = 0
/// with zero-mean Gaussian perturbations of variance s2 per coordinate.
ExpectedErrorResult expected_error_check(const std::vector<double>& hessian_diagonal, double noise_variance,
                       std::size_t samples, std::uint64_t seed = 0);

struct VanishingRow {
  std::size_t depth = 0;  // 1 at the supersource
  std::size_t nodes = 0;
  double mean_delta_norm = 0.0;         // mean ||delta^f|| of nodes at this depth
  double mean_contribution_norm = 0.0;  // mean ||sum_u J_w^f(u)^T delta^f(u)|| per pattern
  double mean_vets_step = 0.0;          // mean_i |eta mu_i / (sigma_i + phi)| over f weights
};

struct VanishingReport {
  std::vector<VanishingRow> rows;
};

VanishingReport vanishing_diagnostic(const RecursiveModel& model, std::span<const double> params,
                                     std::span<const Dpag> patterns, double learning_rate = 0.05,
                                     double phi = 0.0, double loss_scale = 1.0);

void write_vanishing_csv(const VanishingReport& report, std::ostream& out);

/// How well the uncorrelated-disturbance assumption holds: mean and max
/// absolute off-diagonal correlation between per-pattern gradient
/// coordinates, over at most `max_coordinates` coordinates with nonzero variance.
struct CorrelationReport {
  std::size_t coordinates = 0;
  double mean_abs_correlation = 0.0;
  double max_abs_correlation = 0.0;
};

CorrelationReport gradient_correlation(const Objective& objective, std::span<const double> params,
                                       std::size_t max_coordinates = 64);

struct ScalingSample {
  std::string architecture;
  std::size_t param_count = 0;
  std::size_t pattern_count = 0;
  std::size_t vets_aux_bytes = 0;
  std::size_t qnts_aux_bytes = 0;
  double vets_epoch_ms = 0.0;  // best of `repeats` single-epoch runs
};

/// Measures optimizer state size and one Vets epoch over chain patterns of
/// fixed depth for each architecture and pattern count.
std::vector<ScalingSample> measure_scaling(const std::vector<Architecture>& architectures,
                                           const std::vector<std::size_t>& pattern_counts,
                                           std::size_t chain_depth = 8, std::size_t repeats = 3,
                                           std::uint64_t seed = 0);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace recnn
