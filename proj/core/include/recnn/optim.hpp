#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "recnn/bpts.hpp"
#include "recnn/model.hpp"

namespace recnn {

/// A finite sum of per-pattern losses. Trainers only see this interface, so
/// they run unchanged on recursive networks and on analytic test problems.
/// Implementations must allow concurrent const calls.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::size_t dimension() const = 0;
  virtual std::size_t pattern_count() const = 0;
  /// Overwrites `grad` with the gradient of pattern `index`; returns its loss.
  virtual double gradient(std::span<const double> params, std::size_t index,
                          std::span<double> grad) const = 0;
  virtual double loss(std::span<const double> params, std::size_t index) const = 0;
};

/// Per-pattern BPTS gradients of a recursive model, optionally scaled by a
/// positive constant (the loss becomes scale * E).
class RecursiveObjective final : public Objective {
 public:
  RecursiveObjective(const RecursiveModel& model, std::span<const Dpag> patterns,
                     double loss_scale = 1.0);

  std::size_t dimension() const override { return model_.param_count(); }
  std::size_t pattern_count() const override { return patterns_.size(); }
  double gradient(std::span<const double> params, std::size_t index,
                  std::span<double> grad) const override;
  double loss(std::span<const double> params, std::size_t index) const override;

 private:
  const RecursiveModel& model_;
  std::span<const Dpag> patterns_;
  std::vector<ResolvedPattern> topologies_;
  double scale_;
};

double mean_loss(const Objective& objective, std::span<const double> params,
                 std::size_t threads = 1);

/// Mean gradient over `indices` (all patterns when empty); returns mean loss.
double mean_gradient(const Objective& objective, std::span<const double> params,
                     std::span<const std::size_t> indices, std::span<double> out,
                     std::size_t threads = 1);

/// Streaming per-coordinate mean and population variance (Welford).
/// With `decay` set, an exponentially weighted mean/variance is kept instead
/// and the accumulator is meant to persist across windows.
class MomentAccumulator {
 public:
  explicit MomentAccumulator(std::size_t dim, std::optional<double> decay = std::nullopt);

  void reset();
  void update(std::span<const double> g);

  std::size_t count() const noexcept { return count_; }
  std::size_t dimension() const noexcept { return mean_.size(); }
  std::span<const double> mean() const noexcept { return mean_; }
  std::span<const double> m2() const noexcept { return m2_; }
  double variance(std::size_t i) const;
  std::vector<double> variance() const;
  std::size_t aux_bytes() const noexcept;

 private:
  std::vector<double> mean_;
  std::vector<double> m2_;  // sum of squared deviations; the variance itself when decayed
  std::size_t count_ = 0;
  std::optional<double> decay_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t windows = 0;  // parameter updates performed in this epoch
  double mean_loss = 0.0;   // over the whole training set, after the epoch
  double grad_norm = 0.0;   // norm of the last gradient used for an update
  double update_norm = 0.0;  // norm of the total parameter change over the epoch
  double wall_ms = 0.0;
  std::size_t aux_bytes = 0;
};

struct Trajectory {
  double initial_loss = 0.0;
  std::vector<EpochRecord> epochs;
  std::vector<ParamVector> params_history;  // parameters after each epoch
  ParamVector final_params;
  std::vector<std::string> events;

  /// initial_loss followed by each epoch's mean loss.
  std::vector<double> losses() const;
};

/// CSV columns: epoch,window,mean_loss,grad_norm,update_norm,wall_ms,aux_bytes.
/// Row 0 carries the initial loss; `window` is the number of updates in the epoch.
void write_trajectory_csv(const Trajectory& trajectory, std::ostream& out);

struct VetsConfig {
  double learning_rate = 0.05;  // eta
  double phi = 1e-4;
  std::size_t window = 0;  // k_max; 0 selects batch mode (k_max = |D|)
  std::size_t max_epochs = 20;
  std::optional<double> stop_loss;
  std::uint64_t seed = 0;
  std::optional<double> moment_decay;  // off: reset moments every window
  std::size_t threads = 1;

  void check() const;
  std::size_t window_size(std::size_t dataset_size) const;
};

struct WindowStats {
  double mean_loss = 0.0;
  double grad_norm = 0.0;
  double update_norm = 0.0;
};

/// One vario-eta update: w_i -= eta * mean_i / (sigma_i + phi), with the
/// moments taken over the per-pattern gradients of one window.
class VetsOptimizer {
 public:
  VetsOptimizer(std::size_t dim, VetsConfig config);

  WindowStats step(const Objective& objective, std::span<double> params,
                   std::span<const std::size_t> window);

  const MomentAccumulator& moments() const noexcept { return moments_; }
  /// Bytes of optimizer-owned state: moments plus gradient scratch.
  std::size_t aux_bytes() const noexcept;

 private:
  VetsConfig config_;
  MomentAccumulator moments_;
  std::vector<double> scratch_;
  std::vector<double> block_;  // per-pattern gradients when threads > 1
};

WindowStats vets_step(const Objective& objective, std::span<double> params,
                      std::span<const std::size_t> window, const VetsConfig& config);

Trajectory vets_train(const Objective& objective, std::span<const double> params0,
                      const VetsConfig& config);
Trajectory vets_train(const RecursiveModel& model, std::span<const double> params0,
                      std::span<const Dpag> dataset, const VetsConfig& config);

enum class BptsMode { kBatch, kOnline };

struct BptsConfig {
  double learning_rate = 0.05;
  BptsMode mode = BptsMode::kBatch;
  std::size_t max_epochs = 20;
  std::optional<double> stop_loss;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void check() const;
};

Trajectory bpts_train(const Objective& objective, std::span<const double> params0,
                      const BptsConfig& config);
Trajectory bpts_train(const RecursiveModel& model, std::span<const double> params0,
                      std::span<const Dpag> dataset, const BptsConfig& config);

struct QntsConfig {
  double initial_step = 1.0;  // eta_0, first trial step of every line search
  double armijo = 1e-4;
  double backtrack = 0.5;
  std::size_t max_backtracks = 40;
  std::size_t max_epochs = 20;
  double grad_tol = 0.0;  // converged once ||g|| <= grad_tol
  double curvature_eps = 1e-10;
  std::size_t max_params = 7000;  // refuse larger m (the m x m matrix)
  std::optional<double> stop_loss;
  std::size_t threads = 1;

  void check() const;
};

/// Full-memory BFGS on the batch gradient with an Armijo line search.
class QntsOptimizer {
 public:
  QntsOptimizer(std::size_t dim, QntsConfig config);

  std::span<const double> inverse_hessian() const noexcept { return inverse_hessian_; }
  std::size_t aux_bytes() const noexcept;

  Trajectory train(const Objective& objective, std::span<const double> params0);

 private:
  double line_search(const Objective& objective, std::span<const double> params,
                     double loss, double slope);
  void bfgs_update();
  void reset_inverse_hessian();

  QntsConfig config_;
  std::size_t dim_;
  std::vector<double> inverse_hessian_;  // row-major m x m
  std::vector<double> grad_, grad_new_, direction_, step_, grad_change_, trial_;
};

Trajectory qnts_train(const Objective& objective, std::span<const double> params0,
                      const QntsConfig& config);
Trajectory qnts_train(const RecursiveModel& model, std::span<const double> params0,
                      std::span<const Dpag> dataset, const QntsConfig& config);

}  // namespace recnn
