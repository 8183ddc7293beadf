#include "recnn/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include <Eigen/Dense>

#include "recnn/errors.hpp"
#include "recnn/parallel.hpp"

namespace recnn {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

template <typename T>
std::size_t bytes_of(const std::vector<T>& v) {
  return v.capacity() * sizeof(T);
}

void check_start(const Objective& objective, std::span<const double> params0) {
  if (params0.size() != objective.dimension()) {
    throw DimensionError("initial parameters have " + std::to_string(params0.size()) +
                         " entries, objective expects " + std::to_string(objective.dimension()));
  }
  if (objective.pattern_count() == 0) throw ConfigError("training set is empty");
}

bool should_stop(const std::optional<double>& stop_loss, double loss) {
  return stop_loss && loss <= *stop_loss;
}

std::vector<std::size_t> identity_permutation(std::size_t n) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  return perm;
}

}  // namespace

// --- objectives -------------------------------------------------------------

RecursiveObjective::RecursiveObjective(const RecursiveModel& model, std::span<const Dpag> patterns,
                                       double loss_scale)
    : model_(model), patterns_(patterns), scale_(loss_scale) {
  if (!(loss_scale > 0.0)) throw ConfigError("loss scale must be positive");
  topologies_.reserve(patterns.size());
  for (const auto& p : patterns) topologies_.push_back(resolve(p));
}

double RecursiveObjective::gradient(std::span<const double> params, std::size_t index,
                                    std::span<double> grad) const {
  // reused across calls so steady-state epochs do not allocate
  thread_local BptsWorkspace ws;
  return s_gradients(model_, params, patterns_[index], topologies_[index], grad, ws, scale_);
}

double RecursiveObjective::loss(std::span<const double> params, std::size_t index) const {
  thread_local EncodingTrace trace;
  model_.forward(params, patterns_[index], topologies_[index], trace);
  return scale_ * loss_from_trace(patterns_[index], trace);
}

double mean_loss(const Objective& objective, std::span<const double> params, std::size_t threads) {
  const std::size_t n = objective.pattern_count();
  if (n == 0) throw ConfigError("mean_loss over an empty training set");
  std::vector<double> losses(n);
  parallel_for(n, threads, [&](std::size_t i, std::size_t) { losses[i] = objective.loss(params, i); });
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(n);
}

double mean_gradient(const Objective& objective, std::span<const double> params,
                     std::span<const std::size_t> indices, std::span<double> out,
                     std::size_t threads) {
  const std::size_t n = indices.empty() ? objective.pattern_count() : indices.size();
  if (n == 0) throw ConfigError("mean_gradient over an empty pattern set");
  const double loss_sum = ordered_sum(n, threads, out, [&](std::size_t i, std::span<double> g) {
    return objective.gradient(params, indices.empty() ? i : indices[i], g);
  });
  const double inv = 1.0 / static_cast<double>(n);
  for (double& g : out) g *= inv;
  return loss_sum / static_cast<double>(n);  // same rounding as mean_loss
}

// --- moments ----------------------------------------------------------------

MomentAccumulator::MomentAccumulator(std::size_t dim, std::optional<double> decay)
    : mean_(dim, 0.0), m2_(dim, 0.0), decay_(decay) {
  if (decay_ && !(*decay_ > 0.0 && *decay_ < 1.0)) {
    throw ConfigError("moment decay must lie in (0, 1)");
  }
}

void MomentAccumulator::reset() {
  std::fill(mean_.begin(), mean_.end(), 0.0);
  std::fill(m2_.begin(), m2_.end(), 0.0);
  count_ = 0;
}

void MomentAccumulator::update(std::span<const double> g) {
  if (g.size() != mean_.size()) throw DimensionError("moment update has the wrong dimension");
  ++count_;
  if (!decay_) {
    const double inv = 1.0 / static_cast<double>(count_);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double before = g[i] - mean_[i];
      mean_[i] += before * inv;
      m2_[i] += before * (g[i] - mean_[i]);
    }
    return;
  }
  // Exponentially weighted: the first sample initializes the mean.
  const double alpha = count_ == 1 ? 1.0 : 1.0 - *decay_;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double diff = g[i] - mean_[i];
    const double incr = alpha * diff;
    mean_[i] += incr;
    m2_[i] = (1.0 - alpha) * (m2_[i] + diff * incr);
  }
}

double MomentAccumulator::variance(std::size_t i) const {
  if (count_ == 0) return 0.0;
  return decay_ ? m2_.at(i) : m2_.at(i) / static_cast<double>(count_);
}

std::vector<double> MomentAccumulator::variance() const {
  std::vector<double> out(mean_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = variance(i);
  return out;
}

std::size_t MomentAccumulator::aux_bytes() const noexcept { return bytes_of(mean_) + bytes_of(m2_); }

// --- trajectories -----------------------------------------------------------

std::vector<double> Trajectory::losses() const {
  std::vector<double> out{initial_loss};
  for (const auto& e : epochs) out.push_back(e.mean_loss);
  return out;
}

void write_trajectory_csv(const Trajectory& t, std::ostream& out) {
  const auto old_precision = out.precision(17);
  out << "epoch,window,mean_loss,grad_norm,update_norm,wall_ms,aux_bytes\n";
  out << 0 << ',' << 0 << ',' << t.initial_loss << ",0,0,0,0\n";
  for (const auto& e : t.epochs) {
    out << e.epoch << ',' << e.windows << ',' << e.mean_loss << ',' << e.grad_norm << ','
        << e.update_norm << ',' << e.wall_ms << ',' << e.aux_bytes << '\n';
  }
  out.precision(old_precision);
}

// --- vario-eta --------------------------------------------------------------

void VetsConfig::check() const {
  if (!(learning_rate > 0.0)) throw ConfigError("vets: learning rate must be positive");
  if (!(phi >= 0.0)) throw ConfigError("vets: phi must be non-negative");
  if (phi == 0.0 && window == 1) {
    throw ConfigError("vets: phi = 0 requires a window of at least 2 patterns");
  }
}

std::size_t VetsConfig::window_size(std::size_t dataset_size) const {
  const std::size_t k = window == 0 ? dataset_size : std::min(window, dataset_size);
  if (phi == 0.0 && k < 2) {
    throw ConfigError("vets: phi = 0 requires a window of at least 2 patterns");
  }
  return k;
}

VetsOptimizer::VetsOptimizer(std::size_t dim, VetsConfig config)
    : config_(config), moments_(dim, config.moment_decay), scratch_(dim, 0.0) {
  config_.check();
  if (resolve_threads(config_.threads) > 1) block_.resize(resolve_threads(config_.threads) * 4 * dim);
}

std::size_t VetsOptimizer::aux_bytes() const noexcept {
  return moments_.aux_bytes() + bytes_of(scratch_) + bytes_of(block_);
}

WindowStats VetsOptimizer::step(const Objective& objective, std::span<double> params,
                                std::span<const std::size_t> window) {
  const std::size_t dim = moments_.dimension();
  if (params.size() != dim || objective.dimension() != dim) {
    throw DimensionError("vets: parameter dimension mismatch");
  }
  if (window.empty()) throw ConfigError("vets: empty window");
  if (!config_.moment_decay) moments_.reset();

  double loss_sum = 0.0;
  if (block_.empty()) {
    for (std::size_t idx : window) {
      loss_sum += objective.gradient(params, idx, scratch_);
      moments_.update(scratch_);
    }
  } else {
    // Gradients in parallel, moment updates in window order.
    const std::size_t block = block_.size() / dim;
    std::vector<double> losses(block);
    for (std::size_t start = 0; start < window.size(); start += block) {
      const std::size_t len = std::min(block, window.size() - start);
      parallel_for(len, config_.threads, [&](std::size_t j, std::size_t) {
        losses[j] = objective.gradient(params, window[start + j],
                                       std::span<double>(block_).subspan(j * dim, dim));
      });
      for (std::size_t j = 0; j < len; ++j) {
        loss_sum += losses[j];
        moments_.update(std::span<const double>(block_).subspan(j * dim, dim));
      }
    }
  }

  const auto mean = moments_.mean();
  for (std::size_t i = 0; i < dim; ++i) {
    const double denom = std::sqrt(moments_.variance(i)) + config_.phi;
    if (denom == 0.0) {
      throw DegenerateVarianceError(
          i, "vets: zero gradient variance with phi = 0 at coordinate " + std::to_string(i));
    }
    scratch_[i] = -config_.learning_rate * mean[i] / denom;
  }
  for (std::size_t i = 0; i < dim; ++i) params[i] += scratch_[i];

  WindowStats stats;
  stats.mean_loss = loss_sum / static_cast<double>(window.size());
  stats.grad_norm = norm(mean);
  stats.update_norm = norm(scratch_);
  return stats;
}

WindowStats vets_step(const Objective& objective, std::span<double> params,
                      std::span<const std::size_t> window, const VetsConfig& config) {
  VetsOptimizer optimizer(objective.dimension(), config);
  return optimizer.step(objective, params, window);
}

Trajectory vets_train(const Objective& objective, std::span<const double> params0,
                      const VetsConfig& config) {
  config.check();
  check_start(objective, params0);
  const std::size_t n = objective.pattern_count();
  const std::size_t k = config.window_size(n);

  Trajectory t;
  ParamVector params(params0.begin(), params0.end());
  t.initial_loss = mean_loss(objective, params, config.threads);
  VetsOptimizer optimizer(params.size(), config);
  std::mt19937_64 rng(config.seed);
  auto order = identity_permutation(n);

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    if (should_stop(config.stop_loss, t.epochs.empty() ? t.initial_loss : t.epochs.back().mean_loss)) {
      t.events.push_back("stop_loss reached before epoch " + std::to_string(epoch));
      break;
    }
    const auto start = Clock::now();
    const ParamVector before = params;
    std::shuffle(order.begin(), order.end(), rng);

    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t w = 0; w < n; w += k) {
      const std::size_t len = std::min(k, n - w);
      const auto stats = optimizer.step(objective, params, std::span(order).subspan(w, len));
      rec.grad_norm = stats.grad_norm;
      ++rec.windows;
    }
    rec.mean_loss = mean_loss(objective, params, config.threads);
    rec.update_norm = distance(params, before);
    rec.wall_ms = elapsed_ms(start);
    rec.aux_bytes = optimizer.aux_bytes();
    t.epochs.push_back(rec);
    t.params_history.push_back(params);
  }
  t.final_params = std::move(params);
  return t;
}

Trajectory vets_train(const RecursiveModel& model, std::span<const double> params0,
                      std::span<const Dpag> dataset, const VetsConfig& config) {
  RecursiveObjective objective(model, dataset);
  return vets_train(objective, params0, config);
}

// --- plain gradient descent -------------------------------------------------

void BptsConfig::check() const {
  if (!(learning_rate > 0.0)) throw ConfigError("bpts: learning rate must be positive");
}

Trajectory bpts_train(const Objective& objective, std::span<const double> params0,
                      const BptsConfig& config) {
  config.check();
  check_start(objective, params0);
  const std::size_t n = objective.pattern_count();

  Trajectory t;
  ParamVector params(params0.begin(), params0.end());
  t.initial_loss = mean_loss(objective, params, config.threads);
  std::vector<double> grad(params.size());
  std::mt19937_64 rng(config.seed);
  auto order = identity_permutation(n);

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    if (should_stop(config.stop_loss, t.epochs.empty() ? t.initial_loss : t.epochs.back().mean_loss)) {
      t.events.push_back("stop_loss reached before epoch " + std::to_string(epoch));
      break;
    }
    const auto start = Clock::now();
    const ParamVector before = params;
    EpochRecord rec;
    rec.epoch = epoch;

    if (config.mode == BptsMode::kBatch) {
      mean_gradient(objective, params, {}, grad, config.threads);
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= config.learning_rate * grad[i];
      rec.windows = 1;
    } else {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t idx : order) {
        objective.gradient(params, idx, grad);
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= config.learning_rate * grad[i];
        ++rec.windows;
      }
    }
    rec.grad_norm = norm(grad);
    rec.mean_loss = mean_loss(objective, params, config.threads);
    rec.update_norm = distance(params, before);
    rec.wall_ms = elapsed_ms(start);
    rec.aux_bytes = bytes_of(grad);
    t.epochs.push_back(rec);
    t.params_history.push_back(params);
  }
  t.final_params = std::move(params);
  return t;
}

Trajectory bpts_train(const RecursiveModel& model, std::span<const double> params0,
                      std::span<const Dpag> dataset, const BptsConfig& config) {
  RecursiveObjective objective(model, dataset);
  return bpts_train(objective, params0, config);
}

// --- quasi-Newton baseline --------------------------------------------------

void QntsConfig::check() const {
  if (!(initial_step > 0.0)) throw ConfigError("qnts: initial step must be positive");
  if (!(armijo > 0.0 && armijo < 1.0)) throw ConfigError("qnts: Armijo constant must lie in (0,1)");
  if (!(backtrack > 0.0 && backtrack < 1.0)) {
    throw ConfigError("qnts: backtracking factor must lie in (0,1)");
  }
}

QntsOptimizer::QntsOptimizer(std::size_t dim, QntsConfig config) : config_(config), dim_(dim) {
  config_.check();
  if (dim > config_.max_params) {
    throw MemoryCapError("qnts: " + std::to_string(dim) + " parameters exceed the cap of " +
                         std::to_string(config_.max_params) + " (inverse Hessian would need " +
                         std::to_string(dim * dim) + " entries)");
  }
  inverse_hessian_.resize(dim * dim);
  reset_inverse_hessian();
  for (auto* v : {&grad_, &grad_new_, &direction_, &step_, &grad_change_, &trial_}) v->resize(dim);
}

std::size_t QntsOptimizer::aux_bytes() const noexcept {
  return bytes_of(inverse_hessian_) + bytes_of(grad_) + bytes_of(grad_new_) + bytes_of(direction_) +
         bytes_of(step_) + bytes_of(grad_change_) + bytes_of(trial_);
}

void QntsOptimizer::reset_inverse_hessian() {
  std::fill(inverse_hessian_.begin(), inverse_hessian_.end(), 0.0);
  for (std::size_t i = 0; i < dim_; ++i) inverse_hessian_[i * dim_ + i] = 1.0;
}

// Armijo search. The first trial step is refined once by minimizing the
// quadratic through phi(0), phi'(0) and phi(trial); plain halving follows
// if neither point satisfies the sufficient-decrease condition.
double QntsOptimizer::line_search(const Objective& objective, std::span<const double> params,
                                  double loss, double slope) {
  auto evaluate = [&](double alpha) {
    for (std::size_t i = 0; i < dim_; ++i) trial_[i] = params[i] + alpha * direction_[i];
    return mean_loss(objective, trial_, config_.threads);
  };
  auto armijo_ok = [&](double alpha, double value) {
    return std::isfinite(value) && value <= loss + config_.armijo * alpha * slope;
  };

  const double alpha0 = config_.initial_step;
  const double value0 = evaluate(alpha0);
  double best_alpha = armijo_ok(alpha0, value0) ? alpha0 : 0.0;
  double best_value = value0;

  double next = alpha0 * config_.backtrack;
  const double curvature = 2.0 * (value0 - loss - slope * alpha0);
  if (std::isfinite(value0) && curvature > 0.0) {
    const double alpha_q = std::clamp(-slope * alpha0 * alpha0 / curvature, 0.1 * alpha0, 2.0 * alpha0);
    if (alpha_q != alpha0) {
      const double value_q = evaluate(alpha_q);
      if (armijo_ok(alpha_q, value_q) && (best_alpha == 0.0 || value_q < best_value)) {
        best_alpha = alpha_q;
        best_value = value_q;
      }
      next = std::min(next, alpha_q * config_.backtrack);
    }
  }
  if (best_alpha > 0.0) return best_alpha;

  double alpha = next;
  for (std::size_t b = 0; b < config_.max_backtracks; ++b, alpha *= config_.backtrack) {
    if (armijo_ok(alpha, evaluate(alpha))) return alpha;
  }
  return 0.0;
}

void QntsOptimizer::bfgs_update() {
  using Eigen::Map;
  using Eigen::VectorXd;
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto n = static_cast<Eigen::Index>(dim_);
  Map<RowMatrix> h(inverse_hessian_.data(), n, n);
  Map<const VectorXd> s(step_.data(), n);
  Map<const VectorXd> y(grad_change_.data(), n);

  const double sy = s.dot(y);
  const double rho = 1.0 / sy;
  // H' = (I - rho s y^T) H (I - rho y s^T) + rho s s^T, expanded for symmetric H.
  const VectorXd hy = h * y;
  const double yhy = y.dot(hy);
  h.noalias() -= rho * (hy * s.transpose() + s * hy.transpose());
  h.noalias() += (rho * rho * yhy + rho) * (s * s.transpose());
}

Trajectory QntsOptimizer::train(const Objective& objective, std::span<const double> params0) {
  check_start(objective, params0);
  if (objective.dimension() != dim_) throw DimensionError("qnts: parameter dimension mismatch");

  Trajectory t;
  ParamVector params(params0.begin(), params0.end());
  double loss = mean_gradient(objective, params, {}, grad_, config_.threads);
  t.initial_loss = loss;

  for (std::size_t epoch = 1; epoch <= config_.max_epochs; ++epoch) {
    if (norm(grad_) <= config_.grad_tol) {
      t.events.push_back("converged before epoch " + std::to_string(epoch));
      break;
    }
    if (should_stop(config_.stop_loss, loss)) {
      t.events.push_back("stop_loss reached before epoch " + std::to_string(epoch));
      break;
    }
    const auto start = Clock::now();

    for (std::size_t i = 0; i < dim_; ++i) {
      double d = 0.0;
      const double* row = inverse_hessian_.data() + i * dim_;
      for (std::size_t j = 0; j < dim_; ++j) d -= row[j] * grad_[j];
      direction_[i] = d;
    }
    double slope = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) slope += grad_[i] * direction_[i];
    if (!(slope < 0.0)) {
      t.events.push_back("epoch " + std::to_string(epoch) + ": not a descent direction, H reset");
      reset_inverse_hessian();
      slope = 0.0;
      for (std::size_t i = 0; i < dim_; ++i) {
        direction_[i] = -grad_[i];
        slope -= grad_[i] * grad_[i];
      }
    }

    const double alpha = line_search(objective, params, loss, slope);
    EpochRecord rec;
    rec.epoch = epoch;
    if (alpha == 0.0) {
      t.events.push_back("epoch " + std::to_string(epoch) + ": line search failed, zero step, H reset");
      reset_inverse_hessian();
      rec.mean_loss = loss;
      rec.grad_norm = norm(grad_);
    } else {
      for (std::size_t i = 0; i < dim_; ++i) {
        step_[i] = alpha * direction_[i];
        params[i] += step_[i];
      }
      loss = mean_gradient(objective, params, {}, grad_new_, config_.threads);
      double sy = 0.0;
      for (std::size_t i = 0; i < dim_; ++i) {
        grad_change_[i] = grad_new_[i] - grad_[i];
        sy += step_[i] * grad_change_[i];
      }
      if (sy > config_.curvature_eps) {
        bfgs_update();
      } else {
        t.events.push_back("epoch " + std::to_string(epoch) + ": curvature condition failed, update skipped");
      }
      std::swap(grad_, grad_new_);
      rec.windows = 1;
      rec.mean_loss = loss;
      rec.grad_norm = norm(grad_);
      rec.update_norm = norm(step_);
    }
    rec.wall_ms = elapsed_ms(start);
    rec.aux_bytes = aux_bytes();
    t.epochs.push_back(rec);
    t.params_history.push_back(params);
  }
  t.final_params = std::move(params);
  return t;
}

Trajectory qnts_train(const Objective& objective, std::span<const double> params0,
                      const QntsConfig& config) {
  QntsOptimizer optimizer(objective.dimension(), config);
  return optimizer.train(objective, params0);
}

Trajectory qnts_train(const RecursiveModel& model, std::span<const double> params0,
                      std::span<const Dpag> dataset, const QntsConfig& config) {
  RecursiveObjective objective(model, dataset);
  return qnts_train(objective, params0, config);
}

}  // namespace recnn
