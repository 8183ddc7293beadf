#include "recnn/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "recnn/errors.hpp"
#include "recnn/log.hpp"
#include "recnn/parallel.hpp"

namespace recnn {

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::vector<double> padded_curve(const Trajectory& t, std::size_t epochs) {
  auto curve = t.losses();
  curve.resize(epochs + 1, curve.back());
  return curve;
}

// Shortest distance from the supersource, plus one.
std::vector<std::size_t> node_depths(const ResolvedPattern& topo) {
  std::vector<std::size_t> depth(topo.children.size(), 0);
  std::vector<std::size_t> queue{topo.supersource};
  depth[topo.supersource] = 1;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const std::size_t v = queue[head];
    for (const auto& c : topo.children[v]) {
      if (c && depth[*c] == 0) {
        depth[*c] = depth[v] + 1;
        queue.push_back(*c);
      }
    }
  }
  return depth;
}

}  // namespace

Architecture parse_architecture(const std::string& text) {
  std::vector<std::size_t> parts;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, 'x')) {
    try {
      std::size_t used = 0;
      const unsigned long value = std::stoul(item, &used);
      if (used != item.size() || value == 0) throw std::invalid_argument(item);
      parts.push_back(value);
    } catch (const std::exception&) {
      throw ConfigError("architecture '" + text + "' must look like AxBxC with positive integers");
    }
  }
  if (parts.size() != 3) throw ConfigError("architecture '" + text + "' must look like AxBxC");
  Architecture arch;
  arch.name = text;
  arch.state_dim = parts[0];
  arch.g_hidden = {parts[1]};
  if (parts[2] != 1) throw ConfigError("architecture '" + text + "': only scalar outputs are supported");
  return arch;
}

ModelConfig make_model_config(const Architecture& arch, const DatasetSchema& schema) {
  if (schema.target_dim != 1) {
    throw ConfigError("architecture presets produce a single output unit; dataset has n_y = " +
                      std::to_string(schema.target_dim));
  }
  return make_model_config(schema, arch.state_dim, arch.f_hidden, arch.g_hidden, arch.g_output);
}

std::string to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kBpts: return "bpts";
    case Algorithm::kVets: return "vets";
    case Algorithm::kQnts: return "qnts";
  }
  return "unknown";
}

Algorithm algorithm_from_string(const std::string& text) {
  if (text == "bpts") return Algorithm::kBpts;
  if (text == "vets") return Algorithm::kVets;
  if (text == "qnts") return Algorithm::kQnts;
  throw ConfigError("unknown algorithm '" + text + "'");
}

void ExperimentSpec::check() const {
  if (algorithms.empty()) throw ConfigError("experiment: at least one algorithm is required");
  if (simulations == 0) throw ConfigError("experiment: at least one simulation is required");
  task.check();
}

CurveSet normalize_curves(const std::vector<std::string>& algorithms, const CurveTable& raw) {
  if (raw.size() != algorithms.size()) throw DimensionError("curve table does not match algorithm list");
  CurveSet out;
  out.algorithms = algorithms;
  out.raw = raw;
  const std::size_t n_alg = raw.size();
  const std::size_t sims = n_alg == 0 ? 0 : raw[0].size();
  std::size_t length = 0;
  for (const auto& per_alg : raw) {
    if (per_alg.size() != sims) throw DimensionError("every algorithm needs the same simulation count");
    for (const auto& c : per_alg) {
      if (c.empty()) continue;
      if (length != 0 && c.size() != length) throw DimensionError("curves must all have the same length");
      length = c.size();
    }
  }

  out.normalized.assign(n_alg, std::vector<std::vector<double>>(sims));
  for (std::size_t s = 0; s < sims; ++s) {
    std::vector<std::size_t> included;
    for (std::size_t a = 0; a < n_alg; ++a) {
      const auto& c = raw[a][s];
      if (c.empty()) {
        out.warnings.push_back(algorithms[a] + " simulation " + std::to_string(s) + ": no curve, excluded");
      } else if (!all_finite(c)) {
        out.warnings.push_back(algorithms[a] + " simulation " + std::to_string(s) +
                               ": non-finite values, excluded");
      } else {
        included.push_back(a);
      }
    }
    if (included.empty()) continue;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t a : included) {
      lo = std::min(lo, raw[a][s].back());
      hi = std::max(hi, *std::max_element(raw[a][s].begin(), raw[a][s].end()));
    }
    const double span = hi - lo;
    for (std::size_t a : included) {
      auto& dst = out.normalized[a][s];
      dst.resize(length);
      for (std::size_t e = 0; e < length; ++e) dst[e] = span > 0.0 ? (raw[a][s][e] - lo) / span : 0.0;
    }
  }

  out.averaged.assign(n_alg, {});
  for (std::size_t a = 0; a < n_alg; ++a) {
    std::vector<double> sum(length, 0.0);
    std::size_t used = 0;
    for (std::size_t s = 0; s < sims; ++s) {
      const auto& c = out.normalized[a][s];
      if (c.empty()) continue;
      ++used;
      for (std::size_t e = 0; e < length; ++e) sum[e] += c[e];
    }
    if (used == 0) {
      out.warnings.push_back(algorithms[a] + ": no usable simulation");
      continue;
    }
    for (double& v : sum) v /= static_cast<double>(used);
    out.averaged[a] = std::move(sum);
  }
  for (const auto& w : out.warnings) log(LogLevel::kWarn, w);
  return out;
}

ExperimentReport run_experiment(const ExperimentSpec& spec) {
  spec.check();
  return run_experiment(spec, generate(spec.task));
}

ExperimentReport run_experiment(const ExperimentSpec& spec, const Dataset& dataset) {
  spec.check();
  const RecursiveModel model(make_model_config(spec.architecture, dataset.schema));
  const std::size_t n_alg = spec.algorithms.size();
  const std::size_t jobs = n_alg * spec.simulations;

  ExperimentReport report;
  report.param_count = model.param_count();
  report.runs.resize(jobs);

  RecursiveObjective objective(model, dataset.patterns);
  parallel_for(jobs, spec.threads, [&](std::size_t job, std::size_t) {
    const std::size_t sim = job / n_alg;
    const std::size_t a = job % n_alg;
    RunRecord& run = report.runs[job];
    run.algorithm = a;
    run.simulation = sim;
    const ParamVector params0 = model.init_params(spec.seed + sim);
    const AlgorithmRun& alg = spec.algorithms[a];
    try {
      switch (alg.kind) {
        case Algorithm::kBpts: {
          BptsConfig c = alg.bpts;
          c.max_epochs = spec.epochs;
          c.seed += sim;
          c.threads = 1;
          run.trajectory = bpts_train(objective, params0, c);
          break;
        }
        case Algorithm::kVets: {
          VetsConfig c = alg.vets;
          c.max_epochs = spec.epochs;
          c.seed += sim;
          c.threads = 1;
          run.trajectory = vets_train(objective, params0, c);
          break;
        }
        case Algorithm::kQnts: {
          QntsConfig c = alg.qnts;
          c.max_epochs = spec.epochs;
          c.threads = 1;
          run.trajectory = qnts_train(objective, params0, c);
          break;
        }
      }
      for (const auto& e : run.trajectory.epochs) run.wall_ms += e.wall_ms;
    } catch (const std::exception& e) {
      run.error = e.what();
    }
  });

  std::vector<std::string> names;
  for (const auto& alg : spec.algorithms) names.push_back(to_string(alg.kind));
  CurveTable raw(n_alg, std::vector<std::vector<double>>(spec.simulations));
  std::vector<std::string> run_warnings;
  for (const auto& run : report.runs) {
    if (run.error) {
      run_warnings.push_back(names[run.algorithm] + " simulation " + std::to_string(run.simulation) +
                             " failed: " + *run.error);
      continue;
    }
    raw[run.algorithm][run.simulation] = padded_curve(run.trajectory, spec.epochs);
  }
  report.curves = normalize_curves(names, raw);
  report.curves.warnings.insert(report.curves.warnings.begin(), run_warnings.begin(), run_warnings.end());
  for (const auto& w : run_warnings) log(LogLevel::kWarn, w);

  for (std::size_t a = 0; a < n_alg; ++a) {
    ResourceRow row;
    row.algorithm = names[a];
    row.param_count = model.param_count();
    row.pattern_count = dataset.patterns.size();
    std::size_t epochs = 0;
    double ms = 0.0;
    for (const auto& run : report.runs) {
      if (run.algorithm != a || run.error) continue;
      for (const auto& e : run.trajectory.epochs) {
        ms += e.wall_ms;
        ++epochs;
        row.aux_bytes = std::max(row.aux_bytes, e.aux_bytes);
      }
    }
    row.mean_epoch_ms = epochs == 0 ? 0.0 : ms / static_cast<double>(epochs);
    report.resources.push_back(row);
  }
  return report;
}

void write_summary_csv(const CurveSet& curves, std::ostream& out) {
  const auto old_precision = out.precision(17);
  out << "algorithm,epoch,mean_normalized_error,std_normalized_error,simulations\n";
  for (std::size_t a = 0; a < curves.algorithms.size(); ++a) {
    const auto& avg = curves.averaged[a];
    for (std::size_t e = 0; e < avg.size(); ++e) {
      double sq = 0.0;
      std::size_t used = 0;
      for (const auto& c : curves.normalized[a]) {
        if (c.empty()) continue;
        sq += (c[e] - avg[e]) * (c[e] - avg[e]);
        ++used;
      }
      const double std_dev = used > 1 ? std::sqrt(sq / static_cast<double>(used - 1)) : 0.0;
      out << curves.algorithms[a] << ',' << e << ',' << avg[e] << ',' << std_dev << ',' << used << '\n';
    }
  }
  out.precision(old_precision);
}

void write_resources_csv(const std::vector<ResourceRow>& rows, std::ostream& out) {
  out << "algorithm,param_count,pattern_count,mean_epoch_ms,aux_bytes\n";
  for (const auto& r : rows) {
    out << r.algorithm << ',' << r.param_count << ',' << r.pattern_count << ',' << r.mean_epoch_ms << ','
        << r.aux_bytes << '\n';
  }
}

void write_curves_svg(const CurveSet& curves, std::ostream& out) {
  constexpr double kWidth = 640, kHeight = 400, kLeft = 60, kRight = 130, kTop = 20, kBottom = 50;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  std::size_t length = 0;
  for (const auto& c : curves.averaged) length = std::max(length, c.size());
  const double x_scale = length > 1 ? plot_w / static_cast<double>(length - 1) : 0.0;
  static const char* kColors[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"};

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w << "\" y2=\""
      << kTop + plot_h << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + plot_h
      << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double v = tick / 4.0;
    const double y = kTop + plot_h * (1.0 - v);
    out << "<text x=\"" << kLeft - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << v << "</text>\n";
  }
  if (length > 1) {
    for (std::size_t e = 0; e < length; e += std::max<std::size_t>(1, (length - 1) / 5)) {
      out << "<text x=\"" << kLeft + x_scale * static_cast<double>(e) << "\" y=\"" << kTop + plot_h + 18
          << "\" text-anchor=\"middle\">" << e << "</text>\n";
    }
  }
  out << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 10
      << "\" text-anchor=\"middle\">epoch</text>\n";
  out << "<text x=\"15\" y=\"" << kTop + plot_h / 2 << "\" transform=\"rotate(-90 15 " << kTop + plot_h / 2
      << ")\" text-anchor=\"middle\">normalized error</text>\n";

  for (std::size_t a = 0; a < curves.algorithms.size(); ++a) {
    const auto& c = curves.averaged[a];
    const char* color = kColors[a % std::size(kColors)];
    if (!c.empty()) {
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
      for (std::size_t e = 0; e < c.size(); ++e) {
        const double v = std::clamp(c[e], 0.0, 1.0);
        out << kLeft + x_scale * static_cast<double>(e) << ',' << kTop + plot_h * (1.0 - v) << ' ';
      }
      out << "\"/>\n";
    }
    const double ly = kTop + 20.0 * static_cast<double>(a + 1);
    out << "<line x1=\"" << kWidth - kRight + 15 << "\" y1=\"" << ly << "\" x2=\"" << kWidth - kRight + 40
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << kWidth - kRight + 45 << "\" y=\"" << ly + 4 << "\">" << curves.algorithms[a]
        << "</text>\n";
  }
  out << "</svg>\n";
}

ExpectedErrorResult expected_error_check(const std::vector<double>& h, double s2, std::size_t samples, std::uint64_t seed) {
  if (s2 < 0.0) throw ConfigError("noise variance must be non-negative");
  if (samples == 0) throw ConfigError("at least one sample is required");
  for (double hi : h) {
    if (hi < 0.0) throw ConfigError("Hessian diagonal entries must be non-negative");
  }
  ExpectedErrorResult r;
  const double h_sum = std::accumulate(h.begin(), h.end(), 0.0);
  r.predicted = 0.5 * s2 * h_sum;
  if (s2 == 0.0) return r;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, std::sqrt(s2));
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t n = 1; n <= samples; ++n) {
    double e = 0.0;
    for (double hi : h) {
      const double dw = noise(rng);
      e += hi * dw * dw;
    }
    e *= 0.5;  // E(0 + dW) - E(0)
    const double before = e - mean;
    mean += before / static_cast<double>(n);
    m2 += before * (e - mean);
  }
  r.empirical = mean;
  r.standard_error = samples > 1 ? std::sqrt(m2 / static_cast<double>(samples - 1) / static_cast<double>(samples))
                                 : 0.0;
  r.relative_gap = r.predicted > 0.0 ? std::abs(r.empirical - r.predicted) / r.predicted : 0.0;
  return r;
}

VanishingReport vanishing_diagnostic(const RecursiveModel& model, std::span<const double> params,
                                     std::span<const Dpag> patterns, double learning_rate, double phi,
                                     double loss_scale) {
  if (patterns.empty()) throw ConfigError("vanishing diagnostic needs at least one pattern");
  const std::size_t m_f = model.f_param_count();
  const auto f_params = model.f_slice(params);

  struct DepthStats {
    std::size_t nodes = 0;
    double delta_norm_sum = 0.0;
    std::size_t patterns = 0;
    double contribution_norm_sum = 0.0;
    std::optional<MomentAccumulator> moments;
  };
  std::map<std::size_t, DepthStats> stats;

  BptsWorkspace ws;
  std::vector<double> grad(model.param_count());
  std::map<std::size_t, std::vector<double>> contributions;
  for (const auto& pattern : patterns) {
    s_gradients(model, params, pattern, grad, ws, loss_scale);
    const auto depth = node_depths(ws.trace.topology);
    contributions.clear();
    for (std::size_t u = 0; u < pattern.nodes.size(); ++u) {
      auto& st = stats[depth[u]];
      ++st.nodes;
      st.delta_norm_sum += norm(ws.state_delta[u]);
      auto& contrib = contributions[depth[u]];
      contrib.resize(m_f, 0.0);
      model.f().backward(f_params, ws.trace.f[u], ws.state_delta[u], contrib, {});
    }
    for (const auto& [d, contrib] : contributions) {
      auto& st = stats[d];
      ++st.patterns;
      st.contribution_norm_sum += norm(contrib);
      if (!st.moments) st.moments.emplace(m_f);
      st.moments->update(contrib);
    }
  }

  VanishingReport report;
  for (const auto& [d, st] : stats) {
    VanishingRow row;
    row.depth = d;
    row.nodes = st.nodes;
    row.mean_delta_norm = st.delta_norm_sum / static_cast<double>(st.nodes);
    row.mean_contribution_norm = st.contribution_norm_sum / static_cast<double>(st.patterns);
    const auto mean = st.moments->mean();
    double step_sum = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < m_f; ++i) {
      const double denom = std::sqrt(st.moments->variance(i)) + phi;
      if (denom == 0.0) continue;  // coordinate never moved at this depth
      step_sum += std::abs(learning_rate * mean[i] / denom);
      ++used;
    }
    row.mean_vets_step = used == 0 ? 0.0 : step_sum / static_cast<double>(used);
    report.rows.push_back(row);
  }
  return report;
}

void write_vanishing_csv(const VanishingReport& report, std::ostream& out) {
  const auto old_precision = out.precision(17);
  out << "depth,nodes,mean_delta_norm,mean_contribution_norm,mean_vets_step\n";
  for (const auto& r : report.rows) {
    out << r.depth << ',' << r.nodes << ',' << r.mean_delta_norm << ',' << r.mean_contribution_norm << ','
        << r.mean_vets_step << '\n';
  }
  out.precision(old_precision);
}

CorrelationReport gradient_correlation(const Objective& objective, std::span<const double> params,
                                       std::size_t max_coordinates) {
  const std::size_t n = objective.pattern_count();
  const std::size_t dim = objective.dimension();
  if (n < 2) throw ConfigError("gradient correlation needs at least two patterns");

  MomentAccumulator moments(dim);
  std::vector<double> grad(dim);
  for (std::size_t p = 0; p < n; ++p) {
    objective.gradient(params, p, grad);
    moments.update(grad);
  }
  std::vector<std::size_t> coords;
  for (std::size_t i = 0; i < dim; ++i) {
    if (moments.variance(i) > 0.0) coords.push_back(i);
  }
  std::stable_sort(coords.begin(), coords.end(),
                   [&](std::size_t a, std::size_t b) { return moments.variance(a) > moments.variance(b); });
  if (coords.size() > max_coordinates) coords.resize(max_coordinates);

  CorrelationReport report;
  report.coordinates = coords.size();
  if (coords.size() < 2) return report;

  const std::size_t k = coords.size();
  std::vector<double> cross(k * k, 0.0);
  const auto mean = moments.mean();
  for (std::size_t p = 0; p < n; ++p) {
    objective.gradient(params, p, grad);
    for (std::size_t a = 0; a < k; ++a) {
      const double da = grad[coords[a]] - mean[coords[a]];
      for (std::size_t b = a + 1; b < k; ++b) cross[a * k + b] += da * (grad[coords[b]] - mean[coords[b]]);
    }
  }
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      const double cov = cross[a * k + b] / static_cast<double>(n);
      const double corr =
          std::abs(cov / std::sqrt(moments.variance(coords[a]) * moments.variance(coords[b])));
      sum += corr;
      report.max_abs_correlation = std::max(report.max_abs_correlation, corr);
      ++pairs;
    }
  }
  report.mean_abs_correlation = sum / static_cast<double>(pairs);
  return report;
}

std::vector<ScalingSample> measure_scaling(const std::vector<Architecture>& architectures,
                                           const std::vector<std::size_t>& pattern_counts,
                                           std::size_t chain_depth, std::size_t repeats, std::uint64_t seed) {
  if (pattern_counts.empty()) throw ConfigError("measure_scaling needs pattern counts");
  TaskSpec task;
  task.kind = TaskKind::kChainParity;
  task.count = std::max<std::size_t>(2, *std::max_element(pattern_counts.begin(), pattern_counts.end()));
  task.min_depth = chain_depth;
  task.max_depth = chain_depth;
  task.seed = seed;
  const Dataset dataset = generate(task);

  std::vector<ScalingSample> out;
  for (const auto& arch : architectures) {
    const RecursiveModel model(make_model_config(arch, dataset.schema));
    const std::size_t m = model.param_count();
    const ParamVector params0 = model.init_params(seed);

    VetsConfig vets;
    vets.max_epochs = 1;
    vets.seed = seed;
    const std::size_t vets_aux = VetsOptimizer(m, vets).aux_bytes();
    QntsConfig qnts;
    qnts.max_params = std::max(qnts.max_params, m);
    const std::size_t qnts_aux = QntsOptimizer(m, qnts).aux_bytes();

    for (std::size_t n : pattern_counts) {
      std::span<const Dpag> subset(dataset.patterns.data(), n);
      RecursiveObjective objective(model, subset);
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r) {
        const auto t = vets_train(objective, params0, vets);
        best = std::min(best, t.epochs.front().wall_ms);
      }
      out.push_back(ScalingSample{arch.name, m, n, vets_aux, qnts_aux, best});
    }
  }
  return out;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DimensionError("loglog_slope needs two or more points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace recnn
