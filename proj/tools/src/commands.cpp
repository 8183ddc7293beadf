#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "recnn/recnn.hpp"

namespace recnn::cli {

namespace {

using nlohmann::json;

std::ostream& out(const Context& ctx) { return ctx.stdout_stream ? *ctx.stdout_stream : std::cout; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::filesystem::path prepare(const Context& ctx) {
  std::error_code ec;
  std::filesystem::create_directories(ctx.out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + ctx.out_dir.string() + "': " + ec.message());
  return ctx.out_dir;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  return f;
}

void write_json(const std::filesystem::path& path, const json& doc) {
  auto f = open_out(path);
  f << doc.dump(1) << '\n';
}

Dataset input_dataset(const RunConfig& cfg) {
  if (cfg.dataset) return load_dataset(*cfg.dataset);
  return generate(cfg.effective_task());
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

// Fraction of supervised output entries whose sign matches a nonzero target.
double sign_accuracy(const RecursiveModel& model, std::span<const double> params, const Dataset& data) {
  std::size_t hits = 0;
  std::size_t total = 0;
  for (const auto& p : data.patterns) {
    std::unordered_map<NodeId, const std::optional<std::vector<double>>*> targets;
    for (const auto& n : p.nodes) targets[n.id] = &n.target;
    for (const auto& o : model.predict(params, p)) {
      const auto& target = *targets.at(o.node);
      if (!target) continue;
      for (std::size_t k = 0; k < target->size(); ++k) {
        if ((*target)[k] == 0.0) continue;
        ++total;
        if ((o.output[k] > 0.0) == ((*target)[k] > 0.0)) ++hits;
      }
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

ErrorInfo classify(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return {kConfig, "config"};
  if (dynamic_cast<const IoError*>(&e)) return {kIo, "io"};
  if (dynamic_cast<const DegenerateVarianceError*>(&e) || dynamic_cast<const MemoryCapError*>(&e)) {
    return {kTraining, "training"};
  }
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const SchemaError*>(&e) ||
      dynamic_cast<const CycleError*>(&e) || dynamic_cast<const DimensionError*>(&e)) {
    return {kData, "data"};
  }
  return {kInternal, "internal"};
}

std::string error_json(int code, const std::string& kind, const std::string& message) {
  return json{{"error", {{"code", code}, {"kind", kind}, {"message", message}}}}.dump();
}

int cmd_gen(const Context& ctx) {
  const TaskSpec spec = ctx.config.effective_task();
  const Dataset data = generate(spec);
  const auto path = prepare(ctx) / "dataset.json";
  save_dataset(data, path);
  out(ctx) << "wrote " << data.patterns.size() << " " << to_string(spec.kind) << " patterns to " << path.string()
           << '\n';
  return kOk;
}

int cmd_train(const Context& ctx) {
  const RunConfig& cfg = ctx.config;
  const Dataset data = input_dataset(cfg);
  auto [train, test] = split_by_parity(data);
  const RecursiveModel model(make_model_config(cfg.architecture, data.schema));
  const ParamVector params0 = model.init_params(cfg.seed);
  const AlgorithmRun run = cfg.algorithm_run(cfg.train_algorithm);

  Trajectory trajectory;
  switch (run.kind) {
    case Algorithm::kVets: trajectory = vets_train(model, params0, train.patterns, run.vets); break;
    case Algorithm::kBpts: trajectory = bpts_train(model, params0, train.patterns, run.bpts); break;
    case Algorithm::kQnts: {
      RecursiveObjective objective(model, train.patterns);
      trajectory = QntsOptimizer(model.param_count(), run.qnts).train(objective, params0);
      break;
    }
  }
  for (const auto& e : trajectory.events) log(LogLevel::kInfo, e);

  const auto dir = prepare(ctx);
  save_checkpoint(Checkpoint{model.config(), trajectory.final_params}, dir / "checkpoint.json");
  {
    auto f = open_out(dir / "trajectory.csv");
    write_trajectory_csv(trajectory, f);
  }
  save_dataset(train, dir / "train.json");
  save_dataset(test, dir / "test.json");

  const double final_loss = trajectory.losses().back();
  out(ctx) << "trained " << to_string(run.kind) << " m=" << model.param_count()
           << " patterns=" << train.patterns.size() << " epochs=" << trajectory.epochs.size()
           << " final_loss=" << fmt("%.17g", final_loss) << '\n';
  return kOk;
}

int cmd_eval(const Context& ctx) {
  const RunConfig& cfg = ctx.config;
  if (!cfg.checkpoint) throw ConfigError("eval needs a checkpoint (--checkpoint or \"checkpoint\")");
  const Checkpoint cp = load_checkpoint(*cfg.checkpoint);
  const Dataset data = input_dataset(cfg);
  const RecursiveModel model(cp.config);
  if (!(cp.config.schema == data.schema)) throw SchemaError("dataset schema does not match the checkpoint");

  const RecursiveObjective objective(model, data.patterns);
  const double loss = mean_loss(objective, cp.params, cfg.threads);
  const double accuracy = sign_accuracy(model, cp.params, data);

  const json report{{"patterns", data.patterns.size()}, {"mean_loss", loss}, {"sign_accuracy", accuracy}};
  write_json(prepare(ctx) / "eval.json", report);
  out(ctx) << report.dump() << '\n';
  return kOk;
}

int cmd_gradcheck(const Context& ctx) {
  const RunConfig& cfg = ctx.config;
  const GradcheckSettings& gc = cfg.gradcheck;
  if (gc.patterns == 0) throw ConfigError("gradcheck.patterns must be at least 1");
  if (!(gc.step > 0.0)) throw ConfigError("gradcheck.step must be positive");
  Dataset data = input_dataset(cfg);
  if (data.patterns.size() > gc.patterns) data.patterns.resize(gc.patterns);

  const RecursiveModel model(make_model_config(cfg.architecture, data.schema));
  ParamVector params = model.init_params(cfg.seed);
  const std::size_t m = model.param_count();

  double worst = 0.0;
  std::vector<double> analytic(m);
  BptsWorkspace ws;
  for (const auto& p : data.patterns) {
    s_gradients(model, params, p, analytic, ws);
    for (std::size_t i = 0; i < m; ++i) {
      const double saved = params[i];
      params[i] = saved + gc.step;
      const double up = model.loss(params, p);
      params[i] = saved - gc.step;
      const double down = model.loss(params, p);
      params[i] = saved;
      worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * gc.step)));
    }
  }

  const bool pass = worst <= gc.tolerance;
  write_json(prepare(ctx) / "gradcheck.json", json{{"pass", pass},
                                                   {"max_rel_err", worst},
                                                   {"tolerance", gc.tolerance},
                                                   {"patterns", data.patterns.size()},
                                                   {"params", m}});
  out(ctx) << (pass ? "PASS" : "FAIL") << " max_rel_err=" << fmt("%.3e", worst) << '\n';
  return pass ? kOk : kCheckFailed;
}

int cmd_compare(const Context& ctx) {
  const RunConfig& cfg = ctx.config;
  ExperimentSpec spec;
  spec.task = cfg.effective_task();
  spec.architecture = cfg.architecture;
  for (Algorithm a : cfg.compare_algorithms) spec.algorithms.push_back(cfg.algorithm_run(a));
  spec.simulations = cfg.simulations;
  spec.epochs = cfg.epochs;
  spec.seed = cfg.seed;
  spec.threads = cfg.threads;

  const Dataset data = input_dataset(cfg);
  const ExperimentReport report = run_experiment(spec, data);

  const auto dir = prepare(ctx);
  std::filesystem::create_directories(dir / "runs");
  for (const auto& run : report.runs) {
    const std::string stem = report.curves.algorithms[run.algorithm] + "_sim" + std::to_string(run.simulation);
    if (run.error) {
      auto f = open_out(dir / "runs" / (stem + ".error.txt"));
      f << *run.error << '\n';
      log(LogLevel::kWarn, stem + " failed: " + *run.error);
      continue;
    }
    auto f = open_out(dir / "runs" / (stem + ".csv"));
    write_trajectory_csv(run.trajectory, f);
  }
  {
    auto f = open_out(dir / "summary.csv");
    write_summary_csv(report.curves, f);
  }
  {
    auto f = open_out(dir / "resources.csv");
    write_resources_csv(report.resources, f);
  }
  {
    auto f = open_out(dir / "curves.svg");
    write_curves_svg(report.curves, f);
  }
  for (const auto& w : report.curves.warnings) log(LogLevel::kWarn, w);

  for (std::size_t a = 0; a < report.curves.algorithms.size(); ++a) {
    const auto& curve = report.curves.averaged[a];
    out(ctx) << report.curves.algorithms[a] << " final_normalized_error="
             << (curve.empty() ? std::string("nan") : fmt("%.4f", curve.back())) << '\n';
  }
  return kOk;
}

int cmd_validate_theory(const Context& ctx) {
  const RunConfig& cfg = ctx.config;
  const TheorySettings& t = cfg.theory;
  const auto dir = prepare(ctx);

  const ExpectedErrorResult ee = expected_error_check(t.hessian, t.noise_variance, t.samples, cfg.seed);
  const bool within = std::abs(ee.empirical - ee.predicted) <= 3.0 * ee.standard_error;
  write_json(dir / "expected_error.json", json{{"empirical", ee.empirical},
                                    {"predicted", ee.predicted},
                                    {"standard_error", ee.standard_error},
                                    {"relative_gap", ee.relative_gap},
                                    {"within_3se", within}});
  out(ctx) << "expected_error empirical=" << fmt("%.6g", ee.empirical) << " predicted=" << fmt("%.6g", ee.predicted)
           << " se=" << fmt("%.3g", ee.standard_error) << (within ? " within 3 se" : " outside 3 se") << '\n';

  TaskSpec chains;
  chains.kind = TaskKind::kChainParity;
  chains.count = t.chains;
  chains.min_depth = chains.max_depth = t.chain_depth;
  chains.seed = cfg.effective_task().seed;
  const Dataset data = generate(chains);
  const RecursiveModel model(make_model_config(cfg.architecture, data.schema));
  const ParamVector params = model.init_params(cfg.seed);
  const VanishingReport vr = vanishing_diagnostic(model, params, data.patterns, t.learning_rate, t.phi);
  {
    auto f = open_out(dir / "vanishing.csv");
    write_vanishing_csv(vr, f);
  }
  if (!vr.rows.empty()) {
    out(ctx) << "vanishing depth 1 delta=" << fmt("%.4g", vr.rows.front().mean_delta_norm) << " depth "
             << vr.rows.back().depth << " delta=" << fmt("%.4g", vr.rows.back().mean_delta_norm) << '\n';
  }
  return kOk;
}

}  // namespace recnn::cli
