#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "recnn/errors.hpp"
#include "recnn/harness.hpp"

using namespace recnn;
using namespace recnn::cli;

namespace {

// Flag values, applied over the config file after parsing.
struct Overrides {
  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::string> out_dir;
  std::optional<std::string> architecture;
  std::optional<std::size_t> epochs;
  std::optional<std::string> dataset;
  std::optional<std::string> checkpoint;

  std::optional<std::string> task;
  std::optional<std::size_t> count;
  std::optional<std::size_t> min_depth;
  std::optional<std::size_t> max_depth;
  std::optional<std::size_t> out_degree;
  std::optional<double> label_noise;

  std::optional<std::string> algorithm;
  std::optional<std::vector<std::string>> algorithms;
  std::optional<std::size_t> simulations;
  std::optional<double> learning_rate;
  std::optional<std::size_t> patterns;
  std::optional<std::size_t> samples;
};

Context build_context(const Overrides& o) {
  Context ctx;
  if (o.config_path) ctx.config = load_run_config(*o.config_path);
  RunConfig& c = ctx.config;
  if (o.seed) {
    c.seed = *o.seed;
    c.task.seed = *o.seed;
    c.task_seed_set = true;
  }
  if (o.threads) c.threads = *o.threads;
  if (o.out_dir) ctx.out_dir = *o.out_dir;
  if (o.architecture) c.architecture = parse_architecture(*o.architecture);
  if (o.epochs) c.epochs = *o.epochs;
  if (o.dataset) c.dataset = *o.dataset;
  if (o.checkpoint) c.checkpoint = *o.checkpoint;
  if (o.task) c.task.kind = task_kind_from_string(*o.task);
  if (o.count) c.task.count = *o.count;
  if (o.min_depth) c.task.min_depth = *o.min_depth;
  if (o.max_depth) c.task.max_depth = *o.max_depth;
  if (o.out_degree) c.task.out_degree = *o.out_degree;
  if (o.label_noise) c.task.label_noise = *o.label_noise;
  if (o.algorithm) c.train_algorithm = algorithm_from_string(*o.algorithm);
  if (o.algorithms) {
    c.compare_algorithms.clear();
    for (const auto& a : *o.algorithms) c.compare_algorithms.push_back(algorithm_from_string(a));
  }
  if (o.simulations) c.simulations = *o.simulations;
  if (o.learning_rate) {
    c.vets.learning_rate = c.bpts.learning_rate = *o.learning_rate;
    c.theory.learning_rate = *o.learning_rate;
  }
  if (o.patterns) c.gradcheck.patterns = *o.patterns;
  if (o.samples) c.theory.samples = *o.samples;
  return ctx;
}

void add_task_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--task", o.task, "boolean-formula | chain-parity | subtree-count");
  cmd->add_option("--count", o.count, "Number of patterns");
  cmd->add_option("--min-depth", o.min_depth, "Smallest depth (levels)");
  cmd->add_option("--max-depth", o.max_depth, "Largest depth (levels)");
  cmd->add_option("--out-degree", o.out_degree, "Children per node (0 = task default)");
  cmd->add_option("--label-noise", o.label_noise, "Gaussian label noise std");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recursive neural networks on structured data: generate, train, evaluate, compare."};
  app.require_subcommand(1);
  app.fallthrough();

  Overrides o;
  app.add_option("--config", o.config_path, "JSON run config")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Seed for data, initialization and shuffling");
  app.add_option("--threads", o.threads, "Worker threads (0 = all cores)");
  app.add_option("--out", o.out_dir, "Output directory (default recnn-out)");
  app.add_option("--arch", o.architecture, "Architecture AxBxC, e.g. 23x20x1");

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  add_task_flags(gen, o);

  auto* train = app.add_subcommand("train", "Train one model; writes checkpoint and trajectory");
  add_task_flags(train, o);
  train->add_option("--dataset", o.dataset, "Dataset file (default: generate from the task)")
      ->check(CLI::ExistingFile);
  train->add_option("--algorithm", o.algorithm, "vets | bpts | qnts");
  train->add_option("--epochs", o.epochs, "Training epochs");
  train->add_option("--learning-rate", o.learning_rate, "eta for vets and bpts");

  auto* eval = app.add_subcommand("eval", "Loss and sign accuracy of a checkpoint on a dataset");
  add_task_flags(eval, o);
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->check(CLI::ExistingFile);
  eval->add_option("--dataset", o.dataset, "Dataset file")->check(CLI::ExistingFile);

  auto* gradcheck = app.add_subcommand("gradcheck", "Compare BPTS gradients with finite differences");
  add_task_flags(gradcheck, o);
  gradcheck->add_option("--patterns", o.patterns, "Patterns to check");
  gradcheck->add_option("--dataset", o.dataset, "Dataset file")->check(CLI::ExistingFile);

  auto* compare = app.add_subcommand("compare", "Multi-seed comparison of training algorithms");
  add_task_flags(compare, o);
  compare->add_option("--dataset", o.dataset, "Dataset file")->check(CLI::ExistingFile);
  compare->add_option("--algorithms", o.algorithms, "Algorithms to compare")->delimiter(',');
  compare->add_option("--simulations", o.simulations, "Simulations (seeds)");
  compare->add_option("--epochs", o.epochs, "Epochs per run");
  compare->add_option("--learning-rate", o.learning_rate, "eta for vets and bpts");

  auto* theory = app.add_subcommand("validate-theory", "Expected-error check and vanishing-gradient report");
  theory->add_option("--samples", o.samples, "Monte Carlo samples");
  theory->add_option("--learning-rate", o.learning_rate, "eta for the vario-eta step column");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << error_json(kUsage, "usage", e.what()) << '\n';
    return kUsage;
  }

  try {
    const Context ctx = build_context(o);
    if (*gen) return cmd_gen(ctx);
    if (*train) return cmd_train(ctx);
    if (*eval) return cmd_eval(ctx);
    if (*gradcheck) return cmd_gradcheck(ctx);
    if (*compare) return cmd_compare(ctx);
    if (*theory) return cmd_validate_theory(ctx);
  } catch (const std::exception& e) {
    const ErrorInfo info = classify(e);
    std::cerr << error_json(info.code, info.kind, e.what()) << '\n';
    return info.code;
  }
  return kInternal;
}
