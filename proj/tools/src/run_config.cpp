#include "run_config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "recnn/errors.hpp"

namespace recnn::cli {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config " + path + ": " + what);
}

void require_object(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
  if (!j.is_object()) fail(path, "expected an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) fail(path, "unknown key '" + item.key() + "'");
  }
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// Readers leave `out` alone when the key is absent.
void read(const json& j, const std::string& path, const char* key, double& out) {
  if (!j.contains(key)) return;
  if (!j[key].is_number()) fail(join(path, key), "expected a number");
  out = j[key].get<double>();
}

void read(const json& j, const std::string& path, const char* key, std::optional<double>& out) {
  if (!j.contains(key)) return;
  if (j[key].is_null()) {
    out.reset();
    return;
  }
  double v = 0.0;
  read(j, path, key, v);
  out = v;
}

template <typename Unsigned>
void read_unsigned(const json& j, const std::string& path, const char* key, Unsigned& out) {
  if (!j.contains(key)) return;
  if (!j[key].is_number_unsigned()) fail(join(path, key), "expected a non-negative integer");
  out = j[key].get<Unsigned>();
}

void read(const json& j, const std::string& path, const char* key, std::string& out) {
  if (!j.contains(key)) return;
  if (!j[key].is_string()) fail(join(path, key), "expected a string");
  out = j[key].get<std::string>();
}

std::filesystem::path existing_path(const json& j, const std::string& key, const std::filesystem::path& base) {
  std::string text;
  read(j, "", key.c_str(), text);
  std::filesystem::path p(text);
  if (p.is_relative() && !base.empty()) p = base / p;
  if (!std::filesystem::exists(p)) fail(key, "path '" + p.string() + "' does not exist");
  return p;
}

// Converts library ConfigErrors from the *_from_string helpers into located ones.
template <typename F>
auto located(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    fail(path, e.what());
  }
}

void parse_task(const json& j, RunConfig& cfg) {
  require_object(j, "task", {"kind", "count", "min_depth", "max_depth", "out_degree", "label_noise", "seed"});
  std::string kind = to_string(cfg.task.kind);
  read(j, "task", "kind", kind);
  cfg.task.kind = located("task.kind", [&] { return task_kind_from_string(kind); });
  read_unsigned(j, "task", "count", cfg.task.count);
  read_unsigned(j, "task", "min_depth", cfg.task.min_depth);
  read_unsigned(j, "task", "max_depth", cfg.task.max_depth);
  read_unsigned(j, "task", "out_degree", cfg.task.out_degree);
  read(j, "task", "label_noise", cfg.task.label_noise);
  if (j.contains("seed")) {
    read_unsigned(j, "task", "seed", cfg.task.seed);
    cfg.task_seed_set = true;
  }
}

void parse_vets(const json& j, VetsConfig& c) {
  require_object(j, "vets", {"learning_rate", "phi", "window", "moment_decay", "stop_loss"});
  read(j, "vets", "learning_rate", c.learning_rate);
  read(j, "vets", "phi", c.phi);
  read_unsigned(j, "vets", "window", c.window);
  read(j, "vets", "moment_decay", c.moment_decay);
  read(j, "vets", "stop_loss", c.stop_loss);
}

void parse_bpts(const json& j, BptsConfig& c) {
  require_object(j, "bpts", {"learning_rate", "mode", "stop_loss"});
  read(j, "bpts", "learning_rate", c.learning_rate);
  std::string mode = c.mode == BptsMode::kBatch ? "batch" : "online";
  read(j, "bpts", "mode", mode);
  if (mode == "batch") {
    c.mode = BptsMode::kBatch;
  } else if (mode == "online") {
    c.mode = BptsMode::kOnline;
  } else {
    fail("bpts.mode", "expected 'batch' or 'online'");
  }
  read(j, "bpts", "stop_loss", c.stop_loss);
}

void parse_qnts(const json& j, QntsConfig& c) {
  require_object(j, "qnts", {"initial_step", "armijo", "backtrack", "max_backtracks", "grad_tol",
                             "curvature_eps", "max_params", "stop_loss"});
  read(j, "qnts", "initial_step", c.initial_step);
  read(j, "qnts", "armijo", c.armijo);
  read(j, "qnts", "backtrack", c.backtrack);
  read_unsigned(j, "qnts", "max_backtracks", c.max_backtracks);
  read(j, "qnts", "grad_tol", c.grad_tol);
  read(j, "qnts", "curvature_eps", c.curvature_eps);
  read_unsigned(j, "qnts", "max_params", c.max_params);
  read(j, "qnts", "stop_loss", c.stop_loss);
}

void parse_compare(const json& j, RunConfig& cfg) {
  require_object(j, "compare", {"algorithms", "simulations"});
  if (j.contains("algorithms")) {
    const json& list = j["algorithms"];
    if (!list.is_array() || list.empty()) fail("compare.algorithms", "expected a nonempty array");
    cfg.compare_algorithms.clear();
    for (const auto& a : list) {
      if (!a.is_string()) fail("compare.algorithms", "expected algorithm names");
      cfg.compare_algorithms.push_back(
          located("compare.algorithms", [&] { return algorithm_from_string(a.get<std::string>()); }));
    }
  }
  read_unsigned(j, "compare", "simulations", cfg.simulations);
}

void parse_theory(const json& j, TheorySettings& t) {
  require_object(j, "theory",
                 {"hessian", "noise_variance", "samples", "chain_depth", "chains", "learning_rate", "phi"});
  if (j.contains("hessian")) {
    const json& h = j["hessian"];
    if (!h.is_array() || h.empty()) fail("theory.hessian", "expected a nonempty array of numbers");
    t.hessian.clear();
    for (const auto& v : h) {
      if (!v.is_number()) fail("theory.hessian", "expected numbers");
      t.hessian.push_back(v.get<double>());
    }
  }
  read(j, "theory", "noise_variance", t.noise_variance);
  read_unsigned(j, "theory", "samples", t.samples);
  read_unsigned(j, "theory", "chain_depth", t.chain_depth);
  read_unsigned(j, "theory", "chains", t.chains);
  read(j, "theory", "learning_rate", t.learning_rate);
  read(j, "theory", "phi", t.phi);
}

}  // namespace

TaskSpec RunConfig::effective_task() const {
  TaskSpec t = task;
  if (!task_seed_set) t.seed = seed;
  return t;
}

AlgorithmRun RunConfig::algorithm_run(Algorithm kind) const {
  AlgorithmRun run;
  run.kind = kind;
  run.vets = vets;
  run.bpts = bpts;
  run.qnts = qnts;
  run.vets.seed = seed;
  run.bpts.seed = seed;
  run.vets.max_epochs = run.bpts.max_epochs = run.qnts.max_epochs = epochs;
  run.vets.threads = run.bpts.threads = run.qnts.threads = threads;
  return run;
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  require_object(doc, "<root>",
                 {"seed", "threads", "epochs", "architecture", "task", "dataset", "checkpoint", "train", "vets",
                  "bpts", "qnts", "compare", "gradcheck", "theory"});

  RunConfig cfg;
  read_unsigned(doc, "", "seed", cfg.seed);
  read_unsigned(doc, "", "threads", cfg.threads);
  read_unsigned(doc, "", "epochs", cfg.epochs);
  if (doc.contains("architecture")) {
    std::string arch;
    read(doc, "", "architecture", arch);
    cfg.architecture = located("architecture", [&] { return parse_architecture(arch); });
  }
  if (doc.contains("task")) parse_task(doc["task"], cfg);
  if (doc.contains("dataset")) cfg.dataset = existing_path(doc, "dataset", base_dir);
  if (doc.contains("checkpoint")) cfg.checkpoint = existing_path(doc, "checkpoint", base_dir);
  if (doc.contains("train")) {
    require_object(doc["train"], "train", {"algorithm"});
    std::string name = to_string(cfg.train_algorithm);
    read(doc["train"], "train", "algorithm", name);
    cfg.train_algorithm = located("train.algorithm", [&] { return algorithm_from_string(name); });
  }
  if (doc.contains("vets")) parse_vets(doc["vets"], cfg.vets);
  if (doc.contains("bpts")) parse_bpts(doc["bpts"], cfg.bpts);
  if (doc.contains("qnts")) parse_qnts(doc["qnts"], cfg.qnts);
  if (doc.contains("compare")) parse_compare(doc["compare"], cfg);
  if (doc.contains("gradcheck")) {
    const json& g = doc["gradcheck"];
    require_object(g, "gradcheck", {"patterns", "tolerance", "step"});
    read_unsigned(g, "gradcheck", "patterns", cfg.gradcheck.patterns);
    read(g, "gradcheck", "tolerance", cfg.gradcheck.tolerance);
    read(g, "gradcheck", "step", cfg.gradcheck.step);
  }
  if (doc.contains("theory")) parse_theory(doc["theory"], cfg.theory);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), path.parent_path());
}

}  // namespace recnn::cli
