#include "recnn/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "recnn/errors.hpp"

namespace recnn {

namespace {

using Rng = std::mt19937_64;

std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

bool coin(Rng& rng, double p = 0.5) { return std::bernoulli_distribution(p)(rng); }

// N/2 positives and N - N/2 negatives in random order.
std::vector<double> balanced_classes(std::size_t n, Rng& rng) {
  std::vector<double> classes(n, -1.0);
  std::fill(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(n / 2), 1.0);
  std::shuffle(classes.begin(), classes.end(), rng);
  return classes;
}

void add_noise(std::vector<double>& label, double noise, Rng& rng) {
  if (noise <= 0.0) return;
  std::normal_distribution<double> dist(0.0, noise);
  for (double& x : label) x += dist(rng);
}

class FormulaBuilder {
 public:
  FormulaBuilder(Rng& rng, double noise) : rng_(rng), noise_(noise) {}

  // Builds a formula of exactly `levels` levels and returns (root id, value).
  std::pair<NodeId, bool> build(std::size_t levels) {
    const NodeId id = static_cast<NodeId>(nodes_.size());
    nodes_.push_back(Node{id, {}, {std::nullopt, std::nullopt}, std::nullopt});
    FormulaSymbol symbol;
    bool value;
    if (levels == 1) {
      value = coin(rng_);
      symbol = value ? FormulaSymbol::kTrue : FormulaSymbol::kFalse;
    } else {
      const std::size_t op = uniform_index(rng_, 0, 2);
      if (op == 2) {
        symbol = FormulaSymbol::kNot;
        const auto [child, v] = build(levels - 1);
        nodes_[static_cast<std::size_t>(id)].children[0] = child;
        value = !v;
      } else {
        symbol = op == 0 ? FormulaSymbol::kAnd : FormulaSymbol::kOr;
        const std::size_t deep_slot = uniform_index(rng_, 0, 1);
        bool values[2];
        for (std::size_t slot = 0; slot < 2; ++slot) {
          const std::size_t child_levels =
              slot == deep_slot ? levels - 1 : uniform_index(rng_, 1, std::min<std::size_t>(levels - 1, 3));
          const auto [child, v] = build(child_levels);
          nodes_[static_cast<std::size_t>(id)].children[slot] = child;
          values[slot] = v;
        }
        value = symbol == FormulaSymbol::kAnd ? (values[0] && values[1]) : (values[0] || values[1]);
      }
    }
    std::vector<double> label(kFormulaSymbols, 0.0);
    label[static_cast<std::size_t>(symbol)] = 1.0;
    add_noise(label, noise_, rng_);
    nodes_[static_cast<std::size_t>(id)].label = std::move(label);
    return {id, value};
  }

  std::vector<Node> take() { return std::move(nodes_); }

 private:
  Rng& rng_;
  double noise_;
  std::vector<Node> nodes_;
};

}  // namespace

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kBooleanFormula: return "boolean-formula";
    case TaskKind::kChainParity: return "chain-parity";
    case TaskKind::kSubtreeCount: return "subtree-count";
  }
  return "unknown";
}

TaskKind task_kind_from_string(const std::string& text) {
  if (text == "boolean-formula") return TaskKind::kBooleanFormula;
  if (text == "chain-parity") return TaskKind::kChainParity;
  if (text == "subtree-count") return TaskKind::kSubtreeCount;
  throw ConfigError("unknown task kind '" + text + "'");
}

void TaskSpec::check() const {
  if (count < 2) throw ConfigError("task: at least 2 patterns are required");
  if (min_depth < 1 || max_depth < min_depth) {
    throw ConfigError("task: depth range must satisfy 1 <= min_depth <= max_depth");
  }
  if (label_noise < 0.0) throw ConfigError("task: label noise must be non-negative");
  const std::size_t o = effective_out_degree();
  if (kind == TaskKind::kBooleanFormula && o != 2) throw ConfigError("boolean-formula requires o = 2");
  if (kind == TaskKind::kChainParity && o != 1) throw ConfigError("chain-parity requires o = 1");
  if (kind == TaskKind::kSubtreeCount && o < 2) throw ConfigError("subtree-count requires o >= 2");
}

std::size_t TaskSpec::effective_out_degree() const {
  if (out_degree != 0) return out_degree;
  return kind == TaskKind::kChainParity ? 1 : 2;
}

Dataset gen_boolean_formula(const TaskSpec& spec) {
  spec.check();
  Rng rng(spec.seed);
  Dataset ds;
  ds.schema = DatasetSchema{kFormulaSymbols, 1, 2, SupervisionMode::kSupersourceOnly};
  const auto classes = balanced_classes(spec.count, rng);
  constexpr std::size_t kMaxAttempts = 1000;

  for (std::size_t p = 0; p < spec.count; ++p) {
    const std::size_t depth = uniform_index(rng, spec.min_depth, spec.max_depth);
    bool placed = false;
    for (std::size_t attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      FormulaBuilder builder(rng, spec.label_noise);
      const auto [root, value] = builder.build(depth);
      if ((value ? 1.0 : -1.0) != classes[p]) continue;
      Dpag pattern{builder.take(), root};
      pattern.nodes[static_cast<std::size_t>(root)].target = std::vector<double>{classes[p]};
      ds.patterns.push_back(std::move(pattern));
      placed = true;
    }
    if (!placed) {
      throw Error("boolean-formula: could not reach class balance after " +
                  std::to_string(kMaxAttempts) + " attempts for pattern " + std::to_string(p));
    }
  }
  return ds;
}

Dataset gen_chain_parity(const TaskSpec& spec) {
  spec.check();
  Rng rng(spec.seed);
  Dataset ds;
  ds.schema = DatasetSchema{1, 1, 1, SupervisionMode::kSupersourceOnly};
  const auto classes = balanced_classes(spec.count, rng);

  for (std::size_t p = 0; p < spec.count; ++p) {
    const std::size_t depth = uniform_index(rng, spec.min_depth, spec.max_depth);
    std::vector<double> bits(depth);
    double product = 1.0;
    for (std::size_t i = 0; i + 1 < depth; ++i) {
      bits[i] = coin(rng) ? 1.0 : -1.0;
      product *= bits[i];
    }
    // The leaf bit fixes the parity to the drawn class.
    bits[depth - 1] = product * classes[p];

    Dpag pattern;
    pattern.supersource = 0;
    for (std::size_t i = 0; i < depth; ++i) {
      Node node;
      node.id = static_cast<NodeId>(i);
      node.label = {bits[i]};
      add_noise(node.label, spec.label_noise, rng);
      node.children = {i + 1 < depth ? std::optional<NodeId>(static_cast<NodeId>(i + 1)) : std::nullopt};
      pattern.nodes.push_back(std::move(node));
    }
    pattern.nodes[0].target = std::vector<double>{classes[p]};
    ds.patterns.push_back(std::move(pattern));
  }
  return ds;
}

double max_tree_size(std::size_t out_degree, std::size_t depth) {
  if (out_degree == 1) return static_cast<double>(depth);
  const double o = static_cast<double>(out_degree);
  return (std::pow(o, static_cast<double>(depth)) - 1.0) / (o - 1.0);
}

Dataset gen_subtree_count(const TaskSpec& spec) {
  spec.check();
  Rng rng(spec.seed);
  const std::size_t o = spec.effective_out_degree();
  Dataset ds;
  ds.schema = DatasetSchema{1, 1, o, SupervisionMode::kSupersourceOnly};
  const double max_size = max_tree_size(o, spec.max_depth);
  const double branch = 1.0 / static_cast<double>(o);

  for (std::size_t p = 0; p < spec.count; ++p) {
    const std::size_t depth = uniform_index(rng, spec.min_depth, spec.max_depth);
    Dpag pattern;
    pattern.supersource = 0;
    // (node position, level, on the forced deepest path)
    struct Pending {
      std::size_t position;
      std::size_t level;
      bool spine;
    };
    std::vector<Pending> frontier{{0, 1, true}};
    pattern.nodes.push_back(Node{0, {1.0}, std::vector<std::optional<NodeId>>(o), std::nullopt});
    while (!frontier.empty()) {
      const Pending cur = frontier.back();
      frontier.pop_back();
      if (cur.level == depth) continue;
      const std::size_t spine_slot = cur.spine ? uniform_index(rng, 0, o - 1) : o;
      for (std::size_t r = 0; r < o; ++r) {
        const bool is_spine = r == spine_slot;
        if (!is_spine && !coin(rng, branch)) continue;
        const auto id = static_cast<NodeId>(pattern.nodes.size());
        pattern.nodes[cur.position].children[r] = id;
        pattern.nodes.push_back(Node{id, {1.0}, std::vector<std::optional<NodeId>>(o), std::nullopt});
        frontier.push_back({pattern.nodes.size() - 1, cur.level + 1, is_spine});
      }
    }
    for (auto& node : pattern.nodes) add_noise(node.label, spec.label_noise, rng);
    pattern.nodes[0].target = std::vector<double>{static_cast<double>(pattern.nodes.size()) / max_size};
    ds.patterns.push_back(std::move(pattern));
  }
  return ds;
}

Dataset generate(const TaskSpec& spec) {
  switch (spec.kind) {
    case TaskKind::kBooleanFormula: return gen_boolean_formula(spec);
    case TaskKind::kChainParity: return gen_chain_parity(spec);
    case TaskKind::kSubtreeCount: return gen_subtree_count(spec);
  }
  throw ConfigError("unknown task kind");
}

std::pair<Dataset, Dataset> split_by_parity(const Dataset& dataset) {
  std::pair<Dataset, Dataset> out;
  out.first.schema = dataset.schema;
  out.second.schema = dataset.schema;
  for (std::size_t i = 0; i < dataset.patterns.size(); ++i) {
    (i % 2 == 0 ? out.first : out.second).patterns.push_back(dataset.patterns[i]);
  }
  return out;
}

}  // namespace recnn
