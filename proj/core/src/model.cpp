#include "recnn/model.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "recnn/errors.hpp"

namespace recnn {

namespace {

using json = nlohmann::json;

json cell_to_json(const CellSpec& spec) {
  return json{{"in_dim", spec.in_dim},
              {"out_dim", spec.out_dim},
              {"hidden_layers", spec.hidden_layers},
              {"hidden_activation", to_string(spec.hidden_activation)},
              {"output_activation", to_string(spec.output_activation)}};
}

CellSpec cell_from_json(const json& j) {
  CellSpec spec;
  spec.in_dim = j.at("in_dim").get<std::size_t>();
  spec.out_dim = j.at("out_dim").get<std::size_t>();
  spec.hidden_layers = j.at("hidden_layers").get<std::vector<std::size_t>>();
  spec.hidden_activation = activation_from_string(j.at("hidden_activation").get<std::string>());
  spec.output_activation = activation_from_string(j.at("output_activation").get<std::string>());
  return spec;
}

}  // namespace

void ModelConfig::check() const {
  schema.check();
  if (state_dim == 0) throw DimensionError("state dimension n_a must be at least 1");
  const std::size_t f_in = schema.max_out_degree * state_dim + schema.label_dim;
  if (f_spec.in_dim != f_in || f_spec.out_dim != state_dim) {
    throw DimensionError("f cell must map " + std::to_string(f_in) + " inputs to " +
                         std::to_string(state_dim) + " state units");
  }
  if (g_spec.in_dim != state_dim || g_spec.out_dim != schema.target_dim) {
    throw DimensionError("g cell must map " + std::to_string(state_dim) + " state units to " +
                         std::to_string(schema.target_dim) + " outputs");
  }
  if (frontier_state.size() != state_dim) {
    throw DimensionError("frontier state must have n_a = " + std::to_string(state_dim) + " entries");
  }
}

ModelConfig make_model_config(const DatasetSchema& schema, std::size_t state_dim,
                              std::vector<std::size_t> f_hidden, std::vector<std::size_t> g_hidden,
                              Activation g_output, Activation f_output, Activation hidden) {
  ModelConfig config;
  config.state_dim = state_dim;
  config.schema = schema;
  config.f_spec = CellSpec{schema.max_out_degree * state_dim + schema.label_dim, state_dim,
                           std::move(f_hidden), hidden, f_output};
  config.g_spec = CellSpec{state_dim, schema.target_dim, std::move(g_hidden), hidden, g_output};
  config.frontier_state.assign(state_dim, 0.0);
  config.check();
  return config;
}

RecursiveModel::RecursiveModel(ModelConfig config)
    : config_(std::move(config)), f_(config_.f_spec), g_(config_.g_spec) {
  config_.check();
}

ParamVector RecursiveModel::init_params(std::uint64_t seed) const {
  ParamVector params(param_count());
  std::mt19937_64 rng(seed);
  f_.init_params(rng, f_slice(std::span<double>(params)));
  g_.init_params(rng, g_slice(std::span<double>(params)));
  return params;
}

void RecursiveModel::check_params(std::span<const double> params) const {
  if (params.size() != param_count()) {
    throw DimensionError("parameter vector has " + std::to_string(params.size()) +
                         " entries, model expects " + std::to_string(param_count()));
  }
}

void RecursiveModel::check_pattern(const Dpag& pattern) const {
  const auto& schema = config_.schema;
  for (const auto& node : pattern.nodes) {
    if (node.label.size() != schema.label_dim || node.children.size() != schema.max_out_degree ||
        (node.target && node.target->size() != schema.target_dim)) {
      throw DimensionError("node " + std::to_string(node.id) +
                           " does not match the model schema (label, children or target size)");
    }
  }
}

std::vector<bool> RecursiveModel::output_nodes(const Dpag& pattern,
                                               const ResolvedPattern& topology) const {
  const std::size_t n = pattern.nodes.size();
  std::vector<bool> out(n, false);
  if (config_.schema.supervision == SupervisionMode::kSupersourceOnly) {
    out[topology.supersource] = true;
    return out;
  }
  bool any = false;
  for (std::size_t v = 0; v < n; ++v) {
    out[v] = pattern.nodes[v].target.has_value();
    any = any || out[v];
  }
  if (!any) out.assign(n, true);
  return out;
}

void RecursiveModel::forward(std::span<const double> params, const Dpag& pattern,
                             EncodingTrace& trace) const {
  check_params(params);
  check_pattern(pattern);
  trace.topology = resolve(pattern);
  forward_resolved(params, pattern, trace);
}

void RecursiveModel::forward(std::span<const double> params, const Dpag& pattern,
                             const ResolvedPattern& topology, EncodingTrace& trace) const {
  check_params(params);
  check_pattern(pattern);
  if (topology.children.size() != pattern.nodes.size()) {
    throw DimensionError("resolved topology does not match the pattern");
  }
  trace.topology = topology;
  forward_resolved(params, pattern, trace);
}

void RecursiveModel::forward_resolved(std::span<const double> params, const Dpag& pattern,
                                      EncodingTrace& trace) const {
  const std::size_t n = pattern.nodes.size();
  const std::size_t n_a = config_.state_dim;
  const std::size_t o = config_.schema.max_out_degree;
  const auto f_params = f_slice(params);
  const auto g_params = g_slice(params);

  trace.f.resize(n);
  trace.g.resize(n);

  std::vector<double> x(f_.in_dim());
  for (std::size_t v : trace.topology.reverse_topological) {
    const auto& slots = trace.topology.children[v];
    for (std::size_t r = 0; r < o; ++r) {
      std::span<const double> block =
          slots[r] ? trace.state(*slots[r]) : std::span<const double>(config_.frontier_state);
      std::copy(block.begin(), block.end(), x.begin() + static_cast<std::ptrdiff_t>(r * n_a));
    }
    const auto& label = pattern.nodes[v].label;
    std::copy(label.begin(), label.end(), x.begin() + static_cast<std::ptrdiff_t>(o * n_a));
    f_.forward(f_params, x, trace.f[v]);
  }

  bool any_target = false;
  for (const auto& node : pattern.nodes) any_target = any_target || node.target.has_value();
  const bool per_node = config_.schema.supervision == SupervisionMode::kPerNode;
  for (std::size_t v = 0; v < n; ++v) {
    const bool output = per_node ? !any_target || pattern.nodes[v].target.has_value()
                                 : v == trace.topology.supersource;
    if (!output) {
      trace.g[v].reset();
      continue;
    }
    if (!trace.g[v]) trace.g[v].emplace();
    g_.forward(g_params, trace.state(v), *trace.g[v]);
  }
}

EncodingTrace RecursiveModel::forward(std::span<const double> params, const Dpag& pattern) const {
  EncodingTrace trace;
  forward(params, pattern, trace);
  return trace;
}

std::vector<NodeOutput> RecursiveModel::predict(std::span<const double> params,
                                                const Dpag& pattern) const {
  const EncodingTrace trace = forward(params, pattern);
  std::vector<NodeOutput> out;
  for (std::size_t v = 0; v < pattern.nodes.size(); ++v) {
    if (!trace.g[v]) continue;
    const auto y = trace.g[v]->output();
    out.push_back(NodeOutput{pattern.nodes[v].id, std::vector<double>(y.begin(), y.end())});
  }
  return out;
}

double loss_from_trace(const Dpag& pattern, const EncodingTrace& trace) {
  double sum = 0.0;
  bool supervised = false;
  for (std::size_t v = 0; v < pattern.nodes.size(); ++v) {
    const auto& target = pattern.nodes[v].target;
    if (!target || !trace.g[v]) continue;
    supervised = true;
    const auto y = trace.g[v]->output();
    for (std::size_t k = 0; k < y.size(); ++k) {
      const double r = y[k] - (*target)[k];
      sum += r * r;
    }
  }
  if (!supervised) throw SchemaError("pattern has no supervised node");
  return 0.5 * sum;
}

double RecursiveModel::loss(std::span<const double> params, const Dpag& pattern) const {
  return loss_from_trace(pattern, forward(params, pattern));
}

std::string dump_checkpoint(const Checkpoint& checkpoint) {
  const auto& c = checkpoint.config;
  json model{{"n_a", c.state_dim},
             {"schema",
              {{"n_I", c.schema.label_dim},
               {"n_y", c.schema.target_dim},
               {"o", c.schema.max_out_degree},
               {"supervision_mode", to_string(c.schema.supervision)}}},
             {"f", cell_to_json(c.f_spec)},
             {"g", cell_to_json(c.g_spec)},
             {"frontier_state", c.frontier_state}};
  // nlohmann emits the shortest decimal that round-trips each double exactly.
  json doc{{"model", std::move(model)}, {"params", checkpoint.params}};
  return doc.dump(1) + "\n";
}

Checkpoint parse_checkpoint(const std::string& text) {
  try {
    const json doc = json::parse(text);
    const json& m = doc.at("model");
    Checkpoint cp;
    cp.config.state_dim = m.at("n_a").get<std::size_t>();
    const json& s = m.at("schema");
    cp.config.schema.label_dim = s.at("n_I").get<std::size_t>();
    cp.config.schema.target_dim = s.at("n_y").get<std::size_t>();
    cp.config.schema.max_out_degree = s.at("o").get<std::size_t>();
    cp.config.schema.supervision =
        supervision_mode_from_string(s.at("supervision_mode").get<std::string>());
    cp.config.f_spec = cell_from_json(m.at("f"));
    cp.config.g_spec = cell_from_json(m.at("g"));
    cp.config.frontier_state = m.at("frontier_state").get<std::vector<double>>();
    cp.params = doc.at("params").get<std::vector<double>>();
    cp.config.check();
    RecursiveModel(cp.config).check_params(cp.params);
    return cp;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << dump_checkpoint(checkpoint);
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_checkpoint(buffer.str());
}

}  // namespace recnn
