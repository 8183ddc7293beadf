#include "recnn/structures.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <queue>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "recnn/errors.hpp"

namespace recnn {

namespace {

using json = nlohmann::json;

std::string id_string(NodeId id) { return std::to_string(id); }

using IdMap = std::unordered_map<NodeId, std::size_t>;

IdMap build_id_map(const Dpag& pattern) {
  IdMap map;
  map.reserve(pattern.nodes.size());
  for (std::size_t i = 0; i < pattern.nodes.size(); ++i) {
    if (!map.emplace(pattern.nodes[i].id, i).second) {
      throw SchemaError("duplicate node id " + id_string(pattern.nodes[i].id));
    }
  }
  return map;
}

std::vector<std::vector<std::optional<std::size_t>>> resolve_children(const Dpag& pattern,
                                                                      const IdMap& ids) {
  std::vector<std::vector<std::optional<std::size_t>>> out(pattern.nodes.size());
  for (std::size_t v = 0; v < pattern.nodes.size(); ++v) {
    const auto& node = pattern.nodes[v];
    out[v].reserve(node.children.size());
    for (const auto& child : node.children) {
      if (!child) {
        out[v].push_back(std::nullopt);
        continue;
      }
      auto it = ids.find(*child);
      if (it == ids.end()) {
        throw SchemaError("node " + id_string(node.id) + " refers to missing child " +
                          id_string(*child));
      }
      out[v].push_back(it->second);
    }
  }
  return out;
}

// Kahn's algorithm over slot edges. With `children_first` a node becomes ready
// once every child slot has been emitted, otherwise once every parent slot has.
// Returns positions; the result is shorter than the node count iff a cycle exists.
std::vector<std::size_t> kahn_order(const Dpag& pattern,
                                    const std::vector<std::vector<std::optional<std::size_t>>>& children,
                                    bool children_first) {
  const std::size_t n = pattern.nodes.size();
  std::vector<std::size_t> pending(n, 0);
  std::vector<std::vector<std::size_t>> release(n);
  for (std::size_t v = 0; v < n; ++v) {
    for (const auto& c : children[v]) {
      if (!c) continue;
      if (children_first) {
        ++pending[v];
        release[*c].push_back(v);
      } else {
        ++pending[*c];
        release[v].push_back(*c);
      }
    }
  }

  using Entry = std::pair<NodeId, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> ready;
  for (std::size_t v = 0; v < n; ++v) {
    if (pending[v] == 0) ready.emplace(pattern.nodes[v].id, v);
  }

  std::vector<std::size_t> order;
  order.reserve(n);
  while (!ready.empty()) {
    const std::size_t v = ready.top().second;
    ready.pop();
    order.push_back(v);
    for (std::size_t w : release[v]) {
      if (--pending[w] == 0) ready.emplace(pattern.nodes[w].id, w);
    }
  }
  return order;
}

std::vector<NodeId> ordered_ids(const Dpag& pattern, bool children_first) {
  const IdMap ids = build_id_map(pattern);
  const auto children = resolve_children(pattern, ids);
  const auto order = kahn_order(pattern, children, children_first);
  if (order.size() != pattern.nodes.size()) {
    throw CycleError("pattern contains a directed cycle");
  }
  std::vector<NodeId> out;
  out.reserve(order.size());
  for (std::size_t v : order) out.push_back(pattern.nodes[v].id);
  return out;
}

// --- JSON helpers -----------------------------------------------------------

[[noreturn]] void field_error(const std::string& where, const std::string& what) {
  throw ParseError(where + ": " + what);
}

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) field_error(where, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) field_error(where, std::string("missing field '") + key + "'");
  return *it;
}

std::size_t read_positive(const json& value, const std::string& where) {
  if (!value.is_number_integer() || value.get<std::int64_t>() < 1) {
    field_error(where, "expected a positive integer");
  }
  return value.get<std::size_t>();
}

std::vector<double> read_reals(const json& value, const std::string& where) {
  if (!value.is_array()) field_error(where, "expected an array of numbers");
  std::vector<double> out;
  out.reserve(value.size());
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (!value[i].is_number()) field_error(where + "[" + std::to_string(i) + "]", "expected a number");
    out.push_back(value[i].get<double>());
  }
  return out;
}

NodeId read_id(const json& value, const std::string& where) {
  if (!value.is_number_integer()) field_error(where, "expected an integer node id");
  return value.get<NodeId>();
}

DatasetSchema read_schema(const json& value) {
  const std::string where = "schema";
  DatasetSchema schema;
  if (!value.is_object()) field_error(where, "expected an object");
  for (const auto& item : value.items()) {
    const std::string& key = item.key();
    if (key != "n_I" && key != "n_y" && key != "o" && key != "supervision_mode") {
      field_error(where, "unknown field '" + key + "'");
    }
  }
  schema.label_dim = read_positive(require(value, "n_I", where), where + ".n_I");
  schema.target_dim = read_positive(require(value, "n_y", where), where + ".n_y");
  schema.max_out_degree = read_positive(require(value, "o", where), where + ".o");
  const json& mode = require(value, "supervision_mode", where);
  if (!mode.is_string()) field_error(where + ".supervision_mode", "expected a string");
  try {
    schema.supervision = supervision_mode_from_string(mode.get<std::string>());
  } catch (const Error& e) {
    field_error(where + ".supervision_mode", e.what());
  }
  return schema;
}

Dpag read_pattern(const json& value, const std::string& where) {
  Dpag pattern;
  pattern.supersource = read_id(require(value, "supersource", where), where + ".supersource");
  const json& nodes = require(value, "nodes", where);
  if (!nodes.is_array()) field_error(where + ".nodes", "expected an array");
  pattern.nodes.reserve(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string node_where = where + ".nodes[" + std::to_string(i) + "]";
    const json& jn = nodes[i];
    Node node;
    node.id = read_id(require(jn, "id", node_where), node_where + ".id");
    node.label = read_reals(require(jn, "label", node_where), node_where + ".label");
    const json& children = require(jn, "children", node_where);
    if (!children.is_array()) field_error(node_where + ".children", "expected an array");
    for (std::size_t r = 0; r < children.size(); ++r) {
      if (children[r].is_null()) {
        node.children.push_back(std::nullopt);
      } else {
        node.children.push_back(
            read_id(children[r], node_where + ".children[" + std::to_string(r) + "]"));
      }
    }
    auto target = jn.find("target");
    if (target != jn.end() && !target->is_null()) {
      node.target = read_reals(*target, node_where + ".target");
    }
    pattern.nodes.push_back(std::move(node));
  }
  return pattern;
}

json write_schema(const DatasetSchema& schema) {
  return json{{"n_I", schema.label_dim},
              {"n_y", schema.target_dim},
              {"o", schema.max_out_degree},
              {"supervision_mode", to_string(schema.supervision)}};
}

json write_pattern(const Dpag& pattern) {
  json nodes = json::array();
  for (const auto& node : pattern.nodes) {
    json children = json::array();
    for (const auto& c : node.children) {
      children.push_back(c ? json(*c) : json(nullptr));
    }
    nodes.push_back(json{{"id", node.id},
                         {"label", node.label},
                         {"children", std::move(children)},
                         {"target", node.target ? json(*node.target) : json(nullptr)}});
  }
  return json{{"supersource", pattern.supersource}, {"nodes", std::move(nodes)}};
}

std::string line_context(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t column = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

}  // namespace

std::string to_string(SupervisionMode mode) {
  return mode == SupervisionMode::kPerNode ? "per-node" : "supersource-only";
}

SupervisionMode supervision_mode_from_string(const std::string& text) {
  if (text == "supersource-only") return SupervisionMode::kSupersourceOnly;
  if (text == "per-node") return SupervisionMode::kPerNode;
  throw SchemaError("unknown supervision mode '" + text + "'");
}

void DatasetSchema::check() const {
  if (label_dim == 0 || target_dim == 0 || max_out_degree == 0) {
    throw SchemaError("schema dimensions n_I, n_y and o must all be at least 1");
  }
}

std::string to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kDuplicateId: return "duplicate id";
    case ViolationKind::kMissingSupersource: return "missing supersource";
    case ViolationKind::kLabelDimension: return "label dimension";
    case ViolationKind::kChildCount: return "child count";
    case ViolationKind::kDanglingChild: return "dangling child";
    case ViolationKind::kSelfLoop: return "self loop";
    case ViolationKind::kCycle: return "cycle";
    case ViolationKind::kUnreachable: return "unreachable";
    case ViolationKind::kTargetDimension: return "target dimension";
    case ViolationKind::kNoTarget: return "no target";
    case ViolationKind::kSupervision: return "supervision";
  }
  return "unknown";
}

std::vector<Violation> validate(const Dpag& pattern, const DatasetSchema& schema) {
  std::vector<Violation> out;
  auto report = [&](ViolationKind kind, std::optional<NodeId> node, std::string message) {
    out.push_back(Violation{kind, node, std::move(message)});
  };

  IdMap ids;
  bool duplicates = false;
  for (std::size_t i = 0; i < pattern.nodes.size(); ++i) {
    if (!ids.emplace(pattern.nodes[i].id, i).second) {
      duplicates = true;
      report(ViolationKind::kDuplicateId, pattern.nodes[i].id,
             "node id " + id_string(pattern.nodes[i].id) + " appears more than once");
    }
  }
  const bool has_source = ids.count(pattern.supersource) != 0;
  if (!has_source) {
    report(ViolationKind::kMissingSupersource, pattern.supersource,
           "supersource " + id_string(pattern.supersource) + " is not a node of the pattern");
  }

  std::size_t targets = 0;
  bool edges_ok = !duplicates;
  for (const auto& node : pattern.nodes) {
    if (node.label.size() != schema.label_dim) {
      report(ViolationKind::kLabelDimension, node.id,
             "label has " + std::to_string(node.label.size()) + " entries, schema n_I is " +
                 std::to_string(schema.label_dim));
    }
    if (node.children.size() != schema.max_out_degree) {
      report(ViolationKind::kChildCount, node.id,
             "children list has " + std::to_string(node.children.size()) +
                 " slots, schema o is " + std::to_string(schema.max_out_degree));
    }
    for (const auto& child : node.children) {
      if (!child) continue;
      if (*child == node.id) {
        edges_ok = false;
        report(ViolationKind::kSelfLoop, node.id, "node lists itself as a child");
      } else if (ids.count(*child) == 0) {
        edges_ok = false;
        report(ViolationKind::kDanglingChild, node.id,
               "child " + id_string(*child) + " is not a node of the pattern");
      }
    }
    if (node.target) {
      ++targets;
      if (node.target->size() != schema.target_dim) {
        report(ViolationKind::kTargetDimension, node.id,
               "target has " + std::to_string(node.target->size()) + " entries, schema n_y is " +
                   std::to_string(schema.target_dim));
      }
      if (schema.supervision == SupervisionMode::kSupersourceOnly && node.id != pattern.supersource) {
        report(ViolationKind::kSupervision, node.id,
               "supersource-only mode allows a target only on the supersource");
      }
    }
  }
  if (targets == 0) {
    report(ViolationKind::kNoTarget, std::nullopt, "no node carries a target");
  } else if (schema.supervision == SupervisionMode::kSupersourceOnly && has_source && !duplicates &&
             !pattern.nodes[ids.at(pattern.supersource)].target) {
    report(ViolationKind::kSupervision, pattern.supersource,
           "supersource-only mode requires a target on the supersource");
  }

  if (!edges_ok) return out;

  const auto children = resolve_children(pattern, ids);
  const auto order = kahn_order(pattern, children, true);
  if (order.size() != pattern.nodes.size()) {
    std::vector<bool> emitted(pattern.nodes.size(), false);
    for (std::size_t v : order) emitted[v] = true;
    for (std::size_t v = 0; v < pattern.nodes.size(); ++v) {
      if (!emitted[v]) {
        report(ViolationKind::kCycle, pattern.nodes[v].id,
               "node " + id_string(pattern.nodes[v].id) + " lies on or above a directed cycle");
      }
    }
  }

  if (has_source) {
    std::vector<bool> seen(pattern.nodes.size(), false);
    std::vector<std::size_t> stack{ids.at(pattern.supersource)};
    seen[stack.back()] = true;
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      for (const auto& c : children[v]) {
        if (c && !seen[*c]) {
          seen[*c] = true;
          stack.push_back(*c);
        }
      }
    }
    for (std::size_t v = 0; v < pattern.nodes.size(); ++v) {
      if (!seen[v]) {
        report(ViolationKind::kUnreachable, pattern.nodes[v].id,
               "node " + id_string(pattern.nodes[v].id) + " is not reachable from the supersource");
      }
    }
  }
  return out;
}

std::vector<NodeId> reverse_topological_order(const Dpag& pattern) {
  return ordered_ids(pattern, true);
}

std::vector<NodeId> topological_order(const Dpag& pattern) { return ordered_ids(pattern, false); }

ResolvedPattern resolve(const Dpag& pattern) {
  const IdMap ids = build_id_map(pattern);
  ResolvedPattern out;
  out.children = resolve_children(pattern, ids);
  out.reverse_topological = kahn_order(pattern, out.children, true);
  if (out.reverse_topological.size() != pattern.nodes.size()) {
    throw CycleError("pattern contains a directed cycle");
  }
  auto source = ids.find(pattern.supersource);
  if (source == ids.end()) {
    throw SchemaError("supersource " + id_string(pattern.supersource) + " is not a node of the pattern");
  }
  out.supersource = source->second;
  return out;
}

Dataset parse_dataset(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("dataset JSON syntax error at " + line_context(text, e.byte) + ": " + e.what());
  }
  if (!doc.is_object()) field_error("<root>", "expected an object");
  for (const auto& item : doc.items()) {
    if (item.key() != "schema" && item.key() != "patterns") {
      field_error("<root>", "unknown field '" + item.key() + "'");
    }
  }

  Dataset dataset;
  dataset.schema = read_schema(require(doc, "schema", "<root>"));
  const json& patterns = require(doc, "patterns", "<root>");
  if (!patterns.is_array()) field_error("patterns", "expected an array");
  dataset.patterns.reserve(patterns.size());
  for (std::size_t p = 0; p < patterns.size(); ++p) {
    dataset.patterns.push_back(read_pattern(patterns[p], "patterns[" + std::to_string(p) + "]"));
  }

  for (std::size_t p = 0; p < dataset.patterns.size(); ++p) {
    const auto violations = validate(dataset.patterns[p], dataset.schema);
    if (violations.empty()) continue;
    std::ostringstream msg;
    msg << "pattern " << p << " is inconsistent with the schema:";
    for (const auto& v : violations) {
      msg << " [" << to_string(v.kind);
      if (v.node) msg << " @node " << *v.node;
      msg << ": " << v.message << "]";
    }
    throw SchemaError(msg.str());
  }
  return dataset;
}

std::string dump_dataset(const Dataset& dataset) {
  json patterns = json::array();
  for (const auto& p : dataset.patterns) patterns.push_back(write_pattern(p));
  json doc{{"schema", write_schema(dataset.schema)}, {"patterns", std::move(patterns)}};
  return doc.dump() + "\n";
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_dataset(buffer.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write dataset file " + path.string());
  out << dump_dataset(dataset);
  if (!out) throw IoError("failed writing dataset file " + path.string());
}

}  // namespace recnn
