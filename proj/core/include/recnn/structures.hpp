#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace recnn {

using NodeId = std::int64_t;

enum class SupervisionMode { kSupersourceOnly, kPerNode };

std::string to_string(SupervisionMode mode);
SupervisionMode supervision_mode_from_string(const std::string& text);

struct DatasetSchema {
  std::size_t label_dim = 1;       // n_I
  std::size_t target_dim = 1;      // n_y
  std::size_t max_out_degree = 1;  // o
  SupervisionMode supervision = SupervisionMode::kSupersourceOnly;

  /// Throws SchemaError when any dimension is zero.
  void check() const;

  bool operator==(const DatasetSchema&) const = default;
};

struct Node {
  NodeId id = 0;
  std::vector<double> label;
  // Exactly max_out_degree slots; std::nullopt marks an absent child.
  std::vector<std::optional<NodeId>> children;
  std::optional<std::vector<double>> target;

  bool operator==(const Node&) const = default;
};

/// A labeled directed positional acyclic graph with a super-source.
struct Dpag {
  std::vector<Node> nodes;
  NodeId supersource = 0;

  bool operator==(const Dpag&) const = default;
};

struct Dataset {
  DatasetSchema schema;
  std::vector<Dpag> patterns;

  bool operator==(const Dataset&) const = default;
};

enum class ViolationKind {
  kDuplicateId,
  kMissingSupersource,
  kLabelDimension,
  kChildCount,
  kDanglingChild,
  kSelfLoop,
  kCycle,
  kUnreachable,
  kTargetDimension,
  kNoTarget,
  kSupervision,
};

std::string to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::optional<NodeId> node;
  std::string message;
};

/// Checks every structural invariant of a pattern against a schema. An empty
/// result means the pattern is valid; otherwise all violations are listed.
std::vector<Violation> validate(const Dpag& pattern, const DatasetSchema& schema);

/// Children before parents: leaves first, super-source last. Ties are broken
/// by ascending node id. Throws CycleError on a cyclic graph and
/// SchemaError on a dangling or duplicate id.
std::vector<NodeId> reverse_topological_order(const Dpag& pattern);

/// Parents before children: super-source first. Same tie-break and errors.
std::vector<NodeId> topological_order(const Dpag& pattern);

/// Pattern topology resolved to positions in `Dpag::nodes`. Shared by the
/// forward and backward passes so id lookups happen once per pattern.
struct ResolvedPattern {
  // children[v][r] is the position of the r-th child of node v, if present.
  std::vector<std::vector<std::optional<std::size_t>>> children;
  // Positions in children-first order (ties by ascending node id).
  std::vector<std::size_t> reverse_topological;
  std::size_t supersource = 0;
};

ResolvedPattern resolve(const Dpag& pattern);

Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

/// String forms used by the loader/saver and by tests.
Dataset parse_dataset(const std::string& text);
std::string dump_dataset(const Dataset& dataset);

}  // namespace recnn
