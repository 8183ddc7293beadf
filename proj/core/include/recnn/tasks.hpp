#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>

#include "recnn/structures.hpp"

namespace recnn {

enum class TaskKind { kBooleanFormula, kChainParity, kSubtreeCount };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& text);

struct TaskSpec {
  TaskKind kind = TaskKind::kChainParity;
  std::size_t count = 4000;
  // Depth counts levels: a single node has depth 1.
  std::size_t min_depth = 1;
  std::size_t max_depth = 16;
  std::size_t out_degree = 0;  // 0 picks the task default (2, 1 and 2 respectively)
  double label_noise = 0.0;    // std of Gaussian noise added to every label entry
  std::uint64_t seed = 0;

  void check() const;
  std::size_t effective_out_degree() const;
};

/// Label layout of boolean-formula nodes (one-hot, in this order).
enum class FormulaSymbol : std::size_t { kAnd = 0, kOr = 1, kNot = 2, kTrue = 3, kFalse = 4 };
inline constexpr std::size_t kFormulaSymbols = 5;

/// AND/OR/NOT formula trees over constant leaves; target is the truth value
/// coded +1/-1 at the supersource. Classes are exactly balanced.
Dataset gen_boolean_formula(const TaskSpec& spec);

/// Unary chains labeled with bits +1/-1; target is the product of all bits.
Dataset gen_chain_parity(const TaskSpec& spec);

/// Random o-ary trees with constant labels; target is the node count divided
/// by the size of the full tree of depth max_depth.
Dataset gen_subtree_count(const TaskSpec& spec);

Dataset generate(const TaskSpec& spec);

/// Largest possible node count for a tree of `depth` levels and out-degree o.
double max_tree_size(std::size_t out_degree, std::size_t depth);

/// Even pattern indices train, odd indices test.
std::pair<Dataset, Dataset> split_by_parity(const Dataset& dataset);

}  // namespace recnn
