#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "recnn/cells.hpp"
#include "recnn/structures.hpp"

namespace recnn {

/// Flat parameter vector: all f weights first, then all g weights.
using ParamVector = std::vector<double>;

struct ModelConfig {
  std::size_t state_dim = 1;  // n_a
  DatasetSchema schema;
  CellSpec f_spec;  // in: o * n_a + n_I, out: n_a
  CellSpec g_spec;  // in: n_a, out: n_y
  std::vector<double> frontier_state;  // a_0, length n_a

  /// Throws DimensionError when cell shapes disagree with n_a, n_I, n_y, o.
  void check() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Builds a consistent config. The frontier state defaults to zeros.
ModelConfig make_model_config(const DatasetSchema& schema, std::size_t state_dim,
                              std::vector<std::size_t> f_hidden, std::vector<std::size_t> g_hidden,
                              Activation g_output = Activation::kTanh,
                              Activation f_output = Activation::kTanh,
                              Activation hidden = Activation::kTanh);

/// Per-node record of one forward pass over the encoding network.
struct EncodingTrace {
  ResolvedPattern topology;
  // f[v].input is x(v) = [a(ch_1[v]); ...; a(ch_o[v]); I(v)]; f[v].output() is a(v).
  std::vector<CellTrace> f;
  // Present at every node where the output function was evaluated.
  std::vector<std::optional<CellTrace>> g;

  std::span<const double> state(std::size_t position) const { return f[position].output(); }
};

struct NodeOutput {
  NodeId node;
  std::vector<double> output;
};

/// A stationary recursive network: the same f and g weights at every node.
class RecursiveModel {
 public:
  explicit RecursiveModel(ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }
  const Cell& f() const noexcept { return f_; }
  const Cell& g() const noexcept { return g_; }
  std::size_t param_count() const noexcept { return f_.param_count() + g_.param_count(); }
  std::size_t f_param_count() const noexcept { return f_.param_count(); }

  template <typename T>
  std::span<T> f_slice(std::span<T> params) const {
    return params.subspan(0, f_.param_count());
  }
  template <typename T>
  std::span<T> g_slice(std::span<T> params) const {
    return params.subspan(f_.param_count(), g_.param_count());
  }

  ParamVector init_params(std::uint64_t seed) const;

  /// Nodes whose output is evaluated: the supersource in supersource-only
  /// mode; every node carrying a target in per-node mode (all nodes when
  /// the pattern is unlabeled).
  std::vector<bool> output_nodes(const Dpag& pattern, const ResolvedPattern& topology) const;

  void forward(std::span<const double> params, const Dpag& pattern, EncodingTrace& trace) const;
  EncodingTrace forward(std::span<const double> params, const Dpag& pattern) const;
  /// Same, with the topology already resolved (it must come from `pattern`).
  void forward(std::span<const double> params, const Dpag& pattern, const ResolvedPattern& topology,
               EncodingTrace& trace) const;

  std::vector<NodeOutput> predict(std::span<const double> params, const Dpag& pattern) const;

  /// 0.5 * sum over supervised nodes of ||y(u) - t(u)||^2.
  double loss(std::span<const double> params, const Dpag& pattern) const;

  void check_pattern(const Dpag& pattern) const;
  void check_params(std::span<const double> params) const;

 private:
  void forward_resolved(std::span<const double> params, const Dpag& pattern, EncodingTrace& trace) const;

  ModelConfig config_;
  Cell f_;
  Cell g_;
};

double loss_from_trace(const Dpag& pattern, const EncodingTrace& trace);

struct Checkpoint {
  ModelConfig config;
  ParamVector params;
};

std::string dump_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(const std::string& text);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace recnn
