#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace recnn {

enum class Activation { kTanh, kSigmoid, kLinear };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& text);

struct CellSpec {
  std::size_t in_dim = 1;
  std::size_t out_dim = 1;
  std::vector<std::size_t> hidden_layers;
  Activation hidden_activation = Activation::kTanh;
  Activation output_activation = Activation::kTanh;

  bool operator==(const CellSpec&) const = default;
};

/// Intermediates of one forward call. `activations.back()` is the cell output.
struct CellTrace {
  std::vector<double> input;
  std::vector<std::vector<double>> pre_activations;
  std::vector<std::vector<double>> activations;

  std::span<const double> output() const { return activations.back(); }
};

/// A feed-forward MLP cell whose parameters live in a caller-owned flat
/// slice. Layer l stores its fan_out x fan_in weight matrix row-major,
/// followed by fan_out biases; layers are contiguous in order.
class Cell {
 public:
  explicit Cell(CellSpec spec);

  const CellSpec& spec() const noexcept { return spec_; }
  std::size_t in_dim() const noexcept { return spec_.in_dim; }
  std::size_t out_dim() const noexcept { return spec_.out_dim; }
  std::size_t layer_count() const noexcept { return widths_.size() - 1; }
  std::size_t fan_in(std::size_t layer) const { return widths_.at(layer); }
  std::size_t fan_out(std::size_t layer) const { return widths_.at(layer + 1); }
  std::size_t param_count() const noexcept { return offsets_.back(); }

  // Flat index of the weight from input unit `in` to output unit `out`.
  std::size_t weight_index(std::size_t layer, std::size_t out, std::size_t in) const;
  std::size_t bias_index(std::size_t layer, std::size_t out) const;

  void forward(std::span<const double> params, std::span<const double> x, CellTrace& trace) const;
  CellTrace forward(std::span<const double> params, std::span<const double> x) const;

  /// Fused Jacobian-transpose products for an output-space `delta`:
  /// adds J_w^T delta into `weight_grad` (when non-empty) and writes
  /// J_x^T delta into `input_delta` (when non-empty).
  void backward(std::span<const double> params, const CellTrace& trace,
                std::span<const double> delta, std::span<double> weight_grad,
                std::span<double> input_delta) const;

  std::vector<double> backward_weights(std::span<const double> params, const CellTrace& trace,
                                       std::span<const double> delta) const;
  std::vector<double> backward_input(std::span<const double> params, const CellTrace& trace,
                                     std::span<const double> delta) const;

  /// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
  void init_params(std::mt19937_64& rng, std::span<double> params) const;

 private:
  void check_params(std::span<const double> params) const;

  CellSpec spec_;
  std::vector<std::size_t> widths_;   // in_dim, hidden..., out_dim
  std::vector<std::size_t> offsets_;  // layer start offsets, plus total
};

std::vector<double> init_params(const CellSpec& spec, std::uint64_t seed);

}  // namespace recnn
