#include "recnn/cells.hpp"

#include <cmath>

#include <Eigen/Core>

#include "recnn/errors.hpp"

namespace recnn {

namespace {

double activate(Activation a, double z) {
  switch (a) {
    case Activation::kTanh: return std::tanh(z);
    case Activation::kSigmoid: return 1.0 / (1.0 + std::exp(-z));
    case Activation::kLinear: return z;
  }
  return z;
}

// Derivative expressed through the activation value y = act(z).
double activate_derivative(Activation a, double y) {
  switch (a) {
    case Activation::kTanh: return 1.0 - y * y;
    case Activation::kSigmoid: return y * (1.0 - y);
    case Activation::kLinear: return 1.0;
  }
  return 1.0;
}

void require_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string(what) + " has size " + std::to_string(got) + ", expected " +
                         std::to_string(want));
  }
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMat = Eigen::Map<const RowMajor>;
using Mat = Eigen::Map<RowMajor>;
using ConstVec = Eigen::Map<const Eigen::VectorXd>;
using Vec = Eigen::Map<Eigen::VectorXd>;

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kLinear: return "linear";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& text) {
  if (text == "tanh") return Activation::kTanh;
  if (text == "sigmoid") return Activation::kSigmoid;
  if (text == "linear") return Activation::kLinear;
  throw SchemaError("unknown activation '" + text + "'");
}

Cell::Cell(CellSpec spec) : spec_(std::move(spec)) {
  if (spec_.in_dim == 0 || spec_.out_dim == 0) throw DimensionError("cell widths must be at least 1");
  widths_.push_back(spec_.in_dim);
  for (std::size_t w : spec_.hidden_layers) {
    if (w == 0) throw DimensionError("cell widths must be at least 1");
    widths_.push_back(w);
  }
  widths_.push_back(spec_.out_dim);

  offsets_.push_back(0);
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    offsets_.push_back(offsets_.back() + (widths_[l] + 1) * widths_[l + 1]);
  }
}

std::size_t Cell::weight_index(std::size_t layer, std::size_t out, std::size_t in) const {
  return offsets_.at(layer) + out * fan_in(layer) + in;
}

std::size_t Cell::bias_index(std::size_t layer, std::size_t out) const {
  return offsets_.at(layer) + fan_out(layer) * fan_in(layer) + out;
}

void Cell::check_params(std::span<const double> params) const {
  require_size(params.size(), param_count(), "cell parameter slice");
}

void Cell::forward(std::span<const double> params, std::span<const double> x, CellTrace& trace) const {
  check_params(params);
  require_size(x.size(), spec_.in_dim, "cell input");

  const std::size_t layers = layer_count();
  trace.input.assign(x.begin(), x.end());
  trace.pre_activations.resize(layers);
  trace.activations.resize(layers);

  std::span<const double> in = trace.input;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto n_in = static_cast<Eigen::Index>(widths_[l]);
    const auto n_out = static_cast<Eigen::Index>(widths_[l + 1]);
    const Activation act = l + 1 == layers ? spec_.output_activation : spec_.hidden_activation;
    const double* w = params.data() + offsets_[l];

    auto& z = trace.pre_activations[l];
    auto& y = trace.activations[l];
    z.resize(widths_[l + 1]);
    y.resize(widths_[l + 1]);
    Vec zv(z.data(), n_out);
    zv.noalias() = ConstMat(w, n_out, n_in) * ConstVec(in.data(), n_in);
    zv += ConstVec(w + n_in * n_out, n_out);
    for (Eigen::Index o = 0; o < n_out; ++o) y[o] = activate(act, z[o]);
    in = y;
  }
}

CellTrace Cell::forward(std::span<const double> params, std::span<const double> x) const {
  CellTrace trace;
  forward(params, x, trace);
  return trace;
}

void Cell::backward(std::span<const double> params, const CellTrace& trace,
                    std::span<const double> delta, std::span<double> weight_grad,
                    std::span<double> input_delta) const {
  check_params(params);
  require_size(delta.size(), spec_.out_dim, "cell output delta");
  if (!weight_grad.empty()) require_size(weight_grad.size(), param_count(), "cell gradient slice");
  if (!input_delta.empty()) require_size(input_delta.size(), spec_.in_dim, "cell input delta");
  const std::size_t layers = layer_count();
  if (trace.activations.size() != layers || trace.input.size() != spec_.in_dim) {
    throw DimensionError("cell trace does not match the cell spec");
  }

  thread_local std::vector<double> upstream;
  thread_local std::vector<double> local;
  upstream.assign(delta.begin(), delta.end());
  for (std::size_t l = layers; l-- > 0;) {
    const auto n_in = static_cast<Eigen::Index>(widths_[l]);
    const auto n_out = static_cast<Eigen::Index>(widths_[l + 1]);
    const Activation act = l + 1 == layers ? spec_.output_activation : spec_.hidden_activation;
    const auto& y = trace.activations[l];
    const auto& x = l == 0 ? trace.input : trace.activations[l - 1];
    const double* w = params.data() + offsets_[l];

    // delta with respect to the pre-activation
    local.resize(widths_[l + 1]);
    for (Eigen::Index o = 0; o < n_out; ++o) local[o] = upstream[o] * activate_derivative(act, y[o]);
    const ConstVec d(local.data(), n_out);

    if (!weight_grad.empty()) {
      double* gw = weight_grad.data() + offsets_[l];
      Mat(gw, n_out, n_in).noalias() += d * ConstVec(x.data(), n_in).transpose();
      Vec(gw + n_in * n_out, n_out) += d;
    }

    if (l == 0 && input_delta.empty()) break;
    upstream.resize(widths_[l]);
    Vec(upstream.data(), n_in).noalias() = ConstMat(w, n_out, n_in).transpose() * d;
  }
  if (!input_delta.empty()) std::copy(upstream.begin(), upstream.end(), input_delta.begin());
}

std::vector<double> Cell::backward_weights(std::span<const double> params, const CellTrace& trace,
                                           std::span<const double> delta) const {
  std::vector<double> grad(param_count(), 0.0);
  backward(params, trace, delta, grad, {});
  return grad;
}

std::vector<double> Cell::backward_input(std::span<const double> params, const CellTrace& trace,
                                         std::span<const double> delta) const {
  std::vector<double> out(spec_.in_dim, 0.0);
  backward(params, trace, delta, {}, out);
  return out;
}

void Cell::init_params(std::mt19937_64& rng, std::span<double> params) const {
  require_size(params.size(), param_count(), "cell parameter slice");
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const double r = 1.0 / std::sqrt(static_cast<double>(fan_in(l)));
    std::uniform_real_distribution<double> dist(-r, r);
    for (std::size_t o = 0; o < fan_out(l); ++o) {
      for (std::size_t i = 0; i < fan_in(l); ++i) params[weight_index(l, o, i)] = dist(rng);
      params[bias_index(l, o)] = 0.0;
    }
  }
}

std::vector<double> init_params(const CellSpec& spec, std::uint64_t seed) {
  Cell cell(spec);
  std::vector<double> params(cell.param_count());
  std::mt19937_64 rng(seed);
  cell.init_params(rng, params);
  return params;
}

}  // namespace recnn
