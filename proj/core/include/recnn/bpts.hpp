#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "recnn/model.hpp"

namespace recnn {

/// dE/dW aligned with the flat parameter vector (f half, then g half).
using GradientVector = std::vector<double>;

struct GradientResult {
  GradientVector gradient;
  double loss = 0.0;
};

/// Reusable buffers for one backward pass. After a call, `trace` holds the
/// forward pass and `state_delta[v]` the accumulated delta^f of node v.
struct BptsWorkspace {
  EncodingTrace trace;
  std::vector<std::vector<double>> state_delta;
  std::vector<double> input_delta;
  std::vector<double> output_delta;
  std::vector<double> state_in;
};

/// Backpropagation through structure for one pattern. Overwrites `gradient`
/// with dE/dW and returns E = 0.5 * sum ||y(u) - t(u)||^2. A `loss_scale`
/// c differentiates c * E instead (every delta is scaled by c).
double s_gradients(const RecursiveModel& model, std::span<const double> params,
                   const Dpag& pattern, std::span<double> gradient, BptsWorkspace& workspace,
                   double loss_scale = 1.0);

/// Same, reusing a topology resolved from `pattern` beforehand.
double s_gradients(const RecursiveModel& model, std::span<const double> params, const Dpag& pattern,
                   const ResolvedPattern& topology, std::span<double> gradient,
                   BptsWorkspace& workspace, double loss_scale = 1.0);

GradientResult s_gradients(const RecursiveModel& model, std::span<const double> params,
                           const Dpag& pattern);

/// Mean gradient and mean loss over a nonempty pattern list. Terms are added
/// in pattern order whatever the thread count.
GradientResult batch_gradient(const RecursiveModel& model, std::span<const double> params,
                              std::span<const Dpag> patterns, std::size_t threads = 1);

}  // namespace recnn
