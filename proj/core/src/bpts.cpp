#include "recnn/bpts.hpp"

#include <algorithm>

#include "recnn/errors.hpp"
#include "recnn/parallel.hpp"

namespace recnn {

namespace {

// Backward sweep over a trace that the caller has just filled.
double backward_pass(const RecursiveModel& model, std::span<const double> params,
                     const Dpag& pattern, std::span<double> gradient, BptsWorkspace& ws,
                     double loss_scale);

void check_gradient(const RecursiveModel& model, std::span<double> gradient) {
  if (gradient.size() != model.param_count()) {
    throw DimensionError("gradient buffer does not match the parameter count");
  }
}

}  // namespace

double s_gradients(const RecursiveModel& model, std::span<const double> params,
                   const Dpag& pattern, std::span<double> gradient, BptsWorkspace& ws,
                   double loss_scale) {
  check_gradient(model, gradient);
  model.forward(params, pattern, ws.trace);
  return backward_pass(model, params, pattern, gradient, ws, loss_scale);
}

double s_gradients(const RecursiveModel& model, std::span<const double> params, const Dpag& pattern,
                   const ResolvedPattern& topology, std::span<double> gradient,
                   BptsWorkspace& ws, double loss_scale) {
  check_gradient(model, gradient);
  model.forward(params, pattern, topology, ws.trace);
  return backward_pass(model, params, pattern, gradient, ws, loss_scale);
}

namespace {

double backward_pass(const RecursiveModel& model, std::span<const double> params,
                     const Dpag& pattern, std::span<double> gradient, BptsWorkspace& ws,
                     double loss_scale) {
  // Phase 1 (states, children first) is done by the caller.
  const double loss = loss_from_trace(pattern, ws.trace);

  const auto& topo = ws.trace.topology;
  const std::size_t n = pattern.nodes.size();
  const std::size_t n_a = model.config().state_dim;
  const auto f_params = model.f_slice(params);
  const auto g_params = model.g_slice(params);
  auto grad_f = model.f_slice(gradient);
  auto grad_g = model.g_slice(gradient);

  // Phase 2: zero deltas and both gradient halves, then one parents-first sweep.
  ws.state_delta.resize(n);
  for (auto& d : ws.state_delta) d.assign(n_a, 0.0);
  std::fill(gradient.begin(), gradient.end(), 0.0);
  ws.input_delta.resize(model.f().in_dim());
  ws.state_in.resize(n_a);

  for (auto it = topo.reverse_topological.rbegin(); it != topo.reverse_topological.rend(); ++it) {
    const std::size_t u = *it;
    const auto& target = pattern.nodes[u].target;
    auto& delta_f = ws.state_delta[u];

    if (target && ws.trace.g[u]) {
      const auto y = ws.trace.g[u]->output();
      ws.output_delta.resize(y.size());
      for (std::size_t k = 0; k < y.size(); ++k) ws.output_delta[k] = loss_scale * (y[k] - (*target)[k]);
      model.g().backward(g_params, *ws.trace.g[u], ws.output_delta, grad_g, ws.state_in);
      for (std::size_t k = 0; k < n_a; ++k) delta_f[k] += ws.state_in[k];
    }

    model.f().backward(f_params, ws.trace.f[u], delta_f, grad_f, ws.input_delta);
    const auto& slots = topo.children[u];
    for (std::size_t r = 0; r < slots.size(); ++r) {
      if (!slots[r]) continue;  // frontier state is a constant
      auto& child_delta = ws.state_delta[*slots[r]];
      const double* block = ws.input_delta.data() + r * n_a;
      for (std::size_t k = 0; k < n_a; ++k) child_delta[k] += block[k];
    }
  }
  return loss_scale * loss;
}

}  // namespace

GradientResult s_gradients(const RecursiveModel& model, std::span<const double> params,
                           const Dpag& pattern) {
  GradientResult out;
  out.gradient.resize(model.param_count());
  BptsWorkspace ws;
  out.loss = s_gradients(model, params, pattern, out.gradient, ws);
  return out;
}

GradientResult batch_gradient(const RecursiveModel& model, std::span<const double> params,
                              std::span<const Dpag> patterns, std::size_t threads) {
  if (patterns.empty()) throw Error("batch_gradient needs at least one pattern");
  GradientResult out;
  out.gradient.resize(model.param_count());
  const double loss_sum = ordered_sum(
      patterns.size(), threads, out.gradient, [&](std::size_t i, std::span<double> g) {
        BptsWorkspace ws;
        return s_gradients(model, params, patterns[i], g, ws);
      });
  const double inv = 1.0 / static_cast<double>(patterns.size());
  for (double& g : out.gradient) g *= inv;
  out.loss = loss_sum * inv;
  return out;
}

}  // namespace recnn
