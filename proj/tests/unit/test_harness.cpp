#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "objectives.hpp"
#include "oracles.hpp"
#include "recnn/recnn.hpp"

using namespace recnn;

namespace {

Node make_node(NodeId id, std::vector<double> label) {
  Node n;
  n.id = id;
  n.label = std::move(label);
  n.children.assign(1, std::nullopt);
  return n;
}

// Linear chain model: a(v) = rho R a(child) + B I(v), y = c . a.
struct LinearChain {
  RecursiveModel model;
  ParamVector params;
};

LinearChain linear_chain(double rho) {
  const DatasetSchema schema{1, 1, 1, SupervisionMode::kSupersourceOnly};
  LinearChain lc{RecursiveModel(make_model_config(schema, 2, {}, {}, Activation::kLinear, Activation::kLinear)), {}};
  lc.params.assign(lc.model.param_count(), 0.0);
  const Cell& f = lc.model.f();
  const double angle = 0.7;
  lc.params[f.weight_index(0, 0, 0)] = rho * std::cos(angle);
  lc.params[f.weight_index(0, 0, 1)] = -rho * std::sin(angle);
  lc.params[f.weight_index(0, 1, 0)] = rho * std::sin(angle);
  lc.params[f.weight_index(0, 1, 1)] = rho * std::cos(angle);
  lc.params[f.weight_index(0, 0, 2)] = 0.8;
  lc.params[f.weight_index(0, 1, 2)] = -0.5;
  const std::size_t off = lc.model.f_param_count();
  lc.params[off + lc.model.g().weight_index(0, 0, 0)] = 1.0;
  lc.params[off + lc.model.g().weight_index(0, 0, 1)] = 0.5;
  return lc;
}

std::vector<Dpag> chains(std::size_t count, std::size_t depth, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Dpag> out;
  for (std::size_t c = 0; c < count; ++c) {
    Dpag p;
    for (std::size_t d = 0; d < depth; ++d) {
      p.nodes.push_back(make_node(static_cast<NodeId>(d), {u(rng)}));
      if (d > 0) p.nodes[d - 1].children[0] = static_cast<NodeId>(d);
    }
    p.nodes[0].target = std::vector<double>{2.0 * u(rng)};
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

TEST_CASE("normalization example") {
  const CurveTable raw{{{5, 3, 1}}, {{5, 4, 2}}};
  const auto set = normalize_curves({"a", "b"}, raw);
  CHECK(set.normalized[0][0] == std::vector<double>{1.0, 0.5, 0.0});
  CHECK(set.normalized[1][0] == std::vector<double>{1.0, 0.75, 0.25});
  CHECK(set.averaged[0] == std::vector<double>{1.0, 0.5, 0.0});
  CHECK(set.warnings.empty());
}

TEST_CASE("normalization corner cases") {
  const auto flat = normalize_curves({"a", "b"}, {{{2, 2, 2}}, {{2, 2, 2}}});
  CHECK(flat.normalized[0][0] == std::vector<double>{0.0, 0.0, 0.0});
  CHECK(flat.normalized[1][0] == std::vector<double>{0.0, 0.0, 0.0});

  const auto single = normalize_curves({"a"}, {{{9, 7, 4, 1}}});
  CHECK(single.normalized[0][0].front() == 1.0);
  CHECK(single.normalized[0][0].back() == 0.0);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  const auto broken = normalize_curves({"a", "b"}, {{{5, 3, 1}, {4, 2, 1}}, {{5, nan, 2}, {4, 3, 2}}});
  CHECK(broken.normalized[1][0].empty());
  CHECK(broken.warnings.size() == 1);
  // Seed 0 now only has "a"; b averages over seed 1 alone.
  CHECK(broken.normalized[0][0] == std::vector<double>{1.0, 0.5, 0.0});
  CHECK(broken.averaged[1] == std::vector<double>{1.0, 2.0 / 3.0, 1.0 / 3.0});

  CHECK_THROWS_AS(normalize_curves({"a"}, {{{1, 2}, {1}}}), DimensionError);
}

TEST_CASE("normalization is idempotent and affine invariant") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  CurveTable raw(3, std::vector<std::vector<double>>(4, std::vector<double>(6)));
  for (auto& alg : raw) {
    for (auto& c : alg) {
      for (double& x : c) x = u(rng);
      std::sort(c.rbegin(), c.rend());
    }
  }
  const auto once = normalize_curves({"a", "b", "c"}, raw);
  const auto twice = normalize_curves({"a", "b", "c"}, once.normalized);
  CurveTable moved = raw;
  for (auto& alg : moved) {
    for (std::size_t s = 0; s < alg.size(); ++s) {
      for (double& x : alg[s]) x = 3.5 * x + static_cast<double>(s) - 2.0;
    }
  }
  const auto affine = normalize_curves({"a", "b", "c"}, moved);
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t s = 0; s < 4; ++s) {
      for (std::size_t e = 0; e < 6; ++e) {
        CHECK(twice.normalized[a][s][e] == doctest::Approx(once.normalized[a][s][e]).epsilon(1e-12));
        CHECK(affine.normalized[a][s][e] == doctest::Approx(once.normalized[a][s][e]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("expected error under weight noise") {
  const auto r = expected_error_check({1.0, 1.0}, 0.01, 100000, 1);
  CHECK(r.predicted == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(std::abs(r.empirical - r.predicted) <= 3.0 * r.standard_error);
  CHECK(r.standard_error > 0.0);

  const auto quiet = expected_error_check({1.0, 2.0}, 0.0, 1000);
  CHECK(quiet.empirical == 0.0);
  CHECK(quiet.predicted == 0.0);
  const auto flat = expected_error_check({0.0, 0.0}, 0.5, 1000);
  CHECK(flat.empirical == 0.0);
  CHECK(flat.predicted == 0.0);
  CHECK(flat.relative_gap == 0.0);

  // The gap narrows as the sample count grows.
  double small_gap = 0.0;
  double large_gap = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    small_gap += expected_error_check({2.0, 0.5, 1.0}, 0.04, 100, s).relative_gap;
    large_gap += expected_error_check({2.0, 0.5, 1.0}, 0.04, 10000, s).relative_gap;
  }
  CHECK(large_gap < small_gap);
}

TEST_CASE("vanishing diagnostic on depth-1 chains") {
  const auto lc = linear_chain(0.5);
  const auto data = chains(5, 1, 2);
  const auto report = vanishing_diagnostic(lc.model, lc.params, data);
  REQUIRE(report.rows.size() == 1);
  double mean = 0.0;
  for (const auto& p : data) {
    BptsWorkspace ws;
    std::vector<double> g(lc.model.param_count());
    s_gradients(lc.model, lc.params, p, g, ws);
    mean += std::hypot(ws.state_delta[0][0], ws.state_delta[0][1]) / 5.0;
  }
  CHECK(report.rows[0].depth == 1);
  CHECK(report.rows[0].mean_delta_norm == doctest::Approx(mean).epsilon(1e-14));
}

TEST_CASE("delta norm decays geometrically on contractive linear chains") {
  for (double rho : {0.5, 0.8}) {
    const auto lc = linear_chain(rho);
    const auto report = vanishing_diagnostic(lc.model, lc.params, chains(10, 12, 3));
    REQUIRE(report.rows.size() == 12);
    for (const auto& row : report.rows) {
      const double want = std::pow(rho, static_cast<double>(row.depth - 1));
      CHECK(row.mean_delta_norm / report.rows[0].mean_delta_norm == doctest::Approx(want).epsilon(0.10));
    }
  }
}

TEST_CASE("loss scaling moves raw deltas but not vets steps") {
  const auto lc = linear_chain(0.5);
  const auto data = chains(10, 8, 5);
  const auto base = vanishing_diagnostic(lc.model, lc.params, data, 0.05, 0.0, 1.0);
  const auto scaled = vanishing_diagnostic(lc.model, lc.params, data, 0.05, 0.0, 10.0);
  REQUIRE(base.rows.size() == scaled.rows.size());
  for (std::size_t i = 0; i < base.rows.size(); ++i) {
    CHECK(scaled.rows[i].mean_delta_norm == doctest::Approx(10.0 * base.rows[i].mean_delta_norm).epsilon(1e-12));
    CHECK(scaled.rows[i].mean_vets_step == doctest::Approx(base.rows[i].mean_vets_step).epsilon(1e-10));
  }
  // Raw contributions shrink with depth while vets steps stay put.
  CHECK(base.rows.back().mean_contribution_norm < 0.05 * base.rows.front().mean_contribution_norm);
  CHECK(base.rows.back().mean_vets_step > 0.2 * base.rows.front().mean_vets_step);

  std::ostringstream csv;
  write_vanishing_csv(base, csv);
  CHECK(csv.str().rfind("depth,nodes,mean_delta_norm,mean_contribution_norm,mean_vets_step\n", 0) == 0);
}

TEST_CASE("architecture notation") {
  const auto a = parse_architecture("23x160x1");
  CHECK(a.state_dim == 23);
  CHECK(a.g_hidden == std::vector<std::size_t>{160});
  CHECK(a.f_hidden.empty());
  const DatasetSchema schema{1, 1, 1, SupervisionMode::kSupersourceOnly};
  const auto cfg = make_model_config(a, schema);
  CHECK(cfg.f_spec.in_dim == 24);
  CHECK(cfg.f_spec.out_dim == 23);
  CHECK(cfg.g_spec.out_dim == 1);
  CHECK(parse_architecture("60x80x1").state_dim == 60);
  CHECK_THROWS_AS(parse_architecture("23x160"), ConfigError);
  CHECK_THROWS_AS(parse_architecture("23x160x2"), ConfigError);
  CHECK_THROWS_AS(parse_architecture("axbx1"), ConfigError);
}

TEST_CASE("experiment with zero epochs holds only the shared initial loss") {
  ExperimentSpec spec;
  spec.task.count = 20;
  spec.task.max_depth = 6;
  spec.architecture = parse_architecture("4x6x1");
  spec.algorithms = {AlgorithmRun{Algorithm::kBpts, {}, {}, {}}, AlgorithmRun{Algorithm::kVets, {}, {}, {}},
                     AlgorithmRun{Algorithm::kQnts, {}, {}, {}}};
  spec.simulations = 1;
  spec.epochs = 0;
  const auto report = run_experiment(spec);
  REQUIRE(report.curves.raw.size() == 3);
  for (const auto& alg : report.curves.raw) {
    REQUIRE(alg[0].size() == 1);
    CHECK(alg[0][0] == report.curves.raw[0][0][0]);
  }
  CHECK(report.resources.size() == 3);
}

TEST_CASE("experiments rerun bitwise") {
  ExperimentSpec spec;
  spec.task.count = 30;
  spec.task.min_depth = 2;
  spec.task.max_depth = 6;
  spec.architecture = parse_architecture("4x6x1");
  AlgorithmRun vets{Algorithm::kVets, {}, {}, {}};
  vets.vets.window = 5;
  spec.algorithms = {AlgorithmRun{Algorithm::kBpts, {}, {}, {}}, vets};
  spec.simulations = 2;
  spec.epochs = 3;
  spec.threads = 2;
  const auto a = run_experiment(spec);
  const auto b = run_experiment(spec);
  CHECK(a.curves.raw == b.curves.raw);
  CHECK(a.curves.averaged == b.curves.averaged);
  for (std::size_t i = 0; i < a.runs.size(); ++i) {
    CHECK(a.runs[i].trajectory.final_params == b.runs[i].trajectory.final_params);
  }
  // Both algorithms start each simulation from the same weights.
  CHECK(a.curves.raw[0][0][0] == a.curves.raw[1][0][0]);
  CHECK(a.curves.raw[0][1][0] == a.curves.raw[1][1][0]);
  CHECK(a.curves.raw[0][0][0] != a.curves.raw[0][1][0]);

  std::ostringstream summary, resources, svg;
  write_summary_csv(a.curves, summary);
  write_resources_csv(a.resources, resources);
  write_curves_svg(a.curves, svg);
  CHECK(summary.str().rfind("algorithm,epoch,mean_normalized_error,std_normalized_error,simulations\n", 0) == 0);
  CHECK(svg.str().find("<svg") != std::string::npos);
}

TEST_CASE("failing runs are recorded without stopping the others") {
  ExperimentSpec spec;
  spec.task.count = 10;
  spec.task.max_depth = 4;
  spec.architecture = parse_architecture("4x6x1");
  AlgorithmRun qnts{Algorithm::kQnts, {}, {}, {}};
  qnts.qnts.max_params = 10;
  spec.algorithms = {AlgorithmRun{Algorithm::kBpts, {}, {}, {}}, qnts};
  spec.simulations = 1;
  spec.epochs = 2;
  const auto report = run_experiment(spec);
  CHECK(!report.runs[0].error);
  REQUIRE(report.runs[1].error);
  CHECK(report.curves.averaged[0].size() == 3);
  CHECK(report.curves.averaged[1].empty());
  CHECK(!report.curves.warnings.empty());
}

TEST_CASE("gradient correlation diagnostic") {
  // Two coordinates that move in lockstep, one independent.
  const recnn::testing::FixedGradients obj({{1, 2, 0.5}, {2, 4, -0.5}, {3, 6, 0.5}, {4, 8, -0.5}});
  const auto r = gradient_correlation(obj, std::vector<double>(3, 0.0));
  CHECK(r.coordinates == 3);
  CHECK(r.max_abs_correlation == doctest::Approx(1.0));
}

TEST_CASE("scaling measurements and slopes") {
  CHECK(loglog_slope({1, 10, 100}, {3, 30, 300}) == doctest::Approx(1.0));
  CHECK(loglog_slope({1, 2, 4}, {1, 4, 16}) == doctest::Approx(2.0));
  const auto samples = measure_scaling({parse_architecture("3x4x1"), parse_architecture("6x8x1")}, {4, 8}, 4, 1);
  REQUIRE(samples.size() == 4);
  for (const auto& s : samples) {
    CHECK(s.vets_aux_bytes == 3 * s.param_count * sizeof(double));
    CHECK(s.qnts_aux_bytes == (s.param_count * s.param_count + 6 * s.param_count) * sizeof(double));
    CHECK(s.vets_epoch_ms >= 0.0);
  }
}
