#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "objectives.hpp"
#include "oracles.hpp"
#include "recnn/recnn.hpp"

using namespace recnn;
using recnn::testing::FixedGradients;
using recnn::testing::Quadratic;

TEST_CASE("moments of small streams") {
  MomentAccumulator acc(2);
  CHECK(acc.count() == 0);
  CHECK(acc.mean()[0] == 0.0);
  CHECK(acc.variance(0) == 0.0);

  acc.update(std::vector<double>{1.5, -2.0});
  CHECK(acc.mean()[0] == 1.5);
  CHECK(acc.mean()[1] == -2.0);
  CHECK(acc.variance(0) == 0.0);

  acc.reset();
  acc.update(std::vector<double>{3.0, -0.5});
  acc.update(std::vector<double>{-3.0, 0.5});
  CHECK(acc.mean()[0] == 0.0);
  CHECK(acc.variance(0) == 9.0);
  CHECK(acc.variance(1) == 0.25);

  MomentAccumulator s(1);
  for (double x : {1.0, 2.0, 3.0}) s.update(std::vector<double>{x});
  CHECK(s.mean()[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(s.variance(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(std::sqrt(s.variance(0)) == doctest::Approx(0.816497).epsilon(1e-6));

  CHECK_THROWS_AS(s.update(std::vector<double>{1.0, 2.0}), DimensionError);
}

TEST_CASE("streaming moments equal two-pass values") {
  std::mt19937_64 rng(19);
  std::uniform_int_distribution<std::size_t> len(1, 10000);
  std::uniform_real_distribution<double> centre(-5.0, 5.0);
  std::uniform_real_distribution<double> spread(0.01, 3.0);
  double worst = 0.0;
  for (int stream = 0; stream < 100; ++stream) {
    std::normal_distribution<double> draw(centre(rng), spread(rng));
    std::vector<double> xs(len(rng));
    MomentAccumulator acc(1);
    for (double& x : xs) {
      x = draw(rng);
      acc.update(std::span<const double>(&x, 1));
    }
    const auto want = oracle::two_pass(xs);
    worst = std::max(worst, oracle::relative_error(acc.mean()[0], want.mean, 1e-300));
    worst = std::max(worst, oracle::relative_error(acc.variance(0), want.variance, 1e-300));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("decayed moments track a shifting stream") {
  MomentAccumulator acc(1, 0.5);
  acc.update(std::vector<double>{4.0});
  CHECK(acc.mean()[0] == 4.0);
  CHECK(acc.variance(0) == 0.0);
  acc.update(std::vector<double>{0.0});
  CHECK(acc.mean()[0] == 2.0);
  CHECK(acc.variance(0) == 4.0);
  CHECK_THROWS_AS(MomentAccumulator(1, 1.5), ConfigError);
}

TEST_CASE("vets window example") {
  const FixedGradients obj({{1.0}, {2.0}, {3.0}});
  VetsConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.phi = 0.01;
  std::vector<double> w{0.0};
  const std::vector<std::size_t> window{0, 1, 2};
  vets_step(obj, w, window, cfg);
  const std::vector<double> xs{1.0, 2.0, 3.0};
  const auto moments = oracle::two_pass(xs);
  const double want = -0.1 * moments.mean / (std::sqrt(moments.variance) + 0.01);
  CHECK(std::abs(w[0] - want) <= 1e-15);
  CHECK(std::abs(w[0] - (-0.2419853)) <= 1e-6);
}

TEST_CASE("vets update edge cases") {
  VetsConfig cfg;
  cfg.learning_rate = 0.2;
  cfg.phi = 0.05;
  const std::vector<std::size_t> window{0, 1, 2};

  const FixedGradients same({{0.3, -1.0}, {0.3, -1.0}, {0.3, -1.0}});
  std::vector<double> w{1.0, 1.0};
  vets_step(same, w, window, cfg);
  CHECK(w[0] == doctest::Approx(1.0 - 0.2 * 0.3 / 0.05).epsilon(1e-14));
  CHECK(w[1] == doctest::Approx(1.0 + 0.2 * 1.0 / 0.05).epsilon(1e-14));

  for (double c : {1e-3, 1.0, 1e4}) {
    const FixedGradients cancel({{c}, {-c}});
    std::vector<double> v{0.5};
    vets_step(cancel, v, std::vector<std::size_t>{0, 1}, cfg);
    CHECK(v[0] == 0.5);
  }

  cfg.phi = 0.0;
  std::vector<double> u{1.0, 1.0};
  try {
    vets_step(same, u, window, cfg);
    FAIL("expected a degenerate variance error");
  } catch (const DegenerateVarianceError& e) {
    CHECK(e.coordinate() == 0);
  }

  cfg.window = 1;
  CHECK_THROWS_AS(cfg.check(), ConfigError);
  cfg.window = 0;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.check(), ConfigError);
}

TEST_CASE("vets step magnitude is bounded by eta mu over phi") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.2, 1.0);
  std::vector<std::vector<double>> grads(8, std::vector<double>(5));
  for (auto& v : grads) {
    for (double& x : v) x = g(rng);
  }
  const FixedGradients obj(grads);
  VetsConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.phi = 0.3;
  std::vector<double> w(5, 0.0);
  VetsOptimizer opt(5, cfg);
  const std::vector<std::size_t> window{0, 1, 2, 3, 4, 5, 6, 7};
  opt.step(obj, w, window);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(std::abs(w[i]) <= 0.1 * std::abs(opt.moments().mean()[i]) / 0.3);
  }
}

TEST_CASE("vets with zero epochs returns the start") {
  const FixedGradients obj({{1.0}, {2.0}});
  VetsConfig cfg;
  cfg.max_epochs = 0;
  const std::vector<double> w0{0.25};
  const auto t = vets_train(obj, w0, cfg);
  CHECK(t.epochs.empty());
  CHECK(t.final_params == w0);
}

TEST_CASE("vets is scale invariant at phi = 0") {
  const DatasetSchema schema{2, 1, 2, SupervisionMode::kSupersourceOnly};
  const RecursiveModel model(make_model_config(schema, 3, {}, {2}));
  std::mt19937_64 rng(3);
  std::vector<Dpag> data;
  for (int i = 0; i < 12; ++i) data.push_back(oracle::random_pattern(schema, {}, rng));
  const auto w0 = model.init_params(1);

  VetsConfig cfg;
  cfg.phi = 0.0;
  cfg.window = 4;
  cfg.max_epochs = 3;
  cfg.seed = 7;
  const RecursiveObjective plain(model, data, 1.0);
  const RecursiveObjective scaled(model, data, 10.0);
  const auto a = vets_train(plain, w0, cfg);
  const auto b = vets_train(scaled, w0, cfg);
  REQUIRE(a.params_history.size() == 3);
  double worst = 0.0;
  for (std::size_t e = 0; e < 3; ++e) {
    for (std::size_t i = 0; i < w0.size(); ++i) {
      worst = std::max(worst, std::abs(a.params_history[e][i] - b.params_history[e][i]));
    }
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("vets with unit windows is online descent at rate eta over phi") {
  const Quadratic obj(2, {2.0, 0.5, 0.5, 1.0}, {{1.0, -1.0}, {0.0, 2.0}, {-1.0, 0.5}});
  VetsConfig v;
  v.learning_rate = 0.001;
  v.phi = 0.1;
  v.window = 1;
  v.max_epochs = 5;
  v.seed = 9;
  BptsConfig b;
  b.learning_rate = v.learning_rate / v.phi;
  b.mode = BptsMode::kOnline;
  b.max_epochs = 5;
  b.seed = 9;
  const std::vector<double> w0{0.3, 0.7};
  const auto tv = vets_train(obj, w0, v);
  const auto tb = bpts_train(obj, w0, b);
  CHECK(tv.epochs.front().windows == 3);
  for (std::size_t e = 0; e < 5; ++e) {
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(oracle::relative_error(tv.params_history[e][i], tb.params_history[e][i], 1e-12) <= 1e-12);
    }
  }

  VetsConfig batch = v;
  batch.window = 0;
  CHECK(vets_train(obj, w0, batch).epochs.front().windows == 1);
  VetsConfig partial = v;
  partial.window = 2;
  CHECK(vets_train(obj, w0, partial).epochs.front().windows == 2);
}

TEST_CASE("bpts descent") {
  const FixedGradients zero({{0.0, 0.0}, {0.0, 0.0}});
  BptsConfig cfg;
  cfg.max_epochs = 3;
  const std::vector<double> w0{1.0, -2.0};
  CHECK(bpts_train(zero, w0, cfg).final_params == w0);

  const double h = 3.0;
  const Quadratic quad(1, {h}, {{0.0}});
  cfg.learning_rate = 0.1;
  const auto t = bpts_train(quad, std::vector<double>{2.0}, cfg);
  double w = 2.0;
  for (std::size_t e = 0; e < 3; ++e) {
    w *= 1.0 - 0.1 * h;
    CHECK(t.params_history[e][0] == doctest::Approx(w).epsilon(1e-15));
  }
}

TEST_CASE("bpts batch on a duplicated pattern equals online") {
  const DatasetSchema schema{2, 1, 2, SupervisionMode::kSupersourceOnly};
  const RecursiveModel model(make_model_config(schema, 3, {}, {}));
  std::mt19937_64 rng(1);
  const Dpag p = oracle::random_pattern(schema, {}, rng);
  const std::vector<Dpag> twice{p, p};
  const std::vector<Dpag> once{p};
  const auto w0 = model.init_params(2);
  BptsConfig batch;
  batch.max_epochs = 5;
  BptsConfig online = batch;
  online.mode = BptsMode::kOnline;
  const auto a = bpts_train(model, w0, twice, batch);
  const auto b = bpts_train(model, w0, once, online);
  for (std::size_t e = 0; e < 5; ++e) CHECK(a.params_history[e] == b.params_history[e]);
}

TEST_CASE("qnts on a two-dimensional quadratic") {
  const std::vector<double> a{3.0, 1.0, 1.0, 2.0};
  const Quadratic obj(2, a, {{0.0, 0.0}});
  QntsConfig cfg;
  cfg.max_epochs = 10;
  cfg.grad_tol = 1e-12;
  QntsOptimizer opt(2, cfg);
  const std::vector<double> w0{1.0, 1.0};
  const auto t = opt.train(obj, w0);

  CHECK(t.epochs.size() <= 10);
  CHECK(std::abs(t.final_params[0]) <= 1e-8);
  CHECK(std::abs(t.final_params[1]) <= 1e-8);

  // A^-1 = [2 -1; -1 3] / 5
  const std::vector<double> inverse{0.4, -0.2, -0.2, 0.6};
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(opt.inverse_hessian()[i] - inverse[i]) <= 1e-4);

  // First step runs along -g = -A w0 = (-4, -3).
  const auto& w1 = t.params_history.front();
  const double dx = w1[0] - 1.0;
  const double dy = w1[1] - 1.0;
  CHECK(dx < 0.0);
  CHECK(dx * -3.0 - dy * -4.0 == doctest::Approx(0.0));
}

TEST_CASE("qnts stops at once on a zero gradient") {
  const Quadratic obj(2, {1.0, 0.0, 0.0, 1.0}, {{0.5, 0.5}});
  const std::vector<double> w0{0.5, 0.5};
  const auto t = qnts_train(obj, w0, QntsConfig{});
  CHECK(t.epochs.empty());
  CHECK(t.final_params == w0);
  REQUIRE(!t.events.empty());
  CHECK(t.events.front().find("converged") != std::string::npos);
}

TEST_CASE("qnts records line search failures") {
  // A linear loss passes the Armijo test at the first trial step.
  const FixedGradients linear(std::vector<std::vector<double>>{{1.0}});
  QntsConfig cfg;
  cfg.max_epochs = 1;
  cfg.armijo = 0.9999;
  cfg.max_backtracks = 0;
  cfg.initial_step = 1.0;
  const std::vector<double> w0{0.0};
  const auto t = qnts_train(linear, w0, cfg);
  CHECK(t.final_params[0] < 0.0);

  // Here every trial overshoots and no backtracking is allowed.
  const Quadratic steep(1, {1e6}, {{0.0}});
  const auto u = qnts_train(steep, std::vector<double>{1.0}, cfg);
  REQUIRE(!u.events.empty());
  CHECK(u.events.front().find("line search failed") != std::string::npos);
  CHECK(u.final_params[0] == 1.0);
}

TEST_CASE("qnts memory cap and footprint") {
  QntsConfig cfg;
  cfg.max_params = 100;
  CHECK_THROWS_AS(QntsOptimizer(101, cfg), MemoryCapError);
  const QntsOptimizer opt(100, cfg);
  CHECK(opt.aux_bytes() == (100 * 100 + 6 * 100) * sizeof(double));
  const VetsOptimizer vets(100, VetsConfig{});
  CHECK(vets.aux_bytes() == 3 * 100 * sizeof(double));
}

TEST_CASE("trainers are deterministic") {
  const DatasetSchema schema{2, 1, 2, SupervisionMode::kSupersourceOnly};
  const RecursiveModel model(make_model_config(schema, 3, {}, {2}));
  std::mt19937_64 rng(8);
  std::vector<Dpag> data;
  for (int i = 0; i < 9; ++i) data.push_back(oracle::random_pattern(schema, {}, rng));
  const auto w0 = model.init_params(3);

  VetsConfig v;
  v.window = 3;
  v.max_epochs = 3;
  v.seed = 5;
  CHECK(vets_train(model, w0, data, v).params_history == vets_train(model, w0, data, v).params_history);
  VetsConfig vt = v;
  vt.threads = 3;
  CHECK(vets_train(model, w0, data, vt).params_history == vets_train(model, w0, data, v).params_history);

  BptsConfig b;
  b.mode = BptsMode::kOnline;
  b.max_epochs = 3;
  CHECK(bpts_train(model, w0, data, b).params_history == bpts_train(model, w0, data, b).params_history);
  BptsConfig bt = b;
  bt.mode = BptsMode::kBatch;
  bt.threads = 4;
  BptsConfig bs = bt;
  bs.threads = 1;
  CHECK(bpts_train(model, w0, data, bt).params_history == bpts_train(model, w0, data, bs).params_history);

  QntsConfig q;
  q.max_epochs = 3;
  CHECK(qnts_train(model, w0, data, q).params_history == qnts_train(model, w0, data, q).params_history);
}

TEST_CASE("trajectory csv layout") {
  const Quadratic obj(1, {1.0}, {{0.0}});
  BptsConfig cfg;
  cfg.max_epochs = 2;
  const auto t = bpts_train(obj, std::vector<double>{1.0}, cfg);
  std::ostringstream out;
  write_trajectory_csv(t, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch,window,mean_loss,grad_norm,update_norm,wall_ms,aux_bytes");
  std::getline(in, line);
  CHECK(line.rfind("0,0,0.5,", 0) == 0);
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 2);
  CHECK(t.losses().size() == 3);
}
