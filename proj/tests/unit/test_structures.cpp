#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "recnn/recnn.hpp"

using namespace recnn;

namespace {

Node leaf(NodeId id, std::size_t o, std::vector<double> label = {0.5}) {
  Node n;
  n.id = id;
  n.label = std::move(label);
  n.children.assign(o, std::nullopt);
  return n;
}

Dpag chain3() {
  // s -> b -> c with ids 5, 7, 2
  Dpag p;
  p.supersource = 5;
  p.nodes = {leaf(5, 1), leaf(7, 1), leaf(2, 1)};
  p.nodes[0].children[0] = 7;
  p.nodes[1].children[0] = 2;
  p.nodes[0].target = std::vector<double>{1.0};
  return p;
}

bool has_kind(const std::vector<Violation>& v, ViolationKind kind) {
  return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.kind == kind; });
}

bool reachable_all(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::vector<bool> seen(n, false);
  seen[0] = true;
  for (std::size_t round = 0; round < n; ++round) {
    for (const auto& [a, b] : edges) {
      if (seen[a]) seen[b] = true;
    }
  }
  return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

}  // namespace

TEST_CASE("validate minimal single node") {
  const DatasetSchema schema{1, 1, 2, SupervisionMode::kSupersourceOnly};
  Dpag p;
  p.nodes = {leaf(0, 2)};
  p.nodes[0].target = std::vector<double>{1.0};
  CHECK(validate(p, schema).empty());
}

TEST_CASE("validate two-node cycle") {
  const DatasetSchema schema{1, 1, 1, SupervisionMode::kSupersourceOnly};
  Dpag p;
  p.nodes = {leaf(0, 1), leaf(1, 1)};
  p.nodes[0].children[0] = 1;
  p.nodes[1].children[0] = 0;
  p.nodes[0].target = std::vector<double>{1.0};
  const auto v = validate(p, schema);
  CHECK(has_kind(v, ViolationKind::kCycle));
  CHECK(to_string(ViolationKind::kCycle) == "cycle");
}

TEST_CASE("validate label dimension") {
  const DatasetSchema schema{2, 1, 1, SupervisionMode::kSupersourceOnly};
  Dpag p;
  p.nodes = {leaf(0, 1, {1.0, 2.0, 3.0})};
  p.nodes[0].target = std::vector<double>{1.0};
  const auto v = validate(p, schema);
  REQUIRE(v.size() == 1);
  CHECK(v[0].kind == ViolationKind::kLabelDimension);
  CHECK(v[0].node == NodeId{0});
  CHECK(to_string(v[0].kind) == "label dimension");
}

TEST_CASE("validate reports every violation") {
  const DatasetSchema schema{1, 1, 2, SupervisionMode::kSupersourceOnly};
  Dpag p;
  p.supersource = 0;
  p.nodes = {leaf(0, 2), leaf(1, 1), leaf(2, 2)};
  p.nodes[0].children[0] = 9;                       // dangling
  p.nodes[2].children[1] = 2;                       // self loop
  p.nodes[2].target = std::vector<double>{1, 2};    // wrong dim, wrong node
  const auto v = validate(p, schema);
  CHECK(has_kind(v, ViolationKind::kDanglingChild));
  CHECK(has_kind(v, ViolationKind::kSelfLoop));
  CHECK(has_kind(v, ViolationKind::kChildCount));
  CHECK(has_kind(v, ViolationKind::kTargetDimension));
  CHECK(has_kind(v, ViolationKind::kSupervision));

  Dpag dup;
  dup.nodes = {leaf(0, 2), leaf(0, 2)};
  dup.nodes[0].target = std::vector<double>{1.0};
  CHECK(has_kind(validate(dup, schema), ViolationKind::kDuplicateId));

  Dpag orphan;
  orphan.nodes = {leaf(0, 2), leaf(1, 2)};
  orphan.nodes[0].target = std::vector<double>{1.0};
  CHECK(has_kind(validate(orphan, schema), ViolationKind::kUnreachable));

  Dpag untargeted;
  untargeted.nodes = {leaf(0, 2)};
  CHECK(has_kind(validate(untargeted, schema), ViolationKind::kNoTarget));

  Dpag lost;
  lost.supersource = 4;
  lost.nodes = {leaf(0, 2)};
  lost.nodes[0].target = std::vector<double>{1.0};
  CHECK(has_kind(validate(lost, schema), ViolationKind::kMissingSupersource));
}

TEST_CASE("per-node supervision allows targets anywhere") {
  const DatasetSchema schema{1, 1, 1, SupervisionMode::kPerNode};
  Dpag p = chain3();
  p.nodes[0].target.reset();
  p.nodes[2].target = std::vector<double>{0.0};
  CHECK(validate(p, schema).empty());
}

TEST_CASE("orderings on trivial patterns") {
  Dpag single;
  single.supersource = 3;
  single.nodes = {leaf(3, 2)};
  CHECK(reverse_topological_order(single) == std::vector<NodeId>{3});
  CHECK(topological_order(single) == std::vector<NodeId>{3});

  const Dpag chain = chain3();
  CHECK(reverse_topological_order(chain) == std::vector<NodeId>{2, 7, 5});
  CHECK(topological_order(chain) == std::vector<NodeId>{5, 7, 2});
}

TEST_CASE("orderings break ties by ascending id") {
  Dpag p;
  p.supersource = 0;
  p.nodes = {leaf(0, 3), leaf(9, 3), leaf(4, 3), leaf(6, 3)};
  p.nodes[0].children = {9, 4, 6};
  CHECK(reverse_topological_order(p) == std::vector<NodeId>{4, 6, 9, 0});
  CHECK(topological_order(p) == std::vector<NodeId>{0, 4, 6, 9});
}

TEST_CASE("orderings reject cycles and dangling ids") {
  Dpag p;
  p.nodes = {leaf(0, 1), leaf(1, 1)};
  p.nodes[0].children[0] = 1;
  p.nodes[1].children[0] = 0;
  CHECK_THROWS_AS(reverse_topological_order(p), CycleError);
  CHECK_THROWS_AS(topological_order(p), CycleError);
  p.nodes[1].children[0] = 8;
  CHECK_THROWS_AS(topological_order(p), SchemaError);
}

TEST_CASE("orderings on random 50-node DAGs") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Dpag p = oracle::random_dag(50, 1 + trial % 3, rng);
    const auto rev = reverse_topological_order(p);
    const auto fwd = topological_order(p);
    CHECK(oracle::children_first(p, rev));
    CHECK(oracle::parents_first(p, fwd));
    std::vector<NodeId> flipped(rev.rbegin(), rev.rend());
    CHECK(oracle::parents_first(p, flipped));
    std::vector<NodeId> back(fwd.rbegin(), fwd.rend());
    CHECK(oracle::children_first(p, back));
    CHECK(rev.back() == p.supersource);
    CHECK(fwd.front() == p.supersource);
  }
}

TEST_CASE("validate and orderings agree with brute force on small digraphs") {
  // Node ids 0..n-1, slot j holds the edge to node j. Self loops are
  // enumerated up to 4 nodes; at 5 nodes only loop-free digraphs.
  const DatasetSchema base{1, 1, 1, SupervisionMode::kSupersourceOnly};
  std::size_t graphs = 0;
  for (std::size_t n = 1; n <= 5; ++n) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        if (a != b || n < 5) pairs.emplace_back(a, b);
      }
    }
    DatasetSchema schema = base;
    schema.max_out_degree = n;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << pairs.size()); ++mask) {
      Dpag p;
      p.supersource = 0;
      for (std::size_t v = 0; v < n; ++v) p.nodes.push_back(leaf(static_cast<NodeId>(v), n));
      p.nodes[0].target = std::vector<double>{1.0};
      std::vector<std::pair<std::size_t, std::size_t>> edges;
      for (std::size_t k = 0; k < pairs.size(); ++k) {
        if ((mask >> k) & 1U) {
          edges.push_back(pairs[k]);
          p.nodes[pairs[k].first].children[pairs[k].second] = static_cast<NodeId>(pairs[k].second);
        }
      }
      const bool cyclic = oracle::has_cycle_bruteforce(n, edges);
      const auto violations = validate(p, schema);
      const bool reports_cycle =
          has_kind(violations, ViolationKind::kCycle) || has_kind(violations, ViolationKind::kSelfLoop);
      REQUIRE(reports_cycle == cyclic);
      REQUIRE(violations.empty() == (!cyclic && reachable_all(n, edges)));

      bool ordered = true;
      try {
        const auto rev = reverse_topological_order(p);
        const auto fwd = topological_order(p);
        REQUIRE(oracle::children_first(p, rev));
        REQUIRE(oracle::parents_first(p, fwd));
      } catch (const CycleError&) {
        ordered = false;
      }
      REQUIRE(ordered == !cyclic);
      ++graphs;
    }
  }
  // 2 + 2^4 + 2^9 + 2^16 + 2^20
  CHECK(graphs == 2 + 16 + 512 + 65536 + 1048576);
}

TEST_CASE("dataset round trip") {
  SUBCASE("empty pattern list") {
    Dataset d;
    d.schema = {3, 2, 2, SupervisionMode::kPerNode};
    const std::string text = dump_dataset(d);
    CHECK(text.find("\"schema\"") != std::string::npos);
    CHECK(parse_dataset(text) == d);
  }
  SUBCASE("one node") {
    Dataset d;
    d.schema = {1, 1, 2, SupervisionMode::kSupersourceOnly};
    Dpag p;
    p.supersource = 4;
    p.nodes = {leaf(4, 2, {0.1})};
    p.nodes[0].target = std::vector<double>{-1.0};
    d.patterns.push_back(p);
    CHECK(parse_dataset(dump_dataset(d)) == d);
  }
  SUBCASE("100 generated patterns through a file") {
    Dataset d;
    d.schema = {3, 2, 3, SupervisionMode::kPerNode};
    std::mt19937_64 rng(5);
    for (int i = 0; i < 100; ++i) {
      oracle::PatternShape shape;
      shape.nodes = 1 + static_cast<std::size_t>(i % 17);
      shape.tree = i % 2 == 0;
      d.patterns.push_back(oracle::random_pattern(d.schema, shape, rng));
    }
    const auto path = std::filesystem::temp_directory_path() / "recnn_roundtrip_dataset.json";
    save_dataset(d, path);
    CHECK(load_dataset(path) == d);
    std::filesystem::remove(path);
  }
}

TEST_CASE("dataset parse errors carry context") {
  auto message = [](const std::string& text) -> std::string {
    try {
      parse_dataset(text);
    } catch (const Error& e) {
      return e.what();
    }
    return {};
  };
  const std::string schema = R"({"n_I":1,"n_y":1,"o":1,"supervision_mode":"supersource-only"})";

  CHECK_THROWS_AS(parse_dataset("{\n  \"schema\": ,\n}"), ParseError);
  CHECK(message("{\n  \"schema\": ,\n}").find("line 2") != std::string::npos);

  const std::string bad_label = R"({"schema":)" + schema +
                                R"(,"patterns":[{"supersource":0,"nodes":[{"id":0,"label":["x"],"children":[null],"target":[1]}]}]})";
  CHECK_THROWS_AS(parse_dataset(bad_label), ParseError);
  CHECK(message(bad_label).find("patterns[0].nodes[0].label") != std::string::npos);

  const std::string extra_key = R"({"schema":)" + schema + R"(,"patterns":[],"bogus":1})";
  CHECK_THROWS_AS(parse_dataset(extra_key), ParseError);

  const std::string inconsistent = R"({"schema":)" + schema +
                                   R"(,"patterns":[{"supersource":0,"nodes":[{"id":0,"label":[1],"children":[null],"target":[1]}]},)" +
                                   R"({"supersource":0,"nodes":[{"id":0,"label":[1,2],"children":[null],"target":[1]}]}]})";
  CHECK_THROWS_AS(parse_dataset(inconsistent), SchemaError);
  CHECK(message(inconsistent).find("pattern 1") != std::string::npos);

  CHECK_THROWS_AS(load_dataset("/nonexistent/recnn.json"), IoError);
}
