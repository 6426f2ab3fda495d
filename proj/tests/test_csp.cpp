#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <bit>
#include <string>
#include <vector>

#include "pcpkit/csp.hpp"
#include "pcpkit/errors.hpp"
#include "pcpkit/rng.hpp"
#include "random_csp.hpp"

using namespace pcpkit;
using csp::Assignment;
using csp::CspEdge;
using csp::CspInstance;
using csp::CspVertex;
using csp::MatchingInstance;

namespace {

std::vector<CspVertex> binary_vertices(std::size_t n) {
  std::vector<CspVertex> vs;
  for (std::size_t i = 0; i < n; ++i)
    vs.push_back({"v" + std::to_string(i), 2});
  return vs;
}

// Independent value oracle: walks every assignment explicitly and scores
// each one through assignment_value, which looks tuples up in the sorted
// sat lists rather than in dense tables.
Rational oracle_exact(const CspInstance& inst) {
  Assignment a;
  a.labels.assign(inst.vertices.size(), 0);
  Rational best = csp::assignment_value(inst, a);
  while (true) {
    std::size_t v = 0;
    for (; v < inst.vertices.size(); ++v) {
      if (++a.labels[v] < inst.vertices[v].alphabet) break;
      a.labels[v] = 0;
    }
    if (v == inst.vertices.size()) break;
    best = std::max(best, csp::assignment_value(inst, a));
  }
  return best;
}

CspEdge all_tuples_edge(const CspInstance& shape,
                        std::vector<std::size_t> verts, Rational weight) {
  CspEdge e;
  e.verts = std::move(verts);
  e.weight = weight;
  std::vector<std::size_t> tuple(e.verts.size(), 0);
  while (true) {
    e.sat.push_back(tuple);
    std::size_t i = 0;
    for (; i < e.verts.size(); ++i) {
      if (++tuple[i] < shape.vertices[e.verts[i]].alphabet) break;
      tuple[i] = 0;
    }
    if (i == e.verts.size()) break;
  }
  return e;
}

// Two unit edges on the same binary pair, one demanding equal labels and
// one demanding unequal labels; exactly one is satisfiable at a time.
CspInstance equal_unequal_pair() {
  CspEdge equal;
  equal.verts = {0, 1};
  equal.weight = 1;
  equal.sat = {{0, 0}, {1, 1}};
  CspEdge unequal;
  unequal.verts = {0, 1};
  unequal.weight = 1;
  unequal.sat = {{0, 1}, {1, 0}};
  return CspInstance(2, binary_vertices(2), {}, {equal, unequal});
}

}  // namespace

TEST_CASE("instance validation rejects malformed inputs") {
  const auto verts = binary_vertices(3);
  CspEdge ok;
  ok.verts = {0, 1};
  ok.weight = 1;
  ok.sat = {{0, 0}};

  CHECK_THROWS_AS(CspInstance(0, verts, {}, {}), domain_error);
  CHECK_THROWS_AS(CspInstance(2, {{"a", 2}, {"a", 2}}, {}, {ok}),
                  domain_error);
  CHECK_THROWS_AS(CspInstance(2, {{"a", 0}, {"b", 2}}, {}, {ok}),
                  domain_error);

  CspEdge repeated = ok;
  repeated.verts = {1, 1};
  CHECK_THROWS_AS(CspInstance(2, verts, {}, {repeated}), domain_error);

  CspEdge short_edge = ok;
  short_edge.verts = {0};
  CHECK_THROWS_AS(CspInstance(2, verts, {}, {short_edge}), domain_error);

  CspEdge missing = ok;
  missing.verts = {0, 7};
  CHECK_THROWS_AS(CspInstance(2, verts, {}, {missing}), domain_error);

  CspEdge negative = ok;
  negative.weight = -1;
  CHECK_THROWS_AS(CspInstance(2, verts, {}, {negative}), domain_error);

  CspEdge bad_label = ok;
  bad_label.sat = {{0, 2}};
  CHECK_THROWS_AS(CspInstance(2, verts, {}, {bad_label}), domain_error);

  CspEdge short_tuple = ok;
  short_tuple.sat = {{0}};
  CHECK_THROWS_AS(CspInstance(2, verts, {}, {short_tuple}), domain_error);

  CspEdge zero_weight = ok;
  zero_weight.weight = 0;
  CHECK_THROWS_AS(CspInstance(2, verts, {}, {zero_weight}), domain_error);

  CHECK_THROWS_AS(CspInstance(2, verts, {{0, 1, 2}}, {ok}), domain_error);
  CHECK_THROWS_AS(CspInstance(2, verts, {{0, 1}, {1, 2}}, {ok}),
                  domain_error);
  CHECK_THROWS_AS(CspInstance(2, verts, {{0}, {1}}, {ok}), domain_error);
  // Both endpoints of `ok` land in the first part.
  CHECK_THROWS_AS(CspInstance(2, verts, {{0, 1}, {2}}, {ok}), domain_error);
  CHECK_NOTHROW(CspInstance(2, verts, {{0, 2}, {1}}, {ok}));
}

TEST_CASE("sat sets are canonicalized to sorted unique tuples") {
  CspEdge e;
  e.verts = {0, 1};
  e.weight = 1;
  e.sat = {{1, 1}, {0, 0}, {1, 1}};
  const CspInstance inst(2, binary_vertices(2), {}, {e});
  const std::vector<std::vector<std::size_t>> want = {{0, 0}, {1, 1}};
  CHECK(inst.edges[0].sat == want);
}

TEST_CASE("JSON round trip preserves the instance") {
  Rng rng(2026);
  for (int trial = 0; trial < 6; ++trial) {
    const auto inst = tests::random_csp(rng, 3, 6, 2, 3, 5, trial % 2 == 0,
                                        trial % 3 == 0);
    const auto j = csp::csp_to_json(inst);
    const auto back = csp::csp_from_json(j);
    CHECK(csp::csp_to_json(back) == j);
    CHECK(csp::csp_digest(back) == csp::csp_digest(inst));
  }

  auto j = csp::csp_to_json(equal_unequal_pair());
  j["edges"][0]["verts"][0] = "ghost";
  CHECK_THROWS_AS(csp::csp_from_json(j), domain_error);
  CHECK_THROWS_AS(csp::csp_from_json(nlohmann::json::array()), domain_error);
}

TEST_CASE("exact value on frozen instances") {
  CspInstance shape(2, binary_vertices(2), {}, {});
  const auto all = all_tuples_edge(shape, {0, 1}, 1);
  const CspInstance trivial(2, binary_vertices(2), {}, {all});
  const auto full = csp::csp_value_exact(trivial);
  CHECK(full.value == 1);
  CHECK(csp::assignment_value(trivial, full.argmax) == 1);

  const auto pair = equal_unequal_pair();
  const auto half = csp::csp_value_exact(pair);
  CHECK(half.value == Rational(1, 2));
  CHECK(oracle_exact(pair) == Rational(1, 2));
  CHECK(csp::assignment_value(pair, half.argmax) == half.value);

  const CspInstance empty(2, binary_vertices(2), {}, {});
  CHECK_THROWS_AS(csp::csp_value_exact(empty), domain_error);
}

TEST_CASE("exact value enforces the assignment-space cap") {
  CspEdge e;
  e.verts = {0, 1};
  e.weight = 1;
  e.sat = {{0, 0}};
  const CspInstance wide(2, binary_vertices(27), {}, {e});
  CHECK_THROWS_AS(csp::csp_value_exact(wide), resource_error);
  const CspInstance narrow(2, binary_vertices(20), {}, {e});
  CHECK(csp::csp_value_exact(narrow).value == Rational(1, 1));
}

TEST_CASE("exact value matches the assignment-walk oracle on random instances") {
  Rng rng(777);
  for (int trial = 0; trial < 12; ++trial) {
    const auto inst = tests::random_csp(rng, 2 + trial % 2, 5, 2, 3, 4,
                                        trial % 2 == 1, trial % 3 == 1);
    const auto got = csp::csp_value_exact(inst);
    CHECK(got.value == oracle_exact(inst));
    CHECK(csp::assignment_value(inst, got.argmax) == got.value);
  }
}

TEST_CASE("random baseline on frozen instances") {
  CspInstance shape(2, binary_vertices(2), {}, {});
  const auto all = all_tuples_edge(shape, {0, 1}, 1);
  const CspInstance trivial(2, binary_vertices(2), {}, {all});
  CHECK(csp::csp_value_random_baseline(trivial) == 1);

  // Three-variable parity constraint over bits: half of the 8 tuples.
  CspEdge xor3;
  xor3.verts = {0, 1, 2};
  xor3.weight = 1;
  for (std::size_t x = 0; x < 8; ++x)
    if ((std::popcount(x) & 1) == 1)
      xor3.sat.push_back({x & 1, (x >> 1) & 1, (x >> 2) & 1});
  const CspInstance parity(3, binary_vertices(3), {}, {xor3});
  CHECK(csp::csp_value_random_baseline(parity) == Rational(1, 2));

  CspEdge never;
  never.verts = {0, 1};
  never.weight = 1;
  const CspInstance unsat(2, binary_vertices(2), {}, {never});
  CHECK(csp::csp_value_random_baseline(unsat) == 0);
  CHECK(csp::csp_value_exact(unsat).value == 0);
}

TEST_CASE("local search reaches the optimum of a single all-tuples edge") {
  CspInstance shape(2, binary_vertices(2), {}, {});
  const auto all = all_tuples_edge(shape, {0, 1}, 1);
  const CspInstance trivial(2, binary_vertices(2), {}, {all});
  const auto out = csp::csp_value_local_search(trivial, 1, 5);
  CHECK(out.value == 1);
  CHECK_THROWS_AS(csp::csp_value_local_search(trivial, 0, 5), domain_error);
}

TEST_CASE("local search is a self-consistent deterministic lower bound") {
  Rng rng(31337);
  for (int trial = 0; trial < 10; ++trial) {
    const auto inst =
        tests::random_csp(rng, 3, 10, 3, 3, 8, false, trial % 2 == 0);
    const auto exact = csp::csp_value_exact(inst);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto local = csp::csp_value_local_search(inst, 2, seed);
      CHECK(local.value <= exact.value);
      CHECK(local.value == csp::assignment_value(inst, local.assignment));
      const auto again = csp::csp_value_local_search(inst, 2, seed);
      CHECK(again.value == local.value);
      CHECK(again.assignment == local.assignment);
    }
  }
}

TEST_CASE("value oracles satisfy the ordering and floor laws") {
  Rng rng(90210);
  for (int trial = 0; trial < 15; ++trial) {
    const std::size_t k = 2 + trial % 2;
    const auto inst =
        tests::random_csp(rng, k, 6, 2, 2, 5, trial % 2 == 1, trial % 3 == 2);
    const auto baseline = csp::csp_value_random_baseline(inst);
    const auto local = csp::csp_value_local_search(inst, 3, 17 + trial);
    const auto exact = csp::csp_value_exact(inst).value;
    CHECK(baseline <= local.value);
    CHECK(local.value <= exact);
    CHECK(exact <= 1);

    bool all_nonempty = true;
    Rational floor = 1;
    for (const auto& e : inst.edges) {
      if (e.sat.empty()) all_nonempty = false;
      BigInt tuples = 1;
      for (std::size_t v : e.verts) tuples *= inst.vertices[v].alphabet;
      floor = std::min(floor, Rational(BigInt(e.sat.size()), tuples));
    }
    if (all_nonempty) CHECK(baseline >= floor);
  }
}

TEST_CASE("integer-weight duplication leaves all three oracles unchanged") {
  Rng rng(4242);
  for (int trial = 0; trial < 8; ++trial) {
    const auto inst =
        tests::random_csp(rng, 2, 5, 2, 3, 4, false, trial % 2 == 0);
    const auto unit = csp::unweight_by_duplication(inst);
    for (const auto& e : unit.edges) CHECK(e.weight == 1);
    CHECK(csp::csp_value_exact(unit).value ==
          csp::csp_value_exact(inst).value);
    CHECK(csp::csp_value_random_baseline(unit) ==
          csp::csp_value_random_baseline(inst));
    CHECK(csp::csp_value_local_search(unit, 2, 99).value ==
          csp::csp_value_local_search(inst, 2, 99).value);
  }

  // 1/2 and 1/3 scale to the integer grid {3, 2}.
  auto pair = equal_unequal_pair();
  pair.edges[0].weight = Rational(1, 2);
  pair.edges[1].weight = Rational(1, 3);
  const CspInstance weighted(2, pair.vertices, {}, pair.edges);
  const auto unit = csp::unweight_by_duplication(weighted);
  CHECK(unit.edges.size() == 5);
  CHECK(csp::csp_value_exact(unit).value == Rational(3, 5));

  CHECK_THROWS_AS(csp::unweight_by_duplication(weighted, 4), resource_error);
}

TEST_CASE("structural report on frozen shapes") {
  CspInstance shape(3, binary_vertices(3), {}, {});
  const auto all = all_tuples_edge(shape, {0, 1, 2}, 1);
  const CspInstance single(3, binary_vertices(3), {{0}, {1}, {2}}, {all});
  const auto rep = csp::structural_report(single);
  CHECK(rep.is_k_partite);
  CHECK(rep.is_partwise_regular);
  CHECK(rep.is_fully_regular);
  CHECK(rep.max_degree == 1);
  CHECK(rep.part_degrees ==
        std::vector<std::vector<std::size_t>>{{1}, {1}, {1}});

  const auto no_parts = equal_unequal_pair();
  const auto rep2 = csp::structural_report(no_parts);
  CHECK_FALSE(rep2.is_k_partite);
  CHECK(rep2.part_degrees.empty());
  CHECK(rep2.is_fully_regular);
  CHECK(rep2.max_degree == 2);

  // A third vertex outside every edge breaks full regularity.
  const CspInstance lopsided(2, binary_vertices(3), {},
                             {no_parts.edges[0], no_parts.edges[1]});
  const auto rep3 = csp::structural_report(lopsided);
  CHECK_FALSE(rep3.is_fully_regular);
  CHECK(rep3.max_degree == 2);
}

TEST_CASE("matching instance validation and JSON") {
  const MatchingInstance m(3, {{"a", "b"}, {"c"}, {"d"}},
                           {{"a", "c"}, {"b", "c", "d"}});
  CHECK(m.edges.size() == 2);
  const auto j = csp::matching_to_json(m);
  const auto back = csp::matching_from_json(j);
  CHECK(csp::matching_to_json(back) == j);

  CHECK_THROWS_AS(MatchingInstance(2, {{"a"}}, {}), domain_error);
  CHECK_THROWS_AS(MatchingInstance(2, {{"a", "a"}, {"b"}}, {}), domain_error);
  CHECK_THROWS_AS(MatchingInstance(2, {{"a", "b"}, {"c"}}, {{"a", "b"}}),
                  domain_error);
  CHECK_THROWS_AS(MatchingInstance(2, {{"a"}, {"b"}}, {{"a", "b", "a"}}),
                  domain_error);
  CHECK_THROWS_AS(MatchingInstance(2, {{"a"}, {"b"}}, {{"ghost"}}),
                  domain_error);
}

TEST_CASE("matching value on frozen shapes") {
  std::vector<std::vector<std::string>> parts = {
      {"a0", "a1", "a2"}, {"b0", "b1", "b2"}};
  const MatchingInstance disjoint(
      2, parts, {{"a0", "b0"}, {"a1", "b1"}, {"a2", "b2"}});
  CHECK(csp::matching_value_exact(disjoint) == 3);

  const MatchingInstance star(
      2, parts, {{"a0", "b0"}, {"a0", "b1"}, {"a0", "b2"}});
  CHECK(csp::matching_value_exact(star) == 1);

  CHECK(csp::matching_value_exact(MatchingInstance(2, parts, {})) == 0);

  std::vector<std::vector<std::string>> many;
  for (int i = 0; i < 25; ++i) many.push_back({"a0", "b0"});
  CHECK_THROWS_AS(csp::matching_value_exact(MatchingInstance(2, parts, many)),
                  resource_error);
}

namespace {

// Subset-enumeration oracle for maximum matchings, 2^{|E|} candidates.
std::size_t oracle_matching(const MatchingInstance& m) {
  const std::size_t count = m.edges.size();
  std::size_t best = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << count); ++mask) {
    std::vector<std::size_t> used;
    bool ok = true;
    for (std::size_t i = 0; i < count && ok; ++i) {
      if (!(mask >> i & 1)) continue;
      for (std::size_t v : m.edges[i])
        if (std::find(used.begin(), used.end(), v) != used.end()) ok = false;
      if (ok) used.insert(used.end(), m.edges[i].begin(), m.edges[i].end());
    }
    if (ok)
      best = std::max(best,
                      static_cast<std::size_t>(std::popcount(mask)));
  }
  return best;
}

}  // namespace

TEST_CASE("matching branch and bound matches the subset oracle") {
  Rng rng(555);
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t k = 2 + trial % 2;
    std::vector<std::vector<std::string>> parts(k);
    for (std::size_t p = 0; p < k; ++p)
      for (int v = 0; v < 4; ++v)
        parts[p].push_back("p" + std::to_string(p) + "v" + std::to_string(v));
    std::vector<std::vector<std::string>> edges;
    for (int e = 0; e < 12; ++e) {
      std::vector<std::string> edge;
      for (std::size_t p = 0; p < k; ++p)
        if (edge.empty() || !rng.coin())
          edge.push_back(parts[p][rng.below(4)]);
      edges.push_back(edge);
    }
    const MatchingInstance m(k, parts, edges);
    CHECK(csp::matching_value_exact(m) == oracle_matching(m));
  }
}
