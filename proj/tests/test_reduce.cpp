#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "pcpkit/csp.hpp"
#include "pcpkit/errors.hpp"
#include "pcpkit/reduce.hpp"
#include "pcpkit/rng.hpp"
#include "random_csp.hpp"

using namespace pcpkit;
using csp::CspEdge;
using csp::CspInstance;
using csp::CspVertex;
using reduce::BipartiteGraph;

namespace {

// Cyclic Jacobi eigenvalue oracle for small symmetric matrices, used to
// cross-check the power-iteration spectral measurement.
std::vector<double> jacobi_eigenvalues(std::vector<double> a, std::size_t n) {
  for (int sweep = 0; sweep < 200; ++sweep) {
    double off = 0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (std::fabs(apq) < 1e-18) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1);
        const double s = t * c;
        for (std::size_t r = 0; r < n; ++r) {
          const double arp = a[r * n + p];
          const double arq = a[r * n + q];
          a[r * n + p] = c * arp - s * arq;
          a[r * n + q] = s * arp + c * arq;
        }
        for (std::size_t r = 0; r < n; ++r) {
          const double apr = a[p * n + r];
          const double aqr = a[q * n + r];
          a[p * n + r] = c * apr - s * aqr;
          a[q * n + r] = s * apr + c * aqr;
        }
      }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a[i * n + i];
  std::sort(eig.rbegin(), eig.rend());
  return eig;
}

std::vector<double> gram_matrix(const BipartiteGraph& g) {
  std::vector<double> b(g.n_left * g.n_right, 0.0);
  for (const auto& [l, r] : g.adjacency) b[l * g.n_right + r] += 1.0;
  std::vector<double> m(g.n_right * g.n_right, 0.0);
  for (std::size_t i = 0; i < g.n_right; ++i)
    for (std::size_t j = 0; j < g.n_right; ++j) {
      double s = 0;
      for (std::size_t l = 0; l < g.n_left; ++l)
        s += b[l * g.n_right + i] * b[l * g.n_right + j];
      m[i * g.n_right + j] = s;
    }
  return m;
}

void check_regular(const BipartiteGraph& g) {
  std::vector<std::size_t> left(g.n_left, 0), right(g.n_right, 0);
  for (const auto& [l, r] : g.adjacency) {
    ++left[l];
    ++right[r];
  }
  for (std::size_t v = 0; v < g.n_left; ++v) CHECK(left[v] == g.degree);
  for (std::size_t v = 0; v < g.n_right; ++v) CHECK(right[v] == g.degree);
}

// The 4-cycle: two binary vertices per part, all four cross edges, parity
// constraint, unit weights.  Both parts are 2-regular.
CspInstance cycle_instance() {
  std::vector<CspVertex> verts = {{"a0", 2}, {"a1", 2}, {"b0", 2}, {"b1", 2}};
  std::vector<CspEdge> edges;
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 2; ++b) {
      CspEdge e;
      e.verts = {a, 2 + b};
      e.weight = 1;
      e.sat = {{0, 1}, {1, 0}};
      edges.push_back(e);
    }
  return CspInstance(2, verts, {{0, 1}, {2, 3}}, edges);
}

}  // namespace

TEST_CASE("complete bipartite graphs have an exactly zero second singular value") {
  for (std::size_t n : {std::size_t{1}, std::size_t{3}, std::size_t{6}}) {
    const auto [g, rep] = reduce::build_bipartite_expander(n, n, 7);
    CHECK(g.adjacency.size() == n * n);
    CHECK_FALSE(g.multi);
    check_regular(g);
    CHECK(rep.second_singular == 0.0);
    CHECK(rep.top_singular == static_cast<double>(n));
  }
  CHECK_THROWS_AS(reduce::build_bipartite_expander(4, 0, 7), domain_error);
  CHECK_THROWS_AS(reduce::build_bipartite_expander(4, 5, 7), domain_error);
}

TEST_CASE("sampled expanders are regular, reproducible and spectrally bounded") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto [g, rep] = reduce::build_bipartite_expander(16, 4, seed);
    CHECK(g.adjacency.size() == 64);
    check_regular(g);
    CHECK(rep.second_singular >= 0.0);
    CHECK(rep.second_singular < 4.0);
    CHECK(rep.residual < 1e-8);
    CHECK(rep.candidates == 8);
    const auto [g2, rep2] = reduce::build_bipartite_expander(16, 4, seed);
    CHECK(g2.adjacency == g.adjacency);
    CHECK(rep2.second_singular == rep.second_singular);
  }
}

TEST_CASE("power iteration agrees with the Jacobi eigenvalue oracle") {
  for (std::uint64_t seed : {11ULL, 12ULL, 13ULL}) {
    for (const auto& [n, d] :
         std::vector<std::pair<std::size_t, std::size_t>>{
             {6, 2}, {8, 3}, {12, 4}}) {
      const auto [g, rep] = reduce::build_bipartite_expander(n, d, seed, 2);
      const auto eig = jacobi_eigenvalues(gram_matrix(g), g.n_right);
      CHECK(std::fabs(eig[0] - static_cast<double>(d * d)) < 1e-8);
      CHECK(std::fabs(rep.second_singular - std::sqrt(std::max(eig[1], 0.0))) <
            1e-6);
    }
  }
}

TEST_CASE("k-partitization fans out over permutations and stays k-partite") {
  Rng rng(808);
  for (int trial = 0; trial < 4; ++trial) {
    const std::size_t k = 2 + trial % 2;
    const auto inst = tests::random_csp(rng, k, k == 2 ? 5 : 4, 2, 2, 3,
                                        false, trial % 2 == 0);
    const auto out = reduce::k_partitize(inst);
    std::size_t fact = 1;
    for (std::size_t i = 2; i <= k; ++i) fact *= i;
    CHECK(out.edges.size() == fact * inst.edges.size());
    CHECK(out.vertices.size() == k * inst.vertices.size());
    const auto rep = csp::structural_report(out);
    CHECK(rep.is_k_partite);
    for (const auto& p : out.parts) CHECK(p.size() == inst.vertices.size());
  }
}

TEST_CASE("k-partitization value sandwich holds on a random corpus") {
  Rng rng(2024);
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t k = trial < 5 ? 2 : 3;
    const std::size_t n = k == 2 ? 5 : 4;
    const auto inst = tests::random_csp(rng, k, n, 2, k == 2 ? 3 : 2, 4,
                                        false, trial % 2 == 0);
    const auto out = reduce::k_partitize(inst);
    const auto val_in = csp::csp_value_exact(inst).value;
    const auto val_out = csp::csp_value_exact(out).value;
    std::size_t fact = 1;
    for (std::size_t i = 2; i <= k; ++i) fact *= i;
    BigInt kk = 1;
    for (std::size_t i = 0; i < k; ++i) kk *= k;
    CHECK(val_in <= val_out);
    CHECK(val_out <= Rational(kk, fact) * val_in);
  }
  const auto pair = tests::random_csp(rng, 2, 4, 2, 2, 3, false, false);
  CHECK_THROWS_AS(reduce::k_partitize(pair, 5), resource_error);
}

TEST_CASE("constraint duplication changes nothing but degrees") {
  Rng rng(606);
  const auto inst = tests::random_csp(rng, 2, 5, 2, 3, 4, false, true);
  const auto same = reduce::duplicate_constraints(inst, 1);
  CHECK(csp::csp_digest(same) == csp::csp_digest(inst));
  const auto tripled = reduce::duplicate_constraints(inst, 3);
  CHECK(tripled.edges.size() == 3 * inst.edges.size());
  CHECK(csp::csp_value_exact(tripled).value ==
        csp::csp_value_exact(inst).value);
  CHECK(csp::csp_value_random_baseline(tripled) ==
        csp::csp_value_random_baseline(inst));
  CHECK(csp::csp_value_local_search(tripled, 2, 42).value ==
        csp::csp_value_local_search(inst, 2, 42).value);
  const auto deg_in = csp::structural_report(inst);
  const auto deg_out = csp::structural_report(tripled);
  CHECK(deg_out.max_degree == 3 * deg_in.max_degree);
  CHECK_THROWS_AS(reduce::duplicate_constraints(inst, 0), domain_error);
}

TEST_CASE("partwise regularization with matching degree uses complete clouds") {
  const auto inst = cycle_instance();
  const auto [out, rep] = reduce::partwise_regularize(inst, 2, 0, 99);
  CHECK(rep.lambda_max == 0.0);
  CHECK(rep.error_term == 0.0);
  CHECK(rep.values_computed);
  CHECK(rep.soundness_holds);
  CHECK(rep.value_in == rep.value_out);
  CHECK(rep.output_edges == 2 * rep.input_edges);
  const auto structure = csp::structural_report(out);
  CHECK(structure.is_k_partite);
  CHECK(structure.part_degrees[0] ==
        std::vector<std::size_t>{2, 2, 2, 2});
}

TEST_CASE("partwise regularization satisfies the degree and value laws") {
  Rng rng(1717);
  for (int trial = 0; trial < 6; ++trial) {
    const std::size_t k = trial < 4 ? 2 : 3;
    const std::size_t part_size = 2;
    const std::size_t n_edges = k == 2 ? 4 : 3;
    auto base = tests::random_covering_csp(rng, k, part_size, n_edges, 2,
                                           trial % 2 == 0);
    const auto inst = reduce::duplicate_constraints(base, 2);
    const std::size_t d = 2;
    const std::size_t part = trial % k;
    const auto [out, rep] = reduce::partwise_regularize(inst, d, part,
                                                        1000 + trial);
    CHECK(out.edges.size() == d * inst.edges.size());
    CHECK(rep.output_edges == d * rep.input_edges);

    const auto deg_in = csp::structural_report(inst);
    const auto deg_out = csp::structural_report(out);
    CHECK(deg_out.is_k_partite);
    for (std::size_t x : deg_out.part_degrees[part]) CHECK(x == d);
    for (std::size_t p = 0; p < k; ++p) {
      if (p == part) continue;
      auto scaled = deg_in.part_degrees[p];
      for (auto& x : scaled) x *= d;
      CHECK(deg_out.part_degrees[p] == scaled);
    }

    REQUIRE(rep.values_computed);
    CHECK(rep.value_in <= rep.value_out);
    CHECK(rep.soundness_holds);
    CHECK(to_double(rep.value_in) + rep.error_term + 1e-7 >=
          to_double(rep.value_out));
    CHECK(rep.value_in == csp::csp_value_exact(inst).value);
    CHECK(rep.value_out == csp::csp_value_exact(out).value);

    const auto [out2, rep2] = reduce::partwise_regularize(inst, d, part,
                                                          1000 + trial);
    CHECK(rep2.output_digest == rep.output_digest);
  }
}

TEST_CASE("partwise regularization validates its preconditions") {
  Rng rng(31);
  const auto no_parts = tests::random_csp(rng, 2, 4, 2, 2, 3, false, false);
  CHECK_THROWS_AS(reduce::partwise_regularize(no_parts, 1, 0, 7),
                  domain_error);
  const auto inst = cycle_instance();
  CHECK_THROWS_AS(reduce::partwise_regularize(inst, 2, 5, 7), domain_error);
  CHECK_THROWS_AS(reduce::partwise_regularize(inst, 0, 0, 7), domain_error);
  CHECK_THROWS_AS(reduce::partwise_regularize(inst, 3, 0, 7), domain_error);
  auto uneven = cycle_instance();
  auto edges = uneven.edges;
  edges[0].weight = 2;
  const CspInstance reweighted(2, uneven.vertices, uneven.parts, edges);
  CHECK_THROWS_AS(reduce::partwise_regularize(reweighted, 2, 0, 7),
                  domain_error);
}

TEST_CASE("full regularization hits the closed-form degrees and keeps the value") {
  // Three left vertices of degree 2, two right vertices of degree 3.
  std::vector<CspVertex> verts = {{"a0", 2}, {"a1", 2}, {"a2", 2},
                                  {"b0", 2}, {"b1", 2}};
  std::vector<CspEdge> edges;
  Rng rng(5150);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 2; ++b) {
      CspEdge e;
      e.verts = {a, 3 + b};
      e.weight = 1;
      for (std::size_t x = 0; x < 2; ++x)
        for (std::size_t y = 0; y < 2; ++y)
          if (rng.coin()) e.sat.push_back({x, y});
      edges.push_back(e);
    }
  const CspInstance inst(2, verts, {{0, 1, 2}, {3, 4}}, edges);
  REQUIRE(csp::structural_report(inst).is_partwise_regular);

  const auto out = reduce::fully_regularize(inst, {1, 1});
  const auto structure = csp::structural_report(out);
  CHECK(structure.is_fully_regular);
  CHECK(structure.max_degree == 6);
  CHECK(out.edges.size() == inst.edges.size() * 6);
  CHECK(out.vertices.size() == 3 * 2 + 2 * 3);
  CHECK(csp::csp_value_exact(out).value == csp::csp_value_exact(inst).value);

  const auto wide = reduce::fully_regularize(inst, {2, 1});
  const auto ws = csp::structural_report(wide);
  CHECK(ws.part_degrees[0] == std::vector<std::size_t>(12, 6));
  CHECK(ws.part_degrees[1] == std::vector<std::size_t>(6, 12));
  CHECK(csp::csp_value_exact(wide).value == csp::csp_value_exact(inst).value);

  CHECK_THROWS_AS(reduce::fully_regularize(inst, {1}), domain_error);
  CHECK_THROWS_AS(reduce::fully_regularize(inst, {0, 1}), domain_error);
  CHECK_THROWS_AS(reduce::fully_regularize(inst, {1, 1}, 10), resource_error);
}

TEST_CASE("full regularization rejects irregular or unpartitioned inputs") {
  Rng rng(41);
  const auto no_parts = tests::random_csp(rng, 2, 4, 2, 2, 3, false, false);
  CHECK_THROWS_AS(reduce::fully_regularize(no_parts, {1, 1}), domain_error);
  auto covering = tests::random_covering_csp(rng, 2, 2, 5, 2);
  if (!csp::structural_report(covering).is_partwise_regular)
    CHECK_THROWS_AS(reduce::fully_regularize(covering, {1, 1}), domain_error);
}

TEST_CASE("single edge with unit multipliers is isomorphic to its input") {
  std::vector<CspVertex> verts = {{"x", 2}, {"y", 3}};
  CspEdge e;
  e.verts = {0, 1};
  e.weight = 1;
  e.sat = {{0, 0}, {1, 2}};
  const CspInstance inst(2, verts, {{0}, {1}}, {e});
  const auto out = reduce::fully_regularize(inst, {1, 1});
  CHECK(out.vertices.size() == 2);
  CHECK(out.edges.size() == 1);
  CHECK(out.edges[0].sat == e.sat);
  CHECK(csp::csp_value_exact(out).value == csp::csp_value_exact(inst).value);
}

TEST_CASE("value is preserved across random partwise-regular products") {
  Rng rng(8787);
  for (int trial = 0; trial < 5; ++trial) {
    // All-pairs bipartite structure is partwise-regular by construction.
    std::vector<CspVertex> verts;
    std::vector<std::vector<std::size_t>> parts(2);
    for (std::size_t p = 0; p < 2; ++p)
      for (std::size_t i = 0; i < 2; ++i) {
        parts[p].push_back(verts.size());
        verts.push_back({"q" + std::to_string(p) + std::to_string(i), 2});
      }
    std::vector<CspEdge> edges;
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t b = 0; b < 2; ++b) {
        CspEdge e;
        e.verts = {parts[0][a], parts[1][b]};
        e.weight = Rational(rng.range(1, 3));
        for (std::size_t x = 0; x < 2; ++x)
          for (std::size_t y = 0; y < 2; ++y)
            if (rng.coin()) e.sat.push_back({x, y});
        edges.push_back(e);
      }
    const CspInstance inst(2, verts, parts, edges);
    const std::vector<std::size_t> c = {
        static_cast<std::size_t>(1 + trial % 2),
        static_cast<std::size_t>(1 + (trial >> 1) % 2)};
    const auto out = reduce::fully_regularize(inst, c);
    CHECK(csp::csp_value_exact(out).value ==
          csp::csp_value_exact(inst).value);
  }
}

TEST_CASE("pipeline audit: duplicate, partwise rounds, fully regularize") {
  Rng rng(112233);
  auto inst = tests::random_covering_csp(rng, 2, 2, 3, 2);
  const std::size_t d = 2;
  auto work = reduce::duplicate_constraints(inst, d);
  for (std::size_t part = 0; part < work.k; ++part) {
    auto [next, rep] = reduce::partwise_regularize(work, d, part,
                                                   7000 + part);
    CHECK(rep.output_edges == d * rep.input_edges);
    work = std::move(next);
  }
  REQUIRE(csp::structural_report(work).is_partwise_regular);
  const auto final_inst =
      reduce::fully_regularize(work, std::vector<std::size_t>(work.k, 1));
  const auto structure = csp::structural_report(final_inst);
  CHECK(structure.is_k_partite);
  CHECK(structure.is_partwise_regular);
  CHECK(structure.is_fully_regular);
}

TEST_CASE("reduction report serializes its counts and values") {
  const auto [out, rep] = reduce::partwise_regularize(cycle_instance(), 2, 1,
                                                      4);
  const auto j = reduce::report_to_json(rep);
  CHECK(j.at("output_edges").get<std::size_t>() == rep.output_edges);
  CHECK(j.at("values_computed").get<bool>());
  CHECK(rational_from_json(j.at("value_in")) == rep.value_in);
  CHECK(j.at("lambda_max").get<double>() == 0.0);
}
