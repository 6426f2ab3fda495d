#ifndef PCPKIT_CSP_HPP_
#define PCPKIT_CSP_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcpkit/numbers.hpp"

namespace pcpkit::csp {

// One variable of a constraint instance; labels run over [0, alphabet).
struct CspVertex {
  std::string name;
  std::size_t alphabet = 0;

  bool operator==(const CspVertex&) const = default;
};

// A k-ary constraint: k distinct vertex indices, a nonnegative weight and
// the explicit sorted set of satisfying label tuples.
struct CspEdge {
  std::vector<std::size_t> verts;
  Rational weight = 0;
  std::vector<std::vector<std::size_t>> sat;

  bool operator==(const CspEdge&) const = default;
};

// A weighted k-CSP with per-vertex alphabets.  `parts` is either empty (no
// partition given) or exactly k disjoint vertex classes covering all
// vertices; when present, every edge must touch each part exactly once.
struct CspInstance {
  std::size_t k = 0;
  std::vector<CspVertex> vertices;
  std::vector<std::vector<std::size_t>> parts;
  std::vector<CspEdge> edges;

  CspInstance() = default;
  // Validates the invariants above and canonicalizes every sat set to
  // sorted order without duplicates.
  CspInstance(std::size_t k_, std::vector<CspVertex> vertices_,
              std::vector<std::vector<std::size_t>> parts_,
              std::vector<CspEdge> edges_);

  bool has_parts() const { return !parts.empty(); }
  Rational total_weight() const;
};

nlohmann::json csp_to_json(const CspInstance& inst);
CspInstance csp_from_json(const nlohmann::json& j);

// Stable content fingerprint (hex digits of a 64-bit hash of the canonical
// JSON form), used by reduction reports.
std::string csp_digest(const CspInstance& inst);

// A total labeling, one label per vertex in vertex order.
struct Assignment {
  std::vector<std::size_t> labels;

  bool operator==(const Assignment&) const = default;
};

void validate_assignment(const CspInstance& inst, const Assignment& a);

// Satisfied weight of `a` divided by total weight, as an exact rational.
Rational assignment_value(const CspInstance& inst, const Assignment& a);

nlohmann::json assignment_to_json(const CspInstance& inst, const Assignment& a);
Assignment assignment_from_json(const CspInstance& inst,
                                const nlohmann::json& j);

struct ExactValue {
  Rational value;
  Assignment argmax;
};

// Exact weighted maximum over all assignments, with one maximizer.  The
// number of assignments (product of alphabet sizes) must stay within the
// cap.  Throws domain_error on an empty edge list.
ExactValue csp_value_exact(const CspInstance& inst,
                           std::uint64_t assignment_cap = 100000000);

// Exact expected value of a uniformly random assignment.
Rational csp_value_random_baseline(const CspInstance& inst);

struct LocalSearchResult {
  Rational value;
  Assignment assignment;
};

// Hill climbing over single-vertex relabelings from `restarts` random
// starts.  Deterministic given the seed; the returned value is the exact
// value of the returned assignment, hence a lower bound on the optimum.
LocalSearchResult csp_value_local_search(const CspInstance& inst,
                                         std::size_t restarts,
                                         std::uint64_t seed);

struct StructuralReport {
  bool is_k_partite = false;
  // Sorted degree multiset per part; empty when no partition is given.
  std::vector<std::vector<std::size_t>> part_degrees;
  bool is_partwise_regular = false;
  bool is_fully_regular = false;
  std::size_t max_degree = 0;
};

StructuralReport structural_report(const CspInstance& inst);

// Rescales all weights to the smallest common integer grid and replaces
// each edge of integer weight w by w unit-weight copies.  Zero-weight edges
// are dropped.  All three value oracles are unchanged by this.
CspInstance unweight_by_duplication(const CspInstance& inst,
                                    std::uint64_t copy_cap = 1000000);

// A k-partite hypergraph with edges of size at most k touching each part
// at most once.  Vertices are named; ids index the flattened name list.
struct MatchingInstance {
  std::size_t k = 0;
  std::vector<std::string> vertex_names;
  std::vector<std::size_t> vertex_part;
  std::vector<std::vector<std::size_t>> parts;
  std::vector<std::vector<std::size_t>> edges;

  MatchingInstance() = default;
  MatchingInstance(std::size_t k_,
                   const std::vector<std::vector<std::string>>& part_names,
                   const std::vector<std::vector<std::string>>& edge_names);
};

nlohmann::json matching_to_json(const MatchingInstance& m);
MatchingInstance matching_from_json(const nlohmann::json& j);

// Exact maximum number of pairwise-disjoint hyperedges, by branch and bound
// seeded with a greedy matching and pruned by the remaining edge count.
std::size_t matching_value_exact(const MatchingInstance& m,
                                 std::size_t edge_cap = 24);

}  // namespace pcpkit::csp

#endif
