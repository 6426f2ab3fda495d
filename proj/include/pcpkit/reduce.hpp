#ifndef PCPKIT_REDUCE_HPP_
#define PCPKIT_REDUCE_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pcpkit/csp.hpp"
#include "pcpkit/numbers.hpp"

namespace pcpkit::reduce {

// A bipartite graph that is `degree`-regular on both sides.  Parallel edges
// may appear in the sampled constructions and are flagged.
struct BipartiteGraph {
  std::size_t n_left = 0;
  std::size_t n_right = 0;
  std::size_t degree = 0;
  std::vector<std::pair<std::size_t, std::size_t>> adjacency;
  bool multi = false;
};

struct SpectralReport {
  double top_singular = 0;
  double second_singular = 0;
  std::size_t iterations = 0;
  double residual = 0;
  std::size_t candidates = 1;
};

// Second singular value of the biadjacency matrix by power iteration on the
// Gram matrix with the exact top pair (uniform vectors, value = degree)
// deflated.  Iterates until the residual drops below 1e-8.
SpectralReport measure_spectrum(const BipartiteGraph& g);

// d = n returns the complete bipartite graph, whose second singular value
// is 0 by closed form.  Otherwise samples unions of d random permutation
// matchings and keeps the candidate with the smallest measured second
// singular value.  Deterministic given the seed.
std::pair<BipartiteGraph, SpectralReport> build_bipartite_expander(
    std::size_t n, std::size_t d, std::uint64_t seed,
    std::size_t candidates = 8);

// Copies every vertex k times; edges fan out over all k! ways to place the
// endpoints in distinct copy classes, keeping weight and sat tuples.  The
// output is k-partite with parts indexed by copy number and satisfies
// val(in) <= val(out) <= (k^k/k!) val(in).
csp::CspInstance k_partitize(const csp::CspInstance& inst,
                             std::uint64_t edge_cap = 1000000);

// Repeats every edge d times; all value oracles are unchanged and every
// degree is multiplied by d.
csp::CspInstance duplicate_constraints(const csp::CspInstance& inst,
                                       std::size_t d);

struct ReductionReport {
  std::string input_digest;
  std::string output_digest;
  std::size_t input_vertices = 0;
  std::size_t output_vertices = 0;
  std::size_t input_edges = 0;
  std::size_t output_edges = 0;
  std::size_t d = 0;
  std::size_t part = 0;
  double lambda_max = 0;
  double error_term = 0;
  bool values_computed = false;
  Rational value_in;
  Rational value_out;
  bool soundness_holds = false;
};

nlohmann::json report_to_json(const ReductionReport& rep);

// The cloud construction on part `part`: every vertex v there is replaced
// by deg(v) copies wired through a d-regular bipartite expander whose left
// side is v's incident-edge list in input order.  Part `part` becomes
// exactly d-regular, every other degree is multiplied by d and
// |E'| = d|E|.  Requires a k-partite instance with uniform edge weights
// whose part-`part` degrees are all >= d.
//
// The report carries the largest measured second singular value over the
// per-vertex expanders and the derived error term lambda_max *
// sqrt(R^(k-1)) / d.  When both assignment spaces fit under
// value_audit_cap the exact values go into the report and the two value
// laws (val(out) >= val(in), val(in) >= val(out) - error_term) are checked,
// throwing assertion_error on violation.
std::pair<csp::CspInstance, ReductionReport> partwise_regularize(
    const csp::CspInstance& inst, std::size_t d, std::size_t part,
    std::uint64_t seed, std::uint64_t value_audit_cap = 1 << 20);

// The product-cloud construction: part i is copied d_i * c_i times and
// edges fan out over all cloud combinations.  Output degrees in part i are
// (prod_j c_j d_j) / c_i and the value is preserved exactly.  Requires a
// partwise-regular k-partite instance.
csp::CspInstance fully_regularize(const csp::CspInstance& inst,
                                  const std::vector<std::size_t>& c,
                                  std::uint64_t edge_cap = 1000000);

}  // namespace pcpkit::reduce

#endif
