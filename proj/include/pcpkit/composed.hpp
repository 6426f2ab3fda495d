#ifndef PCPKIT_COMPOSED_HPP_
#define PCPKIT_COMPOSED_HPP_

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pcpkit/csp.hpp"
#include "pcpkit/f2.hpp"
#include "pcpkit/grasstest.hpp"
#include "pcpkit/numbers.hpp"
#include "pcpkit/outerpcp.hpp"
#include "pcpkit/rng.hpp"
#include "pcpkit/stats.hpp"

// The composed (k+1)-query CSP built on top of the block game: per-question
// Grassmann vertices with side conditions, the clique relation that ties
// questions sharing equations together, the constraint sampler, and the
// prover-strategy extraction pipeline back into the block game.
namespace pcpkit::composed {

using grasstest::LinearFunctional;
using outerpcp::Gap3LinInstance;

struct ComposedConfig {
  std::size_t J = 1;
  std::size_t ell2 = 2;    // dimension of the A-side spaces L
  std::size_t ellbot = 1;  // dimension of the B-side spaces R
  std::size_t k = 2;       // A-side queries per constraint
  std::size_t r = 0;       // advice dimension used by strategy extraction
};

nlohmann::json composed_config_to_json(const ComposedConfig& cfg);
ComposedConfig composed_config_from_json(const nlohmann::json& j);

// All sorted J-subsets of equation indices whose tuples pass both
// admissibility filters: the equations are pairwise variable-disjoint, and
// no two variables from different equations of the tuple appear together in
// any equation of the instance.  The dropped fraction is measured over all
// ordered |Eq|^J tuples.
struct QuestionReport {
  std::vector<std::vector<std::size_t>> admissible;
  BigInt n_tuples;
  double dropped_fraction = 0.0;
};

QuestionReport enumerate_questions(const Gap3LinInstance& inst, std::size_t J,
                                   std::uint64_t cap = f2::kDefaultEnumCap);

// Per-question data in local coordinates: the sorted variable list of U, the
// equation indicator rows x_e, the right-hand sides, and the span H_U.
struct SideCondition {
  std::vector<std::size_t> eqs;
  std::vector<std::size_t> vars;        // sorted, size 3J
  std::vector<f2::Word> x_rows;         // x_e per equation, local coords
  std::vector<int> rhs;
  f2::Subspace h;                       // span of the x_rows, dim J
};

SideCondition side_condition(const Gap3LinInstance& inst,
                             const std::vector<std::size_t>& eqs);

// f restricted to H_U equals the functional forced by the right-hand sides.
bool honors_side(const LinearFunctional& f, const SideCondition& sc);

// The 2^{ell2} functionals on s (a superspace of H_U of dimension
// J + ell2) honoring the side conditions, sorted by coefficient word.
std::vector<LinearFunctional> sigma_one(const SideCondition& sc,
                                        const f2::Subspace& s);

// All 2^{dim} functionals on r_sub, sorted by coefficient word.
std::vector<LinearFunctional> sigma_two(const f2::Subspace& r_sub);

// An A-vertex: the collapsed subspace S = L + H_U of dimension J + ell2 in
// the local coordinates of question `u_index`.
struct VertexA {
  std::size_t u_index = 0;
  f2::Subspace s;

  bool operator==(const VertexA&) const = default;
  auto operator<=>(const VertexA&) const = default;
};

// A B-vertex: the subspace R compacted to its global support variables, so
// the same R reached from two questions collapses to one vertex.
struct VertexB {
  std::vector<std::size_t> vars;  // sorted global support
  f2::Subspace r;                 // rows over the support coordinates

  bool operator==(const VertexB&) const = default;
  auto operator<=>(const VertexB&) const = default;
};

// The clique relation: L + H_U + H_{U'} = L' + H_U + H_{U'} inside the full
// variable space, evaluated on the compacted union of the two questions.
bool same_clique(const Gap3LinInstance& inst, const SideCondition& a_sc,
                 const VertexA& a, const SideCondition& b_sc,
                 const VertexA& b);

// Every vertex equivalent to `a` across the given admissible questions,
// including `a` itself.
std::vector<VertexA> clique_members(
    const Gap3LinInstance& inst, const std::vector<SideCondition>& sides,
    const VertexA& a);

// The unique functional on dst in the same clique that shares a linear
// extension with f honoring both side conditions.  Throws domain_error when
// f violates the source side conditions or the vertices are not equivalent.
LinearFunctional clique_extend(const Gap3LinInstance& inst,
                               const SideCondition& src_sc, const VertexA& src,
                               const LinearFunctional& f,
                               const SideCondition& dst_sc, const VertexA& dst);

// The materialized CSP together with every index the experiments need.
// Tables for the A side are vectors of functionals aligned with verts_a
// (domains must match the vertex subspaces), and likewise for the B side.
struct ComposedBuild {
  ComposedConfig cfg;
  Gap3LinInstance inst;
  std::vector<SideCondition> sides;             // admissible questions
  std::vector<VertexA> verts_a;
  std::vector<VertexB> verts_b;
  std::vector<std::vector<LinearFunctional>> sigma1;  // per A-vertex, sorted
  std::vector<std::vector<LinearFunctional>> sigma2;  // per B-vertex, sorted
  std::vector<std::size_t> clique_of;           // A-vertex id -> clique id
  std::vector<std::vector<std::size_t>> cliques;
  std::map<VertexA, std::size_t> a_index;
  std::map<VertexB, std::size_t> b_index;
  csp::CspInstance csp;
  nlohmann::json sidecar;
  std::uint64_t seed = 0;
  std::size_t n_constraint_samples = 0;
  std::size_t n_duplicate_redraws = 0;

  std::size_t vertex_a_id(std::size_t u_index, const f2::Subspace& s) const;
  std::size_t vertex_b_id(const VertexB& v) const;
};

// Materializes the vertex sets, alphabets and clique index, then samples
// `n_constraint_samples` constraints (steps: question, R, the L_i, one
// clique member per L_i) and emits them with empirical weights.  Samples
// whose k + 1 vertices are not distinct are redrawn and counted.
ComposedBuild build_composed_csp(const Gap3LinInstance& inst,
                                 const ComposedConfig& cfg, std::uint64_t seed,
                                 std::size_t n_constraint_samples);

// One constraint draw, exposed for sampler audits.
struct ConstraintSample {
  std::size_t u_index = 0;
  f2::Subspace r;                       // local to the question
  std::size_t b_id = 0;
  std::vector<f2::Subspace> ls;         // the k spaces L_i, local
  std::vector<std::size_t> s_ids;       // A-vertex ids of L_i + H_U
  std::vector<std::size_t> member_ids;  // chosen clique members
};

ConstraintSample sample_constraint(const ComposedBuild& build, Rng& rng);

bool constraint_passes(const ComposedBuild& build, const ConstraintSample& cs,
                       const std::vector<LinearFunctional>& t1,
                       const std::vector<LinearFunctional>& t2);

// Monte-Carlo pass rate of the tables over the constraint sampler with a
// 99% Clopper-Pearson band; per-trial seeds make the outcome independent of
// the thread count.
BinomialCi table_consistency(const ComposedBuild& build,
                             const std::vector<LinearFunctional>& t1,
                             const std::vector<LinearFunctional>& t2,
                             std::uint64_t trials, std::uint64_t seed,
                             unsigned threads = 1);

bool is_clique_consistent(const ComposedBuild& build,
                          const std::vector<LinearFunctional>& t1);

// Picks a uniform representative per clique and propagates it by
// clique_extend; the output is clique-consistent.
std::vector<LinearFunctional> make_clique_consistent(
    const ComposedBuild& build, const std::vector<LinearFunctional>& t1,
    std::uint64_t seed);

// The tables induced by a global assignment: on questions whose equations
// all hold, the A-entry is sigma restricted; elsewhere it is the unique
// functional forced by the side conditions that matches sigma on the
// canonical complement of H_U.  B-entries are sigma restricted.
std::pair<std::vector<LinearFunctional>, std::vector<LinearFunctional>>
sigma_tables(const ComposedBuild& build, const std::vector<int>& sigma);

struct CompletenessReport {
  BinomialCi ci;
  double eps1 = 0.0;    // unsatisfied fraction of the assignment
  double bound = 0.0;   // 1 - J * eps1
  bool asserted = false;
};

nlohmann::json completeness_report_to_json(const CompletenessReport& rep);

// Plays the sampler against the sigma tables and asserts that the pass rate
// stays above 1 - J*eps1 up to the confidence band, anchor
// "composed-completeness".
CompletenessReport completeness_experiment(const ComposedBuild& build,
                                           const std::vector<int>& sigma,
                                           std::uint64_t trials,
                                           std::uint64_t seed,
                                           unsigned threads = 1);

struct ExtractOptions {
  std::uint64_t seed = 0;
  std::size_t pu_trials = 2000;  // per-question consistency sample size
  double c_threshold = -1.0;     // agreement threshold; < 0 picks eps / 10
};

// The extraction pipeline: per-question consistency p(U), the set of good
// questions, and seeded prover strategies for the block game.  The first
// prover zooms in on the advice span and searches for a side-condition
// honoring functional of high agreement; the second works on a derived
// single-question table through maximal zoom-out pairs.  Provers answer
// outerpcp::kGiveUpAnswer when any step fails.
struct ExtractReport {
  double epsilon = 0.0;
  double c_threshold = 0.0;
  std::vector<double> p_u;          // aligned with build.sides
  std::vector<std::size_t> good;    // indices into build.sides
  outerpcp::ProverStrategy first;
  outerpcp::ProverStrategy second;
};

ExtractReport extract_prover_strategies(const ComposedBuild& build,
                                        const std::vector<LinearFunctional>& t1,
                                        const std::vector<LinearFunctional>& t2,
                                        const ExtractOptions& opt);

}  // namespace pcpkit::composed

#endif
