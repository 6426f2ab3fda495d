#ifndef PCPKIT_OUTERPCP_HPP_
#define PCPKIT_OUTERPCP_HPP_

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcpkit/f2.hpp"
#include "pcpkit/numbers.hpp"
#include "pcpkit/rng.hpp"
#include "pcpkit/stats.hpp"

namespace pcpkit::outerpcp {

// A single F2 equation x_a + x_b + x_c = rhs on three distinct variables.
struct Lin3Equation {
  std::array<std::size_t, 3> vars{};  // sorted ascending
  int rhs = 0;

  bool operator==(const Lin3Equation&) const = default;
};

// Sparse 3Lin instance.  Structural invariants: every equation touches
// exactly three distinct variables, every variable appears in at most 10
// equations, and two distinct equations share at most one variable.
struct Gap3LinInstance {
  std::size_t n_vars = 0;
  std::vector<Lin3Equation> equations;

  Gap3LinInstance() = default;
  // Sorts each triple and validates the structural invariants.
  Gap3LinInstance(std::size_t n_vars_, std::vector<Lin3Equation> equations_);

  bool operator==(const Gap3LinInstance&) const = default;
};

// JSON: {"n_vars": n, "equations": [{"vars": [a,b,c], "rhs": 0|1}, ...]}.
nlohmann::json lin3_to_json(const Gap3LinInstance& inst);
Gap3LinInstance lin3_from_json(const nlohmann::json& j);

// Fraction of satisfied equations.  The assignment holds one bit per
// variable; an empty equation list is a domain error.
Rational lin3_value(const Gap3LinInstance& inst,
                    const std::vector<int>& assignment);

struct Planted3Lin {
  Gap3LinInstance inst;
  std::vector<int> assignment;  // the planted bits
  std::size_t n_flipped = 0;    // equations whose rhs was flipped afterwards
};

// Random instance consistent with a planted assignment, then an exact
// round(eta * n_eqs) of the right-hand sides flipped at distinct positions.
// Equations are drawn by rejection against the structural invariants; when
// the total number of attempts exceeds `attempt_cap` a resource error is
// raised.
Planted3Lin gen_3lin(std::size_t n_vars, std::size_t n_eqs, double eta,
                     std::uint64_t seed, std::uint64_t attempt_cap = 200000);

// Game parameters: J equations per round, smoothness beta, r advice
// vectors.  The game regime keeps beta in [0,1); beta = 1 (every block
// reduced to a singleton) is accepted as a degenerate case for audits.
struct OuterConfig {
  std::size_t J = 1;
  double beta = 0.0;
  std::size_t r = 0;
  std::uint64_t seed = 0;
};

// One sampled round.  Coordinates of advice words follow the sorted
// variable lists: bit p of advice_u[j] is the coefficient of u_vars[p].
// When the J equations share variables the per-block advice contributions
// add in F2 on the shared coordinate; the agreement invariant below is
// preserved either way.
struct QuestionPair {
  std::vector<std::size_t> eqs;      // indices into inst.equations
  std::vector<int> v_choice;        // per block: -1 keeps U_i, else slot 0..2
  std::vector<std::size_t> u_vars;  // sorted union of the J variable triples
  std::vector<std::size_t> v_vars;  // sorted union of the chosen V_i
  std::vector<f2::Word> advice_u;   // r words over u_vars
  std::vector<f2::Word> advice_v;   // r words over v_vars; advice_u[j]
                                    // agrees with advice_v[j] on V and is 0
                                    // on U minus V
};

QuestionPair sample_question(const Gap3LinInstance& inst,
                             const OuterConfig& cfg, Rng& rng);

// What one prover sees: its variable list and its advice words.
struct ProverView {
  std::vector<std::size_t> vars;
  std::vector<f2::Word> advice;
};

// Bit p of the returned word is the answer for view.vars[p].
using ProverStrategy = std::function<f2::Word(const ProverView&)>;

// Reserved answer meaning the prover gives up; the verifier rejects the
// round outright.  It can collide with a genuine answer only when a view
// carries 64 variables that are all assigned one, far beyond desk scale.
inline constexpr f2::Word kGiveUpAnswer = ~f2::Word{0};

// Both provers read the fixed assignment off their variable lists.
ProverStrategy assignment_strategy(std::vector<int> assignment);
// Answers the bitwise complement of the assignment.
ProverStrategy complement_strategy(std::vector<int> assignment);

// Monte-Carlo value of the round: the verifier accepts when the answers
// agree on V and the first prover's answers satisfy all J equations.
// Returns a 99% Clopper-Pearson band; per-trial seeds make the outcome
// independent of the thread count.
BinomialCi play_game(const Gap3LinInstance& inst, const OuterConfig& cfg,
                     const ProverStrategy& first, const ProverStrategy& second,
                     std::uint64_t trials, std::uint64_t seed,
                     unsigned threads = 1);

// Small adversarial search: both provers play the same global assignment,
// over `n_candidates` candidates (all-zeros plus random assignments).  The
// best observed value is reported, never asserted against.
struct StrategySearchReport {
  BinomialCi best;
  std::vector<int> best_assignment;
  std::size_t n_candidates = 0;
};
StrategySearchReport search_strategies(const Gap3LinInstance& inst,
                                       const OuterConfig& cfg,
                                       std::size_t n_candidates,
                                       std::uint64_t trials,
                                       std::uint64_t seed);

// A first-prover question whose 3J variables are all distinct, reduced to
// coordinates: ambient F2^{3J}, block i owning three coordinate positions.
// The blocks partition 0..3J-1.
struct QuestionCoords {
  std::size_t J = 0;
  std::vector<std::array<std::size_t, 3>> blocks;

  std::size_t ambient() const { return 3 * J; }
};

// Consecutive blocks {3i, 3i+1, 3i+2}.
QuestionCoords make_question_coords(std::size_t J);

// Coordinates of a concrete question: position p is the p-th smallest
// variable in the union.  The 3J variables must be distinct.
QuestionCoords question_coords(const Gap3LinInstance& inst,
                               const std::vector<std::size_t>& eqs);

// Shared report for the statistical-distance and retention experiments.
// In exact mode the estimate is computed in rational arithmetic over the
// full outcome mixture and the band collapses to the point estimate.
struct SdReport {
  double estimate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double bound = 0.0;
  bool asserted = false;  // the bound comparison ran
  bool exact = false;
  std::size_t cells = 0;         // support cells seen (exact: of the lifted law)
  std::uint64_t samples = 0;     // per-distribution draws in Monte-Carlo mode
  std::uint64_t collisions = 0;  // digest-cell collisions, 0 outside digest mode
};

nlohmann::json sd_report_to_json(const SdReport& r);

// Distance between the uniform law on r1-dimensional subspaces of F2^U and
// the law lifted from F2^V (V per the smoothing step, zero-filled).  Exact
// mixture enumeration when the work fits `exact_cap`, otherwise Monte-Carlo
// with `samples` draws per side; cells are keyed by canonical basis, or by
// a 64-bit digest when the subspace count exceeds `cell_cap`.  Asserts
// estimate - deviation <= beta sqrt(J) 2^{r1+4}, anchor
// "covering-advice-bound".
SdReport covering_sd_advice(const QuestionCoords& coords, std::size_t r1,
                            double beta, std::uint64_t samples,
                            std::uint64_t seed,
                            std::uint64_t exact_cap = 1u << 20,
                            std::uint64_t cell_cap = 1u << 20);
SdReport covering_sd_advice(const Gap3LinInstance& inst,
                            const std::vector<std::size_t>& eqs,
                            std::size_t r1, double beta,
                            std::uint64_t samples, std::uint64_t seed,
                            std::uint64_t exact_cap = 1u << 20,
                            std::uint64_t cell_cap = 1u << 20);

// Distance between the uniform law on {L : q <= L <= w, dim L = ell2} and
// the smoothed law (L drawn above q inside F2^V, conditioned on landing in
// w).  The bound sqrt(beta) J^{1/4} 2^{ell2+5} 2^{r'(ell2-r)+5} is asserted
// only when it is below 1 (anchor "covering-zoom-bound"), otherwise it is
// reported as vacuous.
SdReport covering_sd_zoom(const QuestionCoords& coords, std::size_t ell2,
                          const f2::Subspace& q, const f2::Subspace& w,
                          double beta, std::uint64_t samples,
                          std::uint64_t seed,
                          std::uint64_t exact_cap = 1u << 20,
                          std::uint64_t cell_cap = 1u << 20);

// Zoom-in side of the covering statement: the fraction of r-dimensional
// zoom-ins q whose every codimension-r' zoom-out w above them keeps
// SD(uniform, smoothed) within the per-pair bound.  Enumerates all q when
// `zoomin_samples` is 0.  Asserts fraction + deviation >= 1 - sqrt(beta)
// J^{1/4}, anchor "covering-zoom-fraction".
struct ZoomFractionReport {
  double fraction = 0.0;
  double ci_low = 0.0;
  double threshold = 0.0;       // 1 - sqrt(beta) J^{1/4}
  double per_pair_bound = 0.0;  // shared by every (q, w) pair
  bool vacuous = false;         // per-pair bound >= 1, every pair passes
  bool asserted = false;
  bool exhaustive = false;
  std::size_t n_zoomins = 0;
  std::size_t n_pairs = 0;
  double max_sd = 0.0;
};

nlohmann::json zoom_fraction_report_to_json(const ZoomFractionReport& r);

ZoomFractionReport covering_zoom_fraction(const QuestionCoords& coords,
                                          std::size_t ell2, std::size_t r,
                                          std::size_t rprime, double beta,
                                          std::uint64_t zoomin_samples,
                                          std::uint64_t sd_samples,
                                          std::uint64_t seed,
                                          std::uint64_t exact_cap = 1u << 20,
                                          std::uint64_t cell_cap = 1u << 20);

// Probability over the smoothed V that a codimension-s subspace w of F2^U
// loses more than s dimensions when intersected with F2^V, i.e.
// dim(w cap F2^V) != |V| - s.  Exact over the 4^J outcome mixture when it
// fits `exact_cap`, Monte-Carlo otherwise.  Asserts estimate - deviation
// <= 2^{s+3} beta^2 J, anchor "retain-codim-bound".
SdReport retain_codim_experiment(const QuestionCoords& coords,
                                 const f2::Subspace& w, double beta,
                                 std::uint64_t samples, std::uint64_t seed,
                                 std::uint64_t exact_cap = 1u << 20);

}  // namespace pcpkit::outerpcp

#endif
