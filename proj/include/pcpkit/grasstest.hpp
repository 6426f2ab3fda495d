#ifndef PCPKIT_GRASSTEST_HPP_
#define PCPKIT_GRASSTEST_HPP_

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcpkit/bilinear.hpp"
#include "pcpkit/f2.hpp"
#include "pcpkit/numbers.hpp"
#include "pcpkit/rng.hpp"

namespace pcpkit::grasstest {

// A linear functional on a subspace.  The coefficient word is reduced
// against the domain: only the domain's pivot columns may be set, so two
// equal functionals always have identical representations.
struct LinearFunctional {
  std::size_t ambient_dim = 0;
  f2::Word coeff = 0;
  f2::Subspace domain;

  LinearFunctional() = default;
  // Canonicalizes an arbitrary global coefficient word against the domain.
  LinearFunctional(const f2::Subspace& domain_, f2::Word global_coeff);

  // Value on x; callers keep x inside the domain.
  int eval(f2::Word x) const { return f2::parity(coeff & x); }

  // The same functional on a subspace of the domain.
  LinearFunctional restrict_to(const f2::Subspace& sub) const;

  bool operator==(const LinearFunctional&) const = default;
  auto operator<=>(const LinearFunctional&) const = default;
};

nlohmann::json functional_to_json(const LinearFunctional& g);
LinearFunctional functional_from_json(const nlohmann::json& j);

// Assignment tables for the consistency test: t1 assigns a functional to
// every dim_top subspace, t2 to every dim_bot subspace.
struct TablePair {
  std::size_t n = 0;
  std::size_t dim_top = 0;
  std::size_t dim_bot = 0;
  std::map<f2::Subspace, LinearFunctional> t1;
  std::map<f2::Subspace, LinearFunctional> t2;

  TablePair() = default;
  // Validates stratum coverage and domain agreement.
  TablePair(std::size_t n_, std::size_t dim_top_, std::size_t dim_bot_,
            std::map<f2::Subspace, LinearFunctional> t1_,
            std::map<f2::Subspace, LinearFunctional> t2_);

  // t1 from one global coefficient word, t2 from another (pass the same
  // word twice for a globally consistent pair).
  static TablePair from_globals(std::size_t n, std::size_t dim_top,
                                std::size_t dim_bot, f2::Word top_coeff,
                                f2::Word bot_coeff);
};

nlohmann::json tables_to_json(const TablePair& tp);
TablePair tables_from_json(const nlohmann::json& j);

// A set of l-dimensional subspaces of F2^n.
struct SubspaceFamily {
  std::size_t n = 0;
  std::size_t l = 0;
  std::set<f2::Subspace> members;

  SubspaceFamily() = default;
  SubspaceFamily(std::size_t n_, std::size_t l_);
  SubspaceFamily(std::size_t n_, std::size_t l_,
                 std::set<f2::Subspace> members_);

  bool contains(const f2::Subspace& s) const { return members.count(s) > 0; }
  Rational density() const;
};

struct ZoomPair {
  f2::Subspace q;
  f2::Subspace w;
};

// Fraction of the zoom {L : q <= L <= w, dim L = fam.l} lying in fam.
// Returns 0 on an empty zoom.
Rational zoom_density(const SubspaceFamily& fam, const f2::Subspace& q,
                      const f2::Subspace& w);

struct FamilyPseudorandomness {
  Rational epsilon;  // max zoom density over all size-r zooms
  ZoomPair witness;
};

// Max of zoom_density over all pairs q <= w with dim(q) + codim(w) = r.
FamilyPseudorandomness family_pseudorandomness(const SubspaceFamily& fam,
                                               std::size_t r);

// Indicator of matrices in F2^{n x l} whose column span belongs to the
// family.  Column-dependent matrices map to 0.  Basis invariant.
bilinear::BilinearFn lift_indicator(const SubspaceFamily& fam);

// Checks that the lift of an (r, eps)-pseudo-random family is (r, 2 eps)-
// pseudo-random on the matrix side.  Both sides are exact: zoom sets in
// matrix space are affine, so their boolean means are dyadic rationals.
struct LiftTransfer {
  Rational family_epsilon;
  Rational lift_max_mean_square;
  bool holds = false;
};
LiftTransfer lift_transfer_check(const SubspaceFamily& fam, std::size_t r);

struct ConsistencyResult {
  bool exact = false;
  Rational probability;             // exact mode only
  double estimate = 0.0;            // both modes
  double ci_low = 0.0;              // Monte-Carlo: 99% Clopper-Pearson band
  double ci_high = 0.0;
  std::uint64_t trials = 0;
  std::uint64_t successes = 0;
};

// The (k+1)-query test: draw R uniformly, then L_1..L_k uniformly and
// independently among superspaces of R, and accept when every t1[L_i]
// restricts to t2[R] on R.
ConsistencyResult run_consistency_test_exact(const TablePair& tp,
                                             std::size_t k);
ConsistencyResult run_consistency_test_mc(const TablePair& tp, std::size_t k,
                                          std::uint64_t trials,
                                          std::uint64_t seed,
                                          unsigned threads = 1);

struct HyperedgeReport {
  Rational probability;    // Pr[R in rfam and every L_i in lfam]
  Rational inner_product;  // <(T F)^k, G> for the lifted indicators
  bool margin_holds = false;
};

// Exact hyperedge probability next to the matrix-side inner product.  When
// (l_top + c k) 2^{l_top} <= 2^{n-1} (the union-bound margin; c is the
// column gap) the probability is asserted to be at most twice the inner
// product, anchor "edges-vs-inner-product".
HyperedgeReport count_hyperedges(const SubspaceFamily& rfam,
                                 const SubspaceFamily& lfam, std::size_t k);

struct MaximalPair {
  f2::Subspace w;
  LinearFunctional g;
  Rational agreement;
};

// All (W, g) with q <= W, codim(W) <= max_codim, agreement at least C over
// the table entries between q and W, such that no strictly larger zoom-out
// carrying an extension of g reaches agreement s*C.  The table must cover
// every key the searched zooms can reach.
std::vector<MaximalPair> find_maximal_pairs(
    const std::map<f2::Subspace, LinearFunctional>& t, const f2::Subspace& q,
    double C, double s, std::size_t max_codim,
    std::uint64_t cap = f2::kDefaultEnumCap);

struct BksSample {
  f2::Word f_coeff = 0;
  Rational mu_top;            // density of {L : f agrees with t1[L]}
  Rational mu_bot;            // density of {R : f agrees with t2[R]}
  Rational edge_probability;  // hyperedge probability between the two sets
};

struct BksReport {
  bool exhaustive = false;
  std::size_t k = 0;
  std::vector<BksSample> samples;
  Rational mean_mu_bot;
  Rational expected_mu_bot;  // 2^{-dim_bot}
  double mean_mu_top = 0.0;
  double mean_edge_probability = 0.0;
  std::string note;
};

// Draws global linear functionals f (all 2^n of them when samples == 0) and
// measures the agreement sets S_{L,f}, S_{R,f} and the hyperedges between
// them.  In exhaustive mode the mean bottom density is asserted to equal
// 2^{-dim_bot} exactly, anchor "bks-mean-bottom-density".
BksReport bks_experiment(const TablePair& tp, std::size_t k,
                         std::uint64_t samples, std::uint64_t seed);

}  // namespace pcpkit::grasstest

#endif
