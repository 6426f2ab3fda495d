#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "pcpkit/errors.hpp"
#include "pcpkit/grasstest.hpp"
#include "pcpkit/rng.hpp"
#include "pcpkit/stats.hpp"

using namespace pcpkit;
using grasstest::LinearFunctional;
using grasstest::SubspaceFamily;
using grasstest::TablePair;

namespace {

std::vector<f2::Word> subspace_members(const f2::Subspace& s) {
  std::vector<f2::Word> out;
  const auto& rows = s.basis();
  for (std::uint64_t sel = 0; sel < (std::uint64_t{1} << rows.size()); ++sel) {
    f2::Word v = 0;
    for (std::size_t i = 0; i < rows.size(); ++i)
      if ((sel >> i) & 1u) v ^= rows[i];
    out.push_back(v);
  }
  return out;
}

std::map<f2::Subspace, LinearFunctional> random_table(std::size_t n,
                                                      std::size_t dim,
                                                      Rng& rng) {
  std::map<f2::Subspace, LinearFunctional> t;
  for (const auto& key : f2::enumerate_grassmann(n, dim))
    t.emplace(key, LinearFunctional(key, rng.word(n)));
  return t;
}

TablePair random_tables(std::size_t n, std::size_t dt, std::size_t db,
                        Rng& rng) {
  return TablePair(n, dt, db, random_table(n, dt, rng),
                   random_table(n, db, rng));
}

SubspaceFamily random_family(std::size_t n, std::size_t l, double density,
                             Rng& rng) {
  std::set<f2::Subspace> members;
  for (const auto& s : f2::enumerate_grassmann(n, l))
    if (rng.real() < density) members.insert(s);
  return SubspaceFamily(n, l, std::move(members));
}

// A functional on `dom` with prescribed values on prescribed vectors.
LinearFunctional functional_with_values(
    const f2::Subspace& dom, const std::vector<std::pair<f2::Word, int>>& vals) {
  f2::LinearSystem sys(dom.ambient_dim());
  for (const auto& [v, b] : vals) REQUIRE(sys.add(v, b));
  return LinearFunctional(dom, sys.solve_coefficients());
}

// All functionals on `sup` that restrict to g, built independently of the
// library's extension enumeration.
std::vector<LinearFunctional> oracle_extensions(const LinearFunctional& g,
                                                const f2::Subspace& sup) {
  std::vector<LinearFunctional> out;
  for (std::uint64_t w = 0; w < (std::uint64_t{1} << sup.ambient_dim()); ++w) {
    const LinearFunctional cand(sup, w);
    if (cand.restrict_to(g.domain) == g) out.push_back(cand);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Brute-force re-check of both maximality clauses.
void verify_maximal_pair(const std::map<f2::Subspace, LinearFunctional>& t,
                         const f2::Subspace& q, double C, double s,
                         const grasstest::MaximalPair& pair) {
  const std::size_t n = q.ambient_dim();
  REQUIRE(f2::contains(pair.w, q));

  std::size_t hits = 0, total = 0;
  for (const auto& [l, g] : t) {
    if (!(f2::contains(l, q) && f2::contains(pair.w, l))) continue;
    ++total;
    if (pair.g.restrict_to(l) == g) ++hits;
  }
  REQUIRE(total > 0);
  CHECK(Rational(BigInt(hits), BigInt(total)) == pair.agreement);
  CHECK(to_double(pair.agreement) >= C);

  for (std::size_t d = pair.w.dim() + 1; d <= n; ++d) {
    for (const auto& sup : f2::enumerate_grassmann(n, d)) {
      if (!f2::contains(sup, pair.w)) continue;
      for (const auto& ext : oracle_extensions(pair.g, sup)) {
        std::size_t h2 = 0, tot2 = 0;
        for (const auto& [l, g] : t) {
          if (!(f2::contains(l, q) && f2::contains(sup, l))) continue;
          ++tot2;
          if (ext.restrict_to(l) == g) ++h2;
        }
        if (tot2 == 0) continue;
        CHECK(static_cast<double>(h2) / static_cast<double>(tot2) < s * C);
      }
    }
  }
}

}  // namespace

TEST_CASE("LinearFunctional: canonical form, eval oracle, restriction") {
  const f2::Subspace dom(3, {0b110, 0b011});
  // Coefficient words that agree on the basis rows collapse together.
  for (f2::Word a = 0; a < 8; ++a) {
    for (f2::Word b = 0; b < 8; ++b) {
      const bool same_values = f2::parity(a & 0b110) == f2::parity(b & 0b110) &&
                               f2::parity(a & 0b011) == f2::parity(b & 0b011);
      CHECK((LinearFunctional(dom, a) == LinearFunctional(dom, b)) ==
            same_values);
    }
  }
  // eval agrees with the raw parity of the source word on every member.
  for (f2::Word w = 0; w < 8; ++w) {
    const LinearFunctional g(dom, w);
    for (const f2::Word x : subspace_members(dom))
      CHECK(g.eval(x) == f2::parity(w & x));
    // Only pivot columns of the domain may carry coefficient bits.
    for (std::size_t c = 0; c < 3; ++c) {
      if ((g.coeff >> c) & 1u) {
        const auto pivots = dom.pivot_cols();
        CHECK(std::count(pivots.begin(), pivots.end(), c) == 1);
      }
    }
  }
  // Restriction keeps values.
  const f2::Subspace sub(3, {0b110});
  const LinearFunctional g(dom, 0b101);
  const LinearFunctional h = g.restrict_to(sub);
  for (const f2::Word x : subspace_members(sub)) CHECK(h.eval(x) == g.eval(x));
  CHECK_THROWS_AS((void)h.restrict_to(dom), domain_error);
  // JSON round trip.
  const LinearFunctional back =
      grasstest::functional_from_json(grasstest::functional_to_json(g));
  CHECK(back == g);
}

TEST_CASE("TablePair: construction validates coverage and domains") {
  const TablePair tp = TablePair::from_globals(4, 2, 1, 0b1010, 0b1010);
  CHECK(BigInt(tp.t1.size()) == f2::gaussian_binomial(4, 2));
  CHECK(BigInt(tp.t2.size()) == f2::gaussian_binomial(4, 1));

  auto t1 = tp.t1;
  auto t2 = tp.t2;
  t2.erase(t2.begin());
  CHECK_THROWS_AS(TablePair(4, 2, 1, t1, t2), domain_error);
  CHECK_THROWS_AS(TablePair(4, 2, 2, tp.t1, tp.t2), domain_error);

  // Functional stored under a key that is not its domain.
  auto bad = tp.t2;
  const auto first_key = bad.begin()->first;
  const auto second = std::next(bad.begin());
  bad.at(first_key) = second->second;
  CHECK_THROWS_AS(TablePair(4, 2, 1, tp.t1, bad), domain_error);

  const TablePair rt = grasstest::tables_from_json(grasstest::tables_to_json(tp));
  CHECK(rt.n == tp.n);
  CHECK(rt.t1 == tp.t1);
  CHECK(rt.t2 == tp.t2);
}

TEST_CASE("consistency test: globally consistent tables pass with prob 1") {
  for (std::size_t n : {5, 6}) {
    const TablePair tp = TablePair::from_globals(n, 2, 1, 0b10011, 0b10011);
    for (std::size_t k : {1, 2, 3}) {
      const auto res = grasstest::run_consistency_test_exact(tp, k);
      CHECK(res.probability == Rational(1));
    }
  }
}

TEST_CASE("consistency test: mismatched globals land on the kernel fraction") {
  const std::size_t n = 6;
  const f2::Word f = 0b101101, g = 0b011001;
  const TablePair tp = TablePair::from_globals(n, 2, 1, f, g);
  const Rational expected(f2::gaussian_binomial(n - 1, 1),
                          f2::gaussian_binomial(n, 1));
  CHECK(expected == Rational(31, 63));
  for (std::size_t k : {1, 2, 3}) {
    const auto res = grasstest::run_consistency_test_exact(tp, k);
    CHECK(res.probability == expected);
  }
}

TEST_CASE("consistency test: k=1 equals direct pair enumeration") {
  Rng rng(SeedTree(20260815).child("pairs").seed());
  const std::size_t n = 4;
  for (int trial = 0; trial < 5; ++trial) {
    const TablePair tp = random_tables(n, 2, 1, rng);
    const auto res = grasstest::run_consistency_test_exact(tp, 1);
    BigInt matches = 0, pairs = 0;
    for (const auto& [r, bot] : tp.t2) {
      for (const auto& l :
           f2::enumerate_zoom(r, f2::Subspace::full(n), 2)) {
        ++pairs;
        if (tp.t1.at(l).restrict_to(r) == bot) ++matches;
      }
    }
    CHECK(res.probability == Rational(matches, pairs));
  }
}

TEST_CASE("consistency test: Monte-Carlo tracks the exact value") {
  Rng rng(SeedTree(20260815).child("mc").seed());
  const TablePair consistent = TablePair::from_globals(5, 2, 1, 0b11, 0b11);
  const auto one =
      grasstest::run_consistency_test_mc(consistent, 2, 500, rng.bits64());
  CHECK(one.estimate == 1.0);
  CHECK(one.ci_high == 1.0);

  const TablePair tp = random_tables(5, 2, 1, rng);
  const auto exact = grasstest::run_consistency_test_exact(tp, 2);
  const auto mc =
      grasstest::run_consistency_test_mc(tp, 2, 4000, rng.bits64());
  CHECK(mc.trials == 4000);
  CHECK(mc.ci_low <= to_double(exact.probability));
  CHECK(to_double(exact.probability) <= mc.ci_high);
  // Thread count must not change the outcome.
  const auto mc4 = grasstest::run_consistency_test_mc(tp, 2, 4000, 7, 4);
  const auto mc1 = grasstest::run_consistency_test_mc(tp, 2, 4000, 7, 1);
  CHECK(mc4.successes == mc1.successes);
}

TEST_CASE("consistency test: random tables match the collision-aware mean") {
  // With fresh uniform functionals in both tables, a bottom check passes
  // with probability 2^-dim_bot; for k=2 the two checks coincide when the
  // same top space is drawn twice, which at this scale happens with
  // probability 1/7, so the expected pass rate is (6/7)/4 + (1/7)/2 = 2/7.
  Rng rng(SeedTree(20260815).child("tablemean").seed());
  const std::size_t n = 4, draws = 200;
  for (std::size_t k : {1, 2}) {
    std::vector<double> probs;
    for (std::size_t i = 0; i < draws; ++i) {
      const TablePair tp = random_tables(n, 2, 1, rng);
      probs.push_back(
          to_double(grasstest::run_consistency_test_exact(tp, k).probability));
    }
    double mean = 0;
    for (double p : probs) mean += p;
    mean /= probs.size();
    double var = 0;
    for (double p : probs) var += (p - mean) * (p - mean);
    var /= probs.size() - 1;
    const double sigma_mean = std::sqrt(var / probs.size());
    const double n_l = 7.0;
    const double expected =
        (k == 1) ? 0.5 : (1.0 - 1.0 / n_l) * 0.25 + (1.0 / n_l) * 0.5;
    CHECK(std::abs(mean - expected) <= 3.0 * sigma_mean + 1e-12);
  }
}

TEST_CASE("family pseudorandomness: trivial families and planted vector") {
  const SubspaceFamily empty(4, 2);
  CHECK(grasstest::family_pseudorandomness(empty, 1).epsilon == Rational(0));

  std::set<f2::Subspace> all;
  for (const auto& s : f2::enumerate_grassmann(4, 2)) all.insert(s);
  const SubspaceFamily full(4, 2, all);
  CHECK(grasstest::family_pseudorandomness(full, 1).epsilon == Rational(1));

  // Family of planes through a fixed vector: the zoom-in on that vector
  // saturates, so epsilon = 1 with that witness.
  const f2::Word q0 = 0b1011;
  std::set<f2::Subspace> through;
  for (const auto& s : f2::enumerate_grassmann(4, 2))
    if (s.contains_vector(q0)) through.insert(s);
  const SubspaceFamily planted(4, 2, through);
  CHECK(planted.density() == Rational(7, 35));
  const auto pr = grasstest::family_pseudorandomness(planted, 1);
  CHECK(pr.epsilon == Rational(1));
  CHECK(pr.witness.q == f2::Subspace(4, {q0}));
  CHECK(pr.witness.w == f2::Subspace::full(4));
}

TEST_CASE("family pseudorandomness: agrees with a direct zoom sweep") {
  Rng rng(SeedTree(20260815).child("famps").seed());
  const std::size_t n = 4, l = 2;
  const auto grass = f2::enumerate_grassmann(n, l);
  for (int trial = 0; trial < 5; ++trial) {
    const SubspaceFamily fam = random_family(n, l, 0.4, rng);
    for (std::size_t r : {1, 2}) {
      const auto pr = grasstest::family_pseudorandomness(fam, r);
      // Oracle: filter the full stratum against every (Q, W) pair built
      // from scratch.
      Rational best(0);
      for (std::size_t a = 0; a <= std::min(r, l); ++a) {
        const std::size_t b = r - a;
        if (b > n - l) continue;
        for (const auto& q : f2::enumerate_grassmann(n, a)) {
          for (const auto& w : f2::enumerate_codim_superspaces(q, b)) {
            std::size_t hits = 0, total = 0;
            for (const auto& s : grass) {
              if (!(f2::contains(s, q) && f2::contains(w, s))) continue;
              ++total;
              if (fam.contains(s)) ++hits;
            }
            if (total > 0)
              best = std::max(best, Rational(BigInt(hits), BigInt(total)));
          }
        }
      }
      CHECK(pr.epsilon == best);
      CHECK(grasstest::zoom_density(fam, pr.witness.q, pr.witness.w) ==
            pr.epsilon);
    }
  }
}

TEST_CASE("lift_indicator: membership, counts, basis invariance") {
  Rng rng(SeedTree(20260815).child("lift").seed());
  const std::size_t n = 4, l = 2;

  const SubspaceFamily empty(n, l);
  for (double v : grasstest::lift_indicator(empty).values) CHECK(v == 0.0);

  std::set<f2::Subspace> all;
  for (const auto& s : f2::enumerate_grassmann(n, l)) all.insert(s);
  const auto lift_full = grasstest::lift_indicator(SubspaceFamily(n, l, all));
  for (std::uint64_t idx = 0; idx < lift_full.size(); ++idx)
    CHECK(lift_full.values[idx] ==
          ((bilinear::rank_of_index(idx, n, l) == l) ? 1.0 : 0.0));

  const SubspaceFamily fam = random_family(n, l, 0.5, rng);
  const auto lift = grasstest::lift_indicator(fam);
  // Each member span is hit by exactly (2^l - 1)(2^l - 2) matrices.
  std::uint64_t ones = 0;
  for (double v : lift.values) ones += (v != 0.0) ? 1 : 0;
  CHECK(ones == fam.members.size() * 6);
  CHECK(bilinear::is_basis_invariant(lift));
}

TEST_CASE("lift transfer: pseudorandomness carries to the matrix side") {
  Rng rng(SeedTree(20260815).child("transfer").seed());
  for (int trial = 0; trial < 4; ++trial) {
    const SubspaceFamily fam = random_family(4, 2, 0.3 + 0.1 * trial, rng);
    for (std::size_t r : {1, 2}) {
      const auto tc = grasstest::lift_transfer_check(fam, r);
      CHECK(tc.holds);
      CHECK(tc.lift_max_mean_square <= 2 * tc.family_epsilon);
    }
  }
}

TEST_CASE("count_hyperedges: extremes and the exact oracle") {
  const std::size_t n = 6;
  std::set<f2::Subspace> all_l, all_r;
  for (const auto& s : f2::enumerate_grassmann(n, 2)) all_l.insert(s);
  for (const auto& s : f2::enumerate_grassmann(n, 1)) all_r.insert(s);
  const SubspaceFamily lfull(n, 2, all_l);
  const SubspaceFamily rfull(n, 1, all_r);
  const SubspaceFamily lempty(n, 2);

  const auto full_rep = grasstest::count_hyperedges(rfull, lfull, 2);
  CHECK(full_rep.probability == Rational(1));
  CHECK(full_rep.margin_holds);

  CHECK(grasstest::count_hyperedges(rfull, lempty, 2).probability ==
        Rational(0));

  Rng rng(SeedTree(20260815).child("edges").seed());
  const SubspaceFamily lfam = random_family(n, 2, 0.5, rng);
  const SubspaceFamily rfam = random_family(n, 1, 0.5, rng);
  const auto rep = grasstest::count_hyperedges(rfam, lfam, 2);

  // Oracle: enumerate (R, L1, L2) tuples directly.
  BigInt matches = 0, tuples = 0;
  for (const auto& r : f2::enumerate_grassmann(n, 1)) {
    const auto zoom = f2::enumerate_zoom(r, f2::Subspace::full(n), 2);
    for (const auto& l1 : zoom) {
      for (const auto& l2 : zoom) {
        ++tuples;
        if (rfam.contains(r) && lfam.contains(l1) && lfam.contains(l2))
          ++matches;
      }
    }
  }
  CHECK(rep.probability == Rational(matches, tuples));

  // Floating-point path through the averaging operator agrees.
  const auto tf = bilinear::apply_T(grasstest::lift_indicator(lfam), 1);
  const auto g = grasstest::lift_indicator(rfam);
  double inner = 0;
  for (std::uint64_t i = 0; i < g.size(); ++i)
    inner += tf.values[i] * tf.values[i] * g.values[i];
  inner /= static_cast<double>(g.size());
  CHECK(std::abs(to_double(rep.inner_product) - inner) < 1e-9);

  CHECK(rep.margin_holds);
  CHECK(rep.probability <= 2 * rep.inner_product);

  // Tight ambient space: the margin flag drops, nothing is asserted.
  Rng rng4(SeedTree(20260815).child("edges4").seed());
  const SubspaceFamily lf4 = random_family(4, 2, 0.5, rng4);
  const SubspaceFamily rf4 = random_family(4, 1, 0.5, rng4);
  CHECK(!grasstest::count_hyperedges(rf4, lf4, 2).margin_holds);
}

TEST_CASE("find_maximal_pairs: a global table yields only the full space") {
  const std::size_t n = 4;
  const f2::Word f = 0b1101;
  std::map<f2::Subspace, LinearFunctional> t;
  for (const auto& l : f2::enumerate_grassmann(n, 2))
    t.emplace(l, LinearFunctional(l, f));
  const auto pairs =
      grasstest::find_maximal_pairs(t, f2::Subspace::zero(n), 0.6, 0.2, 2);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].w == f2::Subspace::full(n));
  CHECK(pairs[0].g == LinearFunctional(f2::Subspace::full(n), f));
  CHECK(pairs[0].agreement == Rational(1));
  verify_maximal_pair(t, f2::Subspace::zero(n), 0.6, 0.2, pairs[0]);
}

TEST_CASE("find_maximal_pairs: planted zoom-out is recovered exactly") {
  Rng rng(SeedTree(20260815).child("planted").seed());
  const std::size_t n = 5;
  const f2::Word f = 0b10110;
  // Planted zoom-out: a codimension-1 space W0, with the table equal to f
  // on every plane inside W0 and scrambled away from the two global
  // extensions elsewhere.
  const f2::Subspace w0 = f2::enumerate_codim_superspaces(
      f2::Subspace::zero(n), 1)[3];
  const f2::Word a = f2::annihilator(w0).basis()[0];
  std::map<f2::Subspace, LinearFunctional> t;
  for (const auto& l : f2::enumerate_grassmann(n, 2)) {
    if (f2::contains(w0, l)) {
      t.emplace(l, LinearFunctional(l, f));
      continue;
    }
    while (true) {
      const LinearFunctional cand(l, rng.word(n));
      if (cand == LinearFunctional(l, f)) continue;
      if (cand == LinearFunctional(l, f ^ a)) continue;
      t.emplace(l, cand);
      break;
    }
  }
  const double C = 0.9, s = 0.5;
  const auto pairs =
      grasstest::find_maximal_pairs(t, f2::Subspace::zero(n), C, s, 2);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].w == w0);
  CHECK(pairs[0].g == LinearFunctional(w0, f));
  CHECK(pairs[0].agreement == Rational(1));
  verify_maximal_pair(t, f2::Subspace::zero(n), C, s, pairs[0]);
}

TEST_CASE("find_maximal_pairs: random tables rarely clear a high bar") {
  Rng rng(SeedTree(20260815).child("randmax").seed());
  const std::size_t n = 4;
  for (int trial = 0; trial < 5; ++trial) {
    auto t = random_table(n, 2, rng);
    const auto pairs =
        grasstest::find_maximal_pairs(t, f2::Subspace::zero(n), 0.9, 0.2, 2);
    for (const auto& p : pairs)
      verify_maximal_pair(t, f2::Subspace::zero(n), 0.9, 0.2, p);
    CHECK(pairs.empty());
  }
}

TEST_CASE("bks experiment: exhaustive sweep hits the exact bottom density") {
  const std::size_t n = 5;
  const f2::Word g = 0b10011;
  const TablePair tp = TablePair::from_globals(n, 2, 1, g, g);
  const auto rep = grasstest::bks_experiment(tp, 2, 0, 0);
  CHECK(rep.exhaustive);
  CHECK(rep.samples.size() == 32);
  CHECK(rep.mean_mu_bot == rep.expected_mu_bot);
  CHECK(rep.expected_mu_bot == Rational(1, 2));
  // The matching functional sees the whole stratum on both sides.
  bool found = false;
  for (const auto& s : rep.samples) {
    if (s.f_coeff == g) {
      found = true;
      CHECK(s.mu_top == Rational(1));
      CHECK(s.mu_bot == Rational(1));
      CHECK(s.edge_probability == Rational(1));
    }
  }
  CHECK(found);
}

TEST_CASE("bks experiment: per-line flipped bottom table kills all edges") {
  const std::size_t n = 5;
  const f2::Word f0 = 0b01101;
  std::map<f2::Subspace, LinearFunctional> t1, t2;
  for (const auto& l : f2::enumerate_grassmann(n, 2))
    t1.emplace(l, LinearFunctional(l, f0));
  for (const auto& r : f2::enumerate_grassmann(n, 1)) {
    const f2::Word x = r.basis()[0];
    t2.emplace(r, functional_with_values(r, {{x, 1 ^ f2::parity(f0 & x)}}));
  }
  const TablePair tp(n, 2, 1, std::move(t1), std::move(t2));
  const auto rep = grasstest::bks_experiment(tp, 2, 0, 0);
  for (const auto& s : rep.samples) CHECK(s.edge_probability == Rational(0));
  CHECK(rep.mean_edge_probability == 0.0);

  // Sampled mode stays close to the exhaustive bottom density.
  const auto mc = grasstest::bks_experiment(tp, 2, 64, 99);
  CHECK(!mc.exhaustive);
  CHECK(mc.samples.size() == 64);
  CHECK(std::abs(to_double(mc.mean_mu_bot) - 0.5) < 0.25);
}
