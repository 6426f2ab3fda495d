#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "pcpkit/errors.hpp"
#include "pcpkit/f2.hpp"
#include "pcpkit/rng.hpp"
#include "pcpkit/stats.hpp"

using namespace pcpkit;
using f2::Subspace;
using f2::Word;

namespace {

// Independent oracle for Grassmann counts: enumerate every l-tuple of
// vectors in F2^n, close each span by repeated XOR, and dedupe the member
// bitmasks.  No RREF involved, so this checks the library path from the
// outside.
std::set<std::uint64_t> oracle_span_masks(std::size_t n, std::size_t l) {
  const std::size_t space = std::size_t{1} << n;
  std::vector<std::size_t> tuple(l, 0);
  std::set<std::uint64_t> spans;
  for (;;) {
    std::set<Word> members = {0};
    for (std::size_t i = 0; i < l; ++i) {
      const Word v = tuple[i];
      std::set<Word> next = members;
      for (Word m : members) next.insert(m ^ v);
      members = next;
    }
    std::uint64_t mask = 0;
    for (Word m : members) mask |= std::uint64_t{1} << m;
    spans.insert(mask);
    std::size_t i = 0;
    while (i < l && ++tuple[i] == space) tuple[i++] = 0;
    if (i == l) break;
  }
  return spans;
}

std::uint64_t oracle_grassmann_count(std::size_t n, std::size_t l) {
  std::uint64_t count = 0;
  for (std::uint64_t mask : oracle_span_masks(n, l)) {
    if (static_cast<std::size_t>(__builtin_popcountll(mask)) ==
        (std::size_t{1} << l))
      ++count;
  }
  return count;
}

std::set<Word> subspace_members(const Subspace& s) {
  std::set<Word> members = {0};
  for (Word b : s.basis()) {
    std::set<Word> next = members;
    for (Word m : members) next.insert(m ^ b);
    members = next;
  }
  return members;
}

}  // namespace

TEST_CASE("rank: frozen small cases") {
  CHECK(f2::rank({0b11, 0b11}) == 1);  // [[1,1],[1,1]]
  CHECK(f2::rank(std::vector<Word>{}) == 0);
  CHECK(f2::rank({0b0}) == 0);
  CHECK(f2::rank({0b1, 0b10, 0b100}) == 3);
  CHECK(f2::rank({0b110, 0b011, 0b101}) == 2);  // third row is the sum
}

TEST_CASE("rref: frozen canonical basis") {
  // span{110, 011} canonicalizes to {101, 011} (string position = coordinate).
  const Subspace s(3, {f2::word_from_string("110"), f2::word_from_string("011")});
  REQUIRE(s.dim() == 2);
  CHECK(f2::word_to_string(s.basis()[0], 3) == "101");
  CHECK(f2::word_to_string(s.basis()[1], 3) == "011");
}

TEST_CASE("rref: invariant under row operations and shuffles") {
  Rng rng(SeedTree(20260815).child("rref-invariance").seed());
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(7);
    const std::size_t l = rng.below(n + 1);
    const Subspace s = f2::sample_subspace(n, l, rng);
    std::vector<Word> rows = s.basis();
    // Random invertible row operations: adds and swaps.
    for (int op = 0; op < 40 && !rows.empty(); ++op) {
      const std::size_t i = rng.below(rows.size());
      const std::size_t j = rng.below(rows.size());
      if (i != j) {
        if (rng.coin())
          rows[i] ^= rows[j];
        else
          std::swap(rows[i], rows[j]);
      }
    }
    // Throw in redundant vectors (sums of pairs).
    if (rows.size() >= 2) rows.push_back(rows[0] ^ rows[1]);
    CHECK(Subspace(n, rows) == s);
  }
}

TEST_CASE("gaussian binomial: frozen values and oracle agreement") {
  CHECK(f2::gaussian_binomial(3, 1) == 7);
  CHECK(f2::gaussian_binomial(4, 2) == 35);
  CHECK(f2::gaussian_binomial(0, 0) == 1);
  CHECK(f2::gaussian_binomial(6, 3) == 1395);
  CHECK_THROWS_AS((void)f2::gaussian_binomial(2, 3), domain_error);
  for (std::size_t n = 0; n <= 4; ++n) {
    for (std::size_t l = 0; l <= n; ++l) {
      CHECK(f2::gaussian_binomial(n, l) == oracle_grassmann_count(n, l));
    }
  }
  // Pascal-style recurrence as an independent oracle for large inputs:
  // [n choose l]_2 = [n-1 choose l-1]_2 + 2^l * [n-1 choose l]_2.
  for (std::size_t n = 1; n <= 24; ++n) {
    for (std::size_t l = 1; l < n; ++l) {
      CHECK(f2::gaussian_binomial(n, l) ==
            f2::gaussian_binomial(n - 1, l - 1) +
                (BigInt(1) << l) * f2::gaussian_binomial(n - 1, l));
    }
  }
  // Values overflow 64 bits without trouble.
  CHECK(f2::gaussian_binomial(20, 10) > (BigInt(1) << 99));
}

TEST_CASE("enumerate_grassmann: counts, uniqueness, membership, order") {
  for (std::size_t n = 1; n <= 6; ++n) {
    for (std::size_t l = 0; l <= n; ++l) {
      const auto all = f2::enumerate_grassmann(n, l);
      CHECK(BigInt(all.size()) == f2::gaussian_binomial(n, l));
      CHECK(std::is_sorted(all.begin(), all.end()));
      CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
      for (const auto& s : all) {
        CHECK(s.dim() == l);
        CHECK(s.ambient_dim() == n);
      }
    }
  }
  // Deterministic: two runs agree element-wise.
  CHECK(f2::enumerate_grassmann(5, 2) == f2::enumerate_grassmann(5, 2));
}

TEST_CASE("enumerate_grassmann: frozen n=2 l=1 members") {
  const auto all = f2::enumerate_grassmann(2, 1);
  REQUIRE(all.size() == 3);
  std::set<std::string> got;
  for (const auto& s : all) got.insert(f2::word_to_string(s.basis()[0], 2));
  CHECK(got == std::set<std::string>{"10", "01", "11"});
}

TEST_CASE("enumerate_grassmann: matches independent span oracle at n=4") {
  for (std::size_t l = 0; l <= 4; ++l) {
    const auto all = f2::enumerate_grassmann(4, l);
    std::set<std::uint64_t> lib_masks;
    for (const auto& s : all) {
      std::uint64_t mask = 0;
      for (Word m : subspace_members(s)) mask |= std::uint64_t{1} << m;
      lib_masks.insert(mask);
    }
    std::set<std::uint64_t> oracle;
    for (std::uint64_t mask : oracle_span_masks(4, l)) {
      if (static_cast<std::size_t>(__builtin_popcountll(mask)) ==
          (std::size_t{1} << l))
        oracle.insert(mask);
    }
    CHECK(lib_masks == oracle);
  }
}

TEST_CASE("enumeration cap raises resource_error") {
  CHECK_THROWS_AS((void)f2::enumerate_grassmann(10, 5, 100), resource_error);
}

TEST_CASE("subspace algebra: frozen sum/intersect case") {
  const Subspace a(3, {f2::word_from_string("110"), f2::word_from_string("011")});
  const Subspace b(3, {f2::word_from_string("101")});
  CHECK(f2::sum(a, b) == a);  // 101 = 110 + 011 already lies in a
  CHECK(f2::intersect(a, b) == b);
  CHECK(f2::contains(a, b));
  CHECK(!f2::contains(b, a));
  CHECK(!f2::trivial_intersection(a, b));
  const Subspace c(3, {f2::word_from_string("100")});
  CHECK(f2::intersect(b, c).dim() == 0);
  CHECK(f2::trivial_intersection(b, c));
  CHECK(f2::sum(b, c).dim() == 2);
}

TEST_CASE("subspace algebra: dimension formula on random pairs") {
  Rng rng(SeedTree(20260815).child("dim-formula").seed());
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.below(8);
    const Subspace a = f2::sample_subspace(n, rng.below(n + 1), rng);
    const Subspace b = f2::sample_subspace(n, rng.below(n + 1), rng);
    const Subspace s = f2::sum(a, b);
    const Subspace i = f2::intersect(a, b);
    CHECK(a.dim() + b.dim() == s.dim() + i.dim());
    CHECK(f2::contains(s, a));
    CHECK(f2::contains(s, b));
    CHECK(f2::contains(a, i));
    CHECK(f2::contains(b, i));
    // Membership sanity against explicit member sets (n kept small enough).
    if (n <= 5) {
      const auto ma = subspace_members(a);
      const auto mb = subspace_members(b);
      std::set<Word> expect_i;
      for (Word v : ma)
        if (mb.count(v)) expect_i.insert(v);
      CHECK(subspace_members(i) == expect_i);
    }
  }
}

TEST_CASE("annihilator: dimension and duality") {
  Rng rng(SeedTree(20260815).child("annihilator").seed());
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(9);
    const Subspace a = f2::sample_subspace(n, rng.below(n + 1), rng);
    const Subspace ann = f2::annihilator(a);
    CHECK(ann.dim() == n - a.dim());
    for (Word x : ann.basis())
      for (Word v : a.basis()) CHECK(f2::parity(x & v) == 0);
    CHECK(f2::annihilator(ann) == a);
  }
}

TEST_CASE("kernel: hand case") {
  // Rows {110, 011} over 3 columns: kernel is span{111}.
  const Subspace k = f2::kernel(f2::Matrix(3, {0b011, 0b110}));
  REQUIRE(k.dim() == 1);
  CHECK(k.basis()[0] == 0b111);
}

TEST_CASE("complement_basis spans the gap") {
  Rng rng(SeedTree(20260815).child("complement").seed());
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(7);
    const Subspace sub = f2::sample_subspace(n, rng.below(n), rng);
    const Subspace super = f2::sample_superspace(sub, sub.dim() + rng.below(n - sub.dim() + 1), rng);
    const auto comp = f2::complement_basis(sub, super);
    CHECK(comp.size() == super.dim() - sub.dim());
    std::vector<Word> all = sub.basis();
    all.insert(all.end(), comp.begin(), comp.end());
    CHECK(f2::rank(all) == super.dim());
    CHECK(Subspace(n, all) == super);
  }
}

TEST_CASE("enumerate_zoom: frozen count and cross-check") {
  Rng rng(SeedTree(20260815).child("zoom").seed());
  const Subspace q = f2::sample_subspace(4, 1, rng);
  const Subspace w = Subspace::full(4);
  const auto zoom = f2::enumerate_zoom(q, w, 2);
  CHECK(zoom.size() == 7);  // [3 choose 1]_2
  for (const auto& l : zoom) {
    CHECK(f2::contains(l, q));
    CHECK(f2::contains(w, l));
    CHECK(l.dim() == 2);
  }
  // Cross-check against filtering the full Grassmann list.
  std::vector<Subspace> filtered;
  for (const auto& l : f2::enumerate_grassmann(4, 2))
    if (f2::contains(l, q)) filtered.push_back(l);
  CHECK(zoom == filtered);
}

TEST_CASE("enumerate_zoom: proper w and count formula") {
  Rng rng(SeedTree(20260815).child("zoom2").seed());
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 3 + rng.below(4);
    const Subspace q = f2::sample_subspace(n, rng.below(2), rng);
    const Subspace w = f2::sample_superspace(q, std::min(n, q.dim() + 2 + rng.below(2)), rng);
    for (std::size_t l = q.dim(); l <= w.dim(); ++l) {
      const auto zoom = f2::enumerate_zoom(q, w, l);
      CHECK(BigInt(zoom.size()) ==
            f2::gaussian_binomial(w.dim() - q.dim(), l - q.dim()));
    }
  }
}

TEST_CASE("enumerate_codim_superspaces: counts and membership") {
  Rng rng(SeedTree(20260815).child("codim").seed());
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 3 + rng.below(4);
    const Subspace p = f2::sample_subspace(n, rng.below(3), rng);
    for (std::size_t c = 0; c + p.dim() <= n && c <= 2; ++c) {
      const auto ws = f2::enumerate_codim_superspaces(p, c);
      CHECK(BigInt(ws.size()) == f2::gaussian_binomial(n - p.dim(), c));
      for (const auto& w : ws) {
        CHECK(w.dim() == n - c);
        CHECK(f2::contains(w, p));
      }
      // Cross-check against filtering.
      std::vector<Subspace> filtered;
      for (const auto& w : f2::enumerate_grassmann(n, n - c))
        if (f2::contains(w, p)) filtered.push_back(w);
      CHECK(ws == filtered);
    }
  }
}

TEST_CASE("sample_subspace: chi-squared uniformity on Grass(4,2)") {
  const auto all = f2::enumerate_grassmann(4, 2);
  REQUIRE(all.size() == 35);
  std::map<Subspace, std::size_t> index;
  for (std::size_t i = 0; i < all.size(); ++i) index[all[i]] = i;
  std::vector<std::uint64_t> counts(all.size(), 0);
  Rng rng(SeedTree(20260815).child("chi2-grass").seed());
  for (int draw = 0; draw < 35000; ++draw)
    counts[index.at(f2::sample_subspace(4, 2, rng))]++;
  const double stat = chi_squared_uniform_stat(counts);
  const double p = chi_squared_pvalue(stat, static_cast<double>(counts.size() - 1));
  CHECK(p > 0.001);
}

TEST_CASE("sample_superspace: chi-squared uniformity over a fixed base") {
  Rng rng(SeedTree(20260815).child("chi2-super").seed());
  const Subspace r = f2::sample_subspace(4, 1, rng);
  const auto cells = f2::enumerate_zoom(r, Subspace::full(4), 2);
  REQUIRE(cells.size() == 7);
  std::map<Subspace, std::size_t> index;
  for (std::size_t i = 0; i < cells.size(); ++i) index[cells[i]] = i;
  std::vector<std::uint64_t> counts(cells.size(), 0);
  for (int draw = 0; draw < 7000; ++draw)
    counts[index.at(f2::sample_superspace(r, 2, rng))]++;
  CHECK(chi_squared_pvalue(chi_squared_uniform_stat(counts),
                           static_cast<double>(counts.size() - 1)) > 0.001);
}

TEST_CASE("sample_in_zoom: chi-squared uniformity inside a proper zoom") {
  Rng rng(SeedTree(20260815).child("chi2-zoom").seed());
  const Subspace q = f2::sample_subspace(5, 1, rng);
  const Subspace w = f2::sample_superspace(q, 4, rng);
  const auto cells = f2::enumerate_zoom(q, w, 2);
  REQUIRE(cells.size() == 7);
  std::map<Subspace, std::size_t> index;
  for (std::size_t i = 0; i < cells.size(); ++i) index[cells[i]] = i;
  std::vector<std::uint64_t> counts(cells.size(), 0);
  for (int draw = 0; draw < 7000; ++draw)
    counts[index.at(f2::sample_in_zoom(q, w, 2, rng))]++;
  CHECK(chi_squared_pvalue(chi_squared_uniform_stat(counts),
                           static_cast<double>(counts.size() - 1)) > 0.001);
}

TEST_CASE("LinearSystem: consistency, evaluation, coefficients") {
  f2::LinearSystem sys(4);
  CHECK(sys.add(0b0011, 1));
  CHECK(sys.add(0b0101, 0));
  CHECK(sys.add(0b0110, 1));   // forced: 0011 + 0101 = 0110 with value 1
  CHECK(!sys.add(0b0110, 0));  // contradiction rejected
  CHECK(sys.eval(0b0110).value() == 1);
  CHECK(!sys.eval(0b1000).has_value());
  CHECK(sys.add(0b1000, 1));
  const Word c = sys.solve_coefficients();
  CHECK(f2::parity(c & 0b0011) == 1);
  CHECK(f2::parity(c & 0b0101) == 0);
  CHECK(f2::parity(c & 0b1000) == 1);
}

TEST_CASE("subspace JSON round trip") {
  Rng rng(SeedTree(20260815).child("json").seed());
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(10);
    const Subspace s = f2::sample_subspace(n, rng.below(n + 1), rng);
    CHECK(f2::subspace_from_json(f2::subspace_to_json(s)) == s);
  }
}
