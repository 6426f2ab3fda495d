#ifndef PCPKIT_F2_HPP_
#define PCPKIT_F2_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcpkit/numbers.hpp"
#include "pcpkit/rng.hpp"

namespace pcpkit::f2 {

// Vectors over F2 are single 64-bit words: bit j is coordinate j, so the
// ambient dimension is capped at 64.  A matrix is a list of row words plus
// an explicit column count.  Subspaces carry a canonical basis in reduced
// row echelon form (RREF): pivots strictly increasing, each pivot column
// zero in every other row.  Because the RREF basis of a subspace is unique,
// representational equality is subspace equality.

using Word = std::uint64_t;

inline int parity(Word w) { return __builtin_parityll(w); }
inline int popcount(Word w) { return __builtin_popcountll(w); }

constexpr std::size_t kMaxAmbient = 64;

struct Matrix {
  std::size_t n_cols = 0;
  std::vector<Word> rows;

  Matrix() = default;
  Matrix(std::size_t cols, std::vector<Word> r);

  std::size_t n_rows() const { return rows.size(); }
  int get(std::size_t r, std::size_t c) const {
    return static_cast<int>((rows[r] >> c) & 1u);
  }
};

// Rank via in-place Gaussian elimination over the row words.
std::size_t rank(std::vector<Word> rows);
std::size_t rank(const Matrix& m);

// Reduce `rows` to the canonical RREF basis (zero rows removed, rows sorted
// by pivot column).  The input need not be independent.
std::vector<Word> rref(std::vector<Word> rows);

class Subspace {
 public:
  Subspace() = default;

  // Canonicalizes an arbitrary spanning set.
  Subspace(std::size_t ambient_dim, const std::vector<Word>& spanning);

  static Subspace zero(std::size_t ambient_dim);
  static Subspace full(std::size_t ambient_dim);

  std::size_t ambient_dim() const { return ambient_; }
  std::size_t dim() const { return basis_.size(); }
  const std::vector<Word>& basis() const { return basis_; }

  bool contains_vector(Word v) const;

  // Pivot columns, ascending; pivot_cols()[i] belongs to basis()[i].
  std::vector<std::size_t> pivot_cols() const;

  // Total order compatible with equality: by ambient, then dim, then the
  // basis words lexicographically.  This is the enumeration order used by
  // the Grassmann iterators ("lexicographic RREF order").
  friend bool operator==(const Subspace&, const Subspace&) = default;
  friend auto operator<=>(const Subspace& a, const Subspace& b) = default;

 private:
  std::size_t ambient_ = 0;
  std::vector<Word> basis_;
};

Subspace sum(const Subspace& a, const Subspace& b);
Subspace intersect(const Subspace& a, const Subspace& b);

// True when b is contained in a.
bool contains(const Subspace& a, const Subspace& b);
bool trivial_intersection(const Subspace& a, const Subspace& b);

// {x : <x,v> = 0 for all v in a}; dim = ambient - dim(a).
Subspace annihilator(const Subspace& a);

// Rows extending sub's basis to a basis of super; requires sub <= super.
std::vector<Word> complement_basis(const Subspace& sub, const Subspace& super);

// Kernel of the matrix (solutions x of rows * x = 0, row-vector convention:
// for every row r, <r, x> = 0).  Returns the solution subspace of F2^n_cols.
Subspace kernel(const Matrix& m);

// Gaussian binomial [n choose l]_2: the number of l-dimensional subspaces
// of F2^n.  l > n is a domain error.
BigInt gaussian_binomial(std::size_t n, std::size_t l);

constexpr std::uint64_t kDefaultEnumCap = 1u << 22;

// All l-dimensional subspaces of F2^n in lexicographic RREF order.  Raises
// resource_error when the count exceeds `cap`.
std::vector<Subspace> enumerate_grassmann(std::size_t n, std::size_t l,
                                          std::uint64_t cap = kDefaultEnumCap);

// All L with q <= L <= w and dim(L) = l, canonical order.  Requires q <= w.
std::vector<Subspace> enumerate_zoom(const Subspace& q, const Subspace& w,
                                     std::size_t l,
                                     std::uint64_t cap = kDefaultEnumCap);

// All superspaces of p with the given codimension (inside the full ambient
// space), via annihilator duality.
std::vector<Subspace> enumerate_codim_superspaces(
    const Subspace& p, std::size_t codim, std::uint64_t cap = kDefaultEnumCap);

// Uniform samples.  Rejection sampling on spanning tuples; every subspace is
// hit by the same number of tuples, so the draw is exactly uniform.
Subspace sample_subspace(std::size_t n, std::size_t l, Rng& rng);
Subspace sample_superspace(const Subspace& r, std::size_t l, Rng& rng);
Subspace sample_in_zoom(const Subspace& q, const Subspace& w, std::size_t l,
                        Rng& rng);

// Incremental linear system over F2^n_cols used to define and extend linear
// functionals: the pair (vec, value) asserts that the functional being built
// sends vec to value.
class LinearSystem {
 public:
  explicit LinearSystem(std::size_t n_cols) : n_cols_(n_cols) {}

  // Returns false when (vec, value) contradicts the constraints so far; the
  // system is unchanged in that case.
  bool add(Word vec, int value);

  // Value forced for vec, or nullopt when vec is outside the span.
  std::optional<int> eval(Word vec) const;

  std::size_t n_cols() const { return n_cols_; }
  std::size_t rank() const { return rows_.size(); }

  // A coefficient word c with <c, vec> = value for every recorded
  // constraint; free coordinates are zero.
  Word solve_coefficients() const;

 private:
  std::size_t n_cols_;
  std::vector<Word> rows_;   // echelon, pivot = lowest set bit
  std::vector<int> values_;  // parallel to rows_
};

// JSON: a subspace is {"ambient_dim": n, "basis": ["0101...", ...]} with
// string index i holding coordinate i.
nlohmann::json subspace_to_json(const Subspace& s);
Subspace subspace_from_json(const nlohmann::json& j);
std::string word_to_string(Word w, std::size_t n);
Word word_from_string(const std::string& s);

}  // namespace pcpkit::f2

#endif
