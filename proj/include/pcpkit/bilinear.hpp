#ifndef PCPKIT_BILINEAR_HPP_
#define PCPKIT_BILINEAR_HPP_

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "pcpkit/f2.hpp"
#include "pcpkit/numbers.hpp"

namespace pcpkit::bilinear {

// Real-valued functions on the matrix space F2^{n x m}, stored as one dense
// table indexed by the row-major bit pattern: bit (r*m + c) of the index is
// entry (r, c).  All expectations are with respect to the uniform measure
// on the full table.
//
// Characters are indexed the same way: chi_S(M) = (-1)^{<S, M>} with the
// entrywise inner product, and the Fourier coefficient of f at S is
// E_M[f(M) chi_S(M)].  The degree of a character is the rank of S, which
// drives the level decomposition below.

constexpr std::size_t kMaxTableBits = 26;

struct BilinearFn {
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<double> values;

  BilinearFn() = default;
  BilinearFn(std::size_t n_, std::size_t m_);

  std::size_t table_bits() const { return n * m; }
  std::uint64_t size() const { return std::uint64_t{1} << (n * m); }
  double at(std::uint64_t idx) const { return values[idx]; }
  double& at(std::uint64_t idx) { return values[idx]; }
};

// Same shape as the function table; entry S holds the coefficient at S.
struct FourierView {
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<double> coeffs;
};

// Zoom on matrix space: {M : M*U = V and X*M = Y}.  U has d1 columns (each
// an m-bit word), V the matching n-bit columns; X has d2 rows (n-bit words),
// Y the matching m-bit rows.  The codimension of the zoom is d1 + d2.
struct MatrixZoom {
  std::vector<f2::Word> u_cols;  // m-bit words
  std::vector<f2::Word> v_cols;  // n-bit words
  std::vector<f2::Word> x_rows;  // n-bit words
  std::vector<f2::Word> y_rows;  // m-bit words
};

struct RestrictedNorm {
  std::uint64_t count = 0;    // number of matrices in the zoom
  double mean_square = 0.0;   // E over the zoom of f(M)^2
};

struct PseudorandomReport {
  double max_mean_square = 0.0;
  MatrixZoom witness;
  std::uint64_t zooms_inspected = 0;
};

// Row r (an m-bit word) of the packed index.
inline f2::Word index_row(std::uint64_t idx, std::size_t m, std::size_t r) {
  return (idx >> (r * m)) & ((std::uint64_t{1} << m) - 1);
}

std::size_t rank_of_index(std::uint64_t idx, std::size_t n, std::size_t m);

// (-1)^{<S, M>} for packed indices.
inline int character_eval(std::uint64_t s, std::uint64_t mtx) {
  return (__builtin_popcountll(s & mtx) & 1) ? -1 : 1;
}

// Walsh-Hadamard based transform pair; fourier_transform returns
// coefficients E_M[f(M) chi_S(M)], inverse_transform reassembles f.
FourierView fourier_transform(const BilinearFn& f);
BilinearFn inverse_transform(const FourierView& view);

// Projection of f onto the span of the rank-d characters.
BilinearFn level_projection(const BilinearFn& f, std::size_t d);

double inner(const BilinearFn& f, const BilinearFn& g);
double norm2_squared(const BilinearFn& f);
// (E |f|^t)^{1/t} for t >= 1.
double t_norm(const BilinearFn& f, double t);

// Column-append averaging operator: f lives on n x m_top, the result on
// n x (m_top - c); (T f)(M) = E over all c-column extensions [M, v].
BilinearFn apply_T(const BilinearFn& f, std::size_t c);

// Rank-c perturbation averaging: (Phi f)(M) = E_{B, C : rank(C) = c}
// [f(M + B C)] with B over F2^{n x c} and C over the rank-c part of
// F2^{c x m}.  Characters are eigenvectors; see phi_eigenvalue.
BilinearFn apply_Phi(const BilinearFn& f, std::size_t c);

// Exact eigenvalue of chi_S under Phi, a function of d = rank(S) alone:
// the fraction of rank-c matrices C in F2^{c x m} whose rows annihilate S.
Rational phi_eigenvalue(std::size_t m, std::size_t c, std::size_t d);

// E over the zoom of f^2, or nullopt when the zoom is empty.  The empty
// zoom is a distinct signal, never conflated with the value zero.
std::optional<RestrictedNorm> restrict_norm(const BilinearFn& f,
                                            const MatrixZoom& z);

// Enumerates every zoom of codimension d (all splits d1 + d2 = d, all raw
// constraint matrices) and reports the largest restricted squared 2-norm.
PseudorandomReport pseudorandomness(const BilinearFn& f, std::size_t d);

bool is_pseudorandom(const BilinearFn& f, std::size_t d, double eps);

// f(M) == f(M A) for every invertible A (tolerance for stored doubles).
bool is_basis_invariant(const BilinearFn& f, double tol = 0.0);

// Uniformly random function h on subspaces of dim <= m pulled back through
// the column span: f(M) = h(im M).  Every such f is basis invariant.
BilinearFn random_basis_invariant_boolean(std::size_t n, std::size_t m,
                                          Rng& rng);

nlohmann::json bilinear_to_json(const BilinearFn& f);
BilinearFn bilinear_from_json(const nlohmann::json& j);

}  // namespace pcpkit::bilinear

#endif
