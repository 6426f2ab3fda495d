#include "pcpkit/f2.hpp"

#include <algorithm>
#include <bit>
#include <functional>

#include "pcpkit/errors.hpp"

namespace pcpkit::f2 {

namespace {

void check_ambient(std::size_t n) {
  if (n > kMaxAmbient)
    throw domain_error("ambient dimension exceeds 64");
}

std::size_t lowest_bit(Word w) {
  return static_cast<std::size_t>(std::countr_zero(w));
}

}  // namespace

Matrix::Matrix(std::size_t cols, std::vector<Word> r)
    : n_cols(cols), rows(std::move(r)) {
  check_ambient(cols);
  const Word mask = (cols == 64) ? ~Word{0} : ((Word{1} << cols) - 1);
  for (Word row : rows) {
    if ((row & ~mask) != 0)
      throw domain_error("matrix row has bits beyond the column count");
  }
}

std::size_t rank(std::vector<Word> rows) {
  std::size_t r = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Word v = rows[i];
    for (std::size_t j = 0; j < r; ++j) {
      if (v & (Word{1} << lowest_bit(rows[j]))) v ^= rows[j];
    }
    if (v != 0) {
      rows[r++] = v;
    }
  }
  return r;
}

std::size_t rank(const Matrix& m) { return rank(m.rows); }

std::vector<Word> rref(std::vector<Word> rows) {
  std::vector<Word> basis;
  for (Word v : rows) {
    for (Word b : basis) {
      if (v & (Word{1} << lowest_bit(b))) v ^= b;
    }
    if (v == 0) continue;
    // Clear the new pivot from existing rows to keep full reduction.
    const std::size_t p = lowest_bit(v);
    for (Word& b : basis) {
      if (b & (Word{1} << p)) b ^= v;
    }
    basis.push_back(v);
  }
  std::sort(basis.begin(), basis.end(), [](Word a, Word b) {
    return lowest_bit(a) < lowest_bit(b);
  });
  return basis;
}

Subspace::Subspace(std::size_t ambient_dim, const std::vector<Word>& spanning)
    : ambient_(ambient_dim), basis_(rref(spanning)) {
  check_ambient(ambient_dim);
  const Word mask =
      (ambient_dim == 64) ? ~Word{0} : ((Word{1} << ambient_dim) - 1);
  for (Word row : basis_) {
    if ((row & ~mask) != 0)
      throw domain_error("spanning vector has bits beyond the ambient dimension");
  }
}

Subspace Subspace::zero(std::size_t ambient_dim) {
  return Subspace(ambient_dim, {});
}

Subspace Subspace::full(std::size_t ambient_dim) {
  std::vector<Word> rows(ambient_dim);
  for (std::size_t i = 0; i < ambient_dim; ++i) rows[i] = Word{1} << i;
  return Subspace(ambient_dim, rows);
}

bool Subspace::contains_vector(Word v) const {
  for (Word b : basis_) {
    if (v & (Word{1} << lowest_bit(b))) v ^= b;
  }
  return v == 0;
}

std::vector<std::size_t> Subspace::pivot_cols() const {
  std::vector<std::size_t> cols;
  cols.reserve(basis_.size());
  for (Word b : basis_) cols.push_back(lowest_bit(b));
  return cols;
}

Subspace sum(const Subspace& a, const Subspace& b) {
  if (a.ambient_dim() != b.ambient_dim())
    throw domain_error("subspace sum: ambient dimensions differ");
  std::vector<Word> rows = a.basis();
  rows.insert(rows.end(), b.basis().begin(), b.basis().end());
  return Subspace(a.ambient_dim(), rows);
}

Subspace intersect(const Subspace& a, const Subspace& b) {
  if (a.ambient_dim() != b.ambient_dim())
    throw domain_error("subspace intersect: ambient dimensions differ");
  // Kernel method: any intersection vector is a combination of a's basis
  // that is simultaneously a combination of b's basis.  Solve for the
  // coefficient split in F2^(dim a + dim b) and map back through a's rows.
  const auto& ba = a.basis();
  const auto& bb = b.basis();
  const std::size_t da = ba.size(), db = bb.size();
  if (da == 0 || db == 0) return Subspace::zero(a.ambient_dim());
  if (da + db > kMaxAmbient) {
    // Fall back to annihilator duality when the coefficient space is too
    // wide for one word.  dim(a)+dim(b) <= 128 always holds here.
    Subspace ann = sum(annihilator(a), annihilator(b));
    return annihilator(ann);
  }
  // Build the constraint matrix over coefficients (x, y): sum x_i a_i =
  // sum y_j b_j, i.e. for every ambient coordinate c a parity constraint.
  std::vector<Word> constraint_rows(a.ambient_dim(), 0);
  for (std::size_t c = 0; c < a.ambient_dim(); ++c) {
    Word row = 0;
    for (std::size_t i = 0; i < da; ++i)
      if ((ba[i] >> c) & 1u) row |= Word{1} << i;
    for (std::size_t j = 0; j < db; ++j)
      if ((bb[j] >> c) & 1u) row |= Word{1} << (da + j);
    constraint_rows[c] = row;
  }
  Subspace ker = kernel(Matrix(da + db, constraint_rows));
  std::vector<Word> rows;
  for (Word k : ker.basis()) {
    Word v = 0;
    for (std::size_t i = 0; i < da; ++i)
      if ((k >> i) & 1u) v ^= ba[i];
    rows.push_back(v);
  }
  return Subspace(a.ambient_dim(), rows);
}

bool contains(const Subspace& a, const Subspace& b) {
  if (a.ambient_dim() != b.ambient_dim())
    throw domain_error("subspace contains: ambient dimensions differ");
  for (Word v : b.basis()) {
    if (!a.contains_vector(v)) return false;
  }
  return true;
}

bool trivial_intersection(const Subspace& a, const Subspace& b) {
  // dim(a) + dim(b) = dim(sum) + dim(intersection)
  return sum(a, b).dim() == a.dim() + b.dim();
}

Subspace annihilator(const Subspace& a) {
  return kernel(Matrix(a.ambient_dim(), a.basis()));
}

std::vector<Word> complement_basis(const Subspace& sub, const Subspace& super) {
  if (!contains(super, sub))
    throw domain_error("complement_basis: sub is not contained in super");
  std::vector<Word> acc = sub.basis();
  std::vector<Word> extra;
  for (Word v : super.basis()) {
    Word w = v;
    for (Word b : acc) {
      if (w & (Word{1} << lowest_bit(b))) w ^= b;
    }
    if (w != 0) {
      acc.push_back(w);
      extra.push_back(w);
    }
  }
  return extra;
}

Subspace kernel(const Matrix& m) {
  // RREF the rows, then read off one kernel generator per free column.
  std::vector<Word> basis = rref(m.rows);
  std::vector<int> pivot_of_col(m.n_cols, -1);
  for (std::size_t i = 0; i < basis.size(); ++i)
    pivot_of_col[lowest_bit(basis[i])] = static_cast<int>(i);
  std::vector<Word> gens;
  for (std::size_t c = 0; c < m.n_cols; ++c) {
    if (pivot_of_col[c] >= 0) continue;
    Word v = Word{1} << c;
    // x_c = 1, pivots adjust to cancel: for pivot row i with bit c set,
    // x_{pivot_i} = row_i[c].
    for (std::size_t i = 0; i < basis.size(); ++i) {
      if ((basis[i] >> c) & 1u) v |= Word{1} << lowest_bit(basis[i]);
    }
    gens.push_back(v);
  }
  return Subspace(m.n_cols, gens);
}

BigInt gaussian_binomial(std::size_t n, std::size_t l) {
  if (l > n) throw domain_error("gaussian_binomial: l exceeds n");
  // prod_{i<l} (2^n - 2^i) / (2^l - 2^i); the division is exact.
  BigInt num = 1, den = 1;
  for (std::size_t i = 0; i < l; ++i) {
    num *= (BigInt(1) << n) - (BigInt(1) << i);
    den *= (BigInt(1) << l) - (BigInt(1) << i);
  }
  return num / den;
}

namespace {

// Schubert cell enumeration: for each ascending pivot set, the free entries
// of the canonical RREF matrix range over all bit patterns.
void enumerate_rref_bases(std::size_t n, std::size_t l,
                          const std::function<void(const std::vector<Word>&)>& emit) {
  if (l == 0) {
    emit({});
    return;
  }
  std::vector<std::size_t> pivots(l);
  for (std::size_t i = 0; i < l; ++i) pivots[i] = i;
  for (;;) {
    // Free positions: row i, non-pivot columns beyond pivots[i].
    std::vector<std::pair<std::size_t, std::size_t>> free_pos;
    std::vector<bool> is_pivot(n, false);
    for (std::size_t p : pivots) is_pivot[p] = true;
    for (std::size_t i = 0; i < l; ++i) {
      for (std::size_t c = pivots[i] + 1; c < n; ++c) {
        if (!is_pivot[c]) free_pos.emplace_back(i, c);
      }
    }
    const std::size_t f = free_pos.size();
    for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << f); ++bits) {
      std::vector<Word> rows(l, 0);
      for (std::size_t i = 0; i < l; ++i) rows[i] = Word{1} << pivots[i];
      for (std::size_t t = 0; t < f; ++t) {
        if ((bits >> t) & 1u)
          rows[free_pos[t].first] |= Word{1} << free_pos[t].second;
      }
      emit(rows);
    }
    // Next pivot combination in lexicographic order.
    std::size_t i = l;
    while (i > 0) {
      --i;
      if (pivots[i] + (l - i) < n) {
        ++pivots[i];
        for (std::size_t j = i + 1; j < l; ++j) pivots[j] = pivots[j - 1] + 1;
        break;
      }
      if (i == 0) return;
    }
    if (l == 0) return;
  }
}

}  // namespace

std::vector<Subspace> enumerate_grassmann(std::size_t n, std::size_t l,
                                          std::uint64_t cap) {
  check_ambient(n);
  if (l > n) throw domain_error("enumerate_grassmann: l exceeds n");
  const BigInt count = gaussian_binomial(n, l);
  if (count > cap)
    throw resource_error("enumerate_grassmann: cap exceeded");
  std::vector<Subspace> out;
  out.reserve(count.convert_to<std::size_t>());
  enumerate_rref_bases(n, l, [&](const std::vector<Word>& rows) {
    out.emplace_back(n, rows);
  });
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Subspace> enumerate_zoom(const Subspace& q, const Subspace& w,
                                     std::size_t l, std::uint64_t cap) {
  if (!contains(w, q)) throw domain_error("enumerate_zoom: q not inside w");
  if (l < q.dim() || l > w.dim()) return {};
  const std::size_t quotient_dim = w.dim() - q.dim();
  const std::size_t pick = l - q.dim();
  const BigInt count = gaussian_binomial(quotient_dim, pick);
  if (count > cap) throw resource_error("enumerate_zoom: cap exceeded");
  const std::vector<Word> comp = complement_basis(q, w);
  std::vector<Subspace> out;
  out.reserve(count.convert_to<std::size_t>());
  // Subspaces of the quotient W/Q lift bijectively to zoom members: combine
  // q's basis with any RREF selection over the complement coordinates.
  enumerate_rref_bases(quotient_dim, pick, [&](const std::vector<Word>& sel) {
    std::vector<Word> rows = q.basis();
    for (Word s : sel) {
      Word v = 0;
      for (std::size_t t = 0; t < quotient_dim; ++t)
        if ((s >> t) & 1u) v ^= comp[t];
      rows.push_back(v);
    }
    out.emplace_back(q.ambient_dim(), rows);
  });
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Subspace> enumerate_codim_superspaces(const Subspace& p,
                                                  std::size_t codim,
                                                  std::uint64_t cap) {
  const std::size_t n = p.ambient_dim();
  if (p.dim() + codim > n) return {};
  const Subspace ann = annihilator(p);
  // W >= p of codim c corresponds to a c-dimensional subspace of ann(p).
  std::vector<Subspace> out;
  const auto& ann_basis = ann.basis();
  const BigInt count = gaussian_binomial(ann.dim(), codim);
  if (count > cap)
    throw resource_error("enumerate_codim_superspaces: cap exceeded");
  enumerate_rref_bases(ann.dim(), codim, [&](const std::vector<Word>& sel) {
    std::vector<Word> rows;
    for (Word s : sel) {
      Word v = 0;
      for (std::size_t t = 0; t < ann_basis.size(); ++t)
        if ((s >> t) & 1u) v ^= ann_basis[t];
      rows.push_back(v);
    }
    out.push_back(annihilator(Subspace(n, rows)));
  });
  std::sort(out.begin(), out.end());
  return out;
}

Subspace sample_subspace(std::size_t n, std::size_t l, Rng& rng) {
  check_ambient(n);
  if (l > n) throw domain_error("sample_subspace: l exceeds n");
  for (;;) {
    std::vector<Word> rows;
    rows.reserve(l);
    for (std::size_t i = 0; i < l; ++i) rows.push_back(rng.word(n));
    if (rank(rows) == l) return Subspace(n, rows);
  }
}

Subspace sample_superspace(const Subspace& r, std::size_t l, Rng& rng) {
  const std::size_t n = r.ambient_dim();
  if (l < r.dim()) throw domain_error("sample_superspace: l below dim(r)");
  if (l > n) throw domain_error("sample_superspace: l exceeds ambient");
  for (;;) {
    std::vector<Word> rows = r.basis();
    for (std::size_t i = r.dim(); i < l; ++i) rows.push_back(rng.word(n));
    if (rank(rows) == l) return Subspace(n, rows);
  }
}

Subspace sample_in_zoom(const Subspace& q, const Subspace& w, std::size_t l,
                        Rng& rng) {
  if (!contains(w, q)) throw domain_error("sample_in_zoom: q not inside w");
  if (l < q.dim() || l > w.dim())
    throw domain_error("sample_in_zoom: l outside [dim q, dim w]");
  const std::vector<Word> comp = complement_basis(q, w);
  const std::size_t quotient_dim = comp.size();
  for (;;) {
    std::vector<Word> rows = q.basis();
    for (std::size_t i = 0; i < l - q.dim(); ++i) {
      const Word sel = rng.word(quotient_dim);
      Word v = 0;
      for (std::size_t t = 0; t < quotient_dim; ++t)
        if ((sel >> t) & 1u) v ^= comp[t];
      rows.push_back(v);
    }
    if (rank(rows) == l) return Subspace(q.ambient_dim(), rows);
  }
}

bool LinearSystem::add(Word vec, int value) {
  Word v = vec;
  int val = value & 1;
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (v & (Word{1} << lowest_bit(rows_[i]))) {
      v ^= rows_[i];
      val ^= values_[i];
    }
  }
  if (v == 0) return val == 0;
  rows_.push_back(v);
  values_.push_back(val);
  return true;
}

std::optional<int> LinearSystem::eval(Word vec) const {
  Word v = vec;
  int val = 0;
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (v & (Word{1} << lowest_bit(rows_[i]))) {
      v ^= rows_[i];
      val ^= values_[i];
    }
  }
  if (v != 0) return std::nullopt;
  return val;
}

Word LinearSystem::solve_coefficients() const {
  // Fully reduce to RREF so each pivot appears in a single row, then set
  // coefficient bits on pivot columns only.
  std::vector<Word> rows = rows_;
  std::vector<int> vals = values_;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows.size(); ++j) {
      if (i == j) continue;
      if (rows[j] & (Word{1} << lowest_bit(rows[i]))) {
        rows[j] ^= rows[i];
        vals[j] ^= vals[i];
      }
    }
  }
  Word coeff = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (vals[i]) coeff |= Word{1} << lowest_bit(rows[i]);
  }
  return coeff;
}

nlohmann::json subspace_to_json(const Subspace& s) {
  nlohmann::json rows = nlohmann::json::array();
  for (Word b : s.basis()) rows.push_back(word_to_string(b, s.ambient_dim()));
  return nlohmann::json{{"ambient_dim", s.ambient_dim()}, {"basis", rows}};
}

Subspace subspace_from_json(const nlohmann::json& j) {
  const std::size_t n = j.at("ambient_dim").get<std::size_t>();
  std::vector<Word> rows;
  for (const auto& r : j.at("basis")) {
    const auto s = r.get<std::string>();
    if (s.size() != n)
      throw domain_error("subspace JSON: basis row length mismatch");
    rows.push_back(word_from_string(s));
  }
  return Subspace(n, rows);
}

std::string word_to_string(Word w, std::size_t n) {
  std::string s(n, '0');
  for (std::size_t i = 0; i < n; ++i)
    if ((w >> i) & 1u) s[i] = '1';
  return s;
}

Word word_from_string(const std::string& s) {
  if (s.size() > kMaxAmbient)
    throw domain_error("bit string longer than 64");
  Word w = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '1')
      w |= Word{1} << i;
    else if (s[i] != '0')
      throw domain_error("bit string must contain only 0/1");
  }
  return w;
}

}  // namespace pcpkit::f2
