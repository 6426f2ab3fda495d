#include "pcpkit/bilinear.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "pcpkit/errors.hpp"

namespace pcpkit::bilinear {

namespace {

void check_shape(std::size_t n, std::size_t m) {
  if (n * m > kMaxTableBits)
    throw resource_error("bilinear table beyond the 26-bit cap");
}

std::uint64_t low_mask(std::size_t bits) {
  return (bits >= 64) ? ~std::uint64_t{0} : ((std::uint64_t{1} << bits) - 1);
}

}  // namespace

BilinearFn::BilinearFn(std::size_t n_, std::size_t m_) : n(n_), m(m_) {
  check_shape(n, m);
  values.assign(std::uint64_t{1} << (n * m), 0.0);
}

std::size_t rank_of_index(std::uint64_t idx, std::size_t n, std::size_t m) {
  std::vector<f2::Word> rows(n);
  for (std::size_t r = 0; r < n; ++r) rows[r] = index_row(idx, m, r);
  return f2::rank(std::move(rows));
}

namespace {

// In-place unnormalized Walsh-Hadamard transform over `bits` dimensions.
void wht(std::vector<double>& a, std::size_t bits) {
  for (std::size_t b = 0; b < bits; ++b) {
    const std::uint64_t h = std::uint64_t{1} << b;
    for (std::uint64_t i = 0; i < a.size(); i += 2 * h) {
      for (std::uint64_t j = i; j < i + h; ++j) {
        const double x = a[j];
        const double y = a[j + h];
        a[j] = x + y;
        a[j + h] = x - y;
      }
    }
  }
}

}  // namespace

FourierView fourier_transform(const BilinearFn& f) {
  FourierView view;
  view.n = f.n;
  view.m = f.m;
  view.coeffs = f.values;
  wht(view.coeffs, f.table_bits());
  const double scale = 1.0 / static_cast<double>(f.size());
  for (double& c : view.coeffs) c *= scale;
  return view;
}

BilinearFn inverse_transform(const FourierView& view) {
  BilinearFn f(view.n, view.m);
  f.values = view.coeffs;
  wht(f.values, f.table_bits());
  return f;
}

BilinearFn level_projection(const BilinearFn& f, std::size_t d) {
  FourierView view = fourier_transform(f);
  for (std::uint64_t s = 0; s < view.coeffs.size(); ++s) {
    if (rank_of_index(s, f.n, f.m) != d) view.coeffs[s] = 0.0;
  }
  return inverse_transform(view);
}

double inner(const BilinearFn& f, const BilinearFn& g) {
  if (f.n != g.n || f.m != g.m)
    throw domain_error("inner: shape mismatch");
  double acc = 0.0;
  for (std::uint64_t i = 0; i < f.size(); ++i) acc += f.values[i] * g.values[i];
  return acc / static_cast<double>(f.size());
}

double norm2_squared(const BilinearFn& f) { return inner(f, f); }

double t_norm(const BilinearFn& f, double t) {
  if (t < 1.0) throw domain_error("t_norm: t must be at least 1");
  double acc = 0.0;
  for (double v : f.values) acc += std::pow(std::abs(v), t);
  return std::pow(acc / static_cast<double>(f.size()), 1.0 / t);
}

BilinearFn apply_T(const BilinearFn& f, std::size_t c) {
  if (c > f.m) throw domain_error("apply_T: c exceeds the column count");
  const std::size_t m_bot = f.m - c;
  BilinearFn out(f.n, m_bot);
  const std::uint64_t bot_row_mask = low_mask(m_bot);
  for (std::uint64_t idx = 0; idx < f.size(); ++idx) {
    std::uint64_t bot = 0;
    for (std::size_t r = 0; r < f.n; ++r) {
      bot |= (index_row(idx, f.m, r) & bot_row_mask) << (r * m_bot);
    }
    out.values[bot] += f.values[idx];
  }
  const double scale = 1.0 / static_cast<double>(std::uint64_t{1} << (f.n * c));
  for (double& v : out.values) v *= scale;
  return out;
}

namespace {

// All rank-c matrices in F2^{c x m}, packed row-major with m-bit rows.
std::vector<std::uint64_t> full_rank_c_by_m(std::size_t c, std::size_t m) {
  std::vector<std::uint64_t> out;
  const std::uint64_t total = std::uint64_t{1} << (c * m);
  for (std::uint64_t idx = 0; idx < total; ++idx) {
    if (rank_of_index(idx, c, m) == c) out.push_back(idx);
  }
  return out;
}

}  // namespace

BilinearFn apply_Phi(const BilinearFn& f, std::size_t c) {
  if (c > f.m)
    throw domain_error("apply_Phi: c exceeds the column count");
  const auto cs = full_rank_c_by_m(c, f.m);
  if (cs.empty()) throw domain_error("apply_Phi: no rank-c matrices");
  const std::uint64_t b_count = std::uint64_t{1} << (f.n * c);
  BilinearFn out(f.n, f.m);
  for (std::uint64_t b = 0; b < b_count; ++b) {
    for (std::uint64_t cm : cs) {
      // product rows: row r of B*C = sum over t of B[r,t] * C_row_t.
      std::uint64_t prod = 0;
      for (std::size_t r = 0; r < f.n; ++r) {
        const f2::Word brow = (b >> (r * c)) & low_mask(c);
        f2::Word row = 0;
        for (std::size_t t = 0; t < c; ++t) {
          if ((brow >> t) & 1u) row ^= index_row(cm, f.m, t);
        }
        prod |= row << (r * f.m);
      }
      for (std::uint64_t idx = 0; idx < f.size(); ++idx) {
        out.values[idx] += f.values[idx ^ prod];
      }
    }
  }
  const double scale = 1.0 / (static_cast<double>(b_count) *
                              static_cast<double>(cs.size()));
  for (double& v : out.values) v *= scale;
  return out;
}

Rational phi_eigenvalue(std::size_t m, std::size_t c, std::size_t d) {
  if (d > m) throw domain_error("phi_eigenvalue: rank exceeds columns");
  // lambda = Pr_{C rank c}[C S^T = 0]: all c rows must land in the
  // (m - d)-dimensional kernel of S and stay independent.
  if (c > m - d) return Rational(0);
  BigInt num = 1, den = 1;
  for (std::size_t i = 0; i < c; ++i) {
    num *= (BigInt(1) << (m - d)) - (BigInt(1) << i);
    den *= (BigInt(1) << m) - (BigInt(1) << i);
  }
  return Rational(num, den);
}

std::optional<RestrictedNorm> restrict_norm(const BilinearFn& f,
                                            const MatrixZoom& z) {
  if (z.u_cols.size() != z.v_cols.size() || z.x_rows.size() != z.y_rows.size())
    throw domain_error("restrict_norm: constraint arity mismatch");
  const std::size_t bits = f.table_bits();
  // Affine system over the nm matrix bits, kept in echelon form with the
  // right-hand side carried along (pivot = lowest set bit).
  std::vector<std::pair<f2::Word, int>> ech;
  std::vector<f2::Word> hom_rows;
  bool ok = true;
  auto add_constraint = [&](f2::Word vec, int rhs) {
    hom_rows.push_back(vec);
    f2::Word v = vec;
    int b = rhs;
    for (const auto& [ev, eb] : ech) {
      if ((v >> __builtin_ctzll(ev)) & 1u) {
        v ^= ev;
        b ^= eb;
      }
    }
    if (v == 0) {
      if (b != 0) ok = false;
      return;
    }
    ech.emplace_back(v, b);
  };
  for (std::size_t t = 0; t < z.u_cols.size() && ok; ++t) {
    const f2::Word u = z.u_cols[t];
    for (std::size_t r = 0; r < f.n && ok; ++r) {
      // <M_r, u> = v[r]
      f2::Word vec = 0;
      for (std::size_t j = 0; j < f.m; ++j)
        if ((u >> j) & 1u) vec |= f2::Word{1} << (r * f.m + j);
      add_constraint(vec, static_cast<int>((z.v_cols[t] >> r) & 1u));
    }
  }
  for (std::size_t t = 0; t < z.x_rows.size() && ok; ++t) {
    const f2::Word x = z.x_rows[t];
    for (std::size_t j = 0; j < f.m && ok; ++j) {
      // sum_r x_r M_{r j} = y[j]
      f2::Word vec = 0;
      for (std::size_t r = 0; r < f.n; ++r)
        if ((x >> r) & 1u) vec |= f2::Word{1} << (r * f.m + j);
      add_constraint(vec, static_cast<int>((z.y_rows[t] >> j) & 1u));
    }
  }
  if (!ok) return std::nullopt;
  // Particular solution by descending-pivot back substitution: every bit of
  // an echelon row sits at or above its pivot, so fixing high pivots first and
  // leaving free coordinates at zero satisfies each equation once.
  f2::Word base = 0;
  std::sort(ech.begin(), ech.end(), [](const auto& a, const auto& b) {
    return __builtin_ctzll(a.first) > __builtin_ctzll(b.first);
  });
  for (const auto& [ev, eb] : ech) {
    if (f2::parity(ev & base) != eb)
      base ^= f2::Word{1} << __builtin_ctzll(ev);
  }
  const f2::Subspace ker = f2::kernel(f2::Matrix(bits, hom_rows));
  RestrictedNorm rn;
  rn.count = std::uint64_t{1} << ker.dim();
  double acc = 0.0;
  // Gray-code walk over the kernel keeps the enumeration cheap.
  std::uint64_t cur = base;
  acc += f.values[cur] * f.values[cur];
  for (std::uint64_t g = 1; g < rn.count; ++g) {
    const std::size_t flip = static_cast<std::size_t>(__builtin_ctzll(g));
    cur ^= ker.basis()[flip];
    acc += f.values[cur] * f.values[cur];
  }
  rn.mean_square = acc / static_cast<double>(rn.count);
  return rn;
}

PseudorandomReport pseudorandomness(const BilinearFn& f, std::size_t d) {
  PseudorandomReport report;
  const std::size_t n = f.n, m = f.m;
  for (std::size_t d1 = 0; d1 <= d; ++d1) {
    const std::size_t d2 = d - d1;
    const std::uint64_t u_total = std::uint64_t{1} << (m * d1);
    const std::uint64_t v_total = std::uint64_t{1} << (n * d1);
    const std::uint64_t x_total = std::uint64_t{1} << (n * d2);
    const std::uint64_t y_total = std::uint64_t{1} << (m * d2);
    for (std::uint64_t ub = 0; ub < u_total; ++ub) {
      for (std::uint64_t vb = 0; vb < v_total; ++vb) {
        for (std::uint64_t xb = 0; xb < x_total; ++xb) {
          for (std::uint64_t yb = 0; yb < y_total; ++yb) {
            MatrixZoom z;
            for (std::size_t t = 0; t < d1; ++t) {
              z.u_cols.push_back((ub >> (t * m)) & low_mask(m));
              z.v_cols.push_back((vb >> (t * n)) & low_mask(n));
            }
            for (std::size_t t = 0; t < d2; ++t) {
              z.x_rows.push_back((xb >> (t * n)) & low_mask(n));
              z.y_rows.push_back((yb >> (t * m)) & low_mask(m));
            }
            const auto rn = restrict_norm(f, z);
            ++report.zooms_inspected;
            if (rn && rn->mean_square > report.max_mean_square) {
              report.max_mean_square = rn->mean_square;
              report.witness = z;
            }
          }
        }
      }
    }
  }
  return report;
}

bool is_pseudorandom(const BilinearFn& f, std::size_t d, double eps) {
  return pseudorandomness(f, d).max_mean_square <= eps;
}

namespace {

std::vector<std::uint64_t> invertible_m_by_m(std::size_t m) {
  std::vector<std::uint64_t> out;
  const std::uint64_t total = std::uint64_t{1} << (m * m);
  for (std::uint64_t idx = 0; idx < total; ++idx) {
    if (rank_of_index(idx, m, m) == m) out.push_back(idx);
  }
  return out;
}

}  // namespace

bool is_basis_invariant(const BilinearFn& f, double tol) {
  const auto as = invertible_m_by_m(f.m);
  // Row map under right multiplication: row -> row * A.
  const std::uint64_t row_space = std::uint64_t{1} << f.m;
  std::vector<f2::Word> row_map(row_space);
  for (std::uint64_t a : as) {
    for (std::uint64_t row = 0; row < row_space; ++row) {
      f2::Word mapped = 0;
      for (std::size_t j = 0; j < f.m; ++j) {
        // column j of A is bits (t*m + j) over rows t.
        int bit = 0;
        for (std::size_t t = 0; t < f.m; ++t) {
          if (((row >> t) & 1u) && ((a >> (t * f.m + j)) & 1u)) bit ^= 1;
        }
        if (bit) mapped |= f2::Word{1} << j;
      }
      row_map[row] = mapped;
    }
    for (std::uint64_t idx = 0; idx < f.size(); ++idx) {
      std::uint64_t out = 0;
      for (std::size_t r = 0; r < f.n; ++r)
        out |= static_cast<std::uint64_t>(row_map[index_row(idx, f.m, r)])
               << (r * f.m);
      if (std::abs(f.values[idx] - f.values[out]) > tol) return false;
    }
  }
  return true;
}

BilinearFn random_basis_invariant_boolean(std::size_t n, std::size_t m,
                                          Rng& rng) {
  // One random bit per column span (all dims up to m).
  std::map<f2::Subspace, double> h;
  for (std::size_t l = 0; l <= m && l <= n; ++l) {
    for (const auto& s : f2::enumerate_grassmann(n, l)) {
      h[s] = rng.coin() ? 1.0 : 0.0;
    }
  }
  BilinearFn f(n, m);
  for (std::uint64_t idx = 0; idx < f.size(); ++idx) {
    std::vector<f2::Word> cols(m, 0);
    for (std::size_t r = 0; r < n; ++r) {
      const f2::Word row = index_row(idx, m, r);
      for (std::size_t j = 0; j < m; ++j)
        if ((row >> j) & 1u) cols[j] |= f2::Word{1} << r;
    }
    f.values[idx] = h.at(f2::Subspace(n, cols));
  }
  return f;
}

nlohmann::json bilinear_to_json(const BilinearFn& f) {
  return nlohmann::json{{"n", f.n}, {"m", f.m}, {"values", f.values}};
}

BilinearFn bilinear_from_json(const nlohmann::json& j) {
  BilinearFn f(j.at("n").get<std::size_t>(), j.at("m").get<std::size_t>());
  const auto& vals = j.at("values");
  if (vals.size() != f.size())
    throw domain_error("bilinear JSON: value count mismatch");
  f.values = vals.get<std::vector<double>>();
  return f;
}

}  // namespace pcpkit::bilinear
