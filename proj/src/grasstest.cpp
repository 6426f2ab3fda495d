#include "pcpkit/grasstest.hpp"

#include <algorithm>
#include <thread>

#include "pcpkit/errors.hpp"
#include "pcpkit/stats.hpp"

namespace pcpkit::grasstest {

LinearFunctional::LinearFunctional(const f2::Subspace& domain_,
                                   f2::Word global_coeff)
    : ambient_dim(domain_.ambient_dim()), coeff(0), domain(domain_) {
  const auto& rows = domain.basis();
  const auto pivots = domain.pivot_cols();
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (f2::parity(global_coeff & rows[i]))
      coeff |= f2::Word{1} << pivots[i];
}

LinearFunctional LinearFunctional::restrict_to(const f2::Subspace& sub) const {
  if (!f2::contains(domain, sub))
    throw domain_error("functional restricted outside its domain");
  return LinearFunctional(sub, coeff);
}

nlohmann::json functional_to_json(const LinearFunctional& g) {
  return {{"domain", f2::subspace_to_json(g.domain)},
          {"coeff_bits", f2::word_to_string(g.coeff, g.ambient_dim)}};
}

LinearFunctional functional_from_json(const nlohmann::json& j) {
  const f2::Subspace dom = f2::subspace_from_json(j.at("domain"));
  const f2::Word w = f2::word_from_string(j.at("coeff_bits").get<std::string>());
  return LinearFunctional(dom, w);
}

namespace {

void check_stratum(const std::map<f2::Subspace, LinearFunctional>& t,
                   std::size_t n, std::size_t dim, const char* label) {
  if (BigInt(t.size()) != f2::gaussian_binomial(n, dim))
    throw domain_error(std::string(label) +
                       " does not cover its subspace stratum");
  for (const auto& [key, g] : t) {
    if (key.ambient_dim() != n || key.dim() != dim)
      throw domain_error(std::string(label) + " holds a key of wrong shape");
    if (g.domain != key)
      throw domain_error(std::string(label) +
                         " holds a functional whose domain is not its key");
  }
}

}  // namespace

TablePair::TablePair(std::size_t n_, std::size_t dim_top_, std::size_t dim_bot_,
                     std::map<f2::Subspace, LinearFunctional> t1_,
                     std::map<f2::Subspace, LinearFunctional> t2_)
    : n(n_), dim_top(dim_top_), dim_bot(dim_bot_),
      t1(std::move(t1_)), t2(std::move(t2_)) {
  if (!(dim_bot < dim_top && dim_top <= n))
    throw domain_error("table dimensions must satisfy dim_bot < dim_top <= n");
  check_stratum(t1, n, dim_top, "t1");
  check_stratum(t2, n, dim_bot, "t2");
}

TablePair TablePair::from_globals(std::size_t n, std::size_t dim_top,
                                  std::size_t dim_bot, f2::Word top_coeff,
                                  f2::Word bot_coeff) {
  std::map<f2::Subspace, LinearFunctional> t1, t2;
  for (const auto& l : f2::enumerate_grassmann(n, dim_top))
    t1.emplace(l, LinearFunctional(l, top_coeff));
  for (const auto& r : f2::enumerate_grassmann(n, dim_bot))
    t2.emplace(r, LinearFunctional(r, bot_coeff));
  return TablePair(n, dim_top, dim_bot, std::move(t1), std::move(t2));
}

nlohmann::json tables_to_json(const TablePair& tp) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto* table : {&tp.t1, &tp.t2})
    for (const auto& [key, g] : *table)
      entries.push_back({{"subspace", f2::subspace_to_json(key)},
                         {"coeff_bits", f2::word_to_string(g.coeff, tp.n)}});
  return {{"n", tp.n},
          {"dim_top", tp.dim_top},
          {"dim_bot", tp.dim_bot},
          {"entries", entries}};
}

TablePair tables_from_json(const nlohmann::json& j) {
  const std::size_t n = j.at("n").get<std::size_t>();
  const std::size_t dt = j.at("dim_top").get<std::size_t>();
  const std::size_t db = j.at("dim_bot").get<std::size_t>();
  std::map<f2::Subspace, LinearFunctional> t1, t2;
  for (const auto& e : j.at("entries")) {
    const f2::Subspace key = f2::subspace_from_json(e.at("subspace"));
    const f2::Word w =
        f2::word_from_string(e.at("coeff_bits").get<std::string>());
    if (key.dim() == dt)
      t1.emplace(key, LinearFunctional(key, w));
    else if (key.dim() == db)
      t2.emplace(key, LinearFunctional(key, w));
    else
      throw domain_error("table entry with a dimension outside both strata");
  }
  return TablePair(n, dt, db, std::move(t1), std::move(t2));
}

SubspaceFamily::SubspaceFamily(std::size_t n_, std::size_t l_)
    : n(n_), l(l_) {
  if (l > n) throw domain_error("family dimension exceeds the ambient space");
}

SubspaceFamily::SubspaceFamily(std::size_t n_, std::size_t l_,
                               std::set<f2::Subspace> members_)
    : SubspaceFamily(n_, l_) {
  for (const auto& s : members_)
    if (s.ambient_dim() != n || s.dim() != l)
      throw domain_error("family member of wrong shape");
  members = std::move(members_);
}

Rational SubspaceFamily::density() const {
  return Rational(BigInt(members.size()), f2::gaussian_binomial(n, l));
}

Rational zoom_density(const SubspaceFamily& fam, const f2::Subspace& q,
                      const f2::Subspace& w) {
  const auto zoom = f2::enumerate_zoom(q, w, fam.l);
  if (zoom.empty()) return Rational(0);
  std::size_t hits = 0;
  for (const auto& l : zoom) hits += fam.contains(l) ? 1 : 0;
  return Rational(BigInt(hits), BigInt(zoom.size()));
}

FamilyPseudorandomness family_pseudorandomness(const SubspaceFamily& fam,
                                               std::size_t r) {
  FamilyPseudorandomness best;
  best.epsilon = Rational(-1);
  bool any = false;
  for (std::size_t a = 0; a <= r; ++a) {
    const std::size_t b = r - a;
    if (a > fam.l || b > fam.n - fam.l) continue;
    for (const auto& q : f2::enumerate_grassmann(fam.n, a)) {
      for (const auto& w : f2::enumerate_codim_superspaces(q, b)) {
        const Rational mu = zoom_density(fam, q, w);
        if (!any || mu > best.epsilon) {
          best.epsilon = mu;
          best.witness = {q, w};
          any = true;
        }
      }
    }
  }
  if (!any)
    throw domain_error("no zoom of the requested size fits the family shape");
  return best;
}

namespace {

// Column span of a packed n x l matrix index.
f2::Subspace index_column_span(std::uint64_t idx, std::size_t n,
                               std::size_t l) {
  std::vector<f2::Word> cols(l, 0);
  for (std::size_t r = 0; r < n; ++r) {
    const f2::Word row = bilinear::index_row(idx, l, r);
    for (std::size_t j = 0; j < l; ++j)
      if ((row >> j) & 1u) cols[j] |= f2::Word{1} << r;
  }
  return f2::Subspace(n, cols);
}

}  // namespace

bilinear::BilinearFn lift_indicator(const SubspaceFamily& fam) {
  bilinear::BilinearFn f(fam.n, fam.l);
  for (std::uint64_t idx = 0; idx < f.size(); ++idx) {
    const f2::Subspace span = index_column_span(idx, fam.n, fam.l);
    if (span.dim() == fam.l && fam.contains(span)) f.values[idx] = 1.0;
  }
  return f;
}

LiftTransfer lift_transfer_check(const SubspaceFamily& fam, std::size_t r) {
  LiftTransfer out;
  out.family_epsilon = family_pseudorandomness(fam, r).epsilon;
  const auto report = bilinear::pseudorandomness(lift_indicator(fam), r);
  // Boolean means over affine zoom sets are dyadic, so the double is exact.
  out.lift_max_mean_square = Rational(report.max_mean_square);
  out.holds = out.lift_max_mean_square <= 2 * out.family_epsilon;
  return out;
}

ConsistencyResult run_consistency_test_exact(const TablePair& tp,
                                             std::size_t k) {
  if (k == 0) throw domain_error("the test needs at least one top query");
  const BigInt n_r = f2::gaussian_binomial(tp.n, tp.dim_bot);
  const BigInt n_l =
      f2::gaussian_binomial(tp.n - tp.dim_bot, tp.dim_top - tp.dim_bot);
  if (n_r * n_l > BigInt(f2::kDefaultEnumCap))
    throw resource_error("exact consistency enumeration beyond the cap");
  const f2::Subspace full = f2::Subspace::full(tp.n);
  BigInt acc = 0;
  for (const auto& [r, g] : tp.t2) {
    BigInt a_r = 0;
    for (const auto& l : f2::enumerate_zoom(r, full, tp.dim_top))
      if (tp.t1.at(l).restrict_to(r) == g) ++a_r;
    acc += boost::multiprecision::pow(a_r, static_cast<unsigned>(k));
  }
  ConsistencyResult res;
  res.exact = true;
  res.probability = Rational(
      acc, n_r * boost::multiprecision::pow(n_l, static_cast<unsigned>(k)));
  res.estimate = to_double(res.probability);
  return res;
}

ConsistencyResult run_consistency_test_mc(const TablePair& tp, std::size_t k,
                                          std::uint64_t trials,
                                          std::uint64_t seed,
                                          unsigned threads) {
  if (k == 0) throw domain_error("the test needs at least one top query");
  if (trials == 0) throw domain_error("trial count must be positive");
  if (threads == 0) threads = 1;

  auto run_one = [&](std::uint64_t trial) -> bool {
    Rng rng(mix_seed(seed, trial));
    const f2::Subspace r = f2::sample_subspace(tp.n, tp.dim_bot, rng);
    const LinearFunctional& bottom = tp.t2.at(r);
    for (std::size_t i = 0; i < k; ++i) {
      const f2::Subspace l = f2::sample_superspace(r, tp.dim_top, rng);
      if (!(tp.t1.at(l).restrict_to(r) == bottom)) return false;
    }
    return true;
  };

  std::vector<std::uint64_t> hits(threads, 0);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      for (std::uint64_t t = w; t < trials; t += threads)
        if (run_one(t)) ++hits[w];
    });
  }
  for (auto& th : pool) th.join();
  std::uint64_t successes = 0;
  for (auto h : hits) successes += h;

  ConsistencyResult res;
  res.exact = false;
  res.trials = trials;
  res.successes = successes;
  res.estimate = static_cast<double>(successes) / static_cast<double>(trials);
  const auto ci = clopper_pearson(successes, trials, 0.99);
  res.ci_low = ci.lo;
  res.ci_high = ci.hi;
  return res;
}

HyperedgeReport count_hyperedges(const SubspaceFamily& rfam,
                                 const SubspaceFamily& lfam, std::size_t k) {
  if (rfam.n != lfam.n)
    throw domain_error("hyperedge families live in different ambient spaces");
  if (lfam.l <= rfam.l)
    throw domain_error("the top family dimension must exceed the bottom one");
  if (k == 0) throw domain_error("hyperedges need at least one top endpoint");
  const std::size_t n = rfam.n;
  const std::size_t lt = lfam.l;
  const std::size_t lb = rfam.l;
  const std::size_t c = lt - lb;
  const f2::Subspace full = f2::Subspace::full(n);

  HyperedgeReport rep;

  // Subspace side.
  BigInt acc = 0;
  for (const auto& r : rfam.members) {
    BigInt a_r = 0;
    for (const auto& l : f2::enumerate_zoom(r, full, lt))
      if (lfam.contains(l)) ++a_r;
    acc += boost::multiprecision::pow(a_r, static_cast<unsigned>(k));
  }
  const BigInt n_r = f2::gaussian_binomial(n, lb);
  const BigInt n_l = f2::gaussian_binomial(n - lb, c);
  rep.probability = Rational(
      acc, n_r * boost::multiprecision::pow(n_l, static_cast<unsigned>(k)));

  // Matrix side: exact integer counts for <(T F)^k, G>.  T F at a bottom
  // matrix counts column extensions whose span lies in lfam, scaled by
  // 2^{-nc}; G is the lifted indicator of rfam.
  const bilinear::BilinearFn flift = lift_indicator(lfam);
  BigInt inum = 0;
  const std::uint64_t bot_count = std::uint64_t{1} << (n * lb);
  const std::uint64_t ext_count = std::uint64_t{1} << (n * c);
  for (std::uint64_t bot = 0; bot < bot_count; ++bot) {
    const f2::Subspace span = index_column_span(bot, n, lb);
    if (span.dim() != lb || !rfam.contains(span)) continue;
    std::uint64_t cnt = 0;
    for (std::uint64_t ext = 0; ext < ext_count; ++ext) {
      std::uint64_t top = 0;
      for (std::size_t r = 0; r < n; ++r) {
        const f2::Word row =
            bilinear::index_row(bot, lb, r) |
            (bilinear::index_row(ext, c, r) << lb);
        top |= row << (r * lt);
      }
      if (flift.values[top] != 0.0) ++cnt;
    }
    inum += boost::multiprecision::pow(BigInt(cnt), static_cast<unsigned>(k));
  }
  rep.inner_product =
      Rational(inum, BigInt(1) << (n * lb + n * c * k));

  // Union-bound margin: (l_top + c k) 2^{l_top} <= 2^{n-1}.
  rep.margin_holds =
      BigInt(lt + c * k) * (BigInt(1) << lt) <= (BigInt(1) << (n - 1));
  if (rep.margin_holds && rep.probability > 2 * rep.inner_product)
    throw assertion_error("edges-vs-inner-product",
                          "hyperedge probability exceeded twice the matrix-"
                          "side inner product inside the margin regime");
  return rep;
}

namespace {

// All functionals on `dom`, in increasing order of the value pattern on the
// canonical basis.
std::vector<LinearFunctional> all_functionals(const f2::Subspace& dom) {
  const auto pivots = dom.pivot_cols();
  std::vector<LinearFunctional> out;
  out.reserve(std::size_t{1} << pivots.size());
  for (std::uint64_t pattern = 0;
       pattern < (std::uint64_t{1} << pivots.size()); ++pattern) {
    f2::Word coeff = 0;
    for (std::size_t i = 0; i < pivots.size(); ++i)
      if ((pattern >> i) & 1u) coeff |= f2::Word{1} << pivots[i];
    out.push_back(LinearFunctional(dom, coeff));
  }
  return out;
}

// Extensions of g to the superspace `sup` (one per value pattern on the
// complement rows).
std::vector<LinearFunctional> extensions_to(const LinearFunctional& g,
                                            const f2::Subspace& sup) {
  const auto extra = f2::complement_basis(g.domain, sup);
  std::vector<LinearFunctional> out;
  out.reserve(std::size_t{1} << extra.size());
  for (std::uint64_t pattern = 0;
       pattern < (std::uint64_t{1} << extra.size()); ++pattern) {
    f2::LinearSystem sys(sup.ambient_dim());
    for (const auto& row : g.domain.basis()) sys.add(row, g.eval(row));
    for (std::size_t i = 0; i < extra.size(); ++i)
      sys.add(extra[i], static_cast<int>((pattern >> i) & 1u));
    out.push_back(LinearFunctional(sup, sys.solve_coefficients()));
  }
  return out;
}

Rational table_agreement(const std::map<f2::Subspace, LinearFunctional>& t,
                         const LinearFunctional& g, const f2::Subspace& q,
                         const f2::Subspace& w, std::size_t table_dim) {
  const auto zoom = f2::enumerate_zoom(q, w, table_dim);
  if (zoom.empty()) return Rational(0);
  std::size_t hits = 0;
  for (const auto& l : zoom) {
    auto it = t.find(l);
    if (it == t.end())
      throw domain_error("table misses a subspace reached by the zoom");
    if (g.restrict_to(l) == it->second) ++hits;
  }
  return Rational(BigInt(hits), BigInt(zoom.size()));
}

}  // namespace

std::vector<MaximalPair> find_maximal_pairs(
    const std::map<f2::Subspace, LinearFunctional>& t, const f2::Subspace& q,
    double C, double s, std::size_t max_codim, std::uint64_t cap) {
  if (t.empty()) throw domain_error("empty table");
  if (!(C > 0.0) || !(s > 0.0 && s <= 1.0))
    throw domain_error("thresholds must satisfy C > 0 and 0 < s <= 1");
  const std::size_t n = t.begin()->first.ambient_dim();
  const std::size_t table_dim = t.begin()->first.dim();
  if (q.ambient_dim() != n)
    throw domain_error("zoom-in lives in a different ambient space");
  if (max_codim > n - q.dim()) max_codim = n - q.dim();

  // Candidate zoom-outs, largest first.
  std::vector<std::vector<f2::Subspace>> by_codim;
  std::uint64_t budget = 0;
  for (std::size_t cd = 0; cd <= max_codim; ++cd) {
    by_codim.push_back(f2::enumerate_codim_superspaces(q, cd, cap));
    for (const auto& w : by_codim.back()) {
      budget += std::uint64_t{1} << w.dim();
      if (budget > cap)
        throw resource_error("maximal-pair candidate space beyond the cap");
    }
  }

  const Rational keep_threshold(C);
  const Rational prune_threshold(s * C);
  std::vector<MaximalPair> out;
  for (std::size_t cd = 0; cd <= max_codim; ++cd) {
    for (const auto& w : by_codim[cd]) {
      if (f2::enumerate_zoom(q, w, table_dim).empty()) continue;
      for (const auto& g : all_functionals(w)) {
        const Rational agreement = table_agreement(t, g, q, w, table_dim);
        if (agreement < keep_threshold) continue;
        bool dominated = false;
        for (std::size_t cd2 = 0; cd2 < cd && !dominated; ++cd2) {
          for (const auto& w2 : by_codim[cd2]) {
            if (!f2::contains(w2, w) || w2 == w) continue;
            for (const auto& g2 : extensions_to(g, w2)) {
              if (table_agreement(t, g2, q, w2, table_dim) >=
                  prune_threshold) {
                dominated = true;
                break;
              }
            }
            if (dominated) break;
          }
        }
        if (!dominated) out.push_back({w, g, agreement});
      }
    }
  }
  return out;
}

BksReport bks_experiment(const TablePair& tp, std::size_t k,
                         std::uint64_t samples, std::uint64_t seed) {
  if (tp.n > 16 && samples == 0)
    throw resource_error("exhaustive functional sweep beyond 2^16");
  BksReport rep;
  rep.exhaustive = (samples == 0);
  rep.k = k;
  rep.expected_mu_bot = Rational(1, BigInt(1) << tp.dim_bot);

  std::vector<f2::Word> coeffs;
  if (rep.exhaustive) {
    for (std::uint64_t w = 0; w < (std::uint64_t{1} << tp.n); ++w)
      coeffs.push_back(w);
  } else {
    Rng rng(seed);
    for (std::uint64_t i = 0; i < samples; ++i) coeffs.push_back(rng.word(tp.n));
  }

  Rational mu_bot_sum(0);
  double mu_top_sum = 0.0, edge_sum = 0.0;
  for (const f2::Word f : coeffs) {
    BksSample sample;
    sample.f_coeff = f;
    std::set<f2::Subspace> s_top, s_bot;
    for (const auto& [l, g] : tp.t1)
      if (LinearFunctional(l, f) == g) s_top.insert(l);
    for (const auto& [r, g] : tp.t2)
      if (LinearFunctional(r, f) == g) s_bot.insert(r);
    const SubspaceFamily top_fam(tp.n, tp.dim_top, std::move(s_top));
    const SubspaceFamily bot_fam(tp.n, tp.dim_bot, std::move(s_bot));
    sample.mu_top = top_fam.density();
    sample.mu_bot = bot_fam.density();
    sample.edge_probability = count_hyperedges(bot_fam, top_fam, k).probability;
    mu_bot_sum += sample.mu_bot;
    mu_top_sum += to_double(sample.mu_top);
    edge_sum += to_double(sample.edge_probability);
    rep.samples.push_back(std::move(sample));
  }

  const auto count = BigInt(rep.samples.size());
  rep.mean_mu_bot = mu_bot_sum / Rational(count);
  rep.mean_mu_top = mu_top_sum / static_cast<double>(rep.samples.size());
  rep.mean_edge_probability =
      edge_sum / static_cast<double>(rep.samples.size());
  rep.note =
      "averaged over every global functional, the bottom agreement density "
      "is exactly 2^-dim_bot; sampled sweeps fluctuate around that value";
  if (rep.exhaustive && rep.mean_mu_bot != rep.expected_mu_bot)
    throw assertion_error("bks-mean-bottom-density",
                          "exhaustive mean of the bottom agreement density "
                          "deviated from 2^-dim_bot");
  return rep;
}

}  // namespace pcpkit::grasstest
