#include "pcpkit/composed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "pcpkit/errors.hpp"

namespace pcpkit::composed {

using f2::Subspace;
using f2::Word;

namespace {

// Positions of the sorted list `sub` inside the sorted list `super`.
std::vector<std::size_t> positions_in(const std::vector<std::size_t>& sub,
                                      const std::vector<std::size_t>& super) {
  std::vector<std::size_t> pos;
  pos.reserve(sub.size());
  std::size_t q = 0;
  for (std::size_t v : sub) {
    while (q < super.size() && super[q] < v) ++q;
    if (q == super.size() || super[q] != v)
      throw domain_error("variable list is not contained in the target list");
    pos.push_back(q);
  }
  return pos;
}

Word lift_word(Word w, const std::vector<std::size_t>& pos) {
  Word out = 0;
  for (std::size_t p = 0; p < pos.size(); ++p)
    if ((w >> p) & 1u) out |= Word{1} << pos[p];
  return out;
}

Word compact_word(Word w, const std::vector<std::size_t>& pos) {
  Word out = 0;
  for (std::size_t p = 0; p < pos.size(); ++p)
    if ((w >> pos[p]) & 1u) out |= Word{1} << p;
  return out;
}

std::vector<std::size_t> merge_vars(const std::vector<std::size_t>& a,
                                    const std::vector<std::size_t>& b) {
  std::vector<std::size_t> out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(),
                 std::back_inserter(out));
  return out;
}

Subspace lift_subspace(const Subspace& s, const std::vector<std::size_t>& pos,
                       std::size_t ambient) {
  std::vector<Word> rows;
  rows.reserve(s.dim());
  for (Word b : s.basis()) rows.push_back(lift_word(b, pos));
  return Subspace(ambient, rows);
}

Subspace compact_subspace(const Subspace& s,
                          const std::vector<std::size_t>& pos,
                          std::size_t ambient) {
  std::vector<Word> rows;
  rows.reserve(s.dim());
  for (Word b : s.basis()) rows.push_back(compact_word(b, pos));
  return Subspace(ambient, rows);
}

void check_config(const ComposedConfig& cfg) {
  if (cfg.J == 0) throw domain_error("J must be positive");
  if (3 * cfg.J > f2::kMaxAmbient)
    throw domain_error("3J exceeds the ambient coordinate budget");
  if (cfg.ell2 == 0 || cfg.ell2 > 2 * cfg.J)
    throw domain_error("ell2 must satisfy 1 <= ell2 <= 2J");
  if (cfg.ellbot >= cfg.ell2)
    throw domain_error("ellbot must be smaller than ell2");
  if (cfg.k == 0) throw domain_error("k must be positive");
  if (cfg.ell2 > 20 || cfg.ellbot > 20)
    throw resource_error("alphabet would exceed the desk-scale cap");
}

std::string hex_word(Word w) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%llx", static_cast<unsigned long long>(w));
  return buf;
}

std::string rows_tag(const Subspace& s) {
  std::string out;
  for (std::size_t i = 0; i < s.basis().size(); ++i) {
    if (i) out += '.';
    out += hex_word(s.basis()[i]);
  }
  return out.empty() ? "0" : out;
}

std::string index_tag(const std::vector<std::size_t>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += '.';
    out += std::to_string(xs[i]);
  }
  return out;
}

std::string vertex_a_name(const SideCondition& sc, const VertexA& a) {
  return "A:" + index_tag(sc.eqs) + ":" + rows_tag(a.s);
}

std::string vertex_b_name(const VertexB& b) {
  return "B:" + index_tag(b.vars) + ":" + rows_tag(b.r);
}

// The compacted B-vertex for a subspace local to question `sc`.
VertexB compact_b_vertex(const SideCondition& sc, const Subspace& r_local) {
  Word support = 0;
  for (Word b : r_local.basis()) support |= b;
  std::vector<std::size_t> vars;
  std::vector<std::size_t> pos;
  for (std::size_t p = 0; p < sc.vars.size(); ++p)
    if ((support >> p) & 1u) {
      vars.push_back(sc.vars[p]);
      pos.push_back(p);
    }
  return VertexB{std::move(vars), compact_subspace(r_local, pos, pos.size())};
}

}  // namespace

nlohmann::json composed_config_to_json(const ComposedConfig& cfg) {
  return {{"J", cfg.J},
          {"ell2", cfg.ell2},
          {"ellbot", cfg.ellbot},
          {"k", cfg.k},
          {"r", cfg.r}};
}

ComposedConfig composed_config_from_json(const nlohmann::json& j) {
  ComposedConfig cfg;
  cfg.J = j.at("J").get<std::size_t>();
  cfg.ell2 = j.at("ell2").get<std::size_t>();
  cfg.ellbot = j.at("ellbot").get<std::size_t>();
  cfg.k = j.at("k").get<std::size_t>();
  cfg.r = j.at("r").get<std::size_t>();
  check_config(cfg);
  return cfg;
}

QuestionReport enumerate_questions(const Gap3LinInstance& inst, std::size_t J,
                                   std::uint64_t cap) {
  if (J == 0) throw domain_error("J must be positive");
  if (3 * J > f2::kMaxAmbient)
    throw domain_error("3J exceeds the ambient coordinate budget");
  const std::size_t m = inst.equations.size();
  if (m == 0) throw domain_error("instance has no equations");

  QuestionReport rep;
  rep.n_tuples = 1;
  for (std::size_t i = 0; i < J; ++i) rep.n_tuples *= m;

  if (J <= m) {
    BigInt n_subsets = 1;
    for (std::size_t i = 0; i < J; ++i) {
      n_subsets *= m - i;
      n_subsets /= i + 1;
    }
    if (n_subsets > cap)
      throw resource_error("question enumeration exceeds the cap");

    // Variable pairs that appear together in some equation.
    std::set<std::pair<std::size_t, std::size_t>> cooccur;
    for (const auto& eq : inst.equations)
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = i + 1; j < 3; ++j)
          cooccur.insert({eq.vars[i], eq.vars[j]});

    const auto admissible = [&](const std::vector<std::size_t>& eqs) {
      std::vector<std::size_t> vars;
      for (std::size_t e : eqs)
        for (std::size_t v : inst.equations[e].vars) vars.push_back(v);
      std::sort(vars.begin(), vars.end());
      if (std::adjacent_find(vars.begin(), vars.end()) != vars.end())
        return false;
      for (std::size_t i = 0; i < eqs.size(); ++i)
        for (std::size_t j = i + 1; j < eqs.size(); ++j)
          for (std::size_t a : inst.equations[eqs[i]].vars)
            for (std::size_t b : inst.equations[eqs[j]].vars)
              if (cooccur.count({std::min(a, b), std::max(a, b)}))
                return false;
      return true;
    };

    std::vector<std::size_t> eqs(J);
    for (std::size_t i = 0; i < J; ++i) eqs[i] = i;
    while (true) {
      if (admissible(eqs)) rep.admissible.push_back(eqs);
      // Next J-combination of [0, m) in lexicographic order.
      std::size_t i = J;
      while (i > 0 && eqs[i - 1] == m - J + i - 1) --i;
      if (i == 0) break;
      ++eqs[i - 1];
      for (std::size_t j = i; j < J; ++j) eqs[j] = eqs[j - 1] + 1;
    }
  }

  BigInt factorial = 1;
  for (std::size_t i = 2; i <= J; ++i) factorial *= i;
  const Rational kept(BigInt(rep.admissible.size()) * factorial,
                      rep.n_tuples);
  rep.dropped_fraction = 1.0 - to_double(kept);
  return rep;
}

SideCondition side_condition(const Gap3LinInstance& inst,
                             const std::vector<std::size_t>& eqs) {
  if (eqs.empty()) throw domain_error("a question needs at least one equation");
  if (!std::is_sorted(eqs.begin(), eqs.end()) ||
      std::adjacent_find(eqs.begin(), eqs.end()) != eqs.end())
    throw domain_error("equation indices must be sorted and distinct");
  if (eqs.back() >= inst.equations.size())
    throw domain_error("equation index out of range");
  if (3 * eqs.size() > f2::kMaxAmbient)
    throw domain_error("3J exceeds the ambient coordinate budget");

  SideCondition sc;
  sc.eqs = eqs;
  for (std::size_t e : eqs)
    for (std::size_t v : inst.equations[e].vars) sc.vars.push_back(v);
  std::sort(sc.vars.begin(), sc.vars.end());
  if (std::adjacent_find(sc.vars.begin(), sc.vars.end()) != sc.vars.end())
    throw domain_error("question equations must be variable disjoint");

  for (std::size_t e : eqs) {
    Word row = 0;
    for (std::size_t v : inst.equations[e].vars)
      row |= Word{1} << positions_in({v}, sc.vars)[0];
    sc.x_rows.push_back(row);
    sc.rhs.push_back(inst.equations[e].rhs);
  }
  sc.h = Subspace(sc.vars.size(), sc.x_rows);
  return sc;
}

bool honors_side(const LinearFunctional& f, const SideCondition& sc) {
  if (f.ambient_dim != sc.vars.size())
    throw domain_error("functional ambient does not match the question");
  if (!f2::contains(f.domain, sc.h))
    throw domain_error("functional domain does not contain the question span");
  for (std::size_t i = 0; i < sc.x_rows.size(); ++i)
    if (f.eval(sc.x_rows[i]) != sc.rhs[i]) return false;
  return true;
}

std::vector<LinearFunctional> sigma_one(const SideCondition& sc,
                                        const Subspace& s) {
  if (s.ambient_dim() != sc.vars.size())
    throw domain_error("subspace ambient does not match the question");
  if (!f2::contains(s, sc.h))
    throw domain_error("an A-side space must contain the question span");
  const std::vector<Word> l_can = f2::complement_basis(sc.h, s);
  if (l_can.size() > 20)
    throw resource_error("alphabet would exceed the desk-scale cap");

  std::vector<LinearFunctional> out;
  out.reserve(std::size_t{1} << l_can.size());
  for (Word mask = 0; mask < (Word{1} << l_can.size()); ++mask) {
    f2::LinearSystem ls(sc.vars.size());
    for (std::size_t i = 0; i < sc.x_rows.size(); ++i)
      ls.add(sc.x_rows[i], sc.rhs[i]);
    for (std::size_t j = 0; j < l_can.size(); ++j)
      ls.add(l_can[j], static_cast<int>((mask >> j) & 1u));
    out.emplace_back(s, ls.solve_coefficients());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<LinearFunctional> sigma_two(const Subspace& r_sub) {
  if (r_sub.dim() > 20)
    throw resource_error("alphabet would exceed the desk-scale cap");
  const std::vector<std::size_t> pivots = r_sub.pivot_cols();
  std::vector<LinearFunctional> out;
  out.reserve(std::size_t{1} << pivots.size());
  for (Word mask = 0; mask < (Word{1} << pivots.size()); ++mask) {
    Word coeff = 0;
    for (std::size_t j = 0; j < pivots.size(); ++j)
      if ((mask >> j) & 1u) coeff |= Word{1} << pivots[j];
    out.emplace_back(r_sub, coeff);
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool same_clique(const Gap3LinInstance& inst, const SideCondition& a_sc,
                 const VertexA& a, const SideCondition& b_sc,
                 const VertexA& b) {
  (void)inst;
  if (a_sc.eqs == b_sc.eqs) return a.s == b.s;
  const std::vector<std::size_t> joint = merge_vars(a_sc.vars, b_sc.vars);
  if (joint.size() > f2::kMaxAmbient)
    throw domain_error("joint question exceeds the coordinate budget");
  const auto pos_a = positions_in(a_sc.vars, joint);
  const auto pos_b = positions_in(b_sc.vars, joint);
  const Subspace sa = lift_subspace(a.s, pos_a, joint.size());
  const Subspace sb = lift_subspace(b.s, pos_b, joint.size());
  const Subspace ha = lift_subspace(a_sc.h, pos_a, joint.size());
  const Subspace hb = lift_subspace(b_sc.h, pos_b, joint.size());
  return f2::sum(sa, hb) == f2::sum(sb, ha);
}

std::vector<VertexA> clique_members(
    const Gap3LinInstance& inst, const std::vector<SideCondition>& sides,
    const VertexA& a) {
  (void)inst;
  if (a.u_index >= sides.size())
    throw domain_error("question index out of range");
  const SideCondition& a_sc = sides[a.u_index];
  const std::size_t dim_s = a.s.dim();

  std::vector<VertexA> out;
  for (std::size_t j = 0; j < sides.size(); ++j) {
    const SideCondition& sc = sides[j];
    const std::vector<std::size_t> joint = merge_vars(a_sc.vars, sc.vars);
    if (joint.size() > f2::kMaxAmbient)
      throw domain_error("joint question exceeds the coordinate budget");
    const auto pos_a = positions_in(a_sc.vars, joint);
    const auto pos_j = positions_in(sc.vars, joint);
    const Subspace sa = lift_subspace(a.s, pos_a, joint.size());
    const Subspace ha = lift_subspace(a_sc.h, pos_a, joint.size());
    const Subspace hj = lift_subspace(sc.h, pos_j, joint.size());
    const Subspace m = f2::sum(sa, hj);

    // Candidates live between H_j and m cut down to the j-local space.
    std::vector<Word> local_rows;
    for (std::size_t p : pos_j) local_rows.push_back(Word{1} << p);
    const Subspace fj = Subspace(joint.size(), local_rows);
    const Subspace window = f2::intersect(m, fj);
    if (!f2::contains(window, hj)) continue;
    for (const Subspace& cand :
         f2::enumerate_zoom(hj, window, dim_s)) {
      if (f2::sum(cand, ha) != m) continue;
      out.push_back(VertexA{j, compact_subspace(cand, pos_j, sc.vars.size())});
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

LinearFunctional clique_extend(const Gap3LinInstance& inst,
                               const SideCondition& src_sc, const VertexA& src,
                               const LinearFunctional& f,
                               const SideCondition& dst_sc,
                               const VertexA& dst) {
  if (f.domain != src.s)
    throw domain_error("functional domain must equal the source space");
  if (!honors_side(f, src_sc))
    throw domain_error("functional violates the source side conditions");
  if (!same_clique(inst, src_sc, src, dst_sc, dst))
    throw domain_error("extension requires equivalent vertices");
  if (src.u_index == dst.u_index && src.s == dst.s) return f;

  const std::vector<std::size_t> joint = merge_vars(src_sc.vars, dst_sc.vars);
  const auto pos_s = positions_in(src_sc.vars, joint);
  const auto pos_d = positions_in(dst_sc.vars, joint);

  f2::LinearSystem ls(joint.size());
  for (Word b : src.s.basis())
    ls.add(lift_word(b, pos_s), f.eval(b));
  for (std::size_t i = 0; i < dst_sc.x_rows.size(); ++i)
    if (!ls.add(lift_word(dst_sc.x_rows[i], pos_d), dst_sc.rhs[i]))
      throw domain_error("side conditions admit no common extension");

  f2::LinearSystem local(dst_sc.vars.size());
  for (Word b : dst.s.basis()) {
    const auto v = ls.eval(lift_word(b, pos_d));
    if (!v)
      throw assertion_error("clique-extension-span",
                            "target space escaped the joint span");
    local.add(b, *v);
  }
  return LinearFunctional(dst.s, local.solve_coefficients());
}

std::size_t ComposedBuild::vertex_a_id(std::size_t u_index,
                                       const Subspace& s) const {
  const auto it = a_index.find(VertexA{u_index, s});
  if (it == a_index.end()) throw domain_error("unknown A-vertex");
  return it->second;
}

std::size_t ComposedBuild::vertex_b_id(const VertexB& v) const {
  const auto it = b_index.find(v);
  if (it == b_index.end()) throw domain_error("unknown B-vertex");
  return it->second;
}

namespace {

constexpr std::uint64_t kRejectionCap = 100000;

ConstraintSample sample_constraint_at(const ComposedBuild& build,
                                      std::size_t u, Rng& rng,
                                      std::size_t* redraws) {
  const ComposedConfig& cfg = build.cfg;
  const SideCondition& sc = build.sides[u];
  const std::size_t n = sc.vars.size();
  const Subspace full = Subspace::full(n);

  for (std::uint64_t attempt = 0; attempt < kRejectionCap; ++attempt) {
    ConstraintSample cs;
    cs.u_index = u;

    std::uint64_t tries = 0;
    do {
      if (++tries > kRejectionCap)
        throw resource_error("no B-side space avoids the question span");
      cs.r = f2::sample_subspace(n, cfg.ellbot, rng);
    } while (!f2::trivial_intersection(cs.r, sc.h));
    cs.b_id = build.vertex_b_id(compact_b_vertex(sc, cs.r));

    for (std::size_t i = 0; i < cfg.k; ++i) {
      Subspace l;
      tries = 0;
      do {
        if (++tries > kRejectionCap)
          throw resource_error("no A-side space avoids the question span");
        l = f2::sample_in_zoom(cs.r, full, cfg.ell2, rng);
      } while (!f2::trivial_intersection(l, sc.h));
      cs.ls.push_back(l);
      const std::size_t a_id = build.vertex_a_id(u, f2::sum(l, sc.h));
      cs.s_ids.push_back(a_id);
      const auto& clique = build.cliques[build.clique_of[a_id]];
      cs.member_ids.push_back(clique[rng.below(clique.size())]);
    }

    std::vector<std::size_t> ids = cs.member_ids;
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) == ids.end()) return cs;
    if (redraws) ++*redraws;
  }
  throw resource_error("constraint sampler kept drawing duplicate vertices");
}

ConstraintSample sample_constraint_impl(const ComposedBuild& build, Rng& rng,
                                        std::size_t* redraws) {
  const std::size_t u = rng.below(build.sides.size());
  return sample_constraint_at(build, u, rng, redraws);
}

// The unique extension of the member's functional to the joint space that
// honors the question's side conditions, evaluated on the question-local
// rows.  Returns false when the side conditions are inconsistent with f.
bool project_member(const ComposedBuild& build, std::size_t member_id,
                    const LinearFunctional& f, std::size_t u,
                    const std::vector<Word>& rows_local,
                    std::vector<int>* values_out) {
  const VertexA& m = build.verts_a[member_id];
  const SideCondition& msc = build.sides[m.u_index];
  const SideCondition& usc = build.sides[u];
  const std::vector<std::size_t> joint = merge_vars(msc.vars, usc.vars);
  const auto pos_m = positions_in(msc.vars, joint);
  const auto pos_u = positions_in(usc.vars, joint);

  f2::LinearSystem ls(joint.size());
  for (Word b : m.s.basis()) ls.add(lift_word(b, pos_m), f.eval(b));
  for (std::size_t i = 0; i < usc.x_rows.size(); ++i)
    if (!ls.add(lift_word(usc.x_rows[i], pos_u), usc.rhs[i])) return false;

  values_out->clear();
  for (Word row : rows_local) {
    const auto v = ls.eval(lift_word(row, pos_u));
    if (!v)
      throw assertion_error("clique-extension-span",
                            "projection row escaped the joint span");
    values_out->push_back(*v);
  }
  return true;
}

}  // namespace

ConstraintSample sample_constraint(const ComposedBuild& build, Rng& rng) {
  return sample_constraint_impl(build, rng, nullptr);
}

bool constraint_passes(const ComposedBuild& build, const ConstraintSample& cs,
                       const std::vector<LinearFunctional>& t1,
                       const std::vector<LinearFunctional>& t2) {
  const std::vector<Word>& r_rows = cs.r.basis();
  const LinearFunctional& bot = t2[cs.b_id];

  // B-entry values on the local rows; compaction keeps the row order, so
  // row j of the compacted basis matches row j of the local basis.
  std::vector<int> want;
  for (std::size_t j = 0; j < r_rows.size(); ++j)
    want.push_back(bot.eval(bot.domain.basis()[j]));

  std::vector<int> got;
  for (std::size_t i = 0; i < cs.member_ids.size(); ++i) {
    if (!project_member(build, cs.member_ids[i], t1[cs.member_ids[i]],
                        cs.u_index, r_rows, &got))
      return false;
    if (got != want) return false;
  }
  return true;
}

namespace {

void check_tables(const ComposedBuild& build,
                  const std::vector<LinearFunctional>& t1,
                  const std::vector<LinearFunctional>& t2) {
  if (t1.size() != build.verts_a.size())
    throw domain_error("A-table size does not match the vertex set");
  if (t2.size() != build.verts_b.size())
    throw domain_error("B-table size does not match the vertex set");
  for (std::size_t a = 0; a < t1.size(); ++a) {
    if (t1[a].domain != build.verts_a[a].s)
      throw domain_error("A-table entry domain does not match its vertex");
    if (!honors_side(t1[a], build.sides[build.verts_a[a].u_index]))
      throw domain_error("A-table entry violates its side conditions");
  }
  for (std::size_t b = 0; b < t2.size(); ++b)
    if (t2[b].domain != build.verts_b[b].r)
      throw domain_error("B-table entry domain does not match its vertex");
}

}  // namespace

BinomialCi table_consistency(const ComposedBuild& build,
                             const std::vector<LinearFunctional>& t1,
                             const std::vector<LinearFunctional>& t2,
                             std::uint64_t trials, std::uint64_t seed,
                             unsigned threads) {
  check_tables(build, t1, t2);
  if (trials == 0)
    throw domain_error("consistency estimation needs at least one trial");

  const auto pass = [&](std::uint64_t t) {
    Rng rng(mix_seed(seed, t));
    const ConstraintSample cs = sample_constraint(build, rng);
    return constraint_passes(build, cs, t1, t2);
  };

  const unsigned nt = std::max(threads, 1u);
  std::vector<std::uint64_t> partial(nt, 0);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < nt; ++w)
    pool.emplace_back([&, w] {
      const std::uint64_t lo = trials * w / nt;
      const std::uint64_t hi = trials * (w + 1) / nt;
      std::uint64_t wins = 0;
      for (std::uint64_t t = lo; t < hi; ++t)
        if (pass(t)) ++wins;
      partial[w] = wins;
    });
  for (auto& th : pool) th.join();
  std::uint64_t wins = 0;
  for (std::uint64_t p : partial) wins += p;
  return clopper_pearson(wins, trials, 0.99);
}

ComposedBuild build_composed_csp(const Gap3LinInstance& inst,
                                 const ComposedConfig& cfg, std::uint64_t seed,
                                 std::size_t n_constraint_samples) {
  check_config(cfg);
  if (n_constraint_samples == 0)
    throw domain_error("the sampler needs at least one constraint draw");

  ComposedBuild build;
  build.cfg = cfg;
  build.inst = inst;
  build.seed = seed;
  build.n_constraint_samples = n_constraint_samples;

  const QuestionReport qrep = enumerate_questions(inst, cfg.J);
  if (qrep.admissible.empty())
    throw domain_error("instance admits no question tuples");
  for (const auto& eqs : qrep.admissible)
    build.sides.push_back(side_condition(inst, eqs));

  const std::size_t n = 3 * cfg.J;
  for (std::size_t u = 0; u < build.sides.size(); ++u) {
    const Subspace full = Subspace::full(n);
    for (const Subspace& s :
         f2::enumerate_zoom(build.sides[u].h, full, cfg.J + cfg.ell2)) {
      const VertexA v{u, s};
      build.a_index.emplace(v, build.verts_a.size());
      build.verts_a.push_back(v);
      build.sigma1.push_back(sigma_one(build.sides[u], s));
    }
    for (const Subspace& r : f2::enumerate_grassmann(n, cfg.ellbot)) {
      VertexB vb = compact_b_vertex(build.sides[u], r);
      if (build.b_index.emplace(vb, build.verts_b.size()).second) {
        build.sigma2.push_back(sigma_two(vb.r));
        build.verts_b.push_back(std::move(vb));
      }
    }
  }

  build.clique_of.assign(build.verts_a.size(), SIZE_MAX);
  for (std::size_t a = 0; a < build.verts_a.size(); ++a) {
    if (build.clique_of[a] != SIZE_MAX) continue;
    const std::size_t c = build.cliques.size();
    std::vector<std::size_t> ids;
    for (const VertexA& m :
         clique_members(inst, build.sides, build.verts_a[a])) {
      const std::size_t id = build.vertex_a_id(m.u_index, m.s);
      if (build.clique_of[id] != SIZE_MAX)
        throw assertion_error("clique-transitivity",
                              "equivalence classes overlap");
      build.clique_of[id] = c;
      ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end());
    build.cliques.push_back(std::move(ids));
  }

  // Sample the constraints and aggregate duplicates into weights.
  std::map<std::pair<std::vector<std::size_t>,
                     std::vector<std::vector<std::size_t>>>,
           std::size_t>
      tally;
  Rng rng(mix_seed(seed, "constraints"));
  for (std::size_t t = 0; t < n_constraint_samples; ++t) {
    const ConstraintSample cs =
        sample_constraint_impl(build, rng, &build.n_duplicate_redraws);
    const std::vector<Word>& r_rows = cs.r.basis();

    // Per member, the map from its symbols to B-symbols (SIZE_MAX when the
    // side conditions admit no common extension for that symbol).
    std::vector<std::pair<std::size_t, std::vector<std::size_t>>> cols;
    for (std::size_t mi : cs.member_ids) {
      std::vector<std::size_t> proj;
      std::vector<int> values;
      for (const LinearFunctional& f : build.sigma1[mi]) {
        if (!project_member(build, mi, f, cs.u_index, r_rows, &values)) {
          proj.push_back(SIZE_MAX);
          continue;
        }
        f2::LinearSystem local(build.verts_b[cs.b_id].vars.size());
        const Subspace& rb = build.verts_b[cs.b_id].r;
        for (std::size_t j = 0; j < r_rows.size(); ++j)
          local.add(rb.basis()[j], values[j]);
        const LinearFunctional sym(rb, local.solve_coefficients());
        const auto& alphabet = build.sigma2[cs.b_id];
        const auto it =
            std::lower_bound(alphabet.begin(), alphabet.end(), sym);
        proj.push_back(static_cast<std::size_t>(it - alphabet.begin()));
      }
      cols.emplace_back(mi, std::move(proj));
    }
    std::sort(cols.begin(), cols.end());

    std::vector<std::size_t> verts;
    for (const auto& [mi, proj] : cols) verts.push_back(mi);
    verts.push_back(build.verts_a.size() + cs.b_id);

    std::vector<std::vector<std::size_t>> sat;
    for (std::size_t sym = 0; sym < build.sigma2[cs.b_id].size(); ++sym) {
      std::vector<std::vector<std::size_t>> pre(cols.size());
      bool feasible = true;
      for (std::size_t i = 0; i < cols.size(); ++i) {
        for (std::size_t ti = 0; ti < cols[i].second.size(); ++ti)
          if (cols[i].second[ti] == sym) pre[i].push_back(ti);
        if (pre[i].empty()) {
          feasible = false;
          break;
        }
      }
      if (!feasible) continue;
      std::vector<std::size_t> idx(cols.size(), 0);
      while (true) {
        std::vector<std::size_t> tuple;
        for (std::size_t i = 0; i < cols.size(); ++i)
          tuple.push_back(pre[i][idx[i]]);
        tuple.push_back(sym);
        sat.push_back(std::move(tuple));
        if (sat.size() > (std::uint64_t{1} << 22))
          throw resource_error("constraint table exceeds the cap");
        std::size_t i = cols.size();
        while (i > 0 && idx[i - 1] + 1 == pre[i - 1].size()) idx[--i] = 0;
        if (i == 0) break;
        ++idx[i - 1];
      }
    }
    std::sort(sat.begin(), sat.end());
    ++tally[{std::move(verts), std::move(sat)}];
  }

  std::vector<csp::CspVertex> vertices;
  for (std::size_t a = 0; a < build.verts_a.size(); ++a)
    vertices.push_back(
        csp::CspVertex{vertex_a_name(build.sides[build.verts_a[a].u_index],
                                     build.verts_a[a]),
                       std::size_t{1} << cfg.ell2});
  for (const VertexB& vb : build.verts_b)
    vertices.push_back(
        csp::CspVertex{vertex_b_name(vb), std::size_t{1} << cfg.ellbot});

  std::vector<csp::CspEdge> edges;
  for (const auto& [key, count] : tally)
    edges.push_back(csp::CspEdge{
        key.first, Rational(count, n_constraint_samples), key.second});
  build.csp = csp::CspInstance(cfg.k + 1, std::move(vertices), {},
                               std::move(edges));

  build.sidecar = {
      {"config", composed_config_to_json(cfg)},
      {"seed", seed},
      {"n_constraint_samples", n_constraint_samples},
      {"n_duplicate_redraws", build.n_duplicate_redraws},
      {"clique_index", build.clique_of},
  };
  return build;
}

bool is_clique_consistent(const ComposedBuild& build,
                          const std::vector<LinearFunctional>& t1) {
  if (t1.size() != build.verts_a.size())
    throw domain_error("A-table size does not match the vertex set");
  for (const auto& clique : build.cliques)
    for (std::size_t a : clique)
      for (std::size_t b : clique) {
        if (a == b) continue;
        const VertexA& va = build.verts_a[a];
        const VertexA& vb = build.verts_a[b];
        if (clique_extend(build.inst, build.sides[va.u_index], va, t1[a],
                          build.sides[vb.u_index], vb) != t1[b])
          return false;
      }
  return true;
}

std::vector<LinearFunctional> make_clique_consistent(
    const ComposedBuild& build, const std::vector<LinearFunctional>& t1,
    std::uint64_t seed) {
  if (t1.size() != build.verts_a.size())
    throw domain_error("A-table size does not match the vertex set");
  std::vector<LinearFunctional> out = t1;
  Rng rng(mix_seed(seed, "cliques"));
  for (const auto& clique : build.cliques) {
    const std::size_t rep = clique[rng.below(clique.size())];
    const VertexA& vr = build.verts_a[rep];
    for (std::size_t b : clique) {
      const VertexA& vb = build.verts_a[b];
      out[b] = clique_extend(build.inst, build.sides[vr.u_index], vr, t1[rep],
                             build.sides[vb.u_index], vb);
    }
  }
  return out;
}

std::pair<std::vector<LinearFunctional>, std::vector<LinearFunctional>>
sigma_tables(const ComposedBuild& build, const std::vector<int>& sigma) {
  if (sigma.size() != build.inst.n_vars)
    throw domain_error("assignment length does not match the instance");
  for (int b : sigma)
    if (b != 0 && b != 1) throw domain_error("assignment bits must be 0 or 1");

  std::vector<int> sat_u(build.sides.size(), 1);
  std::vector<Word> local_sigma(build.sides.size(), 0);
  for (std::size_t u = 0; u < build.sides.size(); ++u) {
    const SideCondition& sc = build.sides[u];
    Word w = 0;
    for (std::size_t p = 0; p < sc.vars.size(); ++p)
      if (sigma[sc.vars[p]]) w |= Word{1} << p;
    local_sigma[u] = w;
    for (std::size_t i = 0; i < sc.x_rows.size(); ++i)
      if (f2::parity(w & sc.x_rows[i]) != sc.rhs[i]) sat_u[u] = 0;
  }

  std::vector<LinearFunctional> t1;
  for (const VertexA& v : build.verts_a) {
    const SideCondition& sc = build.sides[v.u_index];
    if (sat_u[v.u_index]) {
      t1.emplace_back(v.s, local_sigma[v.u_index]);
      continue;
    }
    f2::LinearSystem ls(sc.vars.size());
    for (std::size_t i = 0; i < sc.x_rows.size(); ++i)
      ls.add(sc.x_rows[i], sc.rhs[i]);
    for (Word b : f2::complement_basis(sc.h, v.s))
      ls.add(b, f2::parity(local_sigma[v.u_index] & b));
    t1.emplace_back(v.s, ls.solve_coefficients());
  }

  std::vector<LinearFunctional> t2;
  for (const VertexB& vb : build.verts_b) {
    Word w = 0;
    for (std::size_t p = 0; p < vb.vars.size(); ++p)
      if (sigma[vb.vars[p]]) w |= Word{1} << p;
    t2.emplace_back(vb.r, w);
  }
  return {std::move(t1), std::move(t2)};
}

nlohmann::json completeness_report_to_json(const CompletenessReport& rep) {
  return {{"rate", rep.ci.rate},
          {"ci_low", rep.ci.lo},
          {"ci_high", rep.ci.hi},
          {"successes", rep.ci.successes},
          {"trials", rep.ci.trials},
          {"eps1", rep.eps1},
          {"bound", rep.bound},
          {"asserted", rep.asserted}};
}

CompletenessReport completeness_experiment(const ComposedBuild& build,
                                           const std::vector<int>& sigma,
                                           std::uint64_t trials,
                                           std::uint64_t seed,
                                           unsigned threads) {
  const auto [t1, t2] = sigma_tables(build, sigma);
  CompletenessReport rep;
  rep.ci = table_consistency(build, t1, t2, trials, seed, threads);
  rep.eps1 =
      1.0 - to_double(outerpcp::lin3_value(build.inst, sigma));
  rep.bound = 1.0 - static_cast<double>(build.cfg.J) * rep.eps1;
  rep.asserted = rep.bound > 0.0;
  if (rep.asserted && rep.ci.hi < rep.bound)
    throw assertion_error("composed-completeness",
                          "pass rate fell below 1 - J*eps1");
  return rep;
}

namespace {

std::uint64_t view_digest(const outerpcp::ProverView& view) {
  std::string s;
  for (std::size_t v : view.vars) {
    s += std::to_string(v);
    s += ',';
  }
  s += '|';
  for (Word w : view.advice) {
    s += hex_word(w);
    s += ',';
  }
  return fnv1a64(s);
}

Word random_extension(const LinearFunctional& g, Rng& rng) {
  Word c = g.coeff;
  for (Word row : f2::annihilator(g.domain).basis())
    if (rng.coin()) c ^= row;
  return c;
}

}  // namespace

ExtractReport extract_prover_strategies(const ComposedBuild& build,
                                        const std::vector<LinearFunctional>& t1,
                                        const std::vector<LinearFunctional>& t2,
                                        const ExtractOptions& opt) {
  check_tables(build, t1, t2);
  if (!is_clique_consistent(build, t1))
    throw domain_error("extraction needs a clique-consistent A-table");
  if (opt.pu_trials == 0)
    throw domain_error("per-question estimation needs at least one trial");

  ExtractReport rep;
  rep.p_u.resize(build.sides.size(), 0.0);
  for (std::size_t u = 0; u < build.sides.size(); ++u) {
    Rng rng(mix_seed(opt.seed, "pu:" + std::to_string(u)));
    std::size_t wins = 0;
    for (std::size_t t = 0; t < opt.pu_trials; ++t) {
      const ConstraintSample cs = sample_constraint_at(build, u, rng, nullptr);
      if (constraint_passes(build, cs, t1, t2)) ++wins;
    }
    rep.p_u[u] = static_cast<double>(wins) /
                 static_cast<double>(opt.pu_trials);
  }
  for (double p : rep.p_u) rep.epsilon += p;
  rep.epsilon /= static_cast<double>(rep.p_u.size());
  if (rep.epsilon > 0.0)
    for (std::size_t u = 0; u < rep.p_u.size(); ++u)
      if (rep.p_u[u] >= rep.epsilon / 2.0) rep.good.push_back(u);
  rep.c_threshold =
      opt.c_threshold >= 0.0 ? opt.c_threshold : rep.epsilon / 10.0;

  const auto shared = std::make_shared<const ComposedBuild>(build);
  const auto top = std::make_shared<const std::vector<LinearFunctional>>(t1);
  const auto good =
      std::make_shared<const std::set<std::size_t>>(rep.good.begin(),
                                                    rep.good.end());
  auto vars_to_u =
      std::make_shared<std::map<std::vector<std::size_t>, std::size_t>>();
  for (std::size_t u = 0; u < build.sides.size(); ++u)
    vars_to_u->emplace(build.sides[u].vars, u);
  const double cthr = rep.c_threshold;
  const std::size_t max_r = build.cfg.r;
  const std::uint64_t seed = opt.seed;

  rep.first = [shared, top, good, vars_to_u, cthr,
               seed](const outerpcp::ProverView& view) -> Word {
    const ComposedBuild& b = *shared;
    const auto it = vars_to_u->find(view.vars);
    if (it == vars_to_u->end()) return outerpcp::kGiveUpAnswer;
    const std::size_t u = it->second;
    if (!good->count(u)) return outerpcp::kGiveUpAnswer;
    const SideCondition& sc = b.sides[u];
    const std::size_t n = sc.vars.size();

    Rng rng(mix_seed(mix_seed(seed, "p1"), view_digest(view)));
    const std::size_t r1 = rng.below(view.advice.size() + 1);
    const Subspace q(n, std::vector<Word>(view.advice.begin(),
                                          view.advice.begin() + r1));
    if (!f2::trivial_intersection(q, sc.h)) return outerpcp::kGiveUpAnswer;
    const Subspace qh = f2::sum(q, sc.h);

    for (std::size_t r2 = 0; r2 + r1 <= view.advice.size(); ++r2) {
      if (qh.dim() + r2 > n) break;
      for (const Subspace& w :
           f2::enumerate_codim_superspaces(qh, r2)) {
        const std::vector<Word> c_rows = f2::complement_basis(sc.h, w);
        if (c_rows.size() > 20) return outerpcp::kGiveUpAnswer;
        for (Word mask = 0; mask < (Word{1} << c_rows.size()); ++mask) {
          f2::LinearSystem ls(n);
          for (std::size_t i = 0; i < sc.x_rows.size(); ++i)
            ls.add(sc.x_rows[i], sc.rhs[i]);
          for (std::size_t j = 0; j < c_rows.size(); ++j)
            ls.add(c_rows[j], static_cast<int>((mask >> j) & 1u));
          const LinearFunctional g(w, ls.solve_coefficients());

          std::size_t total = 0;
          std::size_t agree = 0;
          for (const Subspace& l : f2::enumerate_zoom(q, w, b.cfg.ell2)) {
            if (!f2::trivial_intersection(l, sc.h)) continue;
            ++total;
            const Subspace s = f2::sum(l, sc.h);
            if ((*top)[b.vertex_a_id(u, s)] == g.restrict_to(s)) ++agree;
          }
          if (total == 0) continue;
          if (static_cast<double>(agree) + 1e-9 >=
              cthr * static_cast<double>(total))
            return random_extension(g, rng);
        }
      }
    }
    return outerpcp::kGiveUpAnswer;
  };

  rep.second = [shared, top, cthr, max_r,
                seed](const outerpcp::ProverView& view) -> Word {
    const ComposedBuild& b = *shared;
    const std::size_t nv = view.vars.size();
    if (nv == 0 || b.cfg.ell2 > nv) return outerpcp::kGiveUpAnswer;
    std::size_t u = SIZE_MAX;
    for (std::size_t i = 0; i < b.sides.size(); ++i)
      if (std::includes(b.sides[i].vars.begin(), b.sides[i].vars.end(),
                        view.vars.begin(), view.vars.end())) {
        u = i;
        break;
      }
    if (u == SIZE_MAX) return outerpcp::kGiveUpAnswer;
    const SideCondition& sc = b.sides[u];
    const auto pos = positions_in(view.vars, sc.vars);

    // The single-question table induced on F2^V: restrict the A-entry when
    // the lift meets the question span trivially, else fill with the zero
    // functional.
    std::map<Subspace, LinearFunctional> table;
    for (const Subspace& l : f2::enumerate_grassmann(nv, b.cfg.ell2)) {
      std::vector<Word> lifted;
      for (Word row : l.basis()) lifted.push_back(lift_word(row, pos));
      const Subspace lift_l(sc.vars.size(), lifted);
      if (!f2::trivial_intersection(lift_l, sc.h)) {
        table.emplace(l, LinearFunctional(l, 0));
        continue;
      }
      const std::size_t aid = b.vertex_a_id(u, f2::sum(lift_l, sc.h));
      const LinearFunctional rest = (*top)[aid].restrict_to(lift_l);
      f2::LinearSystem local(nv);
      for (std::size_t j = 0; j < lifted.size(); ++j)
        local.add(l.basis()[j], rest.eval(lifted[j]));
      table.emplace(l, LinearFunctional(l, local.solve_coefficients()));
    }

    Rng rng(mix_seed(mix_seed(seed, "p2"), view_digest(view)));
    const std::size_t rp = rng.below(view.advice.size() + 1);
    const Subspace q(nv, std::vector<Word>(view.advice.begin(),
                                           view.advice.begin() + rp));
    const double c2 =
        cthr / (8.0 * std::pow(5.0, static_cast<double>(max_r)));
    if (!(c2 > 0.0)) return outerpcp::kGiveUpAnswer;
    const auto pairs = grasstest::find_maximal_pairs(table, q, c2, 0.2, max_r);
    if (pairs.empty()) return outerpcp::kGiveUpAnswer;
    return random_extension(pairs[rng.below(pairs.size())].g, rng);
  };

  return rep;
}

}  // namespace pcpkit::composed
