#include "pcpkit/outerpcp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <thread>
#include <utility>

#include "pcpkit/errors.hpp"

namespace pcpkit::outerpcp {

namespace {

using f2::Subspace;
using f2::Word;

void check_beta(double beta) {
  if (!(beta >= 0.0 && beta <= 1.0))
    throw domain_error("smoothness parameter outside [0, 1]");
}

void check_config(const Gap3LinInstance& inst, const OuterConfig& cfg) {
  if (inst.equations.empty())
    throw domain_error("cannot sample a question from an empty equation list");
  if (cfg.J < 1) throw domain_error("repetition count must be at least 1");
  if (3 * cfg.J > f2::kMaxAmbient)
    throw domain_error("repetition count beyond the word-coordinate cap");
  check_beta(cfg.beta);
}

std::size_t position_of(const std::vector<std::size_t>& sorted,
                        std::size_t x) {
  return static_cast<std::size_t>(
      std::lower_bound(sorted.begin(), sorted.end(), x) - sorted.begin());
}

std::vector<std::size_t> mask_positions(Word mask) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < f2::kMaxAmbient; ++i)
    if ((mask >> i) & 1u) out.push_back(i);
  return out;
}

Word scatter(Word bits, const std::vector<std::size_t>& positions) {
  Word out = 0;
  for (std::size_t t = 0; t < positions.size(); ++t)
    if ((bits >> t) & 1u) out |= Word{1} << positions[t];
  return out;
}

Subspace lift_subspace(std::size_t ambient, const Subspace& s,
                       const std::vector<std::size_t>& positions) {
  std::vector<Word> rows;
  rows.reserve(s.dim());
  for (Word b : s.basis()) rows.push_back(scatter(b, positions));
  return Subspace(ambient, rows);
}

void check_coords(const QuestionCoords& coords) {
  if (coords.J < 1) throw domain_error("question needs at least one block");
  if (3 * coords.J > f2::kMaxAmbient)
    throw domain_error("question coordinates beyond the word cap");
  if (coords.blocks.size() != coords.J)
    throw domain_error("block list does not match the repetition count");
  Word seen = 0;
  for (const auto& blk : coords.blocks)
    for (std::size_t p : blk) {
      if (p >= coords.ambient())
        throw domain_error("block coordinate out of range");
      if ((seen >> p) & 1u)
        throw domain_error("blocks must partition the coordinates");
      seen |= Word{1} << p;
    }
}

// One smoothed-question outcome: the coordinate set V as a mask with its
// exact probability.  Zero-probability branches are dropped.
struct VOutcome {
  Word vmask = 0;
  Rational prob = 0;
};

std::vector<VOutcome> v_outcomes(const QuestionCoords& coords,
                                 const Rational& beta) {
  const Rational keep = Rational(1) - beta;
  const Rational single = beta / 3;
  std::vector<VOutcome> acc{{Word{0}, Rational(1)}};
  for (const auto& blk : coords.blocks) {
    std::vector<VOutcome> next;
    next.reserve(acc.size() * 4);
    const Word full =
        (Word{1} << blk[0]) | (Word{1} << blk[1]) | (Word{1} << blk[2]);
    for (const auto& o : acc) {
      if (keep != 0) next.push_back({o.vmask | full, o.prob * keep});
      if (single != 0)
        for (std::size_t t = 0; t < 3; ++t)
          next.push_back({o.vmask | (Word{1} << blk[t]), o.prob * single});
    }
    acc = std::move(next);
  }
  return acc;
}

Word sample_vmask(const QuestionCoords& coords, double beta, Rng& rng) {
  Word mask = 0;
  for (const auto& blk : coords.blocks) {
    const bool shrink = rng.real() < beta;
    if (shrink) {
      mask |= Word{1} << blk[rng.below(3)];
    } else {
      mask |= (Word{1} << blk[0]) | (Word{1} << blk[1]) | (Word{1} << blk[2]);
    }
  }
  return mask;
}

std::uint64_t digest_basis(const std::vector<Word>& rows) {
  std::string buf;
  buf.reserve(rows.size() * 8);
  for (Word w : rows)
    for (int b = 0; b < 8; ++b) buf.push_back(static_cast<char>(w >> (8 * b)));
  return fnv1a64(buf);
}

// Two-sided empirical cell counts, keyed by canonical basis, or by a 64-bit
// digest when the cell universe exceeds the cap.  Digest collisions merge
// cells (which can only lower the empirical distance) and are counted.
class CellCounter {
 public:
  CellCounter(bool use_digest, std::uint64_t cell_cap)
      : use_digest_(use_digest), cell_cap_(cell_cap) {}

  void add(const Subspace& s, bool first_side) {
    if (use_digest_) {
      auto [it, fresh] =
          digest_cells_.try_emplace(digest_basis(s.basis()), Entry{});
      if (fresh) {
        it->second.rows = s.basis();
      } else if (it->second.rows != s.basis()) {
        ++collisions_;
      }
      bump(it->second, first_side);
      if (digest_cells_.size() > cell_cap_)
        throw resource_error("observed cell count beyond the cap");
    } else {
      auto& e = cells_[s.basis()];
      bump(e, first_side);
      if (cells_.size() > cell_cap_)
        throw resource_error("observed cell count beyond the cap");
    }
  }

  double empirical_tv(std::uint64_t n_first, std::uint64_t n_second) const {
    double sum = 0.0;
    const auto fold = [&](const Entry& e) {
      sum += std::fabs(static_cast<double>(e.first) /
                           static_cast<double>(n_first) -
                       static_cast<double>(e.second) /
                           static_cast<double>(n_second));
    };
    for (const auto& [k, e] : cells_) fold(e);
    for (const auto& [k, e] : digest_cells_) fold(e);
    return sum / 2.0;
  }

  std::size_t size() const {
    return use_digest_ ? digest_cells_.size() : cells_.size();
  }
  std::uint64_t collisions() const { return collisions_; }

 private:
  struct Entry {
    std::vector<Word> rows;
    std::uint64_t first = 0;
    std::uint64_t second = 0;
  };
  static void bump(Entry& e, bool first_side) {
    if (first_side)
      ++e.first;
    else
      ++e.second;
  }

  bool use_digest_;
  std::uint64_t cell_cap_;
  std::map<std::vector<Word>, Entry> cells_;
  std::map<std::uint64_t, Entry> digest_cells_;
  std::uint64_t collisions_ = 0;
};

double mc_deviation(const BigInt& universe, std::uint64_t samples) {
  const double cells = to_double(universe);
  if (samples == 0 || cells > 1e9) return 1.0;
  const double one_side = tv_deviation_bound(
      static_cast<std::size_t>(cells), samples, 0.005);
  return std::min(1.0, 2.0 * one_side);
}

void finish_bounded(SdReport& r, const char* anchor, bool do_assert) {
  r.asserted = do_assert;
  if (do_assert && r.ci_low > r.bound)
    throw assertion_error(anchor,
                          "estimate " + std::to_string(r.estimate) +
                              " minus deviation exceeds the bound " +
                              std::to_string(r.bound));
}

}  // namespace

Gap3LinInstance::Gap3LinInstance(std::size_t n_vars_,
                                 std::vector<Lin3Equation> equations_)
    : n_vars(n_vars_), equations(std::move(equations_)) {
  std::vector<std::vector<std::size_t>> by_var(n_vars);
  for (std::size_t e = 0; e < equations.size(); ++e) {
    auto& eq = equations[e];
    std::sort(eq.vars.begin(), eq.vars.end());
    if (eq.vars[0] == eq.vars[1] || eq.vars[1] == eq.vars[2])
      throw domain_error("equation variables must be distinct");
    if (eq.vars[2] >= n_vars)
      throw domain_error("equation variable out of range");
    if (eq.rhs != 0 && eq.rhs != 1)
      throw domain_error("equation right-hand side must be a bit");
    for (std::size_t v : eq.vars) by_var[v].push_back(e);
  }
  for (std::size_t v = 0; v < n_vars; ++v)
    if (by_var[v].size() > 10)
      throw domain_error("variable appears in more than 10 equations");
  // Two equations sharing two or more variables show up at least twice in
  // the same incidence lists.
  std::map<std::pair<std::size_t, std::size_t>, int> pair_count;
  for (std::size_t v = 0; v < n_vars; ++v)
    for (std::size_t i = 0; i < by_var[v].size(); ++i)
      for (std::size_t j = i + 1; j < by_var[v].size(); ++j) {
        auto& c = pair_count[{by_var[v][i], by_var[v][j]}];
        if (++c > 1)
          throw domain_error("two equations share more than one variable");
      }
}

nlohmann::json lin3_to_json(const Gap3LinInstance& inst) {
  nlohmann::json eqs = nlohmann::json::array();
  for (const auto& eq : inst.equations)
    eqs.push_back({{"vars", {eq.vars[0], eq.vars[1], eq.vars[2]}},
                   {"rhs", eq.rhs}});
  return {{"n_vars", inst.n_vars}, {"equations", eqs}};
}

Gap3LinInstance lin3_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("n_vars") || !j.contains("equations"))
    throw domain_error("3lin JSON must carry n_vars and equations");
  if (!j.at("n_vars").is_number_unsigned())
    throw domain_error("n_vars must be a nonnegative integer");
  if (!j.at("equations").is_array())
    throw domain_error("equations must be an array");
  std::vector<Lin3Equation> eqs;
  for (const auto& e : j.at("equations")) {
    if (!e.is_object() || !e.contains("vars") || !e.contains("rhs"))
      throw domain_error("equation JSON must carry vars and rhs");
    const auto& vs = e.at("vars");
    if (!vs.is_array() || vs.size() != 3)
      throw domain_error("equation vars must be a triple");
    Lin3Equation eq;
    for (std::size_t t = 0; t < 3; ++t) {
      if (!vs[t].is_number_unsigned())
        throw domain_error("equation variable must be a nonnegative integer");
      eq.vars[t] = vs[t].get<std::size_t>();
    }
    if (!e.at("rhs").is_number_integer())
      throw domain_error("equation rhs must be an integer bit");
    eq.rhs = e.at("rhs").get<int>();
    eqs.push_back(eq);
  }
  return Gap3LinInstance(j.at("n_vars").get<std::size_t>(), std::move(eqs));
}

Rational lin3_value(const Gap3LinInstance& inst,
                    const std::vector<int>& assignment) {
  if (inst.equations.empty())
    throw domain_error("an empty equation list has no value");
  if (assignment.size() != inst.n_vars)
    throw domain_error("assignment length does not match the variable count");
  for (int b : assignment)
    if (b != 0 && b != 1) throw domain_error("assignment entries must be bits");
  std::size_t sat = 0;
  for (const auto& eq : inst.equations) {
    const int lhs = assignment[eq.vars[0]] ^ assignment[eq.vars[1]] ^
                    assignment[eq.vars[2]];
    if (lhs == eq.rhs) ++sat;
  }
  return Rational(sat, inst.equations.size());
}

Planted3Lin gen_3lin(std::size_t n_vars, std::size_t n_eqs, double eta,
                     std::uint64_t seed, std::uint64_t attempt_cap) {
  if (n_vars < 3)
    throw domain_error("a 3lin instance needs at least three variables");
  if (!(eta >= 0.0 && eta <= 1.0))
    throw domain_error("noise rate outside [0, 1]");
  Rng rng(seed);
  Planted3Lin out;
  out.assignment.resize(n_vars);
  for (auto& b : out.assignment) b = rng.coin() ? 1 : 0;

  std::vector<std::size_t> degree(n_vars, 0);
  std::vector<std::vector<std::size_t>> by_var(n_vars);
  std::vector<Lin3Equation> eqs;
  std::uint64_t attempts = 0;
  while (eqs.size() < n_eqs) {
    if (++attempts > attempt_cap)
      throw resource_error("equation rejection sampling beyond the attempt cap");
    std::array<std::size_t, 3> vars = {rng.below(n_vars), rng.below(n_vars),
                                       rng.below(n_vars)};
    std::sort(vars.begin(), vars.end());
    if (vars[0] == vars[1] || vars[1] == vars[2]) continue;
    if (degree[vars[0]] >= 10 || degree[vars[1]] >= 10 || degree[vars[2]] >= 10)
      continue;
    // Any prior equation holding two of the three variables appears twice
    // across the incidence lists.
    std::vector<std::size_t> hits;
    for (std::size_t v : vars)
      hits.insert(hits.end(), by_var[v].begin(), by_var[v].end());
    std::sort(hits.begin(), hits.end());
    if (std::adjacent_find(hits.begin(), hits.end()) != hits.end()) continue;
    Lin3Equation eq;
    eq.vars = vars;
    eq.rhs = out.assignment[vars[0]] ^ out.assignment[vars[1]] ^
             out.assignment[vars[2]];
    for (std::size_t v : vars) {
      ++degree[v];
      by_var[v].push_back(eqs.size());
    }
    eqs.push_back(eq);
  }

  out.n_flipped = static_cast<std::size_t>(
      std::llround(eta * static_cast<double>(n_eqs)));
  std::vector<std::size_t> order(n_eqs);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < out.n_flipped; ++i) {
    const std::size_t j = i + rng.below(n_eqs - i);
    std::swap(order[i], order[j]);
    eqs[order[i]].rhs ^= 1;
  }
  out.inst = Gap3LinInstance(n_vars, std::move(eqs));
  return out;
}

QuestionPair sample_question(const Gap3LinInstance& inst,
                             const OuterConfig& cfg, Rng& rng) {
  check_config(inst, cfg);
  QuestionPair qp;
  qp.eqs.resize(cfg.J);
  for (auto& e : qp.eqs) e = rng.below(inst.equations.size());
  qp.v_choice.resize(cfg.J);
  for (auto& c : qp.v_choice) {
    const bool shrink = rng.real() < cfg.beta;
    c = shrink ? static_cast<int>(rng.below(3)) : -1;
  }

  std::vector<std::vector<std::size_t>> v_sets(cfg.J);
  for (std::size_t i = 0; i < cfg.J; ++i) {
    const auto& vars = inst.equations[qp.eqs[i]].vars;
    qp.u_vars.insert(qp.u_vars.end(), vars.begin(), vars.end());
    if (qp.v_choice[i] < 0) {
      v_sets[i].assign(vars.begin(), vars.end());
    } else {
      v_sets[i] = {vars[static_cast<std::size_t>(qp.v_choice[i])]};
    }
    qp.v_vars.insert(qp.v_vars.end(), v_sets[i].begin(), v_sets[i].end());
  }
  const auto dedupe = [](std::vector<std::size_t>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  dedupe(qp.u_vars);
  dedupe(qp.v_vars);

  qp.advice_u.assign(cfg.r, 0);
  qp.advice_v.assign(cfg.r, 0);
  for (std::size_t i = 0; i < cfg.J; ++i)
    for (std::size_t j = 0; j < cfg.r; ++j) {
      const Word bits = rng.word(v_sets[i].size());
      for (std::size_t t = 0; t < v_sets[i].size(); ++t) {
        if (((bits >> t) & 1u) == 0) continue;
        const std::size_t x = v_sets[i][t];
        qp.advice_v[j] ^= Word{1} << position_of(qp.v_vars, x);
        qp.advice_u[j] ^= Word{1} << position_of(qp.u_vars, x);
      }
    }
  return qp;
}

ProverStrategy assignment_strategy(std::vector<int> assignment) {
  return [assignment = std::move(assignment)](const ProverView& view) {
    Word w = 0;
    for (std::size_t p = 0; p < view.vars.size(); ++p)
      if (assignment.at(view.vars[p])) w |= Word{1} << p;
    return w;
  };
}

ProverStrategy complement_strategy(std::vector<int> assignment) {
  return [assignment = std::move(assignment)](const ProverView& view) {
    Word w = 0;
    for (std::size_t p = 0; p < view.vars.size(); ++p)
      if (!assignment.at(view.vars[p])) w |= Word{1} << p;
    return w;
  };
}

BinomialCi play_game(const Gap3LinInstance& inst, const OuterConfig& cfg,
                     const ProverStrategy& first, const ProverStrategy& second,
                     std::uint64_t trials, std::uint64_t seed,
                     unsigned threads) {
  check_config(inst, cfg);
  if (trials == 0) throw domain_error("the game needs at least one trial");
  const auto win = [&](std::uint64_t t) {
    Rng rng(mix_seed(seed, t));
    const QuestionPair qp = sample_question(inst, cfg, rng);
    const Word a1 = first(ProverView{qp.u_vars, qp.advice_u});
    const Word a2 = second(ProverView{qp.v_vars, qp.advice_v});
    if (a1 == kGiveUpAnswer || a2 == kGiveUpAnswer) return false;
    for (std::size_t p = 0; p < qp.v_vars.size(); ++p) {
      const std::size_t pu = position_of(qp.u_vars, qp.v_vars[p]);
      if (((a2 >> p) & 1u) != ((a1 >> pu) & 1u)) return false;
    }
    for (std::size_t e : qp.eqs) {
      const auto& eq = inst.equations[e];
      int lhs = 0;
      for (std::size_t v : eq.vars)
        lhs ^= static_cast<int>((a1 >> position_of(qp.u_vars, v)) & 1u);
      if (lhs != eq.rhs) return false;
    }
    return true;
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
        if (win(t)) ++wins;
      partial[w] = wins;
    });
  for (auto& th : pool) th.join();
  const std::uint64_t wins =
      std::accumulate(partial.begin(), partial.end(), std::uint64_t{0});
  return clopper_pearson(wins, trials, 0.99);
}

StrategySearchReport search_strategies(const Gap3LinInstance& inst,
                                       const OuterConfig& cfg,
                                       std::size_t n_candidates,
                                       std::uint64_t trials,
                                       std::uint64_t seed) {
  if (n_candidates == 0)
    throw domain_error("the strategy search needs at least one candidate");
  StrategySearchReport report;
  report.n_candidates = n_candidates;
  for (std::size_t c = 0; c < n_candidates; ++c) {
    std::vector<int> sigma(inst.n_vars, 0);
    if (c > 0) {
      Rng rng(mix_seed(seed, "candidate:" + std::to_string(c)));
      for (auto& b : sigma) b = rng.coin() ? 1 : 0;
    }
    const ProverStrategy s = assignment_strategy(sigma);
    const BinomialCi ci = play_game(inst, cfg, s, s, trials,
                                    mix_seed(seed, "play:" + std::to_string(c)));
    if (c == 0 || ci.rate > report.best.rate) {
      report.best = ci;
      report.best_assignment = sigma;
    }
  }
  return report;
}

QuestionCoords make_question_coords(std::size_t J) {
  QuestionCoords coords;
  coords.J = J;
  for (std::size_t i = 0; i < J; ++i)
    coords.blocks.push_back({3 * i, 3 * i + 1, 3 * i + 2});
  check_coords(coords);
  return coords;
}

QuestionCoords question_coords(const Gap3LinInstance& inst,
                               const std::vector<std::size_t>& eqs) {
  if (eqs.empty()) throw domain_error("question needs at least one block");
  std::vector<std::size_t> all;
  for (std::size_t e : eqs) {
    if (e >= inst.equations.size())
      throw domain_error("equation index out of range");
    const auto& vars = inst.equations[e].vars;
    all.insert(all.end(), vars.begin(), vars.end());
  }
  std::vector<std::size_t> sorted = all;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw domain_error("question variables must be distinct across equations");
  QuestionCoords coords;
  coords.J = eqs.size();
  for (std::size_t i = 0; i < eqs.size(); ++i) {
    const auto& vars = inst.equations[eqs[i]].vars;
    std::array<std::size_t, 3> blk{};
    for (std::size_t t = 0; t < 3; ++t) blk[t] = position_of(sorted, vars[t]);
    coords.blocks.push_back(blk);
  }
  check_coords(coords);
  return coords;
}

nlohmann::json sd_report_to_json(const SdReport& r) {
  return {{"estimate", r.estimate}, {"ci_low", r.ci_low},
          {"ci_high", r.ci_high},   {"bound", r.bound},
          {"asserted", r.asserted}, {"exact", r.exact},
          {"cells", r.cells},       {"samples", r.samples},
          {"collisions", r.collisions}};
}

SdReport covering_sd_advice(const QuestionCoords& coords, std::size_t r1,
                            double beta, std::uint64_t samples,
                            std::uint64_t seed, std::uint64_t exact_cap,
                            std::uint64_t cell_cap) {
  check_coords(coords);
  check_beta(beta);
  const std::size_t n = coords.ambient();
  if (r1 > n) throw domain_error("advice dimension beyond the ambient");
  if (beta > 0.0 && r1 > coords.J)
    throw domain_error("advice dimension beyond the guaranteed question span");

  SdReport report;
  report.bound = beta * std::sqrt(static_cast<double>(coords.J)) *
                 std::pow(2.0, static_cast<double>(r1) + 4.0);
  const BigInt universe = f2::gaussian_binomial(n, r1);

  bool exact = (BigInt(1) << (2 * coords.J)) <= exact_cap;
  std::vector<VOutcome> outcomes;
  if (exact) {
    outcomes = v_outcomes(coords, Rational(beta));
    BigInt work = 0;
    for (const auto& o : outcomes)
      work += f2::gaussian_binomial(
          static_cast<std::size_t>(f2::popcount(o.vmask)), r1);
    exact = work <= exact_cap;
  }

  if (exact) {
    std::map<std::vector<Word>, Rational> mass;
    for (const auto& o : outcomes) {
      const auto positions = mask_positions(o.vmask);
      const Rational per =
          o.prob / Rational(f2::gaussian_binomial(positions.size(), r1));
      for (const auto& s : f2::enumerate_grassmann(positions.size(), r1))
        mass[lift_subspace(n, s, positions).basis()] += per;
    }
    const Rational unif = Rational(1) / Rational(universe);
    Rational sd = 0;
    for (const auto& [key, m] : mass) sd += abs(unif - m);
    sd += Rational(universe - BigInt(mass.size())) * unif;
    sd /= 2;
    report.estimate = to_double(sd);
    report.ci_low = report.ci_high = report.estimate;
    report.exact = true;
    report.cells = mass.size();
    finish_bounded(report, "covering-advice-bound", true);
    return report;
  }

  if (samples == 0)
    throw domain_error("Monte-Carlo mode needs at least one sample");
  CellCounter counter(universe > cell_cap, cell_cap);
  Rng rng_u(mix_seed(seed, "uniform"));
  Rng rng_s(mix_seed(seed, "smoothed"));
  for (std::uint64_t t = 0; t < samples; ++t) {
    counter.add(f2::sample_subspace(n, r1, rng_u), true);
    const Word vmask = sample_vmask(coords, beta, rng_s);
    const auto positions = mask_positions(vmask);
    const Subspace inner = f2::sample_subspace(positions.size(), r1, rng_s);
    counter.add(lift_subspace(n, inner, positions), false);
  }
  report.estimate = counter.empirical_tv(samples, samples);
  const double dev = mc_deviation(universe, samples);
  report.ci_low = std::max(0.0, report.estimate - dev);
  report.ci_high = std::min(1.0, report.estimate + dev);
  report.cells = counter.size();
  report.samples = samples;
  report.collisions = counter.collisions();
  finish_bounded(report, "covering-advice-bound", true);
  return report;
}

SdReport covering_sd_advice(const Gap3LinInstance& inst,
                            const std::vector<std::size_t>& eqs,
                            std::size_t r1, double beta,
                            std::uint64_t samples, std::uint64_t seed,
                            std::uint64_t exact_cap, std::uint64_t cell_cap) {
  return covering_sd_advice(question_coords(inst, eqs), r1, beta, samples,
                            seed, exact_cap, cell_cap);
}

namespace {

// Shared core for the zoom distance; the assertion is applied by callers so
// the fraction experiment can count failures instead of throwing.
SdReport zoom_sd_core(const QuestionCoords& coords, std::size_t ell2,
                      const Subspace& q, const Subspace& w, double beta,
                      std::uint64_t samples, std::uint64_t seed,
                      std::uint64_t exact_cap, std::uint64_t cell_cap) {
  check_coords(coords);
  check_beta(beta);
  const std::size_t n = coords.ambient();
  if (q.ambient_dim() != n || w.ambient_dim() != n)
    throw domain_error("zoom subspaces must live in the question ambient");
  if (!f2::contains(w, q))
    throw domain_error("the zoom-out must contain the zoom-in");
  const std::size_t r = q.dim();
  const std::size_t rprime = n - w.dim();
  if (ell2 < r || ell2 > w.dim())
    throw domain_error("zoom dimension outside [dim zoom-in, dim zoom-out]");

  SdReport report;
  report.bound =
      std::sqrt(beta) * std::pow(static_cast<double>(coords.J), 0.25) *
      std::pow(2.0, static_cast<double>(ell2) + 5.0) *
      std::pow(2.0, static_cast<double>(rprime) *
                        static_cast<double>(ell2 - r) + 5.0);
  const BigInt universe = f2::gaussian_binomial(w.dim() - r, ell2 - r);

  bool exact = (BigInt(1) << (2 * coords.J)) <= exact_cap;
  std::vector<VOutcome> outcomes;
  std::vector<Subspace> walls;  // w cut down to each V
  if (exact) {
    outcomes = v_outcomes(coords, Rational(beta));
    BigInt work = 0;
    for (const auto& o : outcomes) {
      const auto positions = mask_positions(o.vmask);
      std::vector<Word> unit_rows;
      for (std::size_t p : positions) unit_rows.push_back(Word{1} << p);
      const Subspace fv(n, unit_rows);
      walls.push_back(f2::intersect(w, fv));
      if (f2::contains(fv, q) && walls.back().dim() >= ell2)
        work += f2::gaussian_binomial(walls.back().dim() - r, ell2 - r);
    }
    exact = work <= exact_cap;
  }

  if (exact) {
    // V outcomes admitting no valid lift (q outside F2^V, or no ell2-space
    // above q inside F2^V) carry zero conditional mass.
    std::map<std::vector<Word>, Rational> mass;
    Rational z = 0;
    for (std::size_t o = 0; o < outcomes.size(); ++o) {
      const auto positions = mask_positions(outcomes[o].vmask);
      std::vector<Word> unit_rows;
      for (std::size_t p : positions) unit_rows.push_back(Word{1} << p);
      const Subspace fv(n, unit_rows);
      if (!f2::contains(fv, q) || fv.dim() < ell2) continue;
      const BigInt inside = f2::gaussian_binomial(fv.dim() - r, ell2 - r);
      const Rational per = outcomes[o].prob / Rational(inside);
      for (const auto& L : f2::enumerate_zoom(q, walls[o], ell2)) {
        mass[L.basis()] += per;
        z += per;
      }
    }
    if (z == 0)
      throw domain_error("smoothing leaves the conditioned zoom law empty");
    const Rational unif = Rational(1) / Rational(universe);
    Rational sd = 0;
    for (const auto& [key, m] : mass) sd += abs(unif - m / z);
    sd += Rational(universe - BigInt(mass.size())) * unif;
    sd /= 2;
    report.estimate = to_double(sd);
    report.ci_low = report.ci_high = report.estimate;
    report.exact = true;
    report.cells = mass.size();
    return report;
  }

  if (samples == 0)
    throw domain_error("Monte-Carlo mode needs at least one sample");
  CellCounter counter(universe > cell_cap, cell_cap);
  Rng rng_u(mix_seed(seed, "uniform"));
  Rng rng_s(mix_seed(seed, "smoothed"));
  for (std::uint64_t t = 0; t < samples; ++t) {
    counter.add(f2::sample_in_zoom(q, w, ell2, rng_u), true);
    std::uint64_t retries = 0;
    for (;;) {
      if (++retries > 100000)
        throw resource_error(
            "smoothed zoom rejection sampling beyond the retry cap");
      const Word vmask = sample_vmask(coords, beta, rng_s);
      const auto positions = mask_positions(vmask);
      std::vector<Word> unit_rows;
      for (std::size_t p : positions) unit_rows.push_back(Word{1} << p);
      const Subspace fv(n, unit_rows);
      if (!f2::contains(fv, q) || fv.dim() < ell2) continue;
      const Subspace L = f2::sample_in_zoom(q, fv, ell2, rng_s);
      if (!f2::contains(w, L)) continue;
      counter.add(L, false);
      break;
    }
  }
  report.estimate = counter.empirical_tv(samples, samples);
  const double dev = mc_deviation(universe, samples);
  report.ci_low = std::max(0.0, report.estimate - dev);
  report.ci_high = std::min(1.0, report.estimate + dev);
  report.cells = counter.size();
  report.samples = samples;
  report.collisions = counter.collisions();
  return report;
}

}  // namespace

SdReport covering_sd_zoom(const QuestionCoords& coords, std::size_t ell2,
                          const Subspace& q, const Subspace& w, double beta,
                          std::uint64_t samples, std::uint64_t seed,
                          std::uint64_t exact_cap, std::uint64_t cell_cap) {
  SdReport report =
      zoom_sd_core(coords, ell2, q, w, beta, samples, seed, exact_cap, cell_cap);
  finish_bounded(report, "covering-zoom-bound", report.bound < 1.0);
  return report;
}

nlohmann::json zoom_fraction_report_to_json(const ZoomFractionReport& r) {
  return {{"fraction", r.fraction},
          {"ci_low", r.ci_low},
          {"threshold", r.threshold},
          {"per_pair_bound", r.per_pair_bound},
          {"vacuous", r.vacuous},
          {"asserted", r.asserted},
          {"exhaustive", r.exhaustive},
          {"n_zoomins", r.n_zoomins},
          {"n_pairs", r.n_pairs},
          {"max_sd", r.max_sd}};
}

ZoomFractionReport covering_zoom_fraction(const QuestionCoords& coords,
                                          std::size_t ell2, std::size_t r,
                                          std::size_t rprime, double beta,
                                          std::uint64_t zoomin_samples,
                                          std::uint64_t sd_samples,
                                          std::uint64_t seed,
                                          std::uint64_t exact_cap,
                                          std::uint64_t cell_cap) {
  check_coords(coords);
  check_beta(beta);
  const std::size_t n = coords.ambient();
  if (r > n || rprime > n || ell2 < r || ell2 + rprime > n)
    throw domain_error("zoom dimensions do not fit the ambient");

  ZoomFractionReport report;
  report.threshold = 1.0 - std::sqrt(beta) *
                               std::pow(static_cast<double>(coords.J), 0.25);
  report.per_pair_bound =
      std::sqrt(beta) * std::pow(static_cast<double>(coords.J), 0.25) *
      std::pow(2.0, static_cast<double>(ell2) + 5.0) *
      std::pow(2.0, static_cast<double>(rprime) *
                        static_cast<double>(ell2 - r) + 5.0);
  report.vacuous = report.per_pair_bound >= 1.0;

  std::vector<Subspace> zoomins;
  if (zoomin_samples == 0) {
    if (f2::gaussian_binomial(n, r) > exact_cap)
      throw resource_error("zoom-in enumeration beyond the cap");
    zoomins = f2::enumerate_grassmann(n, r);
    report.exhaustive = true;
  } else {
    Rng rng(mix_seed(seed, "zoomin"));
    for (std::uint64_t t = 0; t < zoomin_samples; ++t)
      zoomins.push_back(f2::sample_subspace(n, r, rng));
  }

  std::size_t passes = 0;
  std::size_t pair_index = 0;
  for (const auto& q : zoomins) {
    bool all_ok = true;
    for (const auto& w : f2::enumerate_codim_superspaces(q, rprime)) {
      const SdReport sd =
          zoom_sd_core(coords, ell2, q, w, beta, sd_samples,
                       mix_seed(seed, pair_index++), exact_cap, cell_cap);
      report.max_sd = std::max(report.max_sd, sd.estimate);
      ++report.n_pairs;
      if (sd.ci_low > report.per_pair_bound) all_ok = false;
    }
    if (all_ok) ++passes;
  }
  report.n_zoomins = zoomins.size();
  report.fraction =
      static_cast<double>(passes) / static_cast<double>(zoomins.size());
  double ci_high = report.fraction;
  if (report.exhaustive) {
    report.ci_low = report.fraction;
  } else {
    const BinomialCi ci = clopper_pearson(passes, zoomins.size(), 0.99);
    report.ci_low = ci.lo;
    ci_high = ci.hi;
  }
  report.asserted = true;
  if (ci_high < report.threshold)
    throw assertion_error("covering-zoom-fraction",
                          "passing fraction " + std::to_string(report.fraction) +
                              " falls below the threshold " +
                              std::to_string(report.threshold));
  return report;
}

SdReport retain_codim_experiment(const QuestionCoords& coords,
                                 const Subspace& w, double beta,
                                 std::uint64_t samples, std::uint64_t seed,
                                 std::uint64_t exact_cap) {
  check_coords(coords);
  check_beta(beta);
  const std::size_t n = coords.ambient();
  if (w.ambient_dim() != n)
    throw domain_error("the subspace must live in the question ambient");
  const std::size_t s = n - w.dim();

  SdReport report;
  report.bound = std::pow(2.0, static_cast<double>(s) + 3.0) * beta * beta *
                 static_cast<double>(coords.J);

  const auto fails = [&](Word vmask) {
    const auto positions = mask_positions(vmask);
    std::vector<Word> unit_rows;
    for (std::size_t p : positions) unit_rows.push_back(Word{1} << p);
    const Subspace fv(n, unit_rows);
    const auto cut = f2::intersect(w, fv);
    return static_cast<long long>(cut.dim()) !=
           static_cast<long long>(positions.size()) -
               static_cast<long long>(s);
  };

  if ((BigInt(1) << (2 * coords.J)) <= exact_cap) {
    Rational rate = 0;
    for (const auto& o : v_outcomes(coords, Rational(beta)))
      if (fails(o.vmask)) rate += o.prob;
    report.estimate = to_double(rate);
    report.ci_low = report.ci_high = report.estimate;
    report.exact = true;
    finish_bounded(report, "retain-codim-bound", true);
    return report;
  }

  if (samples == 0)
    throw domain_error("Monte-Carlo mode needs at least one sample");
  Rng rng(mix_seed(seed, "retain"));
  std::uint64_t bad = 0;
  for (std::uint64_t t = 0; t < samples; ++t)
    if (fails(sample_vmask(coords, beta, rng))) ++bad;
  const BinomialCi ci = clopper_pearson(bad, samples, 0.99);
  report.estimate = ci.rate;
  report.ci_low = ci.lo;
  report.ci_high = ci.hi;
  report.samples = samples;
  finish_bounded(report, "retain-codim-bound", true);
  return report;
}

}  // namespace pcpkit::outerpcp
