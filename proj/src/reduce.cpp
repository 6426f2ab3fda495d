#include "pcpkit/reduce.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "pcpkit/errors.hpp"
#include "pcpkit/rng.hpp"

namespace pcpkit::reduce {

namespace {

std::vector<double> biadjacency(const BipartiteGraph& g) {
  std::vector<double> b(g.n_left * g.n_right, 0.0);
  for (const auto& [l, r] : g.adjacency) b[l * g.n_right + r] += 1.0;
  return b;
}

}  // namespace

SpectralReport measure_spectrum(const BipartiteGraph& g) {
  SpectralReport rep;
  rep.top_singular = static_cast<double>(g.degree);
  const auto b = biadjacency(g);
  const std::size_t nl = g.n_left;
  const std::size_t nr = g.n_right;
  std::vector<double> x(nr);
  Rng start(0x5eed0002ULL);
  for (auto& xi : x) xi = start.real() - 0.5;
  const auto project = [&](std::vector<double>& v) {
    double mean = 0;
    for (double vi : v) mean += vi;
    mean /= static_cast<double>(v.size());
    for (auto& vi : v) vi -= mean;
  };
  const auto norm = [](const std::vector<double>& v) {
    double s = 0;
    for (double vi : v) s += vi * vi;
    return std::sqrt(s);
  };
  project(x);
  const double n0 = norm(x);
  if (n0 < 1e-12) return rep;
  for (auto& xi : x) xi /= n0;
  std::vector<double> y(nl), z(nr);
  for (std::size_t iter = 1; iter <= 50000; ++iter) {
    for (std::size_t l = 0; l < nl; ++l) {
      double s = 0;
      for (std::size_t r = 0; r < nr; ++r) s += b[l * nr + r] * x[r];
      y[l] = s;
    }
    for (std::size_t r = 0; r < nr; ++r) {
      double s = 0;
      for (std::size_t l = 0; l < nl; ++l) s += b[l * nr + r] * y[l];
      z[r] = s;
    }
    project(z);
    double theta = 0;
    for (std::size_t r = 0; r < nr; ++r) theta += x[r] * z[r];
    double res = 0;
    for (std::size_t r = 0; r < nr; ++r) {
      const double d = z[r] - theta * x[r];
      res += d * d;
    }
    res = std::sqrt(res);
    rep.iterations = iter;
    rep.residual = res;
    rep.second_singular = std::sqrt(std::max(theta, 0.0));
    const double zn = norm(z);
    if (zn < 1e-30) {
      rep.second_singular = 0;
      rep.residual = 0;
      return rep;
    }
    for (std::size_t r = 0; r < nr; ++r) x[r] = z[r] / zn;
    if (res < 1e-8) return rep;
  }
  return rep;
}

std::pair<BipartiteGraph, SpectralReport> build_bipartite_expander(
    std::size_t n, std::size_t d, std::uint64_t seed,
    std::size_t candidates) {
  if (d == 0 || d > n)
    throw domain_error("expander degree must lie in [1, n]");
  if (d == n) {
    BipartiteGraph g;
    g.n_left = g.n_right = n;
    g.degree = d;
    for (std::size_t l = 0; l < n; ++l)
      for (std::size_t r = 0; r < n; ++r) g.adjacency.push_back({l, r});
    SpectralReport rep;
    rep.top_singular = static_cast<double>(d);
    return {std::move(g), rep};
  }
  if (candidates == 0) throw domain_error("need at least one candidate");
  BipartiteGraph best;
  SpectralReport best_rep;
  for (std::size_t c = 0; c < candidates; ++c) {
    Rng rng(mix_seed(seed, "candidate:" + std::to_string(c)));
    BipartiteGraph g;
    g.n_left = g.n_right = n;
    g.degree = d;
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (std::size_t m = 0; m < d; ++m) {
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      for (std::size_t i = n - 1; i > 0; --i)
        std::swap(perm[i], perm[rng.below(i + 1)]);
      for (std::size_t l = 0; l < n; ++l) {
        if (!seen.insert({l, perm[l]}).second) g.multi = true;
        g.adjacency.push_back({l, perm[l]});
      }
    }
    auto rep = measure_spectrum(g);
    rep.candidates = candidates;
    if (c == 0 || rep.second_singular < best_rep.second_singular) {
      best = std::move(g);
      best_rep = rep;
    }
  }
  return {std::move(best), best_rep};
}

csp::CspInstance k_partitize(const csp::CspInstance& inst,
                             std::uint64_t edge_cap) {
  const std::size_t k = inst.k;
  BigInt fanout = 1;
  for (std::size_t i = 2; i <= k; ++i) fanout *= i;
  if (fanout * inst.edges.size() > edge_cap)
    throw resource_error("k-partitization output beyond the edge cap");
  std::vector<csp::CspVertex> vertices;
  std::vector<std::vector<std::size_t>> parts(k);
  for (const auto& v : inst.vertices)
    for (std::size_t copy = 0; copy < k; ++copy) {
      parts[copy].push_back(vertices.size());
      vertices.push_back({v.name + "@" + std::to_string(copy), v.alphabet});
    }
  std::vector<csp::CspEdge> edges;
  std::vector<std::size_t> perm(k);
  for (const auto& e : inst.edges) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    do {
      csp::CspEdge out;
      for (std::size_t j = 0; j < k; ++j)
        out.verts.push_back(e.verts[j] * k + perm[j]);
      out.weight = e.weight;
      out.sat = e.sat;
      edges.push_back(std::move(out));
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  return csp::CspInstance(k, std::move(vertices), std::move(parts),
                          std::move(edges));
}

csp::CspInstance duplicate_constraints(const csp::CspInstance& inst,
                                       std::size_t d) {
  if (d == 0) throw domain_error("duplication count must be positive");
  std::vector<csp::CspEdge> edges;
  for (const auto& e : inst.edges)
    for (std::size_t c = 0; c < d; ++c) edges.push_back(e);
  return csp::CspInstance(inst.k, inst.vertices, inst.parts,
                          std::move(edges));
}

nlohmann::json report_to_json(const ReductionReport& rep) {
  nlohmann::json j{{"input_digest", rep.input_digest},
                   {"output_digest", rep.output_digest},
                   {"input_vertices", rep.input_vertices},
                   {"output_vertices", rep.output_vertices},
                   {"input_edges", rep.input_edges},
                   {"output_edges", rep.output_edges},
                   {"d", rep.d},
                   {"part", rep.part},
                   {"lambda_max", rep.lambda_max},
                   {"error_term", rep.error_term},
                   {"values_computed", rep.values_computed}};
  if (rep.values_computed) {
    j["value_in"] = rational_to_json(rep.value_in);
    j["value_out"] = rational_to_json(rep.value_out);
    j["soundness_holds"] = rep.soundness_holds;
  }
  return j;
}

std::pair<csp::CspInstance, ReductionReport> partwise_regularize(
    const csp::CspInstance& inst, std::size_t d, std::size_t part,
    std::uint64_t seed, std::uint64_t value_audit_cap) {
  if (!inst.has_parts())
    throw domain_error("partwise regularization needs a k-partite instance");
  if (part >= inst.k) throw domain_error("part index out of range");
  if (d == 0) throw domain_error("degree parameter must be positive");
  if (inst.edges.empty())
    throw domain_error("partwise regularization needs edges");
  for (const auto& e : inst.edges)
    if (e.weight != inst.edges[0].weight)
      throw domain_error("partwise regularization needs uniform edge weights");
  std::vector<std::size_t> part_of(inst.vertices.size(), 0);
  for (std::size_t p = 0; p < inst.parts.size(); ++p)
    for (std::size_t v : inst.parts[p]) part_of[v] = p;
  std::vector<std::vector<std::size_t>> incident(inst.vertices.size());
  std::vector<std::size_t> anchor(inst.edges.size(), 0);
  std::vector<std::size_t> slot(inst.edges.size(), 0);
  for (std::size_t ei = 0; ei < inst.edges.size(); ++ei)
    for (std::size_t v : inst.edges[ei].verts) {
      if (part_of[v] == part) {
        anchor[ei] = v;
        slot[ei] = incident[v].size();
      }
      incident[v].push_back(ei);
    }
  for (std::size_t v : inst.parts[part])
    if (incident[v].size() < d)
      throw domain_error("vertex " + inst.vertices[v].name +
                         " has degree below d");

  std::vector<csp::CspVertex> vertices;
  std::vector<std::size_t> old_to_new(inst.vertices.size(), 0);
  std::vector<std::size_t> cloud_base(inst.vertices.size(), 0);
  for (std::size_t v = 0; v < inst.vertices.size(); ++v) {
    if (part_of[v] == part) {
      cloud_base[v] = vertices.size();
      for (std::size_t u = 0; u < incident[v].size(); ++u)
        vertices.push_back({inst.vertices[v].name + "@" + std::to_string(u),
                            inst.vertices[v].alphabet});
    } else {
      old_to_new[v] = vertices.size();
      vertices.push_back(inst.vertices[v]);
    }
  }
  std::vector<std::vector<std::size_t>> parts(inst.k);
  for (std::size_t p = 0; p < inst.k; ++p)
    for (std::size_t v : inst.parts[p]) {
      if (p == part)
        for (std::size_t u = 0; u < incident[v].size(); ++u)
          parts[p].push_back(cloud_base[v] + u);
      else
        parts[p].push_back(old_to_new[v]);
    }

  double lambda_max = 0;
  std::vector<std::vector<std::vector<std::size_t>>> wiring(
      inst.vertices.size());
  for (std::size_t v : inst.parts[part]) {
    const auto [g, spectral] = build_bipartite_expander(
        incident[v].size(), d,
        mix_seed(seed, "expander:" + inst.vertices[v].name));
    lambda_max = std::max(lambda_max, spectral.second_singular);
    wiring[v].resize(g.n_left);
    for (const auto& [l, r] : g.adjacency) wiring[v][l].push_back(r);
  }

  std::vector<csp::CspEdge> edges;
  for (std::size_t ei = 0; ei < inst.edges.size(); ++ei) {
    const auto& e = inst.edges[ei];
    const std::size_t v = anchor[ei];
    for (std::size_t u : wiring[v][slot[ei]]) {
      csp::CspEdge out;
      for (std::size_t w : e.verts)
        out.verts.push_back(w == v ? cloud_base[v] + u : old_to_new[w]);
      out.weight = e.weight;
      out.sat = e.sat;
      edges.push_back(std::move(out));
    }
  }
  csp::CspInstance result(inst.k, std::move(vertices), std::move(parts),
                          std::move(edges));

  ReductionReport rep;
  rep.input_digest = csp::csp_digest(inst);
  rep.output_digest = csp::csp_digest(result);
  rep.input_vertices = inst.vertices.size();
  rep.output_vertices = result.vertices.size();
  rep.input_edges = inst.edges.size();
  rep.output_edges = result.edges.size();
  rep.d = d;
  rep.part = part;
  rep.lambda_max = lambda_max;
  std::size_t alphabet_bound = 1;
  for (const auto& v : inst.vertices)
    alphabet_bound = std::max(alphabet_bound, v.alphabet);
  rep.error_term = lambda_max *
                   std::sqrt(std::pow(static_cast<double>(alphabet_bound),
                                      static_cast<double>(inst.k - 1))) /
                   static_cast<double>(d);
  BigInt space_in = 1;
  for (const auto& v : inst.vertices) space_in *= v.alphabet;
  BigInt space_out = 1;
  for (const auto& v : result.vertices) space_out *= v.alphabet;
  if (space_in <= value_audit_cap && space_out <= value_audit_cap) {
    rep.value_in = csp::csp_value_exact(inst, value_audit_cap).value;
    rep.value_out = csp::csp_value_exact(result, value_audit_cap).value;
    rep.values_computed = true;
    if (rep.value_out < rep.value_in)
      throw assertion_error("cloud-blowup-completeness",
                            "regularized value dropped below the input value");
    /* The 1e-7 slack absorbs the power-iteration residual in lambda_max. */
    if (to_double(rep.value_in) + rep.error_term + 1e-7 <
        to_double(rep.value_out))
      throw assertion_error(
          "measured-lambda-soundness",
          "val(in) >= val(out) - lambda*sqrt(R^(k-1))/d failed");
    rep.soundness_holds = true;
  }
  return {std::move(result), std::move(rep)};
}

csp::CspInstance fully_regularize(const csp::CspInstance& inst,
                                  const std::vector<std::size_t>& c,
                                  std::uint64_t edge_cap) {
  if (!inst.has_parts())
    throw domain_error("full regularization needs a k-partite instance");
  const auto structure = csp::structural_report(inst);
  if (!structure.is_partwise_regular)
    throw domain_error("full regularization needs a partwise-regular instance");
  if (c.size() != inst.k)
    throw domain_error("one cloud multiplier per part is required");
  for (std::size_t ci : c)
    if (ci == 0) throw domain_error("cloud multipliers must be positive");
  std::vector<std::size_t> degree(inst.vertices.size(), 0);
  for (const auto& e : inst.edges)
    for (std::size_t v : e.verts) ++degree[v];
  std::vector<std::size_t> dpart(inst.k, 0);
  std::vector<std::size_t> part_of(inst.vertices.size(), 0);
  for (std::size_t p = 0; p < inst.k; ++p) {
    if (inst.parts[p].empty()) throw domain_error("empty part");
    dpart[p] = degree[inst.parts[p][0]];
    if (dpart[p] == 0) throw domain_error("part with degree zero");
    for (std::size_t v : inst.parts[p]) part_of[v] = p;
  }
  BigInt fanout = 1;
  for (std::size_t p = 0; p < inst.k; ++p) fanout *= dpart[p] * c[p];
  if (fanout * inst.edges.size() > edge_cap)
    throw resource_error("full regularization output beyond the edge cap");

  std::vector<csp::CspVertex> vertices;
  std::vector<std::size_t> cloud_base(inst.vertices.size(), 0);
  std::vector<std::vector<std::size_t>> parts(inst.k);
  for (std::size_t v = 0; v < inst.vertices.size(); ++v) {
    const std::size_t p = part_of[v];
    cloud_base[v] = vertices.size();
    for (std::size_t a = 0; a < dpart[p]; ++a)
      for (std::size_t b = 0; b < c[p]; ++b) {
        parts[p].push_back(vertices.size());
        vertices.push_back({inst.vertices[v].name + "@" + std::to_string(a) +
                                "." + std::to_string(b),
                            inst.vertices[v].alphabet});
      }
  }
  std::vector<csp::CspEdge> edges;
  for (const auto& e : inst.edges) {
    std::vector<std::size_t> radix(inst.k);
    for (std::size_t j = 0; j < inst.k; ++j) {
      const std::size_t p = part_of[e.verts[j]];
      radix[j] = dpart[p] * c[p];
    }
    std::vector<std::size_t> copy(inst.k, 0);
    while (true) {
      csp::CspEdge out;
      for (std::size_t j = 0; j < inst.k; ++j)
        out.verts.push_back(cloud_base[e.verts[j]] + copy[j]);
      out.weight = e.weight;
      out.sat = e.sat;
      edges.push_back(std::move(out));
      std::size_t j = 0;
      for (; j < inst.k; ++j) {
        if (++copy[j] < radix[j]) break;
        copy[j] = 0;
      }
      if (j == inst.k) break;
    }
  }
  return csp::CspInstance(inst.k, std::move(vertices), std::move(parts),
                          std::move(edges));
}

}  // namespace pcpkit::reduce
