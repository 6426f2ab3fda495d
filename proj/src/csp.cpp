#include "pcpkit/csp.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <map>
#include <utility>

#include "pcpkit/errors.hpp"
#include "pcpkit/rng.hpp"

namespace pcpkit::csp {

namespace {

std::map<std::string, std::size_t> name_index(
    const std::vector<CspVertex>& vertices) {
  std::map<std::string, std::size_t> id;
  for (std::size_t i = 0; i < vertices.size(); ++i) id[vertices[i].name] = i;
  return id;
}

}  // namespace

CspInstance::CspInstance(std::size_t k_, std::vector<CspVertex> vertices_,
                         std::vector<std::vector<std::size_t>> parts_,
                         std::vector<CspEdge> edges_)
    : k(k_),
      vertices(std::move(vertices_)),
      parts(std::move(parts_)),
      edges(std::move(edges_)) {
  if (k == 0) throw domain_error("csp arity must be positive");
  std::map<std::string, std::size_t> seen_names;
  for (const auto& v : vertices) {
    if (v.alphabet == 0)
      throw domain_error("vertex " + v.name + " has an empty alphabet");
    if (!seen_names.emplace(v.name, 0).second)
      throw domain_error("duplicate vertex name: " + v.name);
  }
  std::vector<std::size_t> part_of(vertices.size(), 0);
  if (!parts.empty()) {
    if (parts.size() != k)
      throw domain_error("partition must have exactly k parts");
    std::vector<char> covered(vertices.size(), 0);
    for (std::size_t p = 0; p < parts.size(); ++p)
      for (std::size_t v : parts[p]) {
        if (v >= vertices.size())
          throw domain_error("partition references a missing vertex");
        if (covered[v])
          throw domain_error("vertex appears in two parts: " +
                             vertices[v].name);
        covered[v] = 1;
        part_of[v] = p;
      }
    for (std::size_t v = 0; v < vertices.size(); ++v)
      if (!covered[v])
        throw domain_error("vertex missing from the partition: " +
                           vertices[v].name);
  }
  for (auto& e : edges) {
    if (e.verts.size() != k)
      throw domain_error("edge arity differs from the instance arity");
    std::vector<std::size_t> sorted_verts = e.verts;
    std::sort(sorted_verts.begin(), sorted_verts.end());
    if (std::adjacent_find(sorted_verts.begin(), sorted_verts.end()) !=
        sorted_verts.end())
      throw domain_error("edge repeats a vertex");
    for (std::size_t v : e.verts)
      if (v >= vertices.size())
        throw domain_error("edge references a missing vertex");
    if (e.weight < 0) throw domain_error("negative edge weight");
    std::sort(e.sat.begin(), e.sat.end());
    e.sat.erase(std::unique(e.sat.begin(), e.sat.end()), e.sat.end());
    for (const auto& t : e.sat) {
      if (t.size() != k)
        throw domain_error("sat tuple arity differs from the instance arity");
      for (std::size_t i = 0; i < k; ++i)
        if (t[i] >= vertices[e.verts[i]].alphabet)
          throw domain_error("sat label out of alphabet bounds");
    }
    if (!parts.empty()) {
      std::vector<std::size_t> hits(k, 0);
      for (std::size_t v : e.verts) ++hits[part_of[v]];
      for (std::size_t p = 0; p < k; ++p)
        if (hits[p] != 1)
          throw domain_error("edge must touch each part exactly once");
    }
  }
  if (!edges.empty() && total_weight() <= 0)
    throw domain_error("edge weights must sum to a positive total");
}

Rational CspInstance::total_weight() const {
  Rational total = 0;
  for (const auto& e : edges) total += e.weight;
  return total;
}

nlohmann::json csp_to_json(const CspInstance& inst) {
  nlohmann::json j;
  j["k"] = inst.k;
  auto verts = nlohmann::json::array();
  for (const auto& v : inst.vertices)
    verts.push_back({{"name", v.name}, {"alphabet", v.alphabet}});
  j["vertices"] = verts;
  if (inst.has_parts()) {
    auto parts = nlohmann::json::array();
    for (const auto& p : inst.parts) {
      auto names = nlohmann::json::array();
      for (std::size_t v : p) names.push_back(inst.vertices[v].name);
      parts.push_back(names);
    }
    j["parts"] = parts;
  }
  auto edges = nlohmann::json::array();
  for (const auto& e : inst.edges) {
    auto names = nlohmann::json::array();
    for (std::size_t v : e.verts) names.push_back(inst.vertices[v].name);
    edges.push_back({{"verts", names},
                     {"weight", rational_to_json(e.weight)},
                     {"sat", e.sat}});
  }
  j["edges"] = edges;
  return j;
}

CspInstance csp_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("k") || !j.contains("vertices") ||
      !j.contains("edges"))
    throw domain_error("csp JSON must carry k, vertices and edges");
  const auto k = j.at("k").get<std::size_t>();
  std::vector<CspVertex> vertices;
  for (const auto& v : j.at("vertices"))
    vertices.push_back({v.at("name").get<std::string>(),
                        v.at("alphabet").get<std::size_t>()});
  const auto id = name_index(vertices);
  auto lookup = [&](const std::string& name) {
    const auto it = id.find(name);
    if (it == id.end())
      throw domain_error("csp JSON references a missing vertex: " + name);
    return it->second;
  };
  std::vector<std::vector<std::size_t>> parts;
  if (j.contains("parts"))
    for (const auto& p : j.at("parts")) {
      std::vector<std::size_t> ids;
      for (const auto& name : p) ids.push_back(lookup(name.get<std::string>()));
      parts.push_back(std::move(ids));
    }
  std::vector<CspEdge> edges;
  for (const auto& e : j.at("edges")) {
    CspEdge edge;
    for (const auto& name : e.at("verts"))
      edge.verts.push_back(lookup(name.get<std::string>()));
    edge.weight = rational_from_json(e.at("weight"));
    edge.sat = e.at("sat").get<std::vector<std::vector<std::size_t>>>();
    edges.push_back(std::move(edge));
  }
  return CspInstance(k, std::move(vertices), std::move(parts),
                     std::move(edges));
}

std::string csp_digest(const CspInstance& inst) {
  const std::uint64_t h = fnv1a64(csp_to_json(inst).dump());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

void validate_assignment(const CspInstance& inst, const Assignment& a) {
  if (a.labels.size() != inst.vertices.size())
    throw domain_error("assignment must label every vertex");
  for (std::size_t v = 0; v < a.labels.size(); ++v)
    if (a.labels[v] >= inst.vertices[v].alphabet)
      throw domain_error("assignment label out of alphabet bounds");
}

Rational assignment_value(const CspInstance& inst, const Assignment& a) {
  validate_assignment(inst, a);
  if (inst.edges.empty())
    throw domain_error("csp value undefined without edges");
  Rational sat = 0;
  std::vector<std::size_t> tuple(inst.k);
  for (const auto& e : inst.edges) {
    for (std::size_t i = 0; i < inst.k; ++i) tuple[i] = a.labels[e.verts[i]];
    if (std::binary_search(e.sat.begin(), e.sat.end(), tuple))
      sat += e.weight;
  }
  return sat / inst.total_weight();
}

nlohmann::json assignment_to_json(const CspInstance& inst,
                                  const Assignment& a) {
  validate_assignment(inst, a);
  nlohmann::json labels;
  for (std::size_t v = 0; v < a.labels.size(); ++v)
    labels[inst.vertices[v].name] = a.labels[v];
  return nlohmann::json{{"labels", labels}};
}

Assignment assignment_from_json(const CspInstance& inst,
                                const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("labels"))
    throw domain_error("assignment JSON must carry labels");
  Assignment a;
  a.labels.resize(inst.vertices.size());
  const auto& labels = j.at("labels");
  for (std::size_t v = 0; v < inst.vertices.size(); ++v) {
    const auto& name = inst.vertices[v].name;
    if (!labels.contains(name))
      throw domain_error("assignment JSON misses vertex " + name);
    a.labels[v] = labels.at(name).get<std::size_t>();
  }
  validate_assignment(inst, a);
  return a;
}

namespace {

constexpr std::uint64_t kEdgeTableCap = 100000000;

struct DenseEdge {
  std::vector<char> sat;
  std::size_t idx = 0;
  std::uint64_t w = 0;
};

/* Incremental assignment evaluator.  Weights are rescaled to a common
 * integer grid so the running satisfied weight is an exact 64-bit sum;
 * relabeling one vertex only touches its incident edges. */
struct Machine {
  std::vector<DenseEdge> tables;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> incident;
  std::vector<std::size_t> labels;
  std::uint64_t sat_sum = 0;
  std::uint64_t total = 0;

  explicit Machine(const CspInstance& inst) {
    if (inst.edges.empty())
      throw domain_error("csp value undefined without edges");
    BigInt common_den = 1;
    for (const auto& e : inst.edges)
      common_den = boost::multiprecision::lcm(
          common_den, boost::multiprecision::denominator(e.weight));
    std::vector<BigInt> scaled;
    BigInt scaled_total = 0;
    for (const auto& e : inst.edges) {
      scaled.push_back(
          boost::multiprecision::numerator(e.weight) *
          (common_den / boost::multiprecision::denominator(e.weight)));
      scaled_total += scaled.back();
    }
    if (scaled_total > (BigInt(1) << 62))
      throw resource_error("scaled edge weights beyond the 62-bit accumulator");
    total = scaled_total.convert_to<std::uint64_t>();
    labels.assign(inst.vertices.size(), 0);
    incident.resize(inst.vertices.size());
    tables.resize(inst.edges.size());
    for (std::size_t ei = 0; ei < inst.edges.size(); ++ei) {
      const auto& e = inst.edges[ei];
      auto& t = tables[ei];
      std::uint64_t size = 1;
      std::vector<std::size_t> stride(e.verts.size());
      for (std::size_t i = 0; i < e.verts.size(); ++i) {
        stride[i] = size;
        const std::uint64_t a = inst.vertices[e.verts[i]].alphabet;
        if (size > kEdgeTableCap / a)
          throw resource_error("edge label-tuple table beyond the cap");
        size *= a;
        incident[e.verts[i]].push_back({ei, stride[i]});
      }
      t.sat.assign(size, 0);
      for (const auto& tuple : e.sat) {
        std::size_t idx = 0;
        for (std::size_t i = 0; i < tuple.size(); ++i)
          idx += tuple[i] * stride[i];
        t.sat[idx] = 1;
      }
      t.w = scaled[ei].convert_to<std::uint64_t>();
      if (t.sat[0]) sat_sum += t.w;
    }
  }

  void set_label(std::size_t v, std::size_t next) {
    const std::size_t old = labels[v];
    if (old == next) return;
    for (const auto& [e, s] : incident[v]) {
      auto& t = tables[e];
      if (t.sat[t.idx]) sat_sum -= t.w;
      t.idx += s * next - s * old;
      if (t.sat[t.idx]) sat_sum += t.w;
    }
    labels[v] = next;
  }
};

}  // namespace

ExactValue csp_value_exact(const CspInstance& inst,
                           std::uint64_t assignment_cap) {
  BigInt space = 1;
  for (const auto& v : inst.vertices) space *= v.alphabet;
  if (space > assignment_cap)
    throw resource_error("assignment space beyond the cap");
  Machine m(inst);
  std::uint64_t best = m.sat_sum;
  std::vector<std::size_t> best_labels = m.labels;
  const std::uint64_t steps = space.convert_to<std::uint64_t>();
  for (std::uint64_t step = 1; step < steps; ++step) {
    for (std::size_t v = 0;; ++v) {
      const std::size_t old = m.labels[v];
      const std::size_t next =
          old + 1 == inst.vertices[v].alphabet ? 0 : old + 1;
      m.set_label(v, next);
      if (next != 0) break;
    }
    if (m.sat_sum > best) {
      best = m.sat_sum;
      best_labels = m.labels;
    }
  }
  return {Rational(BigInt(best), BigInt(m.total)),
          Assignment{std::move(best_labels)}};
}

Rational csp_value_random_baseline(const CspInstance& inst) {
  if (inst.edges.empty())
    throw domain_error("csp value undefined without edges");
  Rational acc = 0;
  for (const auto& e : inst.edges) {
    BigInt tuples = 1;
    for (std::size_t v : e.verts) tuples *= inst.vertices[v].alphabet;
    acc += e.weight * Rational(BigInt(e.sat.size()), tuples);
  }
  return acc / inst.total_weight();
}

LocalSearchResult csp_value_local_search(const CspInstance& inst,
                                         std::size_t restarts,
                                         std::uint64_t seed) {
  if (restarts == 0)
    throw domain_error("local search needs at least one restart");
  Machine m(inst);
  std::uint64_t best = 0;
  std::vector<std::size_t> best_labels;
  bool have = false;
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng rng(mix_seed(seed, "restart:" + std::to_string(r)));
    for (std::size_t v = 0; v < inst.vertices.size(); ++v)
      m.set_label(v, rng.below(inst.vertices[v].alphabet));
    bool improved = true;
    while (improved) {
      improved = false;
      for (std::size_t v = 0; v < inst.vertices.size(); ++v) {
        const std::size_t cur = m.labels[v];
        std::size_t best_c = cur;
        std::uint64_t best_sum = m.sat_sum;
        for (std::size_t c = 0; c < inst.vertices[v].alphabet; ++c) {
          if (c == cur) continue;
          m.set_label(v, c);
          if (m.sat_sum > best_sum) {
            best_sum = m.sat_sum;
            best_c = c;
          }
        }
        m.set_label(v, best_c);
        if (best_c != cur) improved = true;
      }
    }
    if (!have || m.sat_sum > best) {
      have = true;
      best = m.sat_sum;
      best_labels = m.labels;
    }
  }
  return {Rational(BigInt(best), BigInt(m.total)),
          Assignment{std::move(best_labels)}};
}

StructuralReport structural_report(const CspInstance& inst) {
  StructuralReport rep;
  std::vector<std::size_t> degree(inst.vertices.size(), 0);
  for (const auto& e : inst.edges)
    for (std::size_t v : e.verts) ++degree[v];
  rep.is_fully_regular = true;
  for (std::size_t v = 0; v < degree.size(); ++v) {
    rep.max_degree = std::max(rep.max_degree, degree[v]);
    if (degree[v] != degree[0]) rep.is_fully_regular = false;
  }
  if (!inst.has_parts()) return rep;
  std::vector<std::size_t> part_of(inst.vertices.size(), 0);
  for (std::size_t p = 0; p < inst.parts.size(); ++p)
    for (std::size_t v : inst.parts[p]) part_of[v] = p;
  rep.is_k_partite = true;
  for (const auto& e : inst.edges) {
    std::vector<std::size_t> hits(inst.k, 0);
    for (std::size_t v : e.verts) ++hits[part_of[v]];
    for (std::size_t p = 0; p < inst.k; ++p)
      if (hits[p] != 1) rep.is_k_partite = false;
  }
  rep.is_partwise_regular = true;
  for (const auto& p : inst.parts) {
    std::vector<std::size_t> degs;
    for (std::size_t v : p) degs.push_back(degree[v]);
    std::sort(degs.begin(), degs.end());
    if (!degs.empty() && degs.front() != degs.back())
      rep.is_partwise_regular = false;
    rep.part_degrees.push_back(std::move(degs));
  }
  return rep;
}

CspInstance unweight_by_duplication(const CspInstance& inst,
                                    std::uint64_t copy_cap) {
  if (inst.edges.empty()) return inst;
  BigInt common_den = 1;
  for (const auto& e : inst.edges)
    common_den = boost::multiprecision::lcm(
        common_den, boost::multiprecision::denominator(e.weight));
  std::vector<BigInt> copies;
  BigInt g = 0;
  for (const auto& e : inst.edges) {
    copies.push_back(
        boost::multiprecision::numerator(e.weight) *
        (common_den / boost::multiprecision::denominator(e.weight)));
    g = boost::multiprecision::gcd(g, copies.back());
  }
  BigInt total_copies = 0;
  for (auto& c : copies) {
    c /= g;
    total_copies += c;
  }
  if (total_copies > copy_cap)
    throw resource_error("unweighting would duplicate beyond the copy cap");
  std::vector<CspEdge> edges;
  for (std::size_t i = 0; i < inst.edges.size(); ++i) {
    CspEdge unit = inst.edges[i];
    unit.weight = 1;
    const auto n = copies[i].convert_to<std::uint64_t>();
    for (std::uint64_t c = 0; c < n; ++c) edges.push_back(unit);
  }
  return CspInstance(inst.k, inst.vertices, inst.parts, std::move(edges));
}

MatchingInstance::MatchingInstance(
    std::size_t k_, const std::vector<std::vector<std::string>>& part_names,
    const std::vector<std::vector<std::string>>& edge_names)
    : k(k_) {
  if (k == 0) throw domain_error("matching arity must be positive");
  if (part_names.size() != k)
    throw domain_error("matching needs exactly k parts");
  std::map<std::string, std::size_t> id;
  parts.resize(k);
  for (std::size_t p = 0; p < k; ++p)
    for (const auto& name : part_names[p]) {
      if (id.count(name)) throw domain_error("duplicate vertex name: " + name);
      const std::size_t v = vertex_names.size();
      id[name] = v;
      vertex_names.push_back(name);
      vertex_part.push_back(p);
      parts[p].push_back(v);
    }
  for (const auto& en : edge_names) {
    if (en.empty() || en.size() > k)
      throw domain_error("hyperedge size must be between 1 and k");
    std::vector<std::size_t> e;
    std::vector<char> used(k, 0);
    for (const auto& name : en) {
      const auto it = id.find(name);
      if (it == id.end())
        throw domain_error("edge references a missing vertex: " + name);
      if (used[vertex_part[it->second]])
        throw domain_error("hyperedge touches a part twice");
      used[vertex_part[it->second]] = 1;
      e.push_back(it->second);
    }
    std::sort(e.begin(), e.end());
    edges.push_back(std::move(e));
  }
}

nlohmann::json matching_to_json(const MatchingInstance& m) {
  nlohmann::json j;
  j["k"] = m.k;
  auto parts = nlohmann::json::array();
  for (const auto& p : m.parts) {
    auto names = nlohmann::json::array();
    for (std::size_t v : p) names.push_back(m.vertex_names[v]);
    parts.push_back(names);
  }
  j["parts"] = parts;
  auto edges = nlohmann::json::array();
  for (const auto& e : m.edges) {
    auto names = nlohmann::json::array();
    for (std::size_t v : e) names.push_back(m.vertex_names[v]);
    edges.push_back(names);
  }
  j["edges"] = edges;
  return j;
}

MatchingInstance matching_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("k") || !j.contains("parts") ||
      !j.contains("edges"))
    throw domain_error("matching JSON must carry k, parts and edges");
  return MatchingInstance(
      j.at("k").get<std::size_t>(),
      j.at("parts").get<std::vector<std::vector<std::string>>>(),
      j.at("edges").get<std::vector<std::vector<std::string>>>());
}

std::size_t matching_value_exact(const MatchingInstance& m,
                                 std::size_t edge_cap) {
  const std::size_t count = m.edges.size();
  if (count > edge_cap || count > 63)
    throw resource_error("edge count beyond the branch-and-bound cap");
  if (count == 0) return 0;
  std::vector<std::uint64_t> conflict(count, 0);
  for (std::size_t i = 0; i < count; ++i) {
    conflict[i] |= std::uint64_t{1} << i;
    for (std::size_t j2 = i + 1; j2 < count; ++j2) {
      std::vector<std::size_t> shared;
      std::set_intersection(m.edges[i].begin(), m.edges[i].end(),
                            m.edges[j2].begin(), m.edges[j2].end(),
                            std::back_inserter(shared));
      if (!shared.empty()) {
        conflict[i] |= std::uint64_t{1} << j2;
        conflict[j2] |= std::uint64_t{1} << i;
      }
    }
  }
  std::size_t best = 0;
  std::uint64_t blocked = 0;
  for (std::size_t i = 0; i < count; ++i)
    if (!(blocked >> i & 1)) {
      ++best;
      blocked |= conflict[i];
    }
  const auto search = [&](auto&& self, std::uint64_t avail,
                          std::size_t chosen) -> void {
    if (chosen > best) best = chosen;
    if (chosen + static_cast<std::size_t>(std::popcount(avail)) <= best)
      return;
    const auto e = static_cast<std::size_t>(std::countr_zero(avail));
    self(self, avail & ~conflict[e], chosen + 1);
    self(self, avail & ~(std::uint64_t{1} << e), chosen);
  };
  search(search, (std::uint64_t{1} << count) - 1, 0);
  return best;
}

}  // namespace pcpkit::csp
