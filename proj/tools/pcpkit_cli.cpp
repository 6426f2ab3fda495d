// Command-line surface for the desk-scale PCP experiments.  Every
// subcommand emits one ResultRecord: a JSON object with the command name,
// the echoed parameters, the numeric results, the list of assertion
// outcomes, and the wall time.  Reports are byte-identical across runs
// with the same flags apart from the wall_time_seconds field; all
// randomness is derived from --seed through mix_seed(parent, label).
//
// Exit codes: 0 when the run finished and every checked inequality held,
// 2 when a checked inequality failed on concrete data, 1 for usage,
// input, or resource problems.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pcpkit/bilinear.hpp"
#include "pcpkit/composed.hpp"
#include "pcpkit/csp.hpp"
#include "pcpkit/errors.hpp"
#include "pcpkit/f2.hpp"
#include "pcpkit/grasstest.hpp"
#include "pcpkit/numbers.hpp"
#include "pcpkit/outerpcp.hpp"
#include "pcpkit/reduce.hpp"
#include "pcpkit/rng.hpp"
#include "pcpkit/stats.hpp"

namespace {

using nlohmann::json;
using namespace pcpkit;

// ---------------------------------------------------------------------
// Record assembly

struct Ctx {
  std::string command;
  std::string out_path;
  std::string format = "json";
  json parameters = json::object();
  json results = json::object();
  json assertions = json::array();
  int exit_code = 0;

  void record_assert(const std::string& anchor, const std::string& relation,
                     double lhs, double rhs, const std::string& outcome) {
    assertions.push_back({{"anchor", anchor},
                          {"relation", relation},
                          {"lhs", lhs},
                          {"rhs", rhs},
                          {"outcome", outcome}});
    if (outcome == "fail") exit_code = 2;
  }

  // Records lhs <= rhs + slack under the anchor.
  void check_le(const std::string& anchor, double lhs, double rhs,
                double slack = 0.0, bool vacuous = false) {
    record_assert(anchor, "<=", lhs, rhs,
                  vacuous ? "vacuous" : (lhs <= rhs + slack ? "pass" : "fail"));
  }

  // Records an exact equality the caller has already decided.
  void check_eq(const std::string& anchor, bool equal, double lhs, double rhs,
                bool vacuous = false) {
    record_assert(anchor, "==", lhs, rhs,
                  vacuous ? "vacuous" : (equal ? "pass" : "fail"));
  }
};

std::string printed_rational(const Rational& r) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", to_double(r));
  return boost::multiprecision::numerator(r).str() + "/" +
         boost::multiprecision::denominator(r).str() + " (" + buf + ")";
}

json ci_to_json(const BinomialCi& ci) {
  return json{{"rate", ci.rate},
              {"lo", ci.lo},
              {"hi", ci.hi},
              {"successes", ci.successes},
              {"trials", ci.trials},
              {"confidence", ci.confidence}};
}

// ---------------------------------------------------------------------
// File plumbing

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw domain_error("cannot open input file: " + path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::parse_error& e) {
    throw domain_error("invalid JSON in " + path + ": " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw resource_error("cannot open output file: " + path);
  out << body;
  if (!out) throw resource_error("write failed: " + path);
}

// ---------------------------------------------------------------------
// CSV flattening.  The JSON record is the source of truth; the CSV view
// flattens nested keys with dots and renders {num, den} rationals as
// floats.  Empty arrays and objects are skipped.

bool is_rational_object(const json& j) {
  return j.is_object() && j.size() == 2 && j.contains("num") &&
         j.contains("den");
}

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void flatten_json(const json& j, const std::string& prefix,
                  std::vector<std::pair<std::string, std::string>>& cells) {
  if (is_rational_object(j)) {
    cells.emplace_back(prefix, json(to_double(rational_from_json(j))).dump());
  } else if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it)
      flatten_json(it.value(),
                   prefix.empty() ? it.key() : prefix + "." + it.key(), cells);
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i)
      flatten_json(j[i], prefix + "." + std::to_string(i), cells);
  } else if (j.is_string()) {
    cells.emplace_back(prefix, csv_quote(j.get<std::string>()));
  } else {
    cells.emplace_back(prefix, j.dump());
  }
}

std::string to_csv(const json& record) {
  std::vector<std::pair<std::string, std::string>> cells;
  flatten_json(record, "", cells);
  std::string header, row;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) {
      header += ',';
      row += ',';
    }
    header += cells[i].first;
    row += cells[i].second;
  }
  return header + "\n" + row + "\n";
}

int emit_record(const Ctx& ctx, double wall_seconds) {
  const json record{{"command", ctx.command},
                    {"parameters", ctx.parameters},
                    {"results", ctx.results},
                    {"assertions", ctx.assertions},
                    {"wall_time_seconds", wall_seconds}};
  const std::string body = record.dump(2) + "\n";
  if (ctx.format == "csv") {
    const std::string csv = to_csv(record);
    if (!ctx.out_path.empty()) {
      write_text_file(ctx.out_path, csv);
      write_text_file(ctx.out_path + ".json", body);
    } else {
      std::cout << csv;
    }
  } else if (!ctx.out_path.empty()) {
    write_text_file(ctx.out_path, body);
  } else {
    std::cout << body;
  }
  return ctx.exit_code;
}

void add_report_options(CLI::App* sub, Ctx& ctx) {
  sub->add_option("--out", ctx.out_path,
                  "write the report to this file instead of stdout");
  sub->add_option("--format", ctx.format, "report format: json or csv")
      ->check(CLI::IsMember({"json", "csv"}));
}

// ---------------------------------------------------------------------
// Shared helpers

std::vector<std::size_t> vertex_degrees(const csp::CspInstance& inst) {
  std::vector<std::size_t> deg(inst.vertices.size(), 0);
  for (const auto& e : inst.edges)
    for (std::size_t v : e.verts) ++deg[v];
  return deg;
}

bool assignments_fit(const csp::CspInstance& inst, std::uint64_t cap) {
  BigInt prod = 1;
  for (const auto& v : inst.vertices) {
    prod *= v.alphabet;
    if (prod > cap) return false;
  }
  return true;
}

// Options shared by the commands that generate a planted 3Lin instance.
struct GenOpts {
  std::size_t vars = 40;
  std::size_t eqs = 12;
  double eta = 0.0;
  std::uint64_t seed = 0;
};

void add_gen_options(CLI::App* sub, GenOpts& g) {
  sub->add_option("--vars", g.vars, "number of variables");
  sub->add_option("--eqs", g.eqs, "number of equations");
  sub->add_option("--eta", g.eta, "fraction of right-hand sides to flip");
  sub->add_option("--seed", g.seed, "root seed")->required();
}

void echo_gen(json& parameters, const GenOpts& g) {
  parameters["vars"] = g.vars;
  parameters["eqs"] = g.eqs;
  parameters["eta"] = g.eta;
  parameters["seed"] = g.seed;
}

struct ComposedOpts {
  GenOpts gen;
  std::size_t J = 2;
  std::size_t ell2 = 2;
  std::size_t ellbot = 1;
  std::size_t k = 2;
  std::size_t r = 1;
  std::uint64_t samples = 800;
};

void add_composed_options(CLI::App* sub, ComposedOpts& o) {
  add_gen_options(sub, o.gen);
  sub->add_option("--J", o.J, "equations per question");
  sub->add_option("--ell2", o.ell2, "top zoom dimension above the question span");
  sub->add_option("--ellbot", o.ellbot, "bottom subspace dimension");
  sub->add_option("--k", o.k, "top draws per constraint");
  sub->add_option("--r", o.r, "advice dimension for extraction");
  sub->add_option("--samples", o.samples, "constraint samples for the build");
}

void echo_composed(json& parameters, const ComposedOpts& o) {
  echo_gen(parameters, o.gen);
  parameters["J"] = o.J;
  parameters["ell2"] = o.ell2;
  parameters["ellbot"] = o.ellbot;
  parameters["k"] = o.k;
  parameters["r"] = o.r;
  parameters["samples"] = o.samples;
}

composed::ComposedBuild make_build(const ComposedOpts& o,
                                   outerpcp::Planted3Lin& planted) {
  const SeedTree root(o.gen.seed);
  planted = outerpcp::gen_3lin(o.gen.vars, o.gen.eqs, o.gen.eta,
                               root.child("gen").seed());
  const composed::ComposedConfig cfg{o.J, o.ell2, o.ellbot, o.k, o.r};
  return composed::build_composed_csp(planted.inst, cfg,
                                      root.child("build").seed(), o.samples);
}

// ---------------------------------------------------------------------
// Subcommands

void setup_gen_3lin(CLI::App& app, Ctx& ctx) {
  auto sub = app.add_subcommand("gen-3lin",
                                "generate a planted 3Lin instance with noise");
  auto o = std::make_shared<GenOpts>();
  auto inst_out = std::make_shared<std::string>();
  o->vars = 30;
  o->eqs = 40;
  add_gen_options(sub, *o);
  sub->add_option("--instance-out", *inst_out,
                  "also write the bare instance JSON here");
  add_report_options(sub, ctx);
  sub->callback([&ctx, o, inst_out] {
    ctx.command = "gen-3lin";
    echo_gen(ctx.parameters, *o);
    const auto planted =
        outerpcp::gen_3lin(o->vars, o->eqs, o->eta, o->seed);
    const json inst_json = outerpcp::lin3_to_json(planted.inst);
    const Rational planted_value =
        outerpcp::lin3_value(planted.inst, planted.assignment);
    ctx.results["instance"] = inst_json;
    ctx.results["assignment"] = planted.assignment;
    ctx.results["n_flipped"] = planted.n_flipped;
    ctx.results["planted_value"] = rational_to_json(planted_value);
    ctx.results["planted_value_printed"] = printed_rational(planted_value);
    if (!inst_out->empty())
      write_text_file(*inst_out, inst_json.dump(2) + "\n");
  });
}

void setup_csp_value(CLI::App& app, Ctx& ctx) {
  auto sub = app.add_subcommand("csp-value",
                                "exact optimum of a CSP instance file");
  struct Opts {
    std::string in;
    std::uint64_t cap = 100000000;
    std::size_t restarts = 0;
    std::uint64_t seed = 0;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--in", o->in, "CSP instance JSON")->required();
  sub->add_option("--cap", o->cap, "assignment-space cap for the exact search");
  sub->add_option("--restarts", o->restarts,
                  "also run local search with this many restarts");
  auto* seed_opt = sub->add_option("--seed", o->seed,
                                   "seed for local search restarts");
  add_report_options(sub, ctx);
  sub->callback([&ctx, o, seed_opt] {
    ctx.command = "csp-value";
    ctx.parameters["in"] = o->in;
    ctx.parameters["cap"] = o->cap;
    ctx.parameters["restarts"] = o->restarts;
    const auto inst = csp::csp_from_json(read_json_file(o->in));
    const auto exact = csp::csp_value_exact(inst, o->cap);
    const Rational baseline = csp::csp_value_random_baseline(inst);
    ctx.results["digest"] = csp::csp_digest(inst);
    ctx.results["n_vertices"] = inst.vertices.size();
    ctx.results["n_edges"] = inst.edges.size();
    ctx.results["value"] = rational_to_json(exact.value);
    ctx.results["value_printed"] = printed_rational(exact.value);
    ctx.results["argmax"] = exact.argmax.labels;
    ctx.results["random_baseline"] = rational_to_json(baseline);
    ctx.results["random_baseline_printed"] = printed_rational(baseline);
    if (o->restarts > 0) {
      if (seed_opt->count() == 0)
        throw domain_error("--seed is required when --restarts is set");
      ctx.parameters["seed"] = o->seed;
      const auto ls = csp::csp_value_local_search(inst, o->restarts, o->seed);
      ctx.results["local_search_value"] = rational_to_json(ls.value);
      ctx.results["local_search_value_printed"] = printed_rational(ls.value);
      ctx.check_le("local-search-lower-bound", to_double(ls.value),
                   to_double(exact.value));
    }
  });
}

void setup_matching_value(CLI::App& app, Ctx& ctx) {
  auto sub = app.add_subcommand(
      "matching-value", "exact k-dimensional matching number of an instance");
  struct Opts {
    std::string in;
    std::size_t edge_cap = 24;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--in", o->in, "matching instance JSON")->required();
  sub->add_option("--edge-cap", o->edge_cap,
                  "edge-count cap for the branch and bound");
  add_report_options(sub, ctx);
  sub->callback([&ctx, o] {
    ctx.command = "matching-value";
    ctx.parameters["in"] = o->in;
    ctx.parameters["edge_cap"] = o->edge_cap;
    const auto m = csp::matching_from_json(read_json_file(o->in));
    ctx.results["k"] = m.k;
    ctx.results["n_vertices"] = m.vertex_names.size();
    ctx.results["n_edges"] = m.edges.size();
    ctx.results["value"] = csp::matching_value_exact(m, o->edge_cap);
  });
}

void setup_reduce_kpartite(CLI::App& app, Ctx& ctx) {
  auto sub = app.add_subcommand(
      "reduce-kpartite", "k-partitization by vertex copies, with value audit");
  struct Opts {
    std::string in;
    std::uint64_t edge_cap = 1000000;
    std::uint64_t audit_cap = 1 << 20;
    std::string inst_out;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--in", o->in, "CSP instance JSON")->required();
  sub->add_option("--edge-cap", o->edge_cap, "output edge cap");
  sub->add_option("--audit-cap", o->audit_cap,
                  "value audit runs when both assignment spaces fit this");
  sub->add_option("--instance-out", o->inst_out,
                  "write the output instance JSON here");
  add_report_options(sub, ctx);
  sub->callback([&ctx, o] {
    ctx.command = "reduce-kpartite";
    ctx.parameters["in"] = o->in;
    ctx.parameters["edge_cap"] = o->edge_cap;
    ctx.parameters["audit_cap"] = o->audit_cap;
    const auto inst = csp::csp_from_json(read_json_file(o->in));
    const auto out = reduce::k_partitize(inst, o->edge_cap);
    ctx.results["input_digest"] = csp::csp_digest(inst);
    ctx.results["output_digest"] = csp::csp_digest(out);
    ctx.results["input_vertices"] = inst.vertices.size();
    ctx.results["output_vertices"] = out.vertices.size();
    ctx.results["input_edges"] = inst.edges.size();
    ctx.results["output_edges"] = out.edges.size();
    ctx.results["k"] = inst.k;

    const bool audited = assignments_fit(inst, o->audit_cap) &&
                         assignments_fit(out, o->audit_cap);
    if (audited) {
      const Rational vin = csp::csp_value_exact(inst, o->audit_cap).value;
      const Rational vout = csp::csp_value_exact(out, o->audit_cap).value;
      BigInt kk = 1, kfact = 1;
      for (std::size_t i = 0; i < inst.k; ++i) kk *= inst.k;
      for (std::size_t i = 2; i <= inst.k; ++i) kfact *= i;
      const Rational upper = Rational(kk, kfact) * vin;
      ctx.results["value_in"] = rational_to_json(vin);
      ctx.results["value_out"] = rational_to_json(vout);
      ctx.results["upper_factor"] = rational_to_json(Rational(kk, kfact));
      ctx.check_eq("kpartite-sandwich-lower", vin <= vout, to_double(vin),
                   to_double(vout));
      ctx.check_eq("kpartite-sandwich-upper", vout <= upper, to_double(vout),
                   to_double(upper));
    } else {
      ctx.check_le("kpartite-sandwich-lower", 0, 0, 0, true);
      ctx.check_le("kpartite-sandwich-upper", 0, 0, 0, true);
    }
    if (!o->inst_out.empty())
      write_text_file(o->inst_out, csp::csp_to_json(out).dump(2) + "\n");
  });
}

void setup_reduce_regularize(CLI::App& app, Ctx& ctx) {
  auto sub = app.add_subcommand(
      "reduce-regularize",
      "make one part constraint-regular through sampled expanders");
  struct Opts {
    std::string in;
    std::size_t d = 2;
    std::size_t part = 0;
    std::uint64_t seed = 0;
    std::uint64_t audit_cap = 1 << 20;
    std::string inst_out;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--in", o->in, "k-partite CSP instance JSON")->required();
  sub->add_option("--d", o->d, "expander degree");
  sub->add_option("--part", o->part, "part index to regularize");
  sub->add_option("--seed", o->seed, "expander sampling seed")->required();
  sub->add_option("--audit-cap", o->audit_cap,
                  "exact value audit cap on the assignment spaces");
  sub->add_option("--instance-out", o->inst_out,
                  "write the output instance JSON here");
  add_report_options(sub, ctx);
  sub->callback([&ctx, o] {
    ctx.command = "reduce-regularize";
    ctx.parameters["in"] = o->in;
    ctx.parameters["d"] = o->d;
    ctx.parameters["part"] = o->part;
    ctx.parameters["seed"] = o->seed;
    ctx.parameters["audit_cap"] = o->audit_cap;
    const auto inst = csp::csp_from_json(read_json_file(o->in));
    const auto [out, rep] =
        reduce::partwise_regularize(inst, o->d, o->part, o->seed, o->audit_cap);
    ctx.results["report"] = reduce::report_to_json(rep);
    if (rep.values_computed) {
      ctx.check_le("cloud-blowup-completeness", to_double(rep.value_in),
                   to_double(rep.value_out));
      ctx.check_le("measured-lambda-soundness",
                   to_double(rep.value_out) - rep.error_term,
                   to_double(rep.value_in), 1e-7);
    } else {
      ctx.check_le("cloud-blowup-completeness", 0, 0, 0, true);
      ctx.check_le("measured-lambda-soundness", 0, 0, 0, true);
    }
    if (!o->inst_out.empty())
      write_text_file(o->inst_out, csp::csp_to_json(out).dump(2) + "\n");
  });
}

void setup_reduce_fullreg(CLI::App& app, Ctx& ctx) {
  auto sub = app.add_subcommand(
      "reduce-fullreg", "product-cloud full regularization of a k-partite CSP");
  struct Opts {
    std::string in;
    std::vector<std::size_t> c;
    std::uint64_t edge_cap = 1000000;
    std::uint64_t audit_cap = 1 << 20;
    std::string inst_out;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--in", o->in, "partwise-regular CSP instance JSON")
      ->required();
  sub->add_option("--c", o->c, "per-part copy multipliers, comma separated")
      ->required()
      ->delimiter(',');
  sub->add_option("--edge-cap", o->edge_cap, "output edge cap");
  sub->add_option("--audit-cap", o->audit_cap,
                  "exact value audit cap on the assignment spaces");
  sub->add_option("--instance-out", o->inst_out,
                  "write the output instance JSON here");
  add_report_options(sub, ctx);
  sub->callback([&ctx, o] {
    ctx.command = "reduce-fullreg";
    ctx.parameters["in"] = o->in;
    ctx.parameters["c"] = o->c;
    ctx.parameters["edge_cap"] = o->edge_cap;
    ctx.parameters["audit_cap"] = o->audit_cap;
    const auto inst = csp::csp_from_json(read_json_file(o->in));
    const auto out = reduce::fully_regularize(inst, o->c, o->edge_cap);
    ctx.results["input_digest"] = csp::csp_digest(inst);
    ctx.results["output_digest"] = csp::csp_digest(out);
    ctx.results["output_vertices"] = out.vertices.size();
    ctx.results["output_edges"] = out.edges.size();

    // Degree law: output part i is regular with degree (prod_j c_j d_j)/c_i.
    const auto in_deg = vertex_degrees(inst);
    const auto out_deg = vertex_degrees(out);
    BigInt prod = 1;
    for (std::size_t j = 0; j < inst.parts.size(); ++j)
      prod *= BigInt(o->c[j]) * in_deg[inst.parts[j][0]];
    json parts = json::array();
    bool degrees_ok = true;
    for (std::size_t i = 0; i < out.parts.size(); ++i) {
      const BigInt expected = prod / o->c[i];
      BigInt measured = out_deg[out.parts[i][0]];
      for (std::size_t v : out.parts[i])
        if (BigInt(out_deg[v]) != measured) degrees_ok = false;
      if (measured != expected) degrees_ok = false;
      parts.push_back({{"part", i},
                       {"expected_degree", expected.str()},
                       {"measured_degree", measured.str()}});
    }
    ctx.results["part_degrees"] = parts;
    ctx.check_eq("fullreg-degree-product", degrees_ok, 0, 0);

    const bool audited = assignments_fit(inst, o->audit_cap) &&
                         assignments_fit(out, o->audit_cap);
    if (audited) {
      const Rational vin = csp::csp_value_exact(inst, o->audit_cap).value;
      const Rational vout = csp::csp_value_exact(out, o->audit_cap).value;
      ctx.results["value_in"] = rational_to_json(vin);
      ctx.results["value_out"] = rational_to_json(vout);
      ctx.check_eq("fullreg-value-preserved", vin == vout, to_double(vin),
                   to_double(vout));
    } else {
      ctx.check_eq("fullreg-value-preserved", true, 0, 0, true);
    }
    if (!o->inst_out.empty())
      write_text_file(o->inst_out, csp::csp_to_json(out).dump(2) + "\n");
  });
}

void setup_grassmann_test(CLI::App& app, Ctx& ctx) {
  auto sub = app.add_subcommand(
      "grassmann-test",
      "the (k+1)-query consistency test on tables built from global words");
  struct Opts {
    std::size_t n = 6;
    std::size_t ltop = 2;
    std::size_t lbot = 1;
    std::size_t k = 2;
    std::uint64_t top = 0;
    std::uint64_t bot = 0;
    std::string mode = "exact";
    std::uint64_t trials = 20000;
    std::uint64_t seed = 0;
    unsigned threads = 1;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--n", o->n, "ambient dimension");
  sub->add_option("--ltop", o->ltop, "top stratum dimension");
  sub->add_option("--lbot", o->lbot, "bottom stratum dimension");
  sub->add_option("--k", o->k, "top draws per round");
  sub->add_option("--top", o->top, "global coefficient word for the top table");
  sub->add_option("--bot", o->bot,
                  "global coefficient word for the bottom table");
  sub->add_option("--mode", o->mode, "exact or mc")
      ->check(CLI::IsMember({"exact", "mc"}));
  sub->add_option("--trials", o->trials, "Monte-Carlo trials (mc mode)");
  auto* seed_opt = sub->add_option("--seed", o->seed, "seed (mc mode)");
  sub->add_option("--threads", o->threads, "worker threads (mc mode)");
  add_report_options(sub, ctx);
  sub->callback([&ctx, o, seed_opt] {
    ctx.command = "grassmann-test";
    ctx.parameters["n"] = o->n;
    ctx.parameters["ltop"] = o->ltop;
    ctx.parameters["lbot"] = o->lbot;
    ctx.parameters["k"] = o->k;
    ctx.parameters["top"] = o->top;
    ctx.parameters["bot"] = o->bot;
    ctx.parameters["mode"] = o->mode;
    const auto tp = grasstest::TablePair::from_globals(o->n, o->ltop, o->lbot,
                                                       o->top, o->bot);
    const bool consistent =
        grasstest::LinearFunctional(f2::Subspace::full(o->n), o->top) ==
        grasstest::LinearFunctional(f2::Subspace::full(o->n), o->bot);
    ctx.results["globally_consistent"] = consistent;
    if (o->mode == "exact") {
      const auto res = grasstest::run_consistency_test_exact(tp, o->k);
      ctx.results["probability"] = rational_to_json(res.probability);
      ctx.results["probability_printed"] = printed_rational(res.probability);
      if (consistent)
        ctx.check_eq("consistency-completeness",
                     res.probability == Rational(1),
                     to_double(res.probability), 1.0);
    } else {
      if (seed_opt->count() == 0)
        throw domain_error("--seed is required in mc mode");
      ctx.parameters["trials"] = o->trials;
      ctx.parameters["seed"] = o->seed;
      const auto res = grasstest::run_consistency_test_mc(
          tp, o->k, o->trials, o->seed, o->threads);
      ctx.results["estimate"] = res.estimate;
      ctx.results["ci_low"] = res.ci_low;
      ctx.results["ci_high"] = res.ci_high;
      ctx.results["successes"] = res.successes;
      ctx.results["trials"] = res.trials;
    }
  });
}

void setup_counting_lemma(CLI::App& app, Ctx& ctx) {
  auto sub = app.add_subcommand(
      "counting-lemma",
      "hyperedge probability against the matrix-side inner product");
  struct Opts {
    std::size_t n = 6;
    std::size_t ltop = 2;
    std::size_t lbot = 1;
    std::size_t k = 2;
    std::size_t pairs = 10;
    double density = 0.5;
    std::uint64_t seed = 0;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--n", o->n, "ambient dimension");
  sub->add_option("--ltop", o->ltop, "top family dimension");
  sub->add_option("--lbot", o->lbot, "bottom family dimension");
  sub->add_option("--k", o->k, "top draws per hyperedge");
  sub->add_option("--pairs", o->pairs, "number of random family pairs");
  sub->add_option("--density", o->density,
                  "inclusion probability per stratum member");
  sub->add_option("--seed", o->seed, "family sampling seed")->required();
  add_report_options(sub, ctx);
  sub->callback([&ctx, o] {
    ctx.command = "counting-lemma";
    ctx.parameters["n"] = o->n;
    ctx.parameters["ltop"] = o->ltop;
    ctx.parameters["lbot"] = o->lbot;
    ctx.parameters["k"] = o->k;
    ctx.parameters["pairs"] = o->pairs;
    ctx.parameters["density"] = o->density;
    ctx.parameters["seed"] = o->seed;
    const auto tops = f2::enumerate_grassmann(o->n, o->ltop);
    const auto bots = f2::enumerate_grassmann(o->n, o->lbot);
    const SeedTree root(o->seed);

    double max_excess = -1.0;
    bool any_margin = false;
    json pair_rows = json::array();
    const auto run_pair = [&](const std::string& label,
                              const grasstest::SubspaceFamily& rfam,
                              const grasstest::SubspaceFamily& lfam) {
      const auto rep = grasstest::count_hyperedges(rfam, lfam, o->k);
      any_margin = any_margin || rep.margin_holds;
      if (rep.margin_holds)
        max_excess = std::max(
            max_excess,
            to_double(rep.probability - 2 * rep.inner_product));
      pair_rows.push_back(
          {{"pair", label},
           {"bottom_size", rfam.members.size()},
           {"top_size", lfam.members.size()},
           {"probability", rational_to_json(rep.probability)},
           {"inner_product", rational_to_json(rep.inner_product)},
           {"margin_holds", rep.margin_holds}});
    };

    for (std::size_t i = 0; i < o->pairs; ++i) {
      grasstest::SubspaceFamily lfam(o->n, o->ltop);
      grasstest::SubspaceFamily rfam(o->n, o->lbot);
      Rng lr(root.child("lfam").child(i).seed());
      Rng rr(root.child("rfam").child(i).seed());
      for (const auto& s : tops)
        if (lr.real() < o->density) lfam.members.insert(s);
      for (const auto& s : bots)
        if (rr.real() < o->density) rfam.members.insert(s);
      run_pair(std::to_string(i), rfam, lfam);
    }
    run_pair("empty", grasstest::SubspaceFamily(o->n, o->lbot),
             grasstest::SubspaceFamily(o->n, o->ltop));
    run_pair("full",
             grasstest::SubspaceFamily(
                 o->n, o->lbot,
                 std::set<f2::Subspace>(bots.begin(), bots.end())),
             grasstest::SubspaceFamily(
                 o->n, o->ltop,
                 std::set<f2::Subspace>(tops.begin(), tops.end())));

    ctx.results["pairs"] = pair_rows;
    ctx.check_le("edges-vs-inner-product", any_margin ? max_excess : 0.0, 0.0,
                 0.0, !any_margin);
  });
}

void setup_bilinear_spectrum(CLI::App& app, Ctx& ctx) {
  auto sub = app.add_subcommand(
      "bilinear-spectrum",
      "eigenvalues and norm decay of the averaging operators");
  struct Opts {
    std::size_t n = 4;
    std::size_t m = 2;
    std::size_t c = 1;
    std::size_t fns = 5;
    std::size_t chars = 16;
    std::uint64_t seed = 0;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--n", o->n, "matrix rows");
  sub->add_option("--m", o->m, "matrix columns");
  sub->add_option("--c", o->c, "appended / perturbing column count");
  sub->add_option("--fns", o->fns, "random basis-invariant test functions");
  sub->add_option("--chars", o->chars, "sampled characters for the identity");
  sub->add_option("--seed", o->seed, "sampling seed")->required();
  add_report_options(sub, ctx);
  sub->callback([&ctx, o] {
    ctx.command = "bilinear-spectrum";
    ctx.parameters["n"] = o->n;
    ctx.parameters["m"] = o->m;
    ctx.parameters["c"] = o->c;
    ctx.parameters["fns"] = o->fns;
    ctx.parameters["chars"] = o->chars;
    ctx.parameters["seed"] = o->seed;
    const SeedTree root(o->seed);

    // Eigenvalue table with the rank-level bound.
    json lambdas = json::array();
    double max_lambda_excess = -1.0;
    std::vector<double> bound_at(o->m + 1, 0.0);
    for (std::size_t d = 0; d <= o->m; ++d) {
      const Rational lam = bilinear::phi_eigenvalue(o->m, o->c, d);
      bound_at[d] =
          std::pow(2.0, -static_cast<double>(d * (o->c - 1))) +
          3.0 * std::pow(2.0, static_cast<double>(d) -
                                  static_cast<double>(o->n));
      max_lambda_excess = std::max(
          max_lambda_excess, std::abs(to_double(lam)) - bound_at[d]);
      lambdas.push_back({{"rank", d},
                         {"lambda", rational_to_json(lam)},
                         {"bound", bound_at[d]}});
    }
    ctx.results["phi_eigenvalues"] = lambdas;
    ctx.check_le("phi-eigenvalue-bound", max_lambda_excess, 0.0);

    // Characters are eigenvectors of Phi.
    Rng crng(root.child("chars").seed());
    double max_identity_residual = 0.0;
    for (std::size_t t = 0; t < o->chars; ++t) {
      const std::uint64_t s = crng.word(o->n * o->m);
      bilinear::BilinearFn chi(o->n, o->m);
      for (std::uint64_t idx = 0; idx < chi.size(); ++idx)
        chi.values[idx] = bilinear::character_eval(s, idx);
      const auto out = bilinear::apply_Phi(chi, o->c);
      const double lam = to_double(bilinear::phi_eigenvalue(
          o->m, o->c, bilinear::rank_of_index(s, o->n, o->m)));
      for (std::uint64_t idx = 0; idx < chi.size(); ++idx)
        max_identity_residual =
            std::max(max_identity_residual,
                     std::abs(out.values[idx] - lam * chi.values[idx]));
    }
    ctx.results["phi_identity_residual"] = max_identity_residual;
    ctx.check_le("phi-eigen-identity", max_identity_residual, 0.0, 1e-12);

    // Level decomposition behavior on random basis-invariant functions.
    Rng frng(root.child("fns").seed());
    double max_parseval = 0.0, max_ortho = 0.0, max_decay_excess = 0.0;
    for (std::size_t t = 0; t < o->fns; ++t) {
      const auto f =
          bilinear::random_basis_invariant_boolean(o->n, o->m, frng);
      std::vector<bilinear::BilinearFn> levels, tlevels;
      double level_norm_sum = 0.0;
      for (std::size_t d = 0; d <= o->m; ++d) {
        levels.push_back(bilinear::level_projection(f, d));
        tlevels.push_back(bilinear::apply_T(levels.back(), o->c));
        level_norm_sum += bilinear::norm2_squared(levels.back());
      }
      max_parseval = std::max(
          max_parseval,
          std::abs(level_norm_sum - bilinear::norm2_squared(f)));
      for (std::uint64_t idx = 0; idx < f.size(); ++idx) {
        double sum = 0.0;
        for (const auto& lv : levels) sum += lv.values[idx];
        max_parseval = std::max(max_parseval,
                                std::abs(sum - f.values[idx]));
      }
      for (std::size_t i = 0; i <= o->m; ++i)
        for (std::size_t j = i + 1; j <= o->m; ++j)
          max_ortho = std::max(
              max_ortho, std::abs(bilinear::inner(tlevels[i], tlevels[j])));
      for (std::size_t d = 0; d <= o->m; ++d)
        max_decay_excess =
            std::max(max_decay_excess,
                     bilinear::norm2_squared(tlevels[d]) -
                         bound_at[d] * bilinear::norm2_squared(levels[d]));
    }
    ctx.results["parseval_residual"] = max_parseval;
    ctx.results["t_orthogonality_residual"] = max_ortho;
    ctx.results["t_norm_decay_excess"] = max_decay_excess;
    ctx.check_le("bilinear-parseval", max_parseval, 0.0, 1e-9);
    ctx.check_le("t-level-orthogonality", max_ortho, 0.0, 1e-9);
    ctx.check_le("t-norm-decay", max_decay_excess, 0.0, 1e-9);
  });
}

void setup_covering(CLI::App& app, Ctx& ctx) {
  auto sub = app.add_subcommand(
      "covering", "statistical-distance bounds for the smoothing step");
  struct Opts {
    std::size_t J = 2;
    double beta = 0.1;
    std::size_t r1 = 1;
    std::size_t s = 1;
    std::uint64_t samples = 20000;
    std::uint64_t seed = 0;
    std::uint64_t exact_cap = 1u << 20;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--J", o->J, "question blocks");
  sub->add_option("--beta", o->beta, "smoothing probability");
  sub->add_option("--r1", o->r1, "advice dimension for the advice bound");
  sub->add_option("--s", o->s, "codimension for the retention bound");
  sub->add_option("--samples", o->samples, "Monte-Carlo fallback sample count");
  sub->add_option("--seed", o->seed, "experiment seed")->required();
  sub->add_option("--exact-cap", o->exact_cap,
                  "exact mixture enumeration cap");
  add_report_options(sub, ctx);
  sub->callback([&ctx, o] {
    ctx.command = "covering";
    ctx.parameters["J"] = o->J;
    ctx.parameters["beta"] = o->beta;
    ctx.parameters["r1"] = o->r1;
    ctx.parameters["s"] = o->s;
    ctx.parameters["samples"] = o->samples;
    ctx.parameters["seed"] = o->seed;
    const auto coords = outerpcp::make_question_coords(o->J);
    if (o->s > coords.ambient())
      throw domain_error("--s exceeds the question ambient dimension");

    const auto adv = outerpcp::covering_sd_advice(
        coords, o->r1, o->beta, o->samples, mix_seed(o->seed, "advice"),
        o->exact_cap);
    ctx.results["advice"] = outerpcp::sd_report_to_json(adv);
    ctx.check_le("covering-advice-bound", adv.ci_low, adv.bound, 0.0,
                 !adv.asserted);

    std::vector<f2::Word> rows;
    for (std::size_t i = 0; i + o->s < coords.ambient(); ++i)
      rows.push_back(f2::Word{1} << i);
    const f2::Subspace w(coords.ambient(), rows);
    const auto ret = outerpcp::retain_codim_experiment(
        coords, w, o->beta, o->samples, mix_seed(o->seed, "retain"),
        o->exact_cap);
    ctx.results["retain"] = outerpcp::sd_report_to_json(ret);
    ctx.check_le("retain-codim-bound", ret.ci_low, ret.bound, 0.0,
                 !ret.asserted);
  });
}

void setup_outer_game(CLI::App& app, Ctx& ctx) {
  auto sub = app.add_subcommand(
      "outer-game", "planted provers against the smooth 2P1R verifier");
  struct Opts {
    GenOpts gen;
    std::size_t J = 2;
    double beta = 0.1;
    std::size_t r = 1;
    std::uint64_t trials = 100000;
    unsigned threads = 1;
  };
  auto o = std::make_shared<Opts>();
  add_gen_options(sub, o->gen);
  sub->add_option("--J", o->J, "equations per round");
  sub->add_option("--beta", o->beta, "smoothing probability");
  sub->add_option("--r", o->r, "advice vectors");
  sub->add_option("--trials", o->trials, "game rounds");
  sub->add_option("--threads", o->threads, "worker threads");
  add_report_options(sub, ctx);
  sub->callback([&ctx, o] {
    ctx.command = "outer-game";
    echo_gen(ctx.parameters, o->gen);
    ctx.parameters["J"] = o->J;
    ctx.parameters["beta"] = o->beta;
    ctx.parameters["r"] = o->r;
    ctx.parameters["trials"] = o->trials;
    const SeedTree root(o->gen.seed);
    const auto planted = outerpcp::gen_3lin(o->gen.vars, o->gen.eqs,
                                            o->gen.eta,
                                            root.child("gen").seed());
    const Rational eps =
        Rational(planted.n_flipped, planted.inst.equations.size());
    const outerpcp::OuterConfig cfg{o->J, o->beta, o->r,
                                    root.child("game").seed()};
    const auto prover = outerpcp::assignment_strategy(planted.assignment);
    const auto ci =
        outerpcp::play_game(planted.inst, cfg, prover, prover, o->trials,
                            root.child("game").seed(), o->threads);
    const double bound = 1.0 - static_cast<double>(o->J) * to_double(eps);
    ctx.results["n_flipped"] = planted.n_flipped;
    ctx.results["eps"] = rational_to_json(eps);
    ctx.results["game"] = ci_to_json(ci);
    ctx.results["bound"] = bound;
    ctx.check_le("outer-completeness-bound", bound, ci.hi, 0.0, bound <= 0.0);
  });
}

void setup_composed_build(CLI::App& app, Ctx& ctx) {
  auto sub = app.add_subcommand(
      "composed-build", "materialize the composed CSP of a planted instance");
  auto o = std::make_shared<ComposedOpts>();
  auto inst_out = std::make_shared<std::string>();
  auto sidecar_out = std::make_shared<std::string>();
  add_composed_options(sub, *o);
  sub->add_option("--instance-out", *inst_out,
                  "write the composed CSP JSON here");
  sub->add_option("--sidecar-out", *sidecar_out,
                  "write the build sidecar JSON here");
  add_report_options(sub, ctx);
  sub->callback([&ctx, o, inst_out, sidecar_out] {
    ctx.command = "composed-build";
    echo_composed(ctx.parameters, *o);
    outerpcp::Planted3Lin planted;
    const auto build = make_build(*o, planted);
    const auto qrep = composed::enumerate_questions(planted.inst, o->J);
    ctx.results["n_flipped"] = planted.n_flipped;
    ctx.results["n_questions"] = build.sides.size();
    ctx.results["question_tuples"] = qrep.n_tuples.str();
    ctx.results["dropped_fraction"] = qrep.dropped_fraction;
    ctx.results["n_vertices_a"] = build.verts_a.size();
    ctx.results["n_vertices_b"] = build.verts_b.size();
    ctx.results["n_cliques"] = build.cliques.size();
    ctx.results["n_edges"] = build.csp.edges.size();
    ctx.results["n_duplicate_redraws"] = build.n_duplicate_redraws;
    ctx.results["csp_digest"] = csp::csp_digest(build.csp);
    if (!inst_out->empty())
      write_text_file(*inst_out, csp::csp_to_json(build.csp).dump(2) + "\n");
    if (!sidecar_out->empty())
      write_text_file(*sidecar_out, build.sidecar.dump(2) + "\n");
  });
}

void setup_composed_completeness(CLI::App& app, Ctx& ctx) {
  auto sub = app.add_subcommand(
      "composed-completeness",
      "planted tables against the sampled composed constraints");
  auto o = std::make_shared<ComposedOpts>();
  auto trials = std::make_shared<std::uint64_t>(10000);
  auto threads = std::make_shared<unsigned>(1);
  add_composed_options(sub, *o);
  sub->add_option("--trials", *trials, "consistency trials");
  sub->add_option("--threads", *threads, "worker threads");
  add_report_options(sub, ctx);
  sub->callback([&ctx, o, trials, threads] {
    ctx.command = "composed-completeness";
    echo_composed(ctx.parameters, *o);
    ctx.parameters["trials"] = *trials;
    outerpcp::Planted3Lin planted;
    const auto build = make_build(*o, planted);
    const SeedTree root(o->gen.seed);
    const auto rep = composed::completeness_experiment(
        build, planted.assignment, *trials, root.child("exp").seed(),
        *threads);
    ctx.results["report"] = composed::completeness_report_to_json(rep);
    ctx.check_le("composed-completeness", rep.bound, rep.ci.hi, 0.0,
                 !rep.asserted);
  });
}

void setup_extract_strategies(CLI::App& app, Ctx& ctx) {
  auto sub = app.add_subcommand(
      "extract-strategies",
      "decode outer-game provers from composed tables and play the game");
  struct Extra {
    std::uint64_t pu_trials = 2000;
    double c_threshold = -1.0;
    std::uint64_t game_trials = 2000;
    double game_beta = 0.8;
    unsigned threads = 1;
  };
  auto o = std::make_shared<ComposedOpts>();
  auto e = std::make_shared<Extra>();
  add_composed_options(sub, *o);
  sub->add_option("--pu-trials", e->pu_trials,
                  "per-question consistency trials");
  sub->add_option("--c-threshold", e->c_threshold,
                  "agreement threshold; negative uses epsilon/10");
  sub->add_option("--game-trials", e->game_trials, "outer game rounds");
  sub->add_option("--game-beta", e->game_beta, "outer game smoothing");
  sub->add_option("--threads", e->threads, "worker threads");
  add_report_options(sub, ctx);
  sub->callback([&ctx, o, e] {
    ctx.command = "extract-strategies";
    echo_composed(ctx.parameters, *o);
    ctx.parameters["pu_trials"] = e->pu_trials;
    ctx.parameters["c_threshold"] = e->c_threshold;
    ctx.parameters["game_trials"] = e->game_trials;
    ctx.parameters["game_beta"] = e->game_beta;
    outerpcp::Planted3Lin planted;
    const auto build = make_build(*o, planted);
    const auto [t1, t2] = composed::sigma_tables(build, planted.assignment);
    const SeedTree root(o->gen.seed);
    composed::ExtractOptions opt;
    opt.seed = root.child("extract").seed();
    opt.pu_trials = e->pu_trials;
    opt.c_threshold = e->c_threshold;
    const auto ex = composed::extract_prover_strategies(build, t1, t2, opt);
    ctx.results["epsilon"] = ex.epsilon;
    ctx.results["c_threshold"] = ex.c_threshold;
    ctx.results["p_u"] = ex.p_u;
    ctx.results["good_questions"] = ex.good;
    const outerpcp::OuterConfig cfg{o->J, e->game_beta, o->r,
                                    root.child("game").seed()};
    const auto ci =
        outerpcp::play_game(planted.inst, cfg, ex.first, ex.second,
                            e->game_trials, root.child("game").seed(),
                            e->threads);
    ctx.results["game"] = ci_to_json(ci);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale PCP machinery: experiments and reductions"};
  app.require_subcommand(1);
  Ctx ctx;
  setup_gen_3lin(app, ctx);
  setup_csp_value(app, ctx);
  setup_matching_value(app, ctx);
  setup_reduce_kpartite(app, ctx);
  setup_reduce_regularize(app, ctx);
  setup_reduce_fullreg(app, ctx);
  setup_grassmann_test(app, ctx);
  setup_counting_lemma(app, ctx);
  setup_bilinear_spectrum(app, ctx);
  setup_covering(app, ctx);
  setup_outer_game(app, ctx);
  setup_composed_build(app, ctx);
  setup_composed_completeness(app, ctx);
  setup_extract_strategies(app, ctx);

  const auto t0 = std::chrono::steady_clock::now();
  const auto wall = [&t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         t0)
        .count();
  };
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const assertion_error& e) {
    ctx.assertions.push_back(
        {{"anchor", e.anchor}, {"outcome", "fail"}, {"message", e.what()}});
    ctx.exit_code = 2;
    return emit_record(ctx, wall());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return emit_record(ctx, wall());
}
