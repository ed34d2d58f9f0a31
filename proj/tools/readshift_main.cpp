// Command-line front door: classify spaces, build and extend constructions,
// re-verify certificates and lemma bounds, produce cyclicity witnesses and
// render reports. Exit codes: 0 success, 2 bad config or input, 3 horizon
// exceeded, 4 certificate or bound failure, 5 witness failure.

#include <cctype>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "readshift/serialize.hpp"
#include "readshift/shift_operator.hpp"

namespace rs = readshift;
using rs::json;

namespace {

struct SpaceArg {
  rs::Space sp = rs::Space::l2_power();
  std::string file_mode; // scalar_mode from a config file, if any
};

// A space argument is either a bare name or a JSON config {"space": name,
// "scalar_mode": optional}.
SpaceArg resolve_space(const std::string& arg) {
  if (arg.size() > 5 && arg.substr(arg.size() - 5) == ".json") {
    json j = rs::read_json_file(arg);
    if (!j.is_object() || !j.contains("space"))
      throw rs::config_error(arg + ": expected an object with a \"space\" name");
    SpaceArg out{rs::Space::from_name(j.at("space").get<std::string>()),
                 j.value("scalar_mode", "")};
    if (!out.file_mode.empty() && out.file_mode != "binary64" && out.file_mode != "rational")
      throw rs::config_error(arg + ": unknown scalar_mode \"" + out.file_mode + "\"");
    return out;
  }
  return {rs::Space::from_name(arg), ""};
}

// Vector literals are sums of c*e(n,k) / c*e(n) / c*e(0,k) terms with
// rational or decimal coefficients; bare e(...) means coefficient 1.
template <class S>
rs::FinVec<S> parse_vector_literal(const rs::Space& sp, const std::string& text) {
  std::string s;
  for (char ch : text)
    if (!std::isspace(static_cast<unsigned char>(ch))) s += ch;
  if (s.empty()) throw rs::config_error("empty vector literal");
  rs::FinVec<S> v;
  std::size_t i = 0;
  while (i < s.size()) {
    bool neg = false;
    if (s[i] == '+' || s[i] == '-') neg = s[i++] == '-';
    std::size_t start = i;
    int depth = 0;
    while (i < s.size() && (depth > 0 || (s[i] != '+' && s[i] != '-'))) {
      if (s[i] == '(') ++depth;
      if (s[i] == ')') --depth;
      ++i;
    }
    std::string term = s.substr(start, i - start);
    std::string coeff = "1", basis = term;
    if (auto star = term.find('*'); star != std::string::npos) {
      coeff = term.substr(0, star);
      basis = term.substr(star + 1);
    }
    if (basis.size() < 4 || basis.substr(0, 2) != "e(" || basis.back() != ')')
      throw rs::config_error("bad term \"" + term + "\": expected e(n) or e(n,k)");
    std::string args = basis.substr(2, basis.size() - 3);
    std::uint64_t idx = 0;
    try {
      if (auto comma = args.find(','); comma == std::string::npos) {
        idx = sp.encode_omega(std::stoull(args));
      } else {
        std::uint64_t a0 = std::stoull(args.substr(0, comma));
        std::uint64_t a1 = std::stoull(args.substr(comma + 1));
        idx = a0 == 0 ? sp.encode_sum_l2(a1) : sp.encode_pair(a0, a1);
      }
    } catch (const std::invalid_argument&) {
      throw rs::config_error("bad index in \"" + term + "\"");
    } catch (const std::out_of_range&) {
      throw rs::config_error("index out of range in \"" + term + "\"");
    }
    S c = rs::scalar_parse_human<S>(coeff);
    if (neg) c = -c;
    v.add(idx, c);
  }
  if (v.zero()) throw rs::config_error("vector literal sums to zero");
  return v;
}

void emit(const std::string& format, const json& j, const std::string& text) {
  if (format == "json") std::cout << j.dump(1) << '\n';
  else std::cout << text;
}

// ---- classify ----------------------------------------------------------

int run_classify(const std::string& space_arg, const std::string& format) {
  rs::Space sp = resolve_space(space_arg).sp;
  rs::IspVerdict v = rs::classify_isp(sp);
  std::string reason =
      v.satisfies
          ? fmt::format("every kernel from level {} on has finite codimension in the next",
                        *v.j0)
          : "infinite codimension at every level";
  json j{{"space", sp.name()}, {"isp", v.satisfies}, {"reason", reason}};
  if (v.j0) j["j0"] = *v.j0;
  if (!v.infinite_levels.empty()) {
    j["infinite_levels"] = v.infinite_levels;
    j["infinite_levels_cofinal"] = v.infinite_levels_cofinal;
  }
  emit(format, j, fmt::format("ISP: {} ({})\n", v.satisfies ? "yes" : "no", reason));
  return 0;
}

// ---- build -------------------------------------------------------------

template <class S>
json stage_summary(const rs::ConstructionState<S>& st) {
  json stages = json::array();
  for (std::uint32_t n = 1; n <= st.stages_done; ++n) {
    const auto& rep = st.certificates[n - 1];
    std::size_t passed = 0;
    for (const auto& c : rep.checks) passed += c.pass ? 1 : 0;
    stages.push_back(json{{"stage", n},
                          {"N", st.N[n]},
                          {"a", st.a[n]},
                          {"Delta_next", st.Delta[n + 1]},
                          {"s_next", st.s[n + 1]},
                          {"log2_D", rs::scalar_log2_abs(st.D[n])},
                          {"log2_L", rs::scalar_log2_abs(st.L[n])},
                          {"checks_passed", passed},
                          {"checks_total", rep.checks.size()}});
  }
  return stages;
}

template <class S>
std::string stage_table(const rs::ConstructionState<S>& st) {
  std::string out = fmt::format("{:>5} {:>4} {:>12} {:>12} {:>10} {:>10}  checks\n",
                                "stage", "N", "a_n", "Delta_next", "log2 D", "log2 L");
  for (std::uint32_t n = 1; n <= st.stages_done; ++n) {
    const auto& rep = st.certificates[n - 1];
    std::size_t passed = 0;
    for (const auto& c : rep.checks) passed += c.pass ? 1 : 0;
    out += fmt::format("{:>5} {:>4} {:>12} {:>12} {:>10.1f} {:>10.1f}  {}/{}\n", n,
                       st.N[n], st.a[n], st.Delta[n + 1], rs::scalar_log2_abs(st.D[n]),
                       rs::scalar_log2_abs(st.L[n]), passed, rep.checks.size());
  }
  return out;
}

template <class S>
int run_build(const rs::Space& sp, std::uint32_t stages, const std::string& out_path,
              const std::string& format) {
  auto st = rs::init_construction<S>(sp);
  while (st.stages_done < stages) st = rs::advance_stage(st);
  for (const auto& rep : st.certificates)
    for (const auto& c : rep.checks)
      if (!c.pass)
        throw rs::certificate_error(fmt::format("stage {}: {}", rep.stage, c.id));
  if (!out_path.empty()) rs::save_state(st, out_path);
  json j{{"space", sp.name()},
         {"scalar_mode", rs::scalar_mode_name<S>()},
         {"stages_done", st.stages_done},
         {"positions", st.pos_to_index.size()},
         {"stages", stage_summary(st)}};
  if (!out_path.empty()) j["out"] = out_path;
  std::string text =
      fmt::format("built {} stages on {} ({} mode), {} positions committed\n{}",
                  st.stages_done, sp.name(), rs::scalar_mode_name<S>(),
                  st.pos_to_index.size(), stage_table(st));
  if (!out_path.empty()) text += fmt::format("state written to {}\n", out_path);
  emit(format, j, text);
  return 0;
}

// ---- verify ------------------------------------------------------------

template <class S>
int run_verify(const rs::ConstructionState<S>& st, std::uint64_t seed,
               const std::string& format) {
  std::vector<std::string> failures;
  json cert_json = json::array();

  // Certificates first: the derived-constant replay divides by alphas and
  // must not run on a state whose certificates already fail.
  for (std::uint32_t n = 1; n <= st.stages_done; ++n) {
    auto rep = rs::verify_certificates(st, n);
    json checks = json::array();
    for (const auto& c : rep.checks) {
      if (!c.pass) failures.push_back(fmt::format("stage {}: {}", n, c.id));
      json cj{{"id", c.id}, {"count", c.count}, {"pass", c.pass}};
      if (c.have_margin) cj["margin"] = rs::scalar_str(c.margin);
      checks.push_back(cj);
    }
    cert_json.push_back(json{{"stage", n}, {"checks", checks}});
  }
  if (!failures.empty()) {
    std::string msg;
    for (const auto& f : failures) msg += (msg.empty() ? "" : "; ") + f;
    emit(format, json{{"pass", false}, {"certificates", cert_json}},
         "certificate failures: " + msg + "\n");
    throw rs::certificate_error(msg);
  }

  for (std::uint32_t n = 1; n <= st.stages_done; ++n) {
    if (!(rs::certify_D(st, n) == st.D[n]))
      throw rs::certificate_error(fmt::format("stage {}: stored D does not replay", n));
    if (!(rs::continuity_constant(st, n) == st.L[n]))
      throw rs::certificate_error(fmt::format("stage {}: stored L does not replay", n));
  }

  auto suites = rs::run_verification_suites(st, seed, 100);
  json suite_json = json::array();
  std::string suite_text;
  for (const auto& o : suites) {
    suite_json.push_back(json{{"name", o.name},
                              {"trials", o.trials},
                              {"failures", o.failures},
                              {"worst_margin", o.worst_margin},
                              {"note", o.note}});
    suite_text += fmt::format("  {:<28} {:>4} trials  {} failures{}\n", o.name, o.trials,
                              o.failures, o.note.empty() ? "" : "  (" + o.note + ")");
    if (!o.pass()) failures.push_back("suite " + o.name);
  }
  bool pass = failures.empty();
  json j{{"pass", pass},
         {"seed", seed},
         {"certificates", cert_json},
         {"replay", "D and L match"},
         {"suites", suite_json}};
  std::string text = fmt::format(
      "certificates: all pass across {} stages\nderived constants: replay exactly\n{}",
      st.stages_done, suite_text);
  text += pass ? "verify: PASS\n" : "verify: FAIL\n";
  emit(format, j, text);
  if (!pass) {
    std::string msg;
    for (const auto& f : failures) msg += (msg.empty() ? "" : "; ") + f;
    throw rs::certificate_error(msg);
  }
  return 0;
}

// ---- cyclic ------------------------------------------------------------

template <class S>
int run_cyclic(const rs::ConstructionState<S>& st, const std::string& vector_text,
               std::uint32_t normN, const std::string& eps_text,
               const std::string& out_path, const std::string& format) {
  rs::FinVec<S> x = parse_vector_literal<S>(st.space, vector_text);
  S eps = rs::scalar_parse_human<S>(eps_text);
  auto w = rs::cyclic_approx(st, x, normN, eps); // throws witness_error if no stage fits
  if (!out_path.empty()) rs::write_json_file(out_path, rs::witness_to_json(w, x, eps, st));
  json j{{"stage", w.n},
         {"norm", w.normN},
         {"M", rs::scalar_str(w.M)},
         {"terms", w.Q.coef.size()},
         {"degree", w.Q.deg()},
         {"achieved", rs::scalar_str(w.achieved)},
         {"achieved_approx", rs::detail::margin_as_double(w.achieved)},
         {"apriori", rs::scalar_str(w.apriori)},
         {"ok", w.ok},
         {"budget_flag", w.budget_flag},
         {"ill_conditioned", w.ill_conditioned}};
  if (!out_path.empty()) j["out"] = out_path;
  std::string text = fmt::format(
      "stage {} polynomial, degree {}, {} terms\nachieved error {} (~{:.3g}), target {}\n",
      w.n, w.Q.deg(), w.Q.coef.size(), rs::scalar_str(w.achieved),
      rs::detail::margin_as_double(w.achieved), eps_text);
  if (!out_path.empty()) text += fmt::format("witness written to {}\n", out_path);
  text += w.ok ? "cyclic: PASS\n" : "cyclic: FAIL (achieved error exceeds eps)\n";
  emit(format, j, text);
  if (!w.ok) throw rs::witness_error("achieved error exceeds eps at every committed stage");
  return 0;
}

// ---- report ------------------------------------------------------------

template <class S>
int report_state(const rs::ConstructionState<S>& st, const std::string& format) {
  json stages = json::array();
  std::string text = fmt::format("{} in {} mode, {} stages, horizon {}\n", st.space.name(),
                                 rs::scalar_mode_name<S>(), st.stages_done, st.horizon());
  text += fmt::format("{:>5} {:>4} {:>12} {:>12} {:>10} {:>10}  worst margin\n", "stage",
                      "N", "a_n", "Delta_next", "log2 D", "log2 L");
  for (std::uint32_t n = 1; n <= st.stages_done; ++n) {
    auto rep = rs::verify_certificates(st, n);
    bool any = false;
    double worst = 0;
    bool all_pass = true;
    for (const auto& c : rep.checks) {
      all_pass = all_pass && c.pass;
      if (!c.have_margin) continue;
      double m = rs::detail::margin_as_double(c.margin);
      if (!any || m < worst) worst = m;
      any = true;
    }
    stages.push_back(json{{"stage", n},
                          {"N", st.N[n]},
                          {"a", st.a[n]},
                          {"Delta_next", st.Delta[n + 1]},
                          {"log2_D", rs::scalar_log2_abs(st.D[n])},
                          {"log2_L", rs::scalar_log2_abs(st.L[n])},
                          {"all_pass", all_pass},
                          {"worst_margin", worst}});
    text += fmt::format("{:>5} {:>4} {:>12} {:>12} {:>10.1f} {:>10.1f}  {:.3g}{}\n", n,
                        st.N[n], st.a[n], st.Delta[n + 1], rs::scalar_log2_abs(st.D[n]),
                        rs::scalar_log2_abs(st.L[n]), worst, all_pass ? "" : "  FAIL");
  }
  auto pr = rs::project_next_stage(st);
  json proj{{"next_stage", pr.next_stage},
            {"lower_anchor_index", pr.lower_anchor_index},
            {"lower_positions", pr.lower_positions},
            {"within_position_cap", pr.within_position_cap}};
  text += fmt::format(
      "next stage {}: needs >= {:.3g} positions (anchor index >= {:.3g}); {}\n",
      pr.next_stage, pr.lower_positions, pr.lower_anchor_index,
      pr.within_position_cap ? "within the position cap" : "beyond the position cap");
  emit(format, json{{"kind", "state"}, {"space", st.space.name()},
                    {"scalar_mode", rs::scalar_mode_name<S>()},
                    {"stages_done", st.stages_done}, {"horizon", st.horizon()},
                    {"stages", stages}, {"projection", proj}},
       text);
  return 0;
}

template <class S>
int report_witness(const json& wj, const std::string& state_path,
                   const std::string& format) {
  rs::StoredWitness<S> sw = rs::witness_from_json<S>(wj);
  json j{{"kind", "witness"},
         {"stage", sw.w.n},
         {"norm", sw.w.normN},
         {"eps", rs::scalar_str(sw.eps)},
         {"achieved", rs::scalar_str(sw.w.achieved)},
         {"apriori", rs::scalar_str(sw.w.apriori)},
         {"degree", sw.w.Q.deg()},
         {"terms", sw.w.Q.coef.size()},
         {"ok", sw.w.ok}};
  std::string text = fmt::format(
      "cyclicity witness: stage {}, norm {}, degree {}, achieved {} vs eps {}\n", sw.w.n,
      sw.w.normN, sw.w.Q.deg(), rs::scalar_str(sw.w.achieved), rs::scalar_str(sw.eps));
  bool replay_ok = true;
  if (!state_path.empty()) {
    auto st = rs::load_state<S>(state_path);
    if (rs::state_to_json(st).at("digest") != sw.state_digest)
      throw rs::config_error("witness was produced from a different state file");
    S replay = rs::replay_witness_error(st, sw.w, sw.x);
    replay_ok = replay == sw.w.achieved;
    j["replayed"] = rs::scalar_str(replay);
    j["replay_match"] = replay_ok;
    text += fmt::format("independent replay: {} ({})\n", rs::scalar_str(replay),
                        replay_ok ? "matches" : "MISMATCH");
  }
  bool pass = sw.w.ok && replay_ok;
  j["pass"] = pass;
  text += pass ? "report: PASS\n" : "report: FAIL\n";
  emit(format, j, text);
  if (!pass) throw rs::witness_error(replay_ok ? "stored witness does not meet its eps"
                                               : "stored achieved error does not replay");
  return 0;
}

int run_report(const std::string& path, const std::string& state_path,
               const std::string& format) {
  json j = rs::read_json_file(path);
  std::string kind = j.value("format", "");
  std::string mode = rs::file_scalar_mode(j);
  if (kind == "readshift-state") {
    if (!state_path.empty()) throw rs::config_error("--state only applies to witness files");
    return mode == "rational" ? report_state(rs::state_from_json<rs::Rat>(j), format)
                              : report_state(rs::state_from_json<rs::Fp>(j), format);
  }
  if (kind == "readshift-witness") {
    return mode == "rational" ? report_witness<rs::Rat>(j, state_path, format)
                              : report_witness<rs::Fp>(j, state_path, format);
  }
  throw rs::config_error(path + ": not a state or witness file");
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"construction and verification lab for a Read-type operator"};
  app.require_subcommand(1);
  std::string format = "text";
  app.add_option("--format", format, "output format")
      ->check(CLI::IsMember({"text", "json"}))
      ->capture_default_str();

  std::string space_arg, out_path, vector_text, eps_text = "0.25", state_arg, file_arg;
  std::string scalar_mode, state_path;
  std::uint32_t stages = 1, normN = 1;
  std::uint64_t seed = 1;
  int rc = 0;

  auto* classify = app.add_subcommand("classify", "decide the isomorphic subspace property");
  classify->add_option("space", space_arg, "space name or config JSON")->required();
  classify->callback([&] { rc = run_classify(space_arg, format); });

  auto* build = app.add_subcommand("build", "run the construction and write a state file");
  build->add_option("space", space_arg, "space name or config JSON")->required();
  build->add_option("--stages", stages, "stage count to commit")->required()
      ->check(CLI::Range(std::uint32_t{1}, std::uint32_t{64}));
  build->add_option("--out", out_path, "state file to write");
  build->add_option("--scalar-mode", scalar_mode, "binary64 or rational")
      ->check(CLI::IsMember({"binary64", "rational"}));
  build->add_option("--seed", seed, "accepted for interface symmetry; the build is deterministic");
  build->callback([&] {
    SpaceArg sa = resolve_space(space_arg);
    std::string mode = !scalar_mode.empty() ? scalar_mode
                       : !sa.file_mode.empty() ? sa.file_mode
                                               : "binary64";
    rc = mode == "rational" ? run_build<rs::Rat>(sa.sp, stages, out_path, format)
                            : run_build<rs::Fp>(sa.sp, stages, out_path, format);
  });

  auto* verify = app.add_subcommand("verify", "re-check certificates and lemma bounds");
  verify->add_option("state", state_arg, "state file")->required();
  verify->add_option("--seed", seed, "seed for the randomized suites")
      ->capture_default_str();
  verify->callback([&] {
    json j = rs::read_json_file(state_arg);
    rc = rs::file_scalar_mode(j) == "rational"
             ? run_verify(rs::state_from_json<rs::Rat>(j), seed, format)
             : run_verify(rs::state_from_json<rs::Fp>(j), seed, format);
  });

  auto* cyclic = app.add_subcommand("cyclic", "produce a cyclicity witness");
  cyclic->add_option("state", state_arg, "state file")->required();
  cyclic->add_option("--vector", vector_text, "input vector literal, e.g. \"e(1,0)+e(2,3)\"")
      ->required();
  cyclic->add_option("--norm", normN, "seminorm level N")->capture_default_str();
  cyclic->add_option("--eps", eps_text, "target error")->capture_default_str();
  cyclic->add_option("--out", out_path, "witness file to write");
  cyclic->callback([&] {
    json j = rs::read_json_file(state_arg);
    rc = rs::file_scalar_mode(j) == "rational"
             ? run_cyclic(rs::state_from_json<rs::Rat>(j), vector_text, normN, eps_text,
                          out_path, format)
             : run_cyclic(rs::state_from_json<rs::Fp>(j), vector_text, normN, eps_text,
                          out_path, format);
  });

  auto* report = app.add_subcommand("report", "summarize a state or witness file");
  report->add_option("file", file_arg, "state or witness file")->required();
  report->add_option("--state", state_path, "state file to replay a witness against");
  report->callback([&] { rc = run_report(file_arg, state_path, format); });

  // Shared flags like --format may be given after the subcommand name.
  for (auto* sub : {classify, build, verify, cyclic, report}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const rs::error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return rc;
}
