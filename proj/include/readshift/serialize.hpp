#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "readshift/analysis.hpp"
#include "readshift/construction.hpp"

namespace readshift {

using json = nlohmann::json;

// FNV-1a over the canonical (sorted-key, compact) dump of the payload.
// Guards against truncated or accidentally edited files; deliberate edits
// go through save again, which recomputes it.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string digest_of(const json& payload) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(payload.dump())));
  return buf;
}

// Digest over the document minus its own digest field, so the value can be
// stored inside the document it covers.
inline std::string envelope_digest(json j) {
  j.erase("digest");
  return digest_of(j);
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw config_error(path + ": not valid JSON");
  return j;
}

inline void write_json_file(const std::string& path, json j) {
  j["digest"] = envelope_digest(j);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw config_error("cannot write " + path);
  out << j.dump(1) << '\n';
  if (!out) throw config_error("write failed for " + path);
}

inline void check_envelope(const json& j, const std::string& format) {
  if (!j.is_object() || j.value("format", "") != format)
    throw config_error("expected a \"" + format + "\" file");
  if (j.value("version", 0) != 1) throw config_error("unsupported file version");
  if (j.value("digest", "") != envelope_digest(j))
    throw config_error("digest mismatch: the file was edited or truncated");
}

inline std::string file_scalar_mode(const json& j) {
  std::string m = j.value("scalar_mode", "");
  if (m != "binary64" && m != "rational")
    throw config_error("unknown scalar_mode \"" + m + "\"");
  return m;
}

template <class S>
std::vector<std::string> scalars_to_strings(const std::vector<S>& v) {
  std::vector<std::string> out;
  out.reserve(v.size());
  for (const auto& x : v) out.push_back(scalar_str(x));
  return out;
}

template <class S>
std::vector<S> scalars_from_strings(const std::vector<std::string>& v) {
  std::vector<S> out;
  out.reserve(v.size());
  for (const auto& s : v) out.push_back(scalar_parse<S>(s));
  return out;
}

template <class S>
json state_to_json(const ConstructionState<S>& st) {
  json j;
  j["format"] = "readshift-state";
  j["version"] = 1;
  j["scalar_mode"] = scalar_mode_name<S>();
  j["space"] = st.space.name();
  j["stages_done"] = st.stages_done;
  j["Delta"] = st.Delta;
  j["a"] = st.a;
  j["s"] = st.s;
  j["N"] = st.N;
  j["D"] = scalars_to_strings(st.D);
  j["L"] = scalars_to_strings(st.L);
  j["pos_to_index"] = st.pos_to_index;
  j["alpha"] = scalars_to_strings(st.alpha);
  j["digest"] = envelope_digest(j);
  return j;
}

template <class S>
ConstructionState<S> state_from_json(const json& j) {
  check_envelope(j, "readshift-state");
  if (file_scalar_mode(j) != scalar_mode_name<S>())
    throw config_error("state file is in " + file_scalar_mode(j) + " mode");
  ConstructionState<S> st;
  st.space = Space::from_name(j.at("space").get<std::string>());
  st.stages_done = j.at("stages_done").get<std::uint32_t>();
  st.Delta = j.at("Delta").get<std::vector<std::uint64_t>>();
  st.a = j.at("a").get<std::vector<std::uint64_t>>();
  st.s = j.at("s").get<std::vector<std::uint64_t>>();
  st.N = j.at("N").get<std::vector<std::uint32_t>>();
  st.D = scalars_from_strings<S>(j.at("D").get<std::vector<std::string>>());
  st.L = scalars_from_strings<S>(j.at("L").get<std::vector<std::string>>());
  st.pos_to_index = j.at("pos_to_index").get<std::vector<std::uint64_t>>();
  st.alpha = scalars_from_strings<S>(j.at("alpha").get<std::vector<std::string>>());

  const std::uint32_t n = st.stages_done;
  if (n < 1 || st.Delta.size() != n + 2 || st.a.size() != n + 1 || st.s.size() != n + 2 ||
      st.N.size() != n + 1 || st.D.size() != n + 1 || st.L.size() != n + 1)
    throw config_error("state file: stage tables have inconsistent lengths");
  if (st.pos_to_index.size() != st.Delta[n + 1] ||
      st.alpha.size() != st.pos_to_index.size())
    throw config_error("state file: position tables do not cover the horizon");

  st.level_by_pos.reserve(st.pos_to_index.size());
  for (std::uint64_t pos = 0; pos < st.pos_to_index.size(); ++pos) {
    std::uint64_t idx = st.pos_to_index[pos];
    st.level_by_pos.push_back(st.space.level_of(idx));
    if (!st.index_to_pos.emplace(idx, pos).second)
      throw config_error("state file: basis index " + std::to_string(idx) +
                         " assigned twice");
  }
  return st;
}

template <class S>
void save_state(const ConstructionState<S>& st, const std::string& path) {
  write_json_file(path, state_to_json(st));
}

template <class S>
ConstructionState<S> load_state(const std::string& path) {
  return state_from_json<S>(read_json_file(path));
}

template <class S>
json poly_to_json(const Poly<S>& p) {
  json a = json::array();
  for (const auto& [d, c] : p.coef) a.push_back(json::array({d, scalar_str(c)}));
  return a;
}

template <class S>
Poly<S> poly_from_json(const json& a) {
  Poly<S> p;
  for (const auto& term : a)
    p.set(term.at(0).get<std::uint64_t>(), scalar_parse<S>(term.at(1).get<std::string>()));
  return p;
}

template <class S>
json finvec_to_json(const FinVec<S>& v) {
  json a = json::array();
  for (const auto& [i, c] : v.c) a.push_back(json::array({i, scalar_str(c)}));
  return a;
}

template <class S>
FinVec<S> finvec_from_json(const json& a) {
  FinVec<S> v;
  for (const auto& term : a)
    v.set(term.at(0).get<std::uint64_t>(), scalar_parse<S>(term.at(1).get<std::string>()));
  return v;
}

template <class S>
json witness_to_json(const CyclicityWitness<S>& w, const FinVec<S>& x, const S& eps,
                     const ConstructionState<S>& st) {
  json j;
  j["format"] = "readshift-witness";
  j["version"] = 1;
  j["kind"] = "cyclic";
  j["scalar_mode"] = scalar_mode_name<S>();
  j["space"] = st.space.name();
  j["state_digest"] = state_to_json(st).at("digest");
  j["stage"] = w.n;
  j["norm"] = w.normN;
  j["eps"] = scalar_str(eps);
  j["M"] = scalar_str(w.M);
  j["Q"] = poly_to_json(w.Q);
  j["vector"] = finvec_to_json(x);
  j["achieved"] = scalar_str(w.achieved);
  j["apriori"] = scalar_str(w.apriori);
  j["ok"] = w.ok;
  j["budget_flag"] = w.budget_flag;
  j["ill_conditioned"] = w.ill_conditioned;
  j["digest"] = envelope_digest(j);
  return j;
}

template <class S>
struct StoredWitness {
  CyclicityWitness<S> w;
  FinVec<S> x;
  S eps{};
  std::string state_digest;
};

template <class S>
StoredWitness<S> witness_from_json(const json& j) {
  check_envelope(j, "readshift-witness");
  if (file_scalar_mode(j) != scalar_mode_name<S>())
    throw config_error("witness file is in " + file_scalar_mode(j) + " mode");
  if (j.value("kind", "") != "cyclic") throw config_error("unknown witness kind");
  StoredWitness<S> out;
  out.w.n = j.at("stage").get<std::uint32_t>();
  out.w.normN = j.at("norm").get<std::uint32_t>();
  out.w.M = scalar_parse<S>(j.at("M").get<std::string>());
  out.w.Q = poly_from_json<S>(j.at("Q"));
  out.w.achieved = scalar_parse<S>(j.at("achieved").get<std::string>());
  out.w.apriori = scalar_parse<S>(j.at("apriori").get<std::string>());
  out.w.ok = j.at("ok").get<bool>();
  out.w.budget_flag = j.at("budget_flag").get<bool>();
  out.w.ill_conditioned = j.at("ill_conditioned").get<bool>();
  out.x = finvec_from_json<S>(j.at("vector"));
  out.eps = scalar_parse<S>(j.at("eps").get<std::string>());
  out.state_digest = j.at("state_digest").get<std::string>();
  return out;
}

} // namespace readshift
