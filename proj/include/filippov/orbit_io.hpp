#pragma once

// Orbit CSV export and JSON serialization of reports.

#include <cstdio>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "filippov/analysis.hpp"
#include "filippov/classify.hpp"
#include "filippov/orbit.hpp"

namespace filippov {

using json = nlohmann::json;

inline constexpr const char* kOrbitCsvHeader = "t,x,y,z,mode,region_or_circle,arc_index";

inline json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

/// One row per sample, full double precision.
inline void write_orbit_csv(std::ostream& os, const FilippovOrbit& orbit) {
  os << kOrbitCsvHeader << '\n';
  char buf[160];
  for (std::size_t i = 0; i < orbit.arcs.size(); ++i) {
    const OrbitArc& arc = orbit.arcs[i];
    for (const OrbitSample& s : arc.samples) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%s,%d,%zu\n", s.t, s.p.x(), s.p.y(), s.p.z(),
                    to_string(arc.mode), arc.id, i);
      os << buf;
    }
  }
}

inline json to_json(const BranchDecision& d) {
  json j{{"kind", d.kind == DecisionKind::Default ? "default"
                  : d.kind == DecisionKind::Stay  ? "stay"
                  : d.kind == DecisionKind::Exit  ? "exit"
                                                  : "dwell"}};
  if (d.kind == DecisionKind::Exit || d.kind == DecisionKind::Dwell) j["side"] = to_string(d.side);
  if (d.kind == DecisionKind::Dwell) j["dwell"] = d.dwell;
  return j;
}

inline json to_json(const TerminalEvent& e) {
  json j{{"kind", to_string(e.kind)}, {"circle", e.circle}};
  if (e.side) j["side"] = to_string(*e.side);
  if (e.grazing) j["grazing"] = true;
  return j;
}

/// Sidecar for an orbit: the branch log plus a summary of the arcs.
inline json orbit_sidecar(const FilippovOrbit& orbit) {
  json log = json::array();
  for (const BranchRecord& r : orbit.branch_log) {
    log.push_back({{"t", r.t},
                   {"point", to_json(r.point)},
                   {"circle", r.circle},
                   {"encounter", r.encounter == EncounterKind::Escaping ? "escaping" : "tangency"},
                   {"decision", to_json(r.decision)}});
  }
  json arcs = json::array();
  for (const OrbitArc& a : orbit.arcs) {
    arcs.push_back({{"mode", to_string(a.mode)},
                    {"id", a.id},
                    {"t_start", a.t_start},
                    {"t_end", a.t_end},
                    {"terminal", to_json(a.terminal)}});
  }
  return {{"initial", to_json(orbit.initial)},
          {"t_end", orbit.t_end()},
          {"end", to_json(orbit.end)},
          {"arcs", arcs},
          {"branch_log", log}};
}

inline json to_json(const SideContact& c) {
  return {{"order", c.order}, {"value", c.value}, {"visibility", to_string(c.visibility)}};
}

inline json to_json(const TangencyInfo& t) {
  json orders = json::object();
  json vis = json::object();
  for (Side s : {Side::Above, Side::Below}) {
    if (const auto& c = t.contact(s)) {
      orders[to_string(s)] = c->order;
      vis[to_string(s)] = to_string(c->visibility);
    }
  }
  return {{"point", to_json(t.point.vec())},
          {"circle", t.circle.value},
          {"phi", t.phi},
          {"orders", orders},
          {"visibility", vis},
          {"double_type", to_string(t.double_type)}};
}

inline json to_json(const ProbeConfig& c) {
  return {{"n", c.n}, {"epsilon", c.epsilon}, {"horizon", c.horizon}, {"budget", c.budget}, {"seed", c.seed}};
}

inline json to_json(const ProbeReport& r) {
  json unreached = json::array();
  for (const auto& [u, v] : r.unreached) unreached.push_back({u, v});
  json certs = json::array();
  for (const Certificate& c : r.certificates) certs.push_back({{"kind", c.kind}, {"detail", c.detail}});
  json witnesses = json::array();
  for (const Witness& w : r.witnesses) {
    json ds = json::array();
    for (const BranchDecision& d : w.decisions) ds.push_back(to_json(d));
    witnesses.push_back({{"from", w.from}, {"to", w.to}, {"time", w.time}, {"decisions", ds}});
  }
  std::size_t edges = 0;
  for (const auto& row : r.reach) edges += static_cast<std::size_t>(std::count(row.begin(), row.end(), true));
  return {{"config", to_json(r.config)},
          {"verdict", to_string(r.verdict)},
          {"strongly_connected", r.strongly_connected},
          {"reached_pairs", edges},
          {"unreached_count", r.unreached_count},
          {"unreached", unreached},
          {"certificates", certs},
          {"witnesses", witnesses},
          {"states", r.states},
          {"segments", r.segments}};
}

/// Reachability as an adjacency list: one line per node, "u: v1 v2 ...".
inline void write_adjacency(std::ostream& os, const ProbeReport& r) {
  for (std::size_t u = 0; u < r.reach.size(); ++u) {
    os << u << ':';
    for (std::size_t v = 0; v < r.reach[u].size(); ++v) {
      if (r.reach[u][v]) os << ' ' << v;
    }
    os << '\n';
  }
}

inline json to_json(const SweepRow& r) {
  return {{"theta", r.theta},
          {"verdict", to_string(r.verdict)},
          {"tangency_count", r.tangency_count},
          {"crossing_empty", r.crossing_empty},
          {"equilibrium", r.equilibrium},
          {"diagnostic", r.diagnostic},
          {"unreached_count", r.unreached_count}};
}

inline json to_json(const TwoZoneReport& r) {
  json e1 = json::array(), e2 = json::array();
  for (const Vec3& e : r.equilibria_1) e1.push_back(to_json(e));
  for (const Vec3& e : r.equilibria_2) e2.push_back(to_json(e));
  return {{"case", to_string(r.label)},
          {"verdict", to_string(r.verdict)},
          {"explanation", r.explanation},
          {"equilibria_1", e1},
          {"equilibria_2", e2},
          {"probe", to_json(r.probe)}};
}

inline json to_json(const ConnectionData& c) {
  return {{"t_a", to_json(c.t_a)},
          {"t_b", to_json(c.t_b)},
          {"arrival_time", c.arrival_time},
          {"offset", c.offset},
          {"reference_time", c.reference_time},
          {"offset_at_reference", c.offset_at_reference}};
}

inline json to_json(const RobustnessReport& r) {
  json j{{"before", to_json(r.before)},
         {"after", to_json(r.after)},
         {"delta_time", r.delta_time},
         {"delta_offset", r.delta_offset},
         {"perturbation_sup", r.perturbation_sup}};
  if (r.verdict_before) j["verdict_before"] = to_string(*r.verdict_before);
  if (r.verdict_after) j["verdict_after"] = to_string(*r.verdict_after);
  return j;
}

inline json to_json(const EvidenceReport& r) {
  json segs = json::array();
  for (const Segment& s : r.segments) {
    segs.push_back({{"circle", s.circle.value}, {"class", to_string(s.kind)}, {"phi", {s.phi_begin, s.phi_end}}});
  }
  json ws = json::array();
  for (const EvidenceWitness& w : r.witnesses) {
    json ds = json::array();
    for (const BranchRecord& b : w.log) ds.push_back(to_json(b.decision));
    ws.push_back({{"escaping", w.escaping}, {"sliding", w.sliding}, {"decisions", ds}});
  }
  return {{"sliding_samples", r.sliding_samples},
          {"escaping_samples", r.escaping_samples},
          {"segments", segs},
          {"witnesses", ws}};
}

} // namespace filippov
