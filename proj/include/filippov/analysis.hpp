#pragma once

// Experiments on top of the orbit engine: closed-form oracles, the
// reachability probe, theta sweeps, sliding/escaping evidence, the two-zone
// linear checker and the bump perturbation experiment.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <queue>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "filippov/orbit.hpp"

namespace filippov {

// ---------------------------------------------------------------------------
// Closed-form flows of the three-zone example at theta = pi/3

enum class ModelField { X, Y };

inline Vec3 closed_form_flow(ModelField which, double t, const Vec3& p) {
  const double x = p.x(), y = p.y(), z = p.z();
  const double c = std::cos(t), s = std::sin(t);
  if (which == ModelField::X) return Vec3(x * c + z * s, y, z * c - x * s);
  const double r3 = std::sqrt(3.0);
  return Vec3(x * c - 0.5 * (r3 * y + z) * s,
              0.25 * (y + 3.0 * y * c + r3 * (z * (-1.0 + c) + 2.0 * x * s)),
              0.25 * (3.0 * z + r3 * y * (-1.0 + c) + z * c + 2.0 * x * s));
}

// ---------------------------------------------------------------------------
// Probe configuration and report

struct ProbeConfig {
  int n = 200;
  double epsilon = 0.25;
  double horizon = 200.0;
  int budget = 4;
  unsigned long long seed = 0;
  int threads = 0;  // 0: FILIPPOV_THREADS or the hardware count

  void validate() const {
    if (n < 12) throw Error(ErrorCode::InvalidInput, "probe net needs at least 12 nodes");
    if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidInput, "epsilon must be positive");
    // balls must cover the sphere: spacing of the spiral net is about sqrt(4 pi / n)
    if (!(epsilon > 0.5 * std::sqrt(4.0 * kPi / n))) {
      throw Error(ErrorCode::InvalidInput, "epsilon must exceed half the net spacing");
    }
    if (!(horizon > 0.0)) throw Error(ErrorCode::InvalidInput, "horizon must be positive");
    if (budget < 1) throw Error(ErrorCode::InvalidInput, "branch budget must be at least 1");
  }
};

inline int worker_count(int requested) {
  int n = requested;
  if (n <= 0) {
    n = static_cast<int>(std::thread::hardware_concurrency());
    if (const char* env = std::getenv("FILIPPOV_THREADS")) {
      const int cap = std::atoi(env);
      if (cap > 0) n = std::min(n, cap);
    }
  }
  return std::max(1, n);
}

/// Runs body(i) for i in [0, count) on up to `threads` workers.
inline void parallel_for(int count, int threads, const std::function<void(int)>& body) {
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex m;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(m);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// An invariant set that rules out transitivity on its own.
struct Certificate {
  std::string kind;  // real-equilibrium | equilibrium-on-sigma | invariant-circle
  std::string detail;
};

/// Invariant sets read off the fields: real equilibria, equilibria on a
/// circle, and whole orbits of a rotation field inside a single region.
inline std::vector<Certificate> blocking_certificates(const Psvf& psvf) {
  std::vector<Certificate> out;
  char buf[200];
  for (int ri = 1; ri <= psvf.region_count(); ++ri) {
    const RegionId r{ri};
    const FieldHandle& f = psvf.field(r);
    const auto& signs = psvf.regions()[static_cast<std::size_t>(r.index())].signs;
    auto inside = [&](const Vec3& p, double margin) {
      for (std::size_t i = 0; i < signs.size(); ++i) {
        if (signs[i] * psvf.circles()[i].gamma(p) <= margin) return false;
      }
      return true;
    };
    for (const Vec3& e : f->equilibria()) {
      double dmin = 1e9;
      for (const auto& c : psvf.circles()) dmin = std::min(dmin, std::abs(c.gamma(e)));
      if (dmin <= tol::kOffCircle) {
        std::snprintf(buf, sizeof buf, "%s vanishes at (%.6f, %.6f, %.6f) on a switching circle",
                      f->label().c_str(), e.x(), e.y(), e.z());
        out.push_back({"equilibrium-on-sigma", buf});
      } else if (inside(e, 0.0)) {
        std::snprintf(buf, sizeof buf, "%s has a center at (%.6f, %.6f, %.6f) inside region %d",
                      f->label().c_str(), e.x(), e.y(), e.z(), ri);
        out.push_back({"real-equilibrium", buf});
      }
    }
    // orbits of a rotation field are the circles <w, p> = alpha
    const LinearField* lin = dynamic_cast<const LinearField*>(f.get());
    const BumpedField* bumped = dynamic_cast<const BumpedField*>(f.get());
    if (bumped) lin = dynamic_cast<const LinearField*>(bumped->base().get());
    if (!lin || lin->axis().norm() < 1e-12) continue;
    const Vec3 w = lin->axis().normalized();
    constexpr int kLevels = 4000;
    for (int k = 1; k < kLevels; ++k) {
      const double alpha = -1.0 + 2.0 * k / kLevels;
      const PlaneCircle orbit(w, alpha, 0);
      bool clear = true;
      for (const auto& c : psvf.circles()) clear = clear && !circles_intersect(orbit, c);
      if (!clear || !inside(circle_point(orbit, 0.0), 0.0)) continue;
      if (bumped && distance_to_circle(orbit, bumped->bump().center.vec()) <= bumped->bump().radius) continue;
      std::snprintf(buf, sizeof buf, "%s has the closed orbit <w,p> = %.4f inside region %d", f->label().c_str(),
                    alpha, ri);
      out.push_back({"invariant-circle", buf});
      break;
    }
  }
  return out;
}

enum class Verdict { TransitiveEvidence, Fails };

inline const char* to_string(Verdict v) {
  return v == Verdict::TransitiveEvidence ? "TransitiveEvidence" : "Fails";
}

struct Witness {
  int from;
  int to;
  double time;                           // first time within epsilon of the target
  std::vector<BranchDecision> decisions;  // replay these from the start node
};

struct ProbeReport {
  ProbeConfig config;
  std::vector<Vec3> nodes;
  std::vector<std::vector<bool>> reach;  // reach[u][v]
  Verdict verdict = Verdict::Fails;
  std::size_t unreached_count = 0;
  std::vector<std::pair<int, int>> unreached;  // first pairs, capped
  bool strongly_connected = false;
  std::vector<Certificate> certificates;
  std::vector<Witness> witnesses;
  std::size_t states = 0;    // distinct branch prefixes explored
  std::size_t segments = 0;  // integrated orbit pieces
};

namespace detail {

/// Branch-prefix graph shared by every start node of one probe. Vertices are
/// start nodes and canonical encounters; each edge is one integrated orbit
/// piece together with the net nodes it passes and the encounter it stops at.
class ProbeGraph {
 public:
  using Key = std::tuple<int, int, long long, int, int>;  // kind, circle, position, exits, phase

  struct Edge {
    std::vector<std::pair<int, double>> reach;  // net node, earliest offset
    std::optional<std::pair<Key, double>> next;
    BranchDecision decision;
  };

  ProbeGraph(const OrbitEngine& engine, const ProbeConfig& cfg, std::vector<Vec3> nodes)
      : engine_(engine), cfg_(cfg), nodes_(std::move(nodes)), cos_eps_(std::cos(cfg.epsilon)) {}

  static Key start_key(int u) { return Key{0, u, 0, 0, 0}; }

  /// Integrates the start segments (in parallel) and registers their encounters.
  void build_starts(int threads) {
    const std::size_t n = nodes_.size();
    std::vector<FilippovOrbit> orbits(n);
    std::vector<Edge> edges(n);
    parallel_for(static_cast<int>(n), threads, [&](int i) {
      const auto k = static_cast<std::size_t>(i);
      orbits[k] = orbit_prefix(engine_, nodes_[k], cfg_.horizon);
      edges[k].reach = reach_of(orbits[k]);
    });
    for (std::size_t k = 0; k < n; ++k) {
      if (orbits[k].pending) edges[k].next = {register_encounter(*orbits[k].pending, 0), orbits[k].pending->t};
      edges_.emplace(start_key(static_cast<int>(k)), std::vector<Edge>{std::move(edges[k])});
    }
    segments_ += n;
  }

  const std::vector<Edge>& edges(const Key& k) {
    auto it = edges_.find(k);
    if (it != edges_.end()) return it->second;
    if (++expanded_ > 1000000) throw Error(ErrorCode::BudgetOverflow, "more than 1e6 branch prefixes");
    const Encounter enc = encounters_.at(k);
    const int phase = std::get<4>(k);
    const int child = (phase + 1) % kDwellPhases;
    std::vector<Edge> out;
    for (const BranchDecision& d : branch_options(engine_, enc, cfg_.budget, cfg_.horizon,
                                                  static_cast<std::size_t>(phase))) {
      Edge e;
      e.decision = d;
      if (d.kind == DecisionKind::Dwell) {
        const OrbitArc arc = engine_.slide(enc.circle, enc.point, d.dwell, ArcMode::EscapingSlide, 0.0);
        e.reach = reach_of(arc.samples);
        if (arc.terminal.kind == TerminalKind::HorizonReached) {
          if (auto c = engine_.encounter_at(arc.last())) e.next = {register_encounter(*c, child), arc.t_end};
        }
      } else {
        const FilippovOrbit o = engine_.continue_from(enc, d, cfg_.horizon, BranchPolicy::halt_at_branch());
        e.reach = reach_of(o);
        if (o.pending) e.next = {register_encounter(*o.pending, child), o.pending->t};
      }
      out.push_back(std::move(e));
      ++segments_;
    }
    return edges_.emplace(k, std::move(out)).first->second;
  }

  std::size_t states() const { return expanded_; }
  std::size_t segments() const { return segments_; }

 private:
  std::vector<std::pair<int, double>> reach_of(const std::vector<OrbitSample>& samples) const {
    std::vector<double> best(nodes_.size(), -1.0);
    for (const OrbitSample& s : samples) mark(best, s.p, s.t);
    return collect(best);
  }

  std::vector<std::pair<int, double>> reach_of(const FilippovOrbit& o) const {
    std::vector<double> best(nodes_.size(), -1.0);
    mark(best, o.initial, 0.0);
    for (const OrbitArc& arc : o.arcs) {
      for (const OrbitSample& s : arc.samples) mark(best, s.p, s.t);
    }
    return collect(best);
  }

  void mark(std::vector<double>& best, const Vec3& p, double t) const {
    for (std::size_t j = 0; j < nodes_.size(); ++j) {
      if (best[j] < 0.0 && nodes_[j].dot(p) >= cos_eps_) best[j] = t;
    }
  }

  static std::vector<std::pair<int, double>> collect(const std::vector<double>& best) {
    std::vector<std::pair<int, double>> out;
    for (std::size_t j = 0; j < best.size(); ++j) {
      if (best[j] >= 0.0) out.emplace_back(static_cast<int>(j), best[j]);
    }
    return out;
  }

  Key register_encounter(const Encounter& enc, int phase) {
    const PlaneCircle& c = engine_.psvf().circle(enc.circle);
    int mask = 0;
    for (Side s : enc.exits) mask |= (s == Side::Above ? 1 : 2);
    if (enc.can_slide) mask |= 4;
    Encounter canon = enc;
    canon.t = 0.0;
    Key k;
    if (enc.kind == EncounterKind::Tangency) {
      const auto& list = engine_.tangencies(enc.circle);
      long long idx = -1;
      for (std::size_t i = 0; i < list.size(); ++i) {
        if (geodesic_distance(list[i].point, enc.point) <= 1e-4) idx = static_cast<long long>(i);
      }
      if (idx >= 0) {
        canon.point = list[static_cast<std::size_t>(idx)].point;
        k = Key{1, enc.circle.value, idx, mask, phase};
      } else {
        k = Key{3, enc.circle.value, std::llround(c.angle_of(enc.point) / kQuantum), mask, phase};
      }
    } else {
      // escaping points are merged on a fine angular grid
      const long long q = std::llround(c.angle_of(enc.point) / kQuantum);
      canon.point = circle_point(c, static_cast<double>(q) * kQuantum);
      k = Key{2, enc.circle.value, q, mask, phase};
    }
    encounters_.emplace(k, canon);
    return k;
  }

  static constexpr double kQuantum = 1e-9;

  const OrbitEngine& engine_;
  ProbeConfig cfg_;
  std::vector<Vec3> nodes_;
  double cos_eps_;
  std::map<Key, Encounter> encounters_;
  std::map<Key, std::vector<Edge>> edges_;
  std::size_t expanded_ = 0;
  std::size_t segments_ = 0;
};

/// Folds a path of probe decisions into a replayable list: consecutive dwells
/// along one escaping slide add up.
inline std::vector<BranchDecision> replayable(const std::vector<BranchDecision>& path) {
  std::vector<BranchDecision> out;
  double acc = 0.0;
  for (const BranchDecision& d : path) {
    if (d.kind == DecisionKind::Dwell) {
      acc += d.dwell;
      continue;
    }
    if (d.kind == DecisionKind::Exit && acc > 0.0) {
      out.push_back(BranchDecision::dwell_exit(acc, d.side));
    } else {
      out.push_back(d);
    }
    acc = 0.0;
  }
  if (acc > 0.0) out.push_back(BranchDecision::dwell_exit(acc, Side::Above));
  return out;
}

/// Strong connectivity of a boolean relation (every ordered pair reached).
inline bool all_pairs(const std::vector<std::vector<bool>>& reach, std::size_t* missing,
                      std::vector<std::pair<int, int>>* first) {
  std::size_t miss = 0;
  for (std::size_t u = 0; u < reach.size(); ++u) {
    for (std::size_t v = 0; v < reach.size(); ++v) {
      if (u == v || reach[u][v]) continue;
      ++miss;
      if (first && first->size() < 64) first->emplace_back(static_cast<int>(u), static_cast<int>(v));
    }
  }
  if (missing) *missing = miss;
  return miss == 0;
}

} // namespace detail

/// Net nodes: the spiral point set under a seeded random rotation.
inline std::vector<Vec3> probe_nodes(int n, unsigned long long seed) {
  const Mat3 r = random_rotation(seed);
  std::vector<Vec3> nodes = fibonacci_sphere(n);
  for (Vec3& p : nodes) p = (r * p).normalized();
  return nodes;
}

/// Finite reachability evidence: from every net node, follow all branch
/// prefixes up to the horizon and record which epsilon balls are visited.
/// TransitiveEvidence needs every ordered pair reached and no invariant set
/// certificate.
inline ProbeReport reachability_probe(const Psvf& psvf, const ProbeConfig& cfg, int witness_count = 4) {
  using Key = detail::ProbeGraph::Key;
  cfg.validate();
  ProbeReport rep;
  rep.config = cfg;
  rep.nodes = probe_nodes(cfg.n, cfg.seed);
  const OrbitEngine engine(psvf);
  detail::ProbeGraph graph(engine, cfg, rep.nodes);
  graph.build_starts(worker_count(cfg.threads));

  const auto n = static_cast<std::size_t>(cfg.n);
  rep.reach.assign(n, std::vector<bool>(n, false));
  std::vector<std::pair<int, int>> witness_pairs;
  for (int w = 0; w < witness_count; ++w) {
    witness_pairs.emplace_back(static_cast<int>((w * 37) % cfg.n), static_cast<int>((w * 91 + cfg.n / 2) % cfg.n));
  }

  struct Pred {
    Key parent;
    BranchDecision decision;
  };
  for (std::size_t u = 0; u < n; ++u) {
    std::map<Key, double> dist;
    std::map<Key, Pred> pred;
    using Item = std::pair<double, Key>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    const Key s0 = detail::ProbeGraph::start_key(static_cast<int>(u));
    dist[s0] = 0.0;
    pq.emplace(0.0, s0);
    std::size_t found = 0;
    std::map<int, std::pair<Key, std::pair<BranchDecision, double>>> hit;  // witness targets
    while (!pq.empty() && found < n) {
      const auto [t, k] = pq.top();
      pq.pop();
      if (t > dist[k]) continue;
      const auto& edges = graph.edges(k);
      for (const auto& e : edges) {
        for (const auto& [v, tv] : e.reach) {
          if (t + tv > cfg.horizon) continue;
          if (!rep.reach[u][static_cast<std::size_t>(v)]) {
            rep.reach[u][static_cast<std::size_t>(v)] = true;
            ++found;
            hit.emplace(v, std::make_pair(k, std::make_pair(e.decision, t + tv)));
          }
        }
        if (e.next) {
          const double t2 = t + e.next->second;
          const Key& k2 = e.next->first;
          if (t2 > cfg.horizon) continue;
          auto it = dist.find(k2);
          if (it == dist.end() || t2 < it->second) {
            dist[k2] = t2;
            pred[k2] = Pred{k, e.decision};
            pq.emplace(t2, k2);
          }
        }
      }
    }
    for (const auto& [wu, wv] : witness_pairs) {
      if (wu != static_cast<int>(u)) continue;
      auto h = hit.find(wv);
      if (h == hit.end()) continue;
      std::vector<BranchDecision> path{h->second.second.first};
      for (Key k = h->second.first; k != s0;) {
        const Pred& p = pred.at(k);
        path.push_back(p.decision);
        k = p.parent;
      }
      path.pop_back();  // the start segment carries no decision
      std::reverse(path.begin(), path.end());
      rep.witnesses.push_back({wu, wv, h->second.second.second, detail::replayable(path)});
    }
  }
  rep.strongly_connected = detail::all_pairs(rep.reach, &rep.unreached_count, &rep.unreached);
  rep.certificates = blocking_certificates(psvf);
  rep.verdict = rep.strongly_connected && rep.certificates.empty() ? Verdict::TransitiveEvidence : Verdict::Fails;
  rep.states = graph.states();
  rep.segments = graph.segments();
  return rep;
}

/// Orbit realizing a probe witness.
inline FilippovOrbit witness_orbit(const Psvf& psvf, const ProbeReport& rep, const Witness& w) {
  const OrbitEngine engine(psvf);
  return engine.integrate(rep.nodes[static_cast<std::size_t>(w.from)], w.time + 1e-9,
                          BranchPolicy::replay([&] {
                            std::vector<BranchRecord> log;
                            for (const auto& d : w.decisions) log.push_back({0.0, Vec3::Zero(), 0, EncounterKind::Escaping, d});
                            return log;
                          }()));
}

// ---------------------------------------------------------------------------
// Theta sweep

struct SweepRow {
  double theta;
  Verdict verdict;
  int tangency_count;          // over both circles
  bool crossing_empty;         // no sampled crossing point
  std::string equilibrium;     // real | virtual | on-sigma
  std::string diagnostic;      // human-readable reason for Fails
  std::size_t unreached_count;
};

inline std::string equilibrium_status(const Psvf& psvf, RegionId r) {
  const auto& signs = psvf.regions()[static_cast<std::size_t>(r.index())].signs;
  std::string status = "virtual";
  for (const Vec3& e : psvf.field(r)->equilibria()) {
    bool on = false, inside = true;
    for (std::size_t i = 0; i < signs.size(); ++i) {
      const double g = psvf.circles()[i].gamma(e);
      on = on || std::abs(g) <= tol::kOffCircle;
      inside = inside && signs[i] * g > 0.0;
    }
    if (on) return "on-sigma";
    if (inside) status = "real";
  }
  return status;
}

inline bool sampled_crossing_empty(const Psvf& psvf, int samples_per_circle = 5000) {
  for (const auto& c : psvf.circles()) {
    for (int j = 0; j < samples_per_circle; ++j) {
      const Vec3 p = circle_point(c, kTwoPi * (j + 0.5) / samples_per_circle);
      if (classify_sigma_point(psvf, CircleId{c.id()}, p).kind == SigmaClass::Crossing) return false;
    }
  }
  return true;
}

inline SweepRow sweep_row(double theta, const ProbeConfig& cfg) {
  const Psvf z = make_z_theta(theta);
  const ProbeReport rep = reachability_probe(z, cfg, 0);
  SweepRow row{theta, rep.verdict, 0, sampled_crossing_empty(z), equilibrium_status(z, RegionId{2}), "", rep.unreached_count};
  const OrbitEngine engine(z);
  for (int c = 1; c <= z.circle_count(); ++c) row.tangency_count += static_cast<int>(engine.tangencies(CircleId{c}).size());
  if (row.equilibrium == "real") {
    row.diagnostic = "real equilibrium";
  } else if (row.equilibrium == "on-sigma") {
    row.diagnostic = "equilibrium on sigma";
  } else if (!rep.certificates.empty()) {
    row.diagnostic = rep.certificates.front().kind;
  } else if (!rep.strongly_connected) {
    row.diagnostic = "unreached pairs";
  }
  return row;
}

inline std::vector<SweepRow> theta_sweep(const std::vector<double>& thetas, const ProbeConfig& cfg) {
  for (double t : thetas) {
    if (!(t > 0.0 && t < kPi)) throw Error(ErrorCode::InvalidAngle, "theta must lie in (0, pi)");
  }
  std::vector<SweepRow> rows;
  for (double t : thetas) rows.push_back(sweep_row(t, cfg));
  return rows;
}

// ---------------------------------------------------------------------------
// Sliding and escaping evidence

struct Segment {
  CircleId circle;
  SigmaClass kind;
  double phi_begin;
  double phi_end;  // > phi_begin, may exceed 2 pi

  bool contains(const PlaneCircle& c, const Vec3& p) const {
    double phi = c.angle_of(p);
    if (phi < phi_begin) phi += kTwoPi;
    return phi >= phi_begin && phi <= phi_end;
  }
  Vec3 midpoint(const PlaneCircle& c) const { return circle_point(c, 0.5 * (phi_begin + phi_end)); }
};

struct EvidenceWitness {
  std::size_t escaping;  // index into EvidenceReport::segments
  std::size_t sliding;
  std::vector<BranchRecord> log;
  FilippovOrbit orbit;
};

struct EvidenceReport {
  std::vector<int> sliding_samples;   // per circle
  std::vector<int> escaping_samples;  // per circle
  std::vector<Segment> segments;
  std::vector<EvidenceWitness> witnesses;

  bool sliding_nonempty(CircleId c) const { return sliding_samples.at(static_cast<std::size_t>(c.index())) > 0; }
  bool escaping_nonempty(CircleId c) const { return escaping_samples.at(static_cast<std::size_t>(c.index())) > 0; }
  std::size_t witnesses_between(std::size_t esc, std::size_t sl) const {
    return static_cast<std::size_t>(std::count_if(witnesses.begin(), witnesses.end(), [&](const EvidenceWitness& w) {
      return w.escaping == esc && w.sliding == sl;
    }));
  }
};

namespace detail {

inline bool enters_segment(const Psvf& psvf, const FilippovOrbit& o, std::size_t from_arc, const Segment& seg) {
  const PlaneCircle& c = psvf.circle(seg.circle);
  for (std::size_t i = from_arc; i < o.arcs.size(); ++i) {
    const OrbitArc& a = o.arcs[i];
    if (a.mode == ArcMode::SlidingFlow && a.id == seg.circle.value && seg.contains(c, a.first())) return true;
  }
  return false;
}

} // namespace detail

/// Classification sampling of every circle plus, for each pair of escaping
/// and sliding segments, up to `budget` orbits with distinct branch logs that
/// leave the escaping segment and later slide on the sliding one.
inline EvidenceReport sliding_escaping_evidence(const Psvf& psvf, const ProbeConfig& cfg, int samples = 10000,
                                                double witness_horizon = 20.0) {
  EvidenceReport rep;
  const OrbitEngine engine(psvf);
  for (const auto& c : psvf.circles()) {
    const CircleId id{c.id()};
    int ns = 0, ne = 0;
    for (int j = 0; j < samples; ++j) {
      const Vec3 p = circle_point(c, kTwoPi * (j + 0.5) / samples);
      const SigmaClass k = classify_sigma_point(psvf, id, p).kind;
      ns += k == SigmaClass::Sliding;
      ne += k == SigmaClass::Escaping;
    }
    rep.sliding_samples.push_back(ns);
    rep.escaping_samples.push_back(ne);
    for (SigmaClass kind : {SigmaClass::Sliding, SigmaClass::Escaping}) {
      for (const auto& [b, e] : class_segments(psvf, id, kind)) rep.segments.push_back({id, kind, b, e});
    }
  }
  const std::size_t want = static_cast<std::size_t>(std::max(cfg.budget, 1));
  for (std::size_t ei = 0; ei < rep.segments.size(); ++ei) {
    const Segment& esc = rep.segments[ei];
    if (esc.kind != SigmaClass::Escaping) continue;
    for (std::size_t si = 0; si < rep.segments.size(); ++si) {
      const Segment& sl = rep.segments[si];
      if (sl.kind != SigmaClass::Sliding) continue;
      // breadth-first over branch prefixes starting in the middle of the escaping segment
      std::vector<FilippovOrbit> frontier{orbit_prefix(engine, esc.midpoint(psvf.circle(esc.circle)), witness_horizon)};
      std::size_t got = 0;
      int expansions = 0;
      while (!frontier.empty() && got < want && expansions < 400) {
        std::vector<FilippovOrbit> next;
        for (const FilippovOrbit& pre : frontier) {
          if (!pre.pending || got >= want) continue;
          ++expansions;
          const std::size_t skip = pre.arcs.size();
          const double remaining = witness_horizon - pre.t_end();
          if (remaining <= 0.0) continue;
          for (const BranchDecision& d : branch_options(engine, *pre.pending, cfg.budget, 50.0, pre.branch_log.size())) {
            FilippovOrbit tail = engine.continue_from(*pre.pending, d, remaining, BranchPolicy::halt_at_branch());
            FilippovOrbit full = pre;
            full.arcs.insert(full.arcs.end(), tail.arcs.begin(), tail.arcs.end());
            full.branch_log.insert(full.branch_log.end(), tail.branch_log.begin(), tail.branch_log.end());
            full.pending = tail.pending;
            full.end = tail.end;
            if (detail::enters_segment(psvf, full, skip, sl)) {
              if (got < want) {
                rep.witnesses.push_back({ei, si, full.branch_log, full});
                ++got;
              }
            } else if (full.pending) {
              next.push_back(std::move(full));
            }
          }
        }
        frontier = std::move(next);
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Two-zone linear systems

enum class TwoZoneCase {
  NotGreatCircle,
  RealCenterOffSigma,
  EquilibriaOnSigmaElliptic,
  EquilibriaOnSigmaInvariant,
};

inline const char* to_string(TwoZoneCase c) {
  switch (c) {
    case TwoZoneCase::NotGreatCircle: return "NotGreatCircle";
    case TwoZoneCase::RealCenterOffSigma: return "RealCenterOffSigma";
    case TwoZoneCase::EquilibriaOnSigmaElliptic: return "EquilibriaOnSigma/EllipticDoubleTangencies";
    case TwoZoneCase::EquilibriaOnSigmaInvariant: return "EquilibriaOnSigma/InvariantSlidingEscaping";
  }
  return "?";
}

struct TwoZoneReport {
  TwoZoneCase label;
  std::vector<Vec3> equilibria_1;
  std::vector<Vec3> equilibria_2;
  Verdict verdict;
  std::string explanation;
  ProbeReport probe;
};

inline Psvf make_two_zone(const Mat3& a1, const Mat3& a2, const PlaneCircle& circle) {
  auto f1 = std::make_shared<LinearField>(a1, "A1");
  auto f2 = std::make_shared<LinearField>(a2, "A2");
  const PlaneCircle c(circle.normal(), circle.offset(), 1);
  return Psvf({c}, {Region{{1}, f1}, Region{{-1}, f2}}, "two-zone");
}

/// Case analysis of a two-zone system of rotations, backed by a probe run.
inline TwoZoneReport two_zone_check(const Mat3& a1, const Mat3& a2, const PlaneCircle& circle, const ProbeConfig& cfg) {
  const Psvf sys = make_two_zone(a1, a2, circle);
  TwoZoneReport rep{TwoZoneCase::NotGreatCircle, sys.field(RegionId{1})->equilibria(),
                    sys.field(RegionId{2})->equilibria(), Verdict::Fails, "", {}};
  const PlaneCircle& c = sys.circle(CircleId{1});
  auto real_center = [&](const std::vector<Vec3>& eq, int sign) {
    for (const Vec3& e : eq) {
      if (sign * c.gamma(e) > tol::kOffCircle) return true;
    }
    return false;
  };
  if (std::abs(c.offset()) > tol::kUnitConstructed) {
    rep.label = TwoZoneCase::NotGreatCircle;
    rep.explanation = "the circle is not a great circle, so one region lies in an open hemisphere and holds a center";
  } else if (real_center(rep.equilibria_1, 1) || real_center(rep.equilibria_2, -1)) {
    rep.label = TwoZoneCase::RealCenterOffSigma;
    rep.explanation = "a field has a center inside its own region, surrounded by invariant circles";
  } else {
    const OrbitEngine engine(sys);
    const auto n = engine.tangencies(CircleId{1}).size();
    rep.label = n <= 2 ? TwoZoneCase::EquilibriaOnSigmaElliptic : TwoZoneCase::EquilibriaOnSigmaInvariant;
    rep.explanation = n <= 2 ? "both centers sit on the circle at shared elliptic double tangencies"
                             : "centers on the circle split it into invariant sliding and escaping arcs";
  }
  rep.probe = reachability_probe(sys, cfg, 0);
  rep.verdict = rep.probe.verdict;
  return rep;
}

// ---------------------------------------------------------------------------
// Bump perturbation experiment

struct ConnectionData {
  Vec3 t_a;
  Vec3 t_b;
  double arrival_time;      // time of closest approach to t_b
  double offset;            // closest geodesic distance to t_b
  double offset_at_reference;  // distance to t_b at the reference time
  double reference_time;
};

struct RobustnessReport {
  ConnectionData before;
  ConnectionData after;
  double delta_time;
  double delta_offset;
  double perturbation_sup;
  std::optional<Verdict> verdict_before;
  std::optional<Verdict> verdict_after;
};

/// Sliding-exit tangency: the first tangency with exactly one visible side
/// that a sliding segment runs into. Returns the point and the visible side.
inline std::pair<Vec3, Side> sliding_exit_tangency(const OrbitEngine& engine) {
  const Psvf& psvf = engine.psvf();
  for (const auto& c : psvf.circles()) {
    const CircleId id{c.id()};
    for (const TangencyPoint& t : engine.tangencies(id)) {
      if (!t.info || !t.info->above || !t.info->below) continue;
      const bool va = t.info->above->visibility == Visibility::Visible;
      const bool vb = t.info->below->visibility == Visibility::Visible;
      if (va == vb) continue;
      // a sliding point just before it in the direction of the slide
      for (double s : {-1e-3, 1e-3}) {
        const Vec3 q = circle_point(c, t.phi + s);
        if (classify_sigma_point(psvf, id, q).kind != SigmaClass::Sliding) continue;
        const double dir = sliding_field_at(psvf, id, q).dot(c.tangent(t.phi + s));
        if (dir * -s > 0.0) return {t.point, va ? Side::Above : Side::Below};
      }
    }
  }
  throw Error(ErrorCode::InvalidInput, "no sliding-exit tangency with a unique visible field");
}

namespace detail {

/// Closest approach of the field's flow from p to target over (t_min, t_max],
/// refined on the dense output.
inline std::pair<double, double> closest_approach(const Field& f, const Vec3& p, const Vec3& target, double t_min,
                                                  double t_max) {
  DormandPrince<3> dp;
  double best_t = 0.0, best_d = 1e9;
  auto consider = [&](double t, const Vec3& q) {
    const double d = geodesic_distance(q.normalized(), target);
    if (t >= t_min && d < best_d) {
      best_d = d;
      best_t = t;
    }
  };
  auto rhs = [&](double, const Vec3& y) -> Vec3 { return f.eval(y); };
  auto post = [](DenseStep<3>& d) { d.y1.normalize(); };
  dp.drive(rhs, 0.0, Vec3(p), t_max, 0.05, post, [&](const DenseStep<3>& d) {
    auto rate = [&](double t) {
      const Vec3 q = d.at(t).normalized();
      return f.eval(q).dot(q - target);
    };
    consider(d.t1(), d.y1);
    if (rate(d.t0) < 0.0 && rate(d.t1()) > 0.0) {
      double lo = d.t0, hi = d.t1();
      while (hi - lo > 1e-13) {
        const double mid = 0.5 * (lo + hi);
        (rate(mid) < 0.0 ? lo : hi) = mid;
      }
      consider(0.5 * (lo + hi), d.at(0.5 * (lo + hi)));
    }
    return true;
  }, 0.05);
  return {best_t, best_d};
}

inline Vec3 flow_point(const Field& f, const Vec3& p, double t) {
  DormandPrince<3> dp;
  Vec3 out = p;
  auto rhs = [&](double, const Vec3& y) -> Vec3 { return f.eval(y); };
  auto post = [](DenseStep<3>& d) { d.y1.normalize(); };
  dp.drive(rhs, 0.0, Vec3(p), t, 0.05, post, [&](const DenseStep<3>& d) {
    out = d.y1;
    return true;
  });
  return out;
}

} // namespace detail

/// Connection data from the sliding-exit tangency along its unique exit orbit.
/// The target is the other tangency nearest to that orbit unless given.
inline ConnectionData measure_connection(const Psvf& psvf, std::optional<Vec3> target = std::nullopt,
                                         std::optional<double> reference_time = std::nullopt) {
  const OrbitEngine engine(psvf);
  const auto [ta, side] = sliding_exit_tangency(engine);
  CircleId on{1};
  for (const auto& c : psvf.circles()) {
    if (std::abs(c.gamma(ta)) <= tol::kOffCircle) on = CircleId{c.id()};
  }
  const Field& f = *psvf.adjacent_field(on, side);
  ConnectionData out{ta, Vec3::Zero(), 0.0, 1e9, 0.0, 0.0};
  if (target) {
    out.t_b = *target;
  } else {
    for (const auto& c : psvf.circles()) {
      for (const TangencyPoint& t : engine.tangencies(CircleId{c.id()})) {
        if ((t.point - ta).norm() < 1e-9) continue;
        const auto [tt, d] = detail::closest_approach(f, ta, t.point, 0.5, kTwoPi);
        if (d < out.offset) {
          out.offset = d;
          out.t_b = t.point;
        }
      }
    }
  }
  const auto [tt, d] = detail::closest_approach(f, ta, out.t_b, 0.5, 1.5 * kPi);
  out.arrival_time = tt;
  out.offset = d;
  out.reference_time = reference_time.value_or(tt);
  out.offset_at_reference = geodesic_distance(detail::flow_point(f, ta, out.reference_time), out.t_b);
  return out;
}

/// Bump placed on the connecting orbit: at 3/4 of the way from T_A, pushing
/// across the orbit.
inline BumpPerturbation default_connection_bump(const Psvf& psvf, double amplitude, double radius = 0.1) {
  const OrbitEngine engine(psvf);
  const auto [ta, side] = sliding_exit_tangency(engine);
  CircleId on{1};
  for (const auto& c : psvf.circles()) {
    if (std::abs(c.gamma(ta)) <= tol::kOffCircle) on = CircleId{c.id()};
  }
  const Field& f = *psvf.adjacent_field(on, side);
  const ConnectionData base = measure_connection(psvf);
  const Vec3 c = detail::flow_point(f, ta, 0.75 * base.arrival_time).normalized();
  BumpPerturbation b;
  b.center = SpherePoint(c);
  b.radius = radius;
  b.direction = c.cross(f.eval(c)).normalized();
  b.amplitude = amplitude;
  return b;
}

/// Compares the connection data (and optionally the probe verdict) before and
/// after adding the bump to the region that contains its center.
inline RobustnessReport robustness_experiment(const Psvf& psvf, const BumpPerturbation& bump,
                                              std::optional<ProbeConfig> probe = std::nullopt) {
  const RegionId r = psvf.region_of(bump.center.vec());
  const BumpedSystem bumped = apply_bump(psvf, bump, r);
  RobustnessReport rep;
  rep.before = measure_connection(psvf);
  rep.after = measure_connection(bumped.system, rep.before.t_b, rep.before.arrival_time);
  rep.delta_time = rep.after.arrival_time - rep.before.arrival_time;
  rep.delta_offset = rep.after.offset - rep.before.offset;
  rep.perturbation_sup = bumped.sup_norm;
  if (probe) {
    rep.verdict_before = reachability_probe(psvf, *probe, 0).verdict;
    rep.verdict_after = reachability_probe(bumped.system, *probe, 0).verdict;
  }
  return rep;
}

} // namespace filippov
