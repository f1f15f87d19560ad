#include "drift/chain.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "drift/config.hpp"

namespace drift {

using nlohmann::json;

double ProximityRecord::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.min_dist);
  return w;
}

std::string ChainWord::text() const {
  std::string out;
  for (const auto& s : symbols) {
    if (!out.empty()) out += ' ';
    switch (s.kind) {
      case ChainSymbol::Phi: out += "P" + std::to_string(s.annulus + 1); break;
      case ChainSymbol::PhiInv: out += "Pi" + std::to_string(s.annulus + 1); break;
      case ChainSymbol::Corr:
        out += "C" + std::to_string(s.annulus + 1) + ":" + std::to_string(s.index);
        break;
      case ChainSymbol::Link: out += "L" + std::to_string(s.index + 1); break;
    }
  }
  return out;
}

ChainWord ChainWord::parse(const std::string& text) {
  ChainWord word;
  std::istringstream in(text);
  std::string tok;
  auto num = [](const std::string& s) { return std::stoi(s); };
  while (in >> tok) {
    ChainSymbol sym;
    if (tok.rfind("Pi", 0) == 0) {
      sym.kind = ChainSymbol::PhiInv;
      sym.annulus = num(tok.substr(2)) - 1;
    } else if (tok[0] == 'P') {
      sym.kind = ChainSymbol::Phi;
      sym.annulus = num(tok.substr(1)) - 1;
    } else if (tok[0] == 'C') {
      auto colon = tok.find(':');
      require(colon != std::string::npos, Errc::ConfigError, "bad chain symbol: " + tok);
      sym.kind = ChainSymbol::Corr;
      sym.annulus = num(tok.substr(1, colon - 1)) - 1;
      sym.index = num(tok.substr(colon + 1));
    } else if (tok[0] == 'L') {
      sym.kind = ChainSymbol::Link;
      sym.index = num(tok.substr(1)) - 1;
    } else {
      fail(Errc::ConfigError, "bad chain symbol: " + tok);
    }
    word.symbols.push_back(sym);
  }
  return word;
}

bool has_isolated_jumps(const ChainWord& word) {
  bool prev_phi = false;
  for (size_t i = 0; i < word.symbols.size(); ++i) {
    const auto& s = word.symbols[i];
    if (s.is_phi_like()) {
      prev_phi = true;
    } else {
      if (!prev_phi) return false;  // needs at least one Phi before any jump
      prev_phi = false;
    }
  }
  return true;
}

namespace {

struct ChainStepResult {
  Point p;
  int annulus;
};

ChainStepResult apply_chain_symbol(const Chain& chain, const ChainSymbol& s, const Point& p,
                                   int annulus) {
  switch (s.kind) {
    case ChainSymbol::Phi:
      return {chain.systems[s.annulus].poly.phi.step(p), s.annulus};
    case ChainSymbol::PhiInv:
      return {chain.systems[s.annulus].poly.phi.step_back(p), s.annulus};
    case ChainSymbol::Corr: {
      const Correspondence& c = chain.systems[s.annulus].poly.corr(s.index);
      if (!c.domain.contains(p)) fail(Errc::OutsideDomain, "replay left a correspondence domain");
      return {c.fwd(p), s.annulus};
    }
    case ChainSymbol::Link: {
      const ChainLink& link = chain.links[s.index];
      if (!link.domain.contains(p)) fail(Errc::OutsideDomain, "replay left a link domain");
      require(annulus == s.index, Errc::NotReplayable, "link applied from the wrong annulus");
      return {link.fwd(p), s.index + 1};
    }
  }
  fail(Errc::InvalidParameter, "bad chain symbol");
}

}  // namespace

double replay_error(const Chain& chain, const PseudoOrbit& orbit) {
  require(!orbit.points.empty(), Errc::NotReplayable, "empty orbit");
  Point p = orbit.points.front().p;
  int annulus = orbit.points.front().annulus;
  double err = 0.0;
  for (size_t n = 0; n < orbit.word.symbols.size(); ++n) {
    ChainStepResult next = apply_chain_symbol(chain, orbit.word.symbols[n], p, annulus);
    p = next.p;
    annulus = next.annulus;
    err = std::max(err, annulus_dist(p, orbit.points[n + 1].p));
    if (annulus != orbit.points[n + 1].annulus) return std::numeric_limits<double>::infinity();
  }
  return err;
}

// --- chain assembly -----------------------------------------------------------

namespace {

std::vector<double> make_rotation_grid(double lo, double hi, int count) {
  // quasi-random values nudged off low-denominator rationals
  const double golden = 0.6180339887498949;
  std::vector<double> grid;
  for (int j = 0; j < count; ++j) {
    double v = lo + (hi - lo) * (j + 0.5 + 0.31 * (mod1((j + 1) * golden) - 0.5)) / count;
    for (int guard = 0; guard < 40; ++guard) {
      bool near_rational = false;
      for (long q = 1; q <= 12 && !near_rational; ++q)
        if (std::abs(v - std::round(v * q) / q) < 2e-4) near_rational = true;
      if (!near_rational) break;
      v += (hi - lo) * 3e-4;
    }
    grid.push_back(v);
  }
  std::sort(grid.begin(), grid.end());
  return grid;
}

Region parse_domain_spec(const ChainConfig& cfg, const std::string& section, const Annulus& ann) {
  std::string spec = cfg.get(section, "domain", "global");
  if (spec == "global") return Region::band(Interval{ann.a - 1.0, ann.b + 1.0});
  if (spec == "balls") {
    double spacing = cfg.get_num(section, "ball_spacing", 0.02);
    double halfwidth = cfg.get_num(section, "ball_theta_halfwidth", spacing / 4.0);
    double nu = cfg.get_num(section, "ball_nu", 1.0);
    Region out;
    // the grid is materialized later by restrict_to_balls; marker only
    out.rects.push_back(Region::Rect{0.5, 0.5, Interval{spacing, halfwidth + nu}});
    return out;
  }
  if (spec == "band") {
    double lo = cfg.get_num(section, "band_lo", ann.a);
    double hi = cfg.get_num(section, "band_hi", ann.b);
    return Region::band(Interval{lo, hi});
  }
  fail(Errc::ConfigError, section + ": unknown domain spec " + spec);
}

}  // namespace

Chain build_chain(const ChainConfig& cfg, bool strict) {
  Chain chain;
  chain.delta = cfg.get_num("global", "delta", 0.05);
  double catalog_tol = cfg.get_num("global", "catalog_tol", 1e-6);

  auto annulus_sections = cfg.sections_matching("annulus.");
  std::vector<std::string> top_level;
  for (const auto& s : annulus_sections)
    if (s.find("correspondence") == std::string::npos) top_level.push_back(s);
  require(!top_level.empty(), Errc::ConfigError, "config declares no annuli");
  std::sort(top_level.begin(), top_level.end(), [](const std::string& a, const std::string& b) {
    return std::stoi(a.substr(8)) < std::stoi(b.substr(8));
  });

  for (const auto& section : top_level) {
    ModelConfig mc;
    mc.model = cfg.get(section, "model", "integrable");
    double a = cfg.get_num(section, "a", 0.0);
    double b = cfg.get_num(section, "b", 1.0);
    mc.annulus = Annulus(a, b);
    double pad = cfg.get_num(section, "continuation_pad", 0.05);
    mc.continuation = Annulus(a - pad, b + pad);
    for (const std::string key : {"k", "beta", "omega", "mu", "curvature", "band_lo", "band_hi"})
      if (cfg.has(section, key)) mc.params[key] = cfg.get_num(section, key, 0.0);

    AnnulusSystem sys{instantiate_model(mc), Polysystem{}, {}, {}};
    sys.poly.phi = sys.map;
    sys.poly.ambient = *mc.continuation;

    int next_id = 1;
    for (const auto& csec : cfg.sections_matching(section + ".correspondence.")) {
      std::string type = cfg.get(csec, "type", "vertical_shear");
      require(type == "vertical_shear", Errc::ConfigError, csec + ": unknown correspondence type");
      double eps = cfg.get_num(csec, "epsilon", 0.05);
      std::string dom = cfg.get(csec, "domain", "global");
      if (dom == "balls") {
        double spacing = cfg.get_num(csec, "ball_spacing", 0.02);
        double halfwidth = cfg.get_num(csec, "ball_theta_halfwidth", spacing / 4.0);
        double nu = cfg.get_num(csec, "ball_nu", 1.0);
        Correspondence base = vertical_shear(next_id, eps);
        auto balls = restrict_to_balls(base, *mc.continuation, spacing, halfwidth, nu);
        for (auto& c : balls) sys.poly.corrs.push_back(std::move(c));
        next_id = sys.poly.corrs.back().id + 1;
      } else {
        Region domain = parse_domain_spec(cfg, csec, mc.annulus);
        sys.poly.corrs.push_back(vertical_shear(next_id++, eps, domain));
      }
    }

    // catalog
    std::vector<double> grid = cfg.get_list(section, "catalog_rotations");
    if (grid.empty()) {
      int count = static_cast<int>(cfg.get_num(section, "catalog_count", 20));
      double margin = cfg.get_num(section, "catalog_margin", 0.02);
      grid = make_rotation_grid(a + margin, b - margin, count);
    }
    CertifyOptions copts;
    copts.orbit_len = static_cast<long>(cfg.get_num("global", "certify_orbit_len", 120000));
    copts.rho_iterates = static_cast<long>(cfg.get_num("global", "certify_rho_iterates", 16000));
    sys.catalog = sweep_catalog(sys.map, grid, catalog_tol, copts);

    ZoneOptions zopts;
    zopts.gap_min = cfg.get_num("global", "zone_gap_min", std::max(1e-4, chain.delta * 0.5));
    zopts.refinement = static_cast<int>(cfg.get_num("global", "zone_refinement", 8));
    zopts.certify = copts;
    sys.zones = detect_zones(sys.catalog, sys.map, zopts);

    chain.systems.push_back(std::move(sys));
  }

  // links
  for (const auto& lsec : cfg.sections_matching("link.")) {
    size_t k = static_cast<size_t>(std::stoi(lsec.substr(5))) - 1;
    require(k + 1 < chain.systems.size(), Errc::ConfigError, lsec + ": link index out of range");
    ChainLink link;
    std::string kind = cfg.get(lsec, "kind", "transition");
    link.kind = (kind == "heteroclinic") ? LinkKind::Heteroclinic : LinkKind::Transition;
    double band_lo = cfg.get_num(lsec, "band_lo", chain.systems[k].map.domain().b - 0.05);
    double band_hi = cfg.get_num(lsec, "band_hi", chain.systems[k].map.domain().b + 0.05);
    link.domain = Region::band(Interval{band_lo, band_hi});
    link.image = link.domain;
    std::string mspec = cfg.get(lsec, "map", "identity");
    if (mspec == "identity") {
      link.fwd = [](const Point& p) { return p; };
      link.inv = [](const Point& p) { return p; };
    } else if (mspec == "shift") {
      double dr = cfg.get_num(lsec, "dr", 0.0);
      double dtheta = cfg.get_num(lsec, "dtheta", 0.0);
      link.fwd = [dr, dtheta](const Point& p) { return Point{mod1(p.theta + dtheta), p.r + dr}; };
      link.inv = [dr, dtheta](const Point& p) { return Point{mod1(p.theta - dtheta), p.r - dr}; };
    } else {
      fail(Errc::ConfigError, lsec + ": unknown link map " + mspec);
    }
    double tau_const = cfg.get_num(lsec, "tau", 1.0);
    link.transit_time = [tau_const](const Point&) { return tau_const; };
    link.label = "link" + std::to_string(k + 1);
    chain.links.push_back(std::move(link));
  }
  require(chain.links.size() + 1 == chain.systems.size(), Errc::ConfigError,
          "chain needs exactly one link between consecutive annuli");

  // good-chain condition on a shrinking mesh of boundary neighborhoods
  for (size_t k = 0; k < chain.links.size(); ++k) {
    const auto& sys_from = chain.systems[k];
    const auto& sys_to = chain.systems[k + 1];
    double b_k = sys_from.map.domain().b;
    double a_next = sys_to.map.domain().a;
    ChainCheckEntry entry;
    entry.link = k;
    for (double w = chain.delta; w >= 1e-3; w *= 0.5) {
      Region nbhd = Region::band(Interval{b_k - w, b_k + w});
      for (size_t ci = 0; ci < sys_to.catalog.size() && !entry.ok; ++ci) {
        const auto& circle = sys_to.catalog[ci];
        double sup_to_boundary = std::max(std::abs(circle.min_level() - a_next),
                                          std::abs(circle.max_level() - a_next));
        if (sup_to_boundary >= chain.delta) continue;
        bool saw_below = false, saw_above = false;
        for (const Point& s : {Point{0.1, b_k - 0.5 * w}, Point{0.35, b_k}, Point{0.6, b_k + 0.5 * w},
                               Point{0.85, b_k - 0.25 * w}, Point{0.5, b_k + 0.25 * w}}) {
          if (!chain.links[k].domain.contains(s) || !nbhd.contains(s)) continue;
          Point img = chain.links[k].fwd(s);
          double off = img.r - circle.value(img.theta);
          saw_below = saw_below || off <= 0.0;
          saw_above = saw_above || off >= 0.0;
        }
        if (saw_below && saw_above) {
          entry.ok = true;
          entry.mesh_radius = w;
          entry.circle_index = ci;
        }
      }
      if (!entry.ok) break;  // a smaller neighborhood can only fail too
    }
    chain.link_report.push_back(entry);
    if (!entry.ok && strict)
      fail(Errc::ChainConditionViolated,
           "link " + std::to_string(k + 1) + " misses every delta-close minimal circle");
  }
  return chain;
}

// --- drift ----------------------------------------------------------------------

namespace {

void append_phi_run(ChainWord& word, int annulus, long m) {
  for (long i = 0; i < m; ++i) word.symbols.push_back(ChainSymbol{ChainSymbol::Phi, annulus, -1});
  for (long i = 0; i > m; --i)
    word.symbols.push_back(ChainSymbol{ChainSymbol::PhiInv, annulus, -1});
}

struct SpliceRecord {
  long m = 0;             // phi-iterates in annulus k before the link
  NuBall ball;            // spliced seed ball on a circle of annulus k+1
  size_t circle_index = 0;
};

bool near_rational(double rho, long q_max) {
  for (long q = 1; q <= q_max; ++q)
    if (std::abs(rho - std::round(rho * q) / q) < 1e-5) return true;
  return false;
}

// Find m >= 1 and a nu-ball centered on a delta-close minimal circle of the
// next annulus inside link(phi^m(top_ball)). Containment is certified on the
// probe points by pullback.
std::optional<SpliceRecord> splice_link(const AnnulusSystem& from, const ChainLink& link,
                                        const AnnulusSystem& to, const NuBall& top_ball,
                                        double delta, double ball_cap, long long& evals) {
  double a_next = to.map.domain().a;
  std::vector<size_t> candidates;
  for (size_t ci = 0; ci < to.catalog.size(); ++ci) {
    const auto& circle = to.catalog[ci];
    double sup_to_boundary = std::max(std::abs(circle.min_level() - a_next),
                                      std::abs(circle.max_level() - a_next));
    if (sup_to_boundary >= delta) continue;
    if (near_rational(circle.rotation_number(), 8)) continue;  // minimality proxy
    candidates.push_back(ci);
  }
  if (candidates.empty()) return std::nullopt;

  const Region top_region = Region::ball(top_ball);
  std::vector<Point> cur = region_probe_points(top_region, 7);
  const long m_budget = 4000;
  for (long m = 1; m <= m_budget; ++m) {
    for (auto& p : cur) p = from.map.step(p);
    evals += cur.size();
    for (const auto& p : cur) {
      if (!link.domain.contains(p)) continue;
      Point y = link.fwd(p);
      for (size_t ci : candidates) {
        const auto& circle = to.catalog[ci];
        if (std::abs(y.r - circle.value(y.theta)) > 0.3 * ball_cap) continue;
        // inscribe a ball on the circle at this angle, certified by pullback
        double nu = std::max(1.0, 1.2 * circle.nu_est() + 0.1);
        double theta_hw = ball_cap / (nu * 1.1);
        for (int attempt = 0; attempt < 24; ++attempt, theta_hw *= 0.5) {
          NuBall ball;
          try {
            ball = make_nu_ball(Point{y.theta, circle.value(y.theta)}, nu, theta_hw, 0.1,
                                to.map.hat());
          } catch (const Error&) {
            continue;
          }
          bool ok = true;
          for (const Point& probe : ball.probe_points()) {
            Point back = link.inv(probe);
            if (!link.domain.contains(back) || !from.map.hat().contains(back, 1e-9)) {
              ok = false;
              break;
            }
            Point src = from.map.iterate(back, -m);
            if (!top_ball.contains(src)) {
              ok = false;
              break;
            }
          }
          evals += 9 * (m + 1);
          if (ok) return SpliceRecord{m, ball, ci};
        }
      }
    }
  }
  return std::nullopt;
}

// extraction step: how one orbit point pulls back through a climb step
struct ExtractStep {
  enum Kind { Crux, Link } kind = Crux;
  int annulus = 0;
  long m = 0;
  Correspondence corr;  // materialized (equivariant rewrites resolved)
  int link_index = -1;
  Region source;        // region the pullback must land in
};

Search<DriftOutcome> drift_constructive(const Chain& chain, const Region& start,
                                        const DriftOptions& opts) {
  Search<DriftOutcome> out;
  DriftOutcome outcome;
  ChainWord word;
  std::vector<ExtractStep> extraction;

  Region v = start;
  CertifiedCircle gamma0;
  bool gamma0_from_catalog = false;
  std::optional<Point> final_center;

  for (size_t k = 0; k < chain.systems.size(); ++k) {
    const AnnulusSystem& sys = chain.systems[k];
    const Annulus& ann = sys.map.domain();
    if (!gamma0_from_catalog) gamma0 = horizontal_circle(sys.map, ann.a);
    CertifiedCircle gamma_star = horizontal_circle(sys.map, ann.b);

    CoherentOptions copts = opts.coherent;
    copts.delta = chain.delta;
    copts.avoid = opts.avoid;
    copts.crux.max_ball_halfwidth_r =
        std::min(copts.crux.max_ball_halfwidth_r, 0.25 * chain.delta);

    std::vector<BirkhoffZone> zones = sys.zones;
    Search<CoherentSequence> seq =
        coherent_sequence(sys.map, sys.poly, gamma0, v, gamma_star, zones, copts);
    out.evals += seq.evals;
    if (!seq) {
      out.budget_exhausted = seq.budget_exhausted;
      return out;  // stalled in annulus k
    }

    // word + extraction records for this annulus
    for (const auto& step : seq->steps) {
      long lead = step.m - step.equivariant_m;  // psi_{i(m)} o phi^n = phi^m o psi_i o phi^{n-m}
      if (lead < 1) {
        out.budget_exhausted = false;
        return out;  // cannot express the step in the isolated-jump form
      }
      append_phi_run(word, static_cast<int>(k), lead);
      word.symbols.push_back(ChainSymbol{ChainSymbol::Corr, static_cast<int>(k), step.corr_id});
      append_phi_run(word, static_cast<int>(k), step.equivariant_m);

      ExtractStep ex;
      ex.kind = ExtractStep::Crux;
      ex.annulus = static_cast<int>(k);
      ex.m = step.m;
      ex.corr = (step.equivariant_m == 0)
                    ? sys.poly.corr(step.corr_id)
                    : equivariant_extension(sys.poly, step.corr_id, step.equivariant_m);
      ex.source = v;
      extraction.push_back(ex);
      v = Region::ball(step.ball);
    }
    outcome.sequences.push_back(*seq);

    NuBall top_ball;
    if (!seq->steps.empty()) {
      top_ball = seq->steps.back().ball;
    } else {
      // degenerate climb (start already at the top): center a ball in v
      const auto& rect = v.rects.front();
      double nu = 1.0;
      top_ball = make_nu_ball(Point{rect.theta_center, rect.r.mid()}, nu,
                              std::min(0.1, rect.r.length() / 4.0), 0.1, sys.map.hat());
    }

    if (k + 1 < chain.systems.size()) {
      auto splice = splice_link(sys, chain.links[k], chain.systems[k + 1], top_ball, chain.delta,
                                0.25 * chain.delta, out.evals);
      if (!splice) {
        out.budget_exhausted = false;
        return out;  // LinkMissed
      }
      append_phi_run(word, static_cast<int>(k), splice->m);
      word.symbols.push_back(ChainSymbol{ChainSymbol::Link, static_cast<int>(k),
                                         static_cast<int>(k)});
      ExtractStep ex;
      ex.kind = ExtractStep::Link;
      ex.annulus = static_cast<int>(k);
      ex.m = splice->m;
      ex.link_index = static_cast<int>(k);
      ex.source = Region::ball(top_ball);
      extraction.push_back(ex);

      v = Region::ball(splice->ball);
      gamma0 = chain.systems[k + 1].catalog[splice->circle_index];
      gamma0_from_catalog = true;
      final_center = splice->ball.center;
    }
    if (k + 1 == chain.systems.size())
      final_center = seq->steps.empty() ? Point{v.rects.front().theta_center,
                                                v.rects.front().r.mid()}
                                        : seq->steps.back().ball.center;
  }

  // extract a concrete start point by pulling the final center back through
  // every step (shrinking-windows argument made pointwise)
  Point z = *final_center;
  for (size_t i = extraction.size(); i-- > 0;) {
    const ExtractStep& ex = extraction[i];
    if (ex.kind == ExtractStep::Crux) {
      z = ex.corr.inv(z);
      z = chain.systems[ex.annulus].map.iterate(z, -ex.m);
    } else {
      z = chain.links[ex.link_index].inv(z);
      z = chain.systems[ex.annulus].map.iterate(z, -ex.m);
    }
    if (!ex.source.contains(z)) {
      // containment was certified on probes; an interior violation means the
      // ball needs shrinking, which we surface as a failed search
      out.budget_exhausted = false;
      return out;
    }
  }

  // forward replay of the full word
  PseudoOrbit orbit;
  orbit.word = word;
  Point p = z;
  int annulus = 0;
  orbit.points.push_back(TaggedPoint{p, annulus});
  for (const auto& s : word.symbols) {
    ChainStepResult next = apply_chain_symbol(chain, s, p, annulus);
    p = next.p;
    annulus = next.annulus;
    orbit.points.push_back(TaggedPoint{p, annulus});
  }
  out.evals += static_cast<long long>(word.symbols.size());

  for (size_t k = 0; k < chain.systems.size(); ++k) {
    for (size_t ci = 0; ci < chain.systems[k].catalog.size(); ++ci) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& tp : orbit.points)
        if (tp.annulus == static_cast<int>(k))
          best = std::min(best, chain.systems[k].catalog[ci].distance(tp.p));
      orbit.proximity.entries.push_back({static_cast<int>(k), ci, best});
    }
  }

  if (opts.avoid) {
    for (const auto& tp : orbit.points)
      if (opts.avoid->contains(tp.p)) {
        out.budget_exhausted = false;
        return out;  // avoidance violated; caller must tighten domains
      }
  }

  outcome.orbit = std::move(orbit);
  outcome.evals = out.evals;
  out.hit = std::move(outcome);
  return out;
}

Search<DriftOutcome> drift_symmetrized(const Chain& chain, const Region& start,
                                       const DriftOptions& opts) {
  Search<DriftOutcome> out;
  DriftOutcome outcome;
  ChainWord word;
  std::vector<TaggedPoint> points;

  Region region = start;
  Point p{};
  bool have_point = false;

  for (size_t k = 0; k < chain.systems.size(); ++k) {
    const AnnulusSystem& sys = chain.systems[k];
    const Annulus& ann = sys.map.domain();
    const Annulus& hat = sys.map.hat();

    GridSpec grid;
    grid.n_theta = 96;
    grid.n_r = 96;
    grid.r_range = Interval{hat.a, hat.b};
    Polysystem sym = sys.poly.symmetrized();
    ReachSet rs = have_point
                      ? reachable_set(sym, std::vector<Point>{p}, grid, opts.budget / 2, 4,
                                      /*isolate_corrs=*/true)
                      : reachable_set(sym, region, grid, opts.budget / 2, 4,
                                      /*isolate_corrs=*/true);
    out.evals += rs.evals;

    // target: a cell within delta/2 of the upper boundary circle
    std::optional<size_t> target;
    for (size_t idx = 0; idx < grid.cells() && !target; ++idx)
      if (rs.is_occupied(idx) && std::abs(grid.cell_center(idx).r - ann.b) < 0.5 * chain.delta)
        target = idx;
    if (!target) {
      out.budget_exhausted = rs.budget_exhausted;
      return out;
    }

    OrbitWord g_word = rs.word_to(*target);
    Point seed = rs.seed_point_of(*target);
    SymmetrizeOptions sopts;
    sopts.recurrence_budget = opts.budget / 10;
    Search<SymmetrizedWord> f_word = symmetrize_word(sys.poly, g_word, seed, 1e-3, sopts);
    out.evals += f_word.evals;
    if (!f_word) {
      out.budget_exhausted = f_word.budget_exhausted;
      return out;
    }

    // splice the per-annulus word into the chain word and replay; in later
    // annuli the seed is exactly the link landing point, already recorded
    Point x = f_word->seed_center;
    if (!have_point) {
      points.push_back(TaggedPoint{x, static_cast<int>(k)});
      have_point = true;
    } else if (annulus_dist(x, p) > 1e-12) {
      out.budget_exhausted = false;
      return out;  // symmetrization moved the seed off the splice point
    }
    for (const auto& s : f_word->word.symbols) {
      ChainSymbol cs;
      cs.annulus = static_cast<int>(k);
      cs.kind = (s.kind == Symbol::Phi)    ? ChainSymbol::Phi
                : (s.kind == Symbol::PhiInv) ? ChainSymbol::PhiInv
                                             : ChainSymbol::Corr;
      cs.index = s.index;
      word.symbols.push_back(cs);
      x = (cs.kind == ChainSymbol::Phi)    ? sys.poly.phi.step(x)
          : (cs.kind == ChainSymbol::PhiInv) ? sys.poly.phi.step_back(x)
                                             : sys.poly.corr(cs.index).fwd(x);
      points.push_back(TaggedPoint{x, static_cast<int>(k)});
    }
    p = x;

    if (k + 1 < chain.systems.size()) {
      const ChainLink& link = chain.links[k];
      const AnnulusSystem& to = chain.systems[k + 1];
      bool spliced = false;
      for (long m = 1; m <= 4000 && !spliced; ++m) {
        p = sys.poly.phi.step(p);
        ++out.evals;
        word.symbols.push_back(ChainSymbol{ChainSymbol::Phi, static_cast<int>(k), -1});
        points.push_back(TaggedPoint{p, static_cast<int>(k)});
        if (!link.domain.contains(p)) continue;
        Point y = link.fwd(p);
        for (size_t ci = 0; ci < to.catalog.size() && !spliced; ++ci) {
          const auto& circle = to.catalog[ci];
          double to_boundary = std::max(std::abs(circle.min_level() - to.map.domain().a),
                                        std::abs(circle.max_level() - to.map.domain().a));
          if (to_boundary >= chain.delta) continue;
          if (near_rational(circle.rotation_number(), 8)) continue;
          if (circle.distance(y) < 0.5 * chain.delta) spliced = true;
        }
        if (spliced) {
          word.symbols.push_back(
              ChainSymbol{ChainSymbol::Link, static_cast<int>(k), static_cast<int>(k)});
          p = y;
          points.push_back(TaggedPoint{p, static_cast<int>(k + 1)});
          double w = 0.02;
          region = Region{{Region::Rect{p.theta, w, Interval{p.r - w, p.r + w}}}};
        }
      }
      if (!spliced) {
        out.budget_exhausted = true;
        return out;
      }
    }
  }

  PseudoOrbit orbit;
  orbit.word = std::move(word);
  orbit.points = std::move(points);
  for (size_t k = 0; k < chain.systems.size(); ++k) {
    for (size_t ci = 0; ci < chain.systems[k].catalog.size(); ++ci) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& tp : orbit.points)
        if (tp.annulus == static_cast<int>(k))
          best = std::min(best, chain.systems[k].catalog[ci].distance(tp.p));
      orbit.proximity.entries.push_back({static_cast<int>(k), ci, best});
    }
  }
  outcome.orbit = std::move(orbit);
  outcome.evals = out.evals;
  out.hit = std::move(outcome);
  return out;
}

}  // namespace

Search<DriftOutcome> drift(const Chain& chain, const Region& start, const DriftOptions& opts) {
  require(!start.empty(), Errc::InvalidParameter, "drift: empty start region");
  require(!chain.systems.empty(), Errc::InvalidParameter, "drift: empty chain");
  // the start must reach into the delta-neighborhood of the first lower boundary
  double a1 = chain.systems.front().map.domain().a;
  bool touches = false;
  for (const Point& s : region_probe_points(start, 5))
    if (s.r <= a1 + chain.delta) touches = true;
  require(touches, Errc::InvalidParameter,
          "drift: start region misses the delta-neighborhood of the lower boundary");

  return (opts.mode == DriftMode::Constructive) ? drift_constructive(chain, start, opts)
                                                : drift_symmetrized(chain, start, opts);
}

Itinerary expand_itinerary(const Chain& chain, const PseudoOrbit& orbit, double return_time) {
  double err = replay_error(chain, orbit);
  if (!(err <= 1e-9)) fail(Errc::NotReplayable, "orbit replay error " + std::to_string(err));

  Itinerary it;
  it.index_map.assign(orbit.points.size(), 0);
  size_t j = 0;  // position of the current point in the y-sequence
  it.index_map[0] = 0;
  for (size_t n = 0; n < orbit.word.symbols.size(); ++n) {
    const ChainSymbol& s = orbit.word.symbols[n];
    const Point& x = orbit.points[n].p;
    switch (s.kind) {
      case ChainSymbol::Phi:
      case ChainSymbol::PhiInv:
        it.entries.push_back(ItineraryEntry{ItineraryEntry::Flow, return_time, ""});
        j += 1;
        break;
      case ChainSymbol::Corr: {
        const Correspondence& c = chain.systems[s.annulus].poly.corr(s.index);
        double tau = c.tau(x);
        if (tau > 0.0) {
          it.entries.push_back(ItineraryEntry{ItineraryEntry::Flow, tau, ""});
          j += 1;
        }
        it.entries.push_back(
            ItineraryEntry{ItineraryEntry::Jump, 0.0,
                           "S" + std::to_string(s.annulus + 1) + ":" + std::to_string(s.index)});
        j += 1;
        break;
      }
      case ChainSymbol::Link: {
        const ChainLink& link = chain.links[s.index];
        if (link.kind == LinkKind::Transition) {
          it.entries.push_back(ItineraryEntry{ItineraryEntry::Flow, link.tau(x), ""});
          j += 1;
        } else {
          double tau = link.tau(x);
          if (tau > 0.0) {
            it.entries.push_back(ItineraryEntry{ItineraryEntry::Flow, tau, ""});
            j += 1;
          }
          it.entries.push_back(ItineraryEntry{ItineraryEntry::Jump, 0.0, link.label});
          j += 1;
        }
        break;
      }
    }
    it.index_map[n + 1] = j;
  }
  require(j <= 2 * orbit.word.symbols.size() || orbit.word.symbols.empty(), Errc::InvalidParameter,
          "itinerary bound j* <= 2n* violated");
  return it;
}

// --- serialization ---------------------------------------------------------------

namespace {

std::string fmt17(double v) {
  char buf[32];
  snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string symbol_text(const ChainSymbol& s) {
  ChainWord w;
  w.symbols.push_back(s);
  return w.text();
}

double min_circle_dist(const Chain& chain, const TaggedPoint& tp) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& circle : chain.systems[tp.annulus].catalog)
    best = std::min(best, circle.distance(tp.p));
  return best;
}

}  // namespace

void export_orbit(const Chain& chain, const PseudoOrbit& orbit, ExportFormat format,
                  std::ostream& os) {
  switch (format) {
    case ExportFormat::PointsCsv: {
      os << "n,annulus,theta,r\n";
      for (size_t n = 0; n < orbit.points.size(); ++n) {
        const auto& tp = orbit.points[n];
        os << n << ',' << tp.annulus + 1 << ',' << fmt17(tp.p.theta) << ',' << fmt17(tp.p.r)
           << '\n';
      }
      break;
    }
    case ExportFormat::WordText:
      os << orbit.word.text() << '\n';
      break;
    case ExportFormat::RecordsJsonl: {
      for (size_t n = 0; n < orbit.points.size(); ++n) {
        const auto& tp = orbit.points[n];
        json rec;
        rec["n"] = n;
        rec["annulus"] = tp.annulus + 1;
        rec["theta"] = tp.p.theta;
        rec["r"] = tp.p.r;
        rec["symbol"] = (n == 0) ? "" : symbol_text(orbit.word.symbols[n - 1]);
        rec["min_circle_dist"] = min_circle_dist(chain, tp);
        os << rec.dump() << '\n';
      }
      break;
    }
  }
  if (!os) fail(Errc::IoError, "orbit export stream failed");
}

void export_itinerary(const Itinerary& itinerary, std::ostream& os) {
  for (size_t j = 0; j < itinerary.entries.size(); ++j) {
    const auto& e = itinerary.entries[j];
    json rec;
    rec["j"] = j;
    if (e.kind == ItineraryEntry::Flow) {
      rec["kind"] = "FLOW";
      rec["duration"] = e.duration;
    } else {
      rec["kind"] = "JUMP";
      rec["id"] = e.jump_id;
    }
    os << rec.dump() << '\n';
  }
  json idx;
  idx["kind"] = "INDEX_MAP";
  idx["j_n"] = itinerary.index_map;
  os << idx.dump() << '\n';
  if (!os) fail(Errc::IoError, "itinerary export stream failed");
}

PseudoOrbit import_orbit(std::istream& points_csv, std::istream& word_text) {
  PseudoOrbit orbit;
  std::string line;
  std::getline(points_csv, line);  // header
  while (std::getline(points_csv, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    size_t n;
    int annulus;
    double theta, r;
    row >> n >> annulus >> theta >> r;
    require(static_cast<bool>(row), Errc::IoError, "bad orbit csv row: " + line);
    orbit.points.push_back(TaggedPoint{Point{theta, r}, annulus - 1});
  }
  std::string wtext((std::istreambuf_iterator<char>(word_text)),
                    std::istreambuf_iterator<char>());
  orbit.word = ChainWord::parse(wtext);
  require(orbit.points.size() == orbit.word.symbols.size() + 1, Errc::IoError,
          "orbit point/word length mismatch");
  return orbit;
}

void export_circle(const CertifiedCircle& circle, std::ostream& line_out,
                   std::ostream& samples_out, const std::string& samples_ref) {
  json rec;
  rec["rotation_number"] = circle.rotation_number();
  rec["rotation_error"] = circle.rotation_error();
  rec["residual"] = circle.residual();
  rec["nu"] = circle.nu_est();
  rec["samples_ref"] = samples_ref;
  line_out << rec.dump() << '\n';
  samples_out << "theta,r\n";
  for (size_t j = 0; j < circle.grid_size(); ++j) {
    double theta = static_cast<double>(j) / circle.grid_size();
    samples_out << fmt17(theta) << ',' << fmt17(circle.samples()[j]) << '\n';
  }
  if (!line_out || !samples_out) fail(Errc::IoError, "circle export stream failed");
}

}  // namespace drift
