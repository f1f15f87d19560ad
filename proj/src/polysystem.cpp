#include "drift/polysystem.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

namespace drift {

std::vector<Point> region_probe_points(const Region& region, int per_axis) {
  std::vector<Point> out;
  for (const auto& rect : region.rects) {
    double tw = rect.wraps() ? 0.5 : rect.theta_halfwidth;
    for (int i = 0; i < per_axis; ++i) {
      for (int j = 0; j < per_axis; ++j) {
        double ft = (per_axis == 1) ? 0.0 : (2.0 * i / (per_axis - 1) - 1.0);
        double fr = (per_axis == 1) ? 0.0 : (2.0 * j / (per_axis - 1) - 1.0);
        out.push_back(Point{mod1(rect.theta_center + 0.98 * ft * tw),
                            rect.r.mid() + 0.49 * fr * rect.r.length()});
      }
    }
  }
  return out;
}

Correspondence vertical_shear(int id, double eps, Region domain) {
  Correspondence c;
  c.id = id;
  c.domain = std::move(domain);
  c.image = c.domain;  // shear moves r by at most eps; callers treat regions as hints
  c.fwd = [eps](const Point& p) { return Point{p.theta, p.r + eps * std::sin(kTwoPi * p.theta)}; };
  c.inv = [eps](const Point& p) { return Point{p.theta, p.r - eps * std::sin(kTwoPi * p.theta)}; };
  c.label = "shear";
  return c;
}

std::vector<Correspondence> restrict_to_balls(const Correspondence& base, const Annulus& ambient,
                                              double spacing, double theta_halfwidth, double nu,
                                              double margin) {
  require(spacing > 0 && theta_halfwidth > 0, Errc::InvalidParameter,
          "restrict_to_balls: spacing and halfwidth must be positive");
  std::vector<Correspondence> out;
  const double r_halfwidth = nu * theta_halfwidth * (1.0 + margin);
  int n_theta = std::max(1, static_cast<int>(std::floor(1.0 / spacing)));
  int id = base.id;
  for (double r = ambient.a + r_halfwidth; r <= ambient.b - r_halfwidth + 1e-12; r += spacing) {
    for (int i = 0; i < n_theta; ++i) {
      Point center{mod1(i * spacing), r};
      NuBall ball = make_nu_ball(center, nu, theta_halfwidth, margin, ambient);
      Correspondence c = base;
      c.id = id++;
      c.domain = Region::ball(ball);
      c.image = c.domain;
      c.label = base.label + "|ball";
      out.push_back(std::move(c));
    }
  }
  return out;
}

const Correspondence& Polysystem::corr(int id) const {
  for (const auto& c : corrs)
    if (c.id == id) return c;
  fail(Errc::InvalidParameter, "no correspondence with id " + std::to_string(id));
}

bool OrbitWord::has_inverse() const {
  return std::any_of(symbols.begin(), symbols.end(),
                     [](const Symbol& s) { return s.kind == Symbol::PhiInv; });
}

std::string OrbitWord::text() const {
  std::string out;
  for (const auto& s : symbols) {
    if (!out.empty()) out += ' ';
    switch (s.kind) {
      case Symbol::Phi: out += 'P'; break;
      case Symbol::PhiInv: out += "Pi"; break;
      case Symbol::Corr: out += 'C' + std::to_string(s.index); break;
    }
  }
  return out;
}

OrbitWord OrbitWord::parse(const std::string& text) {
  OrbitWord word;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) {
    if (tok == "P") {
      word.symbols.push_back(sym_phi());
    } else if (tok == "Pi") {
      word.symbols.push_back(sym_phi_inv());
    } else if (tok.size() > 1 && tok[0] == 'C') {
      word.symbols.push_back(sym_corr(std::stoi(tok.substr(1))));
    } else {
      fail(Errc::ConfigError, "bad word token: " + tok);
    }
  }
  return word;
}

namespace {

Point apply_symbol(const Polysystem& poly, const Symbol& s, const Point& p, size_t step) {
  switch (s.kind) {
    case Symbol::Phi:
      return poly.phi.step(p);
    case Symbol::PhiInv:
      return poly.phi.step_back(p);
    case Symbol::Corr: {
      const Correspondence& c = poly.corr(s.index);
      if (!c.domain.contains(p))
        fail(Errc::OutsideDomain, "step " + std::to_string(step) + ": point outside Dom C" +
                                      std::to_string(s.index));
      return c.fwd(p);
    }
  }
  fail(Errc::InvalidParameter, "bad symbol");
}

Point apply_symbol_inverse(const Polysystem& poly, const Symbol& s, const Point& p) {
  switch (s.kind) {
    case Symbol::Phi:
      return poly.phi.step_back(p);
    case Symbol::PhiInv:
      return poly.phi.step(p);
    case Symbol::Corr:
      return poly.corr(s.index).inv(p);
  }
  fail(Errc::InvalidParameter, "bad symbol");
}

}  // namespace

ApplyResult apply_word(const Polysystem& poly, const OrbitWord& word, const Point& start) {
  require(poly.ambient.contains(start, 1e-9), Errc::OutsideDomain, "start outside ambient annulus");
  if (poly.restriction && !poly.restriction->contains(start, 1e-9))
    fail(Errc::OutsideRestriction, "start outside restriction sub-annulus");
  ApplyResult out;
  out.trajectory.reserve(word.size() + 1);
  out.trajectory.push_back(start);
  Point p = start;
  for (size_t i = 0; i < word.size(); ++i) {
    p = apply_symbol(poly, word.symbols[i], p, i);
    if (poly.restriction && !poly.restriction->contains(p, 1e-9))
      fail(Errc::OutsideRestriction, "step " + std::to_string(i) + " leaves the restriction");
    out.trajectory.push_back(p);
  }
  out.endpoint = p;
  return out;
}

// --- grid reachability ------------------------------------------------------

size_t GridSpec::cell_of(const Point& p) const {
  double tx = mod1(p.theta) * n_theta;
  size_t i = std::min(static_cast<size_t>(tx), n_theta - 1);
  double ry = (p.r - r_range.lo) / r_range.length() * n_r;
  size_t j = std::min(static_cast<size_t>(std::max(0.0, ry)), n_r - 1);
  return j * n_theta + i;
}

Point GridSpec::cell_center(size_t idx) const {
  size_t j = idx / n_theta;
  size_t i = idx % n_theta;
  return Point{(i + 0.5) / n_theta, r_range.lo + (j + 0.5) * r_range.length() / n_r};
}

size_t ReachSet::count() const {
  return static_cast<size_t>(std::count(occupied.begin(), occupied.end(), uint8_t{1}));
}

OrbitWord ReachSet::word_to(size_t idx) const {
  require(is_occupied(idx), Errc::InvalidParameter, "cell not occupied");
  std::vector<Symbol> rev;
  int32_t cur = first_instance[idx];
  while (instances[cur].parent >= 0) {
    rev.push_back(instances[cur].via);
    cur = instances[cur].parent;
  }
  OrbitWord word;
  word.symbols.assign(rev.rbegin(), rev.rend());
  return word;
}

Point ReachSet::seed_point_of(size_t idx) const {
  require(is_occupied(idx), Errc::InvalidParameter, "cell not occupied");
  int32_t cur = first_instance[idx];
  while (instances[cur].parent >= 0) cur = instances[cur].parent;
  return instances[cur].p;
}

namespace {

ReachSet reach_impl(const Polysystem& poly, const std::vector<Point>& seeds, const GridSpec& grid,
                    long long budget, int samples_per_cell, bool isolate_corrs) {
  ReachSet rs;
  rs.grid = grid;
  rs.occupied.assign(grid.cells(), 0);
  rs.first_instance.assign(grid.cells(), -1);

  std::vector<int> entries(grid.cells(), 0);
  std::deque<int32_t> frontier;  // instance indices awaiting expansion

  auto admit = [&](const Point& p, int32_t parent, const Symbol& s) {
    if (!grid.in_range(p)) return;
    if (poly.restriction && !poly.restriction->contains(p, 1e-12)) return;
    size_t idx = grid.cell_of(p);
    if (entries[idx] >= samples_per_cell) return;
    ++entries[idx];
    int32_t inst = static_cast<int32_t>(rs.instances.size());
    rs.instances.push_back(ReachSet::Instance{static_cast<int32_t>(idx), p, parent, s});
    if (!rs.occupied[idx]) {
      rs.occupied[idx] = 1;
      rs.first_instance[idx] = inst;
    }
    frontier.push_back(inst);
  };

  for (const Point& s : seeds) {
    if (poly.restriction && !poly.restriction->contains(s, 1e-12)) continue;
    if (grid.in_range(s)) admit(s, -1, Symbol{});
  }

  std::vector<Symbol> symbols;
  symbols.push_back(sym_phi());
  if (poly.with_inverse) symbols.push_back(sym_phi_inv());
  for (const auto& c : poly.corrs) symbols.push_back(sym_corr(c.id));

  while (!frontier.empty()) {
    int32_t inst = frontier.front();
    frontier.pop_front();
    const Point p = rs.instances[inst].p;
    const bool seed_inst = rs.instances[inst].parent < 0;
    const Symbol::Kind came_by = rs.instances[inst].via.kind;
    for (const auto& s : symbols) {
      if (rs.evals >= budget) {
        rs.budget_exhausted = true;
        return rs;
      }
      if (s.kind == Symbol::Corr) {
        // isolated-jump form: a jump must follow the base map (and the word
        // must open with the base map)
        if (isolate_corrs && (seed_inst || came_by == Symbol::Corr)) continue;
        if (!poly.corr(s.index).domain.contains(p)) continue;
      }
      ++rs.evals;
      Point q = apply_symbol(poly, s, p, 0);
      admit(q, inst, s);
    }
  }
  return rs;
}

}  // namespace

ReachSet reachable_set(const Polysystem& poly, const Region& seed, const GridSpec& grid,
                       long long budget, int samples_per_cell, bool isolate_corrs) {
  // seed cells: sample the region on a per-cell sub-grid
  std::vector<Point> seeds;
  for (size_t idx = 0; idx < grid.cells(); ++idx) {
    Point c = grid.cell_center(idx);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        Point s{mod1(c.theta + (a - 0.5) * 0.5 * grid.cell_width()),
                c.r + (b - 0.5) * 0.5 * grid.cell_height()};
        if (seed.contains(s)) {
          seeds.push_back(s);
          a = b = 2;  // one sample per cell suffices
        }
      }
  }
  return reach_impl(poly, seeds, grid, budget, samples_per_cell, isolate_corrs);
}

ReachSet reachable_set(const Polysystem& poly, const std::vector<Point>& seed_points,
                       const GridSpec& grid, long long budget, int samples_per_cell,
                       bool isolate_corrs) {
  return reach_impl(poly, seed_points, grid, budget, samples_per_cell, isolate_corrs);
}

// --- symmetrization ---------------------------------------------------------

Search<SymmetrizedWord> symmetrize_word(const Polysystem& poly, const OrbitWord& word,
                                        const Point& seed_center, double eps,
                                        const SymmetrizeOptions& opts) {
  Search<SymmetrizedWord> out;
  long long evals = 0;

  // original target: the g-orbit endpoint of the seed center
  Point g_target = seed_center;
  for (size_t i = 0; i < word.size(); ++i)
    g_target = apply_symbol(poly, word.symbols[i], g_target, i);
  evals += word.size();

  double radius0 = opts.seed_radius;
  for (int attempt = 0; attempt < 6; ++attempt, radius0 *= 0.25) {
    OrbitWord current = word;
    Point center = seed_center;
    double radius = radius0;

    auto replay_prefix = [&](size_t len, const Point& x) {
      Point p = x;
      for (size_t i = 0; i < len; ++i) p = apply_symbol(poly, current.symbols[i], p, i);
      return p;
    };
    auto pullback_prefix = [&](size_t len, const Point& y) {
      Point p = y;
      for (size_t i = len; i-- > 0;) p = apply_symbol_inverse(poly, current.symbols[i], p);
      return p;
    };

    bool stuck = false;
    int guard = 0;
    try {
      while (current.has_inverse()) {
        if (++guard > 4096) {
          stuck = true;
          break;
        }
        size_t nbar = 0;
        while (current.symbols[nbar].kind != Symbol::PhiInv) ++nbar;

        // Poincare recurrence realized as a finite forward search: find
        // nu >= 1 with phi^{nu+1}(z) back inside the current seed window's
        // prefix image. Membership is tested exactly by pullback through the
        // prefix (which is PhiInv-free, nbar being the first inverse).
        Point z = replay_prefix(nbar, center);
        evals += nbar;
        const double target_radius = radius * opts.shrink_margin;
        Point w = poly.phi.step(z);
        ++evals;
        long nu = 0;
        for (long k = 1; k <= opts.recurrence_budget; ++k) {
          w = poly.phi.step(w);  // w = phi^{k+1}(z)
          ++evals;
          Point back = pullback_prefix(nbar, w);
          evals += nbar;
          if (annulus_dist(back, center) < target_radius) {
            nu = k;
            break;
          }
        }
        if (nu == 0) {
          out.evals = evals;
          out.budget_exhausted = true;
          return out;
        }

        // Replace the PhiInv at nbar by nu forward steps. The seed center is
        // unchanged: the new orbit at position nbar+nu equals the old orbit
        // of the pullback point at position nbar+1, so the suffix replays
        // along the old orbit of a point within target_radius of the center.
        std::vector<Symbol> next;
        next.reserve(current.symbols.size() + nu - 1);
        next.insert(next.end(), current.symbols.begin(), current.symbols.begin() + nbar);
        for (long k = 0; k < nu; ++k) next.push_back(sym_phi());
        next.insert(next.end(), current.symbols.begin() + nbar + 1, current.symbols.end());
        current.symbols = std::move(next);
      }
      if (stuck) break;

      Point endpoint = center;
      for (size_t i = 0; i < current.symbols.size(); ++i)
        endpoint = apply_symbol(poly, current.symbols[i], endpoint, i);
      evals += current.symbols.size();

      if (annulus_dist(endpoint, g_target) <= eps) {
        out.hit = SymmetrizedWord{std::move(current), center, radius, endpoint, evals};
        out.evals = evals;
        return out;
      }
      // endpoint drifted beyond eps: retry with a smaller seed window
    } catch (const Error&) {
      // replay left a correspondence domain; retry with a smaller window
    }
  }
  out.evals = evals;
  out.budget_exhausted = true;
  return out;
}

// --- equivariant extension ---------------------------------------------------

Correspondence equivariant_extension(const Polysystem& poly, int corr_id, int m) {
  const Correspondence base = poly.corr(corr_id);
  if (m == 0) return base;
  const AnnulusMap& phi = poly.phi;
  const Annulus& hat = phi.hat();

  Correspondence out = base;
  out.fwd = [phi, base, m](const Point& p) {
    return phi.iterate(base.fwd(phi.iterate(p, -m)), m);
  };
  out.inv = [phi, base, m](const Point& p) {
    return phi.iterate(base.inv(phi.iterate(p, -m)), m);
  };
  if (base.transit_time) {
    out.transit_time = [phi, base, m](const Point& p) {
      return base.transit_time(phi.iterate(p, -m));
    };
  }
  out.label = base.label + "(" + std::to_string(m) + ")";

  // transport the domain/image rectangles through phi^m, verifying they stay
  // inside the continuation annulus
  auto transport = [&](const Region& region) {
    Region moved;
    for (const auto& rect : region.rects) {
      Point c{rect.theta_center, rect.r.mid()};
      Point corners[4] = {
          Point{mod1(rect.theta_center - rect.theta_halfwidth), rect.r.lo},
          Point{mod1(rect.theta_center - rect.theta_halfwidth), rect.r.hi},
          Point{mod1(rect.theta_center + rect.theta_halfwidth), rect.r.lo},
          Point{mod1(rect.theta_center + rect.theta_halfwidth), rect.r.hi}};
      Point mc = phi.iterate(c, m);
      double r_lo = mc.r, r_hi = mc.r, th_span = 0.0;
      for (const auto& corner : corners) {
        Point q = phi.iterate(corner, m);
        r_lo = std::min(r_lo, q.r);
        r_hi = std::max(r_hi, q.r);
        th_span = std::max(th_span, std::abs(circle_diff(q.theta, mc.theta)));
      }
      if (r_lo < hat.a - 1e-12 || r_hi > hat.b + 1e-12)
        fail(Errc::DomainEscapesAnnulus,
             "equivariant_extension: transported domain leaves the continuation annulus");
      moved.rects.push_back(Region::Rect{mc.theta, std::min(0.5, th_span), Interval{r_lo, r_hi}});
    }
    return moved;
  };
  out.domain = transport(base.domain);
  out.image = transport(base.image);
  return out;
}

// --- delta-boundedness -------------------------------------------------------

DeltaBoundedReport check_delta_bounded(const Polysystem& poly,
                                       const std::vector<CertifiedCircle>& catalog, double delta,
                                       long samples) {
  require(!catalog.empty(), Errc::InvalidParameter, "check_delta_bounded: empty catalog");
  DeltaBoundedReport rep;
  rep.pass = true;
  const double golden = 0.6180339887498949;
  for (size_t ci = 0; ci < catalog.size(); ++ci) {
    const CertifiedCircle& circle = catalog[ci];
    long per_circle = std::max<long>(samples / static_cast<long>(catalog.size()), 1000);
    for (long i = 0; i < per_circle; ++i) {
      double theta = mod1(i * golden);
      double depth = (i % 97 + 1) / 97.0;  // probe depths below the graph
      Point x{theta, circle.value(theta) - depth * delta * 2.5};
      if (!poly.ambient.contains(x)) continue;
      for (const auto& corr : poly.corrs) {
        if (!corr.domain.contains(x)) continue;
        Point y = corr.fwd(x);
        if (y.r >= circle.value(y.theta)) {  // lands in the closed upper region
          double d = circle.distance(x);
          if (d > rep.sup_dist) {
            rep.sup_dist = d;
            if (d >= delta && !rep.witness) {
              rep.witness = x;
              rep.witness_circle = ci;
            }
          }
        }
      }
    }
  }
  rep.pass = rep.sup_dist < delta;
  if (rep.pass) rep.witness.reset();
  return rep;
}

}  // namespace drift
