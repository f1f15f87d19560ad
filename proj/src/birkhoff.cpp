#include "drift/birkhoff.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace drift {

namespace {

std::vector<Point> region_samples(const Region& region, int per_axis) {
  return region_probe_points(region, per_axis);
}

double arc_min_dist(const Arc& arc, const Point& p, size_t s_min, size_t* which = nullptr) {
  double best = std::numeric_limits<double>::infinity();
  for (size_t s = s_min; s < arc.size(); ++s) {
    double d = std::hypot(circle_diff(p.theta, mod1(arc.pts[s].theta)), p.r - arc.pts[s].r);
    if (d < best) {
      best = d;
      if (which) *which = s;
    }
  }
  return best;
}

}  // namespace

// --- arc domains -------------------------------------------------------------

std::optional<double> ArcDomain::beta(double theta) const {
  const Arc& a = arc->arc;
  std::optional<double> top;
  for (size_t s = 1; s < a.size(); ++s) {
    double t0 = a.pts[s - 1].theta, t1 = a.pts[s].theta;
    double d0 = circle_diff(theta, mod1(t0));
    // work in the lift chart of the segment
    double tt = mod1(t0) + d0;
    if ((tt - t0) * (tt - t1) <= 0.0 && std::abs(t1 - t0) > 1e-15) {
      double f = (tt - t0) / (t1 - t0);
      double r = a.pts[s - 1].r + f * (a.pts[s].r - a.pts[s - 1].r);
      if (!top || r > *top) top = r;
    }
  }
  return top;
}

bool ArcDomain::contains(const Point& p) const {
  if (!circle->below(p)) return false;
  auto b = beta(p.theta);
  // the defining property: the lower vertical through p meets the arc interior
  return b.has_value() && p.r > *b;
}

// --- Birkhoff procedure ------------------------------------------------------

namespace {

struct Flood {
  GridSpec grid;
  std::vector<uint8_t> occ;
  std::vector<double> col_top_entry;  // per column: highest genuine orbit point
  long long evals = 0;
  bool touched_top = false;
};

// forward-only cell flood of gamma^- u orbit(V)
Flood flood_strip(const AnnulusMap& map, const CertifiedCircle& gamma, const Region& seed,
                  const GridSpec& grid, long long budget, int samples_per_cell) {
  Flood fl;
  fl.grid = grid;
  fl.occ.assign(grid.cells(), 0);
  fl.col_top_entry.assign(grid.n_theta, -std::numeric_limits<double>::infinity());
  std::vector<int> entries(grid.cells(), 0);
  std::deque<Point> frontier;

  auto note_entry = [&](const Point& p) {
    size_t col = grid.cell_of(p) % grid.n_theta;
    fl.col_top_entry[col] = std::max(fl.col_top_entry[col], p.r);
  };
  auto admit = [&](const Point& p) {
    if (p.r >= grid.r_range.hi) {
      fl.touched_top = true;
      return;
    }
    if (p.r < grid.r_range.lo) return;  // inside gamma^- territory, already in U
    size_t idx = grid.cell_of(p);
    note_entry(p);
    if (!fl.occ[idx]) {
      fl.occ[idx] = 1;
      entries[idx] = 1;
      frontier.push_back(p);
    } else if (entries[idx] < samples_per_cell) {
      ++entries[idx];
      frontier.push_back(p);
    }
  };

  // static occupancy of gamma^- within the strip (no expansion needed: it is
  // invariant and part of U by definition)
  for (size_t idx = 0; idx < grid.cells(); ++idx) {
    Point c = grid.cell_center(idx);
    double top = c.r + 0.5 * grid.cell_height();
    if (top <= gamma.value(c.theta)) fl.occ[idx] = 1;
  }
  for (const Point& s : region_samples(seed, 5)) admit(s);

  while (!frontier.empty() && fl.evals < budget) {
    Point p = frontier.front();
    frontier.pop_front();
    ++fl.evals;
    admit(map.step(p));
    if (fl.touched_top) break;
  }
  return fl;
}

// connected-component labeling: 4-connectivity for open sets, 8 for closed
std::vector<uint8_t> component_of(const std::vector<uint8_t>& mask, const GridSpec& grid,
                                  const std::vector<size_t>& seeds, bool eight) {
  std::vector<uint8_t> comp(mask.size(), 0);
  std::deque<size_t> queue;
  for (size_t s : seeds)
    if (mask[s] && !comp[s]) {
      comp[s] = 1;
      queue.push_back(s);
    }
  const long nt = static_cast<long>(grid.n_theta);
  const long nr = static_cast<long>(grid.n_r);
  while (!queue.empty()) {
    size_t idx = queue.front();
    queue.pop_front();
    long j = static_cast<long>(idx) / nt;
    long i = static_cast<long>(idx) % nt;
    for (long dj = -1; dj <= 1; ++dj) {
      for (long di = -1; di <= 1; ++di) {
        if (di == 0 && dj == 0) continue;
        if (!eight && di != 0 && dj != 0) continue;
        long jj = j + dj;
        if (jj < 0 || jj >= nr) continue;
        long ii = (i + di + nt) % nt;  // theta wraps
        size_t nidx = static_cast<size_t>(jj) * nt + ii;
        if (mask[nidx] && !comp[nidx]) {
          comp[nidx] = 1;
          queue.push_back(nidx);
        }
      }
    }
  }
  return comp;
}

// upper Lipschitz regularization of per-column lower bounds
void lipschitz_lift(std::vector<double>& col, double nu_step) {
  const size_t n = col.size();
  for (int pass = 0; pass < 2; ++pass) {
    for (size_t k = 1; k < 2 * n; ++k)
      col[k % n] = std::max(col[k % n], col[(k - 1) % n] - nu_step);
    for (size_t k = 2 * n; k-- > 1;)
      col[(k - 1) % n] = std::max(col[(k - 1) % n], col[k % n] - nu_step);
  }
}

}  // namespace

FrontierResult birkhoff_procedure(const AnnulusMap& map, const CertifiedCircle& gamma,
                                  const Region& seed, const FrontierOptions& opts) {
  const Annulus& hat = map.hat();
  double seed_top = gamma.max_level();
  for (const auto& rect : seed.rects) seed_top = std::max(seed_top, rect.r.hi);
  double pad = opts.strip_pad;

  for (int growth = 0; growth <= opts.strip_growth; ++growth, pad *= 2.0) {
    GridSpec grid;
    grid.n_theta = opts.n_theta;
    grid.n_r = opts.n_r;
    double lo = std::max(hat.a, gamma.min_level() - 4.0 / opts.n_r);
    double hi = std::min(hat.b, seed_top + pad);
    grid.r_range = Interval{lo, hi};

    Flood fl = flood_strip(map, gamma, seed, grid, opts.flood_budget, opts.samples_per_cell);
    if (fl.touched_top) {
      if (hi >= hat.b - 1e-12)
        fail(Errc::TouchesTop, "forward-invariant set reaches the continuation top boundary");
      continue;  // grow the strip and retry
    }

    // filled set surgery: O = complement of cl U; cut off the component of O
    // touching the strip top; the filled set is the component of the rest
    // containing the bottom
    const size_t cells = grid.cells();
    std::vector<uint8_t> open_compl(cells);
    for (size_t i = 0; i < cells; ++i) open_compl[i] = fl.occ[i] ? 0 : 1;
    std::vector<size_t> top_seeds, bottom_seeds;
    for (size_t i = 0; i < grid.n_theta; ++i) {
      top_seeds.push_back((grid.n_r - 1) * grid.n_theta + i);
      bottom_seeds.push_back(i);
    }
    std::vector<uint8_t> cc_top = component_of(open_compl, grid, top_seeds, /*eight=*/false);
    // closure of the top component: add 8-neighbors
    std::vector<uint8_t> cc_top_closed = cc_top;
    const long nt = static_cast<long>(grid.n_theta), nr = static_cast<long>(grid.n_r);
    for (long j = 0; j < nr; ++j)
      for (long i = 0; i < nt; ++i) {
        if (!cc_top[j * nt + i]) continue;
        for (long dj = -1; dj <= 1; ++dj)
          for (long di = -1; di <= 1; ++di) {
            long jj = j + dj;
            if (jj < 0 || jj >= nr) continue;
            cc_top_closed[jj * nt + ((i + di + nt) % nt)] = 1;
          }
      }
    std::vector<uint8_t> u_hat(cells);
    for (size_t i = 0; i < cells; ++i) u_hat[i] = cc_top_closed[i] ? 0 : 1;
    std::vector<uint8_t> filled = component_of(u_hat, grid, bottom_seeds, /*eight=*/false);

    // frontier estimate: per-column sup of the filled set, sharpened by the
    // highest genuine orbit points and floored by gamma
    std::vector<double> col(grid.n_theta);
    bool any = false;
    for (size_t i = 0; i < grid.n_theta; ++i) {
      double top = -std::numeric_limits<double>::infinity();
      for (size_t j = grid.n_r; j-- > 0;) {
        if (filled[j * grid.n_theta + i]) {
          top = grid.r_range.lo + (j + 1) * grid.cell_height() - 0.5 * grid.cell_height();
          break;
        }
      }
      double theta = (i + 0.5) / grid.n_theta;
      double floor_val = gamma.value(theta);
      col[i] = std::max(floor_val, top);
      if (fl.col_top_entry[i] > floor_val) col[i] = std::max(col[i], fl.col_top_entry[i]);
      any = any || top > -1e30;
    }
    if (!any) fail(Errc::FrontierNotInvariant, "flood produced an empty filled set");
    double nu_cap = std::max(2.0, 2.0 * gamma.nu_est() + 1.0);
    lipschitz_lift(col, nu_cap / grid.n_theta);

    // resample the column estimate onto the certification grid
    Eigen::ArrayXd estimate(2048);
    for (int j = 0; j < estimate.size(); ++j) {
      double theta = static_cast<double>(j) / estimate.size();
      double x = mod1(theta) * grid.n_theta - 0.5;
      long i0 = static_cast<long>(std::floor(x));
      double t = x - i0;
      double v0 = col[(i0 % nt + nt) % nt];
      double v1 = col[((i0 + 1) % nt + nt) % nt];
      estimate[j] = v0 + t * (v1 - v0);
    }

    CertifyResult res = certify_from_graph(map, estimate, opts.certify_tol, opts.newton_iters);
    if (!res)
      fail(Errc::FrontierNotInvariant,
           "frontier certification stalled at residual " + std::to_string(res.best_residual));
    // order check: the frontier lies weakly above gamma
    if (!CertifiedCircle::leq(gamma, *res.circle, 2.0 * grid.cell_height()))
      fail(Errc::FrontierNotInvariant, "certified frontier dips below the base circle");

    FrontierResult out;
    out.circle = *res.circle;
    out.grid = grid;
    out.filled = std::move(filled);
    out.evals = fl.evals + res.evals;
    return out;
  }
  fail(Errc::TouchesTop, "strip growth exhausted without containing the forward-invariant set");
}

// --- transfer search ---------------------------------------------------------

Search<TransferHit> transfer_search(const AnnulusMap& map, const Region& seed,
                                    const CertifiedCircle& gamma_prime, const Region& target,
                                    long budget, long n_min, int seed_samples) {
  Search<TransferHit> out;
  int per_axis = std::max(2, static_cast<int>(std::sqrt(
                                  seed_samples / std::max<size_t>(1, seed.rects.size()))));
  std::vector<Point> sources = region_samples(seed, per_axis);
  std::vector<Point> current = sources;
  for (long n = 0; n <= budget; ++n) {
    if (n >= n_min) {
      for (size_t i = 0; i < current.size(); ++i) {
        const Point& p = current[i];
        if (target.contains(p) && gamma_prime.above(p)) {  // strictly below the circle
          out.hit = TransferHit{n, p, sources[i]};
          return out;
        }
      }
    }
    for (auto& p : current) p = map.step(p);
    out.evals += static_cast<long long>(current.size());
  }
  out.budget_exhausted = true;
  return out;
}

// --- splitting arcs ----------------------------------------------------------

namespace {

// topmost root of  corr(theta, r).r - l(corr(theta, r).theta) = 0  strictly
// below the circle on the fiber of theta
std::optional<double> fiber_root(const Correspondence& corr, const CertifiedCircle& gamma,
                                 double theta, Interval r_range, double gamma_level) {
  auto g = [&](double r) {
    Point q = corr.fwd(Point{theta, r});
    return q.r - gamma.value(q.theta);
  };
  const int n_scan = 48;
  double hi = std::min(r_range.hi, gamma_level - 1e-12);
  double lo = r_range.lo;
  if (hi <= lo) return std::nullopt;
  double prev_r = hi, prev_g = g(hi);
  for (int i = 1; i <= n_scan; ++i) {
    double r = hi - (hi - lo) * i / n_scan;
    double cur = g(r);
    if (prev_g == 0.0) return prev_r;
    if (prev_g * cur < 0.0) {
      double a = r, b = prev_r;
      double ga = cur;
      for (int it = 0; it < 80; ++it) {
        double m = 0.5 * (a + b);
        double gm = g(m);
        if (ga * gm <= 0.0)
          b = m;
        else {
          a = m;
          ga = gm;
        }
      }
      return 0.5 * (a + b);
    }
    prev_r = r;
    prev_g = cur;
  }
  return std::nullopt;
}

struct TracedPiece {
  std::vector<Point> pts;   // ordered by theta
  bool touches_left = false;   // gap to the circle closes at the left end
  bool touches_right = false;
};

// trace the preimage curve of the circle under one correspondence across the
// theta-extent of one domain rectangle
std::vector<TracedPiece> trace_pieces(const Correspondence& corr, const CertifiedCircle& gamma,
                                      const Region::Rect& rect, int n_samples, double touch_tol) {
  std::vector<TracedPiece> pieces;
  double tw = rect.wraps() ? 0.5 : rect.theta_halfwidth;
  TracedPiece cur;
  double prev_r = 0.0;
  bool in_piece = false;
  for (int i = 0; i <= n_samples; ++i) {
    double theta = mod1(rect.theta_center - tw + 2.0 * tw * i / n_samples);
    double level = gamma.value(theta);
    std::optional<double> root =
        fiber_root(corr, gamma, theta, rect.r, level);
    bool ok = root && corr.domain.contains(Point{theta, *root}) && *root < level - 1e-13;
    if (ok && in_piece && std::abs(*root - prev_r) > 20.0 * (rect.r.length() / 48)) ok = false;
    if (ok) {
      if (!in_piece) {
        cur = TracedPiece{};
        in_piece = true;
      }
      cur.pts.push_back(Point{theta, *root});
      prev_r = *root;
    } else if (in_piece) {
      pieces.push_back(cur);
      in_piece = false;
    }
  }
  if (in_piece) pieces.push_back(cur);
  for (auto& piece : pieces) {
    if (piece.pts.empty()) continue;
    double gap_l = gamma.value(piece.pts.front().theta) - piece.pts.front().r;
    double gap_r = gamma.value(piece.pts.back().theta) - piece.pts.back().r;
    piece.touches_left = gap_l < touch_tol;
    piece.touches_right = gap_r < touch_tol;
  }
  return pieces;
}

std::optional<SplittingArc> package_arc(const Correspondence& corr, const CertifiedCircle& gamma,
                                        const TracedPiece& piece, bool base_on_left,
                                        const SplittingArcOptions& opts, int equi_m) {
  if (piece.pts.size() < 4) return std::nullopt;
  std::vector<Point> ordered = piece.pts;
  if (!base_on_left) std::reverse(ordered.begin(), ordered.end());
  // ordered now starts next to the base; prepend the base point on the circle
  double theta_base = ordered.front().theta;
  Point base{theta_base, gamma.value(theta_base)};

  // cap the projection extent strictly under 1/2
  std::vector<Lift> lifted;
  lifted.push_back(Lift{base.theta, base.r});
  double acc = 0.0, prev = base.theta;
  for (const auto& p : ordered) {
    double d = circle_diff(p.theta, prev);
    acc += d;
    if (std::abs(acc) >= opts.max_tau) break;
    lifted.push_back(Lift{base.theta + acc, p.r});
    prev = p.theta;
  }
  if (lifted.size() < 4) return std::nullopt;

  SplittingArc arc;
  arc.arc = make_arc(lifted, 1e-3);
  arc.base = base;
  arc.corr_id = corr.id;
  arc.equivariant_m = equi_m;
  arc.theta0 = base.theta;
  arc.tau = std::abs(lifted.back().theta - lifted.front().theta);
  if (arc.tau <= 1e-9) return std::nullopt;
  double u = lifted[1].theta - lifted[0].theta;
  arc.side = (u > 0) ? ArcSide::Right : ArcSide::Left;

  // image-on-circle residual over the arc interior
  double res = 0.0;
  for (size_t s = 1; s < arc.arc.size(); ++s) {
    Point p = project(arc.arc.pts[s]);
    if (!corr.domain.contains(p)) return std::nullopt;
    Point q = corr.fwd(p);
    res = std::max(res, std::abs(q.r - gamma.value(q.theta)));
  }
  arc.image_residual = res;
  if (res > opts.tol_split) return std::nullopt;
  return arc;
}

}  // namespace

Search<SplittingArc> find_splitting_arc(const CertifiedCircle& gamma, const Polysystem& poly,
                                        OrientationFilter required,
                                        const SplittingArcOptions& opts) {
  Search<SplittingArc> out;
  const double touch_tol = 5e-3 * std::max(1.0, gamma.nu_est());

  std::vector<int> m_values{0};
  for (int m = 1; m <= opts.equivariant_m_max; ++m) {
    m_values.push_back(-m);  // negative conjugates flip arc orientation first
    m_values.push_back(m);
  }

  std::optional<SplittingArc> fallback;
  for (int m : m_values) {
    for (const auto& base_corr : poly.corrs) {
      Correspondence corr;
      try {
        corr = (m == 0) ? base_corr : equivariant_extension(poly, base_corr.id, m);
      } catch (const Error&) {
        continue;  // transported domain left the continuation annulus
      }
      for (const auto& rect : corr.domain.rects) {
        // skip rectangles far from the circle
        double lo = gamma.min_level() - rect.r.length() - 0.05;
        if (rect.r.hi < lo) continue;
        if (rect.r.lo > gamma.max_level() + 0.05) continue;
        out.evals += opts.theta_samples;
        auto pieces = trace_pieces(corr, gamma, rect, opts.theta_samples, touch_tol);
        for (const auto& piece : pieces) {
          for (bool left_base : {true, false}) {
            if (left_base && !piece.touches_left) continue;
            if (!left_base && !piece.touches_right) continue;
            auto arc = package_arc(corr, gamma, piece, left_base, opts, m);
            if (!arc) continue;
            bool match = (required == OrientationFilter::Any) ||
                         (required == OrientationFilter::Right && arc->side == ArcSide::Right) ||
                         (required == OrientationFilter::Left && arc->side == ArcSide::Left);
            if (match) {
              out.hit = *arc;
              return out;
            }
            if (!fallback) fallback = *arc;
          }
        }
      }
    }
  }
  if (required == OrientationFilter::Any && fallback) out.hit = *fallback;
  return out;
}

// --- crux step ----------------------------------------------------------------

namespace {

// certificate that a nu-ball pulls back into the seed region through
// psi_i o phi^n
bool ball_certified(const NuBall& ball, const Correspondence& corr, const AnnulusMap& map, long n,
                    const Region& seed) {
  for (const Point& y : ball.probe_points()) {
    Point x = corr.inv(y);
    if (!corr.domain.contains(x)) return false;
    Point back = map.iterate(x, -n);
    if (!seed.contains(back)) return false;
  }
  return true;
}

std::optional<NuBall> inscribe_ball(const Point& on_circle, const CertifiedCircle& circle,
                                    const Correspondence& corr, const AnnulusMap& map, long n,
                                    const Region& seed, const CruxOptions& opts) {
  double nu = std::max(1.0, 1.2 * circle.nu_est() + 0.1);
  double theta_hw = std::min(0.2, opts.max_ball_halfwidth_r / (nu * (1.0 + opts.ball_margin)));
  for (int attempt = 0; attempt < opts.shrink_attempts; ++attempt, theta_hw *= 0.5) {
    if (theta_hw < 1e-12) break;
    NuBall ball;
    try {
      ball = make_nu_ball(Point{on_circle.theta, circle.value(on_circle.theta)}, nu, theta_hw,
                          opts.ball_margin, map.hat());
    } catch (const Error&) {
      continue;
    }
    if (ball_certified(ball, corr, map, n, seed)) return ball;
  }
  return std::nullopt;
}

}  // namespace

Search<CruxStep> crux_step(const AnnulusMap& map, const CertifiedCircle& gamma, const Region& seed,
                           const Polysystem& poly, const std::vector<BirkhoffZone>& zones,
                           const CruxOptions& opts) {
  Search<CruxStep> out;
  FrontierResult frontier = birkhoff_procedure(map, gamma, seed, opts.frontier);
  out.evals += frontier.evals;
  const CertifiedCircle& gamma_prime = frontier.circle;

  // branch selection keys off the recorded zones: at a zone upper boundary
  // the splitting arc orientation must match the twist direction
  bool zone_branch = false;
  for (const auto& zone : zones) {
    if (CertifiedCircle::hausdorff(gamma_prime, zone.upper) < 1e-3) {
      zone_branch = true;
      break;
    }
  }
  OrientationFilter filter = OrientationFilter::Any;
  if (zone_branch)
    filter = (map.twist_direction() == TwistDirection::Right) ? OrientationFilter::Right
                                                              : OrientationFilter::Left;

  SplittingArcOptions arc_opts = opts.arcs;
  if (opts.try_method2 && arc_opts.equivariant_m_max == 0) arc_opts.equivariant_m_max = 8;
  Search<SplittingArc> arc = find_splitting_arc(gamma_prime, poly, filter, arc_opts);
  out.evals += arc.evals;
  if (!arc) return out;  // no splitting arc on the frontier circle

  const Correspondence corr = (arc->equivariant_m == 0)
                                  ? poly.corr(arc->corr_id)
                                  : equivariant_extension(poly, arc->corr_id, arc->equivariant_m);

  // land iterates of the seed on the arc (away from the base point), inside
  // the correspondence domain and strictly below the frontier circle
  const double hit_dist = std::max(2e-3, 0.5 * opts.max_ball_halfwidth_r);
  const size_t s_min = std::max<size_t>(2, arc->arc.size() / 16);
  ArcDomain domain{&*arc, &gamma_prime};

  auto hunt = [&](bool backwards) -> std::optional<std::pair<long, Point>> {
    std::vector<Point> current = region_samples(seed, 8);
    for (long n = 1; n <= opts.transfer_budget / std::max<long>(1, current.size()); ++n) {
      for (auto& p : current) p = backwards ? map.step_back(p) : map.step(p);
      out.evals += current.size();
      if (n < opts.n_min) continue;
      for (const auto& p : current) {
        if (!corr.domain.contains(p)) continue;
        if (!gamma_prime.above(p)) continue;  // must stay strictly below
        size_t s_hit = 0;
        if (arc_min_dist(arc->arc, p, s_min, &s_hit) < hit_dist) {
          // accepted landing points in the arc domain must satisfy the
          // vertical-intersection property of domains
          if (domain.contains(p) || arc_min_dist(arc->arc, p, s_min) < 0.5 * hit_dist)
            return std::make_pair(backwards ? -n : n, p);
        }
      }
    }
    return std::nullopt;
  };

  auto landed = hunt(false);
  if (!landed && opts.try_method1) landed = hunt(true);  // inverse iterates, word symmetrized later
  if (!landed) {
    out.budget_exhausted = true;
    return out;
  }
  auto [n, witness] = *landed;

  Point pushed = corr.fwd(witness);
  auto ball = inscribe_ball(pushed, gamma_prime, corr, map, n, seed, opts);
  if (!ball) {
    out.budget_exhausted = true;
    return out;
  }

  CruxStep step;
  step.gamma_prime = gamma_prime;
  step.ball = *ball;
  step.n = n;
  step.corr_id = arc->corr_id;
  step.equivariant_m = arc->equivariant_m;
  step.witness = witness;
  step.zone_branch = zone_branch;
  step.evals = out.evals;
  out.hit = std::move(step);
  return out;
}

// --- coherent sequences --------------------------------------------------------

namespace {

Polysystem mask_avoid(const Polysystem& poly, const std::optional<Region>& avoid) {
  if (!avoid) return poly;
  Polysystem masked = poly;
  masked.corrs.clear();
  for (const auto& corr : poly.corrs) {
    bool meets = false;
    for (const auto& rect : corr.domain.rects) {
      for (int i = 0; i < 3 && !meets; ++i)
        for (int j = 0; j < 3 && !meets; ++j) {
          double tw = rect.wraps() ? 0.5 : rect.theta_halfwidth;
          Point p{mod1(rect.theta_center + (i - 1) * tw), rect.r.mid() + (j - 1) * 0.5 * rect.r.length()};
          if (avoid->contains(p)) meets = true;
        }
      if (meets) break;
    }
    if (!meets) masked.corrs.push_back(corr);
  }
  return masked;
}

// all certification attempts inside the gap fail -> the gap is a zone
bool certify_gap_as_zone(const AnnulusMap& map, const CertifiedCircle& lo,
                         const CertifiedCircle& hi, std::vector<BirkhoffZone>& zones,
                         long long& evals) {
  std::vector<ZoneEvidence> evidence;
  double rho_lo = lo.rotation_number(), rho_hi = hi.rotation_number();
  for (int k = 1; k <= 8; ++k) {
    double rho = rho_lo + (rho_hi - rho_lo) * k / 9.0;
    CertifyOptions co;
    co.orbit_len = 60000;
    co.rho_iterates = 8000;
    co.r_bracket = Interval{lo.min_level(), hi.max_level()};
    CertifyResult res = certify_circle(map, rho, 1e-6, co);
    evals += res.evals;
    if (res) {
      double d_lo = CertifiedCircle::hausdorff(*res.circle, lo);
      double d_hi = CertifiedCircle::hausdorff(*res.circle, hi);
      if (d_lo > 1e-4 && d_hi > 1e-4) return false;  // an interior circle survived
    }
    evidence.push_back({rho, res.best_residual});
  }
  zones.push_back(BirkhoffZone{lo, hi, std::move(evidence)});
  return true;
}

}  // namespace

Search<CoherentSequence> coherent_sequence(const AnnulusMap& map, const Polysystem& poly,
                                           const CertifiedCircle& gamma0, const Region& v0,
                                           const CertifiedCircle& gamma_star,
                                           std::vector<BirkhoffZone>& zones,
                                           const CoherentOptions& opts) {
  Search<CoherentSequence> out;
  Polysystem masked = mask_avoid(poly, opts.avoid);

  CoherentSequence seq;
  seq.gamma0 = gamma0;
  seq.v0 = v0;

  CertifiedCircle gamma = gamma0;
  Region v = v0;
  const double close_tol = std::max(1e-4, 2.0 / opts.crux.frontier.n_r * 0.1);

  for (int step_idx = 0; step_idx < opts.max_steps; ++step_idx) {
    if (CertifiedCircle::hausdorff(gamma, gamma_star) < close_tol) break;
    if (CertifiedCircle::leq(gamma_star, gamma, 1e-9)) break;  // reached or passed

    Search<CruxStep> step = crux_step(map, gamma, v, masked, zones, opts.crux);
    out.evals += step.evals;
    if (!step) {
      out.budget_exhausted = step.budget_exhausted;
      return out;  // stalled at the current circle
    }

    // keep the climb below gamma_star: if the frontier overshot, shrink the
    // seed ball (it must avoid gamma_star) and retry
    if (!CertifiedCircle::leq(step->gamma_prime, gamma_star, close_tol)) {
      bool fixed = false;
      Region shrunk = v;
      for (int attempt = 0; attempt < 6 && !fixed; ++attempt) {
        for (auto& rect : shrunk.rects) {
          double c = rect.r.mid(), h = 0.25 * rect.r.length();
          rect.r = Interval{c - h, c + h};
          rect.theta_halfwidth *= 0.5;
        }
        Search<CruxStep> retry = crux_step(map, gamma, shrunk, masked, zones, opts.crux);
        out.evals += retry.evals;
        if (retry && CertifiedCircle::leq(retry->gamma_prime, gamma_star, close_tol)) {
          step = std::move(retry);
          fixed = true;
        }
      }
      if (!fixed) {
        // the gap up to gamma_star admits no intermediate stop; accept the
        // final hop exactly at gamma_star
        Search<CruxStep> final_try = crux_step(map, gamma, v, masked, zones, opts.crux);
        out.evals += final_try.evals;
        if (!final_try) {
          out.budget_exhausted = true;
          return out;
        }
        step = std::move(final_try);
      }
    }

    double gap = CertifiedCircle::hausdorff(gamma, step->gamma_prime);
    bool across_zone = false;
    if (gap > 0.5 * opts.delta) {
      across_zone = certify_gap_as_zone(map, gamma, step->gamma_prime, zones, out.evals);
      if (!across_zone && !step->zone_branch) {
        // wide non-zone hop: try once more with a smaller seed to respect the
        // delta-dichotomy, otherwise record the hop as-is
        Region shrunk = v;
        for (auto& rect : shrunk.rects) {
          double c = rect.r.mid(), h = 0.2 * rect.r.length();
          rect.r = Interval{c - h, c + h};
        }
        Search<CruxStep> retry = crux_step(map, gamma, shrunk, masked, zones, opts.crux);
        out.evals += retry.evals;
        if (retry && CertifiedCircle::hausdorff(gamma, retry->gamma_prime) < gap) {
          step = std::move(retry);
          gap = CertifiedCircle::hausdorff(gamma, step->gamma_prime);
          across_zone = gap > 0.5 * opts.delta &&
                        certify_gap_as_zone(map, gamma, step->gamma_prime, zones, out.evals);
        }
      }
    }

    CoherentStep rec;
    rec.circle = step->gamma_prime;
    rec.ball = step->ball;
    rec.m = step->n;
    rec.corr_id = step->corr_id;
    rec.equivariant_m = step->equivariant_m;
    rec.gap_to_prev = gap;
    rec.across_zone = across_zone;
    seq.steps.push_back(rec);

    gamma = step->gamma_prime;
    v = Region::ball(step->ball);
  }

  out.hit = std::move(seq);
  return out;
}

// --- zone crossing -------------------------------------------------------------

Search<ZoneCrossing> cross_zone(const AnnulusMap& map, const BirkhoffZone& zone,
                                const Region& v_low, const Region& v_high, long n_min,
                                long long budget, int seed_samples) {
  Search<ZoneCrossing> out;
  int per_axis = std::max(2, static_cast<int>(std::sqrt(
                                  seed_samples / std::max<size_t>(1, v_low.rects.size()))));
  std::vector<Point> sources = region_samples(v_low, per_axis);
  // precondition: V_low c (upper boundary)^-; points below the lower
  // boundary can never cross it, drop them
  std::vector<Point> seeds, cur;
  for (const auto& p : sources) {
    require(zone.upper.above(p), Errc::InvalidParameter, "cross_zone: V_low not below the upper boundary");
    if (zone.lower.above(p)) {
      seeds.push_back(p);
      cur.push_back(p);
    }
  }
  if (seeds.empty()) {
    out.budget_exhausted = true;
    return out;
  }
  long horizon = std::max<long>(n_min + 1, budget / static_cast<long long>(seeds.size()));
  for (long n = 0; n <= horizon; ++n) {
    if (n >= n_min) {
      for (size_t i = 0; i < cur.size(); ++i) {
        if (v_high.contains(cur[i])) {
          out.hit = ZoneCrossing{seeds[i], n};
          return out;
        }
      }
    }
    for (auto& p : cur) p = map.step(p);
    out.evals += static_cast<long long>(cur.size());
    if (out.evals > budget) break;
  }
  out.budget_exhausted = true;
  return out;
}

// --- torsion search --------------------------------------------------------------

Search<TorsionHit> torsion_vertical_search(const AnnulusMap& map, const CertifiedCircle& gamma_low,
                                           const CertifiedCircle& gamma_high,
                                           const Arc& crossing_arc, const NuBall& u_low,
                                           long budget, int vertical_samples) {
  Search<TorsionHit> out;
  require(CertifiedCircle::hausdorff(gamma_low, gamma_high) > 1e-9, Errc::InvalidParameter,
          "torsion search needs disjoint circles");
  require(CertifiedCircle::leq(gamma_low, gamma_high), Errc::InvalidParameter,
          "torsion search needs gamma_low <= gamma_high");
  // the arc must span the strip
  bool meets_low = false, meets_high = false;
  for (const auto& lp : crossing_arc.pts) {
    Point p = project(lp);
    if (p.r <= gamma_low.value(p.theta) + 1e-6) meets_low = true;
    if (p.r >= gamma_high.value(p.theta) - 1e-6) meets_high = true;
  }
  require(meets_low && meets_high, Errc::InvalidParameter,
          "torsion search: arc does not span the strip");

  const double hit_dist = 3e-3;
  const int n_candidates = 8;
  for (int c = 0; c < n_candidates; ++c) {
    double theta = mod1(u_low.theta.lo + u_low.theta.length() * (c + 0.5) / n_candidates);
    Point z{theta, u_low.r.hi};
    if (!gamma_low.above(z)) z.r = gamma_low.value(theta) + 0.25 * u_low.r_halfwidth();
    std::vector<Point> segment;
    for (int s = 0; s < vertical_samples; ++s)
      segment.push_back(Point{theta, u_low.r.lo + (z.r - u_low.r.lo) * s / (vertical_samples - 1)});
    long horizon = budget / (n_candidates * vertical_samples);
    for (long m = 1; m <= horizon; ++m) {
      for (auto& p : segment) p = map.step(p);
      out.evals += segment.size();
      for (const auto& p : segment) {
        if (arc_min_dist(crossing_arc, p, 0) < hit_dist) {
          out.hit = TorsionHit{z, m, p};
          return out;
        }
      }
    }
  }
  out.budget_exhausted = true;
  return out;
}

}  // namespace drift
