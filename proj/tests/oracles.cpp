#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace oracles {

double rotation_number(const AnnulusMap& map, const Point& seed, long iterates) {
  auto weight = [](double t) { return (t <= 0 || t >= 1) ? 0.0 : std::exp(-1.0 / (t * (1.0 - t))); };
  // reduced points: iterating the raw lift loses one ulp per step once the
  // angle grows large
  Point x = seed;
  double branch = std::floor(map.step(drift::lift(seed)).theta - seed.theta);
  double num = 0.0, den = 0.0;
  for (long n = 0; n < iterates; ++n) {
    Point y = map.step(x);
    double w = weight((n + 0.5) / iterates);
    num += w * (branch + drift::mod1(y.theta - x.theta - branch));
    den += w;
    x = y;
  }
  return num / den;
}

std::vector<Convergent> convergents(double x, int count) {
  std::vector<Convergent> out;
  long p_prev = 1, q_prev = 0;
  long p_cur = static_cast<long>(std::floor(x));
  long q_cur = 1;
  double frac = x - std::floor(x);
  out.push_back({p_cur, q_cur});
  for (int i = 1; i < count && frac > 1e-14; ++i) {
    double inv = 1.0 / frac;
    long a = static_cast<long>(std::floor(inv));
    frac = inv - a;
    long p_next = a * p_cur + p_prev;
    long q_next = a * q_cur + q_prev;
    p_prev = p_cur;
    q_prev = q_cur;
    p_cur = p_next;
    q_cur = q_next;
    out.push_back({p_cur, q_cur});
  }
  return out;
}

PeriodicOrbit find_periodic_orbit(const AnnulusMap& map, long p, long q, double r_guess) {
  PeriodicOrbit best;
  double best_err = 1e10;
  for (double theta0 : {0.0, 0.25, 0.5, 0.75, 0.1, 0.6}) {
    for (double dr : {0.0, 0.005, -0.005, 0.01, -0.01, 0.02, -0.02}) {
      Lift x{theta0, r_guess + dr};
      bool ok = false;
      for (int it = 0; it < 60; ++it) {
        Lift y = x;
        drift::Mat2 M = drift::Mat2::Identity();
        for (long n = 0; n < q; ++n) {
          M = map.jacobian(drift::project(y)) * M;
          y = map.step(y);
        }
        double g1 = y.theta - x.theta - p;
        double g2 = y.r - x.r;
        double err = std::hypot(g1, g2);
        if (err < 1e-12) {
          ok = true;
          break;
        }
        drift::Mat2 A = M - drift::Mat2::Identity();
        double det = A(0, 0) * A(1, 1) - A(0, 1) * A(1, 0);
        if (std::abs(det) < 1e-14) break;
        double dx = (A(1, 1) * g1 - A(0, 1) * g2) / det;
        double dy = (-A(1, 0) * g1 + A(0, 0) * g2) / det;
        double clamp = std::max(1.0, std::max(std::abs(dx), std::abs(dy)) / 0.1);
        x.theta -= dx / clamp;
        x.r -= dy / clamp;
        if (!std::isfinite(x.theta) || !std::isfinite(x.r)) break;
      }
      if (!ok) continue;
      drift::Mat2 M = map.jacobian_iterate(drift::project(x), q);
      double residue = (2.0 - M.trace()) / 4.0;
      Lift y = map.iterate(x, q);
      double err = std::hypot(y.theta - x.theta - p, y.r - x.r);
      if (err < best_err) {
        best_err = err;
        best = PeriodicOrbit{x, residue, true};
      }
    }
    if (best.found) break;
  }
  return best;
}

double residue_threshold_k(const std::function<AnnulusMap(double)>& family, long p, long q,
                           double k_lo, double k_hi, double r_guess) {
  auto super = [&](double k) {
    PeriodicOrbit orbit = find_periodic_orbit(family(k), p, q, r_guess);
    if (!orbit.found) return true;  // treat unresolved orbits as past threshold
    return std::abs(orbit.residue) > 0.25;
  };
  double lo = k_lo, hi = k_hi;
  for (int it = 0; it < 40 && hi - lo > 1e-4; ++it) {
    double mid = 0.5 * (lo + hi);
    if (super(mid))
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

GraphFit fit_invariant_graph(const AnnulusMap& map, const Point& seed, long orbit_len,
                             int grid_size) {
  GraphFit fit;
  std::vector<Point> pts;
  pts.reserve(orbit_len);
  Point p = seed;
  for (long n = 0; n < orbit_len; ++n) {
    pts.push_back(p);
    p = map.step(p);
  }
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.theta < b.theta; });
  double max_gap = 1.0 - pts.back().theta + pts.front().theta;
  for (size_t i = 1; i < pts.size(); ++i) max_gap = std::max(max_gap, pts[i].theta - pts[i - 1].theta);
  fit.covered = max_gap < 2.0 / grid_size;
  if (!fit.covered) return fit;

  fit.samples.resize(grid_size);
  size_t i = 0;
  for (int j = 0; j < grid_size; ++j) {
    double theta = static_cast<double>(j) / grid_size;
    while (i + 1 < pts.size() && pts[i + 1].theta <= theta) ++i;
    const Point& u = (pts[i].theta <= theta) ? pts[i] : pts.back();
    const Point& v = (pts[i].theta <= theta) ? ((i + 1 < pts.size()) ? pts[i + 1] : pts.front())
                                             : pts.front();
    double span = drift::mod1(v.theta - u.theta);
    double t = (span < 1e-15) ? 0.0 : drift::mod1(theta - u.theta) / span;
    fit.samples[j] = u.r + t * (v.r - u.r);
  }
  auto value = [&](double theta) {
    double x = drift::mod1(theta) * grid_size;
    int j = std::min(static_cast<int>(x), grid_size - 1);
    double t = x - j;
    return fit.samples[j] + t * (fit.samples[(j + 1) % grid_size] - fit.samples[j]);
  };
  for (int j = 0; j < grid_size; ++j) {
    Point q = map.step(Point{static_cast<double>(j) / grid_size, fit.samples[j]});
    fit.residual = std::max(fit.residual, std::abs(q.r - value(q.theta)));
  }
  return fit;
}

}  // namespace oracles
