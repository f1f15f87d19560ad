#include "drift/circles.hpp"

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <thread>

namespace drift {

namespace {

// Catmull-Rom weights on a uniform periodic grid
inline void cr_weights(double t, double w[4]) {
  double t2 = t * t, t3 = t2 * t;
  w[0] = -0.5 * t + t2 - 0.5 * t3;
  w[1] = 1.0 - 2.5 * t2 + 1.5 * t3;
  w[2] = 0.5 * t + 2.0 * t2 - 1.5 * t3;
  w[3] = -0.5 * t2 + 0.5 * t3;
}

inline void cr_weights_deriv(double t, double w[4]) {
  double t2 = t * t;
  w[0] = -0.5 + 2.0 * t - 1.5 * t2;
  w[1] = -5.0 * t + 4.5 * t2;
  w[2] = 0.5 + 4.0 * t - 4.5 * t2;
  w[3] = -t + 1.5 * t2;
}

inline double interp_value(const Eigen::ArrayXd& samples, double theta) {
  const int n = static_cast<int>(samples.size());
  double x = mod1(theta) * n;
  int j = static_cast<int>(std::floor(x));
  if (j >= n) j = n - 1;
  double t = x - j;
  double w[4];
  cr_weights(t, w);
  double out = 0.0;
  for (int k = -1; k <= 2; ++k) out += w[k + 1] * samples[(j + k + n) % n];
  return out;
}

inline double interp_slope(const Eigen::ArrayXd& samples, double theta) {
  const int n = static_cast<int>(samples.size());
  double x = mod1(theta) * n;
  int j = static_cast<int>(std::floor(x));
  if (j >= n) j = n - 1;
  double t = x - j;
  double w[4];
  cr_weights_deriv(t, w);
  double out = 0.0;
  for (int k = -1; k <= 2; ++k) out += w[k + 1] * samples[(j + k + n) % n];
  return out * n;
}

double lipschitz_estimate(const Eigen::ArrayXd& samples) {
  const int n = static_cast<int>(samples.size());
  double nu = 0.0;
  for (int j = 0; j < n; ++j)
    nu = std::max(nu, std::abs(samples[(j + 1) % n] - samples[j]) * n);
  return nu;
}

double invariance_residual(const AnnulusMap& map, const Eigen::ArrayXd& samples) {
  const int n = static_cast<int>(samples.size());
  double res = 0.0;
  for (int j = 0; j < n; ++j) {
    Point p{static_cast<double>(j) / n, samples[j]};
    Point q = map.step(p);
    res = std::max(res, std::abs(q.r - interp_value(samples, q.theta)));
  }
  return res;
}

}  // namespace

CertifiedCircle::CertifiedCircle(Eigen::ArrayXd samples, double nu_est, double residual,
                                 double rho, double rho_err, double tol)
    : samples_(std::move(samples)),
      nu_est_(nu_est),
      residual_(residual),
      rho_(rho),
      rho_err_(rho_err),
      tol_(tol) {
  require(samples_.size() >= 8, Errc::InvalidParameter, "circle grid too coarse");
  require(residual_ < tol_, Errc::InvalidParameter,
          "certified circle must satisfy residual < tol");
}

double CertifiedCircle::value(double theta) const { return interp_value(samples_, theta); }
double CertifiedCircle::slope(double theta) const { return interp_slope(samples_, theta); }

double CertifiedCircle::distance(const Point& p) const {
  const int n = static_cast<int>(samples_.size());
  double best = std::numeric_limits<double>::infinity();
  for (int j = 0; j < n; ++j) {
    double dt = circle_diff(p.theta, static_cast<double>(j) / n);
    double dr = p.r - samples_[j];
    best = std::min(best, dt * dt + dr * dr);
  }
  // local refinement around the vertical
  double v = p.r - value(p.theta);
  best = std::min(best, v * v);
  return std::sqrt(best);
}

double CertifiedCircle::hausdorff(const CertifiedCircle& c1, const CertifiedCircle& c2) {
  if (c1.grid_size() == c2.grid_size())
    return (c1.samples() - c2.samples()).abs().maxCoeff();
  size_t n = std::max(c1.grid_size(), c2.grid_size());
  double d = 0.0;
  for (size_t j = 0; j < n; ++j) {
    double theta = static_cast<double>(j) / n;
    d = std::max(d, std::abs(c1.value(theta) - c2.value(theta)));
  }
  return d;
}

bool CertifiedCircle::leq(const CertifiedCircle& c1, const CertifiedCircle& c2, double tol) {
  size_t n = std::max(c1.grid_size(), c2.grid_size());
  for (size_t j = 0; j < n; ++j) {
    double theta = static_cast<double>(j) / n;
    if (c1.value(theta) > c2.value(theta) + tol) return false;
  }
  return true;
}

CertifiedCircle horizontal_circle(const AnnulusMap& map, double level, size_t n_grid) {
  Eigen::ArrayXd samples = Eigen::ArrayXd::Constant(n_grid, level);
  double res = invariance_residual(map, samples);
  RotationEstimate rho = rotation_number(map, Point{0.0, level}, 20000, 1e-6);
  return CertifiedCircle(samples, 0.0, res, rho.value, rho.error_bound,
                         std::max(1e-6, res * 2 + 1e-12));
}

namespace {

struct NewtonOutcome {
  Eigen::ArrayXd samples;
  double residual;
  bool converged;
};

NewtonOutcome newton_polish(const AnnulusMap& map, Eigen::ArrayXd samples, double tol,
                            int max_iters) {
  const int n = static_cast<int>(samples.size());
  using Trip = Eigen::Triplet<double>;
  double best_res = invariance_residual(map, samples);
  Eigen::ArrayXd best = samples;
  for (int iter = 0; iter < max_iters && best_res >= 0.3 * tol; ++iter) {
    Eigen::VectorXd g(n);
    std::vector<Trip> trips;
    trips.reserve(5 * n);
    for (int j = 0; j < n; ++j) {
      Point p{static_cast<double>(j) / n, samples[j]};
      Point q = map.step(p);
      Mat2 J = map.jacobian(p);
      g[j] = q.r - interp_value(samples, q.theta);
      double lp = interp_slope(samples, q.theta);
      trips.emplace_back(j, j, J(1, 1) - lp * J(0, 1));
      double x = mod1(q.theta) * n;
      int jj = static_cast<int>(std::floor(x));
      if (jj >= n) jj = n - 1;
      double t = x - jj;
      double w[4];
      cr_weights(t, w);
      for (int k = -1; k <= 2; ++k) trips.emplace_back(j, (jj + k + n) % n, -w[k + 1]);
    }
    Eigen::SparseMatrix<double> A(n, n);
    A.setFromTriplets(trips.begin(), trips.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) break;
    Eigen::VectorXd delta = lu.solve(g);
    if (!delta.allFinite()) break;
    // the linearized operator has a near-neutral direction along the family
    // of nearby circles; keep steps commensurate with the residual
    double res_inf = g.lpNorm<Eigen::Infinity>();
    double cap = std::min(0.2, 50.0 * res_inf + 1e-9);
    double step = delta.lpNorm<Eigen::Infinity>();
    if (step > cap) delta *= cap / step;
    samples -= delta.array();
    double res = invariance_residual(map, samples);
    if (res < best_res) {
      best_res = res;
      best = samples;
    }
    if (res < 0.3 * tol) break;
    if (res > 1e3 * (best_res + 1.0)) break;
  }
  return NewtonOutcome{best, best_res, best_res < tol};
}

// Fit a graph on the uniform grid through orbit points sorted by angle.
// Returns the max angular gap as coverage diagnostic.
double fit_graph(const std::vector<Point>& pts, Eigen::ArrayXd& out) {
  std::vector<Point> sorted = pts;
  std::sort(sorted.begin(), sorted.end(),
            [](const Point& u, const Point& v) { return u.theta < v.theta; });
  const size_t m = sorted.size();
  double max_gap = 1.0 - sorted.back().theta + sorted.front().theta;
  for (size_t i = 1; i < m; ++i)
    max_gap = std::max(max_gap, sorted[i].theta - sorted[i - 1].theta);
  const int n = static_cast<int>(out.size());
  size_t i = 0;
  for (int j = 0; j < n; ++j) {
    double theta = static_cast<double>(j) / n;
    while (i + 1 < m && sorted[i + 1].theta <= theta) ++i;
    // bracket theta between sorted[i] and the next point (wrapping)
    const Point& u = (sorted[i].theta <= theta) ? sorted[i] : sorted.back();
    const Point& v = (sorted[i].theta <= theta)
                         ? ((i + 1 < m) ? sorted[i + 1] : sorted.front())
                         : sorted.front();
    double span = mod1(v.theta - u.theta);
    double t = (span < 1e-15) ? 0.0 : mod1(theta - u.theta) / span;
    out[j] = u.r + t * (v.r - u.r);
  }
  return max_gap;
}

}  // namespace

CertifyResult certify_circle(const AnnulusMap& map, double seed_rotation, double tol,
                             const CertifyOptions& opts) {
  CertifyResult result;
  const Annulus& hat = map.hat();
  Interval bracket = opts.r_bracket ? *opts.r_bracket
                                    : Interval{hat.a + 1e-9, hat.b - 1e-9};

  auto rho_at = [&](double r) {
    result.evals += opts.rho_iterates;
    return rotation_number(map, Point{opts.theta_probe, r}, opts.rho_iterates, 1e-5);
  };

  // 1. bracket the action level of the target rotation number
  double r_lo = bracket.lo, r_hi = bracket.hi;
  {
    const int m = opts.scan_points;
    double prev_r = bracket.lo;
    double prev_rho = rho_at(prev_r).value;
    bool found = false;
    for (int i = 1; i < m; ++i) {
      double r = bracket.lo + bracket.length() * i / (m - 1);
      double rho = rho_at(r).value;
      if ((prev_rho - seed_rotation) * (rho - seed_rotation) <= 0.0) {
        r_lo = prev_r;
        r_hi = r;
        found = true;
        break;
      }
      prev_r = r;
      prev_rho = rho;
    }
    if (!found) {
      // maps without twist have level-independent rotation numbers
      if (std::abs(prev_rho - seed_rotation) < 1e-9) {
        r_lo = r_hi = bracket.mid();
      } else {
        result.note = "rotation number not bracketed in the search interval";
        return result;
      }
    }
  }
  double rho_lo = rho_at(r_lo).value;
  for (int it = 0; it < opts.bisect_iters && r_hi - r_lo > 1e-14; ++it) {
    double mid = 0.5 * (r_lo + r_hi);
    double rho = rho_at(mid).value;
    if ((rho_lo - seed_rotation) * (rho - seed_rotation) <= 0.0) {
      r_hi = mid;
    } else {
      r_lo = mid;
      rho_lo = rho;
    }
  }
  const double r_seed = 0.5 * (r_lo + r_hi);

  // 2. long-orbit closure fit
  Eigen::ArrayXd graph(static_cast<int>(opts.n_grid));
  {
    std::vector<Point> pts;
    pts.reserve(opts.orbit_len);
    Point p{opts.theta_probe, r_seed};
    for (long i = 0; i < opts.orbit_len; ++i) {
      pts.push_back(p);
      p = map.step(p);
    }
    result.evals += opts.orbit_len;
    double gap = fit_graph(pts, graph);
    if (gap > opts.max_theta_gap) {
      // sparse coverage: resonant or mode-locked level; try a few extra
      // seeds (exact for integrable rows, harmless otherwise)
      for (int extra = 1; extra <= 6; ++extra) {
        Point q{mod1(opts.theta_probe + extra / 7.0), r_seed};
        for (long i = 0; i < opts.orbit_len / 6; ++i) {
          pts.push_back(q);
          q = map.step(q);
        }
        result.evals += opts.orbit_len / 6;
      }
      gap = fit_graph(pts, graph);
      if (gap > opts.max_theta_gap) {
        result.best_residual = invariance_residual(map, graph);
        result.note = "orbit does not cover the circle (max gap " + std::to_string(gap) + ")";
        return result;
      }
    }
  }

  // 3. Newton polish of the invariance equation on the sampled graph
  NewtonOutcome polished = newton_polish(map, graph, tol, opts.newton_iters);
  result.evals += static_cast<long long>(opts.newton_iters) * opts.n_grid;
  result.best_residual = polished.residual;
  if (!polished.converged) {
    result.note = "invariance residual did not reach tolerance";
    return result;
  }
  const Eigen::ArrayXd& samples = polished.samples;
  if (samples.minCoeff() < hat.a - 1e-9 || samples.maxCoeff() > hat.b + 1e-9) {
    result.note = "polished graph leaves the annulus";
    return result;
  }
  RotationEstimate rho = rotation_number(map, Point{0.0, interp_value(samples, 0.0)},
                                         std::max(20000L, opts.rho_iterates), 1e-5);
  result.evals += std::max(20000L, opts.rho_iterates);
  if (std::abs(rho.value - seed_rotation) > std::max(1e-4, 100.0 * rho.error_bound)) {
    result.note = "polished graph has rotation number " + std::to_string(rho.value) +
                  ", not the requested one";
    return result;
  }
  result.circle = CertifiedCircle(samples, lipschitz_estimate(samples), polished.residual,
                                  rho.value, rho.error_bound, tol);
  return result;
}

CertifyResult certify_from_graph(const AnnulusMap& map, const Eigen::ArrayXd& graph_estimate,
                                 double tol, int newton_iters) {
  CertifyResult result;
  NewtonOutcome polished = newton_polish(map, graph_estimate, tol, newton_iters);
  result.evals = static_cast<long long>(newton_iters) * graph_estimate.size();
  result.best_residual = polished.residual;
  if (!polished.converged) {
    result.note = "invariance residual did not reach tolerance";
    return result;
  }
  RotationEstimate rho =
      rotation_number(map, Point{0.0, interp_value(polished.samples, 0.0)}, 20000, 1e-5);
  result.circle = CertifiedCircle(polished.samples, lipschitz_estimate(polished.samples),
                                  polished.residual, rho.value, rho.error_bound, tol);
  return result;
}

std::vector<CertifiedCircle> sweep_catalog(const AnnulusMap& map,
                                           const std::vector<double>& rotation_grid, double tol,
                                           const CertifyOptions& opts) {
  std::vector<CertifyResult> results(rotation_grid.size());
  unsigned int n_workers = std::max(1u, std::min(std::thread::hardware_concurrency(), 8u));
  std::vector<std::thread> workers;
  std::atomic<size_t> next{0};
  for (unsigned int w = 0; w < n_workers; ++w) {
    workers.emplace_back([&]() {
      for (size_t i = next.fetch_add(1); i < rotation_grid.size(); i = next.fetch_add(1))
        results[i] = certify_circle(map, rotation_grid[i], tol, opts);
    });
  }
  for (auto& t : workers) t.join();

  std::vector<CertifiedCircle> catalog;
  for (auto& res : results)
    if (res) catalog.push_back(*res.circle);
  std::sort(catalog.begin(), catalog.end(), [](const CertifiedCircle& a, const CertifiedCircle& b) {
    return a.samples().mean() < b.samples().mean();
  });

  // resolve crossings: re-certify at tighter tolerance and drop the loser
  const double cross_tol = 10.0 * tol;
  for (size_t i = 0; i + 1 < catalog.size();) {
    const auto& lo = catalog[i];
    const auto& hi = catalog[i + 1];
    double min_gap = (hi.samples() - lo.samples()).minCoeff();
    double max_gap = (hi.samples() - lo.samples()).maxCoeff();
    bool same = max_gap < cross_tol && min_gap > -cross_tol;
    bool crossing = !same && min_gap < -cross_tol;
    if (same || crossing) {
      size_t drop = (lo.residual() <= hi.residual()) ? i + 1 : i;
      if (crossing) {
        CertifyResult redo_lo = certify_circle(map, lo.rotation_number(), tol * 0.1, opts);
        CertifyResult redo_hi = certify_circle(map, hi.rotation_number(), tol * 0.1, opts);
        if (redo_lo && !redo_hi) drop = i + 1;
        if (!redo_lo && redo_hi) drop = i;
      }
      catalog.erase(catalog.begin() + drop);
    } else {
      ++i;
    }
  }
  return catalog;
}

CertifiedCircle sup_circles(const std::vector<CertifiedCircle>& family, const AnnulusMap& map) {
  require(!family.empty(), Errc::EmptyFamily, "sup_circles: empty family");
  size_t n = family.front().grid_size();
  for (const auto& c : family)
    require(c.grid_size() == n, Errc::InvalidParameter, "sup_circles: mixed grid sizes");
  Eigen::ArrayXd top = family.front().samples();
  for (const auto& c : family) top = top.max(c.samples());
  double tol = family.front().tol();
  CertifyResult res = certify_from_graph(map, top, tol);
  if (!res)
    fail(Errc::RecertificationFailed,
         "sup_circles: recertification failed, residual " + std::to_string(res.best_residual));
  return *res.circle;
}

std::vector<BirkhoffZone> detect_zones(std::vector<CertifiedCircle>& catalog,
                                       const AnnulusMap& map, const ZoneOptions& opts) {
  auto order = [](std::vector<CertifiedCircle>& cs) {
    std::sort(cs.begin(), cs.end(), [](const CertifiedCircle& a, const CertifiedCircle& b) {
      return a.samples().mean() < b.samples().mean();
    });
  };
  order(catalog);

  std::vector<BirkhoffZone> zones;
  for (int round = 0; round < opts.max_rounds; ++round) {
    bool inserted = false;
    zones.clear();
    std::vector<CertifiedCircle> added;
    for (size_t i = 0; i + 1 < catalog.size(); ++i) {
      const auto& lo = catalog[i];
      const auto& hi = catalog[i + 1];
      double gap = CertifiedCircle::hausdorff(lo, hi);
      if (gap <= opts.gap_min) continue;
      std::vector<ZoneEvidence> evidence;
      bool found = false;
      double rho_lo = lo.rotation_number(), rho_hi = hi.rotation_number();
      for (int k = 1; k <= opts.refinement; ++k) {
        double rho = rho_lo + (rho_hi - rho_lo) * k / (opts.refinement + 1);
        CertifyOptions co = opts.certify;
        co.r_bracket = Interval{lo.min_level() - 1e-6, hi.max_level() + 1e-6};
        CertifyResult res = certify_circle(map, rho, opts.tol, co);
        if (res) {
          // keep genuinely new interior circles only
          double d_lo = CertifiedCircle::hausdorff(*res.circle, lo);
          double d_hi = CertifiedCircle::hausdorff(*res.circle, hi);
          if (d_lo > opts.gap_min * 0.5 && d_hi > opts.gap_min * 0.5 &&
              CertifiedCircle::leq(lo, *res.circle, 1e-9) &&
              CertifiedCircle::leq(*res.circle, hi, 1e-9)) {
            added.push_back(*res.circle);
            inserted = true;
            found = true;
            break;
          }
        }
        evidence.push_back({rho, res.best_residual});
      }
      if (!found) zones.push_back(BirkhoffZone{lo, hi, std::move(evidence)});
    }
    if (!inserted) return zones;
    for (auto& c : added) catalog.push_back(std::move(c));
    order(catalog);
  }
  return zones;
}

}  // namespace drift
