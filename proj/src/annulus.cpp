#include "drift/annulus.hpp"

#include <algorithm>

#include "drift/maps.hpp"

namespace drift {

std::vector<Point> NuBall::probe_points() const {
  std::vector<Point> pts;
  pts.reserve(9);
  const double th[3] = {theta.lo, theta.mid(), theta.hi};
  const double rr[3] = {r.lo, r.mid(), r.hi};
  for (double t : th)
    for (double v : rr) pts.push_back(Point{mod1(t), v});
  return pts;
}

NuBall NuBall::scaled(double factor) const {
  NuBall out = *this;
  double ht = theta_halfwidth() * factor;
  double hr = r_halfwidth() * factor;
  out.theta = Interval{center.theta - ht, center.theta + ht};
  out.r = Interval{center.r - hr, center.r + hr};
  return out;
}

NuBall make_nu_ball(const Point& center, double nu, double theta_halfwidth, double margin,
                    const Annulus& ambient) {
  require(nu > 0.0, Errc::InvalidParameter, "nu must be positive");
  require(theta_halfwidth > 0.0 && theta_halfwidth < 0.25, Errc::InvalidParameter,
          "theta_halfwidth must lie in (0, 1/4)");
  require(margin > 0.0, Errc::InvalidParameter,
          "margin must be positive: the r-extent must strictly beat nu times the theta-extent");
  const double r_halfwidth = nu * theta_halfwidth * (1.0 + margin);
  if (center.r - r_halfwidth < ambient.a || center.r + r_halfwidth > ambient.b)
    fail(Errc::BallExitsAnnulus, "nu-ball r-interval leaves the annulus; shrink theta_halfwidth");
  NuBall ball;
  ball.center = center;
  ball.nu = nu;
  ball.theta = Interval{center.theta - theta_halfwidth, center.theta + theta_halfwidth};
  ball.r = Interval{center.r - r_halfwidth, center.r + r_halfwidth};
  return ball;
}

Arc make_arc(std::vector<Lift> samples, double h_arc) {
  require(samples.size() >= 2, Errc::InvalidParameter, "arc needs at least 2 samples");
  // refine so consecutive samples stay within h_arc
  std::vector<Lift> refined;
  refined.push_back(samples.front());
  for (size_t i = 1; i < samples.size(); ++i) {
    const Lift& p = samples[i - 1];
    const Lift& q = samples[i];
    double len = std::hypot(q.theta - p.theta, q.r - p.r);
    int pieces = std::max(1, static_cast<int>(std::ceil(len / h_arc)));
    for (int j = 1; j <= pieces; ++j) {
      double t = static_cast<double>(j) / pieces;
      refined.push_back(Lift{p.theta + t * (q.theta - p.theta), p.r + t * (q.r - p.r)});
    }
  }
  Arc arc;
  arc.pts = std::move(refined);
  size_t n = arc.pts.size();
  arc.s.resize(n);
  for (size_t i = 0; i < n; ++i) arc.s[i] = static_cast<double>(i) / (n - 1);
  arc.derivs.resize(n);
  for (size_t i = 0; i < n; ++i) {
    size_t lo = (i == 0) ? 0 : i - 1;
    size_t hi = (i + 1 == n) ? i : i + 1;
    double ds = arc.s[hi] - arc.s[lo];
    arc.derivs[i] =
        Vec2(arc.pts[hi].theta - arc.pts[lo].theta, arc.pts[hi].r - arc.pts[lo].r) / ds;
  }
  return arc;
}

Tilt classify_tilt(const Arc& arc, const Tolerances& tol) {
  require(arc.size() >= 2, Errc::InvalidParameter, "arc too short");
  // angle from the upward vertical, counterclockwise positive: left-leaning
  // derivatives (u<0) get positive angles, right-leaning ones negative.
  std::vector<double> angle(arc.size());
  for (size_t i = 0; i < arc.size(); ++i) {
    const Vec2& d = arc.derivs[i];
    if (d.norm() < tol.tol_deriv)
      fail(Errc::DegenerateDerivative, "arc derivative below tolerance");
    angle[i] = std::atan2(-d.x(), d.y());
  }
  // continuous lift of the angle along the arc
  std::vector<double> lifted(arc.size());
  lifted[0] = angle[0];
  for (size_t i = 1; i < arc.size(); ++i) {
    double d = angle[i] - angle[i - 1];
    while (d > M_PI) d -= 2.0 * M_PI;
    while (d < -M_PI) d += 2.0 * M_PI;
    lifted[i] = lifted[i - 1] + d;
  }
  const double eps = tol.tol_angle;
  if (lifted[0] > eps && lifted[0] < M_PI - eps) {
    bool ok = std::all_of(lifted.begin(), lifted.end(), [&](double v) { return v > eps; });
    if (ok) return Tilt::Positive;
  } else if (lifted[0] < -eps && lifted[0] > -M_PI + eps) {
    bool ok = std::all_of(lifted.begin(), lifted.end(), [&](double v) { return v < -eps; });
    if (ok) return Tilt::Negative;
  }
  return Tilt::Neither;
}

namespace {

// exponential bump weight on (0,1), zero at the ends
inline double wb_weight(double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  return std::exp(-1.0 / (t * (1.0 - t)));
}

}  // namespace

RotationEstimate rotation_number(const AnnulusMap& map, const Point& seed, long iterates,
                                 double tol) {
  require(iterates >= 1000, Errc::InvalidParameter, "rotation_number needs >= 1e3 iterates");
  const long n_full = iterates;
  const long n_half = iterates / 2;
  double sum_full = 0.0, wsum_full = 0.0;
  double sum_half = 0.0, wsum_half = 0.0;
  // iterate reduced points: a growing lift coordinate would cost one ulp of
  // absolute precision per displacement
  Point x = seed;
  double base = map.step(lift(seed)).theta - seed.theta;  // lift displacement branch
  double branch = std::floor(base);
  for (long n = 0; n < n_full; ++n) {
    Point y = map.step(x);
    double disp = branch + mod1(y.theta - x.theta - branch);
    double wf = wb_weight((n + 0.5) / n_full);
    sum_full += wf * disp;
    wsum_full += wf;
    if (n < n_half) {
      double wh = wb_weight((n + 0.5) / n_half);
      sum_half += wh * disp;
      wsum_half += wh;
    }
    x = y;
  }
  RotationEstimate est;
  est.value = sum_full / wsum_full;
  est.error_bound = std::abs(est.value - sum_half / wsum_half);
  est.converged = est.error_bound <= tol;
  return est;
}

Mat2 AnnulusMap::jacobian_iterate(Point p, long n) const {
  Mat2 acc = Mat2::Identity();
  for (long i = 0; i < n; ++i) {
    acc = jacobian(p) * acc;
    p = step(p);
  }
  return acc;
}

}  // namespace drift
