#pragma once

#include <Eigen/Core>
#include <vector>

#include "drift/common.hpp"

namespace drift {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

// A point of the annulus T x [a,b]: angle normalized to [0,1).
struct Point {
  double theta = 0.0;  // in [0,1)
  double r = 0.0;

  Vec2 vec() const { return Vec2(theta, r); }
};

// A point of the covering space R x [a,b]; theta unbounded.
struct Lift {
  double theta = 0.0;
  double r = 0.0;

  Vec2 vec() const { return Vec2(theta, r); }
};

inline Point project(const Lift& x) { return Point{mod1(x.theta), x.r}; }
inline Lift lift(const Point& p) { return Lift{p.theta, p.r}; }

// Euclidean distance on the annulus, theta taken mod 1.
inline double annulus_dist(const Point& p, const Point& q) {
  return std::hypot(circle_diff(p.theta, q.theta), p.r - q.r);
}

struct Annulus {
  double a;
  double b;

  Annulus(double a_, double b_) : a(a_), b(b_) {
    require(a < b, Errc::InvalidParameter, "annulus needs a < b");
  }
  double height() const { return b - a; }
  bool contains_r(double r, double slack = 0.0) const { return r >= a - slack && r <= b + slack; }
  bool contains(const Point& p, double slack = 0.0) const { return contains_r(p.r, slack); }
};

// Interval on the r-axis (or on a lifted theta-axis).
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double length() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  bool contains(double x) const { return x >= lo && x <= hi; }
};

// Rectangle in lift coordinates whose r-extent beats nu times its
// theta-extent. Membership is tested with the angle reduced mod 1.
struct NuBall {
  Interval theta;  // lift coordinates, length < 1
  Interval r;
  double nu = 0.0;
  Point center;

  double theta_halfwidth() const { return 0.5 * theta.length(); }
  double r_halfwidth() const { return 0.5 * r.length(); }

  bool contains(const Point& p) const {
    if (!r.contains(p.r)) return false;
    double d = circle_diff(p.theta, center.theta);
    return std::abs(d) <= theta_halfwidth();
  }
  bool contains(const Lift& x) const { return contains(project(x)); }

  // corner/center/edge-midpoint probes, used for containment certificates
  std::vector<Point> probe_points() const;

  NuBall scaled(double factor) const;
};

NuBall make_nu_ball(const Point& center, double nu, double theta_halfwidth, double margin,
                    const Annulus& ambient);

// Polyline arc in lift coordinates with finite-difference derivative
// estimates at the samples. Parameters are strictly increasing with
// s=0 and s=1 present.
struct Arc {
  std::vector<double> s;
  std::vector<Lift> pts;
  std::vector<Vec2> derivs;

  size_t size() const { return pts.size(); }
  const Lift& front() const { return pts.front(); }
  const Lift& back() const { return pts.back(); }
};

// Builds an arc through the given lift samples at uniform parameters,
// refining so consecutive samples are closer than h_arc.
Arc make_arc(std::vector<Lift> samples, double h_arc = 1e-3);

// Arc through samples of a function of s in [0,1].
template <class F>
Arc make_arc_fn(F&& f, int n, double h_arc = 1e-3) {
  std::vector<Lift> samples;
  samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    double t = static_cast<double>(i) / (n - 1);
    samples.push_back(f(t));
  }
  return make_arc(std::move(samples), h_arc);
}

enum class Tilt { Positive, Negative, Neither };

// Classifies an arc by the continuous lift of the oriented angle from the
// upward vertical (0,1) to its derivative. The orientation is the standard
// counterclockwise one, so a left-leaning initial derivative (u<0) gives an
// angle in ]0,pi[ (Positive) and a right-leaning one (u>0) an angle in
// ]-pi,0[ (Negative). This is the orientation under which forward images of
// negatively tilted arcs under right-twist maps stay negatively tilted.
Tilt classify_tilt(const Arc& arc, const Tolerances& tol = {});

// Rotation number estimate from a weighted Birkhoff average of lift
// displacements, with an internal-consistency error bound (full window vs
// half window). `converged` is false when the bound exceeds tol.
struct RotationEstimate {
  double value = 0.0;
  double error_bound = 0.0;
  bool converged = false;
};

class AnnulusMap;  // maps.hpp

RotationEstimate rotation_number(const AnnulusMap& map, const Point& seed, long iterates,
                                 double tol);

}  // namespace drift
