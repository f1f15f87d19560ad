#include "drift/maps.hpp"

#include <algorithm>
#include <cmath>

#include "drift/circles.hpp"

namespace drift {

double smoothstep(double lo, double hi, double x) {
  if (x <= lo) return 0.0;
  if (x >= hi) return 1.0;
  double t = (x - lo) / (hi - lo);
  return t * t * t * (t * (6.0 * t - 15.0) + 10.0);
}

double smoothstep_deriv(double lo, double hi, double x) {
  if (x <= lo || x >= hi) return 0.0;
  double t = (x - lo) / (hi - lo);
  return 30.0 * t * t * (t - 1.0) * (t - 1.0) / (hi - lo);
}

namespace {

// r-taper of the kick: 1 on the flat band, 0 outside [lo, hi]
struct BumpProfile {
  double lo = 0.0, hi = 1.0, beta = 0.05;

  double value(double r) const {
    return smoothstep(lo, lo + beta, r) * (1.0 - smoothstep(hi - beta, hi, r));
  }
  double deriv(double r) const {
    return smoothstep_deriv(lo, lo + beta, r) * (1.0 - smoothstep(hi - beta, hi, r)) -
           smoothstep(lo, lo + beta, r) * smoothstep_deriv(hi - beta, hi, r);
  }
  double max_slope() const { return 1.875 / beta; }
  Interval flat_band() const { return Interval{lo + beta, hi - beta}; }
};

// The vertical kick r <- r - c(theta)*b(r) applied as n_sub explicit
// sub-steps so the full step is a diffeomorphism for any kick strength
// (each factor 1 - (c/n)*b' stays positive). On the flat band, where b' = 0,
// the composition equals the single exact kick r - c(theta).
struct TaperedKick {
  BumpProfile bump;
  double amplitude = 0.0;  // k/(2*pi)
  int n_sub = 1;

  static int sub_steps(double amplitude, const BumpProfile& bump) {
    double worst = std::abs(amplitude) * bump.max_slope();
    return std::max(1, static_cast<int>(std::ceil(4.0 * worst)));
  }

  double forward(double theta_lift, double r) const {
    double c = amplitude * std::sin(kTwoPi * theta_lift) / n_sub;
    for (int j = 0; j < n_sub; ++j) r -= c * bump.value(r);
    return r;
  }

  double inverse(double theta_lift, double r_new) const {
    double c = amplitude * std::sin(kTwoPi * theta_lift) / n_sub;
    double r = r_new;
    for (int j = 0; j < n_sub; ++j) {
      // solve x - c*b(x) = r for x; contraction since |c*b'| < 1/4
      double x = r;
      for (int it = 0; it < 60; ++it) {
        double g = x - c * bump.value(x) - r;
        double gp = 1.0 - c * bump.deriv(x);
        double step = g / gp;
        x -= step;
        if (std::abs(step) < 1e-15) break;
      }
      r = x;
    }
    return r;
  }

  // d(r')/d(theta), d(r')/d(r) of the full sub-stepped kick
  Vec2 jacobian_row(double theta_lift, double r) const {
    double s = std::sin(kTwoPi * theta_lift);
    double dc_dtheta = amplitude * kTwoPi * std::cos(kTwoPi * theta_lift) / n_sub;
    double c = amplitude * s / n_sub;
    double dr_dtheta = 0.0, dr_dr = 1.0;
    for (int j = 0; j < n_sub; ++j) {
      double bv = bump.value(r);
      double bp = bump.deriv(r);
      double f = 1.0 - c * bp;
      dr_dtheta = f * dr_dtheta - dc_dtheta * bv;
      dr_dr = f * dr_dr;
      r -= c * bv;
    }
    return Vec2(dr_dtheta, dr_dr);
  }
};

AnnulusMap make_kick_twist(const std::string& name, const Annulus& ann,
                           std::optional<Annulus> hat, const TaperedKick& kick,
                           double twist_curvature = 0.0, double r_center = 0.0) {
  // theta' = theta + Omega(r'), r' = kick(theta, r), with Omega(r) = r for
  // the standard family and an optional quadratic term for the pendulum
  // section caricature.
  auto omega = [twist_curvature, r_center](double r) {
    double d = r - r_center;
    return r + twist_curvature * d * d;
  };
  auto omega_deriv = [twist_curvature, r_center](double r) {
    return 1.0 + 2.0 * twist_curvature * (r - r_center);
  };
  auto fwd = [kick, omega](const Lift& x) {
    double rp = kick.forward(x.theta, x.r);
    return Lift{x.theta + omega(rp), rp};
  };
  auto inv = [kick, omega](const Lift& y) {
    double theta = y.theta - omega(y.r);
    return Lift{theta, kick.inverse(theta, y.r)};
  };
  auto jac = [kick, omega_deriv](const Point& p) {
    Vec2 row = kick.jacobian_row(p.theta, p.r);
    double op = omega_deriv(kick.forward(p.theta, p.r));
    Mat2 J;
    J(0, 0) = 1.0 + op * row(0);
    J(0, 1) = op * row(1);
    J(1, 0) = row(0);
    J(1, 1) = row(1);
    return J;
  };
  return AnnulusMap(name, ann, fwd, inv, jac, TwistDirection::Right, true, hat);
}

}  // namespace

AnnulusMap instantiate_model(const ModelConfig& config) {
  const Annulus& ann = config.annulus;
  std::optional<Annulus> hat = config.continuation;

  if (config.model == "rigid") {
    double omega = config.param("omega", 0.0);
    auto fwd = [omega](const Lift& x) { return Lift{x.theta + omega, x.r}; };
    auto inv = [omega](const Lift& x) { return Lift{x.theta - omega, x.r}; };
    auto jac = [](const Point&) { return Mat2::Identity().eval(); };
    // not a twist map; kept in the zoo for conjugation tests only
    return AnnulusMap("rigid", ann, fwd, inv, jac, TwistDirection::Right, false, hat);
  }

  if (config.model == "integrable") {
    auto fwd = [](const Lift& x) { return Lift{x.theta + x.r, x.r}; };
    auto inv = [](const Lift& x) { return Lift{x.theta - x.r, x.r}; };
    auto jac = [](const Point&) {
      Mat2 J;
      J << 1.0, 1.0, 0.0, 1.0;
      return J;
    };
    return AnnulusMap("integrable", ann, fwd, inv, jac, TwistDirection::Right, true, hat);
  }

  if (config.model == "bump_standard") {
    double k = config.param("k", 0.0);
    double beta = config.param("beta", 0.05);
    require(k >= 0.0, Errc::InvalidParameter, "bump_standard: k must be >= 0");
    require(beta > 0.0 && beta < 0.5 * ann.height(), Errc::InvalidParameter,
            "bump_standard: beta must lie in (0, (b-a)/2)");
    BumpProfile bump{ann.a, ann.b, beta};
    TaperedKick kick{bump, k / kTwoPi, TaperedKick::sub_steps(k / kTwoPi, bump)};
    return make_kick_twist("bump_standard", ann, hat, kick);
  }

  if (config.model == "engineered_zone") {
    double k = config.param("k", 0.0);
    double band_lo = config.param("band_lo", 0.45);
    double band_hi = config.param("band_hi", 0.55);
    double beta = config.param("beta", 0.02);
    require(k >= 0.0, Errc::InvalidParameter, "engineered_zone: k must be >= 0");
    require(ann.a < band_lo && band_lo < band_hi && band_hi < ann.b, Errc::InvalidParameter,
            "engineered_zone: band must lie strictly inside the annulus");
    require(beta > 0.0 && beta < 0.5 * (band_hi - band_lo), Errc::InvalidParameter,
            "engineered_zone: beta must lie in (0, (band_hi-band_lo)/2)");
    BumpProfile bump{band_lo, band_hi, beta};
    TaperedKick kick{bump, k / kTwoPi, TaperedKick::sub_steps(k / kTwoPi, bump)};
    return make_kick_twist("engineered_zone", ann, hat, kick);
  }

  if (config.model == "shear_pendulum_section") {
    double mu = config.param("mu", 0.1);
    double curvature = config.param("curvature", 0.2);
    double beta = config.param("beta", 0.05);
    require(mu >= 0.0, Errc::InvalidParameter, "shear_pendulum_section: mu must be >= 0");
    require(beta > 0.0 && beta < 0.5 * ann.height(), Errc::InvalidParameter,
            "shear_pendulum_section: beta must lie in (0, (b-a)/2)");
    double r_center = 0.5 * (ann.a + ann.b);
    double reach = std::max(std::abs(ann.a - r_center), std::abs(ann.b - r_center)) + 0.2;
    require(std::abs(curvature) * 2.0 * reach < 0.9, Errc::InvalidParameter,
            "shear_pendulum_section: |curvature| too large for a uniform twist");
    BumpProfile bump{ann.a, ann.b, beta};
    TaperedKick kick{bump, mu / kTwoPi, TaperedKick::sub_steps(mu / kTwoPi, bump)};
    return make_kick_twist("shear_pendulum_section", ann, hat, kick, curvature, r_center);
  }

  fail(Errc::InvalidParameter, "unknown model: " + config.model);
}

TwistReport verify_twist(const AnnulusMap& map, long samples, const Tolerances& tol,
                         std::optional<Interval> band) {
  require(samples >= 1000, Errc::InvalidParameter, "verify_twist needs >= 1e3 samples");
  const Annulus& ann = map.domain();
  TwistReport rep;
  rep.twist_margin = std::numeric_limits<double>::infinity();
  rep.band_twist_margin = std::numeric_limits<double>::infinity();
  const double sgn = (map.twist_direction() == TwistDirection::Right) ? 1.0 : -1.0;
  const double golden = 0.6180339887498949;
  const double silver = 0.41421356237309515;
  for (long i = 0; i < samples; ++i) {
    Point p{mod1(0.5 + i * golden), ann.a + ann.height() * mod1(0.25 + i * silver)};
    Mat2 J = map.jacobian(p);
    double area = std::abs(J.determinant() - 1.0);
    double twist = sgn * J(0, 1);
    rep.area_residual = std::max(rep.area_residual, area);
    rep.twist_margin = std::min(rep.twist_margin, twist);
    if (!band || band->contains(p.r)) {
      rep.band_area_residual = std::max(rep.band_area_residual, area);
      rep.band_twist_margin = std::min(rep.band_twist_margin, twist);
    }
  }
  long boundary_samples = std::max(64L, samples / 16);
  for (long i = 0; i < boundary_samples; ++i) {
    double theta = static_cast<double>(i) / boundary_samples;
    for (double level : {ann.a, ann.b}) {
      Point q = map.step(Point{theta, level});
      rep.boundary_residual = std::max(rep.boundary_residual, std::abs(q.r - level));
    }
  }
  double area_check = band ? rep.band_area_residual : rep.area_residual;
  double twist_check = band ? rep.band_twist_margin : rep.twist_margin;
  rep.pass = area_check <= tol.tol_area && twist_check > 0.0 &&
             rep.boundary_residual <= tol.tol_boundary;
  return rep;
}

SpecialnessReport check_special(const AnnulusMap& map, const std::vector<CertifiedCircle>& catalog,
                                long q_max, double tol_rat, double eps_dense, double delta_acc,
                                long orbit_len) {
  require(!catalog.empty(), Errc::InvalidParameter, "check_special needs a nonempty catalog");
  SpecialnessReport rep;
  for (size_t idx = 0; idx < catalog.size(); ++idx) {
    double rho = mod1(catalog[idx].rotation_number());
    for (long q = 1; q <= q_max; ++q) {
      double pq = std::round(rho * q);
      if (std::abs(rho - pq / q) < tol_rat) {
        rep.rational_flags.push_back({idx, rho, static_cast<long>(pq), q});
        break;
      }
    }
  }
  auto boundary_gap = [&](double level) {
    std::vector<double> angles;
    angles.reserve(orbit_len);
    Point p{0.0, level};
    for (long n = 0; n < orbit_len; ++n) {
      angles.push_back(p.theta);
      p = map.step(p);
      p.r = level;  // boundary circles are invariant; suppress rounding drift
    }
    std::sort(angles.begin(), angles.end());
    double gap = 1.0 - angles.back() + angles.front();
    for (size_t i = 1; i < angles.size(); ++i) gap = std::max(gap, angles[i] - angles[i - 1]);
    return gap;
  };
  rep.lower_boundary_gap = boundary_gap(map.domain().a);
  rep.upper_boundary_gap = boundary_gap(map.domain().b);
  rep.lower_boundary_dense = rep.lower_boundary_gap < eps_dense;
  rep.upper_boundary_dense = rep.upper_boundary_gap < eps_dense;

  double lo_dist = std::numeric_limits<double>::infinity();
  double hi_dist = std::numeric_limits<double>::infinity();
  for (const auto& circle : catalog) {
    double sup_lo = std::max(std::abs(circle.min_level() - map.domain().a),
                             std::abs(circle.max_level() - map.domain().a));
    double sup_hi = std::max(std::abs(circle.min_level() - map.domain().b),
                             std::abs(circle.max_level() - map.domain().b));
    if (sup_lo > 1e-12) lo_dist = std::min(lo_dist, sup_lo);  // exclude the boundary itself
    if (sup_hi > 1e-12) hi_dist = std::min(hi_dist, sup_hi);
  }
  rep.lower_accumulation_dist = lo_dist;
  rep.upper_accumulation_dist = hi_dist;
  rep.accumulation_ok = lo_dist < delta_acc && hi_dist < delta_acc;
  return rep;
}

}  // namespace drift
