#pragma once

#include <Eigen/LU>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "drift/annulus.hpp"

namespace drift {

enum class TwistDirection { Right, Left };

// An area-preserving map of the annulus with lift, inverse and Jacobian
// access. Evaluations are pure; instances are immutable after construction
// and safe to share across threads.
class AnnulusMap {
public:
  using PointFn = std::function<Point(const Point&)>;
  using LiftFn = std::function<Lift(const Lift&)>;
  using JacFn = std::function<Mat2(const Point&)>;

  AnnulusMap() = default;
  AnnulusMap(std::string name, Annulus domain, LiftFn fwd, LiftFn inv, JacFn jac,
             TwistDirection twist, bool is_twist, std::optional<Annulus> continuation = {})
      : name_(std::move(name)),
        domain_(domain),
        continuation_(continuation),
        fwd_(std::move(fwd)),
        inv_(std::move(inv)),
        jac_(std::move(jac)),
        twist_(twist),
        is_twist_(is_twist) {}

  const std::string& name() const { return name_; }
  const Annulus& domain() const { return domain_; }
  // the enclosing continuation annulus; defaults to the domain itself
  const Annulus& hat() const { return continuation_ ? *continuation_ : domain_; }
  TwistDirection twist_direction() const { return twist_; }
  bool is_twist() const { return is_twist_; }

  Lift step(const Lift& x) const { return fwd_(x); }
  Lift step_back(const Lift& x) const { return inv_(x); }
  Point step(const Point& p) const { return project(fwd_(lift(p))); }
  Point step_back(const Point& p) const { return project(inv_(lift(p))); }
  Mat2 jacobian(const Point& p) const { return jac_(p); }

  Lift iterate(Lift x, long n) const {
    for (long i = 0; i < n; ++i) x = fwd_(x);
    for (long i = 0; i > n; --i) x = inv_(x);
    return x;
  }
  Point iterate(const Point& p, long n) const { return project(iterate(lift(p), n)); }

  Mat2 jacobian_iterate(Point p, long n) const;

private:
  std::string name_;
  Annulus domain_{0.0, 1.0};
  std::optional<Annulus> continuation_;
  LiftFn fwd_;
  LiftFn inv_;
  JacFn jac_;
  TwistDirection twist_ = TwistDirection::Right;
  bool is_twist_ = true;
};

// Model zoo configuration. Parameters are free-form key/value pairs with
// per-model validation in instantiate_model.
struct ModelConfig {
  std::string model;  // rigid | integrable | bump_standard | engineered_zone | shear_pendulum_section
  std::map<std::string, double> params;
  Annulus annulus{0.0, 1.0};
  std::optional<Annulus> continuation;

  double param(const std::string& key, double fallback) const {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  }
};

AnnulusMap instantiate_model(const ModelConfig& config);

// smooth C^2 bump: 0 below lo, 1 above hi (quintic smoothstep)
double smoothstep(double lo, double hi, double x);
double smoothstep_deriv(double lo, double hi, double x);

struct TwistReport {
  double area_residual = 0.0;      // max |det J - 1|
  double twist_margin = 0.0;       // min d(theta')/dr, signed toward declared direction
  double boundary_residual = 0.0;  // max |r' - r| over boundary samples
  bool pass = false;
  // same margins restricted to a caller-declared band (useful for bump
  // models whose transition collars are not uniformly twisting)
  double band_area_residual = 0.0;
  double band_twist_margin = 0.0;
};

TwistReport verify_twist(const AnnulusMap& map, long samples, const Tolerances& tol = {},
                         std::optional<Interval> band = {});

class CertifiedCircle;  // circles.hpp

struct SpecialnessReport {
  struct RationalFlag {
    size_t circle_index;
    double rho;
    long p;
    long q;
  };
  std::vector<RationalFlag> rational_flags;
  bool lower_boundary_dense = false;
  bool upper_boundary_dense = false;
  double lower_boundary_gap = 0.0;  // largest angular gap of the boundary orbit
  double upper_boundary_gap = 0.0;
  double lower_accumulation_dist = 0.0;  // nearest catalog circle to each boundary
  double upper_accumulation_dist = 0.0;
  bool accumulation_ok = false;
};

// Heuristic screening of the specialness conditions: rational rotation
// numbers in the catalog, eps-density of boundary orbits, and accumulation
// of the catalog onto the boundaries. Report-only.
SpecialnessReport check_special(const AnnulusMap& map, const std::vector<CertifiedCircle>& catalog,
                                long q_max, double tol_rat = 1e-6, double eps_dense = 1e-2,
                                double delta_acc = 5e-2, long orbit_len = 100000);

}  // namespace drift
