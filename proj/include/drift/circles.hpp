#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "drift/maps.hpp"

namespace drift {

// An essential invariant circle certified as a Lipschitz graph over T,
// sampled on a uniform theta-grid. Construction enforces the invariance
// residual, the Lipschitz bound of the samples and the range.
class CertifiedCircle {
public:
  CertifiedCircle() = default;
  CertifiedCircle(Eigen::ArrayXd samples, double nu_est, double residual, double rho,
                  double rho_err, double tol);

  size_t grid_size() const { return static_cast<size_t>(samples_.size()); }
  const Eigen::ArrayXd& samples() const { return samples_; }
  double nu_est() const { return nu_est_; }
  double residual() const { return residual_; }
  double rotation_number() const { return rho_; }
  double rotation_error() const { return rho_err_; }
  double tol() const { return tol_; }

  // graph height at any angle (cubic periodic interpolation)
  double value(double theta) const;
  double slope(double theta) const;

  double min_level() const { return samples_.minCoeff(); }
  double max_level() const { return samples_.maxCoeff(); }

  bool above(const Point& p, double slack = 0.0) const { return p.r > value(p.theta) + slack; }
  bool below(const Point& p, double slack = 0.0) const { return p.r < value(p.theta) - slack; }

  // vertical offset r - l(theta); positive above the graph
  double vertical_offset(const Point& p) const { return p.r - value(p.theta); }

  // Euclidean distance from a point to the sampled graph
  double distance(const Point& p) const;

  // sup-distance between two sampled graphs (Hausdorff distance collapses to
  // this for graphs over the same grid)
  static double hausdorff(const CertifiedCircle& c1, const CertifiedCircle& c2);

  // pointwise order
  static bool leq(const CertifiedCircle& c1, const CertifiedCircle& c2, double tol = 0.0);

private:
  Eigen::ArrayXd samples_;
  double nu_est_ = 0.0;
  double residual_ = 0.0;
  double rho_ = 0.0;
  double rho_err_ = 0.0;
  double tol_ = 0.0;
};

// exactly horizontal circle (integrable/rigid rows, annulus boundaries)
CertifiedCircle horizontal_circle(const AnnulusMap& map, double level, size_t n_grid = 2048);

struct CertifyOptions {
  size_t n_grid = 2048;
  long orbit_len = 200000;       // closure-fit orbit length
  long rho_iterates = 20000;     // per rotation-number probe in the bisection
  int bisect_iters = 60;
  int scan_points = 33;          // initial bracketing scan
  double max_theta_gap = 1e-2;   // orbit coverage gate before fitting
  int newton_iters = 12;
  std::optional<Interval> r_bracket;  // restrict the level search
  double theta_probe = 0.0;      // seed angle for the level search
};

struct CertifyResult {
  std::optional<CertifiedCircle> circle;
  double best_residual = std::numeric_limits<double>::infinity();
  long long evals = 0;
  std::string note;

  explicit operator bool() const { return circle.has_value(); }
};

// Attempts to certify the invariant graph with the given rotation number by
// a bisection on the action level, a long-orbit closure fit and a Newton
// polish of the invariance equation on the sampled graph. Failure reports
// the best residual achieved; it is not a proof of nonexistence.
CertifyResult certify_circle(const AnnulusMap& map, double seed_rotation, double tol,
                             const CertifyOptions& opts = {});

// Certify starting from an explicit graph estimate (used for frontier
// graphs): Newton polish only, no level search.
CertifyResult certify_from_graph(const AnnulusMap& map, const Eigen::ArrayXd& graph_estimate,
                                 double tol, int newton_iters = 12);

// Catalog sweep over a sorted rotation grid. Successful certifications are
// ordered pointwise; crossing pairs are re-certified at tighter tolerance
// and the loser is dropped.
std::vector<CertifiedCircle> sweep_catalog(const AnnulusMap& map,
                                           const std::vector<double>& rotation_grid, double tol,
                                           const CertifyOptions& opts = {});

// Pointwise maximum of a family, re-certified.
CertifiedCircle sup_circles(const std::vector<CertifiedCircle>& family, const AnnulusMap& map);

struct ZoneEvidence {
  double rho_attempted;
  double best_residual;
};

// A gap in the catalog with certification failures as exclusion evidence.
// Heuristic: the sweep record witnesses that no circle was found, it does
// not prove nonexistence.
struct BirkhoffZone {
  CertifiedCircle lower;
  CertifiedCircle upper;
  std::vector<ZoneEvidence> evidence;

  double gap() const { return CertifiedCircle::hausdorff(lower, upper); }
  bool strictly_inside(const Point& p, double slack = 0.0) const {
    return lower.above(p, slack) && upper.below(p, slack);
  }
};

struct ZoneOptions {
  double gap_min = 1e-4;
  int refinement = 12;
  int max_rounds = 4;
  double tol = 1e-6;
  CertifyOptions certify;
};

// Splits every catalog gap wider than gap_min by extra certification
// attempts; emits a BirkhoffZone where all attempts fail. The catalog is
// extended in place with the refinement successes.
std::vector<BirkhoffZone> detect_zones(std::vector<CertifiedCircle>& catalog,
                                       const AnnulusMap& map, const ZoneOptions& opts = {});

}  // namespace drift
