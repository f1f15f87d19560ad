#pragma once

#include <functional>
#include <string>
#include <vector>

#include "drift/circles.hpp"

namespace drift {

// Union-of-rectangles region of the annulus (nu-balls are rectangles).
struct Region {
  struct Rect {
    double theta_center;     // rectangle midpoint, angle mod 1
    double theta_halfwidth;  // < 1/2; the full annulus is a wrap rectangle
    Interval r;
    bool wraps() const { return theta_halfwidth >= 0.5; }
  };
  std::vector<Rect> rects;

  bool empty() const { return rects.empty(); }
  bool contains(const Point& p) const {
    for (const auto& rect : rects) {
      if (!rect.r.contains(p.r)) continue;
      if (rect.wraps() || std::abs(circle_diff(p.theta, rect.theta_center)) <= rect.theta_halfwidth)
        return true;
    }
    return false;
  }
  static Region band(Interval r_range) {
    return Region{{Rect{0.5, 0.5, r_range}}};
  }
  static Region ball(const NuBall& b) {
    return Region{{Rect{b.center.theta, b.theta_halfwidth(), b.r}}};
  }
  void add(const NuBall& b) { rects.push_back(Rect{b.center.theta, b.theta_halfwidth(), b.r}); }
};

// interior sample grid of a region, per_axis^2 points per rectangle
std::vector<Point> region_probe_points(const Region& region, int per_axis);

// A locally defined area-preserving diffeomorphism with explicit domain and
// image and a nonnegative transit-time function.
struct Correspondence {
  int id = 0;
  Region domain;
  Region image;
  std::function<Point(const Point&)> fwd;
  std::function<Point(const Point&)> inv;
  std::function<double(const Point&)> transit_time;  // defaults to 0
  bool area_preserving = true;
  std::string label;

  double tau(const Point& p) const { return transit_time ? transit_time(p) : 0.0; }
};

// Vertical shear (theta, r) -> (theta, r + eps*sin(2*pi*theta)); the stock
// homoclinic-correspondence model. Domain defaults to everything.
Correspondence vertical_shear(int id, double eps, Region domain = Region::band({-1e30, 1e30}));

// Restriction of a correspondence to a grid of nu-balls of prescribed
// radius covering the annulus; one correspondence per ball.
std::vector<Correspondence> restrict_to_balls(const Correspondence& base, const Annulus& ambient,
                                              double spacing, double theta_halfwidth, double nu,
                                              double margin = 0.2);

struct Symbol {
  enum Kind { Phi, PhiInv, Corr } kind = Phi;
  int index = -1;  // correspondence id for Corr

  bool operator==(const Symbol&) const = default;
};

inline Symbol sym_phi() { return Symbol{Symbol::Phi, -1}; }
inline Symbol sym_phi_inv() { return Symbol{Symbol::PhiInv, -1}; }
inline Symbol sym_corr(int id) { return Symbol{Symbol::Corr, id}; }

struct OrbitWord {
  std::vector<Symbol> symbols;

  size_t size() const { return symbols.size(); }
  bool has_inverse() const;
  std::string text() const;             // "P Pi C1 ..."
  static OrbitWord parse(const std::string& text);
};

// Optional invariant sub-annulus bounded by two certified circles.
struct SubAnnulus {
  CertifiedCircle lower;
  CertifiedCircle upper;
  bool contains(const Point& p, double slack = 0.0) const {
    return !lower.above(p, slack) && !upper.below(p, slack);
  }
};

// One annulus system: a base twist map, optionally its inverse as a symbol,
// and a family of correspondences.
struct Polysystem {
  AnnulusMap phi;
  bool with_inverse = false;
  std::vector<Correspondence> corrs;
  Annulus ambient{0.0, 1.0};
  std::optional<SubAnnulus> restriction;

  const Correspondence& corr(int id) const;
  Polysystem symmetrized() const {
    Polysystem g = *this;
    g.with_inverse = true;
    return g;
  }
  Polysystem without_inverse() const {
    Polysystem f = *this;
    f.with_inverse = false;
    return f;
  }
};

struct ApplyResult {
  Point endpoint;
  std::vector<Point> trajectory;  // includes the start point
};

// Applies a word symbol by symbol, failing fast at the first symbol whose
// domain excludes the current point.
ApplyResult apply_word(const Polysystem& poly, const OrbitWord& word, const Point& start);

// Grid reachability ----------------------------------------------------------

struct GridSpec {
  size_t n_theta = 256;
  size_t n_r = 256;
  Interval r_range{0.0, 1.0};

  size_t cells() const { return n_theta * n_r; }
  size_t cell_of(const Point& p) const;
  bool in_range(const Point& p) const { return p.r >= r_range.lo && p.r <= r_range.hi; }
  Point cell_center(size_t idx) const;
  double cell_width() const { return 1.0 / n_theta; }
  double cell_height() const { return r_range.length() / n_r; }
};

// Occupancy grid with pointwise provenance: every occupied cell stores the
// exact orbit point through which it was first entered, together with the
// predecessor cell and the symbol used, so words reconstructed from the
// provenance replay exactly.
struct ReachSet {
  struct Instance {
    int32_t cell;
    Point p;          // genuine orbit point inside the cell
    int32_t parent;   // instance index; -1 for seed samples
    Symbol via;
  };

  GridSpec grid;
  std::vector<uint8_t> occupied;
  std::vector<int32_t> first_instance;  // -1 when unoccupied
  std::vector<Instance> instances;
  bool budget_exhausted = false;
  long long evals = 0;

  size_t count() const;
  bool is_occupied(size_t idx) const { return occupied[idx] != 0; }
  const Point& entry_point(size_t idx) const { return instances[first_instance[idx]].p; }
  OrbitWord word_to(size_t idx) const;
  Point seed_point_of(size_t idx) const;  // replayable start of the provenance chain
};

// Breadth-first cell flood under all available symbols. Each cell keeps up
// to samples_per_cell distinct entry points for expansion. With
// isolate_corrs set, correspondence symbols only fire from points entered
// via the base map, so provenance words have isolated non-phi symbols.
ReachSet reachable_set(const Polysystem& poly, const Region& seed, const GridSpec& grid,
                       long long budget, int samples_per_cell = 4, bool isolate_corrs = false);

// seed from explicit points (provenance chains then start exactly there)
ReachSet reachable_set(const Polysystem& poly, const std::vector<Point>& seed_points,
                       const GridSpec& grid, long long budget, int samples_per_cell = 4,
                       bool isolate_corrs = false);

// Symmetrization -------------------------------------------------------------

struct SymmetrizeOptions {
  long long recurrence_budget = 1000000;
  double seed_radius = 1e-5;
  double shrink_margin = 0.5;  // recurrence target: ball scaled by this factor
};

struct SymmetrizedWord {
  OrbitWord word;        // inverse-free
  Point seed_center;     // shrunken seed
  double seed_radius;
  Point endpoint;        // endpoint of the replayed f-word
  long long evals = 0;
};

// Replaces every PhiInv occurrence by a forward run found through a
// recurrence search, shrinking the seed window so the new orbit stays within
// eps of the original target window.
Search<SymmetrizedWord> symmetrize_word(const Polysystem& poly, const OrbitWord& word,
                                        const Point& seed_center, double eps,
                                        const SymmetrizeOptions& opts = {});

// Equivariant extension ------------------------------------------------------

// psi_{i(m)} = phi^m o psi_i o phi^{-m} with transported domain and image.
Correspondence equivariant_extension(const Polysystem& poly, int corr_id, int m);

// delta-boundedness ----------------------------------------------------------

struct DeltaBoundedReport {
  double sup_dist = 0.0;  // worst dist(x, Gamma) over crossing points found
  bool pass = false;
  std::optional<Point> witness;      // a crossing point beyond delta, if any
  size_t witness_circle = 0;
};

// Samples points below each catalog circle that some correspondence maps to
// the closed region above it and records the largest distance to the circle.
DeltaBoundedReport check_delta_bounded(const Polysystem& poly,
                                       const std::vector<CertifiedCircle>& catalog, double delta,
                                       long samples);

}  // namespace drift
