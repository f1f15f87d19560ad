#pragma once

// Test-side oracles, independent of the library's implementation paths.

#include <functional>
#include <optional>
#include <vector>

#include "drift/maps.hpp"

namespace oracles {

using drift::AnnulusMap;
using drift::Lift;
using drift::Point;

inline constexpr double kGolden = 0.61803398874989484820;

// weighted Birkhoff average of lift displacements, coded independently of
// drift::rotation_number
double rotation_number(const AnnulusMap& map, const Point& seed, long iterates);

// continued-fraction convergents p/q of x
struct Convergent {
  long p;
  long q;
};
std::vector<Convergent> convergents(double x, int count);

// periodic orbit of rotation p/q through a 2d Newton on the lift, with its
// Greene residue (2 - tr DF^q)/4
struct PeriodicOrbit {
  Lift x;
  double residue = 0.0;
  bool found = false;
};
PeriodicOrbit find_periodic_orbit(const AnnulusMap& map, long p, long q, double r_guess);

// parameter at which |residue| of the p/q orbit crosses 1/4, located by
// bisection over the map family
double residue_threshold_k(const std::function<AnnulusMap(double)>& family, long p, long q,
                           double k_lo, double k_hi, double r_guess);

// independent invariant-graph check: iterate a seed orbit, fit a piecewise
// linear graph on a fine grid, return the max invariance defect
struct GraphFit {
  bool covered = false;   // orbit filled the circle at grid resolution
  double residual = 0.0;
  std::vector<double> samples;
};
GraphFit fit_invariant_graph(const AnnulusMap& map, const Point& seed, long orbit_len,
                             int grid_size);

}  // namespace oracles
