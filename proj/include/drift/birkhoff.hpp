#pragma once

#include "drift/polysystem.hpp"

namespace drift {

enum class ArcSide { Right, Left, Unoriented };

// Arc based at a point of a circle, descending strictly below it, mapped
// back onto the circle by one correspondence.
struct SplittingArc {
  Arc arc;                 // arc.front() is the base point alpha on Gamma
  Point base;
  ArcSide side = ArcSide::Unoriented;
  int corr_id = -1;
  int equivariant_m = 0;   // nonzero when produced through psi_{i(m)}
  double image_residual = 0.0;  // max dist(psi_i(arc(s)), Gamma)
  double theta0 = 0.0;     // projection interval [theta0, theta0 +/- tau]
  double tau = 0.0;
};

// The open region between a right/left splitting arc and its circle: for
// each angle in the projection interval, the vertical gap between the arc's
// topmost crossing and the graph.
struct ArcDomain {
  const SplittingArc* arc;
  const CertifiedCircle* circle;

  // membership: x below the circle, above the arc's top crossing on the
  // vertical of x, with that vertical meeting the arc interior
  bool contains(const Point& p) const;
  // topmost arc crossing below angle theta, if the vertical meets the arc
  std::optional<double> beta(double theta) const;
};

struct FrontierOptions {
  size_t n_theta = 256;
  size_t n_r = 192;
  long long flood_budget = 4000000;
  int samples_per_cell = 4;
  double certify_tol = 1e-6;
  int newton_iters = 12;
  double strip_pad = 0.02;   // initial strip height above the seed sup
  int strip_growth = 4;      // doublings before giving up
};

struct FrontierResult {
  CertifiedCircle circle;
  GridSpec grid;
  std::vector<uint8_t> filled;   // the filled invariant set at grid resolution
  long long evals = 0;
};

// The Birkhoff procedure: floods Gamma^- together with the forward orbit of
// V under phi alone, fills the result by connected-component surgery on the
// complement (4-connectivity for open sets, 8 for their complements),
// extracts the frontier as a per-column supremum graph and certifies it.
// The result lies (weakly) above Gamma with a strict gap somewhere.
FrontierResult birkhoff_procedure(const AnnulusMap& map, const CertifiedCircle& gamma,
                                  const Region& seed, const FrontierOptions& opts = {});

// Transfer search: smallest n in [n_min, budget] such that phi^n(V) carries a
// sample into V' strictly below gamma_prime.
struct TransferHit {
  long n;
  Point witness;        // the sample of phi^n(V) inside V'
  Point source;         // its preimage in V
};
Search<TransferHit> transfer_search(const AnnulusMap& map, const Region& seed,
                                    const CertifiedCircle& gamma_prime, const Region& target,
                                    long budget, long n_min = 0, int seed_samples = 64);

enum class OrientationFilter { Any, Right, Left };

struct SplittingArcOptions {
  int theta_samples = 512;      // preimage-curve tracing resolution
  double tol_split = 1e-6;
  double max_tau = 0.49;        // strict tau < 1/2 with tolerance
  int equivariant_m_max = 0;    // search psi_{i(m)} for |m| <= this
  bool allow_nonvertical = false;  // accept arcs with nonvertical approach
};

// Traces the preimage of the circle under each correspondence, keeps
// connected pieces lying strictly below and touching the circle at a point,
// classifies their orientation and filters.
Search<SplittingArc> find_splitting_arc(const CertifiedCircle& gamma, const Polysystem& poly,
                                        OrientationFilter required,
                                        const SplittingArcOptions& opts = {});

struct CruxOptions {
  FrontierOptions frontier;
  SplittingArcOptions arcs;
  long transfer_budget = 200000;
  long n_min = 1;              // keeps non-phi symbols isolated in words
  int shrink_attempts = 40;    // geometric halving cap when inscribing V'
  double ball_margin = 0.1;
  double max_ball_halfwidth_r = 0.015;
  bool try_method1 = false;    // symmetrized retry (inverse allowed)
  bool try_method2 = false;    // equivariant family retry
};

struct CruxStep {
  CertifiedCircle gamma_prime;
  NuBall ball;        // V' centered on gamma_prime
  long n = 0;         // phi-iterates
  int corr_id = -1;
  int equivariant_m = 0;
  Point witness;      // hit point of phi^n(V) on the arc
  bool zone_branch = false;  // true when gamma_prime was a zone upper boundary
  long long evals = 0;
};

// One step of the constructive climb: computes Gamma' = B(Gamma,V), finds a
// splitting arc on it (right/left as the twist requires at zone boundaries),
// lands phi^n(V) on the arc, pushes through the correspondence and inscribes
// a nu-ball on Gamma'. Containment V' c psi_i(phi^n(V)) is certified at the
// probe points by pullback.
Search<CruxStep> crux_step(const AnnulusMap& map, const CertifiedCircle& gamma, const Region& seed,
                           const Polysystem& poly,
                           const std::vector<BirkhoffZone>& zones, const CruxOptions& opts = {});

struct CoherentStep {
  CertifiedCircle circle;   // Gamma_{n+1}
  NuBall ball;              // V_{n+1}
  long m = 0;               // witnesses: V_{n+1} c psi_i(phi^m(V_n))
  int corr_id = -1;
  int equivariant_m = 0;
  double gap_to_prev = 0.0;     // Hausdorff gap to Gamma_n
  bool across_zone = false;     // gap certified as a Birkhoff zone
};

struct CoherentSequence {
  CertifiedCircle gamma0;
  Region v0;
  std::vector<CoherentStep> steps;

  const CertifiedCircle& top() const { return steps.empty() ? gamma0 : steps.back().circle; }
};

struct CoherentOptions {
  CruxOptions crux;
  double delta = 0.05;         // dichotomy scale: steps are delta/2-close or zones
  int max_steps = 4000;
  std::optional<Region> avoid;   // compact invariant cell set to stay clear of
};

// Iterates crux steps from (Gamma_0, V_0) until the top circle reaches
// Gamma_star, maintaining the dichotomy that consecutive circles are either
// delta-close in Hausdorff distance or bound a recorded Birkhoff zone.
Search<CoherentSequence> coherent_sequence(const AnnulusMap& map, const Polysystem& poly,
                                           const CertifiedCircle& gamma0, const Region& v0,
                                           const CertifiedCircle& gamma_star,
                                           std::vector<BirkhoffZone>& zones,
                                           const CoherentOptions& opts);

// Zone crossing (strong connecting lemma): z in V_low whose orbit enters
// V_high after n >= n_min iterates, found by forward orbit search over seed
// samples restricted to the zone.
struct ZoneCrossing {
  Point z;
  long n;
};
Search<ZoneCrossing> cross_zone(const AnnulusMap& map, const BirkhoffZone& zone,
                                const Region& v_low, const Region& v_high, long n_min,
                                long long budget, int seed_samples = 256);

// Torsion search: a point z in the lower ball whose lower vertical, iterated
// forward, crosses the given arc spanning the strip between the circles.
struct TorsionHit {
  Point z;
  long m;
  Point crossing;
};
Search<TorsionHit> torsion_vertical_search(const AnnulusMap& map, const CertifiedCircle& gamma_low,
                                           const CertifiedCircle& gamma_high, const Arc& crossing_arc,
                                           const NuBall& u_low, long budget,
                                           int vertical_samples = 128);

}  // namespace drift
