#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace drift {

// Failure codes used across the library. Search-style operations return
// tagged results instead of throwing; genuine contract violations throw.
enum class Errc {
  InvalidParameter,
  BallExitsAnnulus,
  DegenerateDerivative,
  EmptyFamily,
  RecertificationFailed,
  OutsideDomain,
  OutsideRestriction,
  DomainEscapesAnnulus,
  TouchesTop,
  FrontierNotInvariant,
  ConfigError,
  ChainConditionViolated,
  NotReplayable,
  IoError,
};

class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const { return code_; }

private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, Errc code, const std::string& what) {
  if (!ok) fail(code, what);
}

// Outcome of a bounded search: either a hit, or how the search ran out.
template <class T>
struct Search {
  std::optional<T> hit;
  long long evals = 0;         // map evaluations spent
  bool budget_exhausted = false;

  explicit operator bool() const { return hit.has_value(); }
  const T& operator*() const { return *hit; }
  const T* operator->() const { return &*hit; }
};

// Global numeric knobs. Every tolerance used by the library lives here so a
// run manifest can record them all.
struct Tolerances {
  double tol_area = 1e-9;       // |det J - 1| on the verified sample set
  double tol_boundary = 1e-9;   // boundary circle drift
  double tol_circ = 1e-6;       // default invariance residual for certification
  double tol_split = 1e-6;      // splitting arc image-on-circle residual
  double tol_rat = 1e-6;        // rational rotation number flagging
  double tol_angle = 1e-6;      // strictness margin for tilt classification
  double tol_deriv = 1e-9;      // degenerate arc derivative threshold
  double replay_tol = 1e-9;     // pseudo-orbit replay mismatch
  double gap_min = 1e-4;        // smallest inter-circle gap probed for zones
  double h_arc = 1e-3;          // max sample spacing along arcs
};

inline constexpr double kTwoPi = 6.28318530717958647692;

// mod-1 reduction to [0,1)
inline double mod1(double x) {
  double y = x - std::floor(x);
  return (y >= 1.0) ? y - 1.0 : y;
}

// signed circle distance in (-1/2, 1/2]
inline double circle_diff(double x, double y) {
  double d = mod1(x - y);
  return (d > 0.5) ? d - 1.0 : d;
}

// FNV-1a, used for config hashes in run manifests
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace drift
