#include <random>

#include "doctest.h"
#include "drift/circles.hpp"
#include "oracles.hpp"

using namespace drift;

namespace {

AnnulusMap make(const std::string& model, std::map<std::string, double> params, double a = 0.0,
                double b = 1.0) {
  ModelConfig cfg;
  cfg.model = model;
  cfg.params = std::move(params);
  cfg.annulus = Annulus(a, b);
  cfg.continuation = Annulus(a - 0.05, b + 0.05);
  return instantiate_model(cfg);
}

}  // namespace

TEST_CASE("integrable model has unit twist and unit Jacobian") {
  AnnulusMap t0 = make("integrable", {});
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    Point p{u(rng), u(rng)};
    Mat2 J = t0.jacobian(p);
    CHECK(J(0, 1) == doctest::Approx(1.0));
    CHECK(J.determinant() == doctest::Approx(1.0));
  }
}

TEST_CASE("bump standard at k=0 coincides with the integrable model") {
  AnnulusMap t0 = make("integrable", {});
  AnnulusMap bump = make("bump_standard", {{"k", 0.0}, {"beta", 0.05}});
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    Point p{u(rng), u(rng)};
    Point q1 = t0.step(p);
    Point q2 = bump.step(p);
    CHECK(std::abs(circle_diff(q1.theta, q2.theta)) < 1e-15);
    CHECK(std::abs(q1.r - q2.r) < 1e-15);
  }
}

TEST_CASE("bump standard is exactly symplectic on the kick-safe band") {
  // the whole kick path from these points stays where the taper is flat
  AnnulusMap map = make("bump_standard", {{"k", 0.8}, {"beta", 0.05}});
  const double amp = 0.8 / kTwoPi;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> uth(0.0, 1.0);
  std::uniform_real_distribution<double> ur(0.05 + amp, 0.95 - amp);
  for (int i = 0; i < 10000; ++i) {
    Point p{uth(rng), ur(rng)};
    CHECK(std::abs(map.jacobian(p).determinant() - 1.0) < 1e-12);
  }
}

TEST_CASE("model parameter validation") {
  CHECK_THROWS_AS(make("bump_standard", {{"k", -1.0}}), Error);
  CHECK_THROWS_AS(make("bump_standard", {{"k", 0.5}, {"beta", 0.6}}), Error);
  CHECK_THROWS_AS(make("engineered_zone", {{"k", 1.0}, {"band_lo", 0.6}, {"band_hi", 0.4}}), Error);
  CHECK_THROWS_AS(make("no_such_model", {}), Error);
}

TEST_CASE("verify_twist reports") {
  Tolerances tol;
  SUBCASE("integrable") {
    TwistReport rep = verify_twist(make("integrable", {}), 2000, tol);
    CHECK(rep.area_residual < 1e-14);
    CHECK(rep.twist_margin == doctest::Approx(1.0));
    CHECK(rep.boundary_residual < 1e-14);
    CHECK(rep.pass);
  }
  SUBCASE("rigid rotation fails the twist check") {
    TwistReport rep = verify_twist(make("rigid", {{"omega", 0.3}}), 2000, tol);
    CHECK(rep.twist_margin == doctest::Approx(0.0));
    CHECK_FALSE(rep.pass);
  }
  SUBCASE("bump standard at k=1.2 passes on the kick-safe band") {
    AnnulusMap map = make("bump_standard", {{"k", 1.2}, {"beta", 0.05}});
    const double amp = 1.2 / kTwoPi;
    TwistReport rep = verify_twist(map, 5000, tol, Interval{0.05 + amp, 0.95 - amp});
    CHECK(rep.band_area_residual < 1e-12);
    CHECK(rep.band_twist_margin >= 0.9);
    CHECK(rep.boundary_residual < 1e-12);
    CHECK(rep.pass);
  }
  SUBCASE("shear pendulum section is a right-twist map") {
    AnnulusMap map = make("shear_pendulum_section", {{"mu", 0.3}, {"curvature", 0.2}});
    TwistReport rep = verify_twist(map, 5000, tol);
    CHECK(rep.twist_margin > 0.0);
    CHECK(rep.boundary_residual < 1e-12);
  }
}

TEST_CASE("forward-inverse round trip for every built-in model") {
  std::vector<AnnulusMap> models;
  models.push_back(make("integrable", {}));
  models.push_back(make("rigid", {{"omega", 0.377}}));
  models.push_back(make("bump_standard", {{"k", 0.5}, {"beta", 0.05}}));
  models.push_back(make("bump_standard", {{"k", 1.2}, {"beta", 0.05}}));
  models.push_back(
      make("engineered_zone", {{"k", 2.0}, {"band_lo", 0.45}, {"band_hi", 0.55}, {"beta", 0.02}}));
  models.push_back(make("shear_pendulum_section", {{"mu", 0.3}, {"curvature", 0.2}}));
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& map : models) {
    for (int i = 0; i < 1000; ++i) {
      Point p{u(rng), u(rng)};
      Point q = map.step_back(map.step(p));
      CHECK(annulus_dist(p, q) < 1e-9);
    }
  }
}

TEST_CASE("lift degree is one") {
  for (const char* model : {"integrable", "bump_standard", "engineered_zone"}) {
    std::map<std::string, double> params;
    if (std::string(model) != "integrable") params = {{"k", 1.0}};
    AnnulusMap map = make(model, params);
    for (double r : {0.2, 0.5, 0.8}) {
      Lift base = map.step(Lift{0.13, r});
      Lift moved = map.step(Lift{1.13, r});
      CHECK(moved.theta - base.theta == doctest::Approx(1.0).epsilon(1e-13));
      CHECK(moved.r == doctest::Approx(base.r).epsilon(1e-13));
    }
  }
}

TEST_CASE("images of verticals under right-twist maps tilt right (negatively)") {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  AnnulusMap maps[2] = {make("integrable", {}),
                        make("bump_standard", {{"k", 0.6}, {"beta", 0.1}})};
  for (int i = 0; i < 100; ++i) {
    const AnnulusMap& map = maps[i % 2];
    double theta0 = u(rng);
    double r0 = 0.2 + 0.5 * u(rng);
    double len = 0.05 + 0.1 * u(rng);
    auto image = make_arc_fn(
        [&](double s) { return map.step(Lift{theta0, r0 + len * s}); }, 128);
    CHECK(classify_tilt(image) == Tilt::Negative);
  }
}

TEST_CASE("specialness screening") {
  AnnulusMap t0 = make("integrable", {});
  SUBCASE("golden-shifted grid carries no rational flags") {
    // levels picked off low-denominator rationals, checked with the
    // continued-fraction oracle
    std::vector<CertifiedCircle> catalog;
    for (int j = 1; catalog.size() < 12; ++j) {
      double level = 0.1 + 0.8 * mod1(j * oracles::kGolden + 0.0123);
      bool near_rational = false;
      for (const auto& c : oracles::convergents(level, 12))
        if (c.q <= 50 && std::abs(level - double(c.p) / c.q) < 1e-5) near_rational = true;
      if (!near_rational) catalog.push_back(horizontal_circle(t0, level));
    }
    SpecialnessReport rep = check_special(t0, catalog, 50, 1e-6, 1e-2, 0.3, 20000);
    CHECK(rep.rational_flags.empty());
  }
  SUBCASE("a circle at r=1/3 is flagged rational with q=3") {
    std::vector<CertifiedCircle> catalog{horizontal_circle(t0, 1.0 / 3.0)};
    SpecialnessReport rep = check_special(t0, catalog, 50, 1e-6, 1e-2, 0.3, 20000);
    REQUIRE(rep.rational_flags.size() == 1);
    CHECK(rep.rational_flags[0].q == 3);
    CHECK(rep.rational_flags[0].p == 1);
  }
  SUBCASE("boundary density holds when both boundary rotations are irrational") {
    // annulus [1-golden, golden]: both boundary circles rotate irrationally
    AnnulusMap map = make("bump_standard", {{"k", 0.5}, {"beta", 0.05}},
                          1.0 - oracles::kGolden, oracles::kGolden);
    std::vector<CertifiedCircle> catalog{horizontal_circle(map, 1.0 - oracles::kGolden),
                                         horizontal_circle(map, oracles::kGolden)};
    SpecialnessReport rep = check_special(map, catalog, 20, 1e-6, 1e-2, 1e-6, 1000000);
    CHECK(rep.lower_boundary_dense);
    CHECK(rep.upper_boundary_dense);
  }
}
