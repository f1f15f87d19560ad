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

CertifyOptions quick_opts() {
  CertifyOptions o;
  o.orbit_len = 80000;
  o.rho_iterates = 10000;
  return o;
}

}  // namespace

TEST_CASE("certify an integrable circle (rational level, multi-seed path)") {
  AnnulusMap t0 = make("integrable", {});
  CertifyResult res = certify_circle(t0, 0.37, 1e-8, quick_opts());
  REQUIRE(res);
  CHECK(res.circle->residual() < 1e-12);
  CHECK(res.circle->nu_est() < 1e-9);
  for (double theta : {0.0, 0.33, 0.81})
    CHECK(res.circle->value(theta) == doctest::Approx(0.37).epsilon(1e-10));
}

TEST_CASE("certify the golden circle of the bump standard map at k=0.5") {
  AnnulusMap map = make("bump_standard", {{"k", 0.5}, {"beta", 0.05}});
  CertifyResult res = certify_circle(map, oracles::kGolden, 1e-8);
  REQUIRE(res);
  CHECK(res.circle->residual() < 1e-8);
  CHECK(res.circle->nu_est() < 1.0);
  CHECK(std::abs(res.circle->rotation_number() - oracles::kGolden) < 1e-6);

  // cross-check with the independent orbit-closure fit
  oracles::GraphFit fit =
      oracles::fit_invariant_graph(map, Point{0.0, res.circle->value(0.0)}, 400000, 1024);
  REQUIRE(fit.covered);
  CHECK(fit.residual < 1e-4);
  for (int j = 0; j < 1024; ++j)
    CHECK(std::abs(fit.samples[j] - res.circle->value(static_cast<double>(j) / 1024)) < 1e-4);
}

TEST_CASE("golden-circle certification fails at k=1.2, past the critical parameter") {
  AnnulusMap map = make("bump_standard", {{"k", 1.2}, {"beta", 0.05}});
  CertifyResult res = certify_circle(map, oracles::kGolden, 1e-8);
  CHECK_FALSE(res);
  CHECK(res.best_residual > 1e-2);
}

TEST_CASE("Greene residue oracle locates the critical parameter near 0.9716") {
  auto family = [](double k) {
    return make("bump_standard", {{"k", k}, {"beta", 0.05}});
  };
  for (auto [p, q] : {std::pair<long, long>{13, 21}, {21, 34}}) {
    double kc = oracles::residue_threshold_k(family, p, q, 0.5, 1.2, double(p) / q);
    CHECK(kc > 0.9);
    CHECK(kc < 1.05);
  }
}

TEST_CASE("catalog sweep over the integrable map is totally ordered") {
  AnnulusMap t0 = make("integrable", {});
  std::vector<double> grid;
  for (int j = 1; j <= 20; ++j) grid.push_back(0.05 + 0.9 * mod1(j * oracles::kGolden));
  std::sort(grid.begin(), grid.end());
  auto catalog = sweep_catalog(t0, grid, 1e-8, quick_opts());
  CHECK(catalog.size() == 20);
  for (size_t i = 0; i + 1 < catalog.size(); ++i) {
    CHECK(CertifiedCircle::leq(catalog[i], catalog[i + 1]));
    CHECK(catalog[i].rotation_number() < catalog[i + 1].rotation_number());
  }
}

TEST_CASE("pointwise order of two constant graphs") {
  AnnulusMap t0 = make("integrable", {});
  CertifiedCircle lo = horizontal_circle(t0, 0.2);
  CertifiedCircle hi = horizontal_circle(t0, 0.5);
  CHECK(CertifiedCircle::leq(lo, hi));
  CHECK_FALSE(CertifiedCircle::leq(hi, lo));
}

TEST_CASE("catalog sweep of the bump standard map at k=0.9") {
  AnnulusMap map = make("bump_standard", {{"k", 0.9}, {"beta", 0.05}});
  std::vector<double> grid;
  for (int j = 0; j < 200; ++j) grid.push_back(0.03 + 0.94 * (j + 0.5) / 200.0);
  CertifyOptions opts = quick_opts();
  opts.orbit_len = 40000;
  opts.rho_iterates = 6000;
  auto catalog = sweep_catalog(map, grid, 1e-5, opts);
  CHECK(catalog.size() > 0);
  CHECK(catalog.size() < 200);
  const double tol = 1e-5;
  for (size_t i = 0; i + 1 < catalog.size(); ++i) {
    CHECK(CertifiedCircle::leq(catalog[i], catalog[i + 1], 10.0 * tol));
    CHECK(catalog[i].rotation_number() <= catalog[i + 1].rotation_number() + 1e-6);
    double gap = (catalog[i + 1].samples() - catalog[i].samples()).minCoeff();
    if (gap > 10.0 * tol)
      CHECK(catalog[i].rotation_number() < catalog[i + 1].rotation_number());
  }
  // construction invariants hold on the stored samples
  for (const auto& circle : catalog) {
    CHECK(circle.residual() < circle.tol());
    CHECK(circle.min_level() >= -0.05);
    CHECK(circle.max_level() <= 1.05);
    size_t n = circle.grid_size();
    for (size_t j = 0; j < n; ++j) {
      double dj = std::abs(circle.samples()[(j + 1) % n] - circle.samples()[j]) * n;
      CHECK(dj <= circle.nu_est() + 1e-12);
    }
  }
}

TEST_CASE("sup of circle families") {
  AnnulusMap t0 = make("integrable", {});
  CertifiedCircle lo = horizontal_circle(t0, 0.2);
  CertifiedCircle hi = horizontal_circle(t0, 0.5);
  SUBCASE("pointwise max of constants") {
    CertifiedCircle sup = sup_circles({lo, hi}, t0);
    CHECK(sup.value(0.3) == doctest::Approx(0.5).epsilon(1e-10));
  }
  SUBCASE("singleton family returns the same circle") {
    CertifiedCircle sup = sup_circles({lo}, t0);
    CHECK(CertifiedCircle::hausdorff(sup, lo) < 1e-10);
  }
  SUBCASE("empty family is an error") {
    try {
      sup_circles({}, t0);
      FAIL("expected EmptyFamily");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::EmptyFamily);
    }
  }
  SUBCASE("idempotent and commutative") {
    CertifiedCircle s1 = sup_circles({lo, hi}, t0);
    CertifiedCircle s2 = sup_circles({hi, lo, hi}, t0);
    CHECK(CertifiedCircle::hausdorff(s1, s2) < 1e-10);
  }
}

TEST_CASE("zone detection") {
  SUBCASE("integrable catalogs have no zones") {
    AnnulusMap t0 = make("integrable", {});
    std::vector<double> grid;
    for (int j = 0; j < 24; ++j) grid.push_back(0.05 + 0.9 * mod1((j + 1) * oracles::kGolden));
    std::sort(grid.begin(), grid.end());
    auto catalog = sweep_catalog(t0, grid, 1e-8, quick_opts());
    ZoneOptions zo;
    zo.gap_min = 0.02;
    zo.certify = quick_opts();
    auto zones = detect_zones(catalog, t0, zo);
    CHECK(zones.empty());
  }
  SUBCASE("engineered zone is detected with boundaries hugging the band") {
    AnnulusMap map = make("engineered_zone",
                          {{"k", 2.0}, {"band_lo", 0.45}, {"band_hi", 0.55}, {"beta", 0.02}});
    std::vector<double> grid;
    for (int j = 0; j < 56; ++j) grid.push_back(0.05 + 0.9 * (j + 0.37) / 56.0);
    CertifyOptions opts = quick_opts();
    opts.orbit_len = 40000;
    auto catalog = sweep_catalog(map, grid, 1e-5, opts);
    REQUIRE(catalog.size() > 10);
    ZoneOptions zo;
    zo.gap_min = 0.025;
    zo.tol = 1e-5;
    zo.certify = opts;
    auto zones = detect_zones(catalog, map, zo);
    REQUIRE(zones.size() == 1);
    CHECK(zones[0].lower.max_level() > 0.44);
    CHECK(zones[0].lower.max_level() < 0.48);
    CHECK(zones[0].upper.min_level() > 0.52);
    CHECK(zones[0].upper.min_level() < 0.56);
    // zone boundaries belong to the catalog and nothing sits strictly inside
    for (const auto& circle : catalog) {
      bool above_lower = CertifiedCircle::leq(zones[0].lower, circle, 1e-9) &&
                         CertifiedCircle::hausdorff(zones[0].lower, circle) > 1e-6;
      bool below_upper = CertifiedCircle::leq(circle, zones[0].upper, 1e-9) &&
                         CertifiedCircle::hausdorff(zones[0].upper, circle) > 1e-6;
      bool strictly_inside = above_lower && below_upper;
      CHECK_FALSE(strictly_inside);
    }
  }
  SUBCASE("fully chaotic interior leaves one spanning zone") {
    AnnulusMap map = make("bump_standard", {{"k", 5.0}, {"beta", 0.05}});
    std::vector<CertifiedCircle> catalog{horizontal_circle(map, 0.0),
                                         horizontal_circle(map, 1.0)};
    ZoneOptions zo;
    zo.gap_min = 0.02;
    zo.tol = 1e-5;
    zo.certify = quick_opts();
    zo.certify.orbit_len = 30000;
    auto zones = detect_zones(catalog, map, zo);
    REQUIRE(zones.size() == 1);
    CHECK(zones[0].gap() == doctest::Approx(1.0).epsilon(0.01));
  }
}
