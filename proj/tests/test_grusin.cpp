#include <catch_amalgamated.hpp>

#include <random>

#include "blochopt/grusin.hpp"

using namespace blochopt;

TEST_CASE("curvature of the metric family") {
  // lambda = 0 is the round sphere.
  for (double phi : {0.3, 0.9, M_PI / 2, 2.2})
    CHECK(std::abs(curvature(0.0, phi) - 1.0) < 1e-13);

  // Flat-pole family member: K(1, pi/4) = -4.
  CHECK(std::abs(curvature(1.0, M_PI / 4) - (-4.0)) < 1e-12);

  // Closed form against the FD curvature of the metric coefficient.
  for (double lam : {0.2, 0.5, 0.8})
    for (double phi : {0.4, 0.7, 1.1, 1.4}) {
      const double num = curvature_numeric(
          [&](double x) { return metric_coefficient(lam, x); }, phi);
      CHECK(std::abs(curvature(lam, phi) - num) < 1e-6);
    }

  // Same check for the explicit tan^2 coefficient at lambda = 1.
  const double num1 = curvature_numeric(
      [](double x) { return std::tan(x) * std::tan(x); }, M_PI / 4);
  CHECK(std::abs(num1 - (-4.0)) < 1e-5);

  CHECK_THROWS_AS(curvature(1.0, M_PI / 2), CurvatureBlowup);
  CHECK_THROWS_AS(curvature(-0.2, 1.0), DomainError);
  CHECK_THROWS_AS(curvature(1.2, 1.0), DomainError);
}

TEST_CASE("curvature derivative and its interior zero") {
  // FD cross-check of K'.
  for (double lam : {0.3, 0.8})
    for (double phi : {0.5, 0.9, 1.3}) {
      const double h = 1e-5;
      const double fd =
          (curvature(lam, phi + h) - curvature(lam, phi - h)) / (2.0 * h);
      CHECK(std::abs(curvature_derivative(lam, phi) - fd) < 1e-5);
    }

  // lambda = 0.8: K' vanishes exactly at phi = pi/4 (X = (3 lambda - 2)/lambda).
  CHECK(std::abs(curvature_derivative(0.8, M_PI / 4)) < 1e-13);
  CHECK(curvature_derivative(0.8, M_PI / 4 - 0.05) < 0.0);
  CHECK(curvature_derivative(0.8, M_PI / 4 + 0.05) > 0.0);

  // lambda = 0.5 < 2/3: monotone on the open quarter-circle.
  for (int i = 1; i < 40; ++i) {
    const double phi = i * (M_PI / 2) / 40.0;
    CHECK(curvature_derivative(0.5, phi) > 0.0);
  }
}

TEST_CASE("closed-form geodesic of the flat-pole member") {
  const double phi0 = M_PI / 2, pp0 = 1.0, pt = 0.5;
  // Frozen reference values.
  const struct {
    double t, phi, theta;
  } ref[] = {{0.4, 1.9679545968, 0.0112924325},
             {1.1, 2.5735191052, 0.3500969932},
             {2.0, 2.3513737723, 1.6235248976}};
  for (const auto& r : ref) {
    const auto g = grusin_geodesic_closed_form(phi0, pp0, pt, r.t);
    CHECK(std::abs(g.phi - r.phi) < 1e-9);
    CHECK(std::abs(g.theta - r.theta) < 1e-9);
  }

  // Against direct integration, uniformly on [0, 3].
  Vec4 y0;
  y0 << phi0, 0.0, pp0, pt;
  const auto traj = integrate_grusin(y0, 1.0, 3.0);
  for (int i = 0; i <= 50; ++i) {
    const double t = 3.0 * i / 50.0;
    const auto g = grusin_geodesic_closed_form(phi0, pp0, pt, t);
    const Vec4 y = traj.at(t);
    CHECK(std::abs(g.phi - y[0]) < 1e-6);
    CHECK(std::abs(g.theta - y[1]) < 1e-6);
  }

  // Off the unit-speed level the closed form refuses to answer.
  CHECK_THROWS_AS(grusin_geodesic_closed_form(M_PI / 3, 2.0, 1.0, 0.5),
                  BranchError);
}

TEST_CASE("equatorial oscillation band at lambda = 1") {
  // p_theta = 1: the meridian amplitude is pi/4 around the equator.
  Vec4 y0;
  y0 << M_PI / 2, 0.0, 1.0, 1.0;
  const auto traj = integrate_grusin(y0, 1.0, 12.0);
  double lo = M_PI, hi = 0.0;
  for (const auto& [t, y] : traj.samples) {
    lo = std::min(lo, y[0]);
    hi = std::max(hi, y[0]);
  }
  CHECK(std::abs(lo - M_PI / 4) < 1e-6);
  CHECK(std::abs(hi - 3 * M_PI / 4) < 1e-6);
}

TEST_CASE("return map: closed form, limits, and numerics") {
  CHECK(std::abs(return_map(0.5, 1.0) - 1.859042823428) < 1e-11);
  CHECK(std::abs(return_map(0.5, 0.3) - 2.680611695152) < 1e-11);
  CHECK(std::abs(return_map(0.0, 0.7) - M_PI) < 1e-14);
  CHECK(std::abs(return_map(0.9, 1.2) - 0.902419459928) < 1e-11);
  // lambda = 1 limit form.
  CHECK(std::abs(return_map(1.0, 0.5) - 1.736629707382) < 1e-11);
  CHECK(std::abs(return_map(1.0, 0.5) -
                 M_PI * (1.0 - 0.5 / std::sqrt(1.25))) < 1e-14);

  CHECK_THROWS_AS(return_map(0.5, 0.0), DomainError);
  CHECK_THROWS_AS(return_map(0.5, std::sqrt(2.0) + 1e-9), DomainError);
  CHECK_THROWS_AS(return_map(1.2, 0.5), DomainError);

  const auto s = return_map_numeric(0.5, 1.0);
  CHECK(std::abs(s.delta_theta - return_map(0.5, 1.0)) < 1e-8);
  CHECK(std::abs(s.period - 2.0 * 2.565100) < 1e-3);

  // Monotone decreasing and convex at lambda = 0.8.
  const double lam = 0.8;
  const double sup = return_map_domain_sup(lam);
  for (int i = 1; i + 1 < 20; ++i) {
    const double p = sup * (0.08 + 0.84 * i / 19.0);
    const double h = 1e-4 * sup;
    const double d1 = (return_map(lam, p + h) - return_map(lam, p - h)) / (2 * h);
    const double d2 = (return_map(lam, p + h) - 2 * return_map(lam, p) +
                       return_map(lam, p - h)) / (h * h);
    CHECK(d1 < 0.0);
    CHECK(d2 > 0.0);
  }
}

TEST_CASE("round-sphere conjugate points sit at distance pi") {
  for (double pt : {0.2, 0.5, 0.8}) {
    Vec4 y0;
    y0 << M_PI / 2, 0.0, std::sqrt(1.0 - pt * pt), pt;
    const auto tc = grusin_conjugate_time(y0, 0.0, 8.0);
    REQUIRE(tc.has_value());
    CHECK(std::abs(*tc - M_PI) < 1e-6);
  }
  // Off-equator start, both branches.
  for (double sgn : {1.0, -1.0}) {
    const double phi0 = M_PI / 3, pt = 0.4;
    const double w = grusin_weight(phi0, 0.0);
    Vec4 y0;
    y0 << phi0, 0.0, sgn * std::sqrt(1.0 - pt * pt * w), pt;
    const auto tc = grusin_conjugate_time(y0, 0.0, 8.0);
    REQUIRE(tc.has_value());
    CHECK(std::abs(*tc - M_PI) < 1e-6);
  }
}

TEST_CASE("conjugate locus of the oblate member is astroid-like") {
  const double phi0 = M_PI / 3;
  const double sup = 1.0 / std::sqrt(grusin_weight(phi0, 0.8));
  std::vector<double> pos, neg;
  for (int i = 0; i < 40; ++i) {
    const double f = 0.04 + 0.92 * i / 39.0;
    pos.push_back(sup * f);
    neg.push_back(-sup * (0.96 - 0.92 * i / 39.0));
  }
  const auto half_pos = conjugate_locus_sphere(0.8, phi0, pos);
  const auto half_neg = conjugate_locus_sphere(0.8, phi0, neg);
  REQUIRE(half_pos.size() >= 70);
  REQUIRE(half_neg.size() >= 70);

  // One closed sweep of the covector circle: the positive-p_theta call walks
  // the + branch up and the - branch back down; the negative-p_theta call
  // supplies the remaining half, - branch first to keep the angle monotone.
  std::vector<SphereLocusPoint> full(half_pos.begin(), half_pos.end());
  for (const auto& p : half_neg)
    if (p.branch < 0) full.push_back(p);
  for (const auto& p : half_neg)
    if (p.branch > 0) full.push_back(p);

  // Start the traversal mid-quadrant so all four cusps are interior points
  // of the polyline.
  const size_t k = full.size() / 8;
  std::vector<SphereLocusPoint> rot(full.begin() + k, full.end());
  rot.insert(rot.end(), full.begin(), full.begin() + k);

  const auto rev = tangent_reversals(rot);
  CHECK(rev.theta + rev.phi == 4);

  for (const auto& pt : full) {
    CHECK(pt.t > 0.0);
    CHECK(pt.phi > 0.05);
    CHECK(pt.phi < M_PI - 0.05);
  }
}

TEST_CASE("flat-pole equatorial locus has folds, not cusps") {
  std::vector<double> grid;
  for (int i = 0; i < 30; ++i) grid.push_back(0.3 + 3.2 * i / 29.0);
  const auto locus = conjugate_locus_sphere(1.0, M_PI / 2, grid);
  REQUIRE(locus.size() >= 50);
  // With the flat pole each branch keeps its conjugate points strictly inside
  // one hemisphere; the polyline threads the equator exactly once, at the
  // branch handover, and phi stays monotone through it. An astroid would
  // instead carry cusps: its transverse component must reverse at the phi
  // extremes, so zero phi reversals is the fold signature.
  for (const auto& p : locus) {
    if (p.branch > 0)
      CHECK(p.phi < M_PI / 2 - 0.1);
    else
      CHECK(p.phi > M_PI / 2 + 0.1);
  }
  int crossings_seen = 0;
  for (size_t i = 1; i + 2 < locus.size(); ++i) {
    const double a = locus[i].phi - M_PI / 2;
    const double b = locus[i + 1].phi - M_PI / 2;
    if (a * b >= 0.0) continue;
    ++crossings_seen;
    const double dph[3] = {locus[i].phi - locus[i - 1].phi,
                           locus[i + 1].phi - locus[i].phi,
                           locus[i + 2].phi - locus[i + 1].phi};
    CHECK((dph[1] < 0.0) == (dph[0] < 0.0));
    CHECK((dph[2] < 0.0) == (dph[0] < 0.0));
  }
  CHECK(crossings_seen == 1);
  CHECK(tangent_reversals(locus).phi == 0);
}

TEST_CASE("cut locus structure across the family") {
  // lambda = 0: single antipodal point.
  const auto c0 = cut_locus_sphere(0.0, M_PI / 3, {0.3, 0.5, 0.7});
  CHECK(c0.kind == CutLocusDescription::Kind::SinglePoint);
  REQUIRE(!c0.samples.empty());
  for (const auto& s : c0.samples) {
    CHECK(std::abs(s.theta - M_PI) < 1e-6);
    CHECK(std::abs(s.phi - (M_PI - M_PI / 3)) < 1e-6);
    CHECK(std::abs(s.t_cut - M_PI) < 1e-6);
  }

  // Interior lambda: arc of the antipodal parallel, symmetric pair timing.
  const auto c5 = cut_locus_sphere(0.5, M_PI / 3, {0.9});
  CHECK(c5.kind == CutLocusDescription::Kind::AntipodalParallel);
  CHECK(std::abs(c5.parallel_phi - 2 * M_PI / 3) < 1e-12);
  REQUIRE(c5.samples.size() == 1);
  CHECK(c5.samples[0].pair_time_mismatch < 1e-8);
  CHECK(std::abs(c5.samples[0].phi - 2 * M_PI / 3) < 1e-8);

  // Equatorial source at lambda = 1: the cut sits on the equator at the
  // return-map angle.
  const auto c1 = cut_locus_sphere(1.0, M_PI / 2, {1.0});
  CHECK(c1.kind == CutLocusDescription::Kind::EquatorMinusPoint);
  REQUIRE(c1.samples.size() == 1);
  CHECK(std::abs(c1.samples[0].theta - return_map(1.0, 1.0)) < 1e-8);
  CHECK(std::abs(c1.samples[0].phi - M_PI / 2) < 1e-10);

  // Cut before conjugate.
  Vec4 y0;
  const double w = grusin_weight(M_PI / 3, 0.5);
  y0 << M_PI / 3, 0.0, std::sqrt(1.0 - 0.81 * w), 0.9;
  const auto tc = grusin_conjugate_time(y0, 0.5, 20.0);
  REQUIRE(tc.has_value());
  CHECK(c5.samples[0].t_cut <= *tc + 1e-12);
}
