#include <catch_amalgamated.hpp>

#include <random>

#include "blochopt/hamiltonians.hpp"
#include "blochopt/model.hpp"

using namespace blochopt;

namespace {

// Central finite difference of a scalar function of one coordinate.
template <class F>
double fd(F&& f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace

TEST_CASE("drift coefficients") {
  const DissipationParams P{2.5, 0.0, 2.0};
  // Equator: A = Gamma, B = 0; pole limit: A = gamma_plus.
  CHECK(std::abs(drift_radial(P, M_PI / 2) - P.Gamma) < 1e-14);
  CHECK(std::abs(drift_meridian(P, M_PI / 2)) < 1e-15);
  CHECK(std::abs(drift_radial(P, 1e-9) - P.gamma_plus) < 1e-8);
  // A(pi/4) is the mean, B(pi/4) the half-gap.
  CHECK(std::abs(drift_radial(P, M_PI / 4) - 2.25) < 1e-14);
  CHECK(std::abs(drift_meridian(P, M_PI / 4) - (-0.25)) < 1e-14);
  // Derivatives agree with finite differences.
  for (double phi : {0.3, 0.9, 1.7, 2.6}) {
    CHECK(std::abs(drift_radial_dphi(P, phi) -
                   fd([&](double x) { return drift_radial(P, x); }, phi)) <
          1e-8);
    CHECK(std::abs(drift_meridian_dphi(P, phi) -
                   fd([&](double x) { return drift_meridian(P, x); }, phi)) <
          1e-8);
  }
}

TEST_CASE("reduced Hamiltonian values") {
  const DissipationParams P{2.5, 0.0, 2.0};
  // Equator: H = -Gamma p_r + |p_phi|.
  CHECK(std::abs(h_reduced(M_PI / 2, {0.4, 2.0, 7.0}, P) - 1.0) < 1e-14);
  // The seed of the reference intersection configuration sits on the level
  // sqrt(5) - 2.
  const ExtremalPoint z{0.0, M_PI / 4, 0.0, {1.0, -1.0, 2.0}, 1.0, 0.0};
  CHECK(std::abs(h_reduced(z, P) - (std::sqrt(5.0) - 2.0)) < 1e-15);
  // Positive homogeneity of degree one in the costate.
  CHECK(std::abs(h_reduced(M_PI / 3, {0.6, -1.4, 2.2}, P) * 3.0 -
                 h_reduced(M_PI / 3, {1.8, -4.2, 6.6}, P)) < 1e-14);
  // Full-chart Hamiltonian restricts to the reduced one on rho scaling.
  const double hr = h_reduced(1.1, {0.7, -0.3, 1.9}, P);
  const double hf = h_full_spherical({2.0, 1.1, 0.4}, 0.7 / 2.0, -0.3, 1.9, P);
  CHECK(std::abs(hf - hr) < 1e-13);
}

TEST_CASE("maximizing control") {
  // H1 = -p_theta cot(phi), H2 = p_phi; the control is the unit maximizer.
  const double phi = 3.0 * M_PI / 4;  // cot = -1
  const auto u = extremal_control({0.0, 3.0, 4.0}, phi);
  CHECK(std::abs(u.u1 - 0.8) < 1e-14);
  CHECK(std::abs(u.u2 - 0.6) < 1e-14);
  CHECK(std::abs(u.norm() - 1.0) < 1e-14);
  CHECK(std::abs(switching_distance({0.0, 3.0, 4.0}, phi) - 5.0) < 1e-14);
  CHECK(std::abs(switching_distance({9.9, 2.0, 0.0}, M_PI / 2) - 2.0) < 1e-15);
  CHECK_THROWS_AS(extremal_control({1.0, 0.0, 0.0}, 1.0), SwitchingSurface);
  CHECK_THROWS_AS(extremal_control({0.0, 0.0, 1.0}, M_PI / 2),
                  SwitchingSurface);
}

TEST_CASE("reduced extremal field at the equator") {
  const DissipationParams P{2.5, 0.0, 2.0};
  Vec6 z;
  z << 0.0, M_PI / 2, 0.0, 0.3, 1.7, 5.0;
  const Vec6 f = detail::reduced_rhs_clamped(z, P);
  // p_phi' = (gamma_plus - Gamma) p_phi on the equator.
  CHECK(std::abs(f[4] - (P.gamma_plus - P.Gamma) * 1.7) < 1e-13);
  // r' = -A, p_r and p_theta are first integrals.
  CHECK(std::abs(f[0] + P.Gamma) < 1e-14);
  CHECK(f[3] == 0.0);
  CHECK(f[5] == 0.0);
}

TEST_CASE("reduced field is the canonical flow of H") {
  const DissipationParams P{2.5, 0.0, 2.0};
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> Uphi(0.4, M_PI - 0.4);
  std::uniform_real_distribution<double> Up(-3.0, 3.0);
  std::uniform_real_distribution<double> Upt(0.3, 3.0);
  int checked = 0;
  for (int i = 0; i < 200; ++i) {
    Vec6 z;
    z << Up(rng), Uphi(rng), Up(rng), Up(rng), Up(rng), Upt(rng);
    if (switching_distance({z[3], z[4], z[5]}, z[1]) < 0.05) continue;
    ++checked;
    const Vec6 f = detail::reduced_rhs_clamped(z, P);
    const auto H = [&](const Vec6& y) {
      return h_reduced(y[1], {y[3], y[4], y[5]}, P);
    };
    const double h = 1e-6;
    for (int k = 0; k < 3; ++k) {
      Vec6 zp = z, zm = z;
      zp[3 + k] += h;
      zm[3 + k] -= h;
      CHECK(std::abs(f[k] - (H(zp) - H(zm)) / (2.0 * h)) < 1e-6);
      Vec6 qp = z, qm = z;
      qp[k] += h;
      qm[k] -= h;
      CHECK(std::abs(f[3 + k] + (H(qp) - H(qm)) / (2.0 * h)) < 1e-6);
    }
  }
  CHECK(checked > 150);
}

TEST_CASE("analytic Jacobian of the reduced field") {
  const DissipationParams tab[] = {{2.5, 0.0, 2.0}, {4.5, 0.0, 2.0},
                                   {2.0, 0.0, 2.0}};
  std::mt19937_64 rng(321);
  std::uniform_real_distribution<double> Uphi(0.4, M_PI - 0.4);
  std::uniform_real_distribution<double> Up(-2.5, 2.5);
  std::uniform_real_distribution<double> Upt(0.3, 2.5);
  for (const auto& P : tab) {
    for (int i = 0; i < 40; ++i) {
      Vec6 z;
      z << Up(rng), Uphi(rng), Up(rng), Up(rng), Up(rng), Upt(rng);
      if (switching_distance({z[3], z[4], z[5]}, z[1]) < 0.1) continue;
      const Mat6 J = detail::reduced_rhs_jacobian(z, P);
      const double h = 1e-6;
      for (int c = 0; c < 6; ++c) {
        Vec6 zp = z, zm = z;
        zp[c] += h;
        zm[c] -= h;
        const Vec6 col =
            (detail::reduced_rhs_clamped(zp, P) - detail::reduced_rhs_clamped(zm, P)) /
            (2.0 * h);
        for (int r = 0; r < 6; ++r)
          CHECK(std::abs(J(r, c) - col[r]) <
                1e-6 * std::max(1.0, std::abs(col[r])));
      }
    }
  }
}

TEST_CASE("metric family Hamiltonian") {
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> Uphi(0.3, M_PI - 0.3);
  std::uniform_real_distribution<double> Up(-2.0, 2.0);
  for (int i = 0; i < 50; ++i) {
    const double phi = Uphi(rng), pp = Up(rng), pt = Up(rng);
    const double lam = 0.01 * (i % 101);
    // H_lambda = H_1 + (1 - lambda) p_theta^2 / 2.
    CHECK(std::abs(grusin_family_h(phi, pp, pt, lam) -
                   (grusin_family_h(phi, pp, pt, 1.0) +
                    0.5 * pt * pt * (1.0 - lam))) < 1e-14);
  }
  CHECK_THROWS_AS(grusin_family_h(1.0, 0.0, 1.0, 1.5), DomainError);
  CHECK_THROWS_AS(grusin_family_h(1.0, 0.0, 1.0, -0.1), DomainError);

  // Canonical flow of the family Hamiltonian, against finite differences.
  for (int i = 0; i < 30; ++i) {
    Vec4 y;
    y << Uphi(rng), Up(rng), Up(rng), Up(rng);
    const double lam = 0.8;
    const Vec4 f = detail::grusin_rhs_clamped(y, lam);
    const auto H = [&](const Vec4& w) {
      return grusin_family_h(w[0], w[2], w[3], lam);
    };
    const double h = 1e-6;
    Vec4 yp, ym;
    yp = y; ym = y; yp[2] += h; ym[2] -= h;
    CHECK(std::abs(f[0] - (H(yp) - H(ym)) / (2.0 * h)) < 1e-6);
    yp = y; ym = y; yp[3] += h; ym[3] -= h;
    CHECK(std::abs(f[1] - (H(yp) - H(ym)) / (2.0 * h)) < 1e-6);
    yp = y; ym = y; yp[0] += h; ym[0] -= h;
    CHECK(std::abs(f[2] + (H(yp) - H(ym)) / (2.0 * h)) < 1e-6);
    CHECK(f[3] == 0.0);
  }
}

TEST_CASE("meridian energy form") {
  const DissipationParams P{4.5, 0.0, 2.0};
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> Uphi(0.3, M_PI - 0.3);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  for (int i = 0; i < 60; ++i) {
    const double phi = Uphi(rng), p_r = U(rng), p_t = U(rng);
    const double h = U(rng) + 3.0;
    const double X = std::sin(phi) * std::sin(phi);
    // P(X) = 8 X (1 - X) (h - V(phi)) and P(1) = 0.
    const double lhs = energy_quartic(X, h, p_r, p_t, P);
    const double rhs = 8.0 * X * (1.0 - X) * (h - energy_potential(phi, p_r, p_t, P));
    CHECK(std::abs(lhs - rhs) < 1e-11 * std::max(1.0, std::abs(rhs)));
    CHECK(std::abs(energy_quartic(1.0, h, p_r, p_t, P)) < 1e-13);
  }
}

TEST_CASE("full-chart Hamiltonian against the Cartesian support function") {
  // H(q, p) = <p, F0> + |(<p, F1>, <p, F2>)| evaluated in Cartesian
  // coordinates must agree with the spherical-chart expression.
  const DissipationParams P{2.5, 0.0, 2.0};
  const auto d = drift_matrices(P);
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> Uphi(0.4, M_PI - 0.4);
  std::uniform_real_distribution<double> U(-1.5, 1.5);
  for (int i = 0; i < 25; ++i) {
    const SphericalState s{0.8, Uphi(rng), U(rng)};
    const double p_rho = U(rng), p_phi = U(rng), p_theta = U(rng);
    const auto q = to_cartesian(s);

    // Pull the covector back through the chart Jacobian d(sph)/d(cart).
    Eigen::Matrix3d J;
    const double h = 1e-7;
    for (int c = 0; c < 3; ++c) {
      CartesianState qp = q, qm = q;
      (&qp.x)[c] += h;
      (&qm.x)[c] -= h;
      const auto sp = to_spherical(qp), sm = to_spherical(qm);
      J(0, c) = (sp.rho - sm.rho) / (2.0 * h);
      J(1, c) = (sp.phi - sm.phi) / (2.0 * h);
      J(2, c) = (sp.theta - sm.theta) / (2.0 * h);
    }
    Eigen::Vector3d p_sph{p_rho, p_phi, p_theta};
    const Eigen::Vector3d p_cart = J.transpose() * p_sph;

    const Eigen::Vector3d qv = q.vec();
    const double h0 = p_cart.dot(d.G0.apply(qv));
    const double h1 = p_cart.dot(d.G1.apply(qv));
    const double h2 = p_cart.dot(d.G2.apply(qv));
    const double H_cart = h0 + std::hypot(h1, h2);
    const double H_sph = h_full_spherical(s, p_rho, p_phi, p_theta, P);
    CHECK(std::abs(H_cart - H_sph) < 1e-5);
  }
}
