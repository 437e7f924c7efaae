#include <catch_amalgamated.hpp>

#include <random>

#include "blochopt/model.hpp"

using namespace blochopt;

namespace {
Eigen::Matrix3d rot_z(double a) {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  R(0, 0) = std::cos(a);
  R(0, 1) = -std::sin(a);
  R(1, 0) = std::sin(a);
  R(1, 1) = std::cos(a);
  return R;
}
}  // namespace

TEST_CASE("parameter validation") {
  CHECK_NOTHROW((DissipationParams{2.5, 0.0, 2.0}.validate()));
  CHECK_NOTHROW((DissipationParams{1.0, -0.5, 2.0}.validate()));
  CHECK_THROWS_AS((DissipationParams{0.5, 0.0, 2.0}.validate()),
                  InvalidParams);
  CHECK_THROWS_AS((DissipationParams{2.0, 0.0, -1.0}.validate()),
                  InvalidParams);
  CHECK_THROWS_AS((DissipationParams{2.0, 3.0, 2.0}.validate()),
                  InvalidParams);
  CHECK((DissipationParams{2.5, 0.0, 2.0}.integrable()));
  CHECK_FALSE((DissipationParams{2.5, 0.1, 2.0}.integrable()));
  CHECK_THROWS_AS((DissipationParams{2.5, 0.1, 2.0}.require_integrable()),
                  NotIntegrable);
}

TEST_CASE("spherical chart") {
  const auto s = to_spherical({0.5, 0.5, 0.5});
  CHECK(std::abs(s.rho - 0.8660254037844386) < 1e-15);
  CHECK(std::abs(s.phi - 0.9553166181245093) < 1e-14);
  CHECK(std::abs(s.theta - M_PI / 4) < 1e-15);

  CHECK_THROWS_AS(to_spherical({0.0, 0.0, 0.7}), PolarSingularity);
  CHECK_THROWS_AS(to_spherical({0.0, 0.0, 0.0}), PolarSingularity);
  CHECK_THROWS_AS(require_chart_phi(0.0), PolarSingularity);
  CHECK_THROWS_AS(require_chart_phi(M_PI), PolarSingularity);
  CHECK_NOTHROW(require_chart_phi(M_PI / 2));

  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    CartesianState q{U(rng), U(rng), U(rng)};
    if (std::hypot(q.x, q.y) < 1e-3) continue;
    const auto back = to_cartesian(to_spherical(q));
    CHECK(std::abs(back.x - q.x) < 1e-14);
    CHECK(std::abs(back.y - q.y) < 1e-14);
    CHECK(std::abs(back.z - q.z) < 1e-14);
  }
}

TEST_CASE("radial derivative of the Bloch ball") {
  // Fixed point of the purity loss at the north pole when gamma_plus = gamma_minus.
  CHECK(bloch_radial_derivative({0.0, 0.0, 1.0}, {1.0, 0.5, 0.5}) == 0.0);
  CHECK(bloch_radial_derivative({1.0, 0.0, 0.0}, {2.0, 0.0, 1.0}) == -2.0);
  CHECK(std::abs(bloch_radial_derivative({0.0, 0.6, 0.8}, {2.5, 0.0, 2.0}) -
                 (-2.18)) < 1e-15);

  // Contractivity: rho rho_dot <= 0 everywhere once gamma_minus = 0.
  const DissipationParams triples[] = {{2.5, 0.0, 2.0}, {4.5, 0.0, 2.0},
                                       {2.0, 0.0, 2.0}, {1.0, 0.0, 2.0},
                                       {3.0, 0.0, 0.5}, {10.0, 0.0, 1.0},
                                       {1.0, 0.0, 0.1}, {0.6, 0.0, 1.2},
                                       {5.0, 0.0, 5.0}, {7.5, 0.0, 3.0}};
  for (const auto& P : triples) {
    P.validate();
    for (int i = 0; i < 50; ++i)
      for (int j = 0; j < 50; ++j) {
        const double phi = M_PI * (i + 0.5) / 50.0;
        const double th = 2.0 * M_PI * j / 50.0;
        const auto q = to_cartesian({1.0, phi, th});
        CHECK(bloch_radial_derivative(q, P) <= 0.0);
      }
  }
}

TEST_CASE("drift and control generators") {
  const DissipationParams P{2.5, 0.0, 2.0};
  const auto d = drift_matrices(P);

  // Generator commutators close on the rotation algebra.
  Eigen::Matrix3d G3 = Eigen::Matrix3d::Zero();
  G3(0, 1) = -1.0;
  G3(1, 0) = 1.0;
  const auto b12 = lie_bracket(d.G1, d.G2);
  CHECK((b12.matrix - G3).cwiseAbs().maxCoeff() == 0.0);
  CHECK(b12.translation.cwiseAbs().maxCoeff() == 0.0);

  AffineField g3;
  g3.matrix = G3;
  const auto b03 = lie_bracket(d.G0, g3);
  CHECK(b03.matrix.cwiseAbs().maxCoeff() == 0.0);
  CHECK(b03.translation.cwiseAbs().maxCoeff() == 0.0);

  // [G0, G1] is symmetric in the (y, z) plane with weight Gamma - gamma_plus.
  const auto b01 = lie_bracket(d.G0, d.G1);
  Eigen::Matrix3d S = Eigen::Matrix3d::Zero();
  S(1, 2) = P.Gamma - P.gamma_plus;
  S(2, 1) = P.Gamma - P.gamma_plus;
  CHECK((b01.matrix - S).cwiseAbs().maxCoeff() == 0.0);
  CHECK(b01.translation.cwiseAbs().maxCoeff() == 0.0);

  const auto b02 = lie_bracket(d.G0, d.G2);
  Eigen::Matrix3d S2 = Eigen::Matrix3d::Zero();
  S2(0, 2) = -(P.Gamma - P.gamma_plus);
  S2(2, 0) = -(P.Gamma - P.gamma_plus);
  CHECK((b02.matrix - S2).cwiseAbs().maxCoeff() == 0.0);

  // With gamma_minus != 0 the drift acquires the affine shift.
  const DissipationParams Pm{2.5, 0.3, 2.0};
  const auto dm = drift_matrices(Pm);
  const auto bm = lie_bracket(dm.G0, dm.G1);
  CHECK(std::abs(bm.translation[1] - 0.3) < 1e-16);
  CHECK(bm.translation[0] == 0.0);
  CHECK(bm.translation[2] == 0.0);
}

TEST_CASE("cartesian vector field") {
  const DissipationParams P{2.5, 0.4, 2.0};
  // North pole, u = (1, 0): pure x-rotation plus relaxation.
  const auto f = cartesian_field({0.0, 0.0, 1.0}, 1.0, 0.0, P);
  CHECK(f[0] == 0.0);
  CHECK(f[1] == -1.0);
  CHECK(std::abs(f[2] - (P.gamma_minus - P.gamma_plus)) < 1e-16);

  // Field assembles from the generators.
  const auto d = drift_matrices(P);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const CartesianState q{U(rng), U(rng), U(rng)};
    const double u1 = U(rng), u2 = U(rng);
    const Eigen::Vector3d qv = q.vec();
    const Eigen::Vector3d expect =
        d.G0.apply(qv) + u1 * d.G1.apply(qv) + u2 * d.G2.apply(qv);
    const auto got = cartesian_field(q, u1, u2, P);
    CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("rotation equivariance about the polar axis") {
  const DissipationParams P{2.5, 0.4, 2.0};
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector3d q{U(rng), U(rng), U(rng)};
    const double u1 = U(rng), u2 = U(rng), a = 3.0 * U(rng);
    const Eigen::Matrix3d R = rot_z(a);
    // The control pair rotates by the same angle as the state.
    const double v1 = std::cos(a) * u1 - std::sin(a) * u2;
    const double v2 = std::sin(a) * u1 + std::cos(a) * u2;
    const Eigen::Vector3d lhs =
        R * cartesian_field({q[0], q[1], q[2]}, u1, u2, P);
    const Eigen::Vector3d Rq = R * q;
    const Eigen::Vector3d rhs =
        cartesian_field({Rq[0], Rq[1], Rq[2]}, v1, v2, P);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-13);
  }
}
