#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "blochopt/errors.hpp"

namespace blochopt {

/// Polar chart validity band: phi must stay in [phi_min, pi - phi_min].
inline constexpr double phi_min = 1e-6;

/// Switching-surface guard: the order-zero field is rejected when Q <= q_min.
inline constexpr double q_min = 1e-9;

/// Dissipation rates (Gamma, gamma_minus, gamma_plus), all in units of the
/// control bound. Admissible iff Gamma >= gamma_plus/2 > 0 and
/// gamma_plus >= |gamma_minus|.
struct DissipationParams {
  double Gamma = 0.0;
  double gamma_minus = 0.0;
  double gamma_plus = 0.0;

  void validate() const {
    if (!(gamma_plus > 0.0) || !(Gamma >= 0.5 * gamma_plus))
      throw InvalidParams("require Gamma >= gamma_plus/2 > 0");
    if (!(gamma_plus >= std::abs(gamma_minus)))
      throw InvalidParams("require gamma_plus >= |gamma_minus|");
  }

  /// The reduced (r, phi, theta) machinery exists only when gamma_minus = 0.
  bool integrable() const { return gamma_minus == 0.0; }

  void require_integrable() const {
    if (!integrable()) throw NotIntegrable("operation requires gamma_minus = 0");
  }
};

/// Bloch coherence vector; physical states satisfy |q| <= 1.
struct CartesianState {
  double x = 0.0, y = 0.0, z = 0.0;

  Eigen::Vector3d vec() const { return {x, y, z}; }
};

/// Spherical chart: rho > 0, colatitude phi in (0, pi), unwrapped longitude.
struct SphericalState {
  double rho = 1.0;
  double phi = 0.0;
  double theta = 0.0;

  /// Latitude offset psi = pi/2 - phi used by the metric-family analysis.
  double psi() const { return 0.5 * M_PI - phi; }
};

/// Costate in the reduced chart (r = ln rho, phi, theta). p_r and p_theta are
/// first integrals of the reduced extremal flow.
struct ReducedCostate {
  double p_r = 0.0;
  double p_phi = 0.0;
  double p_theta = 0.0;
};

/// A point of the reduced extremal phase space, tagged with its level epsilon
/// (0 = abnormal) and time.
struct ExtremalPoint {
  double r = 0.0;      // ln rho
  double phi = 0.0;    // colatitude, inside the chart band
  double theta = 0.0;  // unwrapped longitude
  ReducedCostate costate{};
  double epsilon = 1.0;
  double t = 0.0;

  double rho() const { return std::exp(r); }
};

inline void require_chart_phi(double phi) {
  if (!(phi >= phi_min && phi <= M_PI - phi_min))
    throw PolarSingularity("phi outside the chart band (0, pi)");
}

/// q -> (rho, phi, theta). The chart excludes the polar axis x = y = 0.
inline SphericalState to_spherical(const CartesianState& q) {
  const double rxy2 = q.x * q.x + q.y * q.y;
  const double rho = std::sqrt(rxy2 + q.z * q.z);
  if (rho == 0.0 || rxy2 == 0.0)
    throw PolarSingularity("polar axis x = y = 0 is outside the chart");
  const double phi = std::acos(q.z / rho);
  require_chart_phi(phi);
  return {rho, phi, std::atan2(q.y, q.x)};
}

inline CartesianState to_cartesian(const SphericalState& s) {
  const double sp = std::sin(s.phi);
  return {s.rho * sp * std::cos(s.theta), s.rho * sp * std::sin(s.theta),
          s.rho * std::cos(s.phi)};
}

/// rho * d(rho)/dt = -Gamma(x^2+y^2) - gamma_plus z^2 + gamma_minus z.
/// Control-independent; <= 0 everywhere on the unit sphere for admissible
/// parameters, which is what traps the dynamics inside the Bloch ball.
inline double bloch_radial_derivative(const CartesianState& q,
                                      const DissipationParams& P) {
  return -P.Gamma * (q.x * q.x + q.y * q.y) - P.gamma_plus * q.z * q.z +
         P.gamma_minus * q.z;
}

/// Affine vector field q |-> A q + a on the Bloch ball.
struct AffineField {
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::Matrix3d matrix = Eigen::Matrix3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& q) const {
    return matrix * q + translation;
  }
};

/// Bracket of affine fields: [(a, A), (b, B)] = (A b - B a, AB - BA).
inline AffineField lie_bracket(const AffineField& f, const AffineField& g) {
  AffineField out;
  out.translation = f.matrix * g.translation - g.matrix * f.translation;
  out.matrix = f.matrix * g.matrix - g.matrix * f.matrix;
  return out;
}

struct DriftMatrices {
  AffineField G0;  // dissipative drift, translation part (0, 0, gamma_minus)
  AffineField G1;  // control generator, rotation about the x-axis
  AffineField G2;  // control generator, rotation about the y-axis
};

/// Affine generators of the controlled Lindblad field:
/// F0(q) = G0 q + v0, F1(q) = G1 q, F2(q) = G2 q.
inline DriftMatrices drift_matrices(const DissipationParams& P) {
  DriftMatrices d;
  d.G0.matrix.diagonal() << -P.Gamma, -P.Gamma, -P.gamma_plus;
  d.G0.translation << 0.0, 0.0, P.gamma_minus;
  d.G1.matrix(1, 2) = -1.0;
  d.G1.matrix(2, 1) = 1.0;
  d.G2.matrix(0, 2) = 1.0;
  d.G2.matrix(2, 0) = -1.0;
  return d;
}

/// Full controlled Cartesian field F0 + u1 F1 + u2 F2.
inline Eigen::Vector3d cartesian_field(const CartesianState& q, double u1,
                                       double u2, const DissipationParams& P) {
  return {-P.Gamma * q.x + u2 * q.z, -P.Gamma * q.y - u1 * q.z,
          P.gamma_minus - P.gamma_plus * q.z + u1 * q.y - u2 * q.x};
}

}  // namespace blochopt
