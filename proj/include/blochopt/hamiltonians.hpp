#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "blochopt/model.hpp"

namespace blochopt {

using Vec4 = Eigen::Matrix<double, 4, 1>;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat4 = Eigen::Matrix<double, 4, 4>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

enum class HamiltonianKind {
  FullSpherical,      // any gamma_minus, chart (rho, phi, theta)
  ReducedIntegrable,  // gamma_minus = 0, chart (r = ln rho, phi, theta)
  GrusinFamily,       // metric family g_lambda on the two-sphere
  EnergyReduced,      // quadratic-cost potential reduction
};

struct ControlValue {
  double u1 = 0.0, u2 = 0.0;

  double norm() const { return std::hypot(u1, u2); }
};

/// Coefficient of -p_r in the reduced Hamiltonian:
/// A(phi) = gamma_plus cos^2 phi + Gamma sin^2 phi.
inline double drift_radial(const DissipationParams& P, double phi) {
  const double s = std::sin(phi), c = std::cos(phi);
  return P.gamma_plus * c * c + P.Gamma * s * s;
}

inline double drift_radial_dphi(const DissipationParams& P, double phi) {
  return (P.Gamma - P.gamma_plus) * std::sin(2.0 * phi);
}

/// Coefficient of p_phi: B(phi) = (gamma_plus - Gamma) sin(2 phi) / 2.
inline double drift_meridian(const DissipationParams& P, double phi) {
  return 0.5 * (P.gamma_plus - P.Gamma) * std::sin(2.0 * phi);
}

inline double drift_meridian_dphi(const DissipationParams& P, double phi) {
  return (P.gamma_plus - P.Gamma) * std::cos(2.0 * phi);
}

/// Distance to the switching surface: Q = sqrt(p_phi^2 + p_theta^2 cot^2 phi).
inline double switching_distance(const ReducedCostate& p, double phi) {
  const double pc = p.p_theta / std::tan(phi);
  return std::hypot(p.p_phi, pc);
}

/// Reduced Hamiltonian H = -A(phi) p_r + B(phi) p_phi + Q. Positively
/// homogeneous of degree 1 in the costate; r and theta are cyclic.
inline double h_reduced(double phi, const ReducedCostate& p,
                        const DissipationParams& P) {
  P.require_integrable();
  require_chart_phi(phi);
  return -drift_radial(P, phi) * p.p_r + drift_meridian(P, phi) * p.p_phi +
         switching_distance(p, phi);
}

inline double h_reduced(const ExtremalPoint& z, const DissipationParams& P) {
  return h_reduced(z.phi, z.costate, P);
}

/// Full spherical-chart Hamiltonian (any gamma_minus):
/// H = [gamma_minus cos phi - rho A(phi)] p_rho
///   + [-gamma_minus sin phi / rho + B(phi)] p_phi + Q.
inline double h_full_spherical(const SphericalState& s, double p_rho,
                               double p_phi, double p_theta,
                               const DissipationParams& P) {
  require_chart_phi(s.phi);
  const double q = switching_distance({0.0, p_phi, p_theta}, s.phi);
  return (P.gamma_minus * std::cos(s.phi) - s.rho * drift_radial(P, s.phi)) *
             p_rho +
         (-P.gamma_minus * std::sin(s.phi) / s.rho +
          drift_meridian(P, s.phi)) *
             p_phi +
         q;
}

/// Same Hamiltonian through the reduced chart r = ln rho (p_rho = p_r / rho).
inline double h_full_spherical(const ExtremalPoint& z,
                               const DissipationParams& P) {
  const double rho = z.rho();
  return h_full_spherical({rho, z.phi, z.theta}, z.costate.p_r / rho,
                          z.costate.p_phi, z.costate.p_theta, P);
}

/// Order-zero extremal control u_i = H_i / Q with lifts H1 = -p_theta cot phi,
/// H2 = p_phi. Unit norm by construction.
inline ControlValue extremal_control(const ReducedCostate& p, double phi) {
  require_chart_phi(phi);
  const double h1 = -p.p_theta / std::tan(phi);
  const double h2 = p.p_phi;
  const double q = std::hypot(h1, h2);
  if (q <= q_min) throw SwitchingSurface("Q <= q_min: control undefined");
  return {h1 / q, h2 / q};
}

namespace detail {

/// Reduced extremal field with stage-safe clamping: phi is pulled into the
/// open chart and Q floored at q_min/2, so Runge-Kutta stage evaluations just
/// outside the admissible set stay finite. The PolarBand / SwitchingGuard
/// terminal events fire before the clamps can distort an accepted solution.
inline Vec6 reduced_rhs_clamped(const Vec6& y, const DissipationParams& P) {
  double phi = std::clamp(y[1], 0.5 * phi_min, M_PI - 0.5 * phi_min);
  const double p_r = y[3], p_phi = y[4], p_theta = y[5];
  const double s = std::sin(phi), c = std::cos(phi);
  const double cot = c / s;
  const double cc = cot * cot;
  const double q =
      std::max(std::hypot(p_phi, p_theta * cot), 0.5 * q_min);
  const double a1 = drift_radial_dphi(P, phi);
  const double b = drift_meridian(P, phi);
  const double b1 = drift_meridian_dphi(P, phi);
  Vec6 f;
  f[0] = -drift_radial(P, phi);
  f[1] = b + p_phi / q;
  f[2] = p_theta * cc / q;
  f[3] = 0.0;
  // -dH/dphi; the Q term contributes +p_theta^2 cos phi / (Q sin^3 phi).
  f[4] = a1 * p_r - b1 * p_phi + p_theta * p_theta * c / (q * s * s * s);
  f[5] = 0.0;
  return f;
}

/// Analytic Jacobian of reduced_rhs_clamped away from the clamps.
inline Mat6 reduced_rhs_jacobian(const Vec6& y, const DissipationParams& P) {
  double phi = std::clamp(y[1], 0.5 * phi_min, M_PI - 0.5 * phi_min);
  const double p_r = y[3], p_phi = y[4], p_theta = y[5];
  const double s = std::sin(phi), c = std::cos(phi);
  const double cot = c / s;
  const double csc2 = 1.0 / (s * s);
  const double cc = cot * cot;
  const double cp = -2.0 * cot * csc2;                 // d(cot^2)/dphi
  const double cpp = 2.0 * csc2 * csc2 + 4.0 * cc * csc2;  // d2(cot^2)/dphi2
  const double nu = p_theta * p_theta;
  const double q = std::max(std::hypot(p_phi, p_theta * cot), 0.5 * q_min);
  const double q3 = q * q * q;
  const double a1 = drift_radial_dphi(P, phi);
  const double a2 = 2.0 * (P.Gamma - P.gamma_plus) * std::cos(2.0 * phi);
  const double b1 = drift_meridian_dphi(P, phi);
  const double b2 = -2.0 * (P.gamma_plus - P.Gamma) * std::sin(2.0 * phi);
  Mat6 J = Mat6::Zero();
  // row 0: d(r')
  J(0, 1) = -a1;
  // row 1: d(phi') with phi' = B + p_phi/Q
  J(1, 1) = b1 - p_phi * nu * cp / (2.0 * q3);
  J(1, 4) = nu * cc / q3;
  J(1, 5) = -p_phi * p_theta * cc / q3;
  // row 2: d(theta') with theta' = p_theta cot^2 / Q
  J(2, 1) = p_theta * cp / q - p_theta * nu * cc * cp / (2.0 * q3);
  J(2, 4) = -p_theta * cc * p_phi / q3;
  J(2, 5) = cc * p_phi * p_phi / q3;
  // row 4: d(p_phi') with p_phi' = A' p_r - B' p_phi - nu c'/(2Q)
  J(4, 1) = a2 * p_r - b2 * p_phi - nu * cpp / (2.0 * q) +
            nu * nu * cp * cp / (4.0 * q3);
  J(4, 3) = a1;
  J(4, 4) = -b1 + nu * cp * p_phi / (2.0 * q3);
  J(4, 5) = -p_theta * cp / q + p_theta * nu * cc * cp / (2.0 * q3);
  return J;
}

}  // namespace detail

/// Time derivative of (r, phi, theta, p_r, p_phi, p_theta) under the reduced
/// extremal flow. p_r and p_theta are exact first integrals (zero rows).
inline Vec6 extremal_rhs_reduced(const ExtremalPoint& z,
                                 const DissipationParams& P) {
  P.require_integrable();
  require_chart_phi(z.phi);
  if (switching_distance(z.costate, z.phi) <= q_min)
    throw SwitchingSurface("Q <= q_min: order-zero field undefined");
  Vec6 y;
  y << z.r, z.phi, z.theta, z.costate.p_r, z.costate.p_phi, z.costate.p_theta;
  return detail::reduced_rhs_clamped(y, P);
}

/// Analytic Jacobian of the reduced extremal field at z (for Jacobi fields).
inline Mat6 extremal_rhs_jacobian(const ExtremalPoint& z,
                                  const DissipationParams& P) {
  P.require_integrable();
  require_chart_phi(z.phi);
  Vec6 y;
  y << z.r, z.phi, z.theta, z.costate.p_r, z.costate.p_phi, z.costate.p_theta;
  return detail::reduced_rhs_jacobian(y, P);
}

/// Inverse metric weight of the family g_lambda:
/// W(phi) = (1 - lambda sin^2 phi)/sin^2 phi = cot^2 phi + 1 - lambda.
inline double grusin_weight(double phi, double lambda) {
  const double cot = std::cos(phi) / std::sin(phi);
  return cot * cot + 1.0 - lambda;
}

/// Geodesic Hamiltonian of g_lambda: H = (p_phi^2 + p_theta^2 W(phi)) / 2.
/// Decomposes as H_lambda = H_1 + p_theta^2 (1 - lambda)/2 with H_1 the
/// lambda = 1 Hamiltonian.
inline double grusin_family_h(double phi, double p_phi, double p_theta,
                              double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw DomainError("lambda outside [0, 1]");
  require_chart_phi(phi);
  return 0.5 * (p_phi * p_phi + p_theta * p_theta * grusin_weight(phi, lambda));
}

namespace detail {

/// Geodesic field of g_lambda on (phi, theta, p_phi, p_theta), stage-safe.
inline Vec4 grusin_rhs_clamped(const Vec4& y, double lambda) {
  double phi = std::clamp(y[0], 0.5 * phi_min, M_PI - 0.5 * phi_min);
  const double p_phi = y[2], p_theta = y[3];
  const double s = std::sin(phi), c = std::cos(phi);
  const double cot = c / s;
  const double wp = -2.0 * cot / (s * s);  // W'(phi)
  Vec4 f;
  f[0] = p_phi;
  f[1] = p_theta * (cot * cot + 1.0 - lambda);
  f[2] = -0.5 * p_theta * p_theta * wp;
  f[3] = 0.0;
  return f;
}

inline Mat4 grusin_rhs_jacobian(const Vec4& y, double lambda) {
  double phi = std::clamp(y[0], 0.5 * phi_min, M_PI - 0.5 * phi_min);
  const double p_theta = y[3];
  const double s = std::sin(phi), c = std::cos(phi);
  const double cot = c / s;
  const double csc2 = 1.0 / (s * s);
  const double wp = -2.0 * cot * csc2;
  const double wpp = 2.0 * csc2 * csc2 + 4.0 * cot * cot * csc2;
  Mat4 J = Mat4::Zero();
  J(0, 2) = 1.0;
  J(1, 0) = p_theta * wp;
  J(1, 3) = cot * cot + 1.0 - lambda;
  J(2, 0) = -0.5 * p_theta * p_theta * wpp;
  J(2, 3) = -p_theta * wp;
  return J;
}

}  // namespace detail

/// Mechanical potential of the quadratic-cost reduction:
/// V(phi) = -p_r A(phi) - B(phi)^2 / 2 + p_theta^2 cot^2(phi) / 2,
/// so that phi'(t) obeys phi'^2/2 + V(phi) = h.
inline double energy_potential(double phi, double p_r, double p_theta,
                               const DissipationParams& P) {
  P.require_integrable();
  require_chart_phi(phi);
  const double b = drift_meridian(P, phi);
  const double cot = std::cos(phi) / std::sin(phi);
  return -p_r * drift_radial(P, phi) - 0.5 * b * b +
         0.5 * p_theta * p_theta * cot * cot;
}

/// Quartic P(X) = (dX/dt)^2 on the energy level h, X = sin^2 phi. Evaluated
/// in the factored polynomial form (finite at X = 0, where V itself poles):
/// P(X) = 4(1-X)[-d^2 X^3 + d(2 p_r + d) X^2
///               + (2h + 2 p_r gamma_plus + p_theta^2) X - p_theta^2],
/// d = Gamma - gamma_plus. P(1) = 0 identically.
inline double energy_quartic(double X, double h, double p_r, double p_theta,
                             const DissipationParams& P) {
  P.require_integrable();
  const double d = P.Gamma - P.gamma_plus;
  const double a = d * d;
  const double bracket = -a * X * X * X + d * (2.0 * p_r + d) * X * X +
                         (2.0 * h + 2.0 * p_r * P.gamma_plus +
                          p_theta * p_theta) *
                             X -
                         p_theta * p_theta;
  return 4.0 * (1.0 - X) * bracket;
}

}  // namespace blochopt
