#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "blochopt/integrator.hpp"

namespace blochopt {

/// Metric coefficient of g_lambda = dphi^2 + G_lambda(phi) dtheta^2:
/// G_lambda = sin^2 phi / (1 - lambda sin^2 phi).
inline double metric_coefficient(double lambda, double phi) {
  const double X = std::sin(phi) * std::sin(phi);
  const double den = 1.0 - lambda * X;
  if (den <= 1e-14) throw CurvatureBlowup("metric pole at lambda=1, phi=pi/2");
  return X / den;
}

/// Gauss curvature of g_lambda:
/// K = ((1 - lambda) - 2 lambda cos^2 phi) / (1 - lambda sin^2 phi)^2.
inline double curvature(double lambda, double phi) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw DomainError("lambda outside [0, 1]");
  const double c2 = std::cos(phi) * std::cos(phi);
  const double den = 1.0 - lambda * (1.0 - c2);
  if (den <= 1e-14)
    throw CurvatureBlowup("curvature pole at lambda=1, phi=pi/2");
  return ((1.0 - lambda) - 2.0 * lambda * c2) / (den * den);
}

/// dK/dphi = 2 lambda sin(2 phi) (2 - 3 lambda + lambda sin^2 phi)
///           / (1 - lambda sin^2 phi)^3.
/// Interior zero on (0, pi/2) iff sin^2 phi = (3 lambda - 2)/lambda lands in
/// (0, 1), i.e. iff lambda in (2/3, 1).
inline double curvature_derivative(double lambda, double phi) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw DomainError("lambda outside [0, 1]");
  const double X = std::sin(phi) * std::sin(phi);
  const double den = 1.0 - lambda * X;
  if (den <= 1e-14)
    throw CurvatureBlowup("curvature pole at lambda=1, phi=pi/2");
  return 2.0 * lambda * std::sin(2.0 * phi) * (2.0 - 3.0 * lambda +
                                               lambda * X) /
         (den * den * den);
}

/// Surface-of-revolution curvature K = -(sqrt G)'' / sqrt G by central
/// finite differences of an arbitrary metric coefficient.
template <class GFun>
double curvature_numeric(GFun&& G, double phi, double h = 1e-4) {
  const double gm = std::sqrt(G(phi - h));
  const double g0 = std::sqrt(G(phi));
  const double gp = std::sqrt(G(phi + h));
  return -(gp - 2.0 * g0 + gm) / (h * h) / g0;
}

struct GeodesicPoint {
  double phi = 0.0;
  double theta = 0.0;
};

/// Closed-form unit-speed geodesic of the Grusin sphere (lambda = 1):
/// cos phi(t) = -(1/m) sin(m t + K), m = sqrt(1 + p_theta^2), with the phase
/// K fixed by the initial condition, and theta(t) by the branch-continued
/// arctan antiderivative. Requires the unit-speed level
/// p_phi0^2 + p_theta^2 cot^2 phi0 = 1; theta is measured from theta(0) = 0.
inline GeodesicPoint grusin_geodesic_closed_form(double phi0, double p_phi0,
                                                 double p_theta, double t) {
  require_chart_phi(phi0);
  const double m = std::sqrt(1.0 + p_theta * p_theta);
  const double c0 = std::cos(phi0), s0 = std::sin(phi0);
  const double level = m * m * c0 * c0 + s0 * s0 * p_phi0 * p_phi0;
  if (std::abs(level - 1.0) > 1e-8)
    throw BranchError("initial data not on the unit-speed level H_1 = 1/2");
  const double K = std::atan2(-m * c0, s0 * p_phi0);

  const double x = m * t + K;
  GeodesicPoint out;
  out.phi = std::acos(std::clamp(-std::sin(x) / m, -1.0, 1.0));

  if (p_theta == 0.0) {
    out.theta = 0.0;
    return out;
  }
  // F(x) = atan(beta tan x) + pi floor(x/pi + 1/2) is the continuous
  // antiderivative branch; theta(t) = sgn(p_theta)(F(x) - F(K)) - p_theta t.
  const double beta = std::abs(p_theta) / m;
  const auto F = [beta](double u) {
    return std::atan(beta * std::tan(u)) +
           M_PI * std::floor(u / M_PI + 0.5);
  };
  out.theta = std::copysign(1.0, p_theta) * (F(x) - F(K)) - p_theta * t;
  return out;
}

/// Upper bound of the Clairaut constant on g_lambda: p_theta must lie in
/// (0, sqrt(G_lambda(pi/2))); infinite for lambda = 1.
inline double return_map_domain_sup(double lambda) {
  if (lambda >= 1.0) return std::numeric_limits<double>::infinity();
  return 1.0 / std::sqrt(1.0 - lambda);
}

/// First-return longitude increment of a non-meridian g_lambda geodesic:
/// R(p_theta) = pi - alpha pi p_theta /
///              (sqrt(alpha+1) sqrt(alpha+1+alpha p_theta^2)),
/// alpha = lambda/(1-lambda); the lambda = 1 case is the limit
/// R = pi (1 - p_theta / sqrt(1 + p_theta^2)).
inline double return_map(double lambda, double p_theta) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw DomainError("lambda outside [0, 1]");
  if (!(p_theta > 0.0 && p_theta < return_map_domain_sup(lambda)))
    throw DomainError("p_theta outside (0, sqrt(G(pi/2)))");
  if (lambda == 1.0)
    return M_PI * (1.0 - p_theta / std::sqrt(1.0 + p_theta * p_theta));
  const double a = lambda / (1.0 - lambda);
  return M_PI - a * M_PI * p_theta /
                    (std::sqrt(a + 1.0) *
                     std::sqrt(a + 1.0 + a * p_theta * p_theta));
}

struct ReturnMapSample {
  double p_theta = 0.0;
  double delta_theta = 0.0;
  double period = 0.0;  // full phi-oscillation period (twice the return time)
};

/// First return to the equator by direct integration of the g_lambda flow,
/// seeded at the equator on the unit-speed level with p_phi(0) > 0.
inline ReturnMapSample return_map_numeric(double lambda, double p_theta,
                                          const IntegrateOptions& opt = {}) {
  if (!(p_theta > 0.0 && p_theta < return_map_domain_sup(lambda)))
    throw DomainError("p_theta outside (0, sqrt(G(pi/2)))");
  const double pp2 = 1.0 - p_theta * p_theta * (1.0 - lambda);
  Vec4 y0;
  y0 << 0.5 * M_PI, 0.0, std::sqrt(pp2), p_theta;
  const auto traj = integrate_grusin(y0, lambda, 4.0 * M_PI, opt,
                                     {{EventKind::EquatorCross, 0.0}});
  for (const auto& e : traj.events)
    if (e.kind == EventKind::EquatorCross && e.t > 1e-9)
      return {p_theta, e.y[1], 2.0 * e.t};
  throw StepFailure("no equator return found");
}

namespace detail {

/// Scan an augmented dense run for the first sign change of D(t), refine by
/// bisection to a time window below time_tol, and return the root.
template <class DFun>
std::optional<double> first_sign_change(DFun&& D, double t0, double t1,
                                        const std::vector<double>& checkpoints,
                                        double time_tol = 1e-10) {
  double t_prev = t0;
  double d_prev = D(t0);
  double cap = std::abs(d_prev);
  for (double t : checkpoints) {
    if (!(t > t_prev)) continue;
    const double d = D(t);
    cap = std::max(cap, std::abs(d));
    // Roundoff guard: a flip deep inside the noise floor is not a root.
    const bool genuine =
        d_prev != 0.0 && d != 0.0 && (d_prev < 0.0) != (d < 0.0) &&
        std::max(std::abs(d_prev), std::abs(d)) > 1e-14 * cap;
    if (genuine) {
      double a = t_prev, b = t;
      double da = d_prev;
      while (b - a > time_tol) {
        const double m = 0.5 * (a + b);
        const double dm = D(m);
        if (dm == 0.0) return m;
        if ((da < 0.0) != (dm < 0.0))
          b = m;
        else {
          a = m;
          da = dm;
        }
      }
      return 0.5 * (a + b);
    }
    if (d != 0.0) {
      t_prev = t;
      d_prev = d;
    }
  }
  (void)t1;
  return std::nullopt;
}

template <class Dense>
std::vector<double> segment_checkpoints(const Dense& dense) {
  std::vector<double> ts;
  ts.reserve(2 * dense.size());
  for (const auto& s : dense) {
    ts.push_back(s.t0 + 0.5 * s.h);
    ts.push_back(s.t1());
  }
  return ts;
}

}  // namespace detail

/// First conjugate time along a g_lambda geodesic: one vertical Jacobi field
/// seeded tangent to the covector level circle, rank test
/// D(t) = dphi * theta' - dtheta * phi'.
inline std::optional<double> grusin_conjugate_time(
    const Vec4& y0, double lambda, double t_max,
    const IntegrateOptions& opt = {}) {
  const Eigen::Vector2d u(-y0[3] * grusin_weight(y0[0], lambda), y0[2]);
  const auto run = integrate_grusin_with_jacobi(y0, u, lambda, t_max, opt);
  const auto D = [&](double t) {
    const StateVec<8> Y = run.augmented_at(t);
    const Vec4 f = detail::grusin_rhs_clamped(Y.head<4>(), lambda);
    return Y[4] * f[1] - Y[5] * f[0];
  };
  return detail::first_sign_change(D, 0.0, run.t_end,
                                   detail::segment_checkpoints(run.dense));
}

struct SphereLocusPoint {
  double theta = 0.0;
  double phi = 0.0;
  double t = 0.0;        // first conjugate time
  double p_theta = 0.0;  // generating Clairaut constant
  int branch = +1;       // sign of p_phi(0)
};

/// First conjugate point of every unit-speed geodesic from (phi0, theta = 0)
/// with Clairaut constant in the grid, both p_phi(0) branches. Ordered as a
/// polyline: + branch by ascending p_theta, then - branch descending.
inline std::vector<SphereLocusPoint> conjugate_locus_sphere(
    double lambda, double phi0, const std::vector<double>& p_theta_grid,
    double t_max = 8.0 * M_PI, const IntegrateOptions& opt = {}) {
  require_chart_phi(phi0);
  const double W0 = grusin_weight(phi0, lambda);
  std::vector<SphereLocusPoint> out;
  auto run_branch = [&](double p_theta, int sgn) {
    const double pp2 = 1.0 - p_theta * p_theta * W0;
    if (pp2 < 0.0) return;  // outside the covector circle at phi0
    Vec4 y0;
    y0 << phi0, 0.0, sgn * std::sqrt(pp2), p_theta;
    const auto tc = grusin_conjugate_time(y0, lambda, t_max, opt);
    if (!tc) return;
    const auto run = integrate_grusin(y0, lambda, *tc, opt);
    const Vec4 yc = run.at(*tc);
    out.push_back({yc[1], yc[0], *tc, p_theta, sgn});
  };
  for (auto it = p_theta_grid.begin(); it != p_theta_grid.end(); ++it)
    run_branch(*it, +1);
  for (auto it = p_theta_grid.rbegin(); it != p_theta_grid.rend(); ++it)
    run_branch(*it, -1);
  return out;
}

/// Sign reversals of the discrete locus tangent (3-point stencil), the
/// astroid-cusp counter: a standard astroid shows 2 reversals in each
/// component; a fold crossing shows none in the transverse component.
struct TangentReversals {
  int theta = 0;
  int phi = 0;
};

inline TangentReversals tangent_reversals(
    const std::vector<SphereLocusPoint>& locus) {
  TangentReversals r;
  // theta is a circle coordinate: use the short-way angular difference so a
  // polyline crossing the +/-pi meridian does not register fake reversals.
  auto count = [&](auto get, bool angular) {
    int n = 0;
    double prev = 0.0;
    bool have = false;
    for (size_t i = 1; i < locus.size(); ++i) {
      double d = get(locus[i]) - get(locus[i - 1]);
      if (angular) d = std::remainder(d, 2.0 * M_PI);
      if (d == 0.0) continue;
      if (have && (d < 0.0) != (prev < 0.0)) ++n;
      prev = d;
      have = true;
    }
    return n;
  };
  r.theta = count([](const SphereLocusPoint& p) { return p.theta; }, true);
  r.phi = count([](const SphereLocusPoint& p) { return p.phi; }, false);
  return r;
}

struct CutSample {
  double p_theta = 0.0;
  double t_cut = 0.0;
  double theta = 0.0;
  double phi = 0.0;
  double pair_time_mismatch = 0.0;  // |t+ - t-| of the intersecting pair
};

struct CutLocusDescription {
  enum class Kind {
    SinglePoint,         // lambda = 0: the antipodal point
    AntipodalParallel,   // non-equatorial source: arc of phi = pi - phi0
    EquatorMinusPoint,   // equatorial source: the equator minus the source
  };
  Kind kind{};
  double parallel_phi = 0.0;
  std::vector<CutSample> samples;
};

/// Cut locus of the point (phi0, theta = 0) on g_lambda, built from the
/// symmetric-pair intersections: the +/- p_phi(0) geodesics meet on the
/// antipodal parallel at equal time (equator sources: at the first return,
/// Delta theta = R(p_theta)).
inline CutLocusDescription cut_locus_sphere(
    double lambda, double phi0, const std::vector<double>& p_theta_grid,
    const IntegrateOptions& opt = {}) {
  require_chart_phi(phi0);
  CutLocusDescription out;
  const bool equatorial = std::abs(phi0 - 0.5 * M_PI) < 1e-12;
  out.parallel_phi = M_PI - phi0;
  if (lambda == 0.0) {
    out.kind = CutLocusDescription::Kind::SinglePoint;
    out.samples.push_back({0.0, M_PI, M_PI, M_PI - phi0, 0.0});
    return out;
  }
  out.kind = equatorial ? CutLocusDescription::Kind::EquatorMinusPoint
                        : CutLocusDescription::Kind::AntipodalParallel;
  const double W0 = grusin_weight(phi0, lambda);
  for (double p_theta : p_theta_grid) {
    const double pp2 = 1.0 - p_theta * p_theta * W0;
    if (pp2 <= 0.0) continue;
    const double pp = std::sqrt(pp2);
    const EventSpec ev{equatorial ? EventKind::EquatorCross
                                  : EventKind::AntipodalParallel,
                       M_PI - phi0};
    // The two branches meet at the half period of the phi oscillation; for
    // a non-equatorial source this is the second parallel crossing of one
    // branch and the first of the other, so collect all crossings and take
    // the closest-in-time pair.
    std::array<std::vector<GrusinEvent>, 2> hits;
    for (int s = 0; s < 2; ++s) {
      Vec4 y0;
      y0 << phi0, 0.0, (s == 0 ? pp : -pp), p_theta;
      const auto traj = integrate_grusin(y0, lambda, 8.0 * M_PI, opt, {ev});
      for (const auto& e : traj.events)
        if (e.kind == ev.kind && e.t > 1e-9) hits[s].push_back(e);
    }
    if (hits[0].empty() || hits[1].empty()) continue;
    // Matching crossings of the two runs agree only to the event-localization
    // jitter (~1e-11 over a few periods), while distinct crossings are half a
    // period apart, so compare gaps with a window that dominates the jitter
    // and keep the earliest equal-time pair.
    const GrusinEvent* best[2] = {nullptr, nullptr};
    double gap = std::numeric_limits<double>::infinity();
    for (const auto& a : hits[0])
      for (const auto& b : hits[1]) {
        const double g = std::abs(a.t - b.t);
        const bool better = g < gap - 1e-9;
        const bool tied = best[0] && g < gap + 1e-9 &&
                          std::max(a.t, b.t) < std::max(best[0]->t, best[1]->t);
        if (!best[0] || better || tied) {
          gap = g;
          best[0] = &a;
          best[1] = &b;
        }
      }
    out.samples.push_back({p_theta, 0.5 * (best[0]->t + best[1]->t),
                           0.5 * (best[0]->y[1] + best[1]->y[1]),
                           0.5 * (best[0]->y[0] + best[1]->y[0]),
                           gap});
  }
  return out;
}

}  // namespace blochopt
