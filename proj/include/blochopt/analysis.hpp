#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "blochopt/grusin.hpp"
#include "blochopt/integrator.hpp"

namespace blochopt {

enum class ExtremalClass { CompactPeriodic, NoncompactAperiodic };

struct LevelSetClass {
  ExtremalClass kind{};
  std::vector<double> turning_phis;    // admissible roots of the Delta = 0 condition
  std::optional<double> period;        // present iff CompactPeriodic
  double period_residual = 0.0;        // Poincare-section return defect
  std::vector<double> singular_phis;   // present iff |Gamma - gamma_plus| >= 2
  std::optional<double> asymptote_phi; // seeded aperiodic runs: phi at the guard
};

struct LocusPoint {
  double r = 0.0;
  double phi = 0.0;
  double theta = 0.0;
  double t = 0.0;
  enum class Kind { Conjugate, Cut } kind = Kind::Conjugate;
  ExtremalPoint seed{};
};

/// Real p_phi roots of H_r = epsilon at fixed (phi, p_r, p_theta):
/// (1 - b^2) p^2 + 2 e b p + (nu c - e^2) = 0 with b = B(phi),
/// e = epsilon + A(phi) p_r, nu = p_theta^2, c = cot^2 phi. Squaring the
/// defining relation Q = e - b p introduces phantom roots, so roots with
/// e - b p < 0 are discarded. When the leading coefficient vanishes
/// (|b| = 1, the singular parallels) the equation is linear.
inline std::vector<double> pphi_roots(double phi, double p_r, double p_theta,
                                      double epsilon,
                                      const DissipationParams& P) {
  P.require_integrable();
  require_chart_phi(phi);
  const double b = drift_meridian(P, phi);
  const double e = epsilon + drift_radial(P, phi) * p_r;
  const double cot = std::cos(phi) / std::sin(phi);
  const double nuc = p_theta * p_theta * cot * cot;
  const double lead = 1.0 - b * b;

  std::vector<double> roots;
  if (std::abs(lead) <= 1e-13) {
    if (std::abs(2.0 * e * b) > 1e-300)
      roots.push_back((e * e - nuc) / (2.0 * e * b));
  } else {
    const double quarter_disc = e * e - nuc * lead;
    if (quarter_disc >= 0.0) {
      const double sq = std::sqrt(quarter_disc);
      roots.push_back((-e * b + sq) / lead);
      roots.push_back((-e * b - sq) / lead);
    }
  }
  std::erase_if(roots, [&](double p) { return e - b * p < -1e-12; });
  std::sort(roots.begin(), roots.end());
  return roots;
}

/// Singular parallels phi_S: solutions of (Gamma-gamma_plus)^2 sin^2(2phi)/4=1
/// in (0, pi). Four for |Gamma - gamma_plus| > 2, two (pi/4, 3pi/4) at
/// equality; none otherwise (NoBarrier).
inline std::vector<double> singular_phi(const DissipationParams& P) {
  const double d = std::abs(P.Gamma - P.gamma_plus);
  if (d < 2.0) throw NoBarrier("|Gamma - gamma_plus| < 2: no singular set");
  const double sigma = 2.0 / d;
  const double a = std::asin(sigma);  // in (0, pi/2]
  std::vector<double> out{0.5 * a, 0.5 * (M_PI - a), 0.5 * (M_PI + a),
                          M_PI - 0.5 * a};
  out.erase(std::unique(out.begin(), out.end(),
                        [](double x, double y) { return std::abs(x - y) < 1e-12; }),
            out.end());
  return out;
}

namespace detail {

/// Quarter discriminant of the p_phi quadratic as a function of phi; its
/// zeros are the turning parallels of the level set.
inline double turning_function(double phi, double p_r, double p_theta,
                               double epsilon, const DissipationParams& P) {
  const double b = drift_meridian(P, phi);
  const double e = epsilon + drift_radial(P, phi) * p_r;
  const double cot = std::cos(phi) / std::sin(phi);
  return e * e - p_theta * p_theta * cot * cot * (1.0 - b * b);
}

}  // namespace detail

/// Structure of the whole level set {H_r = epsilon} at fixed (p_r, p_theta):
/// admissible turning parallels, singular parallels, and whether noncompact
/// (aperiodic) branches exist. The kind describes the level set as a set;
/// classify_extremal decides the component of one seed.
inline LevelSetClass classify_level_set(double p_r, double p_theta,
                                        double epsilon,
                                        const DissipationParams& P,
                                        const std::vector<double>& phi_grid) {
  P.require_integrable();
  LevelSetClass out;
  const double gap = std::abs(P.Gamma - P.gamma_plus);
  if (gap >= 2.0) out.singular_phis = singular_phi(P);
  // Noncompact branches accompany every singular parallel with e(phi_S) != 0:
  // one quadratic root diverges there and is admissible on one side.
  bool noncompact = false;
  for (double s : out.singular_phis)
    if (std::abs(epsilon + drift_radial(P, s) * p_r) > 1e-12) noncompact = true;
  out.kind = noncompact ? ExtremalClass::NoncompactAperiodic
                        : ExtremalClass::CompactPeriodic;

  const auto g = [&](double phi) {
    return detail::turning_function(phi, p_r, p_theta, epsilon, P);
  };
  for (size_t i = 1; i < phi_grid.size(); ++i) {
    const double a = phi_grid[i - 1], b = phi_grid[i];
    const double ga = g(a), gb = g(b);
    if (ga == 0.0 || (ga < 0.0) == (gb < 0.0)) continue;
    const double root = refine_root(g, a, b, 1e-13);
    // Admissibility of the double root p* = -e b/(1-b^2): Q >= 0 requires
    // e/(1 - b^2) >= 0 there.
    const double bb = drift_meridian(P, root);
    const double e = epsilon + drift_radial(P, root) * p_r;
    if (e / (1.0 - bb * bb) >= 0.0) out.turning_phis.push_back(root);
  }

  if (out.kind == ExtremalClass::CompactPeriodic &&
      out.turning_phis.size() >= 2) {
    // Representative orbit: start midway between the first two turning
    // parallels on either root branch and measure the phi oscillation.
    const double mid = 0.5 * (out.turning_phis[0] + out.turning_phis[1]);
    const auto roots = pphi_roots(mid, p_r, p_theta, epsilon, P);
    if (!roots.empty()) {
      ExtremalPoint z0{0.0, mid, 0.0, {p_r, roots.front(), p_theta}, epsilon,
                       0.0};
      try {
        IntegrateOptions opt;
        const auto traj = integrate_extremal(z0, P, 200.0, opt,
                                             {{EventKind::TurningPoint, 0.0}});
        std::vector<double> tt;
        for (const auto& ev : traj.events)
          if (ev.kind == EventKind::TurningPoint) tt.push_back(ev.t);
        // The turning times repeat with the period, so T = tt[k] - tt[0] for
        // some k; take the first candidate that closes the (phi, p_phi) loop.
        const auto za = tt.empty() ? traj.at(traj.t_end) : traj.at(tt[0]);
        for (size_t k = 1; k < tt.size(); ++k) {
          const double T = tt[k] - tt[0];
          const auto zb = traj.at(tt[k]);
          const double res = std::hypot(
              za.phi - zb.phi, za.costate.p_phi - zb.costate.p_phi);
          if (res <= 1e-6) {
            out.period = T;
            out.period_residual = res;
            break;
          }
        }
      } catch (const Error&) {
        // level set inspection stays usable without a period
      }
    }
  }
  return out;
}

/// Classify the extremal through z0 by integration: CompactPeriodic with its
/// period, or NoncompactAperiodic with the phi the run walls up against
/// (costate guard or polar band). The trajectory geometry is scale-invariant
/// in the costate, so z0 is used as given.
inline LevelSetClass classify_extremal(const ExtremalPoint& z0,
                                       const DissipationParams& P,
                                       double t_span = 200.0,
                                       const IntegrateOptions& opt = {}) {
  P.require_integrable();
  LevelSetClass out;
  if (std::abs(P.Gamma - P.gamma_plus) >= 2.0) out.singular_phis = singular_phi(P);

  const auto traj =
      integrate_extremal(z0, P, t_span, opt, {{EventKind::TurningPoint, 0.0}});
  if (traj.terminated_by == EventKind::CostateGuard ||
      traj.terminated_by == EventKind::PolarBand) {
    out.kind = ExtremalClass::NoncompactAperiodic;
    out.asymptote_phi = traj.samples.back().phi;
    for (const auto& ev : traj.events)
      if (ev.kind == EventKind::TurningPoint)
        out.turning_phis.push_back(ev.point.phi);
    return out;
  }

  std::vector<double> tt;
  for (const auto& ev : traj.events)
    if (ev.kind == EventKind::TurningPoint) tt.push_back(ev.t);
  if (tt.size() >= 2) {
    // Turning times repeat with the period: T = tt[k] - tt[0] for some k.
    const auto za = traj.at(tt[0]);
    for (size_t k = 1; k < tt.size(); ++k) {
      const auto zb = traj.at(tt[k]);
      const double res =
          std::hypot(za.phi - zb.phi, za.costate.p_phi - zb.costate.p_phi);
      if (res <= 1e-6) {
        out.kind = ExtremalClass::CompactPeriodic;
        out.period = tt[k] - tt[0];
        out.period_residual = res;
        double lo = za.phi, hi = za.phi;
        for (size_t j = 0; j <= k; ++j) {
          lo = std::min(lo, traj.at(tt[j]).phi);
          hi = std::max(hi, traj.at(tt[j]).phi);
        }
        out.turning_phis = {lo, hi};
        return out;
      }
    }
  }
  throw NotPeriodic("no period found and no guard reached within t_span");
}

/// Central symmetry of the reduced flow: (phi, p_phi) -> (pi - phi, -p_phi).
inline ExtremalPoint symmetric_partner(const ExtremalPoint& z0) {
  ExtremalPoint z = z0;
  z.phi = M_PI - z0.phi;
  z.costate.p_phi = -z0.costate.p_phi;
  return z;
}

struct AntipodalIntersection {
  double t_half = 0.0;          // common time T/2
  ExtremalPoint q_plus{};       // endpoint of the seed-root extremal
  ExtremalPoint q_minus{};      // endpoint of the partner-root extremal
  double mismatch_r = 0.0;      // |r+ - r-|
  double mismatch_theta = 0.0;  // |theta+ - theta-|
  double mismatch_phi = 0.0;    // max |phi+- - (pi - phi0)|
};

/// Prop-style equal-cost intersection: the two level-set roots at phi0 reach
/// the antipodal parallel pi - phi0 at the common time T/2 with equal (r,
/// theta). Requires the component through z0 to be periodic.
inline AntipodalIntersection antipodal_intersection(
    const ExtremalPoint& z0, const DissipationParams& P,
    const IntegrateOptions& opt = {}) {
  const double h = h_reduced(z0, P);
  auto roots = pphi_roots(z0.phi, z0.costate.p_r, z0.costate.p_theta, h, P);
  if (roots.size() < 2)
    throw NotPeriodic("level set has no second root at phi0");

  const auto cls = classify_extremal(z0, P, 200.0, opt);
  if (cls.kind != ExtremalClass::CompactPeriodic || !cls.period)
    throw NotPeriodic("extremal through z0 is not periodic");
  const double t_half = 0.5 * *cls.period;

  AntipodalIntersection out;
  out.t_half = t_half;
  ExtremalPoint ends[2];
  for (int i = 0; i < 2; ++i) {
    ExtremalPoint zi = z0;
    zi.costate.p_phi = roots[i];
    const auto traj = integrate_extremal(zi, P, 1.05 * t_half, opt);
    ends[i] = traj.at(t_half);
  }
  out.q_plus = ends[0];
  out.q_minus = ends[1];
  out.mismatch_r = std::abs(ends[0].r - ends[1].r);
  out.mismatch_theta = std::abs(ends[0].theta - ends[1].theta);
  out.mismatch_phi =
      std::max(std::abs(ends[0].phi - (M_PI - z0.phi)),
               std::abs(ends[1].phi - (M_PI - z0.phi)));
  return out;
}

namespace detail {

/// Two unit vectors orthogonal to p0, spanning a complement of the covector
/// ray (the exponential map's genuine directions after level normalization).
inline std::array<Eigen::Vector3d, 2> covector_complement(
    const Eigen::Vector3d& p0) {
  const Eigen::Vector3d n = p0.normalized();
  const Eigen::Vector3d trial = std::abs(n[0]) < 0.9
                                    ? Eigen::Vector3d::UnitX()
                                    : Eigen::Vector3d::UnitY();
  const Eigen::Vector3d u1 = (trial - trial.dot(n) * n).normalized();
  return {u1, n.cross(u1)};
}

}  // namespace detail

/// First conjugate time along the normal extremal through z0: the first zero
/// of the Jacobi rank determinant. Generic case: two vertical fields spanning
/// the covector complement, D = det[dq1, dq2, q_dot]. Gamma = gamma_plus
/// degenerates that determinant identically (the (phi, theta) block decouples
/// from r and is scale-free in p), so the test drops to one field on
/// (phi, theta): D = dphi theta' - dtheta phi'.
inline std::optional<LocusPoint> conjugate_time(const ExtremalPoint& z0,
                                                const DissipationParams& P,
                                                double t_max,
                                                const IntegrateOptions& opt = {}) {
  const double h = h_reduced(z0, P);
  if (!(h > 0.0)) throw DomainError("conjugate test needs a normal level H > 0");

  std::optional<double> tc;
  if (P.Gamma == P.gamma_plus) {
    const double cot = std::cos(z0.phi) / std::sin(z0.phi);
    Eigen::Vector3d u;
    u << 0.0, -z0.costate.p_theta * cot * cot, z0.costate.p_phi;
    const auto run = integrate_with_jacobi<1>(z0, {u}, P, t_max, opt);
    const auto D = [&](double t) {
      const auto Y = run.augmented_at(t);
      const Vec6 f = detail::reduced_rhs_clamped(Y.head<6>(), P);
      return Y[7] * f[2] - Y[8] * f[1];  // dphi * theta' - dtheta * phi'
    };
    tc = detail::first_sign_change(D, z0.t, run.t_end,
                                   detail::segment_checkpoints(run.dense));
    if (!tc) return std::nullopt;
    const Vec6 yc = run.state_at(*tc);
    return LocusPoint{yc[0], yc[1], yc[2], *tc, LocusPoint::Kind::Conjugate, z0};
  }

  Eigen::Vector3d p0;
  p0 << z0.costate.p_r, z0.costate.p_phi, z0.costate.p_theta;
  const auto seeds = detail::covector_complement(p0);
  const auto run = integrate_with_jacobi<2>(z0, seeds, P, t_max, opt);
  const auto D = [&](double t) {
    const auto Y = run.augmented_at(t);
    const Vec6 f = detail::reduced_rhs_clamped(Y.head<6>(), P);
    Eigen::Matrix3d M;
    M.col(0) = Y.segment<3>(6);
    M.col(1) = Y.segment<3>(12);
    M.col(2) = f.head<3>();
    return M.determinant();
  };
  tc = detail::first_sign_change(D, z0.t, run.t_end,
                                 detail::segment_checkpoints(run.dense));
  if (!tc) return std::nullopt;
  const Vec6 yc = run.state_at(*tc);
  return LocusPoint{yc[0], yc[1], yc[2], *tc, LocusPoint::Kind::Conjugate, z0};
}

struct SweepResult {
  std::vector<LocusPoint> points;       // ordered by the p_phi grid
  std::vector<double> skipped_seeds;    // grid values with no normal level
};

/// Conjugate locus over a 1-parameter family of covectors at (phi0, p_r,
/// p_theta): each grid p_phi(0) is rescaled onto the level H_r = epsilon
/// (degree-1 homogeneity keeps the projected extremal unchanged), then the
/// first conjugate point is located.
inline SweepResult conjugate_locus_sweep(double phi0, double p_r,
                                         double epsilon,
                                         const DissipationParams& P,
                                         double p_theta,
                                         const std::vector<double>& p_phi_grid,
                                         double t_max = 50.0,
                                         const IntegrateOptions& opt = {}) {
  SweepResult out;
  for (double pp : p_phi_grid) {
    ExtremalPoint z0{0.0, phi0, 0.0, {p_r, pp, p_theta}, epsilon, 0.0};
    const double h = h_reduced(z0, P);
    if (!(h > 1e-12)) {
      out.skipped_seeds.push_back(pp);
      continue;
    }
    const double s = epsilon / h;
    z0.costate = {p_r * s, pp * s, p_theta * s};
    const auto lp = conjugate_time(z0, P, t_max, opt);
    if (lp)
      out.points.push_back(*lp);
    else
      out.skipped_seeds.push_back(pp);
  }
  return out;
}

/// Cut point of the periodic extremal through z0: the T/2 intersection with
/// its level-set partner on the antipodal parallel.
inline std::optional<LocusPoint> cut_point(const ExtremalPoint& z0,
                                           const DissipationParams& P,
                                           const IntegrateOptions& opt = {}) {
  if (z0.costate.p_theta == 0.0)
    throw DomainError("cut construction needs p_theta != 0");
  const auto ai = antipodal_intersection(z0, P, opt);
  LocusPoint lp;
  lp.r = 0.5 * (ai.q_plus.r + ai.q_minus.r);
  lp.phi = 0.5 * (ai.q_plus.phi + ai.q_minus.phi);
  lp.theta = 0.5 * (ai.q_plus.theta + ai.q_minus.theta);
  lp.t = ai.t_half;
  lp.kind = LocusPoint::Kind::Cut;
  lp.seed = z0;
  return lp;
}

/// Meridian current of the Zermelo form of the problem on the sphere:
/// F0 = (sin 2phi / 2)(gamma_plus - Gamma) d/dphi.
inline double zermelo_current(double phi, const DissipationParams& P) {
  P.require_integrable();
  return drift_meridian(P, phi);
}

/// The current is compensable by feedback iff |gamma_plus - Gamma| < 2.
inline bool finsler_regime(const DissipationParams& P) {
  return std::abs(P.gamma_plus - P.Gamma) < 2.0;
}

/// Northern parallel band where |current| > 1 (centered at phi = pi/4):
/// (asin(sigma)/2, pi/2 - asin(sigma)/2), sigma = 2/|gamma_plus - Gamma|.
/// Its endpoints are the northern singular parallels.
inline std::pair<double, double> barrier_band(const DissipationParams& P) {
  const double d = std::abs(P.gamma_plus - P.Gamma);
  if (d <= 2.0) throw NoBarrier("|gamma_plus - Gamma| <= 2: no barrier band");
  const double a = std::asin(2.0 / d);
  return {0.5 * a, 0.5 * (M_PI - a)};
}

enum class SynthesisType { BSB, BB };

/// Small-time meridian synthesis near the equator: bang-singular-bang when
/// gamma_plus < Gamma, bang-bang when gamma_plus > Gamma.
inline SynthesisType normal_form_classify(const DissipationParams& P) {
  const double d = P.gamma_plus - P.Gamma;
  if (d == 0.0) throw GrusinDegenerate("Gamma = gamma_plus: no classification");
  return d < 0.0 ? SynthesisType::BSB : SynthesisType::BB;
}

/// Local equatorial model: x' = 1 + ((gamma_plus - Gamma)/Gamma) y^2,
/// y' = (Gamma - gamma_plus) y + u2, z' = y u1. The singular line is y = 0
/// with u2 = 0.
inline Eigen::Vector3d normal_form_rhs(const Eigen::Vector3d& xyz, double u1,
                                       double u2, const DissipationParams& P) {
  const double y = xyz[1];
  return {1.0 + (P.gamma_plus - P.Gamma) / P.Gamma * y * y,
          (P.Gamma - P.gamma_plus) * y + u2, y * u1};
}

}  // namespace blochopt
