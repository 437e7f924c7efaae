#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "blochopt/hamiltonians.hpp"
#include "blochopt/model.hpp"
#include "blochopt/ode.hpp"

namespace blochopt {

enum class EventKind {
  EquatorCross,       // phi = pi/2 (recording)
  AntipodalParallel,  // phi = target (recording)
  TurningPoint,       // d(phi)/dt = 0 (recording)
  SwitchingGuard,     // Q = q_min (terminal)
  PolarBand,          // phi = phi_min or pi - phi_min (terminal)
  CostateGuard,       // |p_phi| = guard threshold (terminal)
  ConjugateDet,       // sign change of the Jacobi determinant (recording)
};

struct EventSpec {
  EventKind kind{};
  double target = 0.0;  // phi target for AntipodalParallel
};

struct Event {
  double t = 0.0;
  EventKind kind{};
  ExtremalPoint point{};
};

struct IntegrateOptions {
  StepTolerances tol{};
  /// Terminal threshold on |p_phi|; aperiodic extremals blow up along a
  /// singular parallel and past ~1e6 the H-conservation audit drowns in
  /// cancellation. Infinity disables the guard.
  double costate_guard = 1e6;
  double event_residual = 1e-10;
};

inline Vec6 pack(const ExtremalPoint& z) {
  Vec6 y;
  y << z.r, z.phi, z.theta, z.costate.p_r, z.costate.p_phi, z.costate.p_theta;
  return y;
}

inline ExtremalPoint unpack(const Vec6& y, double t, double epsilon) {
  return {y[0], y[1], y[2], {y[3], y[4], y[5]}, epsilon, t};
}

struct Trajectory {
  std::vector<ExtremalPoint> samples;  // accepted step endpoints
  std::vector<DenseSegment<6>> dense;  // contiguous interpolants
  std::vector<Event> events;
  std::optional<EventKind> terminated_by;
  double t_end = 0.0;
  double epsilon = 1.0;  // level of the seed, H(z0)

  ExtremalPoint at(double t) const {
    const auto it = std::upper_bound(
        dense.begin(), dense.end(), t,
        [](double tt, const DenseSegment<6>& s) { return tt < s.t1(); });
    const auto& seg = it == dense.end() ? dense.back() : *it;
    return unpack(seg.eval(std::clamp(t, dense.front().t0, t_end)), t,
                  epsilon);
  }
};

namespace detail {

template <int N>
struct Watch {
  EventKind kind{};
  bool terminal = false;
  std::function<double(const StateVec<N>&)> g;
};

/// Shared event-scanning observer: samples each watch function at the
/// midpoint and endpoint of every accepted segment, refines sign changes on
/// the dense output, records events in time order and stops at the earliest
/// terminal one.
template <int N, class OnSample, class OnEvent>
class EventScanner {
 public:
  EventScanner(std::vector<Watch<N>> watches, double residual, OnSample os,
               OnEvent oe)
      : watches_(std::move(watches)),
        residual_(residual),
        on_sample_(std::move(os)),
        on_event_(std::move(oe)) {}

  void prime(double t0, const StateVec<N>& y0) {
    g_prev_.resize(watches_.size());
    for (size_t i = 0; i < watches_.size(); ++i) g_prev_[i] = watches_[i].g(y0);
    on_sample_(t0, y0);
  }

  bool operator()(const DenseSegment<N>& seg, double& t_stop) {
    struct Hit {
      double t;
      size_t w;
    };
    std::vector<Hit> hits;
    const double tm = seg.t0 + 0.5 * seg.h;
    const double te = seg.t1();
    const StateVec<N> ym = seg.eval(tm);
    const StateVec<N> ye = seg.eval(te);
    for (size_t i = 0; i < watches_.size(); ++i) {
      const auto& w = watches_[i];
      const double gm = w.g(ym), ge = w.g(ye);
      const double gp = g_prev_[i];
      auto scan = [&](double ta, double ga, double tb, double gb) {
        if (ga == 0.0) return;  // root already handled at the left endpoint
        if (gb == 0.0) {
          hits.push_back({tb, i});
        } else if ((ga < 0.0) != (gb < 0.0)) {
          const double tr = refine_root(
              [&](double t) { return w.g(seg.eval(t)); }, ta, tb, residual_);
          hits.push_back({tr, i});
        }
      };
      scan(seg.t0, gp, tm, gm);
      scan(tm, gm, te, ge);
      g_prev_[i] = ge;
    }
    std::sort(hits.begin(), hits.end(),
              [](const Hit& a, const Hit& b) { return a.t < b.t; });
    for (const auto& h : hits) {
      on_event_(h.t, seg.eval(h.t), watches_[h.w].kind);
      if (watches_[h.w].terminal) {
        t_stop = h.t;
        stopped_ = watches_[h.w].kind;
        return true;
      }
    }
    on_sample_(te, ye);
    return false;
  }

  std::optional<EventKind> stopped() const { return stopped_; }

 private:
  std::vector<Watch<N>> watches_;
  double residual_;
  OnSample on_sample_;
  OnEvent on_event_;
  std::vector<double> g_prev_;
  std::optional<EventKind> stopped_;
};

inline void append_guard_watches(std::vector<Watch<6>>& w, double guard) {
  w.push_back({EventKind::PolarBand, true,
               [](const Vec6& y) { return y[1] - phi_min; }});
  w.push_back({EventKind::PolarBand, true,
               [](const Vec6& y) { return M_PI - phi_min - y[1]; }});
  w.push_back({EventKind::SwitchingGuard, true, [](const Vec6& y) {
                 return std::hypot(y[4], y[5] / std::tan(y[1])) - q_min;
               }});
  if (std::isfinite(guard))
    w.push_back({EventKind::CostateGuard, true, [guard](const Vec6& y) {
                   return guard - std::abs(y[4]);
                 }});
}

inline std::vector<Watch<6>> reduced_watches(const std::vector<EventSpec>& ev,
                                             const DissipationParams& P,
                                             double guard) {
  std::vector<Watch<6>> w;
  for (const auto& e : ev) {
    switch (e.kind) {
      case EventKind::EquatorCross:
        w.push_back({e.kind, false,
                     [](const Vec6& y) { return y[1] - 0.5 * M_PI; }});
        break;
      case EventKind::AntipodalParallel:
        w.push_back({e.kind, false,
                     [t = e.target](const Vec6& y) { return y[1] - t; }});
        break;
      case EventKind::TurningPoint:
        w.push_back({e.kind, false, [P](const Vec6& y) {
                       return detail::reduced_rhs_clamped(y, P)[1];
                     }});
        break;
      default:
        break;  // guard events are appended unconditionally below
    }
  }
  append_guard_watches(w, guard);
  return w;
}

}  // namespace detail

/// Propagate the reduced extremal flow from z0 over [z0.t, z0.t + t_span].
/// Recording events are logged; SwitchingGuard / PolarBand / CostateGuard
/// terminate the run at the refined event time.
inline Trajectory integrate_extremal(const ExtremalPoint& z0,
                                     const DissipationParams& P, double t_span,
                                     const IntegrateOptions& opt = {},
                                     const std::vector<EventSpec>& events = {}) {
  P.require_integrable();
  require_chart_phi(z0.phi);
  if (switching_distance(z0.costate, z0.phi) <= q_min)
    throw SwitchingSurface("seed on the switching surface");

  Trajectory out;
  out.epsilon = h_reduced(z0, P);

  auto watches = detail::reduced_watches(events, P, opt.costate_guard);
  detail::EventScanner<6, std::function<void(double, const Vec6&)>,
                       std::function<void(double, const Vec6&, EventKind)>>
      scan(std::move(watches), opt.event_residual,
           [&](double t, const Vec6& y) {
             out.samples.push_back(unpack(y, t, out.epsilon));
           },
           [&](double t, const Vec6& y, EventKind k) {
             out.events.push_back({t, k, unpack(y, t, out.epsilon)});
           });

  const Vec6 y0 = pack(z0);
  scan.prime(z0.t, y0);
  double t_end = z0.t;
  const Vec6 yf = dopri5<6>(
      [&](double, const Vec6& y) { return detail::reduced_rhs_clamped(y, P); },
      y0, z0.t, z0.t + t_span, opt.tol,
      [&](const DenseSegment<6>& seg, double& t_stop) {
        const bool stop = scan(seg, t_stop);
        out.dense.push_back(seg);
        return stop;
      },
      &t_end);
  out.t_end = t_end;
  out.terminated_by = scan.stopped();
  if (out.samples.empty() || out.samples.back().t < t_end)
    out.samples.push_back(unpack(yf, t_end, out.epsilon));
  return out;
}

/// Jacobi frame: M variational fields along one extremal, each started
/// vertical (delta q(0) = 0) with the given costate displacement.
template <int M>
struct JacobiTrajectory {
  static constexpr int dim = 6 + 6 * M;
  Trajectory base;  // samples + events of the carrier extremal (dense empty)
  std::vector<DenseSegment<dim>> dense;
  std::array<Eigen::Vector3d, M> seeds;  // delta p(0) of each field
  double t_end = 0.0;

  StateVec<dim> augmented_at(double t) const {
    const auto it = std::upper_bound(
        dense.begin(), dense.end(), t,
        [](double tt, const DenseSegment<dim>& s) { return tt < s.t1(); });
    const auto& seg = it == dense.end() ? dense.back() : *it;
    return seg.eval(std::clamp(t, dense.front().t0, t_end));
  }

  Vec6 state_at(double t) const { return augmented_at(t).template head<6>(); }

  Vec6 field_at(double t, int i) const {
    return augmented_at(t).template segment<6>(6 + 6 * i);
  }
};

/// Co-integrate the extremal and M Jacobi fields (analytic Jacobian).
template <int M>
JacobiTrajectory<M> integrate_with_jacobi(
    const ExtremalPoint& z0, const std::array<Eigen::Vector3d, M>& dp_seeds,
    const DissipationParams& P, double t_span,
    const IntegrateOptions& opt = {}) {
  static_assert(M >= 1 && M <= 3);
  constexpr int D = 6 + 6 * M;
  P.require_integrable();
  require_chart_phi(z0.phi);

  JacobiTrajectory<M> out;
  out.seeds = dp_seeds;
  out.base.epsilon = h_reduced(z0, P);

  StateVec<D> Y0 = StateVec<D>::Zero();
  Y0.template head<6>() = pack(z0);
  for (int i = 0; i < M; ++i)
    Y0.template segment<3>(6 + 6 * i + 3) = dp_seeds[i];

  std::vector<detail::Watch<D>> watches;
  {
    std::vector<detail::Watch<6>> w6;
    detail::append_guard_watches(w6, opt.costate_guard);
    for (auto& w : w6)
      watches.push_back({w.kind, w.terminal, [g = w.g](const StateVec<D>& y) {
                           return g(y.template head<6>());
                         }});
  }

  detail::EventScanner<D, std::function<void(double, const StateVec<D>&)>,
                       std::function<void(double, const StateVec<D>&, EventKind)>>
      scan(std::move(watches), opt.event_residual,
           [&](double t, const StateVec<D>& y) {
             out.base.samples.push_back(
                 unpack(y.template head<6>(), t, out.base.epsilon));
           },
           [&](double t, const StateVec<D>& y, EventKind k) {
             out.base.events.push_back(
                 {t, k, unpack(y.template head<6>(), t, out.base.epsilon)});
           });

  const auto rhs = [&](double, const StateVec<D>& Y) {
    StateVec<D> dY;
    const Vec6 y = Y.template head<6>();
    dY.template head<6>() = detail::reduced_rhs_clamped(y, P);
    const Mat6 J = detail::reduced_rhs_jacobian(y, P);
    for (int i = 0; i < M; ++i)
      dY.template segment<6>(6 + 6 * i) =
          J * Y.template segment<6>(6 + 6 * i);
    return dY;
  };

  scan.prime(z0.t, Y0);
  double t_end = z0.t;
  const StateVec<D> Yf = dopri5<D>(
      rhs, Y0, z0.t, z0.t + t_span, opt.tol,
      [&](const DenseSegment<D>& seg, double& t_stop) {
        const bool stop = scan(seg, t_stop);
        out.dense.push_back(seg);
        return stop;
      },
      &t_end);
  out.t_end = t_end;
  out.base.t_end = t_end;
  out.base.terminated_by = scan.stopped();
  if (out.base.samples.empty() || out.base.samples.back().t < t_end)
    out.base.samples.push_back(
        unpack(Yf.template head<6>(), t_end, out.base.epsilon));
  return out;
}

// ---------------------------------------------------------------------------
// Metric-family (g_lambda) geodesic flow: state (phi, theta, p_phi, p_theta).

struct GrusinEvent {
  double t = 0.0;
  EventKind kind{};
  Vec4 y = Vec4::Zero();
};

struct GrusinTrajectory {
  std::vector<std::pair<double, Vec4>> samples;
  std::vector<DenseSegment<4>> dense;
  std::vector<GrusinEvent> events;
  std::optional<EventKind> terminated_by;
  double t_end = 0.0;

  Vec4 at(double t) const {
    const auto it = std::upper_bound(
        dense.begin(), dense.end(), t,
        [](double tt, const DenseSegment<4>& s) { return tt < s.t1(); });
    const auto& seg = it == dense.end() ? dense.back() : *it;
    return seg.eval(std::clamp(t, dense.front().t0, t_end));
  }
};

namespace detail {

inline std::vector<Watch<4>> grusin_watches(const std::vector<EventSpec>& ev) {
  std::vector<Watch<4>> w;
  for (const auto& e : ev) {
    switch (e.kind) {
      case EventKind::EquatorCross:
        w.push_back({e.kind, false,
                     [](const Vec4& y) { return y[0] - 0.5 * M_PI; }});
        break;
      case EventKind::AntipodalParallel:
        w.push_back({e.kind, false,
                     [t = e.target](const Vec4& y) { return y[0] - t; }});
        break;
      case EventKind::TurningPoint:  // phi' = p_phi for g_lambda
        w.push_back({e.kind, false, [](const Vec4& y) { return y[2]; }});
        break;
      default:
        break;
    }
  }
  w.push_back({EventKind::PolarBand, true,
               [](const Vec4& y) { return y[0] - phi_min; }});
  w.push_back({EventKind::PolarBand, true,
               [](const Vec4& y) { return M_PI - phi_min - y[0]; }});
  return w;
}

}  // namespace detail

inline GrusinTrajectory integrate_grusin(const Vec4& y0, double lambda,
                                         double t_span,
                                         const IntegrateOptions& opt = {},
                                         const std::vector<EventSpec>& events = {}) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw DomainError("lambda outside [0, 1]");
  require_chart_phi(y0[0]);

  GrusinTrajectory out;
  detail::EventScanner<4, std::function<void(double, const Vec4&)>,
                       std::function<void(double, const Vec4&, EventKind)>>
      scan(detail::grusin_watches(events), opt.event_residual,
           [&](double t, const Vec4& y) { out.samples.emplace_back(t, y); },
           [&](double t, const Vec4& y, EventKind k) {
             out.events.push_back({t, k, y});
           });

  scan.prime(0.0, y0);
  double t_end = 0.0;
  const Vec4 yf = dopri5<4>(
      [&](double, const Vec4& y) {
        return detail::grusin_rhs_clamped(y, lambda);
      },
      y0, 0.0, t_span, opt.tol,
      [&](const DenseSegment<4>& seg, double& t_stop) {
        const bool stop = scan(seg, t_stop);
        out.dense.push_back(seg);
        return stop;
      },
      &t_end);
  out.t_end = t_end;
  out.terminated_by = scan.stopped();
  if (out.samples.empty() || out.samples.back().first < t_end)
    out.samples.emplace_back(t_end, yf);
  return out;
}

/// One vertical Jacobi field along a g_lambda geodesic (8-state augmented).
struct GrusinJacobiTrajectory {
  GrusinTrajectory base;  // dense empty; use the augmented segments
  std::vector<DenseSegment<8>> dense;
  Eigen::Vector2d seed = Eigen::Vector2d::Zero();
  double t_end = 0.0;

  StateVec<8> augmented_at(double t) const {
    const auto it = std::upper_bound(
        dense.begin(), dense.end(), t,
        [](double tt, const DenseSegment<8>& s) { return tt < s.t1(); });
    const auto& seg = it == dense.end() ? dense.back() : *it;
    return seg.eval(std::clamp(t, dense.front().t0, t_end));
  }
};

inline GrusinJacobiTrajectory integrate_grusin_with_jacobi(
    const Vec4& y0, const Eigen::Vector2d& dp_seed, double lambda,
    double t_span, const IntegrateOptions& opt = {}) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw DomainError("lambda outside [0, 1]");
  require_chart_phi(y0[0]);

  GrusinJacobiTrajectory out;
  out.seed = dp_seed;
  StateVec<8> Y0 = StateVec<8>::Zero();
  Y0.head<4>() = y0;
  Y0.tail<2>() = dp_seed;

  std::vector<detail::Watch<8>> watches;
  watches.push_back({EventKind::PolarBand, true,
                     [](const StateVec<8>& y) { return y[0] - phi_min; }});
  watches.push_back({EventKind::PolarBand, true, [](const StateVec<8>& y) {
                       return M_PI - phi_min - y[0];
                     }});

  detail::EventScanner<8, std::function<void(double, const StateVec<8>&)>,
                       std::function<void(double, const StateVec<8>&, EventKind)>>
      scan(std::move(watches), opt.event_residual,
           [&](double t, const StateVec<8>& y) {
             out.base.samples.emplace_back(t, y.head<4>());
           },
           [&](double t, const StateVec<8>& y, EventKind k) {
             out.base.events.push_back({t, k, y.head<4>()});
           });

  const auto rhs = [&](double, const StateVec<8>& Y) {
    StateVec<8> dY;
    const Vec4 y = Y.head<4>();
    dY.head<4>() = detail::grusin_rhs_clamped(y, lambda);
    dY.tail<4>() = detail::grusin_rhs_jacobian(y, lambda) * Y.tail<4>();
    return dY;
  };

  scan.prime(0.0, Y0);
  double t_end = 0.0;
  const StateVec<8> Yf = dopri5<8>(
      rhs, Y0, 0.0, t_span, opt.tol,
      [&](const DenseSegment<8>& seg, double& t_stop) {
        const bool stop = scan(seg, t_stop);
        out.dense.push_back(seg);
        return stop;
      },
      &t_end);
  out.t_end = t_end;
  out.base.t_end = t_end;
  out.base.terminated_by = scan.stopped();
  if (out.base.samples.empty() || out.base.samples.back().first < t_end)
    out.base.samples.emplace_back(t_end, Yf.head<4>());
  return out;
}

}  // namespace blochopt
