#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>

#include "blochopt/errors.hpp"

namespace blochopt {

template <int N>
using StateVec = Eigen::Matrix<double, N, 1>;

struct StepTolerances {
  double abs = 1e-10;
  double rel = 1e-10;
};

/// Quartic Hermite-style interpolant of one accepted Dormand-Prince step,
/// valid on [t0, t0 + h]. Order 4, continuous with the solution at both ends.
template <int N>
struct DenseSegment {
  double t0 = 0.0;
  double h = 0.0;
  StateVec<N> r1, r2, r3, r4, r5;

  double t1() const { return t0 + h; }

  StateVec<N> eval(double t) const {
    const double th = (t - t0) / h;
    const double th1 = 1.0 - th;
    return r1 + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)));
  }
};

namespace detail {

// Dormand-Prince 5(4) coefficients (FSAL: stage 7 reuses row b).
inline constexpr double dp_c2 = 1.0 / 5, dp_c3 = 3.0 / 10, dp_c4 = 4.0 / 5,
                        dp_c5 = 8.0 / 9;
inline constexpr double dp_a21 = 1.0 / 5;
inline constexpr double dp_a31 = 3.0 / 40, dp_a32 = 9.0 / 40;
inline constexpr double dp_a41 = 44.0 / 45, dp_a42 = -56.0 / 15,
                        dp_a43 = 32.0 / 9;
inline constexpr double dp_a51 = 19372.0 / 6561, dp_a52 = -25360.0 / 2187,
                        dp_a53 = 64448.0 / 6561, dp_a54 = -212.0 / 729;
inline constexpr double dp_a61 = 9017.0 / 3168, dp_a62 = -355.0 / 33,
                        dp_a63 = 46732.0 / 5247, dp_a64 = 49.0 / 176,
                        dp_a65 = -5103.0 / 18656;
inline constexpr double dp_b1 = 35.0 / 384, dp_b3 = 500.0 / 1113,
                        dp_b4 = 125.0 / 192, dp_b5 = -2187.0 / 6784,
                        dp_b6 = 11.0 / 84;
inline constexpr double dp_e1 = 71.0 / 57600, dp_e3 = -71.0 / 16695,
                        dp_e4 = 71.0 / 1920, dp_e5 = -17253.0 / 339200,
                        dp_e6 = 22.0 / 525, dp_e7 = -1.0 / 40;
inline constexpr double dp_d1 = -12715105075.0 / 11282082432.0,
                        dp_d3 = 87487479700.0 / 32700410799.0,
                        dp_d4 = -10690763975.0 / 1880347072.0,
                        dp_d5 = 701980252875.0 / 199316789632.0,
                        dp_d6 = -1453857185.0 / 822651844.0,
                        dp_d7 = 69997945.0 / 29380423.0;

}  // namespace detail

/// Integrate y' = f(t, y) from t0 to t1 > t0 with the embedded
/// Dormand-Prince 5(4) pair, PI step-size control and dense output.
///
/// After every accepted step the observer is called with the step's dense
/// segment; returning true stops the run at the time the observer wrote to
/// its second argument (must lie inside the segment). Returns the final
/// state; *t_reached (if given) receives the final time.
template <int N, class RHS, class Observer>
StateVec<N> dopri5(RHS&& f, StateVec<N> y, double t0, double t1,
                   const StepTolerances& tol, Observer&& observe,
                   double* t_reached = nullptr) {
  using detail::dp_a21, detail::dp_a31, detail::dp_a32, detail::dp_a41,
      detail::dp_a42, detail::dp_a43, detail::dp_a51, detail::dp_a52,
      detail::dp_a53, detail::dp_a54, detail::dp_a61, detail::dp_a62,
      detail::dp_a63, detail::dp_a64, detail::dp_a65, detail::dp_b1,
      detail::dp_b3, detail::dp_b4, detail::dp_b5, detail::dp_b6;

  constexpr double safety = 0.9, fac_min = 0.2, fac_max = 10.0, beta = 0.04;
  constexpr double expo1 = 0.2 - 0.75 * beta;
  constexpr std::int64_t max_steps = 100'000'000;

  if (!(t1 > t0)) {
    if (t_reached) *t_reached = t0;
    return y;
  }

  const auto err_norm = [&](const StateVec<N>& y0, const StateVec<N>& y1,
                            const StateVec<N>& e) {
    double sum = 0.0;
    for (int i = 0; i < N; ++i) {
      const double sc =
          tol.abs + tol.rel * std::max(std::abs(y0[i]), std::abs(y1[i]));
      const double r = e[i] / sc;
      sum += r * r;
    }
    return std::sqrt(sum / N);
  };

  double t = t0;
  StateVec<N> k1 = f(t, y);

  // Starting step size: curvature probe along an Euler predictor.
  double h;
  {
    double d0 = 0.0, d1 = 0.0;
    for (int i = 0; i < N; ++i) {
      const double sc = tol.abs + tol.rel * std::abs(y[i]);
      d0 += (y[i] / sc) * (y[i] / sc);
      d1 += (k1[i] / sc) * (k1[i] / sc);
    }
    d0 = std::sqrt(d0 / N);
    d1 = std::sqrt(d1 / N);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, t1 - t0);
    StateVec<N> y1e = y + h0 * k1;
    StateVec<N> f1 = f(t + h0, y1e);
    double d2 = 0.0;
    for (int i = 0; i < N; ++i) {
      const double sc = tol.abs + tol.rel * std::abs(y[i]);
      const double r = (f1[i] - k1[i]) / sc;
      d2 += r * r;
    }
    d2 = std::sqrt(d2 / N) / h0;
    const double dm = std::max(d1, d2);
    const double h1 =
        (dm <= 1e-15) ? std::max(1e-6, h0 * 1e-3)
                      : std::pow(0.01 / dm, 0.2);
    h = std::min({100.0 * h0, h1, t1 - t0});
  }

  double fac_old = 1e-4;
  StateVec<N> k2, k3, k4, k5, k6, k7, y_next, err;

  for (std::int64_t step = 0; step < max_steps; ++step) {
    if (t >= t1) break;
    h = std::min(h, t1 - t);
    if (!(h > std::abs(t) * 1e-14) || !(t + h > t))
      throw StepFailure("step size underflow");

    k2 = f(t + detail::dp_c2 * h, y + h * (dp_a21 * k1));
    k3 = f(t + detail::dp_c3 * h, y + h * (dp_a31 * k1 + dp_a32 * k2));
    k4 = f(t + detail::dp_c4 * h,
           y + h * (dp_a41 * k1 + dp_a42 * k2 + dp_a43 * k3));
    k5 = f(t + detail::dp_c5 * h,
           y + h * (dp_a51 * k1 + dp_a52 * k2 + dp_a53 * k3 + dp_a54 * k4));
    k6 = f(t + h, y + h * (dp_a61 * k1 + dp_a62 * k2 + dp_a63 * k3 +
                           dp_a64 * k4 + dp_a65 * k5));
    y_next = y + h * (dp_b1 * k1 + dp_b3 * k3 + dp_b4 * k4 + dp_b5 * k5 +
                      dp_b6 * k6);
    k7 = f(t + h, y_next);

    err = h * (detail::dp_e1 * k1 + detail::dp_e3 * k3 + detail::dp_e4 * k4 +
               detail::dp_e5 * k5 + detail::dp_e6 * k6 + detail::dp_e7 * k7);
    double e = err_norm(y, y_next, err);

    if (!std::isfinite(e)) {
      h *= 0.1;
      continue;
    }
    if (e > 1.0) {  // reject; no growth right after a rejection
      const double fac = std::max(fac_min, safety * std::pow(e, -expo1));
      h *= fac;
      continue;
    }

    DenseSegment<N> seg;
    seg.t0 = t;
    seg.h = h;
    seg.r1 = y;
    seg.r2 = y_next - y;
    seg.r3 = h * k1 - seg.r2;
    seg.r4 = seg.r2 - h * k7 - seg.r3;
    seg.r5 = h * (detail::dp_d1 * k1 + detail::dp_d3 * k3 +
                  detail::dp_d4 * k4 + detail::dp_d5 * k5 +
                  detail::dp_d6 * k6 + detail::dp_d7 * k7);

    double t_stop = t + h;
    if (observe(static_cast<const DenseSegment<N>&>(seg), t_stop)) {
      if (t_reached) *t_reached = t_stop;
      return seg.eval(t_stop);
    }

    t += h;
    y = y_next;
    k1 = k7;  // FSAL

    const double fac11 = std::pow(e, expo1);
    double fac = fac11 / std::pow(fac_old, beta);
    fac = std::max(1.0 / fac_max, std::min(1.0 / fac_min, fac / safety));
    h = h / fac;
    fac_old = std::max(e, 1e-4);
  }

  if (t < t1) throw StepFailure("step budget exhausted");
  if (t_reached) *t_reached = t;
  return y;
}

/// Refine a root of g inside [a, b] (g(a), g(b) of opposite sign or either
/// endpoint already a root) by bisection sharpened with secant steps, until
/// |g| <= res_tol or the bracket collapses. Returns the refined abscissa.
template <class G>
double refine_root(G&& g, double a, double b, double res_tol = 1e-10) {
  double ga = g(a), gb = g(b);
  if (std::abs(ga) <= res_tol) return a;
  if (std::abs(gb) <= res_tol) return b;
  if (ga * gb > 0.0) return std::abs(ga) < std::abs(gb) ? a : b;
  for (int it = 0; it < 200; ++it) {
    // Secant candidate, clipped into the middle 98% of the bracket.
    double m = (gb != ga) ? b - gb * (b - a) / (gb - ga) : 0.5 * (a + b);
    const double lo = a + 0.01 * (b - a), hi = b - 0.01 * (b - a);
    if (!(m >= lo && m <= hi)) m = 0.5 * (a + b);
    const double gm = g(m);
    if (std::abs(gm) <= res_tol || b - a <= std::abs(m) * 1e-15 + 1e-300)
      return m;
    if (ga * gm <= 0.0) {
      b = m;
      gb = gm;
    } else {
      a = m;
      ga = gm;
    }
  }
  return 0.5 * (a + b);
}

}  // namespace blochopt
