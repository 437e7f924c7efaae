#pragma once

#include <stdexcept>
#include <string>

namespace blochopt {

/// Base class of all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Parameter triple violates its admissibility constraints.
struct InvalidParams : Error {
  using Error::Error;
};

/// State left the polar chart band phi in [phi_min, pi - phi_min].
struct PolarSingularity : Error {
  using Error::Error;
};

/// Order-zero control undefined: Q = sqrt(p_phi^2 + p_theta^2 cot^2 phi) <= q_min.
struct SwitchingSurface : Error {
  using Error::Error;
};

/// Operation requires the integrable case gamma_minus = 0.
struct NotIntegrable : Error {
  using Error::Error;
};

/// Adaptive step size underflowed.
struct StepFailure : Error {
  using Error::Error;
};

/// No singular parallels / barrier band: |Gamma - gamma_plus| too small.
struct NoBarrier : Error {
  using Error::Error;
};

/// Operation requires a compact (periodic) extremal.
struct NotPeriodic : Error {
  using Error::Error;
};

/// Closed-form geodesic phase constant unsolvable for the given data.
struct BranchError : Error {
  using Error::Error;
};

/// Curvature pole at lambda = 1, phi = pi/2.
struct CurvatureBlowup : Error {
  using Error::Error;
};

/// Operation requires Gamma != gamma_plus.
struct GrusinDegenerate : Error {
  using Error::Error;
};

/// Argument outside the operation's mathematical domain.
struct DomainError : Error {
  using Error::Error;
};

/// Scenario configuration file or flags invalid.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace blochopt
