#pragma once

#include <iosfwd>
#include <vector>

#include "optgait/dynamics.hpp"
#include "optgait/types.hpp"

namespace optgait {

struct IntegratorOptions {
  int substeps = 30;
};

/// One hybrid step: continuous flow on [0, tau] followed by the impact.
struct StepResult {
  State x_end_pre;                 // x(tau^-)
  State x_f;                       // impact_map(x_end_pre)
  std::vector<State> trajectory;   // substeps + 1 RK4 nodes
  std::vector<double> times;
  bool transversality_ok = false;
  /// Swing-foot velocity along the ground-line normal that points toward the
  /// hip, evaluated at tau^-. Negative when the foot approaches the ground.
  double normal_velocity = 0.0;
};

/// Derivatives of the step with respect to c = (x0, tau, a).
struct Sensitivities {
  Mat4 d_xf_d_x0;
  Vec4 d_xf_d_tau;
  Mat4x3 d_xf_d_a;
  /// Full derivative of the pre-impact state x(tau^-) with respect to c.
  Mat4x8 d_xpre_d_c;
  State x_end_pre;
  State x_f;

  Mat4x8 d_xf_d_c() const {
    Mat4x8 out;
    out << d_xf_d_x0, d_xf_d_tau, d_xf_d_a;
    return out;
  }
};

/// Classical RK4 with `substeps` equal steps on [0, tau]; the control is
/// sampled at the stage times. Throws IntegrationError on a non-finite state.
StepResult integrate_step(const TrajectoryPoint& c, const ModelParams& p,
                          const IntegratorOptions& opts = {});

/// Variational equations integrated with the same RK4 stages as the state, so
/// the result is the exact derivative of integrate_step's discrete map.
Sensitivities step_sensitivities(const TrajectoryPoint& c, const ModelParams& p,
                                 const IntegratorOptions& opts = {});

/// CSV columns: t,q1,q2,qd1,qd2,u
void write_trajectory_csv(std::ostream& os, const TrajectoryPoint& c, const StepResult& step);

}  // namespace optgait
