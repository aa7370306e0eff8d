#pragma once

// Compass-gait walker: three point masses (hip plus one on each leg), a single
// hip actuator, plastic foot-ground impact.
//
// Coordinates: stance foot pinned at the origin, q1 is the stance leg angle and
// q2 the swing leg angle, both measured counterclockwise from the upward
// vertical at the respective foot. The hip sits at l0*(-sin q1, cos q1) and
// the swing foot at hip + l0*(sin q2, -cos q2). Hip torque enters the joint
// equations through B = (-1, +1).

#include "optgait/types.hpp"

namespace optgait {

/// Scaling quantities derived from the physical parameters.
struct Scales {
  double m0;  // 2 m_l + m_H
  double t0;  // sqrt(l0 / g0)
  double v0;  // l0 / t0
  double u0;  // m0 l0^2 / t0^2
  double J0;  // u0^2 t0
};

struct ModelParams {
  double leg_length = 1.0;        // l0
  double hip_mass = 10.0;         // m_H
  double leg_mass = 1.0;          // m_l
  double leg_com_from_hip = 0.5;  // b_eff, distance of each leg mass from the hip
  double gravity = 9.81;          // g0

  /// Throws DomainError if any invariant is violated.
  void validate() const;
  Scales scales() const;
  /// Same walker with l0 = g0 = m0 = 1.
  ModelParams nondimensional() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// u(t) = a1/2 + a2 cos(2 pi t / tau) + a3 sin(2 pi t / tau).
double eval_control(const ControlCoeffs& a, double t, double tau);
/// Partial derivatives of u with respect to (a1, a2, a3).
Vec3 control_basis(double t, double tau);

/// Joint-space terms M(q) qdd + h(q, qd) = B u.
struct JointTerms {
  Mat2 mass;
  Vec2 bias;  // Coriolis + gravity
};
JointTerms joint_terms(const State& x, const ModelParams& p);
inline const Vec2 kTorqueMap{-1.0, 1.0};

/// (qd, qdd) for hip torque u.
Vec4 vector_field(const State& x, double u, const ModelParams& p);

struct VectorFieldJacobian {
  Mat4 d_x;
  Vec4 d_u;
};
VectorFieldJacobian vector_field_jacobian(const State& x, double u, const ModelParams& p);

double kinetic_energy(const State& x, const ModelParams& p);
double potential_energy(const State& x, const ModelParams& p);
inline double total_energy(const State& x, const ModelParams& p) {
  return kinetic_energy(x, p) + potential_energy(x, p);
}

/// Plastic impact at the swing foot. Positions are unchanged and the legs keep
/// their labels; relabeling is flip_map's job.
State impact_map(const State& x_pre, const ModelParams& p);
Mat4 impact_jacobian(const State& x_pre, const ModelParams& p);

/// Exchanges the roles of the two legs.
State flip_map(const State& x);
const Mat4& flip_matrix();

struct FootPositions {
  Vec2 stance_foot;
  Vec2 hip;
  Vec2 swing_foot;
};
FootPositions foot_positions(const State& x, const ModelParams& p);
Vec2 swing_foot_velocity(const State& x, const ModelParams& p);

/// Swing-foot velocity along the unit normal of the stance-to-swing foot line,
/// the normal taken on the hip's side. Negative means the foot approaches the
/// ground line. NaN when the feet coincide.
double impact_normal_velocity(const State& x, const ModelParams& p);
/// Transversality gate: normal velocity below -1e-8 v0.
bool impact_is_transversal(const State& x, const ModelParams& p);

}  // namespace optgait
