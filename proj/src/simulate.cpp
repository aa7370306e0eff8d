#include "optgait/simulate.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace optgait {

namespace {

// Integration runs on normalized time s = t / tau in [0, 1], where
// dx/ds = tau * f(x, u(s)). RK4 is invariant under linear time scaling, so
// this reproduces the t-grid with step tau / N, while tau enters only as a
// multiplier of the vector field.
double control_at(const Vec3& a, double s) {
  return control_basis(s, 1.0).dot(a);
}

void check_preconditions(const TrajectoryPoint& c, const IntegratorOptions& opts) {
  if (!(c.tau > 0.0) || !std::isfinite(c.tau)) throw DomainError("step duration must be positive");
  if (opts.substeps < 1) throw DomainError("substeps must be at least 1");
  if (!c.x0.finite() || !c.a.a.allFinite()) throw DomainError("non-finite trajectory point");
}

}  // namespace

StepResult integrate_step(const TrajectoryPoint& c, const ModelParams& p, const IntegratorOptions& opts) {
  check_preconditions(c, opts);
  const int N = opts.substeps;
  const double ds = 1.0 / N;
  const double tau = c.tau;
  const Vec3& a = c.a.a;

  StepResult r;
  r.trajectory.reserve(N + 1);
  r.times.reserve(N + 1);
  Vec4 x = c.x0.to_vector();
  r.trajectory.push_back(c.x0);
  r.times.push_back(0.0);

  auto rhs = [&](const Vec4& y, double s) -> Vec4 {
    return tau * vector_field(State::from_vector(y), control_at(a, s), p);
  };

  for (int i = 0; i < N; ++i) {
    const double s = i * ds;
    const Vec4 k1 = rhs(x, s);
    const Vec4 k2 = rhs(x + 0.5 * ds * k1, s + 0.5 * ds);
    const Vec4 k3 = rhs(x + 0.5 * ds * k2, s + 0.5 * ds);
    const Vec4 k4 = rhs(x + ds * k3, s + ds);
    x += (ds / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite()) throw IntegrationError("integration blow-up", i);
    r.trajectory.push_back(State::from_vector(x));
    r.times.push_back(tau * (i + 1) * ds);
  }

  r.x_end_pre = r.trajectory.back();
  r.x_f = impact_map(r.x_end_pre, p);
  r.normal_velocity = impact_normal_velocity(r.x_end_pre, p);
  r.transversality_ok = impact_is_transversal(r.x_end_pre, p);
  return r;
}

Sensitivities step_sensitivities(const TrajectoryPoint& c, const ModelParams& p, const IntegratorOptions& opts) {
  check_preconditions(c, opts);
  const int N = opts.substeps;
  const double ds = 1.0 / N;
  const double tau = c.tau;
  const Vec3& a = c.a.a;

  Vec4 x = c.x0.to_vector();
  Mat4x8 S = Mat4x8::Zero();
  S.leftCols<4>().setIdentity();

  // Stage derivative of the augmented system (x, dx/dc).
  auto rhs = [&](const Vec4& y, const Mat4x8& Y, double s, Vec4& ky, Mat4x8& kY) {
    const State st = State::from_vector(y);
    const double u = control_at(a, s);
    const Vec4 f = vector_field(st, u, p);
    const VectorFieldJacobian J = vector_field_jacobian(st, u, p);
    ky = tau * f;
    kY = tau * J.d_x * Y;
    kY.col(4) += f;
    kY.rightCols<3>() += tau * J.d_u * control_basis(s, 1.0).transpose();
  };

  Vec4 k1, k2, k3, k4;
  Mat4x8 K1, K2, K3, K4;
  for (int i = 0; i < N; ++i) {
    const double s = i * ds;
    rhs(x, S, s, k1, K1);
    rhs(x + 0.5 * ds * k1, S + 0.5 * ds * K1, s + 0.5 * ds, k2, K2);
    rhs(x + 0.5 * ds * k2, S + 0.5 * ds * K2, s + 0.5 * ds, k3, K3);
    rhs(x + ds * k3, S + ds * K3, s + ds, k4, K4);
    x += (ds / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    S += (ds / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4);
    if (!x.allFinite() || !S.allFinite()) throw IntegrationError("variational integration blow-up", i);
  }

  Sensitivities out;
  out.x_end_pre = State::from_vector(x);
  out.x_f = impact_map(out.x_end_pre, p);
  out.d_xpre_d_c = S;
  const Mat4x8 D = impact_jacobian(out.x_end_pre, p) * S;
  out.d_xf_d_x0 = D.leftCols<4>();
  out.d_xf_d_tau = D.col(4);
  out.d_xf_d_a = D.rightCols<3>();
  return out;
}

void write_trajectory_csv(std::ostream& os, const TrajectoryPoint& c, const StepResult& step) {
  os << "t,q1,q2,qd1,qd2,u\n";
  char buf[256];
  for (std::size_t i = 0; i < step.trajectory.size(); ++i) {
    const State& x = step.trajectory[i];
    const double t = step.times[i];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", t, x.q(0), x.q(1), x.qdot(0),
                  x.qdot(1), eval_control(c.a, t, c.tau));
    os << buf;
  }
}

}  // namespace optgait
