#include "optgait/dynamics.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace optgait {

namespace {

// Constants of the closed-form equations of motion, all functions of the
// parameters only.
struct Coefficients {
  double mH, m, l, b, rho, g;
  double I1;   // M11
  double I2;   // M22
  double K;    // coupling, M12 = -K cos(q1 - q2)
  double G1;   // stance gravity moment
  double G2;   // swing gravity moment
};

Coefficients coefficients(const ModelParams& p) {
  Coefficients c{};
  c.mH = p.hip_mass;
  c.m = p.leg_mass;
  c.l = p.leg_length;
  c.b = p.leg_com_from_hip;
  c.rho = c.l - c.b;
  c.g = p.gravity;
  c.I1 = c.m * c.rho * c.rho + (c.mH + c.m) * c.l * c.l;
  c.I2 = c.m * c.b * c.b;
  c.K = c.m * c.l * c.b;
  c.G1 = c.g * (c.m * c.rho + (c.mH + c.m) * c.l);
  c.G2 = c.g * c.m * c.b;
  return c;
}

// Impact momentum matrices, Qplus * qd_plus = Qminus * qd_minus. Rows are
// angular momentum of the whole walker about the impacting foot and of the
// trailing leg about the hip.
struct ImpactMatrices {
  Mat2 minus;
  Mat2 plus;
  Mat2 d_minus;  // derivative with respect to cos(q1 - q2)
  Mat2 d_plus;
};

ImpactMatrices impact_matrices(const Coefficients& k, double cd) {
  const double mrb = k.m * k.rho * k.b;
  const double cross = k.m * k.rho * k.l + k.mH * k.l * k.l + k.m * k.rho * k.l;
  ImpactMatrices q;
  q.minus << cross * cd - mrb, -mrb,
             -mrb, 0.0;
  q.plus << k.m * k.b * (k.b - k.l * cd), k.m * (k.l * k.l - k.b * k.l * cd + k.rho * k.rho) + k.mH * k.l * k.l,
            k.m * k.b * k.b, -k.K * cd;
  q.d_minus << cross, 0.0,
               0.0, 0.0;
  q.d_plus << -k.K, -k.K,
              0.0, -k.K;
  return q;
}

}  // namespace

void ModelParams::validate() const {
  auto fail = [](const char* msg) { throw DomainError(std::string("invalid model parameters: ") + msg); };
  if (!(std::isfinite(leg_length) && std::isfinite(hip_mass) && std::isfinite(leg_mass) &&
        std::isfinite(leg_com_from_hip) && std::isfinite(gravity)))
    fail("non-finite value");
  if (!(leg_length > 0.0)) fail("leg_length must be positive");
  if (!(gravity > 0.0)) fail("gravity must be positive");
  if (!(hip_mass >= 0.0)) fail("hip_mass must be non-negative");
  if (!(leg_mass > 0.0)) fail("leg_mass must be positive");
  if (!(leg_com_from_hip > 0.0 && leg_com_from_hip <= leg_length))
    fail("leg_com_from_hip must lie in (0, leg_length]");
}

Scales ModelParams::scales() const {
  Scales s{};
  s.m0 = 2.0 * leg_mass + hip_mass;
  s.t0 = std::sqrt(leg_length / gravity);
  s.v0 = leg_length / s.t0;
  s.u0 = s.m0 * leg_length * leg_length / (s.t0 * s.t0);
  s.J0 = s.u0 * s.u0 * s.t0;
  return s;
}

ModelParams ModelParams::nondimensional() const {
  validate();
  const double m0 = 2.0 * leg_mass + hip_mass;
  ModelParams nd;
  nd.leg_length = 1.0;
  nd.gravity = 1.0;
  nd.hip_mass = hip_mass / m0;
  nd.leg_mass = leg_mass / m0;
  nd.leg_com_from_hip = leg_com_from_hip / leg_length;
  return nd;
}

Vec3 control_basis(double t, double tau) {
  if (!(tau > 0.0)) throw DomainError("control evaluated with non-positive step duration");
  const double w = 2.0 * std::numbers::pi * t / tau;
  return {0.5, std::cos(w), std::sin(w)};
}

double eval_control(const ControlCoeffs& a, double t, double tau) {
  return control_basis(t, tau).dot(a.a);
}

JointTerms joint_terms(const State& x, const ModelParams& p) {
  const Coefficients k = coefficients(p);
  const double d = x.q(0) - x.q(1);
  const double sd = std::sin(d);
  const double cd = std::cos(d);
  JointTerms t;
  t.mass << k.I1, -k.K * cd,
            -k.K * cd, k.I2;
  t.bias << -k.K * sd * x.qdot(1) * x.qdot(1) - k.G1 * std::sin(x.q(0)),
             k.K * sd * x.qdot(0) * x.qdot(0) + k.G2 * std::sin(x.q(1));
  return t;
}

Vec4 vector_field(const State& x, double u, const ModelParams& p) {
  const JointTerms t = joint_terms(x, p);
  const Vec2 qdd = t.mass.inverse() * (kTorqueMap * u - t.bias);
  Vec4 out;
  out << x.qdot, qdd;
  return out;
}

VectorFieldJacobian vector_field_jacobian(const State& x, double u, const ModelParams& p) {
  const Coefficients k = coefficients(p);
  const double d = x.q(0) - x.q(1);
  const double sd = std::sin(d);
  const double cd = std::cos(d);
  const double w1 = x.qdot(0);
  const double w2 = x.qdot(1);

  Mat2 M;
  M << k.I1, -k.K * cd, -k.K * cd, k.I2;
  const Mat2 Minv = M.inverse();
  const Vec2 h(-k.K * sd * w2 * w2 - k.G1 * std::sin(x.q(0)), k.K * sd * w1 * w1 + k.G2 * std::sin(x.q(1)));
  const Vec2 qdd = Minv * (kTorqueMap * u - h);

  // dM/dq1 = -dM/dq2, only off-diagonal entries depend on q.
  Mat2 dM_dq1;
  dM_dq1 << 0.0, k.K * sd, k.K * sd, 0.0;
  const Vec2 dh_dq1(-k.K * cd * w2 * w2 - k.G1 * std::cos(x.q(0)), k.K * cd * w1 * w1);
  const Vec2 dh_dq2(k.K * cd * w2 * w2, -k.K * cd * w1 * w1 + k.G2 * std::cos(x.q(1)));
  const Vec2 dh_dw1(0.0, 2.0 * k.K * sd * w1);
  const Vec2 dh_dw2(-2.0 * k.K * sd * w2, 0.0);

  VectorFieldJacobian jac;
  jac.d_x.setZero();
  jac.d_x(0, 2) = 1.0;
  jac.d_x(1, 3) = 1.0;
  jac.d_x.block<2, 1>(2, 0) = -Minv * (dM_dq1 * qdd + dh_dq1);
  jac.d_x.block<2, 1>(2, 1) = -Minv * (-dM_dq1 * qdd + dh_dq2);
  jac.d_x.block<2, 1>(2, 2) = -Minv * dh_dw1;
  jac.d_x.block<2, 1>(2, 3) = -Minv * dh_dw2;
  jac.d_u << 0.0, 0.0, Minv * kTorqueMap;
  return jac;
}

double kinetic_energy(const State& x, const ModelParams& p) {
  return 0.5 * x.qdot.dot(joint_terms(x, p).mass * x.qdot);
}

double potential_energy(const State& x, const ModelParams& p) {
  const Coefficients k = coefficients(p);
  return k.G1 * std::cos(x.q(0)) - k.G2 * std::cos(x.q(1));
}

State impact_map(const State& x_pre, const ModelParams& p) {
  const Coefficients k = coefficients(p);
  const ImpactMatrices Q = impact_matrices(k, std::cos(x_pre.q(0) - x_pre.q(1)));
  const Eigen::PartialPivLU<Mat2> lu(Q.plus);
  const double det = Q.plus.determinant();
  if (!std::isfinite(det) || std::abs(det) < 1e-14)
    throw NumericalError("singular impact matrix");
  return {x_pre.q, lu.solve(Q.minus * x_pre.qdot)};
}

Mat4 impact_jacobian(const State& x_pre, const ModelParams& p) {
  const Coefficients k = coefficients(p);
  const double d = x_pre.q(0) - x_pre.q(1);
  const ImpactMatrices Q = impact_matrices(k, std::cos(d));
  const double det = Q.plus.determinant();
  if (!std::isfinite(det) || std::abs(det) < 1e-14)
    throw NumericalError("singular impact matrix");
  const Mat2 Pinv = Q.plus.inverse();
  const Vec2 w_plus = Pinv * Q.minus * x_pre.qdot;

  // d cos(d)/dq1 = -sin(d), d cos(d)/dq2 = sin(d).
  const Vec2 dw_dcd = Pinv * (Q.d_minus * x_pre.qdot - Q.d_plus * w_plus);
  const double sd = std::sin(d);

  Mat4 J = Mat4::Zero();
  J.topLeftCorner<2, 2>().setIdentity();
  J.block<2, 1>(2, 0) = -sd * dw_dcd;
  J.block<2, 1>(2, 1) = sd * dw_dcd;
  J.bottomRightCorner<2, 2>() = Pinv * Q.minus;
  return J;
}

State flip_map(const State& x) {
  return {x.q(1), x.q(0), x.qdot(1), x.qdot(0)};
}

const Mat4& flip_matrix() {
  static const Mat4 F = [] {
    Mat4 m = Mat4::Zero();
    m(0, 1) = m(1, 0) = m(2, 3) = m(3, 2) = 1.0;
    return m;
  }();
  return F;
}

FootPositions foot_positions(const State& x, const ModelParams& p) {
  const double l = p.leg_length;
  FootPositions f;
  f.stance_foot = Vec2::Zero();
  f.hip = l * Vec2(-std::sin(x.q(0)), std::cos(x.q(0)));
  f.swing_foot = f.hip + l * Vec2(std::sin(x.q(1)), -std::cos(x.q(1)));
  return f;
}

Vec2 swing_foot_velocity(const State& x, const ModelParams& p) {
  const double l = p.leg_length;
  return l * Vec2(-std::cos(x.q(0)), -std::sin(x.q(0))) * x.qdot(0) +
         l * Vec2(std::cos(x.q(1)), std::sin(x.q(1))) * x.qdot(1);
}

double impact_normal_velocity(const State& x, const ModelParams& p) {
  const FootPositions f = foot_positions(x, p);
  const Vec2 d = f.swing_foot - f.stance_foot;
  const double len = d.norm();
  if (len < 1e-10 * p.leg_length) return std::numeric_limits<double>::quiet_NaN();
  Vec2 n(-d(1) / len, d(0) / len);
  if (n.dot(f.hip - f.stance_foot) < 0.0) n = -n;
  return swing_foot_velocity(x, p).dot(n);
}

bool impact_is_transversal(const State& x, const ModelParams& p) {
  return impact_normal_velocity(x, p) < -1e-8 * p.scales().v0;
}

}  // namespace optgait
