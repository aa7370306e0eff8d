#include "oracles.hpp"

#include <cmath>
#include <numbers>

namespace oracle {

namespace {

// Positions in coordinates (foot_x, foot_y, q1, q2) with the leg-1 foot at
// (foot_x, foot_y). Columns: leg-1 mass, hip, leg-2 mass, leg-2 foot.
Eigen::Matrix<double, 2, 4> extended_positions(const Vec4& qe, const ModelParams& p) {
  const double l = p.leg_length, b = p.leg_com_from_hip;
  const Vec2 foot(qe(0), qe(1));
  const Vec2 up1(-std::sin(qe(2)), std::cos(qe(2)));   // leg 1, foot to hip
  const Vec2 down2(std::sin(qe(3)), -std::cos(qe(3)));  // leg 2, hip to foot
  const Vec2 hip = foot + l * up1;
  Eigen::Matrix<double, 2, 4> out;
  out.col(0) = hip - b * up1;
  out.col(1) = hip;
  out.col(2) = hip + b * down2;
  out.col(3) = hip + l * down2;
  return out;
}

Vec3 masses(const ModelParams& p) { return {p.leg_mass, p.hip_mass, p.leg_mass}; }

// d(position of column k)/d(qe), 2 x 4, Richardson central differences.
Eigen::Matrix<double, 2, 4> position_jacobian(const Vec4& qe, int k, const ModelParams& p) {
  Eigen::Matrix<double, 2, 4> J;
  for (int i = 0; i < 4; ++i) {
    auto d = [&](double h) {
      Vec4 a = qe, b = qe;
      a(i) += h;
      b(i) -= h;
      return Vec2((extended_positions(a, p).col(k) - extended_positions(b, p).col(k)) / (2.0 * h));
    };
    const double h = 1e-3;
    J.col(i) = (4.0 * d(h / 2) - d(h)) / 3.0;
  }
  return J;
}

Eigen::Matrix4d extended_mass_matrix(const Vec4& qe, const ModelParams& p) {
  Eigen::Matrix4d D = Eigen::Matrix4d::Zero();
  const Vec3 m = masses(p);
  for (int k = 0; k < 3; ++k) {
    const auto J = position_jacobian(qe, k, p);
    D += m(k) * J.transpose() * J;
  }
  return D;
}

double kinetic(const Vec2& q, const Vec2& qd, const ModelParams& p) {
  const Vec4 qe(0.0, 0.0, q(0), q(1));
  const Vec4 qed(0.0, 0.0, qd(0), qd(1));
  double t = 0.0;
  const Vec3 m = masses(p);
  for (int k = 0; k < 3; ++k) t += 0.5 * m(k) * (position_jacobian(qe, k, p) * qed).squaredNorm();
  return t;
}

double potential(const Vec2& q, const ModelParams& p) {
  const auto pos = extended_positions(Vec4(0.0, 0.0, q(0), q(1)), p);
  const Vec3 m = masses(p);
  return p.gravity * (m(0) * pos(1, 0) + m(1) * pos(1, 1) + m(2) * pos(1, 2));
}

template <class F>
double richardson(F f, double h) {
  const double d1 = (f(h) - f(-h)) / (2.0 * h);
  const double d2 = (f(h / 2) - f(-h / 2)) / h;
  return (4.0 * d2 - d1) / 3.0;
}

}  // namespace

PointMasses point_masses(const Vec2& q, const ModelParams& p) {
  PointMasses pm;
  pm.pos = extended_positions(Vec4(0.0, 0.0, q(0), q(1)), p).leftCols<3>();
  pm.mass = masses(p);
  return pm;
}

double lagrangian(const Vec2& q, const Vec2& qd, const ModelParams& p) { return kinetic(q, qd, p) - potential(q, p); }

Vec2 lagrange_acceleration(const State& x, double u, const ModelParams& p) {
  const Vec2 q = x.q, qd = x.qdot;
  // T is quadratic in qd, so polarization gives the mass matrix exactly.
  auto T = [&](const Vec2& qq, const Vec2& v) { return kinetic(qq, v, p); };
  Mat2 M;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const Vec2 ei = Vec2::Unit(i), ej = Vec2::Unit(j);
      M(i, j) = i == j ? 2.0 * T(q, ei) : T(q, ei + ej) - T(q, ei) - T(q, ej);
    }
  // Generalized momentum dL/dqd, exact for a quadratic form.
  auto momentum = [&](const Vec2& qq) {
    Vec2 m;
    for (int i = 0; i < 2; ++i) m(i) = 0.5 * (T(qq, qd + Vec2::Unit(i)) - T(qq, qd - Vec2::Unit(i)));
    return m;
  };
  Mat2 dp_dq;
  Vec2 dL_dq;
  for (int k = 0; k < 2; ++k) {
    for (int i = 0; i < 2; ++i)
      dp_dq(i, k) = richardson([&](double h) { return momentum(q + h * Vec2::Unit(k))(i); }, 1e-3);
    dL_dq(k) = richardson([&](double h) { return lagrangian(q + h * Vec2::Unit(k), qd, p); }, 1e-3);
  }
  const Vec2 Q(-u, u);
  return M.ldlt().solve(dL_dq - dp_dq * qd + Q);
}

Vec2 extended_impact_velocity(const State& x, const ModelParams& p) {
  const Vec4 qe(0.0, 0.0, x.q(0), x.q(1));
  const Eigen::Matrix4d D = extended_mass_matrix(qe, p);
  const auto E = position_jacobian(qe, 3, p);
  Eigen::Matrix<double, 6, 6> A = Eigen::Matrix<double, 6, 6>::Zero();
  A.topLeftCorner<4, 4>() = D;
  A.topRightCorner<4, 2>() = -E.transpose();
  A.bottomLeftCorner<2, 4>() = E;
  Eigen::Matrix<double, 6, 1> rhs = Eigen::Matrix<double, 6, 1>::Zero();
  rhs.head<4>() = D * Vec4(0.0, 0.0, x.qdot(0), x.qdot(1));
  const Eigen::Matrix<double, 6, 1> sol = A.fullPivLu().solve(rhs);
  return sol.segment<2>(2);
}

double point_mass_kinetic_energy(const State& x, const ModelParams& p) { return kinetic(x.q, x.qdot, p); }

State rk4(const TrajectoryPoint& c, const ModelParams& p, int n) {
  const double tau = c.tau, dt = tau / n, w = 2.0 * std::numbers::pi / tau;
  auto u = [&](double t) { return 0.5 * c.a.a(0) + c.a.a(1) * std::cos(w * t) + c.a.a(2) * std::sin(w * t); };
  auto f = [&](const Vec4& y, double t) { return vector_field(State::from_vector(y), u(t), p); };
  Vec4 y = c.x0.to_vector();
  for (int i = 0; i < n; ++i) {
    const double t = i * dt;
    const Vec4 k1 = f(y, t);
    const Vec4 k2 = f(y + 0.5 * dt * k1, t + 0.5 * dt);
    const Vec4 k3 = f(y + 0.5 * dt * k2, t + 0.5 * dt);
    const Vec4 k4 = f(y + dt * k3, t + dt);
    y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return State::from_vector(y);
}

State step_doubled_rk4(const TrajectoryPoint& c, const ModelParams& p, int n) {
  const Vec4 coarse = rk4(c, p, n).to_vector();
  const Vec4 fine = rk4(c, p, 2 * n).to_vector();
  return State::from_vector((16.0 * fine - coarse) / 15.0);
}

Eigen::VectorXd fd_column(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                          int i, double h) {
  auto central = [&](double s) {
    Eigen::VectorXd a = x, b = x;
    a(i) += s;
    b(i) -= s;
    return Eigen::VectorXd((f(a) - f(b)) / (2.0 * s));
  };
  return (4.0 * central(h / 2) - central(h)) / 3.0;
}

Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double rel_step) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd J(f0.size(), x.size());
  for (int i = 0; i < x.size(); ++i) J.col(i) = fd_column(f, x, i, rel_step * std::max(1.0, std::abs(x(i))));
  return J;
}

double entry_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor) {
  double worst = 0.0;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / std::max(std::abs(b(i, j)), floor));
  return worst;
}

bool entries_match(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double rel, double abs) {
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) {
      const double d = std::abs(a(i, j) - b(i, j));
      if (!(d <= rel * std::abs(b(i, j)) || d <= abs)) return false;
    }
  return true;
}

ModelParams model() { return ModelParams{}.nondimensional(); }

const TrajectoryPoint& passive_seed() {
  static const TrajectoryPoint seed =
      find_passive_gait(State(0.06, -0.9, -0.6, 0.36), 1.3, model());
  return seed;
}

TrajectoryPoint random_point(std::mt19937& rng, double torque) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  TrajectoryPoint c = passive_seed();
  c.x0.q(0) += 0.02 * unit(rng);
  c.x0.q(1) += 0.02 * unit(rng);
  c.x0.qdot(0) += 0.02 * unit(rng);
  c.x0.qdot(1) += 0.02 * unit(rng);
  c.tau += 0.05 * unit(rng);
  for (int i = 0; i < 3; ++i) c.a.a(i) = torque * unit(rng);
  return c;
}

}  // namespace oracle
