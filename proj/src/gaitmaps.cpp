#include "optgait/gaitmaps.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace optgait {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Vec2 contact_displacement(const State& x_pre, const ModelParams& p) {
  const FootPositions f = foot_positions(x_pre, p);
  return f.swing_foot - f.stance_foot;
}

// d(displacement)/d(q1, q2)
Eigen::Matrix2d displacement_jacobian(const State& x_pre, const ModelParams& p) {
  const double l = p.leg_length;
  Eigen::Matrix2d D;
  D << -l * std::cos(x_pre.q(0)), l * std::cos(x_pre.q(1)),
       -l * std::sin(x_pre.q(0)), l * std::sin(x_pre.q(1));
  return D;
}

double simpson_weight(int i, int n) {
  if (i == 0 || i == n) return 1.0;
  return (i % 2 == 1) ? 4.0 : 2.0;
}

}  // namespace

double unwrap_near(double angle, double reference) {
  return angle + kTwoPi * std::round((reference - angle) / kTwoPi);
}

OperatingPoint slope_and_speed_at(const State& x_pre, double tau, const ModelParams& p,
                                  std::optional<double> prev_gamma) {
  const Vec2 d = contact_displacement(x_pre, p);
  const double len = d.norm();
  if (!(len >= 1e-10 * p.leg_length))
    throw DegenerateStepError("contact points coincide at impact; slope undefined");
  double gamma = std::atan2(d(1), d(0));
  if (prev_gamma) gamma = unwrap_near(gamma, *prev_gamma);
  return {gamma, len / tau};
}

OperatingPoint slope_and_speed(const TrajectoryPoint& c, const ModelParams& p, std::optional<double> prev_gamma,
                               const IntegratorOptions& opts) {
  const StepResult step = integrate_step(c, p, opts);
  return slope_and_speed_at(step.x_end_pre, c.tau, p, prev_gamma);
}

Vec4 periodicity_residual(const TrajectoryPoint& c, const ModelParams& p, const IntegratorOptions& opts) {
  const StepResult step = integrate_step(c, p, opts);
  return step.x_f.to_vector() - flip_map(c.x0).to_vector();
}

double cost(const TrajectoryPoint& c, const IntegratorOptions& opts) {
  if (!(c.tau > 0.0)) throw DomainError("step duration must be positive");
  const int n = opts.substeps;
  auto u2 = [&](int i) {
    const double u = eval_control(c.a, c.tau * i / n, c.tau);
    return u * u;
  };
  const double h = c.tau / n;
  double sum = 0.0;
  int simpson_end = n;
  if (n % 2 == 1) {
    if (n < 3) return 0.5 * h * (u2(0) + u2(1));
    simpson_end = n - 3;
    // 3/8 rule on the last three intervals
    sum += 3.0 * h / 8.0 * (u2(n - 3) + 3.0 * u2(n - 2) + 3.0 * u2(n - 1) + u2(n));
  }
  double s = 0.0;
  for (int i = 0; i <= simpson_end; ++i) s += simpson_weight(i, simpson_end) * u2(i);
  return sum + h / 3.0 * s;
}

double cost_closed_form(const TrajectoryPoint& c) {
  const Vec3& a = c.a.a;
  return c.tau * (0.25 * a(0) * a(0) + 0.5 * a(1) * a(1) + 0.5 * a(2) * a(2));
}

TrajVec cost_gradient(const TrajectoryPoint& c) {
  const Vec3& a = c.a.a;
  TrajVec g = TrajVec::Zero();
  g(4) = 0.25 * a(0) * a(0) + 0.5 * a(1) * a(1) + 0.5 * a(2) * a(2);
  g(5) = 0.5 * c.tau * a(0);
  g(6) = c.tau * a(1);
  g(7) = c.tau * a(2);
  return g;
}

Vec2 operating_residual(const TrajectoryPoint& c, const OperatingPoint& op, const ModelParams& p,
                        std::optional<double> prev_gamma, const IntegratorOptions& opts) {
  return slope_and_speed(c, p, prev_gamma, opts).to_vector() - op.to_vector();
}

GaitEvaluation evaluate_gait(const TrajectoryPoint& c, const ModelParams& p, std::optional<double> prev_gamma,
                             const IntegratorOptions& opts) {
  const Sensitivities s = step_sensitivities(c, p, opts);

  GaitEvaluation g;
  g.c = c;
  g.x_end_pre = s.x_end_pre;
  g.x_f = s.x_f;
  g.periodicity = s.x_f.to_vector() - flip_map(c.x0).to_vector();
  g.actual = slope_and_speed_at(s.x_end_pre, c.tau, p, prev_gamma);
  g.cost = cost(c, opts);
  g.cost_gradient = cost_gradient(c);

  g.dP_dc = s.d_xf_d_c();
  g.dP_dc.leftCols<4>() -= flip_matrix();

  const Vec2 d = contact_displacement(s.x_end_pre, p);
  const double len2 = d.squaredNorm();
  const double len = std::sqrt(len2);
  const Eigen::Matrix<double, 2, kTrajDim> dd_dc = displacement_jacobian(s.x_end_pre, p) * s.d_xpre_d_c.topRows<2>();
  const Eigen::RowVector2d dgamma_dd(-d(1) / len2, d(0) / len2);
  const Eigen::RowVector2d dv_dd = d.transpose() / (len * c.tau);
  g.dPhi_dc.row(0) = dgamma_dd * dd_dc;
  g.dPhi_dc.row(1) = dv_dd * dd_dc;
  g.dPhi_dc(1, 4) -= len / (c.tau * c.tau);

  g.transversality_ok = impact_is_transversal(s.x_end_pre, p);
  return g;
}

TrajVec stationarity_residual(const GaitEvaluation& g, const MultVec& lambda) {
  return g.cost_gradient + g.dP_dc.transpose() * lambda.head<4>() + g.dPhi_dc.transpose() * lambda.tail<2>();
}

FocVec foc_residual(const GaitEvaluation& g, const MultVec& lambda, const OperatingPoint& p_des) {
  FocVec r;
  r << g.periodicity, g.actual.to_vector() - p_des.to_vector(), stationarity_residual(g, lambda);
  return r;
}

FocVec foc_residual(const TrajectoryPoint& c, const MultVec& lambda, const OperatingPoint& p_des,
                    const ModelParams& p, std::optional<double> prev_gamma, const IntegratorOptions& opts) {
  return foc_residual(evaluate_gait(c, p, prev_gamma, opts), lambda, p_des);
}

HomotopyMap::HomotopyMap(const ModelParams& model, const OperatingPoint& p_des, const AugmentedPoint& seed,
                         const IntegratorOptions& opts, std::optional<double> seed_gamma_reference)
    : model_(model), p_des_(p_des), seed_(seed), opts_(opts) {
  const GaitEvaluation g = evaluate_gait(seed.c, model_, seed_gamma_reference, opts_);
  seed_op_ = g.actual;
  seed_residual_ = foc_residual(g, seed.lambda, p_des_);
  gamma_ref_ = g.actual.gamma;
}

GaitEvaluation HomotopyMap::evaluate(const TrajectoryPoint& c) const {
  return evaluate_gait(c, model_, gamma_ref_, opts_);
}

FocVec HomotopyMap::residual(const GaitEvaluation& g, const AugmentedPoint& z) const {
  return foc_residual(g, z.lambda, p_des_) - z.epsilon * seed_residual_;
}

FocVec HomotopyMap::residual(const AugmentedPoint& z) const {
  return residual(evaluate(z.c), z);
}

OperatingPoint HomotopyMap::scheduled_operating_point(double epsilon) const {
  return OperatingPoint::from_vector((1.0 - epsilon) * p_des_.to_vector() + epsilon * seed_op_.to_vector());
}

FocJacobian HomotopyMap::jacobian(const GaitEvaluation& g, const AugmentedPoint& z) const {
  FocJacobian J = FocJacobian::Zero();
  J.block<4, kTrajDim>(0, 0) = g.dP_dc;
  J.block<2, kTrajDim>(4, 0) = g.dPhi_dc;
  J.block<kTrajDim, 4>(6, kTrajDim) = g.dP_dc.transpose();
  J.block<kTrajDim, 2>(6, kTrajDim + 4) = g.dPhi_dc.transpose();
  J.col(kAugmentedDim - 1) = -seed_residual_;

  const TrajVec c0 = z.c.to_vector();
  for (int i = 0; i < kTrajDim; ++i) {
    const double h = 1e-5 * std::max(1.0, std::abs(c0(i)));
    TrajVec cp = c0, cm = c0;
    cp(i) += h;
    cm(i) -= h;
    const TrajVec sp = stationarity_residual(evaluate(TrajectoryPoint::from_vector(cp)), z.lambda);
    const TrajVec sm = stationarity_residual(evaluate(TrajectoryPoint::from_vector(cm)), z.lambda);
    J.block<kTrajDim, 1>(6, i) = (sp - sm) / (cp(i) - cm(i));
  }
  if (!J.allFinite()) throw NumericalError("non-finite homotopy Jacobian entry");
  return J;
}

FocJacobian HomotopyMap::jacobian(const AugmentedPoint& z) const {
  return jacobian(evaluate(z.c), z);
}

}  // namespace optgait
