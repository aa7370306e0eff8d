#pragma once

#include <optional>

#include "optgait/dynamics.hpp"
#include "optgait/simulate.hpp"
#include "optgait/types.hpp"

namespace optgait {

/// Representative of angle + 2 pi k closest to reference.
double unwrap_near(double angle, double reference);

/// P(c) = x_f - flip(x0).
Vec4 periodicity_residual(const TrajectoryPoint& c, const ModelParams& p, const IntegratorOptions& opts = {});

/// Slope and speed of the displacement between the contact points over the
/// step, taken from the pre-impact configuration. With prev_gamma the slope is
/// unwrapped to the branch nearest it.
OperatingPoint slope_and_speed(const TrajectoryPoint& c, const ModelParams& p,
                               std::optional<double> prev_gamma = std::nullopt,
                               const IntegratorOptions& opts = {});
OperatingPoint slope_and_speed_at(const State& x_pre, double tau, const ModelParams& p,
                                  std::optional<double> prev_gamma = std::nullopt);

/// Integral of u^2 by composite Simpson on the integration grid.
double cost(const TrajectoryPoint& c, const IntegratorOptions& opts = {});
/// tau * (a1^2/4 + a2^2/2 + a3^2/2)
double cost_closed_form(const TrajectoryPoint& c);
TrajVec cost_gradient(const TrajectoryPoint& c);

/// Phi_p(c) = p_act(c) - p.
Vec2 operating_residual(const TrajectoryPoint& c, const OperatingPoint& op, const ModelParams& p,
                        std::optional<double> prev_gamma = std::nullopt, const IntegratorOptions& opts = {});

/// All first-order information of a trajectory point, from one variational
/// integration.
struct GaitEvaluation {
  TrajectoryPoint c;
  State x_end_pre;
  State x_f;
  Vec4 periodicity;
  OperatingPoint actual;
  double cost = 0.0;
  TrajVec cost_gradient;
  Mat4x8 dP_dc;
  Mat2x8 dPhi_dc;
  bool transversality_ok = false;
};

GaitEvaluation evaluate_gait(const TrajectoryPoint& c, const ModelParams& p,
                             std::optional<double> prev_gamma = std::nullopt,
                             const IntegratorOptions& opts = {});

/// grad J + dP/dc^T lambda_P + dPhi/dc^T lambda_Phi
TrajVec stationarity_residual(const GaitEvaluation& g, const MultVec& lambda);

/// Stacked [P; Phi_p; stationarity], length 14.
FocVec foc_residual(const GaitEvaluation& g, const MultVec& lambda, const OperatingPoint& p_des);
FocVec foc_residual(const TrajectoryPoint& c, const MultVec& lambda, const OperatingPoint& p_des,
                    const ModelParams& p, std::optional<double> prev_gamma = std::nullopt,
                    const IntegratorOptions& opts = {});

/// M_eps(c, lambda) = P_opt[p_des](c, lambda) - eps * P_opt[p_des](seed).
///
/// Holds the slope unwrapping reference used when evaluating gamma; the
/// continuation loop that owns the map moves it along with accepted points.
class HomotopyMap {
 public:
  HomotopyMap(const ModelParams& model, const OperatingPoint& p_des, const AugmentedPoint& seed,
              const IntegratorOptions& opts = {}, std::optional<double> seed_gamma_reference = std::nullopt);

  FocVec residual(const AugmentedPoint& z) const;
  FocVec residual(const GaitEvaluation& g, const AugmentedPoint& z) const;
  /// Columns ordered (c, lambda, epsilon). The c-block of the stationarity
  /// rows is a central difference of the analytic stationarity residual.
  FocJacobian jacobian(const AugmentedPoint& z) const;
  FocJacobian jacobian(const GaitEvaluation& g, const AugmentedPoint& z) const;

  GaitEvaluation evaluate(const TrajectoryPoint& c) const;

  /// Operating point the map enforces at a given epsilon.
  OperatingPoint scheduled_operating_point(double epsilon) const;

  const FocVec& seed_residual() const { return seed_residual_; }
  const AugmentedPoint& seed() const { return seed_; }
  const OperatingPoint& target() const { return p_des_; }
  const OperatingPoint& seed_operating_point() const { return seed_op_; }
  const ModelParams& model() const { return model_; }
  const IntegratorOptions& integrator() const { return opts_; }

  double gamma_reference() const { return gamma_ref_; }
  void set_gamma_reference(double gamma) { gamma_ref_ = gamma; }

 private:
  ModelParams model_;
  OperatingPoint p_des_;
  AugmentedPoint seed_;
  IntegratorOptions opts_;
  OperatingPoint seed_op_;
  FocVec seed_residual_;
  double gamma_ref_ = 0.0;
};

}  // namespace optgait
