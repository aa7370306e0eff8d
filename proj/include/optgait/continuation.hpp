#pragma once

// Pseudo-arclength predictor-corrector continuation, the passive-gait finder,
// and the passive-family and homotopy-slice tracers built on top of it.

#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "optgait/gaitmaps.hpp"
#include "optgait/records.hpp"

namespace optgait {

using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

struct ContinuationConfig {
  double h0 = 0.02;  // signed initial arclength step
  double h_min = 1e-4;
  double h_max = 2.0;
  int target_points_per_branch = 25;
  int newton_max_iters = 20;
  double tol = 1e-8;  // residual infinity norm
  double contraction_target = 0.5;
  int max_step_retries = 6;
  /// Constant step magnitude; disables adaptation when set.
  std::optional<double> fixed_h;
  double epsilon_min = -std::numeric_limits<double>::infinity();
  double epsilon_max = std::numeric_limits<double>::infinity();
  /// Run the two branches of a trace on separate threads.
  int threads = 2;

  void validate() const;
};

/// A square-minus-one system r(z) = 0, r: R^(m+1) -> R^m.
class ContinuationProblem {
 public:
  struct Linearization {
    VecX residual;
    MatX jacobian;
  };

  virtual ~ContinuationProblem() = default;
  virtual int unknowns() const = 0;
  virtual VecX residual(const VecX& z) = 0;
  virtual Linearization linearize(const VecX& z) = 0;
  /// Called once per accepted point, in order.
  virtual void accept(const VecX& /*z*/) {}
};

struct TangentResult {
  VecX tangent;
  /// Smallest over largest singular value of the Jacobian.
  double sigma_ratio = 0.0;
};

/// Unit null vector of an m x (m+1) Jacobian via SVD. Oriented to have a
/// positive inner product with prev_tangent, or, without one, a negative last
/// component (epsilon decreasing for the homotopy). Throws SingularPointError
/// when sigma_min < 1e-10 sigma_max.
TangentResult compute_tangent(const MatX& jac, const std::optional<VecX>& prev_tangent = std::nullopt);

struct CorrectorResult {
  VecX z;
  bool converged = false;
  int iterations = 0;
  double kappa = 0.0;  // |dz_2| / |dz_1|, zero if fewer than two updates
  std::vector<double> residuals;
  std::string failure;
};

/// Newton on [r(z); t.(z - base) - h] = 0 starting from `predicted`.
CorrectorResult correct(ContinuationProblem& problem, const VecX& predicted, const VecX& base, const VecX& tangent,
                        double h, const ContinuationConfig& cfg, std::optional<double> tol_override = std::nullopt);

/// Contraction-ratio step control; change factor in [1/2, 2], magnitude in
/// [h_min, h_max], sign preserved.
double adapt_step(double h, double kappa, const ContinuationConfig& cfg);

enum class Termination { PointBudget, TargetReached, StepUnderflow, SingularPoint, CorrectorFailure, Error };
std::string_view to_string(Termination t);
Termination termination_from_string(std::string_view s);

struct BranchPoint {
  VecX z;
  VecX tangent;
  double sigma_ratio = 0.0;
  double step = 0.0;
  double kappa = 0.0;
  int newton_iterations = 0;
};

/// Scalar function whose crossings of `target` between consecutive points
/// are located by bracketing on the arclength step.
struct CrossingMonitor {
  std::string name;
  std::function<double(const VecX&)> value;
  double target = 0.0;
  double tol = 1e-10;
};

struct LocatedCrossing {
  std::string monitor;
  std::size_t after_index = 0;  // crossing lies between points[after_index] and the next one
  BranchPoint point;
};

struct BranchTrace {
  std::vector<BranchPoint> points;  // excludes the seed
  std::vector<LocatedCrossing> crossings;
  int direction = 1;
  Termination termination = Termination::PointBudget;
  std::string message;
};

struct BranchHooks {
  std::vector<CrossingMonitor> monitors;
  /// Inspect an accepted point; `count` includes it. Return a termination
  /// reason to stop the branch after it.
  std::function<std::optional<Termination>(const BranchPoint&, std::size_t count)> on_accept;
};

/// Traces one branch from `seed` (a root) in direction sign(h0) * direction.
BranchTrace trace_branch(ContinuationProblem& problem, const VecX& seed, const VecX& seed_tangent, int direction,
                         const ContinuationConfig& cfg, const BranchHooks& hooks = {});

/// Bracketing (Illinois) search on the arclength step from `base` for the
/// point where monitor equals its target.
BranchPoint locate_crossing(ContinuationProblem& problem, const BranchPoint& base, double h_bracket,
                            const CrossingMonitor& monitor, const ContinuationConfig& cfg);

// Passive gaits -------------------------------------------------------------

/// P(x0, tau, 0) in the unknowns (x0, tau).
class PassiveFamilyProblem : public ContinuationProblem {
 public:
  PassiveFamilyProblem(const ModelParams& model, const IntegratorOptions& opts = {}) : model_(model), opts_(opts) {}
  int unknowns() const override { return kStateDim + 1; }
  VecX residual(const VecX& z) override;
  Linearization linearize(const VecX& z) override;

  static TrajectoryPoint to_point(const VecX& z);
  static VecX from_point(const TrajectoryPoint& c);

 private:
  ModelParams model_;
  IntegratorOptions opts_;
};

/// Minimum-norm Newton on P(x0, tau, 0) = 0. Throws ConvergenceError or
/// InvalidGaitError (transversality violated, degenerate step).
TrajectoryPoint find_passive_gait(const State& x0_guess, double tau_guess, const ModelParams& model,
                                  const ContinuationConfig& cfg = {}, const IntegratorOptions& opts = {});

/// An ordered curve of records.
struct CurveBranch {
  std::vector<GaitRecord> points;
  std::vector<VecX> tangents;
  int direction = 1;
  Termination termination = Termination::PointBudget;
  std::string message;
};

struct PassiveFamily {
  GaitRecord seed;
  VecX seed_tangent;
  CurveBranch forward;
  CurveBranch backward;
  /// Gaits located where v_avg crosses a requested speed.
  std::vector<GaitRecord> speed_matches;
};

/// Continuation of the passive family through `seed`. When `locate_speed` is
/// given, crossings of that walking speed are refined and returned.
PassiveFamily trace_passive_family(const TrajectoryPoint& seed, const ContinuationConfig& cfg,
                                   const ModelParams& model, std::optional<double> locate_speed = std::nullopt,
                                   const IntegratorOptions& opts = {}, std::ostream* log = nullptr);

/// Record for a passive gait: epsilon = 1, lambda = 0, scheduled = actual.
GaitRecord make_passive_record(const TrajectoryPoint& c, const ModelParams& model, std::string id,
                               std::string slice_id, const IntegratorOptions& opts = {},
                               std::optional<double> prev_gamma = std::nullopt);

// Homotopy slices ------------------------------------------------------------

/// M_eps in the unknowns (c, lambda, eps). Owns the slope unwrapping state.
class HomotopyProblem : public ContinuationProblem {
 public:
  explicit HomotopyProblem(HomotopyMap map) : map_(std::move(map)) {}
  int unknowns() const override { return kAugmentedDim; }
  VecX residual(const VecX& z) override;
  Linearization linearize(const VecX& z) override;
  void accept(const VecX& z) override;

  const HomotopyMap& map() const { return map_; }
  HomotopyMap& map() { return map_; }

 private:
  HomotopyMap map_;
};

struct SliceTrace {
  SliceSpec slice;
  GaitRecord seed;
  VecX seed_tangent;
  OperatingPoint seed_operating_point;
  CurveBranch forward;   // h0 > 0: epsilon initially decreasing
  CurveBranch backward;
  std::optional<GaitRecord> epsilon_zero;

  /// backward (reversed), seed, forward, with the epsilon = 0 record in place.
  std::vector<GaitRecord> ordered_points() const;
  bool completed() const;
};

/// Builds the record of an accepted homotopy point.
GaitRecord make_slice_record(const HomotopyMap& map, const AugmentedPoint& z, const MatX& jacobian,
                             std::string id, std::string slice_id);

/// Traces both branches of the homotopy curve through the seed. Throws
/// GaitError if the seed residual exceeds the tolerance.
SliceTrace trace_slice(const AugmentedPoint& seed, const SliceSpec& slice, const ContinuationConfig& cfg,
                       const ModelParams& model, const IntegratorOptions& opts = {},
                       std::optional<double> seed_gamma_reference = std::nullopt, std::ostream* log = nullptr);

/// Condition number of the (c, lambda) block, i.e. with epsilon frozen.
double frozen_condition_number(const MatX& jacobian);

}  // namespace optgait
