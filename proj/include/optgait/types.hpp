#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace optgait {

// Dimensions of the compass-gait problem.
inline constexpr int kDof = 2;                           // n
inline constexpr int kStateDim = 2 * kDof;               // 2n
inline constexpr int kControlDim = 3;                    // k
inline constexpr int kOperatingDim = 2;                  // o
inline constexpr int kTrajDim = kStateDim + 1 + kControlDim;        // 8
inline constexpr int kMultiplierDim = kStateDim + kOperatingDim;    // 6
inline constexpr int kFocDim = 4 * kDof + kControlDim + kOperatingDim + 1;  // 14
inline constexpr int kAugmentedDim = kTrajDim + kMultiplierDim + 1;         // 15

static_assert(kFocDim == kTrajDim + kMultiplierDim);

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;
using TrajVec = Eigen::Matrix<double, kTrajDim, 1>;
using MultVec = Eigen::Matrix<double, kMultiplierDim, 1>;
using FocVec = Eigen::Matrix<double, kFocDim, 1>;
using AugVec = Eigen::Matrix<double, kAugmentedDim, 1>;
using Mat4x3 = Eigen::Matrix<double, kStateDim, kControlDim>;
using Mat4x8 = Eigen::Matrix<double, kStateDim, kTrajDim>;
using Mat2x8 = Eigen::Matrix<double, kOperatingDim, kTrajDim>;
using FocJacobian = Eigen::Matrix<double, kFocDim, kAugmentedDim>;

/// Minimal-coordinate biped state. Angles are absolute leg angles measured
/// counterclockwise from the upward vertical at each leg's foot.
struct State {
  Vec2 q = Vec2::Zero();
  Vec2 qdot = Vec2::Zero();

  State() = default;
  State(double q1, double q2, double qd1, double qd2) : q(q1, q2), qdot(qd1, qd2) {}
  State(const Vec2& q_in, const Vec2& qdot_in) : q(q_in), qdot(qdot_in) {}

  static State from_vector(const Vec4& v) { return {v(0), v(1), v(2), v(3)}; }
  Vec4 to_vector() const { return {q(0), q(1), qdot(0), qdot(1)}; }
  bool finite() const { return q.allFinite() && qdot.allFinite(); }

  friend bool operator==(const State& a, const State& b) {
    return a.q == b.q && a.qdot == b.qdot;
  }
};

/// Coefficients of the first-harmonic Fourier hip torque.
struct ControlCoeffs {
  Vec3 a = Vec3::Zero();

  bool passive() const { return (a.array() == 0.0).all(); }
  friend bool operator==(const ControlCoeffs& l, const ControlCoeffs& r) { return l.a == r.a; }
};

/// A point c = (x0, tau, a) of trajectory space.
struct TrajectoryPoint {
  State x0;
  double tau = 1.0;
  ControlCoeffs a;

  static TrajectoryPoint from_vector(const TrajVec& v) {
    TrajectoryPoint c;
    c.x0 = State::from_vector(v.head<4>());
    c.tau = v(4);
    c.a.a = v.tail<3>();
    return c;
  }
  TrajVec to_vector() const {
    TrajVec v;
    v << x0.to_vector(), tau, a.a;
    return v;
  }

  friend bool operator==(const TrajectoryPoint& l, const TrajectoryPoint& r) {
    return l.x0 == r.x0 && l.tau == r.tau && l.a == r.a;
  }
};

/// Target slope and average walking speed.
struct OperatingPoint {
  double gamma = 0.0;  // rad, possibly unwrapped
  double v_avg = 0.0;  // units of v0

  Vec2 to_vector() const { return {gamma, v_avg}; }
  static OperatingPoint from_vector(const Vec2& v) { return {v(0), v(1)}; }
};

/// Unknown of the homotopy continuation: (c, lambda, epsilon).
struct AugmentedPoint {
  TrajectoryPoint c;
  MultVec lambda = MultVec::Zero();
  double epsilon = 1.0;

  static AugmentedPoint from_vector(const AugVec& v) {
    AugmentedPoint z;
    z.c = TrajectoryPoint::from_vector(v.head<kTrajDim>());
    z.lambda = v.segment<kMultiplierDim>(kTrajDim);
    z.epsilon = v(kAugmentedDim - 1);
    return z;
  }
  AugVec to_vector() const {
    AugVec v;
    v << c.to_vector(), lambda, epsilon;
    return v;
  }
};

// Error hierarchy. Every failure raised by the library derives from GaitError.

class GaitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public GaitError {
 public:
  using GaitError::GaitError;
};

class NumericalError : public GaitError {
 public:
  using GaitError::GaitError;
};

class IntegrationError : public NumericalError {
 public:
  IntegrationError(const std::string& what, int substep)
      : NumericalError(what + " (substep " + std::to_string(substep) + ")"), substep_(substep) {}
  int substep() const { return substep_; }

 private:
  int substep_;
};

class DegenerateStepError : public GaitError {
 public:
  using GaitError::GaitError;
};

class ConvergenceError : public GaitError {
 public:
  ConvergenceError(const std::string& what, double last_residual)
      : GaitError(what), last_residual_(last_residual) {}
  double last_residual() const { return last_residual_; }

 private:
  double last_residual_;
};

class InvalidGaitError : public GaitError {
 public:
  using GaitError::GaitError;
};

class SingularPointError : public GaitError {
 public:
  SingularPointError(const std::string& what, double ratio) : GaitError(what), ratio_(ratio) {}
  /// Smallest over largest singular value at the failure.
  double ratio() const { return ratio_; }

 private:
  double ratio_;
};

class ClassificationError : public GaitError {
 public:
  using GaitError::GaitError;
};

class ParseError : public GaitError {
 public:
  using GaitError::GaitError;
};

class ConfigError : public GaitError {
 public:
  using GaitError::GaitError;
};

}  // namespace optgait
