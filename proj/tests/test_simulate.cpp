#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"

using namespace optgait;
using doctest::Approx;

namespace {

double rel_diff(const State& a, const State& b) {
  const Vec4 d = a.to_vector() - b.to_vector();
  return d.cwiseAbs().maxCoeff() / std::max(1.0, b.to_vector().cwiseAbs().maxCoeff());
}

}  // namespace

TEST_CASE("equilibrium persists through a step") {
  const ModelParams p = oracle::model();
  TrajectoryPoint c;
  c.tau = 0.8;
  const StepResult r = integrate_step(c, p);
  CHECK(r.x_end_pre.to_vector().norm() == 0.0);
  CHECK(r.x_f.to_vector().norm() == 0.0);
  CHECK(r.trajectory.size() == 31);
  CHECK(r.times.size() == 31);
  CHECK(r.times.back() == Approx(0.8));
}

TEST_CASE("invalid trajectory points are rejected") {
  const ModelParams p = oracle::model();
  TrajectoryPoint c = oracle::passive_seed();
  c.tau = 0.0;
  CHECK_THROWS_AS(integrate_step(c, p), DomainError);
  c.tau = -1.0;
  CHECK_THROWS_AS(integrate_step(c, p), DomainError);
  c = oracle::passive_seed();
  c.x0.q(0) = std::nan("");
  CHECK_THROWS_AS(integrate_step(c, p), DomainError);
}

TEST_CASE("a blow-up reports the failing substep") {
  const ModelParams p = oracle::model();
  TrajectoryPoint c = oracle::passive_seed();
  c.x0.qdot = Vec2(1e200, -1e200);
  c.tau = 5.0;
  try {
    integrate_step(c, p);
    FAIL("expected an integration error");
  } catch (const IntegrationError& e) {
    CHECK(e.substep() >= 0);
    CHECK(e.substep() < 30);
  }
}

TEST_CASE("integration is deterministic") {
  const ModelParams p = oracle::model();
  std::mt19937 rng(2);
  const TrajectoryPoint c = oracle::random_point(rng);
  const StepResult a = integrate_step(c, p), b = integrate_step(c, p);
  CHECK(a.x_f == b.x_f);
  CHECK(a.x_end_pre == b.x_end_pre);
  for (std::size_t i = 0; i < a.trajectory.size(); ++i) CHECK(a.trajectory[i] == b.trajectory[i]);
}

TEST_CASE("the 30-step flow matches step-doubled RK4 at tau/3000") {
  const ModelParams p = oracle::model();
  std::mt19937 rng(17);
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    const TrajectoryPoint c = oracle::random_point(rng, 0.2);
    const State ref = oracle::step_doubled_rk4(c, p, 3000);
    worst = std::max(worst, rel_diff(integrate_step(c, p).x_end_pre, ref));
  }
  MESSAGE("largest relative deviation: " << worst);
  CHECK(worst <= 1e-6);
}

TEST_CASE("the passive seed is a periodic gait under an independent integrator") {
  const ModelParams p = oracle::model();
  const TrajectoryPoint& c = oracle::passive_seed();
  const StepResult r = integrate_step(c, p);
  CHECK((r.x_f.to_vector() - flip_map(c.x0).to_vector()).cwiseAbs().maxCoeff() <= 1e-8);
  const State fine = impact_map(oracle::step_doubled_rk4(c, p, 3000), p);
  CHECK((fine.to_vector() - flip_map(c.x0).to_vector()).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(r.transversality_ok);
  CHECK(r.normal_velocity < 0.0);
}

TEST_CASE("zero-input flow conserves energy to 1e-6 per step") {
  const ModelParams p = oracle::model();
  std::mt19937 rng(23);
  for (int i = 0; i < 20; ++i) {
    TrajectoryPoint c = oracle::random_point(rng, 0.0);
    const StepResult r = integrate_step(c, p);
    const double e0 = total_energy(c.x0, p);
    for (const State& x : r.trajectory) CHECK(std::abs(total_energy(x, p) - e0) <= 1e-6 * std::abs(e0));
  }
}

TEST_CASE("RK4 refinement converges at fourth order") {
  const ModelParams p = oracle::model();
  std::mt19937 rng(29);
  const TrajectoryPoint c = oracle::random_point(rng, 0.2);
  const State ref = oracle::step_doubled_rk4(c, p, 4000);
  std::vector<double> logh, loge;
  for (int n : {30, 60, 120, 240}) {
    IntegratorOptions o;
    o.substeps = n;
    const double err = (integrate_step(c, p, o).x_end_pre.to_vector() - ref.to_vector()).norm();
    logh.push_back(std::log(c.tau / n));
    loge.push_back(std::log(err));
  }
  // Least-squares slope over the four grids.
  const double mh = (logh[0] + logh[1] + logh[2] + logh[3]) / 4, me = (loge[0] + loge[1] + loge[2] + loge[3]) / 4;
  double sxy = 0.0, sxx = 0.0;
  for (int i = 0; i < 4; ++i) {
    sxy += (logh[i] - mh) * (loge[i] - me);
    sxx += (logh[i] - mh) * (logh[i] - mh);
  }
  const double order = sxy / sxx;
  MESSAGE("observed order " << order);
  CHECK(order >= 3.5);
}

TEST_CASE("sensitivities match finite differences of the step") {
  const ModelParams p = oracle::model();
  std::mt19937 rng(31);
  for (int i = 0; i < 10; ++i) {
    const TrajectoryPoint c = oracle::random_point(rng, 0.2);
    const Sensitivities s = step_sensitivities(c, p);
    CHECK(s.x_f == integrate_step(c, p).x_f);
    auto xf = [&](const Eigen::VectorXd& v) {
      return Eigen::VectorXd(integrate_step(TrajectoryPoint::from_vector(v), p).x_f.to_vector());
    };
    auto xpre = [&](const Eigen::VectorXd& v) {
      return Eigen::VectorXd(integrate_step(TrajectoryPoint::from_vector(v), p).x_end_pre.to_vector());
    };
    const Eigen::VectorXd z = c.to_vector();
    const Eigen::MatrixXd ref_f = oracle::fd_jacobian(xf, z);
    const Eigen::MatrixXd ref_pre = oracle::fd_jacobian(xpre, z);
    CHECK(oracle::entries_match(s.d_xf_d_c(), ref_f, 1e-5, 1e-8));
    CHECK(oracle::entries_match(s.d_xpre_d_c, ref_pre, 1e-5, 1e-8));
    CHECK(s.d_xf_d_c().allFinite());
  }
}

TEST_CASE("torque sensitivity at the equilibrium") {
  const ModelParams p = oracle::model();
  TrajectoryPoint c;
  c.tau = 0.5;
  const Sensitivities s = step_sensitivities(c, p);
  auto xf = [&](const Eigen::VectorXd& v) {
    TrajectoryPoint d = c;
    d.a.a(0) = v(0);
    return Eigen::VectorXd(integrate_step(d, p).x_f.to_vector());
  };
  const Eigen::VectorXd a0 = Eigen::VectorXd::Zero(1);
  const Eigen::VectorXd ref = oracle::fd_column(xf, a0, 0, 1e-6);
  CHECK(oracle::entries_match(s.d_xf_d_a.col(0), ref, 1e-5, 1e-8));
}

TEST_CASE("short unforced steps approach the impact Jacobian") {
  const ModelParams p = oracle::model();
  TrajectoryPoint c;
  c.x0 = State(-0.3, 0.3, -0.5, 0.2);
  double prev = std::numeric_limits<double>::infinity();
  for (double tau : {1e-2, 1e-3, 1e-4}) {
    c.tau = tau;
    const double d = (step_sensitivities(c, p).d_xf_d_x0 - impact_jacobian(c.x0, p)).norm();
    CHECK(d < prev);
    prev = d;
  }
  CHECK(prev < 1e-3);
}

TEST_CASE("trajectory CSV lists every node") {
  const ModelParams p = oracle::model();
  const TrajectoryPoint& c = oracle::passive_seed();
  std::ostringstream os;
  write_trajectory_csv(os, c, integrate_step(c, p));
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "t,q1,q2,qd1,qd2,u");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 31);
}
