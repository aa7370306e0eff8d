#include "optgait/continuation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <mutex>
#include <numbers>
#include <ostream>

namespace optgait {

namespace {

constexpr double kSingularRatio = 1e-10;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

double inf_norm(const VecX& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

std::string point_id(const std::string& slice_id, int branch, int index) {
  char buf[32];
  if (branch == 0) return slice_id + ":seed";
  std::snprintf(buf, sizeof buf, ":%c%03d", branch > 0 ? '+' : '-', index);
  return slice_id + buf;
}

// Serializes log output from concurrently traced branches.
class Logger {
 public:
  explicit Logger(std::ostream* os) : os_(os) {}
  void line(const std::string& s) {
    if (!os_) return;
    std::lock_guard lock(mutex_);
    *os_ << s << '\n';
  }
  explicit operator bool() const { return os_ != nullptr; }

 private:
  std::ostream* os_;
  std::mutex mutex_;
};

std::string progress_line(const GaitRecord& r) {
  char buf[320];
  std::snprintf(buf, sizeof buf,
                "[%s] eps=%.6f gamma=%.4fdeg v_avg=%.6f tau=%.5f J=%.6g h=%.4g newton=%d cond=%.3g%s",
                r.id.c_str(), r.epsilon, r.gamma_deg, r.v_avg, r.c.tau, r.cost, r.step, r.newton_iterations,
                r.condition_number, r.transversality_ok ? "" : " NON-TRANSVERSAL");
  return buf;
}

template <typename F>
auto run_branches(int threads, F&& trace_one) {
  using R = decltype(trace_one(1));
  if (threads >= 2) {
    auto back = std::async(std::launch::async, [&] { return trace_one(-1); });
    R fwd = trace_one(1);
    return std::pair<R, R>{std::move(fwd), back.get()};
  }
  R fwd = trace_one(1);
  R bwd = trace_one(-1);
  return std::pair<R, R>{std::move(fwd), std::move(bwd)};
}

}  // namespace

void ContinuationConfig::validate() const {
  const double h = fixed_h ? std::abs(*fixed_h) : std::abs(h0);
  if (!(h_min > 0.0 && h_min <= std::abs(h0) && std::abs(h0) <= h_max))
    throw ConfigError("continuation step bounds must satisfy 0 < h_min <= |h0| <= h_max");
  if (!(h > 0.0)) throw ConfigError("continuation step must be non-zero");
  if (target_points_per_branch < 0) throw ConfigError("target_points_per_branch must be non-negative");
  if (newton_max_iters < 1) throw ConfigError("newton_max_iters must be at least 1");
  if (!(tol > 0.0)) throw ConfigError("tol must be positive");
  if (!(contraction_target > 0.0)) throw ConfigError("contraction_target must be positive");
  if (max_step_retries < 0) throw ConfigError("max_step_retries must be non-negative");
  if (!(epsilon_min < epsilon_max)) throw ConfigError("epsilon_min must be below epsilon_max");
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::PointBudget: return "point_budget";
    case Termination::TargetReached: return "target_reached";
    case Termination::StepUnderflow: return "step_underflow";
    case Termination::SingularPoint: return "singular_point";
    case Termination::CorrectorFailure: return "corrector_failure";
    case Termination::Error: return "error";
  }
  return "error";
}

Termination termination_from_string(std::string_view s) {
  for (auto t : {Termination::PointBudget, Termination::TargetReached, Termination::StepUnderflow,
                 Termination::SingularPoint, Termination::CorrectorFailure, Termination::Error})
    if (to_string(t) == s) return t;
  throw ParseError("unknown termination reason '" + std::string(s) + "'");
}

TangentResult compute_tangent(const MatX& jac, const std::optional<VecX>& prev_tangent) {
  const Eigen::Index m = jac.rows();
  if (jac.cols() != m + 1) throw DomainError("tangent requires an m x (m+1) Jacobian");
  if (!jac.allFinite()) throw NumericalError("non-finite Jacobian");
  const Eigen::JacobiSVD<MatX> svd(jac, Eigen::ComputeFullV);
  const VecX& sv = svd.singularValues();
  TangentResult out;
  out.sigma_ratio = sv(0) > 0.0 ? sv(m - 1) / sv(0) : 0.0;
  if (out.sigma_ratio < kSingularRatio)
    throw SingularPointError("rank-deficient Jacobian at continuation point", out.sigma_ratio);
  VecX t = svd.matrixV().col(m);
  t.normalize();
  if (prev_tangent) {
    if (t.dot(*prev_tangent) < 0.0) t = -t;
  } else if (t(m) > 0.0) {
    t = -t;
  }
  out.tangent = std::move(t);
  return out;
}

CorrectorResult correct(ContinuationProblem& problem, const VecX& predicted, const VecX& base, const VecX& tangent,
                        double h, const ContinuationConfig& cfg, std::optional<double> tol_override) {
  const double tol = tol_override.value_or(cfg.tol);
  const Eigen::Index n = predicted.size();
  CorrectorResult out;
  out.z = predicted;
  double first_update = 0.0;
  double last_update = 0.0;

  for (int it = 0;; ++it) {
    ContinuationProblem::Linearization lin;
    try {
      lin = problem.linearize(out.z);
    } catch (const GaitError& e) {
      out.failure = e.what();
      return out;
    }
    const double rn = inf_norm(lin.residual);
    out.residuals.push_back(rn);
    if (!std::isfinite(rn)) {
      out.failure = "non-finite residual";
      return out;
    }
    if (rn <= tol) {
      out.converged = true;
      return out;
    }
    if (it >= cfg.newton_max_iters) {
      out.failure = "iteration cap reached";
      return out;
    }

    MatX A(n, n);
    A.topRows(n - 1) = lin.jacobian;
    A.row(n - 1) = tangent.transpose();
    VecX b(n);
    b.head(n - 1) = -lin.residual;
    b(n - 1) = -(tangent.dot(out.z - base) - h);
    const VecX dz = A.partialPivLu().solve(b);
    if (!dz.allFinite()) {
      out.failure = "singular corrector system";
      return out;
    }
    const double un = dz.norm();
    if (it == 0) first_update = un;
    if (it == 1 && first_update > 0.0) out.kappa = un / first_update;
    if (it >= 1 && un > last_update) {
      out.failure = "corrector diverging";
      return out;
    }
    last_update = un;
    out.z += dz;
    out.iterations = it + 1;
  }
}

double adapt_step(double h, double kappa, const ContinuationConfig& cfg) {
  const double factor = std::clamp(std::sqrt(cfg.contraction_target / std::max(kappa, 1e-6)), 0.5, 2.0);
  const double mag = std::clamp(std::abs(h) * factor, cfg.h_min, cfg.h_max);
  return std::copysign(mag, h);
}

BranchPoint locate_crossing(ContinuationProblem& problem, const BranchPoint& base, double h_bracket,
                            const CrossingMonitor& monitor, const ContinuationConfig& cfg) {
  const double tight = std::min(cfg.tol, 1e-3 * cfg.tol);
  auto solve_at = [&](double h) -> CorrectorResult {
    CorrectorResult r = correct(problem, base.z + h * base.tangent, base.z, base.tangent, h, cfg, tight);
    if (!r.converged) r = correct(problem, base.z + h * base.tangent, base.z, base.tangent, h, cfg);
    if (!r.converged) throw ConvergenceError("crossing refinement failed: " + r.failure, r.residuals.empty() ? NAN : r.residuals.back());
    return r;
  };

  double a = 0.0;
  double ga = monitor.value(base.z) - monitor.target;
  double b = h_bracket;
  CorrectorResult rb = solve_at(b);
  double gb = monitor.value(rb.z) - monitor.target;
  CorrectorResult best = rb;
  double best_h = b;

  for (int iter = 0; iter < 100 && std::abs(gb) > monitor.tol; ++iter) {
    double m = b - gb * (b - a) / (gb - ga);
    if (!std::isfinite(m) || (m - a) * (m - b) > 0.0) m = 0.5 * (a + b);
    const CorrectorResult rm = solve_at(m);
    const double gm = monitor.value(rm.z) - monitor.target;
    if (gm * gb < 0.0) {
      a = b;
      ga = gb;
    } else {
      ga *= 0.5;
    }
    b = m;
    gb = gm;
    best = rm;
    best_h = m;
    if (std::abs(b - a) < 1e-15 * std::max(1.0, std::abs(h_bracket))) break;
  }

  BranchPoint out;
  out.z = best.z;
  const auto lin = problem.linearize(best.z);
  const TangentResult t = compute_tangent(lin.jacobian, base.tangent);
  out.tangent = t.tangent;
  out.sigma_ratio = t.sigma_ratio;
  out.step = best_h;
  out.kappa = best.kappa;
  out.newton_iterations = best.iterations;
  return out;
}

BranchTrace trace_branch(ContinuationProblem& problem, const VecX& seed, const VecX& seed_tangent, int direction,
                         const ContinuationConfig& cfg, const BranchHooks& hooks) {
  BranchTrace trace;
  trace.direction = direction;
  const double h_start = cfg.fixed_h ? std::abs(*cfg.fixed_h) : std::abs(cfg.h0);
  double h = std::copysign(h_start, cfg.h0) * direction;

  BranchPoint base;
  base.z = seed;
  base.tangent = seed_tangent;

  while (static_cast<int>(trace.points.size()) < cfg.target_points_per_branch) {
    CorrectorResult res;
    int retries = 0;
    for (;;) {
      res = correct(problem, base.z + h * base.tangent, base.z, base.tangent, h, cfg);
      if (res.converged) break;
      if (cfg.fixed_h || retries >= cfg.max_step_retries) {
        trace.termination = Termination::CorrectorFailure;
        trace.message = "corrector failed after " + std::to_string(retries) + " retries: " + res.failure;
        return trace;
      }
      h *= 0.5;
      ++retries;
      if (std::abs(h) < cfg.h_min) {
        trace.termination = Termination::StepUnderflow;
        trace.message = "step fell below h_min: " + res.failure;
        return trace;
      }
    }

    BranchPoint pt;
    pt.z = res.z;
    pt.step = h;
    pt.kappa = res.kappa;
    pt.newton_iterations = res.iterations;
    try {
      const auto lin = problem.linearize(pt.z);
      const TangentResult t = compute_tangent(lin.jacobian, base.tangent);
      pt.tangent = t.tangent;
      pt.sigma_ratio = t.sigma_ratio;
    } catch (const SingularPointError& e) {
      trace.termination = Termination::SingularPoint;
      trace.message = e.what();
      return trace;
    } catch (const GaitError& e) {
      trace.termination = Termination::Error;
      trace.message = e.what();
      return trace;
    }

    for (const CrossingMonitor& mon : hooks.monitors) {
      const double g0 = mon.value(base.z) - mon.target;
      const double g1 = mon.value(pt.z) - mon.target;
      if (g0 == 0.0 || g0 * g1 > 0.0) continue;
      try {
        LocatedCrossing lc;
        lc.monitor = mon.name;
        lc.after_index = trace.points.size();
        lc.point = (g1 == 0.0) ? pt : locate_crossing(problem, base, h, mon, cfg);
        trace.crossings.push_back(std::move(lc));
      } catch (const GaitError& e) {
        trace.message += std::string("crossing '") + mon.name + "' not refined: " + e.what() + "; ";
      }
    }

    problem.accept(pt.z);
    trace.points.push_back(pt);
    if (hooks.on_accept) {
      if (auto stop = hooks.on_accept(pt, trace.points.size())) {
        trace.termination = *stop;
        return trace;
      }
    }
    base = pt;
    if (!cfg.fixed_h) h = adapt_step(h, pt.kappa, cfg);
  }
  trace.termination = Termination::PointBudget;
  return trace;
}

// Passive gaits -------------------------------------------------------------

TrajectoryPoint PassiveFamilyProblem::to_point(const VecX& z) {
  TrajectoryPoint c;
  c.x0 = State::from_vector(z.head<4>());
  c.tau = z(4);
  return c;
}

VecX PassiveFamilyProblem::from_point(const TrajectoryPoint& c) {
  VecX z(5);
  z << c.x0.to_vector(), c.tau;
  return z;
}

VecX PassiveFamilyProblem::residual(const VecX& z) {
  return periodicity_residual(to_point(z), model_, opts_);
}

ContinuationProblem::Linearization PassiveFamilyProblem::linearize(const VecX& z) {
  const TrajectoryPoint c = to_point(z);
  const Sensitivities s = step_sensitivities(c, model_, opts_);
  Linearization lin;
  lin.residual = s.x_f.to_vector() - flip_map(c.x0).to_vector();
  lin.jacobian.resize(4, 5);
  lin.jacobian.leftCols<4>() = s.d_xf_d_x0 - flip_matrix();
  lin.jacobian.col(4) = s.d_xf_d_tau;
  return lin;
}

TrajectoryPoint find_passive_gait(const State& x0_guess, double tau_guess, const ModelParams& model,
                                  const ContinuationConfig& cfg, const IntegratorOptions& opts) {
  PassiveFamilyProblem problem(model, opts);
  TrajectoryPoint guess;
  guess.x0 = x0_guess;
  guess.tau = tau_guess;
  VecX z = PassiveFamilyProblem::from_point(guess);
  double rn = NAN;
  for (int it = 0; it <= cfg.newton_max_iters; ++it) {
    ContinuationProblem::Linearization lin;
    try {
      lin = problem.linearize(z);
    } catch (const GaitError& e) {
      throw ConvergenceError(std::string("passive gait search failed: ") + e.what(), rn);
    }
    rn = inf_norm(lin.residual);
    if (!std::isfinite(rn)) break;
    if (rn <= cfg.tol) {
      const TrajectoryPoint c = PassiveFamilyProblem::to_point(z);
      const StepResult step = integrate_step(c, model, opts);
      try {
        (void)slope_and_speed_at(step.x_end_pre, c.tau, model);
      } catch (const DegenerateStepError& e) {
        throw InvalidGaitError(std::string("passive gait is degenerate: ") + e.what());
      }
      if (!step.transversality_ok)
        throw InvalidGaitError("passive gait violates impact transversality (normal velocity " +
                               std::to_string(step.normal_velocity) + ")");
      return c;
    }
    if (it == cfg.newton_max_iters) break;
    // Minimum-norm Newton step on the underdetermined system.
    z -= lin.jacobian.completeOrthogonalDecomposition().solve(lin.residual);
    if (!(z(4) > 0.0)) throw ConvergenceError("passive gait search produced non-positive step duration", rn);
  }
  throw ConvergenceError("passive gait search did not converge (last residual " + std::to_string(rn) + ")", rn);
}

GaitRecord make_passive_record(const TrajectoryPoint& c, const ModelParams& model, std::string id,
                               std::string slice_id, const IntegratorOptions& opts,
                               std::optional<double> prev_gamma) {
  const GaitEvaluation g = evaluate_gait(c, model, prev_gamma, opts);
  GaitRecord r;
  r.id = std::move(id);
  r.slice_id = std::move(slice_id);
  r.epsilon = 1.0;
  r.c = c;
  r.lambda.setZero();
  r.gamma = g.actual.gamma;
  r.gamma_deg = g.actual.gamma * kRadToDeg;
  r.v_avg = g.actual.v_avg;
  r.cost = g.cost;
  r.scheduled = g.actual;
  r.periodicity_inf = g.periodicity.cwiseAbs().maxCoeff();
  r.residual_inf = r.periodicity_inf;
  r.operating_inf = 0.0;
  r.stationarity_inf = stationarity_residual(g, r.lambda).cwiseAbs().maxCoeff();
  try {
    r.classification = classify_gait(r.gamma);
  } catch (const ClassificationError&) {
    r.classification.reset();
  }
  const Eigen::JacobiSVD<MatX> svd(MatX(g.dP_dc.leftCols<5>()));
  const VecX& sv = svd.singularValues();
  r.condition_number = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : INFINITY;
  r.transversality_ok = g.transversality_ok;
  r.near_passive = true;
  return r;
}

PassiveFamily trace_passive_family(const TrajectoryPoint& seed, const ContinuationConfig& cfg,
                                   const ModelParams& model, std::optional<double> locate_speed,
                                   const IntegratorOptions& opts, std::ostream* log) {
  cfg.validate();
  Logger logger(log);
  const std::string slice_id = "passive";

  PassiveFamilyProblem root_problem(model, opts);
  const VecX z0 = PassiveFamilyProblem::from_point(seed);
  const auto lin0 = root_problem.linearize(z0);
  if (inf_norm(lin0.residual) > cfg.tol)
    throw GaitError("passive family seed is not a gait (|P| = " + std::to_string(inf_norm(lin0.residual)) + ")");

  PassiveFamily fam;
  fam.seed = make_passive_record(seed, model, point_id(slice_id, 0, 0), slice_id, opts);
  fam.seed_tangent = compute_tangent(lin0.jacobian).tangent;

  struct Traced {
    CurveBranch branch;
    std::vector<GaitRecord> located;
  };

  auto trace_one = [&](int direction) -> Traced {
    PassiveFamilyProblem problem(model, opts);
    BranchHooks hooks;
    if (locate_speed) {
      hooks.monitors.push_back({"v_avg",
                                [&](const VecX& z) {
                                  const TrajectoryPoint c = PassiveFamilyProblem::to_point(z);
                                  return slope_and_speed(c, model, std::nullopt, opts).v_avg;
                                },
                                *locate_speed, 1e-12});
    }
    const BranchTrace bt = trace_branch(problem, z0, fam.seed_tangent, direction, cfg, hooks);

    Traced out;
    out.branch.direction = direction;
    out.branch.termination = bt.termination;
    out.branch.message = bt.message;
    double gamma_ref = fam.seed.gamma;
    std::vector<double> refs;  // slope before each point, for unwrapping crossings
    for (std::size_t i = 0; i < bt.points.size(); ++i) {
      refs.push_back(gamma_ref);
      GaitRecord r = make_passive_record(PassiveFamilyProblem::to_point(bt.points[i].z), model,
                                         point_id(slice_id, direction, static_cast<int>(i + 1)), slice_id, opts,
                                         gamma_ref);
      r.branch = direction;
      r.index = static_cast<int>(i + 1);
      r.step = bt.points[i].step;
      r.newton_iterations = bt.points[i].newton_iterations;
      gamma_ref = r.gamma;
      logger.line(progress_line(r));
      out.branch.points.push_back(std::move(r));
      out.branch.tangents.push_back(bt.points[i].tangent);
    }
    for (const LocatedCrossing& lc : bt.crossings) {
      const double ref = lc.after_index < refs.size() ? refs[lc.after_index] : gamma_ref;
      GaitRecord r = make_passive_record(PassiveFamilyProblem::to_point(lc.point.z), model,
                                         slice_id + ":" + lc.monitor + (direction > 0 ? "+" : "-") +
                                             std::to_string(lc.after_index),
                                         slice_id, opts, ref);
      r.branch = direction;
      r.index = static_cast<int>(lc.after_index);
      r.distinguished = true;
      out.located.push_back(std::move(r));
    }
    if (bt.termination != Termination::PointBudget)
      logger.line("[" + slice_id + "] branch " + std::to_string(direction) + " terminated: " +
                  std::string(to_string(bt.termination)) + " " + bt.message);
    return out;
  };

  auto [fwd, bwd] = run_branches(cfg.threads, trace_one);
  fam.forward = std::move(fwd.branch);
  fam.backward = std::move(bwd.branch);
  fam.speed_matches = std::move(fwd.located);
  fam.speed_matches.insert(fam.speed_matches.end(), bwd.located.begin(), bwd.located.end());
  return fam;
}

// Homotopy slices ------------------------------------------------------------

VecX HomotopyProblem::residual(const VecX& z) {
  return map_.residual(AugmentedPoint::from_vector(z));
}

ContinuationProblem::Linearization HomotopyProblem::linearize(const VecX& z) {
  const AugmentedPoint p = AugmentedPoint::from_vector(z);
  const GaitEvaluation g = map_.evaluate(p.c);
  Linearization lin;
  lin.residual = map_.residual(g, p);
  lin.jacobian = map_.jacobian(g, p);
  return lin;
}

void HomotopyProblem::accept(const VecX& z) {
  const TrajectoryPoint c = AugmentedPoint::from_vector(z).c;
  map_.set_gamma_reference(
      slope_and_speed(c, map_.model(), map_.gamma_reference(), map_.integrator()).gamma);
}

double frozen_condition_number(const MatX& jacobian) {
  const MatX block = jacobian.leftCols(jacobian.rows());
  const Eigen::JacobiSVD<MatX> svd(block);
  const VecX& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  return smin > 0.0 ? sv(0) / smin : INFINITY;
}

GaitRecord make_slice_record(const HomotopyMap& map, const AugmentedPoint& z, const MatX& jacobian,
                             std::string id, std::string slice_id) {
  const GaitEvaluation g = map.evaluate(z.c);
  const FocVec m = map.residual(g, z);
  GaitRecord r;
  r.id = std::move(id);
  r.slice_id = std::move(slice_id);
  r.epsilon = z.epsilon;
  r.c = z.c;
  r.lambda = z.lambda;
  r.gamma = g.actual.gamma;
  r.gamma_deg = g.actual.gamma * kRadToDeg;
  r.v_avg = g.actual.v_avg;
  r.cost = g.cost;
  r.scheduled = map.scheduled_operating_point(z.epsilon);
  r.residual_inf = m.cwiseAbs().maxCoeff();
  r.periodicity_inf = g.periodicity.cwiseAbs().maxCoeff();
  r.operating_inf = (g.actual.to_vector() - r.scheduled.to_vector()).cwiseAbs().maxCoeff();
  r.stationarity_inf = stationarity_residual(g, z.lambda).cwiseAbs().maxCoeff();
  try {
    r.classification = classify_gait(r.gamma);
  } catch (const ClassificationError&) {
    r.classification.reset();
  }
  r.condition_number = frozen_condition_number(jacobian);
  r.transversality_ok = g.transversality_ok;
  r.near_passive = z.c.a.a.norm() < 1e-4;
  return r;
}

std::vector<GaitRecord> SliceTrace::ordered_points() const {
  auto with_crossing = [&](const CurveBranch& b) {
    std::vector<GaitRecord> pts;
    for (std::size_t i = 0; i <= b.points.size(); ++i) {
      if (epsilon_zero && epsilon_zero->branch == b.direction && static_cast<std::size_t>(epsilon_zero->index) == i)
        pts.push_back(*epsilon_zero);
      if (i < b.points.size()) pts.push_back(b.points[i]);
    }
    return pts;
  };
  std::vector<GaitRecord> back = with_crossing(backward);
  std::vector<GaitRecord> out(back.rbegin(), back.rend());
  out.push_back(seed);
  const std::vector<GaitRecord> fwd = with_crossing(forward);
  out.insert(out.end(), fwd.begin(), fwd.end());
  return out;
}

bool SliceTrace::completed() const {
  auto ok = [](Termination t) { return t == Termination::PointBudget || t == Termination::TargetReached; };
  return ok(forward.termination) && ok(backward.termination);
}

SliceTrace trace_slice(const AugmentedPoint& seed_in, const SliceSpec& slice, const ContinuationConfig& cfg,
                       const ModelParams& model, const IntegratorOptions& opts,
                       std::optional<double> seed_gamma_reference, std::ostream* log) {
  cfg.validate();
  Logger logger(log);
  AugmentedPoint seed = seed_in;
  seed.epsilon = 1.0;

  const HomotopyMap map(model, slice.p_des, seed, opts, seed_gamma_reference);
  HomotopyProblem root(map);
  const VecX z0 = seed.to_vector();
  const auto lin0 = root.linearize(z0);
  const double r0 = inf_norm(lin0.residual);
  if (r0 > cfg.tol) throw GaitError("slice seed residual " + std::to_string(r0) + " exceeds tolerance");

  SliceTrace out;
  out.slice = slice;
  out.seed_operating_point = map.seed_operating_point();
  const TangentResult t0 = compute_tangent(lin0.jacobian);
  out.seed_tangent = t0.tangent;
  out.seed = make_slice_record(map, seed, lin0.jacobian, point_id(slice.id, 0, 0), slice.id);
  out.seed.step = 0.0;
  logger.line(progress_line(out.seed));
  const double seed_eps_sign = t0.tangent(kAugmentedDim - 1) < 0.0 ? -1.0 : 1.0;

  struct Traced {
    CurveBranch branch;
    std::vector<GaitRecord> zeros;
  };

  auto trace_one = [&](int direction) -> Traced {
    HomotopyProblem problem(map);
    Traced out_branch;
    out_branch.branch.direction = direction;

    BranchHooks hooks;
    hooks.monitors.push_back(
        {"eps0", [](const VecX& z) { return z(kAugmentedDim - 1); }, 0.0, 1e-10});
    hooks.on_accept = [&](const BranchPoint& pt, std::size_t index) -> std::optional<Termination> {
      const AugmentedPoint z = AugmentedPoint::from_vector(pt.z);
      const auto lin = problem.linearize(pt.z);
      GaitRecord r = make_slice_record(problem.map(), z, lin.jacobian,
                                       point_id(slice.id, direction, static_cast<int>(index)), slice.id);
      r.branch = direction;
      r.index = static_cast<int>(index);
      r.step = pt.step;
      r.newton_iterations = pt.newton_iterations;
      logger.line(progress_line(r));
      if (index <= 5 && pt.tangent(kAugmentedDim - 1) * seed_eps_sign < 0.0)
        logger.line("[" + slice.id + "] fold near seed: epsilon direction reversed at " + r.id);
      const bool singular = !(r.condition_number * kSingularRatio < 1.0);
      out_branch.branch.points.push_back(std::move(r));
      out_branch.branch.tangents.push_back(pt.tangent);
      if (singular) return Termination::SingularPoint;
      if (z.epsilon < cfg.epsilon_min || z.epsilon > cfg.epsilon_max) return Termination::TargetReached;
      return std::nullopt;
    };

    const BranchTrace bt = trace_branch(problem, z0, out.seed_tangent, direction, cfg, hooks);
    out_branch.branch.termination = bt.termination;
    out_branch.branch.message = bt.message;
    if (bt.termination == Termination::SingularPoint && bt.message.empty())
      out_branch.branch.message = "frozen-epsilon Jacobian is singular (cond " +
                                  std::to_string(out_branch.branch.points.back().condition_number) + ")";

    // Crossing records: unwrap with the slope of the point preceding them.
    for (const LocatedCrossing& lc : bt.crossings) {
      HomotopyMap local = map;
      if (lc.after_index > 0) local.set_gamma_reference(out_branch.branch.points[lc.after_index - 1].gamma);
      const auto lin = HomotopyProblem(local).linearize(lc.point.z);
      GaitRecord r = make_slice_record(local, AugmentedPoint::from_vector(lc.point.z), lin.jacobian,
                                       slice.id + ":eps0", slice.id);
      r.branch = direction;
      r.index = static_cast<int>(lc.after_index);
      r.step = lc.point.step;
      r.newton_iterations = lc.point.newton_iterations;
      r.distinguished = true;
      logger.line(progress_line(r));
      out_branch.zeros.push_back(std::move(r));
    }
    logger.line("[" + slice.id + "] branch " + std::to_string(direction) + " terminated: " +
                std::string(to_string(bt.termination)) +
                (out_branch.branch.message.empty() ? "" : " (" + out_branch.branch.message + ")"));
    return out_branch;
  };

  auto [fwd, bwd] = run_branches(cfg.threads, trace_one);
  out.forward = std::move(fwd.branch);
  out.backward = std::move(bwd.branch);
  if (!fwd.zeros.empty())
    out.epsilon_zero = fwd.zeros.front();
  else if (!bwd.zeros.empty())
    out.epsilon_zero = bwd.zeros.front();
  return out;
}

}  // namespace optgait
