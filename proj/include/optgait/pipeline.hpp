#pragma once

// Declarative run configuration and the find-passive -> family -> slices chain.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "optgait/continuation.hpp"
#include "optgait/library.hpp"

namespace optgait {

struct SeedSelector {
  enum class Source { PassiveFamily, Slice } from = Source::PassiveFamily;
  double v_avg = 0.7;     // passive family: walking speed of the seed
  std::string slice;      // slice: id of an earlier slice
  double epsilon = 0.0;   // slice: only the located epsilon = 0 gait is supported
};

struct SliceConfig {
  std::string id;
  SliceKind kind = SliceKind::ConstantVelocity;
  SeedSelector seed;
  std::optional<double> target_gamma_deg;
  std::optional<double> target_v_avg;
  std::optional<double> epsilon_min, epsilon_max;
};

struct PassiveConfig {
  State x0_guess{Vec2(0.06, -0.9), Vec2(-0.6, 0.36)};
  double tau_guess = 1.3;
  int family_points = 25;
  double family_h_max = 0.2;
};

struct RunConfig {
  ModelParams model;  // physical units
  IntegratorOptions integrator;
  ContinuationConfig continuation;
  PassiveConfig passive;
  std::vector<SliceConfig> slices;
  nlohmann::json source = nlohmann::json::object();

  /// Unknown keys are rejected by name.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
};

struct RunOptions {
  std::string out_dir = "out";
  bool dry_run = false;
  bool dump_trajectories = false;
  std::optional<int> threads;
  std::optional<int> points;
  std::optional<double> h0;
  std::optional<double> fixed_h;
};

/// Applies command-line overrides to the continuation settings.
ContinuationConfig effective_continuation(const RunConfig& cfg, const RunOptions& opts);

void print_plan(std::ostream& os, const RunConfig& cfg, const RunOptions& opts);

enum ExitCode : int { kExitOk = 0, kExitIncomplete = 1, kExitUsage = 2, kExitFailure = 3 };

struct SliceOutcome {
  std::string id;
  bool completed = false;
  std::string forward_termination, backward_termination;
  std::optional<std::string> epsilon_zero_id;
};

struct PipelineResult {
  int exit_code = kExitOk;
  std::vector<SliceOutcome> slices;
  std::vector<std::string> files;
  std::string failure;
};

/// Records of a passive family ordered along the curve.
std::vector<GaitRecord> ordered_family(const PassiveFamily& fam);

/// The located speed crossing closest to the family seed along the curve.
const GaitRecord* nearest_speed_match(const PassiveFamily& fam);

/// Runs the whole chain, writing outputs to opts.out_dir. On a stage failure
/// the outputs produced so far are kept and failure.json describes the stage.
PipelineResult run_pipeline(const RunConfig& cfg, const RunOptions& opts, std::ostream& log);

/// File-name-safe form of a record id.
std::string sanitize_id(const std::string& id);

}  // namespace optgait
