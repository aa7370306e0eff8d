#include "optgait/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <ostream>
#include <regex>
#include <sstream>
#include <set>

namespace optgait {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& context) {
  if (!j.is_object()) throw ConfigError("'" + context + "' must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in '" + context + "'");
}

double number(const json& j, const std::string& name) {
  if (!j.is_number()) throw ConfigError("'" + name + "' must be a number");
  return j.get<double>();
}

int integer(const json& j, const std::string& name) {
  if (!j.is_number_integer()) throw ConfigError("'" + name + "' must be an integer");
  return j.get<int>();
}

std::string text(const json& j, const std::string& name) {
  if (!j.is_string()) throw ConfigError("'" + name + "' must be a string");
  return j.get<std::string>();
}

void write_text(const fs::path& path, const std::string& content, std::vector<std::string>& files) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw GaitError("cannot open '" + path.string() + "' for writing");
  os << content;
  files.push_back(path.string());
}

std::string csv_string(const std::vector<GaitRecord>& records) {
  std::ostringstream os;
  write_curve_csv(os, records);
  return os.str();
}

std::string stats_string(const std::string& id, const std::vector<GaitRecord>& records) {
  std::ostringstream os;
  try {
    write_statistics(os, id, curve_statistics(records));
  } catch (const GaitError& e) {
    os << "slice: " << id << "\nstatistics unavailable: " << e.what() << '\n';
  }
  return os.str();
}

json op_json(const OperatingPoint& p) { return {{"gamma_rad", p.gamma}, {"v_avg", p.v_avg}}; }

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  check_keys(j, {"model", "integrator", "continuation", "passive", "slices"}, "config");
  RunConfig cfg;
  cfg.source = j;

  if (auto it = j.find("model"); it != j.end()) {
    check_keys(*it, {"leg_length", "hip_mass", "leg_mass", "leg_com_from_hip", "gravity"}, "model");
    ModelParams& m = cfg.model;
    if (it->contains("leg_length")) m.leg_length = number(it->at("leg_length"), "model.leg_length");
    if (it->contains("hip_mass")) m.hip_mass = number(it->at("hip_mass"), "model.hip_mass");
    if (it->contains("leg_mass")) m.leg_mass = number(it->at("leg_mass"), "model.leg_mass");
    if (it->contains("leg_com_from_hip"))
      m.leg_com_from_hip = number(it->at("leg_com_from_hip"), "model.leg_com_from_hip");
    if (it->contains("gravity")) m.gravity = number(it->at("gravity"), "model.gravity");
  }
  try {
    cfg.model.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }

  if (auto it = j.find("integrator"); it != j.end()) {
    check_keys(*it, {"substeps"}, "integrator");
    if (it->contains("substeps")) cfg.integrator.substeps = integer(it->at("substeps"), "integrator.substeps");
    if (cfg.integrator.substeps < 1) throw ConfigError("'integrator.substeps' must be positive");
  }

  if (auto it = j.find("continuation"); it != j.end()) {
    check_keys(*it,
               {"h0", "h_min", "h_max", "points_per_branch", "newton_max_iters", "tol", "contraction_target",
                "max_step_retries", "fixed_h", "threads"},
               "continuation");
    ContinuationConfig& c = cfg.continuation;
    const json& s = *it;
    if (s.contains("h0")) c.h0 = number(s["h0"], "continuation.h0");
    if (s.contains("h_min")) c.h_min = number(s["h_min"], "continuation.h_min");
    if (s.contains("h_max")) c.h_max = number(s["h_max"], "continuation.h_max");
    if (s.contains("points_per_branch"))
      c.target_points_per_branch = integer(s["points_per_branch"], "continuation.points_per_branch");
    if (s.contains("newton_max_iters")) c.newton_max_iters = integer(s["newton_max_iters"], "continuation.newton_max_iters");
    if (s.contains("tol")) c.tol = number(s["tol"], "continuation.tol");
    if (s.contains("contraction_target"))
      c.contraction_target = number(s["contraction_target"], "continuation.contraction_target");
    if (s.contains("max_step_retries")) c.max_step_retries = integer(s["max_step_retries"], "continuation.max_step_retries");
    if (s.contains("fixed_h") && !s["fixed_h"].is_null()) c.fixed_h = number(s["fixed_h"], "continuation.fixed_h");
    if (s.contains("threads")) c.threads = integer(s["threads"], "continuation.threads");
  }
  cfg.continuation.validate();

  if (auto it = j.find("passive"); it != j.end()) {
    check_keys(*it, {"x0_guess", "tau_guess", "family_points", "family_h_max"}, "passive");
    PassiveConfig& p = cfg.passive;
    if (it->contains("x0_guess")) {
      const json& g = it->at("x0_guess");
      if (!g.is_array() || g.size() != 4) throw ConfigError("'passive.x0_guess' must be an array of 4 numbers");
      Vec4 v;
      for (int i = 0; i < 4; ++i) v(i) = number(g[i], "passive.x0_guess");
      p.x0_guess = State::from_vector(v);
    }
    if (it->contains("tau_guess")) p.tau_guess = number(it->at("tau_guess"), "passive.tau_guess");
    if (it->contains("family_points")) p.family_points = integer(it->at("family_points"), "passive.family_points");
    if (it->contains("family_h_max")) p.family_h_max = number(it->at("family_h_max"), "passive.family_h_max");
    if (!(p.tau_guess > 0.0)) throw ConfigError("'passive.tau_guess' must be positive");
    if (p.family_points < 0) throw ConfigError("'passive.family_points' must be non-negative");
  }

  static const std::regex id_re("[A-Za-z0-9_-]+");
  std::set<std::string> seen;
  if (auto it = j.find("slices"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("'slices' must be an array");
    for (std::size_t k = 0; k < it->size(); ++k) {
      const json& s = (*it)[k];
      const std::string ctx = "slices[" + std::to_string(k) + "]";
      check_keys(s, {"id", "kind", "seed", "target", "epsilon_min", "epsilon_max"}, ctx);
      SliceConfig sc;
      if (!s.contains("id")) throw ConfigError(ctx + ": missing 'id'");
      sc.id = text(s["id"], ctx + ".id");
      if (!std::regex_match(sc.id, id_re) || sc.id == "passive")
        throw ConfigError(ctx + ": invalid slice id '" + sc.id + "'");
      if (!seen.insert(sc.id).second) throw ConfigError(ctx + ": duplicate slice id '" + sc.id + "'");
      if (!s.contains("kind")) throw ConfigError(ctx + ": missing 'kind'");
      sc.kind = slice_kind_from_string(text(s["kind"], ctx + ".kind"));

      if (!s.contains("seed")) throw ConfigError(ctx + ": missing 'seed'");
      const json& seed = s["seed"];
      check_keys(seed, {"from", "v_avg", "slice", "epsilon"}, ctx + ".seed");
      const std::string from = seed.contains("from") ? text(seed["from"], ctx + ".seed.from") : "";
      if (from == "passive_family") {
        sc.seed.from = SeedSelector::Source::PassiveFamily;
        if (seed.contains("slice") || seed.contains("epsilon"))
          throw ConfigError(ctx + ".seed: 'slice' and 'epsilon' apply to slice seeds only");
        if (seed.contains("v_avg")) sc.seed.v_avg = number(seed["v_avg"], ctx + ".seed.v_avg");
        if (!(sc.seed.v_avg > 0.0)) throw ConfigError(ctx + ".seed.v_avg must be positive");
      } else if (from == "slice") {
        sc.seed.from = SeedSelector::Source::Slice;
        if (seed.contains("v_avg")) throw ConfigError(ctx + ".seed: 'v_avg' applies to passive-family seeds only");
        if (!seed.contains("slice")) throw ConfigError(ctx + ".seed: missing 'slice'");
        sc.seed.slice = text(seed["slice"], ctx + ".seed.slice");
        if (!seen.count(sc.seed.slice) || sc.seed.slice == sc.id)
          throw ConfigError(ctx + ".seed: slice '" + sc.seed.slice + "' is not declared earlier");
        if (seed.contains("epsilon")) sc.seed.epsilon = number(seed["epsilon"], ctx + ".seed.epsilon");
        if (sc.seed.epsilon != 0.0) throw ConfigError(ctx + ".seed: only 'epsilon': 0 is supported");
      } else {
        throw ConfigError(ctx + ".seed.from must be 'passive_family' or 'slice'");
      }

      if (s.contains("target")) {
        check_keys(s["target"], {"gamma_deg", "v_avg"}, ctx + ".target");
        if (s["target"].contains("gamma_deg"))
          sc.target_gamma_deg = number(s["target"]["gamma_deg"], ctx + ".target.gamma_deg");
        if (s["target"].contains("v_avg")) sc.target_v_avg = number(s["target"]["v_avg"], ctx + ".target.v_avg");
      }
      // Validates which targets the kind accepts.
      SliceSpec::resolve(sc.id, sc.kind, {},
                         sc.target_gamma_deg ? std::optional<double>(*sc.target_gamma_deg * kDegToRad) : std::nullopt,
                         sc.target_v_avg, "");
      if (s.contains("epsilon_min")) sc.epsilon_min = number(s["epsilon_min"], ctx + ".epsilon_min");
      if (s.contains("epsilon_max")) sc.epsilon_max = number(s["epsilon_max"], ctx + ".epsilon_max");
      cfg.slices.push_back(std::move(sc));
    }
  }

  std::set<double> speeds;
  for (const auto& s : cfg.slices)
    if (s.seed.from == SeedSelector::Source::PassiveFamily) speeds.insert(s.seed.v_avg);
  if (speeds.size() > 1) throw ConfigError("all passive-family seeds of a run must share one v_avg");
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return from_json(j);
}

ContinuationConfig effective_continuation(const RunConfig& cfg, const RunOptions& opts) {
  ContinuationConfig c = cfg.continuation;
  if (opts.threads) c.threads = *opts.threads;
  if (opts.points) c.target_points_per_branch = *opts.points;
  if (opts.h0) {
    c.h0 = *opts.h0;
    c.h_max = std::max(c.h_max, std::abs(c.h0));
    c.h_min = std::min(c.h_min, std::abs(c.h0));
  }
  if (opts.fixed_h) c.fixed_h = *opts.fixed_h;
  c.validate();
  return c;
}

void print_plan(std::ostream& os, const RunConfig& cfg, const RunOptions& opts) {
  const ContinuationConfig c = effective_continuation(cfg, opts);
  const ModelParams nd = cfg.model.nondimensional();
  os << "plan:\n";
  os << "  model: leg_length=" << cfg.model.leg_length << " hip_mass=" << cfg.model.hip_mass
     << " leg_mass=" << cfg.model.leg_mass << " leg_com_from_hip=" << cfg.model.leg_com_from_hip
     << " gravity=" << cfg.model.gravity << " (nondimensional hip_mass=" << nd.hip_mass
     << " leg_mass=" << nd.leg_mass << ")\n";
  os << "  integrator: RK4, " << cfg.integrator.substeps << " substeps\n";
  os << "  continuation: h0=" << c.h0 << " h_min=" << c.h_min << " h_max=" << c.h_max
     << " points_per_branch=" << c.target_points_per_branch << " tol=" << c.tol << " threads=" << c.threads;
  if (c.fixed_h) os << " fixed_h=" << *c.fixed_h;
  os << '\n';
  const Vec4 g = cfg.passive.x0_guess.to_vector();
  os << "  1. find passive gait from x0=(" << g(0) << ", " << g(1) << ", " << g(2) << ", " << g(3)
     << "), tau=" << cfg.passive.tau_guess << '\n';
  os << "  2. trace passive family, " << cfg.passive.family_points << " points per branch\n";
  int step = 3;
  for (const auto& s : cfg.slices) {
    os << "  " << step++ << ". slice '" << s.id << "' (" << to_string(s.kind) << ") seeded from ";
    if (s.seed.from == SeedSelector::Source::PassiveFamily)
      os << "passive family at v_avg=" << s.seed.v_avg;
    else
      os << "epsilon=0 gait of slice '" << s.seed.slice << "'";
    os << ", target";
    if (s.target_gamma_deg) os << " gamma=" << *s.target_gamma_deg << "deg";
    if (s.target_v_avg) os << " v_avg=" << *s.target_v_avg;
    os << '\n';
  }
  os << "  outputs: " << opts.out_dir << "/library.json, curve_<slice>.csv, stats_<slice>.txt";
  if (opts.dump_trajectories) os << ", traj_<id>.csv";
  os << '\n';
}

std::vector<GaitRecord> ordered_family(const PassiveFamily& fam) {
  std::vector<GaitRecord> out(fam.backward.points.rbegin(), fam.backward.points.rend());
  out.push_back(fam.seed);
  out.insert(out.end(), fam.forward.points.begin(), fam.forward.points.end());
  return out;
}

const GaitRecord* nearest_speed_match(const PassiveFamily& fam) {
  const GaitRecord* best = nullptr;
  for (const auto& r : fam.speed_matches)
    if (!best || r.index < best->index || (r.index == best->index && std::abs(r.step) < std::abs(best->step)))
      best = &r;
  return best;
}

std::string sanitize_id(const std::string& id) {
  std::string s = id;
  for (char& ch : s)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_')) ch = '_';
  return s;
}

PipelineResult run_pipeline(const RunConfig& cfg, const RunOptions& opts, std::ostream& log) {
  PipelineResult result;
  const ContinuationConfig ccfg = effective_continuation(cfg, opts);
  if (opts.dry_run) {
    print_plan(log, cfg, opts);
    return result;
  }

  const ModelParams model = cfg.model.nondimensional();
  const IntegratorOptions& integ = cfg.integrator;
  const fs::path out(opts.out_dir);
  fs::create_directories(out);

  Library lib;
  lib.model = model;
  lib.integrator = integ;
  lib.provenance["config"] = cfg.source;
  lib.provenance["physical_model"] = model_to_json(cfg.model);
  lib.provenance["slices"] = json::array();

  std::string stage = "find-passive";
  std::map<std::string, SliceTrace> traces;

  auto flush_library = [&] {
    write_library((out / "library.json").string(), lib);
    if (std::find(result.files.begin(), result.files.end(), (out / "library.json").string()) == result.files.end())
      result.files.push_back((out / "library.json").string());
  };
  auto dump = [&](const std::vector<GaitRecord>& recs) {
    if (!opts.dump_trajectories) return;
    for (const auto& r : recs) {
      std::ostringstream os;
      write_trajectory_csv(os, r.c, integrate_step(r.c, model, integ));
      write_text(out / ("traj_" + sanitize_id(r.id) + ".csv"), os.str(), result.files);
    }
  };

  try {
    log << "[run] finding passive gait\n";
    const TrajectoryPoint passive = find_passive_gait(cfg.passive.x0_guess, cfg.passive.tau_guess, model, ccfg, integ);

    stage = "trace-passive-family";
    std::optional<double> speed;
    for (const auto& s : cfg.slices)
      if (s.seed.from == SeedSelector::Source::PassiveFamily) speed = s.seed.v_avg;
    ContinuationConfig fcfg = ccfg;
    fcfg.target_points_per_branch = cfg.passive.family_points;
    fcfg.h_max = std::max(cfg.passive.family_h_max, std::abs(fcfg.h0));
    fcfg.fixed_h.reset();
    log << "[run] tracing passive family\n";
    const PassiveFamily fam = trace_passive_family(passive, fcfg, model, speed, integ, &log);
    const auto family = ordered_family(fam);
    lib.records.insert(lib.records.end(), family.begin(), family.end());
    lib.records.insert(lib.records.end(), fam.speed_matches.begin(), fam.speed_matches.end());
    lib.provenance["passive"] = {{"seed_id", fam.seed.id},
                                 {"forward_termination", std::string(to_string(fam.forward.termination))},
                                 {"backward_termination", std::string(to_string(fam.backward.termination))}};
    write_text(out / "curve_passive.csv", csv_string(family), result.files);
    write_text(out / "stats_passive.txt", stats_string("passive", family), result.files);
    dump(family);
    flush_library();

    for (const SliceConfig& sc : cfg.slices) {
      stage = "slice " + sc.id;
      AugmentedPoint seed;
      OperatingPoint seed_op;
      std::optional<double> gamma_ref;
      std::string seed_id;
      if (sc.seed.from == SeedSelector::Source::PassiveFamily) {
        const GaitRecord* match = nearest_speed_match(fam);
        if (!match)
          throw GaitError("passive family has no gait with v_avg = " + std::to_string(sc.seed.v_avg));
        seed.c = match->c;
        seed.lambda.setZero();
        seed_op = {match->gamma, match->v_avg};
        gamma_ref = match->gamma;
        seed_id = match->id;
      } else {
        const SliceTrace& prev = traces.at(sc.seed.slice);
        if (!prev.epsilon_zero) throw GaitError("slice '" + sc.seed.slice + "' did not reach epsilon = 0");
        seed.c = prev.epsilon_zero->c;
        seed.lambda = prev.epsilon_zero->lambda;
        seed_op = {prev.epsilon_zero->gamma, prev.epsilon_zero->v_avg};
        gamma_ref = prev.epsilon_zero->gamma;
        seed_id = prev.epsilon_zero->id;
      }
      seed.epsilon = 1.0;
      const SliceSpec spec = SliceSpec::resolve(
          sc.id, sc.kind, seed_op,
          sc.target_gamma_deg ? std::optional<double>(*sc.target_gamma_deg * kDegToRad) : std::nullopt,
          sc.target_v_avg, seed_id);
      ContinuationConfig scfg = ccfg;
      if (sc.epsilon_min) scfg.epsilon_min = *sc.epsilon_min;
      if (sc.epsilon_max) scfg.epsilon_max = *sc.epsilon_max;

      log << "[run] tracing slice '" << sc.id << "' from " << seed_id << '\n';
      SliceTrace trace = trace_slice(seed, spec, scfg, model, integ, gamma_ref, &log);
      const auto points = trace.ordered_points();
      lib.records.insert(lib.records.end(), points.begin(), points.end());

      SliceOutcome so;
      so.id = sc.id;
      so.completed = trace.completed();
      so.forward_termination = std::string(to_string(trace.forward.termination));
      so.backward_termination = std::string(to_string(trace.backward.termination));
      if (trace.epsilon_zero) so.epsilon_zero_id = trace.epsilon_zero->id;
      result.slices.push_back(so);

      lib.provenance["slices"].push_back(
          {{"id", sc.id},
           {"kind", std::string(to_string(sc.kind))},
           {"seed_id", seed_id},
           {"p_des", op_json(spec.p_des)},
           {"seed_operating_point", op_json(trace.seed_operating_point)},
           {"forward", {{"termination", so.forward_termination}, {"message", trace.forward.message}}},
           {"backward", {{"termination", so.backward_termination}, {"message", trace.backward.message}}},
           {"epsilon_zero_id", so.epsilon_zero_id ? json(*so.epsilon_zero_id) : json(nullptr)},
           {"completed", so.completed}});

      write_text(out / ("curve_" + sc.id + ".csv"), csv_string(points), result.files);
      write_text(out / ("stats_" + sc.id + ".txt"), stats_string(sc.id, points), result.files);
      dump(points);
      flush_library();
      if (!so.completed) result.exit_code = kExitIncomplete;
      traces.emplace(sc.id, std::move(trace));
    }
  } catch (const std::exception& e) {
    result.exit_code = kExitFailure;
    result.failure = stage + ": " + e.what();
    log << "[run] failed at " << result.failure << '\n';
    json manifest = {{"stage", stage}, {"error", e.what()}, {"outputs", result.files}};
    try {
      flush_library();
      write_text(out / "failure.json", manifest.dump(1) + "\n", result.files);
    } catch (const std::exception& e2) {
      log << "[run] could not write failure manifest: " << e2.what() << '\n';
    }
  }
  return result;
}

}  // namespace optgait
