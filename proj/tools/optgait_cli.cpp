// optgait command-line interface.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>

#include "optgait/pipeline.hpp"

using namespace optgait;
namespace fs = std::filesystem;

namespace {

struct Args {
  std::string config;
  std::string out = "out";
  std::string library;
  std::string slice;
  std::optional<int> points, threads;
  std::optional<double> h0, fixed_h;
  double tol = 1e-8;
  bool dump = false;
  bool dry_run = false;
};

RunConfig load_config(const Args& a) {
  if (a.config.empty()) return RunConfig::from_json(nlohmann::json::object());
  return RunConfig::load(a.config);
}

RunOptions run_options(const Args& a) {
  RunOptions o;
  o.out_dir = a.out;
  o.dry_run = a.dry_run;
  o.dump_trajectories = a.dump;
  o.threads = a.threads;
  o.points = a.points;
  o.h0 = a.h0;
  o.fixed_h = a.fixed_h;
  return o;
}

std::map<std::string, std::vector<GaitRecord>> by_slice(const Library& lib) {
  std::map<std::string, std::vector<GaitRecord>> out;
  for (const auto& r : lib.records) out[r.slice_id].push_back(r);
  return out;
}

int report(const PipelineResult& r) {
  for (const auto& s : r.slices) {
    std::cout << "slice " << s.id << ": forward " << s.forward_termination << ", backward "
              << s.backward_termination << ", epsilon=0 " << (s.epsilon_zero_id ? *s.epsilon_zero_id : "not reached")
              << (s.completed ? "" : " [incomplete]") << '\n';
  }
  for (const auto& f : r.files) std::cout << "wrote " << f << '\n';
  if (!r.failure.empty()) std::cerr << "error: " << r.failure << '\n';
  return r.exit_code;
}

int cmd_find_passive(const Args& a) {
  const RunConfig cfg = load_config(a);
  const ContinuationConfig ccfg = effective_continuation(cfg, run_options(a));
  if (a.dry_run) {
    print_plan(std::cout, cfg, run_options(a));
    return kExitOk;
  }
  const ModelParams model = cfg.model.nondimensional();
  const TrajectoryPoint c = find_passive_gait(cfg.passive.x0_guess, cfg.passive.tau_guess, model, ccfg, cfg.integrator);
  const GaitRecord r = make_passive_record(c, model, "passive:seed", "passive", cfg.integrator);
  std::cout << record_to_json(r).dump(2) << '\n';
  if (!a.out.empty() && a.out != "-") {
    fs::create_directories(a.out);
    Library lib{model, cfg.integrator, {{"config", cfg.source}}, {r}};
    const std::string path = (fs::path(a.out) / "library.json").string();
    write_library(path, lib);
    std::cout << "wrote " << path << '\n';
  }
  return kExitOk;
}

int cmd_trace(const Args& a) {
  RunConfig cfg = load_config(a);
  if (!a.slice.empty()) {
    // Keep the requested slice and the slices its seed chain depends on.
    std::set<std::string> needed{a.slice};
    for (auto it = cfg.slices.rbegin(); it != cfg.slices.rend(); ++it)
      if (needed.count(it->id) && it->seed.from == SeedSelector::Source::Slice) needed.insert(it->seed.slice);
    if (std::none_of(cfg.slices.begin(), cfg.slices.end(), [&](const SliceConfig& s) { return s.id == a.slice; }))
      throw ConfigError("unknown slice '" + a.slice + "'");
    std::erase_if(cfg.slices, [&](const SliceConfig& s) { return !needed.count(s.id); });
  } else {
    cfg.slices.clear();
  }
  return report(run_pipeline(cfg, run_options(a), std::cerr));
}

int cmd_run(const Args& a) {
  const RunConfig cfg = load_config(a);
  return report(run_pipeline(cfg, run_options(a), std::cerr));
}

int cmd_stats(const Args& a) {
  const Library lib = read_library(a.library, &std::cerr);
  int shown = 0;
  for (const auto& [id, recs] : by_slice(lib)) {
    if (!a.slice.empty() && id != a.slice) continue;
    write_statistics(std::cout, id, curve_statistics(recs));
    std::cout << '\n';
    ++shown;
  }
  if (!shown) throw ConfigError("no records for slice '" + a.slice + "'");
  return kExitOk;
}

int cmd_export_plot(const Args& a) {
  const Library lib = read_library(a.library, &std::cerr);
  fs::create_directories(a.out);
  for (const auto& [id, recs] : by_slice(lib)) {
    if (!a.slice.empty() && id != a.slice) continue;
    const fs::path path = fs::path(a.out) / ("curve_" + sanitize_id(id) + ".csv");
    std::ofstream os(path, std::ios::binary);
    write_curve_csv(os, recs);
    std::cout << "wrote " << path.string() << '\n';
  }
  return kExitOk;
}

int cmd_validate(const Args& a) {
  const Library lib = read_library(a.library, &std::cerr);
  const auto checks = validate_records(lib.records, lib.model, lib.integrator, a.tol);
  std::size_t bad = 0;
  for (const auto& c : checks) {
    if (c.ok) continue;
    ++bad;
    std::cout << "FAIL " << c.id << " deviation=" << c.max_deviation;
    if (!c.error.empty()) std::cout << " error=" << c.error;
    std::cout << '\n';
  }
  std::cout << checks.size() - bad << "/" << checks.size() << " records re-validated\n";
  return bad ? kExitFailure : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Passive and energetically optimal compass-gait gaits"};
  app.set_version_flag("--version", OPTGAIT_VERSION);
  app.require_subcommand(1);
  Args a;

  auto add_run_flags = [&](CLI::App* sub) {
    sub->add_option("--config", a.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--out", a.out, "Output directory");
    sub->add_option("--points", a.points, "Points per branch")->check(CLI::PositiveNumber);
    sub->add_option("--h0", a.h0, "Initial signed arclength step");
    sub->add_option("--fixed-h", a.fixed_h, "Constant step magnitude")->check(CLI::PositiveNumber);
    sub->add_option("--threads", a.threads, "Threads per trace (1 or 2)")->check(CLI::Range(1, 64));
    sub->add_flag("--dump-trajectories", a.dump, "Write traj_<id>.csv for every gait");
    sub->add_flag("--dry-run", a.dry_run, "Validate the config and print the plan");
  };

  auto* find = app.add_subcommand("find-passive", "Find the passive gait from the configured guess");
  find->add_option("--config", a.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
  find->add_option("--out", a.out, "Output directory for library.json ('-' for none)");
  find->add_flag("--dry-run", a.dry_run, "Validate the config and print the plan");

  auto* trace = app.add_subcommand("trace", "Trace the passive family, or one slice with its prerequisites");
  add_run_flags(trace);
  trace->add_option("--slice", a.slice, "Slice id from the config");

  auto* run = app.add_subcommand("run", "Run the whole configured chain");
  add_run_flags(run);

  auto* stats = app.add_subcommand("stats", "Curve statistics of a library");
  stats->add_option("--library", a.library, "Library file")->required()->check(CLI::ExistingFile);
  stats->add_option("--slice", a.slice, "Only this slice");

  auto* plot = app.add_subcommand("export-plot", "Write curve CSVs from a library");
  plot->add_option("--library", a.library, "Library file")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", a.out, "Output directory");
  plot->add_option("--slice", a.slice, "Only this slice");

  auto* validate = app.add_subcommand("validate", "Re-check every record of a library");
  validate->add_option("--library", a.library, "Library file")->required()->check(CLI::ExistingFile);
  validate->add_option("--tol", a.tol, "Continuation tolerance the library was traced with");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*find) return cmd_find_passive(a);
    if (*trace) return cmd_trace(a);
    if (*run) return cmd_run(a);
    if (*stats) return cmd_stats(a);
    if (*plot) return cmd_export_plot(a);
    if (*validate) return cmd_validate(a);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DomainError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}
