#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "oracles.hpp"
#include "optgait/library.hpp"

using namespace optgait;
using doctest::Approx;

namespace {

GaitRecord with_cost(double j) {
  GaitRecord r;
  r.cost = j;
  r.id = "s:" + std::to_string(j);
  r.slice_id = "s";
  return r;
}

const std::vector<GaitRecord>& traced_records() {
  static const std::vector<GaitRecord> recs = [] {
    const ModelParams p = oracle::model();
    const TrajectoryPoint& c = oracle::passive_seed();
    const GaitRecord passive = make_passive_record(c, p, "passive:seed", "passive");
    AugmentedPoint seed;
    seed.c = c;
    const SliceSpec spec = SliceSpec::resolve("cv", SliceKind::ConstantVelocity, {passive.gamma, passive.v_avg}, 0.0,
                                              std::nullopt, passive.id);
    ContinuationConfig cfg;
    cfg.target_points_per_branch = 3;
    const SliceTrace trace = trace_slice(seed, spec, cfg, p, {}, passive.gamma);
    std::vector<GaitRecord> out = trace.ordered_points();
    out.insert(out.begin(), passive);
    return out;
  }();
  return recs;
}

Library sample_library() {
  Library lib;
  lib.model = oracle::model();
  lib.provenance = {{"seed_id", "passive:seed"}, {"note", "unit test"}};
  lib.records = traced_records();
  return lib;
}

}  // namespace

TEST_CASE("gait classification follows the inequality boundaries") {
  CHECK(classify_gait_deg(-24.9) == GaitClass::DownhillWalking);
  CHECK(classify_gait_deg(0.0) == GaitClass::UphillWalking);
  CHECK(classify_gait_deg(-180.0) == GaitClass::UphillBrachiation);
  CHECK(classify_gait_deg(-180.0001) == GaitClass::UphillBrachiation);
  CHECK(classify_gait_deg(-179.999) == GaitClass::DownhillBrachiation);
  CHECK(classify_gait_deg(-90.0) == GaitClass::DownhillBrachiation);
  CHECK(classify_gait_deg(-89.999) == GaitClass::DownhillWalking);
  CHECK(classify_gait_deg(89.999) == GaitClass::UphillWalking);
  CHECK_THROWS_AS(classify_gait_deg(90.0), ClassificationError);
  CHECK_THROWS_AS(classify_gait_deg(std::nan("")), ClassificationError);
  CHECK(classify_gait(-24.9 * M_PI / 180.0) == GaitClass::DownhillWalking);
  for (GaitClass g : {GaitClass::UphillBrachiation, GaitClass::DownhillBrachiation, GaitClass::DownhillWalking,
                      GaitClass::UphillWalking})
    CHECK(gait_class_from_string(to_string(g)) == g);
  CHECK_THROWS_AS(gait_class_from_string("sideways"), ParseError);
}

TEST_CASE("slice specs fix the right component") {
  const OperatingPoint seed{-0.4, 0.7};
  const SliceSpec v = SliceSpec::resolve("v", SliceKind::ConstantVelocity, seed, 0.1, std::nullopt, "x");
  CHECK(v.p_des.gamma == 0.1);
  CHECK(v.p_des.v_avg == 0.7);
  CHECK(v.interpolates_gamma());
  CHECK_FALSE(v.interpolates_speed());
  const SliceSpec s = SliceSpec::resolve("s", SliceKind::ConstantSlope, seed, std::nullopt, 3.0, "x");
  CHECK(s.p_des.gamma == -0.4);
  CHECK(s.p_des.v_avg == 3.0);
  const SliceSpec c = SliceSpec::resolve("c", SliceKind::Custom, seed, 0.2, 1.0, "x");
  CHECK(c.p_des.gamma == 0.2);
  CHECK(c.p_des.v_avg == 1.0);
  CHECK_THROWS_AS(SliceSpec::resolve("v", SliceKind::ConstantVelocity, seed, std::nullopt, std::nullopt, "x"),
                  ConfigError);
  CHECK_THROWS_AS(SliceSpec::resolve("v", SliceKind::ConstantVelocity, seed, 0.0, 1.0, "x"), ConfigError);
  CHECK_THROWS_AS(SliceSpec::resolve("s", SliceKind::ConstantSlope, seed, 0.0, 1.0, "x"), ConfigError);
  CHECK(slice_kind_from_string("constant_slope") == SliceKind::ConstantSlope);
  CHECK_THROWS_AS(slice_kind_from_string("diagonal"), ConfigError);
}

TEST_CASE("quartiles use linear interpolation between order statistics") {
  CHECK(quantile({4, 1, 3, 2}, 0.25) == Approx(1.75));
  CHECK(quantile({4, 1, 3, 2}, 0.5) == Approx(2.5));
  CHECK(quantile({4, 1, 3, 2}, 0.75) == Approx(3.25));
  CHECK(quantile({5}, 0.75) == 5);

  std::vector<GaitRecord> recs = {with_cost(3), with_cost(1), with_cost(4), with_cost(2)};
  const CurveStatistics s = curve_statistics(recs);
  CHECK(s.q1 == Approx(1.75));
  CHECK(s.q2 == Approx(2.5));
  CHECK(s.q3 == Approx(3.25));
  CHECK(s.cost_min == 1);
  CHECK(s.cost_max == 4);
  CHECK(s.quartile == std::vector<int>{3, 1, 4, 2});

  const std::vector<GaitRecord> passive(6, with_cost(0.0));
  const CurveStatistics z = curve_statistics(passive);
  CHECK(z.q1 == 0.0);
  CHECK(z.q2 == 0.0);
  CHECK(z.q3 == 0.0);

  recs.pop_back();
  CHECK_THROWS_AS(curve_statistics(recs), GaitError);
}

TEST_CASE("statistics report") {
  const CurveStatistics s = curve_statistics(traced_records());
  std::ostringstream os;
  write_statistics(os, "cv", s);
  const std::string text = os.str();
  CHECK(text.find("slice: cv") != std::string::npos);
  CHECK(text.find("cost quartile bounds") != std::string::npos);
  CHECK(text.find("downhill_walking=") != std::string::npos);
}

TEST_CASE("curve CSV") {
  const auto& recs = traced_records();
  CHECK(kCurveCsvColumns.size() == 2 + 8 + 6 + 7);
  std::ostringstream a, b;
  write_curve_csv(a, recs);
  write_curve_csv(b, recs);
  CHECK(a.str() == b.str());

  std::istringstream is(a.str());
  std::string header;
  std::getline(is, header);
  CHECK(std::count(header.begin(), header.end(), ',') == 22);

  std::istringstream in(a.str());
  const auto back = read_curve_csv(in);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].id == recs[i].id);
    CHECK(back[i].slice_id == recs[i].slice_id);
    CHECK(back[i].epsilon == recs[i].epsilon);
    CHECK(back[i].c == recs[i].c);
    CHECK(back[i].lambda == recs[i].lambda);
    CHECK(back[i].gamma == recs[i].gamma);
    CHECK(back[i].cost == recs[i].cost);
    CHECK(back[i].condition_number == recs[i].condition_number);
    CHECK(back[i].classification == recs[i].classification);
  }

  std::istringstream bad("id,epsilon\nx,1\n");
  CHECK_THROWS_AS(read_curve_csv(bad), ParseError);
  std::string broken = a.str();
  broken.replace(broken.find(",1,", header.size()), 3, ",one,");
  std::istringstream bad_field(broken);
  try {
    read_curve_csv(bad_field);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("library JSON round-trip is exact") {
  Library lib = sample_library();
  GaitRecord odd = lib.records.back();
  odd.id = "cv:odd";
  odd.condition_number = std::numeric_limits<double>::infinity();
  odd.classification.reset();
  odd.step = -0.125;
  lib.records.push_back(odd);

  std::stringstream ss;
  write_library(ss, lib);
  std::ostringstream warn;
  const Library back = read_library(ss, &warn);
  CHECK(warn.str().empty());
  CHECK(back.model == lib.model);
  CHECK(back.integrator.substeps == lib.integrator.substeps);
  CHECK(back.provenance == lib.provenance);
  REQUIRE(back.records.size() == lib.records.size());
  for (std::size_t i = 0; i < lib.records.size(); ++i) CHECK(back.records[i] == lib.records[i]);
  CHECK(std::isinf(back.records.back().condition_number));
  CHECK_FALSE(back.records.back().classification.has_value());

  std::stringstream again;
  write_library(again, back);
  std::stringstream first;
  write_library(first, lib);
  CHECK(again.str() == first.str());
}

TEST_CASE("a model hash mismatch warns and loads") {
  const Library lib = sample_library();
  std::stringstream ss;
  write_library(ss, lib);
  nlohmann::json j = nlohmann::json::parse(ss.str());
  j["model"]["hip_mass"] = 0.5;
  std::istringstream is(j.dump());
  std::ostringstream warn;
  const Library back = read_library(is, &warn);
  CHECK(warn.str().find("hash") != std::string::npos);
  CHECK(back.model.hip_mass == 0.5);
  CHECK(back.records.size() == lib.records.size());
  CHECK(model_params_hash(lib.model) != model_params_hash(back.model));
}

TEST_CASE("malformed libraries report where") {
  std::istringstream truncated("{\n  \"format\": \"optgait-library\",\n  \"model\": {\n");
  try {
    read_library(truncated);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line") != std::string::npos);
  }

  std::stringstream ss;
  write_library(ss, sample_library());
  nlohmann::json j = nlohmann::json::parse(ss.str());
  j["records"][1]["tau"] = "long";
  std::istringstream is(j.dump(1));
  try {
    read_library(is);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("tau") != std::string::npos);
    CHECK(msg.find("record 1") != std::string::npos);
  }

  j = nlohmann::json::parse(ss.str());
  j["records"][0].erase("lambda");
  std::istringstream missing(j.dump());
  CHECK_THROWS_AS(read_library(missing), ParseError);
}

TEST_CASE("stored residuals re-validate") {
  const auto& recs = traced_records();
  const auto checks = validate_records(recs, oracle::model(), {}, 1e-8);
  REQUIRE(checks.size() == recs.size());
  for (const auto& c : checks) {
    CHECK(c.ok);
    CHECK(c.error.empty());
    CHECK(c.max_deviation <= 1e-7);
  }

  std::vector<GaitRecord> tampered = recs;
  tampered.back().c.x0.qdot(0) += 1e-3;
  const auto bad = validate_records(tampered, oracle::model(), {}, 1e-8);
  CHECK_FALSE(bad.back().ok);
}
