#include "optgait/library.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

#include "optgait/gaitmaps.hpp"

namespace optgait {

using nlohmann::json;

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Non-finite numbers are not representable in JSON; they travel as strings.
json num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double get_num(const json& j, const std::string& field) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    if (s == "nan") return NAN;
  }
  throw ParseError("field '" + field + "': expected a number");
}

const json& field(const json& j, const std::string& key, const std::string& context) {
  if (!j.is_object()) throw ParseError(context + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(context + ": missing field '" + key + "'");
  return *it;
}

template <typename Vec>
json vec_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
  return a;
}

template <typename Vec>
Vec vec_from(const json& j, const std::string& name) {
  Vec v;
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != v.size())
    throw ParseError("field '" + name + "': expected an array of " + std::to_string(v.size()) + " numbers");
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = get_num(j[i], name + "[" + std::to_string(i) + "]");
  return v;
}

// Byte offset to 1-based line and column.
std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t offset) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(offset, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, std::size_t line, const std::string& column) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (s.empty() || end != begin + s.size())
    throw ParseError("line " + std::to_string(line) + ", field '" + column + "': cannot parse '" + s + "' as number");
  return v;
}

std::string hash_hex(const ModelParams& p) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(model_params_hash(p)));
  return buf;
}

}  // namespace

// Records ---------------------------------------------------------------------

std::string_view to_string(GaitClass c) {
  switch (c) {
    case GaitClass::UphillBrachiation: return "uphill_brachiation";
    case GaitClass::DownhillBrachiation: return "downhill_brachiation";
    case GaitClass::DownhillWalking: return "downhill_walking";
    case GaitClass::UphillWalking: return "uphill_walking";
  }
  return "uphill_walking";
}

GaitClass gait_class_from_string(std::string_view s) {
  for (auto c : {GaitClass::UphillBrachiation, GaitClass::DownhillBrachiation, GaitClass::DownhillWalking,
                 GaitClass::UphillWalking})
    if (to_string(c) == s) return c;
  throw ParseError("unknown gait class '" + std::string(s) + "'");
}

GaitClass classify_gait_deg(double g) {
  if (!std::isfinite(g)) throw ClassificationError("slope is not finite");
  if (g <= -180.0) return GaitClass::UphillBrachiation;
  if (g <= -90.0) return GaitClass::DownhillBrachiation;
  if (g < 0.0) return GaitClass::DownhillWalking;
  if (g < 90.0) return GaitClass::UphillWalking;
  throw ClassificationError("slope " + fmt17(g) + " deg is outside the gait taxonomy");
}

GaitClass classify_gait(double gamma_rad) { return classify_gait_deg(gamma_rad * kRadToDeg); }

std::string_view to_string(SliceKind k) {
  switch (k) {
    case SliceKind::ConstantVelocity: return "constant_velocity";
    case SliceKind::ConstantSlope: return "constant_slope";
    case SliceKind::Custom: return "custom";
  }
  return "custom";
}

SliceKind slice_kind_from_string(std::string_view s) {
  for (auto k : {SliceKind::ConstantVelocity, SliceKind::ConstantSlope, SliceKind::Custom})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown slice kind '" + std::string(s) + "'");
}

SliceSpec SliceSpec::resolve(std::string id, SliceKind kind, const OperatingPoint& seed_op,
                             std::optional<double> target_gamma, std::optional<double> target_speed,
                             std::string seed_ref) {
  SliceSpec s;
  s.id = std::move(id);
  s.kind = kind;
  s.seed_ref = std::move(seed_ref);
  s.p_des = seed_op;
  if (s.interpolates_gamma()) {
    if (!target_gamma) throw ConfigError("slice '" + s.id + "' needs a target slope");
    s.p_des.gamma = *target_gamma;
  } else if (target_gamma) {
    throw ConfigError("slice '" + s.id + "' holds the slope fixed; a target slope is not allowed");
  }
  if (s.interpolates_speed()) {
    if (!target_speed) throw ConfigError("slice '" + s.id + "' needs a target speed");
    s.p_des.v_avg = *target_speed;
  } else if (target_speed) {
    throw ConfigError("slice '" + s.id + "' holds the speed fixed; a target speed is not allowed");
  }
  return s;
}

bool operator==(const GaitRecord& a, const GaitRecord& b) {
  return a.id == b.id && a.slice_id == b.slice_id && a.epsilon == b.epsilon && a.c == b.c && a.lambda == b.lambda &&
         a.gamma == b.gamma && a.gamma_deg == b.gamma_deg && a.v_avg == b.v_avg && a.cost == b.cost &&
         a.scheduled.gamma == b.scheduled.gamma && a.scheduled.v_avg == b.scheduled.v_avg &&
         a.residual_inf == b.residual_inf && a.periodicity_inf == b.periodicity_inf &&
         a.operating_inf == b.operating_inf && a.stationarity_inf == b.stationarity_inf &&
         a.classification == b.classification &&
         (a.condition_number == b.condition_number ||
          (std::isnan(a.condition_number) && std::isnan(b.condition_number))) &&
         a.transversality_ok == b.transversality_ok && a.near_passive == b.near_passive &&
         a.distinguished == b.distinguished && a.branch == b.branch && a.index == b.index &&
         a.newton_iterations == b.newton_iterations && a.step == b.step;
}

// Statistics ------------------------------------------------------------------

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw GaitError("quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

CurveStatistics curve_statistics(const std::vector<GaitRecord>& records) {
  if (records.size() < 4)
    throw GaitError("curve statistics need at least 4 points, got " + std::to_string(records.size()));
  CurveStatistics s;
  s.count = records.size();
  std::vector<double> costs;
  for (const auto& r : records) costs.push_back(r.cost);
  s.q1 = quantile(costs, 0.25);
  s.q2 = quantile(costs, 0.5);
  s.q3 = quantile(costs, 0.75);
  s.cost_median = s.q2;
  s.cost_min = *std::min_element(costs.begin(), costs.end());
  s.cost_max = *std::max_element(costs.begin(), costs.end());

  auto range = [&](auto get) {
    Range r{INFINITY, -INFINITY};
    for (const auto& rec : records) {
      r.min = std::min(r.min, get(rec));
      r.max = std::max(r.max, get(rec));
    }
    return r;
  };
  s.gamma_deg = range([](const GaitRecord& r) { return r.gamma_deg; });
  s.tau = range([](const GaitRecord& r) { return r.c.tau; });
  s.v_avg = range([](const GaitRecord& r) { return r.v_avg; });

  std::map<std::string, std::size_t> counts;
  for (const auto& r : records) {
    s.quartile.push_back(r.cost <= s.q1 ? 1 : r.cost <= s.q2 ? 2 : r.cost <= s.q3 ? 3 : 4);
    ++counts[r.classification_name()];
  }
  s.class_counts.assign(counts.begin(), counts.end());
  return s;
}

void write_statistics(std::ostream& os, const std::string& slice_id, const CurveStatistics& s) {
  char buf[256];
  os << "slice: " << slice_id << '\n';
  os << "points: " << s.count << '\n';
  std::snprintf(buf, sizeof buf, "cost quartile bounds (J0): q1=%.6g q2=%.6g q3=%.6g\n", s.q1, s.q2, s.q3);
  os << buf;
  std::snprintf(buf, sizeof buf, "cost (J0): min=%.6g median=%.6g max=%.6g\n", s.cost_min, s.cost_median, s.cost_max);
  os << buf;
  std::snprintf(buf, sizeof buf, "slope (deg): %.6g .. %.6g\n", s.gamma_deg.min, s.gamma_deg.max);
  os << buf;
  std::snprintf(buf, sizeof buf, "step duration (t0): %.6g .. %.6g\n", s.tau.min, s.tau.max);
  os << buf;
  std::snprintf(buf, sizeof buf, "average speed (v0): %.6g .. %.6g\n", s.v_avg.min, s.v_avg.max);
  os << buf;
  os << "classes:";
  for (const auto& [name, n] : s.class_counts) os << ' ' << name << '=' << n;
  os << '\n';
  std::size_t per[4] = {0, 0, 0, 0};
  for (int q : s.quartile) ++per[q - 1];
  os << "quartile tags: q1=" << per[0] << " q2=" << per[1] << " q3=" << per[2] << " q4=" << per[3] << '\n';
}

// CSV -------------------------------------------------------------------------

const std::vector<std::string> kCurveCsvColumns = {
    "id",         "epsilon",     "q1",         "q2",        "qd1",     "qd2",    "tau",      "a1",
    "a2",         "a3",          "lambda1",    "lambda2",   "lambda3", "lambda4", "lambda5", "lambda6",
    "gamma_rad",  "gamma_deg",   "v_avg",      "cost",      "residual_inf", "classification",
    "condition_number"};

void write_curve_csv(std::ostream& os, const std::vector<GaitRecord>& records) {
  for (std::size_t i = 0; i < kCurveCsvColumns.size(); ++i) os << (i ? "," : "") << kCurveCsvColumns[i];
  os << '\n';
  for (const auto& r : records) {
    os << r.id << ',' << fmt17(r.epsilon);
    const TrajVec c = r.c.to_vector();
    for (int i = 0; i < kTrajDim; ++i) os << ',' << fmt17(c(i));
    for (int i = 0; i < kMultiplierDim; ++i) os << ',' << fmt17(r.lambda(i));
    os << ',' << fmt17(r.gamma) << ',' << fmt17(r.gamma_deg) << ',' << fmt17(r.v_avg) << ',' << fmt17(r.cost) << ','
       << fmt17(r.residual_inf) << ',' << r.classification_name() << ',' << fmt17(r.condition_number) << '\n';
  }
}

std::vector<GaitRecord> read_curve_csv(std::istream& is) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(is, line)) throw ParseError("line 1: missing CSV header");
  const auto header = split_csv_line(line);
  if (header != kCurveCsvColumns) throw ParseError("line 1: unexpected CSV header");
  std::vector<GaitRecord> out;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != kCurveCsvColumns.size())
      throw ParseError("line " + std::to_string(lineno) + ": expected " + std::to_string(kCurveCsvColumns.size()) +
                       " fields, got " + std::to_string(f.size()));
    auto d = [&](std::size_t i) { return parse_double(f[i], lineno, kCurveCsvColumns[i]); };
    GaitRecord r;
    r.id = f[0];
    r.epsilon = d(1);
    TrajVec c;
    for (int i = 0; i < kTrajDim; ++i) c(i) = d(2 + i);
    r.c = TrajectoryPoint::from_vector(c);
    for (int i = 0; i < kMultiplierDim; ++i) r.lambda(i) = d(10 + i);
    r.gamma = d(16);
    r.gamma_deg = d(17);
    r.v_avg = d(18);
    r.cost = d(19);
    r.residual_inf = d(20);
    if (f[21] != "out_of_taxonomy") {
      try {
        r.classification = gait_class_from_string(f[21]);
      } catch (const ParseError&) {
        throw ParseError("line " + std::to_string(lineno) + ", field 'classification': unknown class '" + f[21] + "'");
      }
    }
    r.condition_number = d(22);
    const auto colon = r.id.rfind(':');
    r.slice_id = colon == std::string::npos ? std::string() : r.id.substr(0, colon);
    out.push_back(std::move(r));
  }
  return out;
}

// JSON ------------------------------------------------------------------------

json model_to_json(const ModelParams& p) {
  return json{{"leg_length", p.leg_length},
              {"hip_mass", p.hip_mass},
              {"leg_mass", p.leg_mass},
              {"leg_com_from_hip", p.leg_com_from_hip},
              {"gravity", p.gravity}};
}

ModelParams model_from_json(const json& j) {
  ModelParams p;
  p.leg_length = get_num(field(j, "leg_length", "model"), "model.leg_length");
  p.hip_mass = get_num(field(j, "hip_mass", "model"), "model.hip_mass");
  p.leg_mass = get_num(field(j, "leg_mass", "model"), "model.leg_mass");
  p.leg_com_from_hip = get_num(field(j, "leg_com_from_hip", "model"), "model.leg_com_from_hip");
  p.gravity = get_num(field(j, "gravity", "model"), "model.gravity");
  return p;
}

std::uint64_t model_params_hash(const ModelParams& p) {
  const std::string s = model_to_json(p).dump();
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

json record_to_json(const GaitRecord& r) {
  return json{{"id", r.id},
              {"slice_id", r.slice_id},
              {"epsilon", num(r.epsilon)},
              {"x0", vec_json(r.c.x0.to_vector())},
              {"tau", num(r.c.tau)},
              {"a", vec_json(r.c.a.a)},
              {"lambda", vec_json(r.lambda)},
              {"gamma_rad", num(r.gamma)},
              {"gamma_deg", num(r.gamma_deg)},
              {"v_avg", num(r.v_avg)},
              {"cost", num(r.cost)},
              {"scheduled", {{"gamma", num(r.scheduled.gamma)}, {"v_avg", num(r.scheduled.v_avg)}}},
              {"residual_inf", num(r.residual_inf)},
              {"periodicity_inf", num(r.periodicity_inf)},
              {"operating_inf", num(r.operating_inf)},
              {"stationarity_inf", num(r.stationarity_inf)},
              {"classification", r.classification_name()},
              {"condition_number", num(r.condition_number)},
              {"transversality_ok", r.transversality_ok},
              {"near_passive", r.near_passive},
              {"distinguished", r.distinguished},
              {"branch", r.branch},
              {"index", r.index},
              {"newton_iterations", r.newton_iterations},
              {"step", num(r.step)}};
}

GaitRecord record_from_json(const json& j) {
  const std::string ctx = "record";
  auto n = [&](const char* key) { return get_num(field(j, key, ctx), key); };
  auto b = [&](const char* key) {
    const json& v = field(j, key, ctx);
    if (!v.is_boolean()) throw ParseError(std::string("field '") + key + "': expected a boolean");
    return v.get<bool>();
  };
  auto i = [&](const char* key) {
    const json& v = field(j, key, ctx);
    if (!v.is_number_integer()) throw ParseError(std::string("field '") + key + "': expected an integer");
    return v.get<int>();
  };
  auto s = [&](const char* key) {
    const json& v = field(j, key, ctx);
    if (!v.is_string()) throw ParseError(std::string("field '") + key + "': expected a string");
    return v.get<std::string>();
  };

  GaitRecord r;
  r.id = s("id");
  r.slice_id = s("slice_id");
  r.epsilon = n("epsilon");
  r.c.x0 = State::from_vector(vec_from<Vec4>(field(j, "x0", ctx), "x0"));
  r.c.tau = n("tau");
  r.c.a.a = vec_from<Vec3>(field(j, "a", ctx), "a");
  r.lambda = vec_from<MultVec>(field(j, "lambda", ctx), "lambda");
  r.gamma = n("gamma_rad");
  r.gamma_deg = n("gamma_deg");
  r.v_avg = n("v_avg");
  r.cost = n("cost");
  const json& sch = field(j, "scheduled", ctx);
  r.scheduled.gamma = get_num(field(sch, "gamma", "scheduled"), "scheduled.gamma");
  r.scheduled.v_avg = get_num(field(sch, "v_avg", "scheduled"), "scheduled.v_avg");
  r.residual_inf = n("residual_inf");
  r.periodicity_inf = n("periodicity_inf");
  r.operating_inf = n("operating_inf");
  r.stationarity_inf = n("stationarity_inf");
  const std::string cls = s("classification");
  if (cls != "out_of_taxonomy") {
    try {
      r.classification = gait_class_from_string(cls);
    } catch (const ParseError&) {
      throw ParseError("field 'classification': unknown class '" + cls + "'");
    }
  }
  r.condition_number = n("condition_number");
  r.transversality_ok = b("transversality_ok");
  r.near_passive = b("near_passive");
  r.distinguished = b("distinguished");
  r.branch = i("branch");
  r.index = i("index");
  r.newton_iterations = i("newton_iterations");
  r.step = n("step");
  return r;
}

void write_library(std::ostream& os, const Library& lib) {
  json j;
  j["format"] = "optgait-library";
  j["code_version"] = OPTGAIT_VERSION;
  j["model"] = model_to_json(lib.model);
  j["model_hash"] = hash_hex(lib.model);
  j["integrator"] = {{"substeps", lib.integrator.substeps}};
  j["provenance"] = lib.provenance;
  json recs = json::array();
  for (const auto& r : lib.records) recs.push_back(record_to_json(r));
  j["records"] = std::move(recs);
  os << j.dump(1) << '\n';
}

void write_library(const std::string& path, const Library& lib) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw GaitError("cannot open '" + path + "' for writing");
  write_library(os, lib);
  if (!os) throw GaitError("failed writing '" + path + "'");
}

Library read_library(std::istream& is, std::ostream* warn) {
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string text = ss.str();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_col(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ParseError("line " + std::to_string(line) + ", column " + std::to_string(col) + ": malformed JSON (" +
                     e.what() + ")");
  }
  if (!j.is_object()) throw ParseError("library: expected a JSON object");

  // Locates the line of the n-th record in the source for diagnostics.
  auto record_line = [&](std::size_t n) -> std::size_t {
    std::size_t pos = text.find("\"records\"");
    for (std::size_t k = 0; pos != std::string::npos && k <= n; ++k) pos = text.find("\"id\"", pos + 1);
    return pos == std::string::npos ? 0 : line_col(text, pos).first;
  };

  Library lib;
  try {
    lib.model = model_from_json(field(j, "model", "library"));
    lib.model.validate();
  } catch (const GaitError& e) {
    throw ParseError(std::string("library model: ") + e.what());
  }
  if (auto it = j.find("integrator"); it != j.end()) {
    const json& sub = field(*it, "substeps", "integrator");
    if (!sub.is_number_integer() || sub.get<int>() < 1) throw ParseError("field 'integrator.substeps': expected a positive integer");
    lib.integrator.substeps = sub.get<int>();
  }
  if (auto it = j.find("provenance"); it != j.end()) lib.provenance = *it;

  if (auto it = j.find("model_hash"); it != j.end() && warn) {
    const std::string expected = hash_hex(lib.model);
    if (!it->is_string() || it->get<std::string>() != expected)
      *warn << "warning: library model hash " << it->dump() << " does not match its parameters (" << expected
            << "); loading anyway\n";
  }

  const json& recs = field(j, "records", "library");
  if (!recs.is_array()) throw ParseError("field 'records': expected an array");
  for (std::size_t k = 0; k < recs.size(); ++k) {
    try {
      lib.records.push_back(record_from_json(recs[k]));
    } catch (const ParseError& e) {
      const std::size_t line = record_line(k);
      throw ParseError("record " + std::to_string(k) + (line ? " (line " + std::to_string(line) + ")" : "") + ": " +
                       e.what());
    }
  }
  return lib;
}

Library read_library(const std::string& path, std::ostream* warn) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open '" + path + "'");
  try {
    return read_library(is, warn);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

// Validation ------------------------------------------------------------------

std::vector<RecordCheck> validate_records(const std::vector<GaitRecord>& records, const ModelParams& model,
                                          const IntegratorOptions& opts, double tol) {
  std::vector<RecordCheck> out;
  for (const auto& r : records) {
    RecordCheck chk;
    chk.id = r.id;
    try {
      const GaitEvaluation g = evaluate_gait(r.c, model, r.gamma, opts);
      chk.periodicity_inf = g.periodicity.cwiseAbs().maxCoeff();
      chk.operating_inf = (g.actual.to_vector() - r.scheduled.to_vector()).cwiseAbs().maxCoeff();
      chk.stationarity_inf = stationarity_residual(g, r.lambda).cwiseAbs().maxCoeff();
      chk.max_deviation = std::max({std::abs(chk.periodicity_inf - r.periodicity_inf),
                                    std::abs(chk.operating_inf - r.operating_inf),
                                    std::abs(chk.stationarity_inf - r.stationarity_inf)});
      chk.ok = chk.max_deviation <= 10.0 * tol;
    } catch (const GaitError& e) {
      chk.error = e.what();
    }
    out.push_back(std::move(chk));
  }
  return out;
}

}  // namespace optgait
