#pragma once

// Gait-library persistence, curve statistics and re-validation.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "optgait/dynamics.hpp"
#include "optgait/records.hpp"
#include "optgait/simulate.hpp"

namespace optgait {

bool operator==(const GaitRecord& a, const GaitRecord& b);

/// Classification on degrees, so boundary values are exact.
GaitClass classify_gait_deg(double gamma_deg);

/// Linear interpolation between order statistics at position (n - 1) p.
double quantile(std::vector<double> values, double p);

struct Range {
  double min = 0.0;
  double max = 0.0;
};

struct CurveStatistics {
  std::size_t count = 0;
  double q1 = 0.0, q2 = 0.0, q3 = 0.0;  // cost quartile bounds
  double cost_min = 0.0, cost_median = 0.0, cost_max = 0.0;
  Range gamma_deg, tau, v_avg;
  std::vector<int> quartile;  // 1..4 per record, in input order
  std::vector<std::pair<std::string, std::size_t>> class_counts;
};

/// Throws GaitError for fewer than four records.
CurveStatistics curve_statistics(const std::vector<GaitRecord>& records);
void write_statistics(std::ostream& os, const std::string& slice_id, const CurveStatistics& s);

/// Plot data, one row per gait.
extern const std::vector<std::string> kCurveCsvColumns;
void write_curve_csv(std::ostream& os, const std::vector<GaitRecord>& records);
/// Reads the columns written by write_curve_csv; other record fields stay default.
std::vector<GaitRecord> read_curve_csv(std::istream& is);

/// FNV-1a over the canonical JSON of the parameters.
std::uint64_t model_params_hash(const ModelParams& p);

nlohmann::json model_to_json(const ModelParams& p);
ModelParams model_from_json(const nlohmann::json& j);

nlohmann::json record_to_json(const GaitRecord& r);
GaitRecord record_from_json(const nlohmann::json& j);

struct Library {
  ModelParams model;
  IntegratorOptions integrator;
  nlohmann::json provenance = nlohmann::json::object();
  std::vector<GaitRecord> records;
};

void write_library(std::ostream& os, const Library& lib);
void write_library(const std::string& path, const Library& lib);
/// Parse errors carry line and field. A model hash that does not match the
/// stored parameters produces a warning on `warn` and the load proceeds.
Library read_library(std::istream& is, std::ostream* warn = nullptr);
Library read_library(const std::string& path, std::ostream* warn = nullptr);

struct RecordCheck {
  std::string id;
  double periodicity_inf = 0.0;
  double operating_inf = 0.0;
  double stationarity_inf = 0.0;
  double max_deviation = 0.0;  // largest |recomputed - stored| among the three
  bool ok = false;
  std::string error;
};

/// Recomputes P, the operating residual against the stored schedule and the
/// stationarity block from (c, lambda).
std::vector<RecordCheck> validate_records(const std::vector<GaitRecord>& records, const ModelParams& model,
                                          const IntegratorOptions& opts, double tol);

}  // namespace optgait
