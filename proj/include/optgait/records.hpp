#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "optgait/types.hpp"

namespace optgait {

/// Gait taxonomy by unwrapped slope, for positive walking speed.
enum class GaitClass {
  UphillBrachiation,    // gamma <= -180 deg
  DownhillBrachiation,  // -180 < gamma <= -90 deg
  DownhillWalking,      // -90 < gamma < 0 deg
  UphillWalking,        // 0 <= gamma < 90 deg
};

std::string_view to_string(GaitClass c);
GaitClass gait_class_from_string(std::string_view s);

/// Throws ClassificationError for gamma >= 90 deg or non-finite gamma.
GaitClass classify_gait(double gamma_rad);

enum class SliceKind { ConstantVelocity, ConstantSlope, Custom };

std::string_view to_string(SliceKind k);
SliceKind slice_kind_from_string(std::string_view s);

/// Which operating-point components a slice moves with epsilon. The fixed
/// component's target equals the seed's value, so p(eps) keeps it constant.
struct SliceSpec {
  std::string id;
  SliceKind kind = SliceKind::ConstantVelocity;
  OperatingPoint p_des;
  std::string seed_ref;

  bool interpolates_gamma() const { return kind != SliceKind::ConstantSlope; }
  bool interpolates_speed() const { return kind != SliceKind::ConstantVelocity; }

  /// Builds p_des from the seed's operating point and the slice targets.
  static SliceSpec resolve(std::string id, SliceKind kind, const OperatingPoint& seed_op,
                           std::optional<double> target_gamma, std::optional<double> target_speed,
                           std::string seed_ref);
};

/// One accepted gait with its derived quantities.
struct GaitRecord {
  std::string id;
  std::string slice_id;
  double epsilon = 1.0;
  TrajectoryPoint c;
  MultVec lambda = MultVec::Zero();
  double gamma = 0.0;      // rad, unwrapped
  double gamma_deg = 0.0;  // reporting copy of gamma
  double v_avg = 0.0;
  double cost = 0.0;
  OperatingPoint scheduled;  // p(epsilon) enforced at this point
  double residual_inf = 0.0;       // homotopy (or periodicity) residual
  double periodicity_inf = 0.0;
  double operating_inf = 0.0;      // |p_act - p(epsilon)|
  double stationarity_inf = 0.0;
  std::optional<GaitClass> classification;  // empty: outside the taxonomy
  double condition_number = 0.0;
  bool transversality_ok = true;
  bool near_passive = false;
  bool distinguished = false;  // located crossing, e.g. epsilon = 0
  int branch = 0;              // -1, 0 (seed), +1
  int index = 0;               // position along the branch
  int newton_iterations = 0;
  double step = 0.0;

  std::string classification_name() const {
    return classification ? std::string(to_string(*classification)) : std::string("out_of_taxonomy");
  }
};

}  // namespace optgait
