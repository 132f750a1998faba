#pragma once

// Refraction through the glass wafer: maps a camera viewing angle to the
// lateral offset between the front and rear prints, and back.

#include <optional>

#include "qrtag/marker_model.hpp"

namespace qrtag {

struct GlassSpec {
  double thickness_um = 510.0;
  double n0 = 1.0;
  double n1 = 1.46;
  /// Printed size of one high-res pixel. Fabrication dependent, so no default.
  std::optional<double> pixel_pitch_um;

  void validate() const;
  /// Offset at which the refracted ray inside the glass reaches grazing
  /// incidence; no viewing angle maps at or beyond it.
  double limiting_offset_um() const;
};

/// x = d * tan(asin(n0 sin(theta) / n1)). |theta_deg| must be < 90.
double offset_for_angle(const GlassSpec& glass, double theta_deg);

/// Exact inverse of offset_for_angle. |x| must be below limiting_offset_um().
double angle_for_offset(const GlassSpec& glass, double x_um);

/// Returns `view` with angles filled in per axis. Requires pixel_pitch_um.
ViewSpec annotate_view_angles(const GlassSpec& glass, const ViewSpec& view);

}  // namespace qrtag
