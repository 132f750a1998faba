#include "qrtag/optics.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace qrtag {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

}  // namespace

void GlassSpec::validate() const {
  if (!(thickness_um > 0.0)) throw std::invalid_argument("glass thickness must be positive");
  if (!(n0 >= 1.0)) throw std::invalid_argument("n0 must be >= 1");
  if (!(n1 > n0)) throw std::invalid_argument("n1 must exceed n0");
  if (pixel_pitch_um && !(*pixel_pitch_um > 0.0)) {
    throw std::invalid_argument("pixel pitch must be positive");
  }
}

double GlassSpec::limiting_offset_um() const {
  return thickness_um * std::tan(std::asin(n0 / n1));
}

double offset_for_angle(const GlassSpec& glass, double theta_deg) {
  glass.validate();
  if (!(std::abs(theta_deg) < 90.0)) {
    std::ostringstream msg;
    msg << "viewing angle " << theta_deg << " deg outside (-90, 90)";
    throw std::domain_error(msg.str());
  }
  const double sin_beta = glass.n0 * std::sin(theta_deg * kDegToRad) / glass.n1;
  return glass.thickness_um * std::tan(std::asin(sin_beta));
}

double angle_for_offset(const GlassSpec& glass, double x_um) {
  glass.validate();
  const double limit = glass.limiting_offset_um();
  if (!(std::abs(x_um) < limit)) {
    std::ostringstream msg;
    msg << "offset " << x_um << " um at or beyond limiting offset " << limit << " um";
    throw std::domain_error(msg.str());
  }
  const double beta = std::atan(x_um / glass.thickness_um);
  // sin(beta) < n0/n1 here, so the argument stays inside [-1, 1].
  return std::asin(glass.n1 * std::sin(beta) / glass.n0) * kRadToDeg;
}

ViewSpec annotate_view_angles(const GlassSpec& glass, const ViewSpec& view) {
  view.validate();
  if (!glass.pixel_pitch_um) {
    throw std::invalid_argument("angle annotation requires glass pixel_pitch_um");
  }
  const double pitch = *glass.pixel_pitch_um;
  ViewSpec out = view;
  out.angles.clear();
  out.angles.reserve(view.offsets.size());
  for (const Shift& s : view.offsets) {
    out.angles.push_back({angle_for_offset(glass, s.du * pitch), angle_for_offset(glass, s.dv * pitch)});
  }
  return out;
}

}  // namespace qrtag
