#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "qrtag/optics.hpp"

using namespace qrtag;

// Reference values computed independently in double precision for
// d = 510 um, n0 = 1, n1 = 1.46.
namespace frozen {
constexpr double kOffset23 = 141.6553759385034;
constexpr double kOffset45 = 282.3243454579231;
constexpr double kLimit = 479.4283446416275;
constexpr double kAngle1416 = 22.991173446010716;
}  // namespace frozen

TEST(Optics, ZeroAngle) {
  const GlassSpec g;
  EXPECT_EQ(offset_for_angle(g, 0.0), 0.0);
  EXPECT_EQ(angle_for_offset(g, 0.0), 0.0);
}

TEST(Optics, KnownOffsets) {
  const GlassSpec g;
  EXPECT_NEAR(offset_for_angle(g, 23.0), 141.6, 0.1);
  EXPECT_NEAR(offset_for_angle(g, 45.0), 282.3, 0.1);
  EXPECT_NEAR(offset_for_angle(g, 23.0), frozen::kOffset23, 1e-9);
  EXPECT_NEAR(offset_for_angle(g, 45.0), frozen::kOffset45, 1e-9);
  EXPECT_NEAR(offset_for_angle(g, -23.0), -frozen::kOffset23, 1e-9);
  EXPECT_NEAR(angle_for_offset(g, 141.6), frozen::kAngle1416, 1e-9);
}

TEST(Optics, LimitingOffset) {
  const GlassSpec g;
  EXPECT_NEAR(g.limiting_offset_um(), frozen::kLimit, 1e-9);
  EXPECT_THROW(angle_for_offset(g, frozen::kLimit), std::domain_error);
  EXPECT_THROW(angle_for_offset(g, -frozen::kLimit), std::domain_error);
  EXPECT_THROW(angle_for_offset(g, 500.0), std::domain_error);
  EXPECT_NO_THROW(angle_for_offset(g, 479.0));
}

TEST(Optics, GrazingAngleRejected) {
  const GlassSpec g;
  EXPECT_THROW(offset_for_angle(g, 90.0), std::domain_error);
  EXPECT_THROW(offset_for_angle(g, -90.0), std::domain_error);
  EXPECT_THROW(offset_for_angle(g, 120.0), std::domain_error);
}

TEST(Optics, RoundTrip) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(-89.0, 89.0);
  const GlassSpec g;
  for (int i = 0; i < 1000; ++i) {
    const double theta = dist(rng);
    EXPECT_NEAR(angle_for_offset(g, offset_for_angle(g, theta)), theta, 1e-9);
  }
}

TEST(Optics, StrictlyMonotone) {
  const GlassSpec g;
  double prev = offset_for_angle(g, -89.5);
  for (double t = -89.0; t <= 89.5; t += 0.5) {
    const double x = offset_for_angle(g, t);
    EXPECT_GT(x, prev) << t;
    prev = x;
  }
}

TEST(Optics, SmallAngleLimit) {
  const GlassSpec g;
  const double slope = g.thickness_um * g.n0 / g.n1;
  for (double t : {1e-3, 1e-2, 0.1}) {
    const double rad = t * M_PI / 180.0;
    EXPECT_NEAR(offset_for_angle(g, t) / rad, slope, slope * 1e-4);
  }
}

TEST(Optics, GlassValidation) {
  GlassSpec g;
  EXPECT_NO_THROW(g.validate());
  g.n1 = 0.9;
  EXPECT_THROW(g.validate(), std::invalid_argument);
  g = GlassSpec{};
  g.thickness_um = 0.0;
  EXPECT_THROW(g.validate(), std::invalid_argument);
  g = GlassSpec{};
  g.pixel_pitch_um = -1.0;
  EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST(Optics, AnnotateNeedsPitch) {
  const GlassSpec g;
  EXPECT_THROW(annotate_view_angles(g, make_view_spec(3)), std::invalid_argument);
}

TEST(Optics, AnnotateAngles) {
  GlassSpec g;
  g.pixel_pitch_um = frozen::kOffset23;
  const ViewSpec v = annotate_view_angles(g, make_view_spec(3));
  ASSERT_EQ(v.angles.size(), 9u);
  EXPECT_EQ(v.angles[4].theta_u, 0.0);
  EXPECT_EQ(v.angles[4].theta_v, 0.0);
  EXPECT_NEAR(v.angles[5].theta_u, 23.0, 1e-9);
  EXPECT_NEAR(v.angles[5].theta_v, 0.0, 1e-12);
  EXPECT_NEAR(v.angles[3].theta_u, -23.0, 1e-9);
  EXPECT_NEAR(v.angles[1].theta_v, -23.0, 1e-9);
  for (int i = 0; i < 9; ++i) {
    EXPECT_NEAR(v.angles[i].theta_u, -v.angles[8 - i].theta_u, 1e-12);
    EXPECT_NEAR(v.angles[i].theta_v, -v.angles[8 - i].theta_v, 1e-12);
  }
}

TEST(Optics, AnnotateBeyondLimit) {
  GlassSpec g;
  g.pixel_pitch_um = 300.0;
  EXPECT_THROW(annotate_view_angles(g, make_view_spec(5)), std::domain_error);
}
