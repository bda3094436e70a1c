#include <gtest/gtest.h>

#include <cmath>

#include "oscilla/model.hpp"

using namespace oscilla;

namespace {

PhysicalParams reference_physical() {
  PhysicalParams p;
  p.d = 2;
  p.rho = 1.2;
  p.nu = 0.004;
  p.V = 0.8;
  p.L = 0.25;
  p.M = 0.5;
  p.B = Eigen::Matrix2d{{2.0, 0.5}, {0.5, 1.0}};
  return p;
}

}  // namespace

TEST(model, nondimensionalize_matches_hand_computation) {
  ModelParams m = nondimensionalize(reference_physical());
  // lambda = V L / nu, varpi = rho L^2 / M, A = L^4 B / (M nu^2).
  EXPECT_NEAR(m.lambda, 50.0, 1e-12);
  EXPECT_NEAR(m.varpi, 0.15, 1e-15);
  const double s = std::pow(0.25, 4) / (0.5 * 0.004 * 0.004);
  EXPECT_NEAR(m.A(0, 0), 2.0 * s, 1e-9);
  EXPECT_NEAR(m.A(0, 1), 0.5 * s, 1e-9);
  EXPECT_NEAR(m.A(1, 0), 0.5 * s, 1e-9);
  EXPECT_NEAR(m.A(1, 1), 1.0 * s, 1e-9);
  EXPECT_EQ(m.d, 2);
}

TEST(model, nondimensionalize_3d_uses_cubed_mass_ratio) {
  PhysicalParams p = reference_physical();
  p.d = 3;
  p.B = Eigen::Matrix3d::Identity();
  ModelParams m = nondimensionalize(p);
  EXPECT_NEAR(m.varpi, 1.2 * std::pow(0.25, 3) / 0.5, 1e-15);
}

TEST(model, nondimensionalize_rejects_nonphysical_inputs) {
  for (auto mutate : {+[](PhysicalParams& p) { p.rho = 0.0; },
                      +[](PhysicalParams& p) { p.nu = -1.0; },
                      +[](PhysicalParams& p) { p.V = 0.0; },
                      +[](PhysicalParams& p) { p.L = -2.0; },
                      +[](PhysicalParams& p) { p.M = 0.0; },
                      +[](PhysicalParams& p) { p.d = 4; },
                      +[](PhysicalParams& p) { p.B = Eigen::Matrix3d::Identity(); }}) {
    PhysicalParams p = reference_physical();
    mutate(p);
    EXPECT_THROW(nondimensionalize(p), validation_error);
  }
}

TEST(model, stiffness_bounds_are_eigenvalues_and_frequencies) {
  ModelParams m;
  m.d = 2;
  m.lambda = 10.0;
  m.varpi = 1.0;
  m.A = Eigen::Matrix2d{{4.0, 0.0}, {0.0, 9.0}};
  StiffnessBounds sb = stiffness_bounds(m);
  EXPECT_DOUBLE_EQ(sb.a, 4.0);
  EXPECT_DOUBLE_EQ(sb.b, 9.0);
  ASSERT_EQ(sb.omega.size(), 2);
  EXPECT_DOUBLE_EQ(sb.omega[0], 2.0);  // ascending
  EXPECT_DOUBLE_EQ(sb.omega[1], 3.0);
}

TEST(model, stiffness_bounds_rejects_non_spd) {
  ModelParams m;
  m.d = 2;
  m.A = Eigen::Matrix2d{{1.0, 0.5}, {-0.5, 1.0}};  // not symmetric
  EXPECT_THROW(stiffness_bounds(m), validation_error);
  m.A = Eigen::Matrix2d{{-1.0, 0.0}, {0.0, 1.0}};  // not positive definite
  EXPECT_THROW(stiffness_bounds(m), validation_error);
  m.A = Eigen::Matrix3d::Identity();  // wrong size
  EXPECT_THROW(stiffness_bounds(m), validation_error);
}

TEST(model, validate_params_collects_without_throwing) {
  ModelParams good;
  good.d = 2;
  good.lambda = 46.0;
  good.varpi = 1.0;
  good.A = Eigen::Matrix2d::Identity();
  ValidationReport r = validate_params(good);
  EXPECT_TRUE(r.ok);
  EXPECT_TRUE(r.errors.empty());

  ModelParams bad = good;
  bad.varpi = -1.0;
  bad.lambda = -3.0;
  r = validate_params(bad);
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(r.errors.size(), 2u);

  bad = good;
  bad.A = Eigen::Matrix2d{{-1.0, 0.0}, {0.0, 1.0}};
  r = validate_params(bad);
  EXPECT_FALSE(r.ok);

  bad = good;
  bad.d = 5;
  EXPECT_NO_THROW(validate_params(bad));
  EXPECT_FALSE(validate_params(bad).ok);
}

TEST(model, characteristic_diameter_per_shape) {
  BodyGeometry g;
  g.kind = BodyGeometry::Kind::circle;
  g.diameter = 2.0;
  EXPECT_DOUBLE_EQ(g.characteristic_diameter(), 2.0);
  EXPECT_FALSE(g.is_3d());

  g.kind = BodyGeometry::Kind::ellipse;
  g.semi_a = 0.5;
  g.semi_b = 0.75;
  EXPECT_DOUBLE_EQ(g.characteristic_diameter(), 1.5);

  g.kind = BodyGeometry::Kind::polygon;
  g.polygon = {{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}};
  EXPECT_NEAR(g.characteristic_diameter(), std::sqrt(2.0), 1e-15);

  g.kind = BodyGeometry::Kind::sphere;
  g.diameter = 3.0;
  EXPECT_DOUBLE_EQ(g.characteristic_diameter(), 3.0);
  EXPECT_TRUE(g.is_3d());
}
