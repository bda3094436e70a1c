#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "oscilla/util.hpp"

namespace oscilla {

// Dimensional description of the coupled problem: a rigid body of mass M held
// by an undamped linear spring (SPD stiffness B) in a uniform stream of speed
// V of a viscous liquid (density rho, kinematic viscosity nu). L is the
// reference length used by the scaling (normally the body diameter).
struct PhysicalParams {
  int d = 2;              // spatial dimension of the model (2 or 3)
  double rho = 1.0;       // liquid density
  double nu = 1.0;        // kinematic viscosity
  double V = 1.0;         // stream speed (magnitude; direction is -e1)
  double L = 1.0;         // reference length
  double M = 1.0;         // body mass
  Eigen::MatrixXd B;      // dimensional spring stiffness, d x d SPD
};

// Dimensionless groups. Velocities are scaled by nu/L and time by L^2/nu, so
// lambda plays the role of a Reynolds number and all spectra are reported in
// viscous units. varpi = rho L^d / M is the mass ratio (the d = 2 convention
// rho L^2 / M is ours; the 3D one is rho L^3 / M). A = L^4 B /(M nu^2).
struct ModelParams {
  int d = 2;
  double lambda = 0.0;    // V L / nu
  double varpi = 1.0;     // rho L^d / M  (> 0)
  Eigen::MatrixXd A;      // dimensionless stiffness, d x d SPD
};

// Extremal eigenvalues of A and the derived natural frequencies
// omega_m = sqrt(eig_m(A)) of the free spring-mass system.
struct StiffnessBounds {
  double a = 0.0;               // smallest eigenvalue of A
  double b = 0.0;               // largest eigenvalue of A
  Eigen::VectorXd omega;        // natural frequencies, ascending
};

// Planar/solid body shapes supported by the mesh generator (2D kinds) plus
// 3D kinds kept as data so parameter files round-trip; only d = 2 geometry
// can be meshed and assembled in this build.
struct BodyGeometry {
  enum class Kind { circle, ellipse, polygon, sphere, ellipsoid };
  Kind kind = Kind::circle;
  double diameter = 1.0;                    // circle/sphere diameter
  double semi_a = 0.5, semi_b = 0.25;       // ellipse/ellipsoid semi-axes
  double semi_c = 0.25;                     // ellipsoid only
  std::vector<Eigen::Vector2d> polygon;     // CCW vertices, polygon kind

  // Characteristic diameter R* = diameter of the body; the scaling makes it
  // dimensionless, and the mesh generator sizes the truncation radius off it.
  double characteristic_diameter() const;
  bool is_3d() const { return kind == Kind::sphere || kind == Kind::ellipsoid; }
};

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> errors;      // hard failures (reject the run)
  std::vector<std::string> warnings;    // accepted with note (e.g. asymmetry)
};

// Dimensional -> dimensionless reduction. Throws validation_error on
// non-physical inputs (non-positive rho, nu, V, L, M or non-square B).
ModelParams nondimensionalize(const PhysicalParams& p);

// Spectrum of A; throws validation_error if A is not symmetric positive
// definite (symmetry tolerance 1e-12 relative).
StiffnessBounds stiffness_bounds(const ModelParams& m);

// Full validation of a dimensionless parameter set: varpi > 0, lambda >= 0,
// A SPD, d in {2,3}. Never throws; collects findings.
ValidationReport validate_params(const ModelParams& m);

}  // namespace oscilla
