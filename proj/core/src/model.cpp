#include "oscilla/model.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace oscilla {

double BodyGeometry::characteristic_diameter() const {
  switch (kind) {
    case Kind::circle:
    case Kind::sphere:
      return diameter;
    case Kind::ellipse:
      return 2.0 * std::max(semi_a, semi_b);
    case Kind::ellipsoid:
      return 2.0 * std::max({semi_a, semi_b, semi_c});
    case Kind::polygon: {
      // Diameter of a polygon = max pairwise vertex distance.
      double d2 = 0.0;
      for (size_t i = 0; i < polygon.size(); ++i)
        for (size_t j = i + 1; j < polygon.size(); ++j)
          d2 = std::max(d2, (polygon[i] - polygon[j]).squaredNorm());
      return std::sqrt(d2);
    }
  }
  throw validation_error("unknown body kind");
}

ModelParams nondimensionalize(const PhysicalParams& p) {
  if (p.d != 2 && p.d != 3) throw validation_error("dimension must be 2 or 3");
  if (!(p.rho > 0) || !(p.nu > 0) || !(p.V > 0) || !(p.L > 0) || !(p.M > 0))
    throw validation_error("physical parameters rho, nu, V, L, M must be positive");
  if (p.B.rows() != p.d || p.B.cols() != p.d)
    throw validation_error("stiffness B must be d x d");

  ModelParams m;
  m.d = p.d;
  m.lambda = p.V * p.L / p.nu;
  m.varpi = p.rho * std::pow(p.L, p.d) / p.M;
  m.A = std::pow(p.L, 4) * p.B / (p.M * p.nu * p.nu);
  return m;
}

StiffnessBounds stiffness_bounds(const ModelParams& m) {
  const auto& A = m.A;
  if (A.rows() != m.d || A.cols() != m.d)
    throw validation_error("stiffness A must be d x d");
  double asym = (A - A.transpose()).norm();
  if (asym > 1e-12 * std::max(1.0, A.norm()))
    throw validation_error("stiffness A must be symmetric");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  if (es.eigenvalues().minCoeff() <= 0)
    throw validation_error("stiffness A must be positive definite");

  StiffnessBounds sb;
  sb.a = es.eigenvalues().minCoeff();
  sb.b = es.eigenvalues().maxCoeff();
  sb.omega = es.eigenvalues().cwiseSqrt();
  return sb;
}

ValidationReport validate_params(const ModelParams& m) {
  ValidationReport r;
  auto fail = [&](const std::string& msg) {
    r.ok = false;
    r.errors.push_back(msg);
  };
  if (m.d != 2 && m.d != 3) fail("dimension must be 2 or 3");
  if (!(m.varpi > 0)) fail("mass ratio varpi must be positive");
  if (!(m.lambda >= 0)) fail("lambda must be nonnegative");
  if (m.A.rows() != m.d || m.A.cols() != m.d) {
    fail("stiffness A must be d x d");
    return r;
  }
  double scale = std::max(1.0, m.A.norm());
  if ((m.A - m.A.transpose()).norm() > 1e-12 * scale) {
    fail("stiffness A must be symmetric");
    return r;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.A);
  if (es.eigenvalues().minCoeff() <= 0) fail("stiffness A must be positive definite");
  return r;
}

}  // namespace oscilla
