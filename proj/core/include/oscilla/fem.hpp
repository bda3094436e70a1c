#pragma once

#include <array>
#include <vector>

#include "oscilla/mesh.hpp"
#include "oscilla/util.hpp"

namespace oscilla {

// Velocity-node classification. Dirichlet (zero) conditions are imposed on
// the inflow/lateral part of the truncation circle; the downstream sector
// keeps its dofs (natural outflow). Body nodes stay in the numbering: the
// coupled formulation ties them to the rigid velocity, the steady solver
// pins them to the prescribed trace.
enum class VNodeClass : char { interior, body, far_dirichlet, outflow };

struct SpaceOptions {
  double outflow_half_angle_deg = 60.0;  // natural-outflow sector around -e1
};

// Inf-sup-stable mixed pair on triangles: continuous piecewise-quadratic
// velocity (vertices + edge midpoints, 2 components) with continuous
// piecewise-linear pressure (vertices).
class DiscreteSpace {
public:
  DiscreteSpace(const Mesh& mesh, const SpaceOptions& opts = {});

  const Mesh& mesh() const { return *mesh_; }

  int n_vnodes() const { return n_vnodes_; }
  int n_vdofs() const { return n_vdofs_; }     // retained velocity dofs
  int n_pdofs() const { return n_pdofs_; }     // pressure dofs (= vertices)

  // First dof id of a velocity node (component c is vdof(v)+c), -1 if the
  // node carries a homogeneous Dirichlet condition and was eliminated.
  int vdof(int vnode) const { return vdof_[vnode]; }
  VNodeClass vclass(int vnode) const { return vclass_[vnode]; }
  Eigen::Vector2d vnode_xy(int vnode) const { return vnode_xy_.row(vnode); }

  const std::vector<int>& body_vnodes() const { return body_vnodes_; }

  // 6 velocity nodes of a cell: 3 vertices then the midpoints opposite them.
  const std::array<int, 6>& cell_vnodes(int c) const { return cell_vnodes_[c]; }

  struct BoundaryFacet {
    int a, mid, b;          // P2 nodes along the facet
    Eigen::Vector2d normal; // unit, outward from the fluid
    double length;
    FacetTag tag;
  };
  const std::vector<BoundaryFacet>& boundary_facets() const { return bfacets_; }

  // Smallest inf-sup singular value of the mixed pair (pressure-mass and
  // deformation-energy scaled). Dense in the pressure count: intended for
  // recording on small/medium meshes.
  double measure_inf_sup() const;

private:
  const Mesh* mesh_;
  int n_vnodes_ = 0, n_vdofs_ = 0, n_pdofs_ = 0;
  Eigen::MatrixXd vnode_xy_;
  std::vector<VNodeClass> vclass_;
  std::vector<int> vdof_;
  std::vector<int> body_vnodes_;
  std::vector<std::array<int, 6>> cell_vnodes_;
  std::vector<BoundaryFacet> bfacets_;
};

// Affine geometry of one cell: barycentric gradients, area.
struct CellGeometry {
  Eigen::Matrix<double, 3, 2> grad_lambda;
  double area;
};
CellGeometry cell_geometry(const Mesh& mesh, int c);

// Degree-6 triangle quadrature (12 points, exact for the quintic integrands
// of quadratic convection terms) in barycentric coordinates.
struct TriQuadrature {
  static constexpr int n = 12;
  std::array<Eigen::Vector3d, n> bary;
  std::array<double, n> weight;  // sums to 1; multiply by cell area
};
const TriQuadrature& tri_quadrature();

// P2 basis values/gradients at a barycentric point. Order: vertex 0..2, then
// midpoint opposite vertex 0..2. Gradients need the cell's grad_lambda.
void p2_values(const Eigen::Vector3d& bary, std::array<double, 6>& phi);
void p2_gradients(const Eigen::Vector3d& bary, const Eigen::Matrix<double, 3, 2>& gl,
                  std::array<Eigen::Vector2d, 6>& grad);
// Constant-per-cell second derivatives of the 6 scalar P2 basis functions.
void p2_hessians(const Eigen::Matrix<double, 3, 2>& gl,
                 std::array<Eigen::Matrix2d, 6>& hess);

// 4-point Gauss rule on [0,1] for boundary facet integrals.
struct LineQuadrature {
  static constexpr int n = 4;
  std::array<double, n> t;
  std::array<double, n> weight;  // sums to 1; multiply by facet length
};
const LineQuadrature& line_quadrature();

// Values of the three P2 trace functions (a, mid, b) at parameter t on a facet.
inline void p2_facet_values(double t, std::array<double, 3>& phi) {
  phi[0] = (1.0 - t) * (1.0 - 2.0 * t);
  phi[1] = 4.0 * t * (1.0 - t);
  phi[2] = t * (2.0 * t - 1.0);
}

}  // namespace oscilla
