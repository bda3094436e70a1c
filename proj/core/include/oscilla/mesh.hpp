#pragma once

#include <string>
#include <vector>

#include "oscilla/model.hpp"
#include "oscilla/util.hpp"

namespace oscilla {

// Boundary facet tags. The farfield tag covers the whole truncation circle;
// the split into Dirichlet inflow/lateral arcs and the natural-outflow sector
// is a property of the discrete space (it depends on the outflow half-angle),
// not of the mesh.
enum class FacetTag : int { body = 0, farfield = 1 };

struct Facet {
  int a = -1, b = -1;   // endpoint vertex ids, oriented CCW around the fluid
  FacetTag tag = FacetTag::body;
};

// Straight-edged triangle mesh of the truncated exterior domain
// Omega_R = B_R \ body. 2D only; d is carried for format round-trips.
struct Mesh {
  int d = 2;
  Eigen::MatrixXd nodes;   // n_nodes x d
  Eigen::MatrixXi cells;   // n_cells x 3, CCW
  std::vector<Facet> facets;

  int n_nodes() const { return static_cast<int>(nodes.rows()); }
  int n_cells() const { return static_cast<int>(cells.rows()); }
};

struct MeshQuality {
  double min_area = 0.0;
  double total_area = 0.0;
  double min_angle_deg = 0.0;
  int n_body_facets = 0;
  int n_farfield_facets = 0;
};

struct MeshOptions {
  double R_trunc = 30.0;          // truncation radius, >= 5 * body diameter advised
  int n_theta = 96;               // angular subdivisions (even)
  double grading = 1.2;           // geometric growth of radial layer thickness
  double near_factor = 0.5;       // first layer thickness / near-body arc length
  double wake_half_angle_deg = 20.0;  // clustering sector around downstream axis
  double wake_strength = 2.0;     // extra angular density inside the wake sector
};

// Structured polar mesh: radial layers geometrically graded from the body
// outward, angular nodes clustered toward the downstream (-e1) wake sector.
// The triangulation is mirror-symmetric about the x-axis so symmetric flows
// stay symmetric at the discrete level. Throws validation_error if the body
// does not fit or the options are out of range.
Mesh build_truncated_domain(const BodyGeometry& body, const MeshOptions& opts);

MeshQuality mesh_quality(const Mesh& mesh);

// Text format "oscilla-mesh v1": header line, node block, cell block, tagged
// facet block. Round-trips bit-exactly (coordinates at 17 significant digits).
void write_mesh(const Mesh& mesh, const std::string& path);
Mesh read_mesh(const std::string& path);

}  // namespace oscilla
