#include "oscilla/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "oscilla/io.hpp"

namespace oscilla {

namespace {

constexpr double kPi = std::numbers::pi;

// Radius of the body boundary along direction theta (body star-shaped about
// the origin; all supported 2D kinds are).
double body_radius(const BodyGeometry& g, double theta) {
  switch (g.kind) {
    case BodyGeometry::Kind::circle:
      return 0.5 * g.diameter;
    case BodyGeometry::Kind::ellipse: {
      double c = std::cos(theta), s = std::sin(theta);
      return g.semi_a * g.semi_b /
             std::hypot(g.semi_b * c, g.semi_a * s);
    }
    case BodyGeometry::Kind::polygon: {
      // Ray-cast from the origin against each edge; take the hit distance.
      double c = std::cos(theta), s = std::sin(theta);
      double best = -1.0;
      const auto& P = g.polygon;
      int n = static_cast<int>(P.size());
      for (int i = 0; i < n; ++i) {
        Eigen::Vector2d p = P[i], q = P[(i + 1) % n];
        // Solve p + t(q-p) = r(c,s), t in [0,1], r > 0.
        double det = (q.x() - p.x()) * (-s) - (q.y() - p.y()) * (-c);
        if (std::abs(det) < 1e-14) continue;
        double t = (-p.x() * (-s) + p.y() * (-c)) / det * -1.0;
        // Recompute robustly via 2x2 solve.
        Eigen::Matrix2d Ms;
        Ms << (q.x() - p.x()), -c, (q.y() - p.y()), -s;
        if (std::abs(Ms.determinant()) < 1e-14) continue;
        Eigen::Vector2d rhs(-p.x(), -p.y());
        Eigen::Vector2d sol = Ms.inverse() * rhs;  // (t, -r)
        t = sol[0];
        double r = -sol[1];
        if (t >= -1e-12 && t <= 1.0 + 1e-12 && r > 0) best = std::max(best, r);
      }
      if (best <= 0) throw validation_error("polygon must be star-shaped about the origin");
      return best;
    }
    default:
      throw validation_error("3D bodies cannot be meshed in this build (d = 2 only)");
  }
}

// Angular node positions: inverse-CDF sampling of a density with a smooth
// bump in the wake sector centered at theta = pi (downstream, flow runs
// toward -e1). Symmetric about the x-axis by construction.
std::vector<double> angular_nodes(int n_theta, double wake_half_angle, double strength) {
  const int fine = 4096;
  std::vector<double> cdf(fine + 1, 0.0);
  auto density = [&](double th) {
    double dist = std::abs(std::remainder(th - kPi, 2.0 * kPi));
    double z = dist / wake_half_angle;
    return 1.0 + strength * std::exp(-z * z);
  };
  for (int i = 0; i < fine; ++i) {
    double th = 2.0 * kPi * (i + 0.5) / fine;
    cdf[i + 1] = cdf[i] + density(th);
  }
  std::vector<double> theta(n_theta);
  for (int k = 0; k < n_theta; ++k) {
    double target = cdf[fine] * k / n_theta;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
    int j = std::max<int>(1, static_cast<int>(it - cdf.begin()));
    j = std::min(j, fine);
    double frac = (target - cdf[j - 1]) / std::max(cdf[j] - cdf[j - 1], 1e-300);
    theta[k] = 2.0 * kPi * (j - 1 + frac) / fine;
  }
  theta[0] = 0.0;  // anchor; symmetry gives theta[n/2] = pi exactly up to roundoff
  return theta;
}

// Normalized radial layer fractions s_0 = 0 < ... < s_m = 1: geometric growth
// of the physical thickness near the body, switching to arc-proportional
// growth (constant aspect ratio) once that is larger.
std::vector<double> radial_layers(double r0, double R, int n_theta,
                                  double near_factor, double grading) {
  double arc0 = 2.0 * kPi * r0 / n_theta;
  double t = near_factor * arc0;
  std::vector<double> r{r0};
  double geo = t;
  while (r.back() < R) {
    double arc = 2.0 * kPi * r.back() / n_theta;
    double dr = std::min(std::max(geo, t), arc);
    r.push_back(r.back() + dr);
    geo *= grading;
    if (r.size() > 4096) throw validation_error("radial layering failed to terminate");
  }
  // Rescale so the last layer lands exactly on R.
  double s_last = r.back();
  std::vector<double> s(r.size());
  for (size_t i = 0; i < r.size(); ++i) s[i] = (r[i] - r0) / (s_last - r0);
  (void)R;
  return s;
}

}  // namespace

Mesh build_truncated_domain(const BodyGeometry& body, const MeshOptions& opts) {
  if (body.is_3d())
    throw validation_error("3D bodies cannot be meshed in this build (d = 2 only)");
  double Rstar = body.characteristic_diameter();
  if (!(opts.R_trunc > 1.5 * Rstar))
    throw validation_error("truncation radius too small: body does not fit");
  if (opts.n_theta < 8 || opts.n_theta % 2 != 0)
    throw validation_error("n_theta must be even and >= 8");
  if (!(opts.grading >= 1.0 && opts.grading < 2.0))
    throw validation_error("grading must lie in [1, 2)");

  auto theta = angular_nodes(opts.n_theta,
                             opts.wake_half_angle_deg * kPi / 180.0,
                             opts.wake_strength);
  const int nt = opts.n_theta;

  // Mean body radius sets the layer distribution; each spoke interpolates
  // between its own boundary radius and the common truncation circle.
  double rb_mean = 0.0;
  std::vector<double> rb(nt);
  for (int i = 0; i < nt; ++i) {
    rb[i] = body_radius(body, theta[i]);
    rb_mean += rb[i] / nt;
  }
  auto s = radial_layers(rb_mean, opts.R_trunc, nt, opts.near_factor, opts.grading);
  const int nr = static_cast<int>(s.size());  // rings

  Mesh mesh;
  mesh.d = 2;
  mesh.nodes.resize(nt * nr, 2);
  auto node_id = [&](int i, int j) { return j * nt + (i % nt); };
  for (int j = 0; j < nr; ++j)
    for (int i = 0; i < nt; ++i) {
      double r = rb[i] + (opts.R_trunc - rb[i]) * s[j];
      mesh.nodes(node_id(i, j), 0) = r * std::cos(theta[i]);
      mesh.nodes(node_id(i, j), 1) = r * std::sin(theta[i]);
    }

  // Split each quad along the diagonal that keeps the triangulation
  // mirror-symmetric about the x-axis (upper half "/" , lower half "\").
  std::vector<Eigen::Vector3i> tris;
  tris.reserve(2 * nt * (nr - 1));
  for (int j = 0; j + 1 < nr; ++j) {
    for (int i = 0; i < nt; ++i) {
      int a = node_id(i, j), b = node_id(i + 1, j);
      int c = node_id(i + 1, j + 1), d4 = node_id(i, j + 1);
      double mid = 0.5 * (theta[i] + (i + 1 == nt ? 2.0 * kPi : theta[i + 1]));
      bool upper = mid < kPi;
      if (upper) {
        tris.emplace_back(a, c, b);
        tris.emplace_back(a, d4, c);
      } else {
        tris.emplace_back(a, d4, b);
        tris.emplace_back(b, d4, c);
      }
    }
  }
  mesh.cells.resize(static_cast<int>(tris.size()), 3);
  for (size_t k = 0; k < tris.size(); ++k) mesh.cells.row(static_cast<int>(k)) = tris[k];

  // Boundary facets, CCW around the fluid: body ring traversed so the fluid
  // is on the left (reverse orientation), farfield ring forward.
  for (int i = 0; i < nt; ++i) {
    Facet f;
    f.a = node_id(i + 1, 0);
    f.b = node_id(i, 0);
    f.tag = FacetTag::body;
    mesh.facets.push_back(f);
  }
  for (int i = 0; i < nt; ++i) {
    Facet f;
    f.a = node_id(i, nr - 1);
    f.b = node_id(i + 1, nr - 1);
    f.tag = FacetTag::farfield;
    mesh.facets.push_back(f);
  }

  auto q = mesh_quality(mesh);
  if (q.min_area <= 0) throw validation_error("mesh generation produced inverted cells");
  return mesh;
}

MeshQuality mesh_quality(const Mesh& mesh) {
  MeshQuality q;
  q.min_area = 1e300;
  q.min_angle_deg = 180.0;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    Eigen::Vector2d p0 = mesh.nodes.row(mesh.cells(c, 0));
    Eigen::Vector2d p1 = mesh.nodes.row(mesh.cells(c, 1));
    Eigen::Vector2d p2 = mesh.nodes.row(mesh.cells(c, 2));
    double area = 0.5 * ((p1 - p0).x() * (p2 - p0).y() - (p1 - p0).y() * (p2 - p0).x());
    q.min_area = std::min(q.min_area, area);
    q.total_area += area;
    Eigen::Vector2d e0 = p1 - p0, e1 = p2 - p1, e2 = p0 - p2;
    double a0 = std::acos(std::clamp(-e2.dot(e0) / (e2.norm() * e0.norm()), -1.0, 1.0));
    double a1 = std::acos(std::clamp(-e0.dot(e1) / (e0.norm() * e1.norm()), -1.0, 1.0));
    double a2 = kPi - a0 - a1;
    q.min_angle_deg = std::min({q.min_angle_deg, a0 * 180.0 / kPi, a1 * 180.0 / kPi,
                                a2 * 180.0 / kPi});
  }
  for (const auto& f : mesh.facets) {
    if (f.tag == FacetTag::body) ++q.n_body_facets;
    else ++q.n_farfield_facets;
  }
  return q;
}

void write_mesh(const Mesh& mesh, const std::string& path) {
  std::ostringstream os;
  os << "oscilla-mesh v1 d=" << mesh.d << "\n";
  os << "nodes " << mesh.n_nodes() << "\n";
  for (int i = 0; i < mesh.n_nodes(); ++i) {
    for (int k = 0; k < mesh.d; ++k) os << (k ? " " : "") << format_float(mesh.nodes(i, k));
    os << "\n";
  }
  os << "cells " << mesh.n_cells() << "\n";
  for (int c = 0; c < mesh.n_cells(); ++c)
    os << mesh.cells(c, 0) << " " << mesh.cells(c, 1) << " " << mesh.cells(c, 2) << "\n";
  os << "facets " << mesh.facets.size() << "\n";
  for (const auto& f : mesh.facets)
    os << f.a << " " << f.b << " " << (f.tag == FacetTag::body ? "body" : "farfield") << "\n";
  atomic_write_text(path, os.str());
}

Mesh read_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open mesh file: " + path);
  std::string word, v;
  int d = 0;
  in >> word >> v;
  std::string dtok;
  in >> dtok;
  if (word != "oscilla-mesh" || v != "v1" || dtok.rfind("d=", 0) != 0)
    throw validation_error("not an oscilla-mesh v1 file: " + path);
  d = std::stoi(dtok.substr(2));
  if (d != 2 && d != 3) throw validation_error("mesh dimension must be 2 or 3");

  Mesh mesh;
  mesh.d = d;
  int n = 0;
  in >> word >> n;
  if (word != "nodes" || n <= 0) throw validation_error("malformed node block");
  mesh.nodes.resize(n, d);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k)
      if (!(in >> mesh.nodes(i, k))) throw validation_error("malformed node block");
  int m = 0;
  in >> word >> m;
  if (word != "cells" || m <= 0) throw validation_error("malformed cell block");
  int verts_per_cell = (d == 2) ? 3 : 4;
  mesh.cells.resize(m, verts_per_cell);
  for (int c = 0; c < m; ++c)
    for (int k = 0; k < verts_per_cell; ++k) {
      if (!(in >> mesh.cells(c, k))) throw validation_error("malformed cell block");
      if (mesh.cells(c, k) < 0 || mesh.cells(c, k) >= n)
        throw validation_error("cell references nonexistent node");
    }
  int nf = 0;
  in >> word >> nf;
  if (word != "facets" || nf < 0) throw validation_error("malformed facet block");
  for (int k = 0; k < nf; ++k) {
    Facet f;
    std::string tag;
    if (!(in >> f.a >> f.b >> tag)) throw validation_error("malformed facet block");
    if (f.a < 0 || f.a >= n || f.b < 0 || f.b >= n)
      throw validation_error("facet references nonexistent node");
    if (tag == "body") f.tag = FacetTag::body;
    else if (tag == "farfield") f.tag = FacetTag::farfield;
    else throw validation_error("unknown facet tag: " + tag);
    mesh.facets.push_back(f);
  }
  return mesh;
}

}  // namespace oscilla
