#include "oscilla/fem.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>
#include <cmath>
#include <map>
#include <numbers>

namespace oscilla {

namespace {

// Edge key -> midpoint-node id, shared across cells.
using EdgeMap = std::map<std::pair<int, int>, int>;

std::pair<int, int> edge_key(int a, int b) {
  return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
}

}  // namespace

DiscreteSpace::DiscreteSpace(const Mesh& mesh, const SpaceOptions& opts) : mesh_(&mesh) {
  if (mesh.d != 2) throw validation_error("discrete spaces are implemented for d = 2 only");
  const int nv = mesh.n_nodes();
  n_pdofs_ = nv;

  // Assign midpoint nodes to unique edges.
  EdgeMap edges;
  cell_vnodes_.resize(mesh.n_cells());
  int next = nv;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    int v0 = mesh.cells(c, 0), v1 = mesh.cells(c, 1), v2 = mesh.cells(c, 2);
    std::array<std::pair<int, int>, 3> ek = {edge_key(v1, v2), edge_key(v2, v0),
                                             edge_key(v0, v1)};
    cell_vnodes_[c] = {v0, v1, v2, 0, 0, 0};
    for (int e = 0; e < 3; ++e) {
      auto it = edges.find(ek[e]);
      if (it == edges.end()) it = edges.emplace(ek[e], next++).first;
      cell_vnodes_[c][3 + e] = it->second;
    }
  }
  n_vnodes_ = next;

  vnode_xy_.resize(n_vnodes_, 2);
  vnode_xy_.topRows(nv) = mesh.nodes;
  for (const auto& [key, id] : edges)
    vnode_xy_.row(id) = 0.5 * (mesh.nodes.row(key.first) + mesh.nodes.row(key.second));

  // Classify. Outflow marking first, then Dirichlet overrides shared nodes,
  // then body (a body node is never on the farfield circle).
  vclass_.assign(n_vnodes_, VNodeClass::interior);
  const double half = opts.outflow_half_angle_deg * std::numbers::pi / 180.0;
  auto mark = [&](int v, VNodeClass k) { vclass_[v] = k; };
  for (const auto& f : mesh.facets) {
    auto it = edges.find(edge_key(f.a, f.b));
    if (it == edges.end()) throw validation_error("boundary facet is not a mesh edge");
    int mid = it->second;
    if (f.tag == FacetTag::farfield) {
      Eigen::Vector2d center = 0.5 * (mesh.nodes.row(f.a) + mesh.nodes.row(f.b));
      double ang = std::atan2(center.y(), center.x());
      bool outflow = std::abs(std::remainder(ang - std::numbers::pi, 2 * std::numbers::pi)) <= half;
      if (outflow) {
        for (int v : {f.a, f.b, mid})
          if (vclass_[v] == VNodeClass::interior) mark(v, VNodeClass::outflow);
      }
    }
  }
  for (const auto& f : mesh.facets) {
    if (f.tag != FacetTag::farfield) continue;
    auto mid = edges.at(edge_key(f.a, f.b));
    Eigen::Vector2d center = 0.5 * (mesh.nodes.row(f.a) + mesh.nodes.row(f.b));
    double ang = std::atan2(center.y(), center.x());
    bool outflow = std::abs(std::remainder(ang - std::numbers::pi, 2 * std::numbers::pi)) <= half;
    if (!outflow)
      for (int v : {f.a, f.b, mid}) mark(v, VNodeClass::far_dirichlet);
  }
  for (const auto& f : mesh.facets) {
    if (f.tag != FacetTag::body) continue;
    auto mid = edges.at(edge_key(f.a, f.b));
    for (int v : {f.a, f.b, mid}) mark(v, VNodeClass::body);
  }

  vdof_.assign(n_vnodes_, -1);
  for (int v = 0; v < n_vnodes_; ++v) {
    if (vclass_[v] == VNodeClass::far_dirichlet) continue;
    vdof_[v] = n_vdofs_;
    n_vdofs_ += 2;
    if (vclass_[v] == VNodeClass::body) body_vnodes_.push_back(v);
  }

  for (const auto& f : mesh.facets) {
    BoundaryFacet bf;
    bf.a = f.a;
    bf.b = f.b;
    bf.mid = edges.at(edge_key(f.a, f.b));
    bf.tag = f.tag;
    Eigen::Vector2d t = mesh.nodes.row(f.b) - mesh.nodes.row(f.a);
    bf.length = t.norm();
    t /= bf.length;
    bf.normal = Eigen::Vector2d(t.y(), -t.x());  // fluid on the left -> outward
    bfacets_.push_back(bf);
  }
}

CellGeometry cell_geometry(const Mesh& mesh, int c) {
  Eigen::Vector2d p0 = mesh.nodes.row(mesh.cells(c, 0));
  Eigen::Vector2d p1 = mesh.nodes.row(mesh.cells(c, 1));
  Eigen::Vector2d p2 = mesh.nodes.row(mesh.cells(c, 2));
  CellGeometry g;
  double twoA = (p1 - p0).x() * (p2 - p0).y() - (p1 - p0).y() * (p2 - p0).x();
  g.area = 0.5 * twoA;
  auto perp = [](const Eigen::Vector2d& v) { return Eigen::Vector2d(-v.y(), v.x()); };
  g.grad_lambda.row(0) = perp(p2 - p1) / twoA;
  g.grad_lambda.row(1) = perp(p0 - p2) / twoA;
  g.grad_lambda.row(2) = perp(p1 - p0) / twoA;
  return g;
}

const TriQuadrature& tri_quadrature() {
  static const TriQuadrature q = [] {
    TriQuadrature q;
    // Dunavant degree-6 rule. Weights sum to one.
    const double w1 = 0.050844906370207, w2 = 0.116786275726379, w3 = 0.082851075618374;
    const double a1 = 0.873821971016996, b1 = 0.063089014491502;
    const double a2 = 0.501426509658179, b2 = 0.249286745170910;
    const double a3 = 0.636502499121399, b3 = 0.310352451033785, c3 = 0.053145049844816;
    int i = 0;
    auto add = [&](double x, double y, double z, double w) {
      q.bary[i] = Eigen::Vector3d(x, y, z);
      q.weight[i] = w;
      ++i;
    };
    add(a1, b1, b1, w1); add(b1, a1, b1, w1); add(b1, b1, a1, w1);
    add(a2, b2, b2, w2); add(b2, a2, b2, w2); add(b2, b2, a2, w2);
    add(a3, b3, c3, w3); add(a3, c3, b3, w3); add(b3, a3, c3, w3);
    add(b3, c3, a3, w3); add(c3, a3, b3, w3); add(c3, b3, a3, w3);
    return q;
  }();
  return q;
}

void p2_values(const Eigen::Vector3d& l, std::array<double, 6>& phi) {
  phi[0] = l[0] * (2 * l[0] - 1);
  phi[1] = l[1] * (2 * l[1] - 1);
  phi[2] = l[2] * (2 * l[2] - 1);
  phi[3] = 4 * l[1] * l[2];
  phi[4] = 4 * l[2] * l[0];
  phi[5] = 4 * l[0] * l[1];
}

void p2_gradients(const Eigen::Vector3d& l, const Eigen::Matrix<double, 3, 2>& gl,
                  std::array<Eigen::Vector2d, 6>& grad) {
  for (int i = 0; i < 3; ++i) grad[i] = (4 * l[i] - 1) * gl.row(i);
  grad[3] = 4 * (l[2] * gl.row(1) + l[1] * gl.row(2));
  grad[4] = 4 * (l[0] * gl.row(2) + l[2] * gl.row(0));
  grad[5] = 4 * (l[1] * gl.row(0) + l[0] * gl.row(1));
}

void p2_hessians(const Eigen::Matrix<double, 3, 2>& gl,
                 std::array<Eigen::Matrix2d, 6>& hess) {
  auto outer = [&](int i, int j) -> Eigen::Matrix2d {
    return gl.row(i).transpose() * gl.row(j);
  };
  for (int i = 0; i < 3; ++i) hess[i] = 4.0 * outer(i, i);
  hess[3] = 4.0 * (outer(1, 2) + outer(2, 1));
  hess[4] = 4.0 * (outer(2, 0) + outer(0, 2));
  hess[5] = 4.0 * (outer(0, 1) + outer(1, 0));
}

const LineQuadrature& line_quadrature() {
  static const LineQuadrature q = [] {
    LineQuadrature q;
    q.t = {0.069431844202974, 0.330009478207572, 0.669990521792428, 0.930568155797026};
    q.weight = {0.173927422568727, 0.326072577431273, 0.326072577431273,
                0.173927422568727};
    return q;
  }();
  return q;
}

double DiscreteSpace::measure_inf_sup() const {
  // beta^2 = min eig of  B^T K^{-1} B q = beta^2 M_p q  with K the deformation
  // energy on the constrained velocity space and B the pressure-gradient
  // block. Dense in the pressure count.
  const auto& quad = tri_quadrature();
  std::vector<Triplet> tK, tB, tMp;
  for (int c = 0; c < mesh_->n_cells(); ++c) {
    auto g = cell_geometry(*mesh_, c);
    const auto& vn = cell_vnodes_[c];
    std::array<Eigen::Vector2d, 6> grad;
    std::array<double, 6> phi;
    for (int qp = 0; qp < TriQuadrature::n; ++qp) {
      double w = quad.weight[qp] * g.area;
      p2_gradients(quad.bary[qp], g.grad_lambda, grad);
      p2_values(quad.bary[qp], phi);
      for (int i = 0; i < 6; ++i) {
        int di = vdof_[vn[i]];
        if (di < 0) continue;
        for (int j = 0; j < 6; ++j) {
          int dj = vdof_[vn[j]];
          if (dj < 0) continue;
          // 2 (D(u), D(v)) for the two vector components.
          double gg = grad[i].dot(grad[j]);
          for (int ci = 0; ci < 2; ++ci)
            for (int cj = 0; cj < 2; ++cj) {
              double val = (ci == cj ? gg : 0.0) + grad[i][cj] * grad[j][ci];
              if (val != 0.0) tK.emplace_back(di + ci, dj + cj, w * val);
            }
        }
        // B[i, p] = -(div phi_i, psi_p)
        for (int p = 0; p < 3; ++p) {
          int pj = mesh_->cells(c, p);
          for (int ci = 0; ci < 2; ++ci)
            tB.emplace_back(di + ci, pj, -w * grad[i][ci] * quad.bary[qp][p]);
        }
      }
      for (int p = 0; p < 3; ++p)
        for (int r = 0; r < 3; ++r)
          tMp.emplace_back(mesh_->cells(c, p), mesh_->cells(c, r),
                           w * quad.bary[qp][p] * quad.bary[qp][r]);
    }
  }
  SpMat K(n_vdofs_, n_vdofs_), B(n_vdofs_, n_pdofs_), Mp(n_pdofs_, n_pdofs_);
  K.setFromTriplets(tK.begin(), tK.end());
  B.setFromTriplets(tB.begin(), tB.end());
  Mp.setFromTriplets(tMp.begin(), tMp.end());

  Eigen::SparseLU<SpMat> lu;
  lu.compute(K);
  if (lu.info() != Eigen::Success)
    throw solver_error("deformation-energy block factorization failed");
  Mat S(n_pdofs_, n_pdofs_);
  Mat Bd = Mat(B);
  for (int j = 0; j < n_pdofs_; ++j) S.col(j) = Bd.transpose() * lu.solve(Bd.col(j));
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(S, Mat(Mp));
  return std::sqrt(std::max(0.0, es.eigenvalues().minCoeff()));
}

}  // namespace oscilla
