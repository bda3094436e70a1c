#include "oscilla/operators.hpp"

#include <Eigen/SparseLU>
#include <map>
#include <utility>

namespace oscilla {

namespace {

// Per-cell assembly context: dofs, quadrature-point basis data.
struct CellCtx {
  std::array<int, 6> dof;          // first component dof per node, -1 if eliminated
  CellGeometry geom;
  std::array<std::array<Eigen::Vector2d, 6>, TriQuadrature::n> grad;
};

void load_cell(const DiscreteSpace& space, int c, CellCtx& ctx) {
  const auto& vn = space.cell_vnodes(c);
  for (int n = 0; n < 6; ++n) ctx.dof[n] = space.vdof(vn[n]);
  ctx.geom = cell_geometry(space.mesh(), c);
  const TriQuadrature& quad = tri_quadrature();
  for (int q = 0; q < TriQuadrature::n; ++q)
    p2_gradients(quad.bary[q], ctx.geom.grad_lambda, ctx.grad[q]);
}

const std::array<std::array<double, 6>, TriQuadrature::n>& basis_values() {
  static const auto vals = [] {
    std::array<std::array<double, 6>, TriQuadrature::n> v{};
    const TriQuadrature& quad = tri_quadrature();
    for (int q = 0; q < TriQuadrature::n; ++q) p2_values(quad.bary[q], v[q]);
    return v;
  }();
  return vals;
}

// Field value / gradient of a P2 vector field at one quadrature point.
Eigen::Vector2d field_value(const CellCtx& ctx, const std::array<double, 6>& phi,
                            const Vec& f) {
  Eigen::Vector2d v = Eigen::Vector2d::Zero();
  for (int n = 0; n < 6; ++n) {
    if (ctx.dof[n] < 0) continue;
    v[0] += phi[n] * f[ctx.dof[n]];
    v[1] += phi[n] * f[ctx.dof[n] + 1];
  }
  return v;
}

// grad[a][b] = d_b f_a.
Eigen::Matrix2d field_gradient(const CellCtx& ctx, int q, const Vec& f) {
  Eigen::Matrix2d g = Eigen::Matrix2d::Zero();
  for (int n = 0; n < 6; ++n) {
    if (ctx.dof[n] < 0) continue;
    const Eigen::Vector2d& gn = ctx.grad[q][n];
    g.row(0) += f[ctx.dof[n]] * gn.transpose();
    g.row(1) += f[ctx.dof[n] + 1] * gn.transpose();
  }
  return g;
}

void scatter_local(const CellCtx& ctx, const Eigen::Matrix<double, 12, 12>& local,
                   std::vector<Triplet>& trips) {
  for (int i = 0; i < 6; ++i) {
    if (ctx.dof[i] < 0) continue;
    for (int j = 0; j < 6; ++j) {
      if (ctx.dof[j] < 0) continue;
      for (int ci = 0; ci < 2; ++ci)
        for (int cj = 0; cj < 2; ++cj) {
          double v = local(2 * i + ci, 2 * j + cj);
          if (v != 0.0) trips.emplace_back(ctx.dof[i] + ci, ctx.dof[j] + cj, v);
        }
    }
  }
}

}  // namespace

AssembledForms assemble_basic_forms(const DiscreteSpace& space) {
  AssembledForms F;
  F.nv = space.n_vdofs();
  F.np = space.n_pdofs();
  const Mesh& mesh = space.mesh();
  const TriQuadrature& quad = tri_quadrature();
  const auto& phis = basis_values();

  std::vector<Triplet> t_mass, t_diff, t_tr, t_gp;
  CellCtx ctx;
  Eigen::Matrix<double, 12, 12> lm, ld, lt;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    load_cell(space, static_cast<int>(c), ctx);
    lm.setZero();
    ld.setZero();
    lt.setZero();
    Eigen::Matrix<double, 12, 3> lgp = Eigen::Matrix<double, 12, 3>::Zero();
    for (int q = 0; q < TriQuadrature::n; ++q) {
      const double w = quad.weight[q] * ctx.geom.area;
      const auto& phi = phis[q];
      const auto& grad = ctx.grad[q];
      const Eigen::Vector3d& bary = quad.bary[q];
      for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) {
          const double m = w * phi[i] * phi[j];
          const double gg = w * grad[i].dot(grad[j]);
          const double t1 = w * phi[i] * grad[j][0];
          for (int c2 = 0; c2 < 2; ++c2) {
            lm(2 * i + c2, 2 * j + c2) += m;
            ld(2 * i + c2, 2 * j + c2) += gg;
            lt(2 * i + c2, 2 * j + c2) += t1;
          }
          // 2 D(u):D(v) cross part beyond grad:grad.
          for (int ci = 0; ci < 2; ++ci)
            for (int cj = 0; cj < 2; ++cj)
              ld(2 * i + ci, 2 * j + cj) += w * grad[i][cj] * grad[j][ci];
        }
        // -(div v, p) with P1 pressure = barycentric coordinate of vertex p.
        for (int p = 0; p < 3; ++p) {
          const double psi = bary[p];
          lgp(2 * i + 0, p) -= w * grad[i][0] * psi;
          lgp(2 * i + 1, p) -= w * grad[i][1] * psi;
        }
      }
    }
    scatter_local(ctx, lm, t_mass);
    scatter_local(ctx, ld, t_diff);
    scatter_local(ctx, lt, t_tr);
    for (int i = 0; i < 6; ++i) {
      if (ctx.dof[i] < 0) continue;
      for (int p = 0; p < 3; ++p)
        for (int ci = 0; ci < 2; ++ci)
          t_gp.emplace_back(ctx.dof[i] + ci, mesh.cells(c, p), lgp(2 * i + ci, p));
    }
  }

  F.mass.resize(F.nv, F.nv);
  F.mass.setFromTriplets(t_mass.begin(), t_mass.end());
  F.diffusion.resize(F.nv, F.nv);
  F.diffusion.setFromTriplets(t_diff.begin(), t_diff.end());
  SpMat tr(F.nv, F.nv);
  tr.setFromTriplets(t_tr.begin(), t_tr.end());
  F.transport1 = 0.5 * (tr - SpMat(tr.transpose()));
  F.transport1_raw = tr;
  F.grad_p.resize(F.nv, F.np);
  F.grad_p.setFromTriplets(t_gp.begin(), t_gp.end());
  return F;
}

SpMat assemble_convection(const DiscreteSpace& space, const Vec& coeff) {
  const Mesh& mesh = space.mesh();
  const TriQuadrature& quad = tri_quadrature();
  const auto& phis = basis_values();
  std::vector<Triplet> trips;
  CellCtx ctx;
  Eigen::Matrix<double, 12, 12> local;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    load_cell(space, static_cast<int>(c), ctx);
    local.setZero();
    for (int q = 0; q < TriQuadrature::n; ++q) {
      const double w = quad.weight[q] * ctx.geom.area;
      const auto& phi = phis[q];
      const Eigen::Vector2d cv = field_value(ctx, phi, coeff);
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) {
          const double v = w * phi[i] * cv.dot(ctx.grad[q][j]);
          local(2 * i, 2 * j) += v;
          local(2 * i + 1, 2 * j + 1) += v;
        }
    }
    scatter_local(ctx, local, trips);
  }
  SpMat M(space.n_vdofs(), space.n_vdofs());
  M.setFromTriplets(trips.begin(), trips.end());
  return M;
}

SpMat assemble_reaction(const DiscreteSpace& space, const Vec& field) {
  const Mesh& mesh = space.mesh();
  const TriQuadrature& quad = tri_quadrature();
  const auto& phis = basis_values();
  std::vector<Triplet> trips;
  CellCtx ctx;
  Eigen::Matrix<double, 12, 12> local;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    load_cell(space, static_cast<int>(c), ctx);
    local.setZero();
    for (int q = 0; q < TriQuadrature::n; ++q) {
      const double w = quad.weight[q] * ctx.geom.area;
      const auto& phi = phis[q];
      const Eigen::Matrix2d G = field_gradient(ctx, q, field);
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) {
          const double pp = w * phi[i] * phi[j];
          for (int ci = 0; ci < 2; ++ci)
            for (int cj = 0; cj < 2; ++cj)
              local(2 * i + ci, 2 * j + cj) += pp * G(ci, cj);
        }
    }
    scatter_local(ctx, local, trips);
  }
  SpMat M(space.n_vdofs(), space.n_vdofs());
  M.setFromTriplets(trips.begin(), trips.end());
  return M;
}

Mat assemble_reaction_rigid(const DiscreteSpace& space, const Vec& field) {
  const Mesh& mesh = space.mesh();
  const TriQuadrature& quad = tri_quadrature();
  const auto& phis = basis_values();
  Mat B = Mat::Zero(space.n_vdofs(), 2);
  CellCtx ctx;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    load_cell(space, static_cast<int>(c), ctx);
    for (int q = 0; q < TriQuadrature::n; ++q) {
      const double w = quad.weight[q] * ctx.geom.area;
      const auto& phi = phis[q];
      const Eigen::Matrix2d G = field_gradient(ctx, q, field);
      for (int i = 0; i < 6; ++i) {
        if (ctx.dof[i] < 0) continue;
        for (int ci = 0; ci < 2; ++ci)
          for (int m = 0; m < 2; ++m)
            B(ctx.dof[i] + ci, m) += w * phi[i] * G(ci, m);
      }
    }
  }
  return B;
}

std::vector<Vec> convective_form_batch(const DiscreteSpace& space,
                                       const std::vector<Vec>& a,
                                       const std::vector<Eigen::Vector2d>& sigma_a,
                                       const std::vector<Vec>& b) {
  const size_t S = a.size();
  if (sigma_a.size() != S || b.size() != S)
    throw std::invalid_argument("convective_form_batch: mismatched batch sizes");
  const Mesh& mesh = space.mesh();
  const TriQuadrature& quad = tri_quadrature();
  const auto& phis = basis_values();
  std::vector<Vec> out(S, Vec::Zero(space.n_vdofs()));
  CellCtx ctx;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    load_cell(space, static_cast<int>(c), ctx);
    for (int q = 0; q < TriQuadrature::n; ++q) {
      const double w = quad.weight[q] * ctx.geom.area;
      const auto& phi = phis[q];
      for (size_t s = 0; s < S; ++s) {
        const Eigen::Vector2d cv = sigma_a[s] - field_value(ctx, phi, a[s]);
        const Eigen::Matrix2d gb = field_gradient(ctx, q, b[s]);
        const Eigen::Vector2d val = w * (gb * cv);
        Vec& r = out[s];
        for (int i = 0; i < 6; ++i) {
          if (ctx.dof[i] < 0) continue;
          r[ctx.dof[i]] += phi[i] * val[0];
          r[ctx.dof[i] + 1] += phi[i] * val[1];
        }
      }
    }
  }
  return out;
}

Vec convective_form(const DiscreteSpace& space, const Vec& a,
                    const Eigen::Vector2d& sigma_a, const Vec& b) {
  return convective_form_batch(space, {a}, {sigma_a}, {b})[0];
}

Eigen::Vector2d traction_from_residual(const DiscreteSpace& space, const Vec& residual) {
  Eigen::Vector2d f = Eigen::Vector2d::Zero();
  for (int v : space.body_vnodes()) {
    const int d = space.vdof(v);
    f[0] += residual[d];
    f[1] += residual[d + 1];
  }
  return f;
}

Eigen::Vector2d boundary_traction(const DiscreteSpace& space, const Vec& u, const Vec& p) {
  const Mesh& mesh = space.mesh();
  // Adjacent cell of each body facet, by its vertex pair.
  std::map<std::pair<int, int>, int> edge_cell;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    for (int e = 0; e < 3; ++e) {
      int x = mesh.cells(c, e), y = mesh.cells(c, (e + 1) % 3);
      if (x > y) std::swap(x, y);
      edge_cell[{x, y}] = static_cast<int>(c);
    }
  }
  const LineQuadrature& lq = line_quadrature();
  Eigen::Vector2d f = Eigen::Vector2d::Zero();
  for (const auto& bf : space.boundary_facets()) {
    if (bf.tag != FacetTag::body) continue;
    int x = bf.a, y = bf.b;
    if (x > y) std::swap(x, y);
    const int c = edge_cell.at({x, y});
    CellCtx ctx;
    load_cell(space, c, ctx);
    const auto& vn = space.cell_vnodes(c);
    int la = -1, lb = -1;
    for (int k = 0; k < 3; ++k) {
      if (vn[k] == bf.a) la = k;
      if (vn[k] == bf.b) lb = k;
    }
    for (int q = 0; q < LineQuadrature::n; ++q) {
      Eigen::Vector3d bary = Eigen::Vector3d::Zero();
      bary[la] = 1.0 - lq.t[q];
      bary[lb] = lq.t[q];
      std::array<Eigen::Vector2d, 6> grad;
      p2_gradients(bary, ctx.geom.grad_lambda, grad);
      Eigen::Matrix2d gu = Eigen::Matrix2d::Zero();
      for (int n = 0; n < 6; ++n) {
        if (ctx.dof[n] < 0) continue;
        gu.row(0) += u[ctx.dof[n]] * grad[n].transpose();
        gu.row(1) += u[ctx.dof[n] + 1] * grad[n].transpose();
      }
      const double pv = (1.0 - lq.t[q]) * p[bf.a] + lq.t[q] * p[bf.b];
      const Eigen::Matrix2d stress =
          (gu + gu.transpose()) - pv * Eigen::Matrix2d::Identity();
      // bf.normal is outward from the fluid; same orientation as the
      // residual-based functional.
      f += lq.weight[q] * bf.length * (stress * bf.normal);
    }
  }
  return f;
}

SpMat selection_matrix(int n, const std::vector<int>& keep) {
  SpMat S(n, static_cast<int>(keep.size()));
  std::vector<Triplet> trips;
  trips.reserve(keep.size());
  for (size_t j = 0; j < keep.size(); ++j) trips.emplace_back(keep[j], static_cast<int>(j), 1.0);
  S.setFromTriplets(trips.begin(), trips.end());
  return S;
}

Vec stokes_lift(const DiscreteSpace& space, const AssembledForms& forms,
                const Eigen::Vector2d& G) {
  std::vector<int> free_dofs, body_dofs;
  for (int v = 0; v < space.n_vnodes(); ++v) {
    const int d = space.vdof(v);
    if (d < 0) continue;
    auto& dst = (space.vclass(v) == VNodeClass::body) ? body_dofs : free_dofs;
    dst.push_back(d);
    dst.push_back(d + 1);
  }
  const SpMat Sf = selection_matrix(forms.nv, free_dofs);
  const SpMat Sb = selection_matrix(forms.nv, body_dofs);
  const int nf = static_cast<int>(free_dofs.size());
  const int np = forms.np;

  // body dofs were pushed in (x, y) pairs.
  Vec xb(body_dofs.size());
  for (size_t k = 0; k < body_dofs.size(); k += 2) {
    xb[k] = G[0];
    xb[k + 1] = G[1];
  }

  const SpMat Aff = SpMat(Sf.transpose()) * forms.diffusion * Sf;
  const SpMat Afb = SpMat(Sf.transpose()) * forms.diffusion * Sb;
  const SpMat Bf = SpMat(Sf.transpose()) * forms.grad_p;
  const SpMat Bb = SpMat(Sb.transpose()) * forms.grad_p;

  std::vector<Triplet> trips;
  auto push_block = [&trips](const SpMat& M, int r0, int c0, bool transpose) {
    for (int k = 0; k < M.outerSize(); ++k)
      for (SpMat::InnerIterator it(M, k); it; ++it) {
        if (transpose)
          trips.emplace_back(r0 + static_cast<int>(it.col()), c0 + static_cast<int>(it.row()),
                             it.value());
        else
          trips.emplace_back(r0 + static_cast<int>(it.row()), c0 + static_cast<int>(it.col()),
                             it.value());
      }
  };
  push_block(Aff, 0, 0, false);
  push_block(Bf, 0, nf, false);
  push_block(Bf, nf, 0, true);  // continuity rows Bf^T
  SpMat K(nf + np, nf + np);
  K.setFromTriplets(trips.begin(), trips.end());

  Vec rhs(nf + np);
  rhs.head(nf) = -(Afb * xb);
  rhs.tail(np) = -(SpMat(Bb.transpose()) * xb);

  Eigen::SparseLU<SpMat> lu;
  lu.compute(K);
  if (lu.info() != Eigen::Success) throw solver_error("stokes_lift: factorization failed");
  const Vec sol = lu.solve(rhs);

  Vec full = Vec::Zero(forms.nv);
  for (int k = 0; k < nf; ++k) full[free_dofs[k]] = sol[k];
  for (size_t k = 0; k < body_dofs.size(); ++k) full[body_dofs[k]] = xb[k];
  return full;
}

double divergence_residual(const AssembledForms& forms, const Vec& u) {
  return (forms.grad_p.transpose() * u).norm();
}

double broken_h2_seminorm(const DiscreteSpace& space, const Vec& u_re, const Vec& u_im) {
  const Mesh& mesh = space.mesh();
  double acc = 0.0;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const auto& vn = space.cell_vnodes(c);
    const CellGeometry geom = cell_geometry(mesh, static_cast<int>(c));
    std::array<Eigen::Matrix2d, 6> hess;
    p2_hessians(geom.grad_lambda, hess);
    for (int comp = 0; comp < 2; ++comp) {
      Eigen::Matrix2d Hr = Eigen::Matrix2d::Zero(), Hi = Eigen::Matrix2d::Zero();
      for (int n = 0; n < 6; ++n) {
        const int d = space.vdof(vn[n]);
        if (d < 0) continue;
        Hr += u_re[d + comp] * hess[n];
        if (u_im.size() > 0) Hi += u_im[d + comp] * hess[n];
      }
      acc += geom.area * (Hr.squaredNorm() + Hi.squaredNorm());
    }
  }
  return std::sqrt(acc);
}

double h1_seminorm(const DiscreteSpace& space, const Vec& u_re, const Vec& u_im) {
  const Mesh& mesh = space.mesh();
  const TriQuadrature& quad = tri_quadrature();
  double acc = 0.0;
  CellCtx ctx;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    load_cell(space, static_cast<int>(c), ctx);
    for (int q = 0; q < TriQuadrature::n; ++q) {
      const double w = quad.weight[q] * ctx.geom.area;
      acc += w * field_gradient(ctx, q, u_re).squaredNorm();
      if (u_im.size() > 0) acc += w * field_gradient(ctx, q, u_im).squaredNorm();
    }
  }
  return std::sqrt(acc);
}

}  // namespace oscilla
