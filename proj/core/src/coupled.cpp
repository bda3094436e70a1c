#include "oscilla/coupled.hpp"

namespace oscilla {

namespace {

void append_sparse(std::vector<Triplet>& trips, const SpMat& M, int r0, int c0,
                   double scale = 1.0, bool transpose = false) {
  for (int k = 0; k < M.outerSize(); ++k)
    for (SpMat::InnerIterator it(M, k); it; ++it) {
      const int r = transpose ? static_cast<int>(it.col()) : static_cast<int>(it.row());
      const int c = transpose ? static_cast<int>(it.row()) : static_cast<int>(it.col());
      trips.emplace_back(r0 + r, c0 + c, scale * it.value());
    }
}

SpMat from_triplets(int rows, int cols, std::vector<Triplet>& trips) {
  SpMat M(rows, cols);
  M.setFromTriplets(trips.begin(), trips.end());
  return M;
}

}  // namespace

CoupledOperators::CoupledOperators(const DiscreteSpace& space, const AssembledForms& forms,
                                   const SteadyState& base, const Vec& u0_prime,
                                   double varpi, const Mat& A, bool fixed_body)
    : space_(&space),
      forms_(&forms),
      base_(base),
      u0_prime_(u0_prime),
      lambda0_(base.lambda),
      varpi_(varpi),
      A_(A),
      fixed_body_(fixed_body) {
  np_ = forms.np;

  // Prolongation: free dofs pass through, body dofs read the rigid velocity.
  std::vector<int> free_dofs;
  for (int v = 0; v < space.n_vnodes(); ++v) {
    const int d = space.vdof(v);
    if (d < 0 || space.vclass(v) == VNodeClass::body) continue;
    free_dofs.push_back(d);
    free_dofs.push_back(d + 1);
  }
  nf_ = static_cast<int>(free_dofs.size());
  n_ = fixed_body_ ? nf_ : nf_ + 4;

  std::vector<Triplet> zt;
  for (int k = 0; k < nf_; ++k) zt.emplace_back(free_dofs[k], k, 1.0);
  if (!fixed_body_)
    for (int b : space.body_vnodes())
      for (int c = 0; c < 2; ++c) zt.emplace_back(space.vdof(b) + c, nf_ + c, 1.0);
  Zw_ = from_triplets(forms.nv, n_, zt);

  if (!fixed_body_ && (A_.rows() != 2 || A_.cols() != 2))
    throw validation_error("coupled: stiffness matrix must be 2x2");

  // Transport-coefficient pieces on the full dof space. The base flow enters
  // through its value and its lambda-derivative; the rigid-velocity part of
  // the zeroth-order coupling ((sigma) . grad u0) needs separate columns.
  const SpMat C0 = assemble_convection(space, base_.u);
  const SpMat R0 = assemble_reaction(space, base_.u);
  const SpMat C1 = assemble_convection(space, u0_prime_);
  const SpMat R1 = assemble_reaction(space, u0_prime_);
  const Mat g0 = assemble_reaction_rigid(space, base_.u);
  const Mat g1 = assemble_reaction_rigid(space, u0_prime_);
  const double lam = lambda0_;

  const SpMat F0 = forms.diffusion - lam * forms.transport1 + lam * (C0 + R0);
  const SpMat F1 = -forms.transport1 + (C0 + R0) + lam * (C1 + R1);
  const SpMat F2 = C1 + R1;

  const SpMat Zt = Zw_.transpose();
  diff_state_ = Zt * forms.diffusion * Zw_;
  constraint_ = Zt * forms.grad_p;

  // Rigid columns of the zeroth-order coupling: -(coef) (sigma . grad u0x),
  // tested and mapped to the sigma columns of the state.
  auto rigid_term = [&](const Mat& g, double coef) {
    std::vector<Triplet> trips;
    const Mat zg = Zt * g;  // n x 2
    for (int r = 0; r < n_; ++r)
      for (int c = 0; c < 2; ++c)
        if (zg(r, c) != 0.0) trips.emplace_back(r, nf_ + c, -coef * zg(r, c));
    return from_triplets(n_, n_, trips);
  };

  std::vector<Triplet> spring_t, gram_extra_t;
  if (!fixed_body_) {
    for (int i = 0; i < 2; ++i) {
      gram_extra_t.emplace_back(nf_ + i, nf_ + i, 1.0 / varpi_);
      for (int j = 0; j < 2; ++j) {
        const double a = A_(i, j) / varpi_;
        if (a != 0.0) {
          spring_t.emplace_back(nf_ + i, nf_ + 2 + j, a);       // sigma row: +A eta / varpi
          spring_t.emplace_back(nf_ + 2 + i, nf_ + j, -a);      // eta row: -A sigma / varpi
          gram_extra_t.emplace_back(nf_ + 2 + i, nf_ + 2 + j, a);
        }
      }
    }
  }
  const SpMat spring = from_triplets(n_, n_, spring_t);
  gram_ = SpMat(Zt * forms.mass * Zw_) + from_triplets(n_, n_, gram_extra_t);

  l0_ = SpMat(Zt * (forms.diffusion - lam * forms.transport1) * Zw_) + spring;
  l2_ = SpMat(Zt * F0 * Zw_) + spring;
  s011_ = SpMat(Zt * F1 * Zw_);
  s2_ = SpMat(Zt * F2 * Zw_);
  if (!fixed_body_) {
    l2_ = l2_ + rigid_term(g0, lam);
    s011_ = s011_ + rigid_term(g0, 1.0) + rigid_term(g1, lam);
    s2_ = s2_ + rigid_term(g1, 1.0);
  }
}

SpMat CoupledOperators::l2_at(double mu) const {
  return l2_ + mu * s011_ + (mu * mu) * s2_;
}

SpCMat CoupledOperators::shifted_aug(Complex s, double mu) const {
  const SpMat L = l2_at(mu);
  std::vector<CTriplet> trips;
  trips.reserve(L.nonZeros() + gram_.nonZeros() + 2 * constraint_.nonZeros());
  for (int k = 0; k < L.outerSize(); ++k)
    for (SpMat::InnerIterator it(L, k); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                         Complex(it.value(), 0.0));
  for (int k = 0; k < gram_.outerSize(); ++k)
    for (SpMat::InnerIterator it(gram_, k); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                         -s * it.value());
  for (int k = 0; k < constraint_.outerSize(); ++k)
    for (SpMat::InnerIterator it(constraint_, k); it; ++it) {
      trips.emplace_back(static_cast<int>(it.row()), n_ + static_cast<int>(it.col()),
                         Complex(it.value(), 0.0));
      trips.emplace_back(n_ + static_cast<int>(it.col()), static_cast<int>(it.row()),
                         Complex(it.value(), 0.0));
    }
  SpCMat M(n_ + np_, n_ + np_);
  M.setFromTriplets(trips.begin(), trips.end());
  return M;
}

SpCMat CoupledOperators::osc_aug(int k, double zeta, double mu) const {
  return shifted_aug(Complex(0.0, k * zeta), mu);
}

SpMat CoupledOperators::steady_aug(double mu) const {
  const SpMat L = l2_at(mu);
  std::vector<Triplet> trips;
  append_sparse(trips, L, 0, 0);
  append_sparse(trips, constraint_, 0, n_);
  append_sparse(trips, constraint_, n_, 0, 1.0, true);
  std::vector<Triplet> t = std::move(trips);
  return from_triplets(n_ + np_, n_ + np_, t);
}

SpMat CoupledOperators::mean_aug(double mu) const {
  // Layout: [w_free; eta_mean; p], rows [free momentum; rigid-tested momentum;
  // continuity]. Zero body trace, zero mean rigid velocity: the fluid and
  // rigid-tested rows of the state operator restricted to the free columns,
  // plus the spring column on the rigid-tested rows.
  const SpMat Fmu_state = l2_at(mu);
  std::vector<Triplet> trips;
  const int ne = fixed_body_ ? 0 : 2;
  for (int k = 0; k < Fmu_state.outerSize(); ++k)
    for (SpMat::InnerIterator it(Fmu_state, k); it; ++it) {
      const int r = static_cast<int>(it.row());
      const int c = static_cast<int>(it.col());
      if (c < nf_ && r < nf_ + ne) trips.emplace_back(r, c, it.value());
    }
  if (!fixed_body_)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        if (A_(i, j) != 0.0) trips.emplace_back(nf_ + i, nf_ + j, A_(i, j) / varpi_);
  // Pressure on free and rigid-tested rows; continuity tests the zero-trace
  // fluid part only (eta rows of the constraint are structurally zero).
  for (int k = 0; k < constraint_.outerSize(); ++k)
    for (SpMat::InnerIterator it(constraint_, k); it; ++it) {
      const int r = static_cast<int>(it.row());
      if (r >= nf_ + ne) continue;
      trips.emplace_back(r, nf_ + ne + static_cast<int>(it.col()), it.value());
      if (r < nf_) trips.emplace_back(nf_ + ne + static_cast<int>(it.col()), r, it.value());
    }
  std::vector<Triplet> t = std::move(trips);
  return from_triplets(mean_n(), mean_n(), t);
}

Vec CoupledOperators::nonlinear_form(const Vec& a, const Vec& b) const {
  return nonlinear_form_batch({a}, {b})[0];
}

std::vector<Vec> CoupledOperators::nonlinear_form_batch(const std::vector<Vec>& a,
                                                        const std::vector<Vec>& b) const {
  std::vector<Vec> af(a.size()), bf(b.size());
  std::vector<Eigen::Vector2d> sa(a.size());
  for (size_t s = 0; s < a.size(); ++s) {
    af[s] = to_full(a[s]);
    bf[s] = to_full(b[s]);
    sa[s] = sigma_of(a[s]);
  }
  std::vector<Vec> rf = convective_form_batch(*space_, af, sa, bf);
  std::vector<Vec> out(a.size());
  for (size_t s = 0; s < a.size(); ++s) out[s] = Zw_.transpose() * rf[s];
  return out;
}

CVec CoupledOperators::nonlinear_form(const CVec& a, const CVec& b) const {
  const Vec ar = a.real(), ai = a.imag(), br = b.real(), bi = b.imag();
  auto r = nonlinear_form_batch({ar, ai, ar, ai}, {br, bi, bi, br});
  CVec out(n_);
  out.real() = r[0] - r[1];
  out.imag() = r[2] + r[3];
  return out;
}

Vec CoupledOperators::to_full(const Vec& state) const { return Zw_ * state; }

CVec CoupledOperators::to_full(const CVec& state) const {
  return Zw_ * state.real() + Complex(0, 1) * (Zw_ * state.imag());
}

Vec CoupledOperators::from_full(const Vec& full, const Eigen::Vector2d& sigma,
                                const Eigen::Vector2d& eta) const {
  Vec x = Vec::Zero(n_);
  // Zw has orthonormal free columns; recover free entries by transposition and
  // subtract the trace contribution.
  Vec f = full;
  if (!fixed_body_)
    for (int b : space_->body_vnodes())
      for (int c = 0; c < 2; ++c) f[space_->vdof(b) + c] = 0.0;
  x.head(nf_) = (Zw_.transpose() * f).head(nf_);
  if (!fixed_body_) {
    x.segment<2>(nf_) = sigma;
    x.segment<2>(nf_ + 2) = eta;
  }
  return x;
}

Eigen::Vector2d CoupledOperators::sigma_of(const Vec& state) const {
  return fixed_body_ ? Eigen::Vector2d::Zero() : Eigen::Vector2d(state.segment<2>(nf_));
}
Eigen::Vector2cd CoupledOperators::sigma_of(const CVec& state) const {
  return fixed_body_ ? Eigen::Vector2cd::Zero() : Eigen::Vector2cd(state.segment<2>(nf_));
}
Eigen::Vector2d CoupledOperators::eta_of(const Vec& state) const {
  return fixed_body_ ? Eigen::Vector2d::Zero() : Eigen::Vector2d(state.segment<2>(nf_ + 2));
}
Eigen::Vector2cd CoupledOperators::eta_of(const CVec& state) const {
  return fixed_body_ ? Eigen::Vector2cd::Zero() : Eigen::Vector2cd(state.segment<2>(nf_ + 2));
}

Complex CoupledOperators::bilinear(const CVec& x, const CVec& y) const {
  return x.transpose() * (gram_ * y);
}

Complex CoupledOperators::inner(const CVec& x, const CVec& y) const {
  return x.adjoint() * (gram_ * y);
}

double CoupledOperators::norm(const CVec& x) const { return std::sqrt(std::real(inner(x, x))); }

double CoupledOperators::norm(const Vec& x) const {
  return std::sqrt(x.dot(gram_ * x));
}

double CoupledOperators::dissipation(const CVec& x) const {
  const Vec xr = x.real(), xi = x.imag();
  return xr.dot(diff_state_ * xr) + xi.dot(diff_state_ * xi);
}

}  // namespace oscilla
