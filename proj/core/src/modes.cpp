#include "oscilla/modes.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace oscilla {

namespace {

SpCMat complexify(const SpMat& A, const SpMat& B, Complex b_scale) {
  // A + b_scale * B as a complex sparse matrix.
  std::vector<CTriplet> trips;
  trips.reserve(A.nonZeros() + B.nonZeros());
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                         Complex(it.value(), 0.0));
  for (int k = 0; k < B.outerSize(); ++k)
    for (SpMat::InnerIterator it(B, k); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                         b_scale * it.value());
  SpCMat C(A.rows(), A.cols());
  C.setFromTriplets(trips.begin(), trips.end());
  return C;
}

CVec real_apply(const SpMat& M, const CVec& x) {
  CVec y(M.rows());
  y.real() = M * x.real();
  y.imag() = M * x.imag();
  return y;
}

double min_singular(const Eigen::Matrix2cd& M) {
  Eigen::JacobiSVD<Eigen::Matrix2cd> svd(M);
  return svd.singularValues().minCoeff();
}

}  // namespace

ModeWorkspace::ModeWorkspace(const DiscreteSpace& space, const AssembledForms& forms,
                             double lambda, double zeta0)
    : space_(&space), forms_(&forms), lambda_(lambda), zeta0_(zeta0) {
  if (zeta0 == 0.0) throw validation_error("modes: zeta0 must be nonzero");
  for (int v = 0; v < space.n_vnodes(); ++v) {
    const int d = space.vdof(v);
    if (d < 0 || space.vclass(v) == VNodeClass::body) continue;
    free_dofs_.push_back(d);
    free_dofs_.push_back(d + 1);
  }
  Sf_ = selection_matrix(forms.nv, free_dofs_);
  std::vector<Triplet> rt;
  for (int b : space.body_vnodes())
    for (int c = 0; c < 2; ++c) rt.emplace_back(space.vdof(b) + c, c, 1.0);
  Rb_.resize(forms.nv, 2);
  Rb_.setFromTriplets(rt.begin(), rt.end());
  F_ = forms.diffusion - lambda * forms.transport1;
}

SpCMat ModeWorkspace::fluid_matrix_full(int k) const {
  return complexify(F_, forms_->mass, Complex(0.0, k * zeta0_));
}

const Eigen::SparseLU<SpCMat>& ModeWorkspace::factorization(int k) {
  auto it = lu_.find(k);
  if (it != lu_.end()) return *it->second;

  const SpCMat Cfull = fluid_matrix_full(k);
  const SpCMat Cff = SpCMat(Sf_.cast<Complex>().transpose()) * Cfull * Sf_.cast<Complex>();
  const SpMat Bf = SpMat(Sf_.transpose()) * forms_->grad_p;
  const int nf = static_cast<int>(free_dofs_.size());
  const int np = forms_->np;

  std::vector<CTriplet> trips;
  for (int c = 0; c < Cff.outerSize(); ++c)
    for (SpCMat::InnerIterator it2(Cff, c); it2; ++it2)
      trips.emplace_back(static_cast<int>(it2.row()), static_cast<int>(it2.col()), it2.value());
  for (int c = 0; c < Bf.outerSize(); ++c)
    for (SpMat::InnerIterator it2(Bf, c); it2; ++it2) {
      trips.emplace_back(static_cast<int>(it2.row()), nf + static_cast<int>(it2.col()),
                         Complex(it2.value(), 0.0));
      trips.emplace_back(nf + static_cast<int>(it2.col()), static_cast<int>(it2.row()),
                         Complex(it2.value(), 0.0));
    }
  SpCMat K(nf + np, nf + np);
  K.setFromTriplets(trips.begin(), trips.end());

  auto lu = std::make_unique<Eigen::SparseLU<SpCMat>>();
  lu->compute(K);
  if (lu->info() != Eigen::Success)
    throw solver_error("modes: factorization failed at k=" + std::to_string(k));
  auto [pos, ok] = lu_.emplace(k, std::move(lu));
  (void)ok;
  return *pos->second;
}

CVec ModeWorkspace::solve_trace(int k, const Eigen::Vector2cd& trace, CVec* pressure,
                                const CVec* forcing) {
  const int nf = static_cast<int>(free_dofs_.size());
  const int np = forms_->np;
  const SpCMat Cfull = fluid_matrix_full(k);

  // Trace field on the full dof space.
  CVec xb = CVec::Zero(forms_->nv);
  {
    const Vec xr = Rb_ * Vec(trace.real());
    const Vec xi = Rb_ * Vec(trace.imag());
    xb.real() = xr;
    xb.imag() = xi;
  }

  CVec rhs = CVec::Zero(nf + np);
  CVec rhs_full = -(Cfull * xb);
  if (forcing) rhs_full += real_apply(forms_->mass, *forcing);
  rhs.head(nf) = SpCMat(Sf_.cast<Complex>().transpose()) * rhs_full;
  // Continuity: div of the trace field moves to the right side.
  const Vec cr = forms_->grad_p.transpose() * Vec(xb.real());
  const Vec ci = forms_->grad_p.transpose() * Vec(xb.imag());
  rhs.tail(np).real() = -cr;
  rhs.tail(np).imag() = -ci;

  const CVec sol = factorization(k).solve(rhs);
  CVec h = xb;
  for (int i = 0; i < nf; ++i) h[free_dofs_[i]] += sol[i];
  if (pressure) *pressure = sol.tail(np);
  return h;
}

ModeSolution ModeWorkspace::solve_mode(int k, int m) {
  if (m < 1 || m > 2)
    throw validation_error("modes: direction index out of range (m = 1..2)");
  ModeSolution sol;
  sol.k = k;
  sol.m = m;
  if (k == 0) {  // zero by convention
    sol.h = CVec::Zero(forms_->nv);
    sol.p = CVec::Zero(forms_->np);
    return sol;
  }
  Eigen::Vector2cd trace = Eigen::Vector2cd::Zero();
  trace[m - 1] = zeta0_;
  CVec p;
  sol.h = solve_trace(k, trace, &p);
  sol.p = p;
  const Vec hr = sol.h.real(), hi = sol.h.imag();
  sol.norm_l2 = std::sqrt(hr.dot(forms_->mass * hr) + hi.dot(forms_->mass * hi));
  sol.norm_h1 = h1_seminorm(*space_, hr, hi);
  sol.norm_h2_broken = broken_h2_seminorm(*space_, hr, hi);
  sol.residual = mode_residual(k, sol.h, sol.p, nullptr, &trace);
  return sol;
}

Eigen::Vector2cd ModeWorkspace::mode_traction(int k, const CVec& h, const CVec& p) const {
  const CVec r = SpCMat(fluid_matrix_full(k)) * h + real_apply(forms_->grad_p, p);
  Eigen::Vector2cd t;
  const Vec tr = Rb_.transpose() * Vec(r.real());
  const Vec ti = Rb_.transpose() * Vec(r.imag());
  t[0] = Complex(tr[0], ti[0]);
  t[1] = Complex(tr[1], ti[1]);
  return t;
}

double ModeWorkspace::mode_residual(int k, const CVec& h, const CVec& p, const CVec* forcing,
                                    const Eigen::Vector2cd* trace) const {
  CVec r = SpCMat(fluid_matrix_full(k)) * h + real_apply(forms_->grad_p, p);
  if (forcing) r -= real_apply(forms_->mass, *forcing);
  const CVec rf = SpCMat(Sf_.cast<Complex>().transpose()) * r;
  const Vec cr = forms_->grad_p.transpose() * Vec(h.real());
  const Vec ci = forms_->grad_p.transpose() * Vec(h.imag());
  double trace_err = 0.0;
  if (trace)
    for (int b : space_->body_vnodes())
      for (int c = 0; c < 2; ++c)
        trace_err = std::max(trace_err,
                             std::abs(h[space_->vdof(b) + c] - (*trace)[c]));
  const double scale = h.norm() + p.norm() + 1e-300;
  return (std::sqrt(rf.squaredNorm() + cr.squaredNorm() + ci.squaredNorm()) + trace_err) / scale;
}

const KMatrix& ModeWorkspace::k_matrix(int k) {
  auto it = kmat_.find(k);
  if (it != kmat_.end()) return it->second;
  if (k == 0) throw validation_error("modes: K matrix needs k != 0");
  KMatrix K;
  K.k = k;
  K.zeta0 = zeta0_;
  K.lambda = lambda_;
  for (int m = 0; m < 2; ++m) {
    Eigen::Vector2cd trace = Eigen::Vector2cd::Zero();
    trace[m] = zeta0_;
    CVec p;
    const CVec h = solve_trace(k, trace, &p);
    K.entries.col(m) = mode_traction(k, h, p);
  }
  K.min_singular = min_singular(K.entries);
  if (K.min_singular < 1e-12)
    throw solver_error("modes: K matrix numerically singular (discretization failure?)");
  return kmat_.emplace(k, std::move(K)).first->second;
}

ResonanceMatrix assemble_M(int k, double zeta0, const Mat& A, double varpi,
                           const KMatrix& K) {
  ResonanceMatrix R;
  R.k = k;
  R.M = (A - (k * zeta0) * (k * zeta0) * Mat::Identity(2, 2)).cast<Complex>() +
        Complex(0.0, k * varpi) * K.entries;
  Eigen::JacobiSVD<Eigen::Matrix2cd> svd(R.M);
  R.min_singular = svd.singularValues().minCoeff();
  R.condition = svd.singularValues().maxCoeff() / R.min_singular;
  return R;
}

FourierModeSet forced_response(ModeWorkspace& ws, const std::vector<Eigen::Vector2cd>& F,
                               const Mat& A, double varpi) {
  FourierModeSet out;
  out.kmax = static_cast<int>(F.size());
  for (int k = 1; k <= out.kmax; ++k) {
    const KMatrix& K = ws.k_matrix(k);
    const ResonanceMatrix M = assemble_M(k, ws.zeta0(), A, varpi, K);
    const Eigen::Vector2cd xi = M.M.fullPivLu().solve(F[k - 1]);
    out.xi.push_back(xi);
    CVec w = CVec::Zero(ws.forms().nv);
    CVec q = CVec::Zero(ws.forms().np);
    for (int m = 0; m < 2; ++m) {
      Eigen::Vector2cd trace = Eigen::Vector2cd::Zero();
      trace[m] = ws.zeta0();
      CVec pm;
      const CVec hm = ws.solve_trace(k, trace, &pm);
      const Complex c = Complex(0.0, k) * xi[m];
      w += c * hm;
      q += c * pm;
    }
    out.w.push_back(std::move(w));
    out.q.push_back(std::move(q));
  }
  return out;
}

Eigen::Vector2cd apply_resonance_operator(ModeWorkspace& ws, int k, const Mat& A,
                                          double varpi, const Eigen::Vector2cd& xi) {
  const ResonanceMatrix M = assemble_M(k, ws.zeta0(), A, varpi, ws.k_matrix(k));
  return M.M * xi;
}

FourierModeSet full_linear_tp_solve(ModeWorkspace& ws, const TpData& data, const Mat& A,
                                    double varpi, double residual_tol) {
  const int kmax = static_cast<int>(
      std::max({data.f.size(), data.F.size(), data.G.size()}));
  const DiscreteSpace& space = ws.space();
  const AssembledForms& forms = ws.forms();
  const double zeta0 = ws.zeta0();

  std::vector<int> free_dofs;
  for (int v = 0; v < space.n_vnodes(); ++v) {
    const int d = space.vdof(v);
    if (d < 0 || space.vclass(v) == VNodeClass::body) continue;
    free_dofs.push_back(d);
    free_dofs.push_back(d + 1);
  }
  const SpMat Sf = selection_matrix(forms.nv, free_dofs);
  std::vector<Triplet> rt;
  for (int b : space.body_vnodes())
    for (int c = 0; c < 2; ++c) rt.emplace_back(space.vdof(b) + c, c, 1.0);
  SpMat Rb(forms.nv, 2);
  Rb.setFromTriplets(rt.begin(), rt.end());
  const int nf = static_cast<int>(free_dofs.size());
  const int np = forms.np;
  const SpMat F_real = forms.diffusion - ws.lambda() * forms.transport1;

  FourierModeSet out;
  out.kmax = kmax;
  for (int k = 1; k <= kmax; ++k) {
    const Complex ikz(0.0, k * zeta0);
    auto get2 = [&](const std::vector<Eigen::Vector2cd>& v) {
      return (k <= static_cast<int>(v.size())) ? v[k - 1] : Eigen::Vector2cd::Zero().eval();
    };
    const Eigen::Vector2cd Fk = get2(data.F);
    const Eigen::Vector2cd Gk = get2(data.G);
    const bool has_f = k <= static_cast<int>(data.f.size()) && data.f[k - 1].size() > 0;

    // Divergence-free lifting of the excess boundary data.
    CVec wG = CVec::Zero(forms.nv);
    if (Gk.squaredNorm() > 0.0) {
      wG.real() = stokes_lift(space, forms, Gk.real());
      wG.imag() = stokes_lift(space, forms, Gk.imag());
    }

    const SpCMat Cfull = complexify(F_real, forms.mass, ikz);
    const SpCMat SfC = Sf.cast<Complex>();
    const SpCMat RbC = Rb.cast<Complex>();
    const SpCMat Cff = SpCMat(SfC.transpose()) * Cfull * SfC;
    const CMat Cfb = CMat(SpCMat(SfC.transpose()) * Cfull * RbC);  // nf x 2
    const CMat Cbf = CMat(SpCMat(RbC.transpose()) * Cfull * SfC);  // 2 x nf
    const CMat Cbb = CMat(SpCMat(RbC.transpose()) * Cfull * RbC);  // 2 x 2
    const SpMat Bf = SpMat(Sf.transpose()) * forms.grad_p;
    const Mat Bb = Mat(SpMat(Rb.transpose()) * forms.grad_p);      // 2 x np

    // Unknowns [w_free; xi; p].
    const int N = nf + 2 + np;
    std::vector<CTriplet> trips;
    for (int c = 0; c < Cff.outerSize(); ++c)
      for (SpCMat::InnerIterator it(Cff, c); it; ++it)
        trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int r = 0; r < nf; ++r)
      for (int c = 0; c < 2; ++c)
        if (Cfb(r, c) != Complex(0, 0)) trips.emplace_back(r, nf + c, ikz * Cfb(r, c));
    for (int c = 0; c < Bf.outerSize(); ++c)
      for (SpMat::InnerIterator it(Bf, c); it; ++it) {
        trips.emplace_back(static_cast<int>(it.row()), nf + 2 + static_cast<int>(it.col()),
                           Complex(it.value(), 0.0));
        trips.emplace_back(nf + 2 + static_cast<int>(it.col()), static_cast<int>(it.row()),
                           Complex(it.value(), 0.0));
      }
    // Rigid rows in spring units: varpi * rigid-tested fluid + (A - k^2 z^2).
    const Eigen::Matrix2cd spring =
        (A - (k * zeta0) * (k * zeta0) * Mat::Identity(2, 2)).cast<Complex>() +
        varpi * ikz * Cbb;
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < nf; ++c)
        if (Cbf(r, c) != Complex(0, 0)) trips.emplace_back(nf + r, c, varpi * Cbf(r, c));
      for (int c = 0; c < 2; ++c)
        if (spring(r, c) != Complex(0, 0)) trips.emplace_back(nf + r, nf + c, spring(r, c));
      for (int c = 0; c < np; ++c)
        if (Bb(r, c) != 0.0) trips.emplace_back(nf + r, nf + 2 + c, Complex(varpi * Bb(r, c), 0.0));
    }
    // Continuity of the rigid trace part.
    for (int c = 0; c < np; ++c)
      for (int r = 0; r < 2; ++r)
        if (Bb(r, c) != 0.0) trips.emplace_back(nf + 2 + c, nf + r, ikz * Bb(r, c));
    SpCMat Kmat(N, N);
    Kmat.setFromTriplets(trips.begin(), trips.end());

    CVec rhs = CVec::Zero(N);
    CVec rhs_full = -(Cfull * wG);
    if (has_f) rhs_full += real_apply(forms.mass, data.f[k - 1]);
    rhs.head(nf) = SpCMat(SfC.transpose()) * rhs_full;
    const CVec rb = SpCMat(RbC.transpose()) * rhs_full;
    rhs.segment<2>(nf) = Eigen::Vector2cd(Fk) + varpi * Eigen::Vector2cd(rb);
    const Vec c_re = forms.grad_p.transpose() * Vec(wG.real());
    const Vec c_im = forms.grad_p.transpose() * Vec(wG.imag());
    rhs.tail(np).real() = -c_re;
    rhs.tail(np).imag() = -c_im;

    Eigen::SparseLU<SpCMat> lu;
    lu.compute(Kmat);
    if (lu.info() != Eigen::Success)
      throw solver_error("tp solve: factorization failed at k=" + std::to_string(k));
    const CVec sol = lu.solve(rhs);

    const Eigen::Vector2cd xi = sol.segment<2>(nf);
    CVec w = wG;
    for (int i = 0; i < nf; ++i) w[free_dofs[i]] += sol[i];
    {
      const Eigen::Vector2cd sig = ikz * xi;
      CVec tr = CVec::Zero(forms.nv);
      tr.real() = Rb * Vec(sig.real());
      tr.imag() = Rb * Vec(sig.imag());
      w += tr;
    }
    const CVec q = sol.tail(np);

    // Residual audit of the assembled mode system.
    const double rel = (Kmat * sol - rhs).norm() / (rhs.norm() + sol.norm() + 1e-300);
    if (rel > residual_tol)
      throw solver_error("tp solve: residual above tolerance at k=" + std::to_string(k));

    out.xi.push_back(xi);
    out.w.push_back(std::move(w));
    out.q.push_back(q);
  }
  return out;
}

ResonanceScan resonance_scan(ModeWorkspace& ws, const Mat& A, int kbar,
                             const Eigen::Vector2cd& F_kbar,
                             const std::vector<double>& varpi_grid,
                             const std::vector<int>& extra_ks) {
  ResonanceScan scan;
  scan.kbar = kbar;
  scan.ks.push_back(kbar);
  for (int k : extra_ks)
    if (k != kbar) scan.ks.push_back(k);
  scan.varpi = varpi_grid;
  for (double vp : varpi_grid) {
    std::vector<double> row;
    for (int k : scan.ks) {
      const ResonanceMatrix M = assemble_M(k, ws.zeta0(), A, vp, ws.k_matrix(k));
      row.push_back(M.M.fullPivLu().solve(F_kbar).norm());
    }
    scan.amplitude.push_back(std::move(row));
  }
  // Log-log least squares for the resonant k.
  const int n = static_cast<int>(varpi_grid.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    const double x = std::log(varpi_grid[i]);
    const double y = std::log(scan.amplitude[i][0]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  scan.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - scan.slope * sx) / n;
  scan.prefactor_fit = std::exp(intercept);
  scan.prefactor_direct =
      ws.k_matrix(kbar).entries.fullPivLu().solve(F_kbar).norm() / std::abs(double(kbar));
  return scan;
}

EnergyIdentityReport energy_identity_report(ModeWorkspace& ws, int k, const Mat& A,
                                            double varpi, unsigned seed) {
  EnergyIdentityReport rep;
  rep.k = k;
  const AssembledForms& forms = ws.forms();
  const double zeta0 = ws.zeta0();
  Rng rng(seed);

  const KMatrix& K = ws.k_matrix(k);
  CVec h[2], p[2];
  for (int m = 0; m < 2; ++m) {
    Eigen::Vector2cd trace = Eigen::Vector2cd::Zero();
    trace[m] = zeta0;
    h[m] = ws.solve_trace(k, trace, &p[m]);
  }

  auto identity_terms = [&](const Eigen::Vector2cd& alpha) {
    const CVec hh = alpha[0] * h[0] + alpha[1] * h[1];
    const Vec hr = hh.real(), hi = hh.imag();
    const double l2sq = hr.dot(forms.mass * hr) + hi.dot(forms.mass * hi);
    const double diff = hr.dot(forms.diffusion * hr) + hi.dot(forms.diffusion * hi);
    // Hermitian transport pairing h* T1 h (purely imaginary for exact skew).
    const Complex tr_pair(hr.dot(forms.transport1 * hr) + hi.dot(forms.transport1 * hi),
                          hr.dot(forms.transport1 * hi) - hi.dot(forms.transport1 * hr));
    const Complex work = (alpha.adjoint() * (K.entries * alpha))(0, 0);
    struct Terms {
      Complex lhs_cd2, lhs_cd1, rhs_p1, rhs_p2;
      double skew_re, scale;
    } t;
    t.lhs_cd2 = Complex(0.0, k * zeta0) * l2sq + diff - ws.lambda() * tr_pair;
    t.lhs_cd1 = Complex(0.0, k * zeta0) * l2sq + 0.5 * diff - ws.lambda() * tr_pair;
    t.rhs_p1 = zeta0 * work;
    t.rhs_p2 = zeta0 * zeta0 * work;
    t.skew_re = std::abs(tr_pair.real()) / std::max(1e-300, l2sq);
    t.scale = std::abs(k * zeta0 * l2sq) + diff + std::abs(ws.lambda() * tr_pair) +
              std::abs(t.rhs_p1);
    return t;
  };

  const Eigen::Vector2cd alpha(Complex(rng.normal(), rng.normal()),
                               Complex(rng.normal(), rng.normal()));
  auto t1 = identity_terms(alpha);
  rep.mismatch_resolved = std::abs(t1.lhs_cd2 - t1.rhs_p1) / t1.scale;
  rep.mismatch_cd1 = std::abs(t1.lhs_cd1 - t1.rhs_p1) / t1.scale;
  rep.mismatch_p2 = std::abs(t1.lhs_cd2 - t1.rhs_p2) / t1.scale;
  rep.skew_re = t1.skew_re;

  auto t2 = identity_terms(2.0 * alpha);
  rep.quad_scaling_error =
      std::abs(t2.lhs_cd2 - 4.0 * t1.lhs_cd2) / std::max(1e-300, std::abs(t2.lhs_cd2));

  // Forced-mode dissipation balance.
  const Eigen::Vector2cd F(Complex(rng.normal(), rng.normal()),
                           Complex(rng.normal(), rng.normal()));
  const ResonanceMatrix M = assemble_M(k, zeta0, A, varpi, K);
  const Eigen::Vector2cd xi = M.M.fullPivLu().solve(F);
  const CVec hxi = xi[0] * h[0] + xi[1] * h[1];
  const Vec xr = hxi.real(), xim = hxi.imag();
  const double dsq = 0.5 * (xr.dot(forms.diffusion * xr) + xim.dot(forms.diffusion * xim));
  const double lhs = std::imag((xi.adjoint() * F)(0, 0));
  const double rhs_p1 = 2.0 * k * varpi / zeta0 * dsq;
  const double rhs_p2 = 2.0 * k * varpi / (zeta0 * zeta0) * dsq;
  const double dscale = std::abs(lhs) + std::abs(rhs_p1);
  rep.dissipation_mismatch_resolved = std::abs(lhs - rhs_p1) / dscale;
  rep.dissipation_mismatch_p2 = std::abs(lhs - rhs_p2) / dscale;
  return rep;
}

std::vector<ModeNormRow> mode_norm_table(ModeWorkspace& ws, int kmax) {
  std::vector<ModeNormRow> rows;
  for (int k = 1; k <= kmax; ++k) {
    double h1 = 0, h2 = 0;
    for (int m = 1; m <= 2; ++m) {
      const ModeSolution s = ws.solve_mode(k, m);
      h1 = std::max(h1, s.norm_h1);
      h2 = std::max(h2, s.norm_h2_broken);
    }
    rows.push_back({k, h1 / std::sqrt(k + 1.0), h2 / (k + 1.0)});
  }
  return rows;
}

}  // namespace oscilla
