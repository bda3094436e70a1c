#include "oscilla/hopf.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>

namespace oscilla {

namespace {

constexpr double kEpsTiny = 1e-14;

CVec complex_apply(const SpMat& A, const CVec& x) {
  Vec re = A * Vec(x.real());
  Vec im = A * Vec(x.imag());
  CVec out(re.size());
  for (Eigen::Index i = 0; i < re.size(); ++i) out[i] = Complex(re[i], im[i]);
  return out;
}

Complex bilinear_dot(const CVec& a, const CVec& b) { return a.cwiseProduct(b).sum(); }

std::string format_msg(const char* fmt, double a, double b) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), fmt, a, b);
  return std::string(buf);
}

}  // namespace

// ---------------------------------------------------------------------------
// AbstractSystem defaults

void AbstractSystem::nonlinear_dmu(const std::vector<Vec>& x, double, std::vector<Vec>& out) const {
  out.assign(x.size(), Vec::Zero(state_dim()));
}

CVec AbstractSystem::multiplier_for(const CVec&) const { return CVec(); }

// ---------------------------------------------------------------------------
// FsiSystem

FsiSystem::FsiSystem(const CoupledOperators& ops) : ops_(&ops) {
  const SpMat& C = ops.constraint();
  SpMat ctc = SpMat(C.transpose()) * C;
  ctc_.compute(ctc);
  if (ctc_.info() != Eigen::Success)
    throw solver_error("constraint normal equations not factorizable");
}

CVec FsiSystem::gram(const CVec& x) const { return complex_apply(ops_->gram(), x); }

Vec FsiSystem::dmu_linear(const Vec& x, double mu) const {
  return ops_->s011() * x + 2.0 * mu * (ops_->s2() * x);
}

CVec FsiSystem::dmu_linear(const CVec& x, double mu) const {
  CVec a = complex_apply(ops_->s011(), x);
  CVec b = complex_apply(ops_->s2(), x);
  return a + 2.0 * mu * b;
}

Vec FsiSystem::mean_to_state(const Vec& vm) const {
  if (ops_->fixed_body()) return vm;
  const int nf = ops_->n_free();
  Vec x = Vec::Zero(ops_->n());
  x.head(nf) = vm.head(nf);
  x.tail(2) = vm.tail(2);  // eta; mean rigid velocity is identically zero
  return x;
}

Vec FsiSystem::mean_coords_of(const Vec& state) const {
  if (ops_->fixed_body()) return state;
  const int nf = ops_->n_free();
  Vec vm(nf + 2);
  vm.head(nf) = state.head(nf);
  vm.tail(2) = state.tail(2);
  return vm;
}

Vec FsiSystem::state_rows_to_mean(const Vec& rows) const {
  return rows.head(mean_dim());
}

void FsiSystem::nonlinear(const std::vector<Vec>& x, double mu, std::vector<Vec>& out) const {
  out = ops_->nonlinear_form_batch(x, x);
  const double lam = ops_->lambda0() + mu;
  for (Vec& v : out) v *= lam;
}

void FsiSystem::nonlinear_jacobian(const std::vector<Vec>& x, const std::vector<Vec>& dx,
                                   double mu, std::vector<Vec>& out) const {
  std::vector<Vec> a = ops_->nonlinear_form_batch(x, dx);
  std::vector<Vec> b = ops_->nonlinear_form_batch(dx, x);
  const double lam = ops_->lambda0() + mu;
  out.resize(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = lam * (a[j] + b[j]);
}

void FsiSystem::nonlinear_dmu(const std::vector<Vec>& x, double, std::vector<Vec>& out) const {
  out = ops_->nonlinear_form_batch(x, x);
}

CVec FsiSystem::multiplier_for(const CVec& residual_rows) const {
  const SpMat& C = ops_->constraint();
  Vec rr = -(C.transpose() * Vec(residual_rows.real()));
  Vec ri = -(C.transpose() * Vec(residual_rows.imag()));
  Vec qr = ctc_.solve(rr);
  Vec qi = ctc_.solve(ri);
  CVec q(qr.size());
  for (Eigen::Index i = 0; i < qr.size(); ++i) q[i] = Complex(qr[i], qi[i]);
  return q;
}

// ---------------------------------------------------------------------------
// Oscillatory bases

Vec OscBasis::v1_at(double tau) const {
  return std::cos(tau) * Vec(v0.real()) + std::sin(tau) * Vec(v0.imag());
}
Vec OscBasis::v2_at(double tau) const {
  return std::sin(tau) * Vec(v0.real()) - std::cos(tau) * Vec(v0.imag());
}
Vec OscBasis::v1_tau_at(double tau) const {
  return -std::sin(tau) * Vec(v0.real()) + std::cos(tau) * Vec(v0.imag());
}
Vec OscBasis::adj1_at(double tau) const {
  return std::cos(tau) * Vec(y0.real()) - std::sin(tau) * Vec(y0.imag());
}
Vec OscBasis::adj2_at(double tau) const {
  return std::sin(tau) * Vec(y0.real()) + std::cos(tau) * Vec(y0.imag());
}

OscBasis build_bases(const AbstractSystem& sys, const CVec& v0_in, const CVec& y0_in,
                     double zeta0, double lambda0) {
  OscBasis basis;
  basis.zeta0 = zeta0;
  basis.lambda0 = lambda0;
  CVec v = v0_in;
  CVec y = y0_in;

  const double vnorm = std::sqrt(std::real(bilinear_dot(v.conjugate(), sys.gram(v))));
  if (!(vnorm > 0)) throw solver_error("null-mode has zero Gram norm");
  v /= vnorm;
  Eigen::Index imax = 0;
  v.cwiseAbs().maxCoeff(&imax);
  Complex phase = v[imax] / std::abs(v[imax]);
  v /= phase;

  const double ynorm = std::sqrt(std::real(bilinear_dot(y.conjugate(), sys.gram(y))));
  Complex pairing = bilinear_dot(y, sys.gram(v));
  if (std::abs(pairing) < 1e-13 * std::max(1.0, ynorm))
    throw solver_error("defective crossing pair: duality pairing y^T G v vanishes");
  y /= (M_PI * pairing);  // y^T G v = 1/pi

  basis.v0 = v;
  basis.y0 = y;

  const auto errs = biorthogonality_errors(sys, basis);
  for (double e : errs)
    if (!(e < 1e-8))
      throw solver_error(format_msg(
          "oscillatory basis duality relations violated (err %.3e; pairing %.3e)", e,
          std::abs(pairing)));
  return basis;
}

OscBasis build_bases(const AbstractSystem& sys, const CrossingResult& crossing) {
  return build_bases(sys, crossing.v0, crossing.v0_adj, crossing.zeta0, crossing.lambda_c);
}

std::array<double, 6> biorthogonality_errors(const AbstractSystem& sys,
                                             const OscBasis& basis, int n_quad) {
  // Periodic trapezoid rule: exact for the trigonometric polynomials below.
  double i11 = 0, i22 = 0, i21 = 0, i12 = 0, d1 = 0, d2 = 0;
  const double h = 2.0 * M_PI / n_quad;
  for (int j = 0; j < n_quad; ++j) {
    const double tau = h * j;
    const Vec ga1 = sys.gram(basis.adj1_at(tau));
    const Vec ga2 = sys.gram(basis.adj2_at(tau));
    const Vec v1 = basis.v1_at(tau);
    const Vec v2 = basis.v2_at(tau);
    const Vec v1t = basis.v1_tau_at(tau);
    i11 += v1.dot(ga1);
    i22 += v2.dot(ga2);
    i21 += v2.dot(ga1);
    i12 += v1.dot(ga2);
    d1 += v1t.dot(ga1);
    d2 += v1t.dot(ga2);
  }
  i11 *= h; i22 *= h; i21 *= h; i12 *= h; d1 *= h; d2 *= h;
  return {std::abs(i11 - 1.0), std::abs(i22 - 1.0), std::abs(i21),
          std::abs(i12),       std::abs(d1),        std::abs(d2 + 1.0)};
}

GuardReport necessary_guard(const std::vector<Complex>& spectrum, double tol, double im_min) {
  GuardReport rep;
  rep.min_abs_re = std::numeric_limits<double>::infinity();
  for (const Complex& nu : spectrum) {
    if (std::abs(nu.imag()) <= im_min) continue;
    if (std::abs(nu.real()) < rep.min_abs_re) {
      rep.min_abs_re = std::abs(nu.real());
      rep.zeta_at_min = std::abs(nu.imag());
    }
  }
  if (!std::isfinite(rep.min_abs_re)) {
    rep.pass = false;
    rep.message = "guard failed: no oscillatory eigenvalues in the computed spectrum";
    return rep;
  }
  rep.pass = rep.min_abs_re < tol;
  if (rep.pass) {
    rep.message = format_msg(
        "necessary condition met: |Re nu| = %.3e at frequency %.6g; "
        "this is necessary but not sufficient for a time-periodic branch",
        rep.min_abs_re, rep.zeta_at_min);
  } else {
    rep.message = format_msg(
        "guard failed: no purely-imaginary eigenvalue within %.3e "
        "(closest oscillatory mode has |Re nu| = %.3e)",
        tol, rep.min_abs_re);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Restarted right-preconditioned GMRES (matrix-free)

namespace {

struct GmresOut {
  int iters = 0;
  double rel_res = 1.0;
  bool converged = false;
};

GmresOut gmres(const std::function<Vec(const Vec&)>& apply_a,
               const std::function<Vec(const Vec&)>& apply_m, const Vec& b, Vec& x,
               int restart, int max_iter, double tol) {
  GmresOut out;
  const Eigen::Index n = b.size();
  x = Vec::Zero(n);
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    out.converged = true;
    out.rel_res = 0.0;
    return out;
  }
  Vec r = b;
  double beta = bnorm;
  double beta_prev = std::numeric_limits<double>::infinity();
  while (out.iters < max_iter) {
    const int m = restart;
    std::vector<Vec> V;
    V.reserve(m + 1);
    V.push_back(r / beta);
    Mat H = Mat::Zero(m + 1, m);
    std::vector<double> cs(m, 1.0), sn(m, 0.0);
    Vec g = Vec::Zero(m + 1);
    g[0] = beta;
    int j = 0;
    while (j < m && out.iters < max_iter) {
      Vec w = apply_a(apply_m(V[j]));
      ++out.iters;
      for (int i = 0; i <= j; ++i) {
        H(i, j) = w.dot(V[i]);
        w -= H(i, j) * V[i];
      }
      for (int i = 0; i <= j; ++i) {  // one re-orthogonalization pass
        const double h2 = w.dot(V[i]);
        H(i, j) += h2;
        w -= h2 * V[i];
      }
      const double hnext = w.norm();
      H(j + 1, j) = hnext;
      for (int i = 0; i < j; ++i) {
        const double t = cs[i] * H(i, j) + sn[i] * H(i + 1, j);
        H(i + 1, j) = -sn[i] * H(i, j) + cs[i] * H(i + 1, j);
        H(i, j) = t;
      }
      const double denom = std::hypot(H(j, j), H(j + 1, j));
      if (denom == 0.0) { ++j; break; }
      cs[j] = H(j, j) / denom;
      sn[j] = H(j + 1, j) / denom;
      H(j, j) = denom;
      H(j + 1, j) = 0.0;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];
      ++j;
      if (std::abs(g[j]) / bnorm < tol || hnext < 1e-300) break;
      V.push_back(w / hnext);
    }
    if (j > 0) {
      Vec y = H.topLeftCorner(j, j).triangularView<Eigen::Upper>().solve(Vec(g.head(j)));
      Vec z = Vec::Zero(n);
      for (int i = 0; i < j; ++i) z += y[i] * V[i];
      x += apply_m(z);
    }
    r = b - apply_a(x);
    beta = r.norm();
    out.rel_res = beta / bnorm;
    if (out.rel_res < tol) {
      out.converged = true;
      return out;
    }
    if (j == 0 || beta > 0.999 * beta_prev) return out;  // stagnation
    beta_prev = beta;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Harmonic-balance solver: scaled unknowns
//   U = [vm (mean coords + multiplier) | per k = 1..K: Re z_k, Im z_k | zeta, mu]
// with z_k = [w_k; q_k] in the e^{-ik tau} convention internally.

class HbSolver {
 public:
  HbSolver(const AbstractSystem& sys, const OscBasis& basis, const BranchOptions& opts)
      : sys_(sys), basis_(basis), opts_(opts) {
    if (opts.kmax < 1) throw validation_error("harmonic truncation kmax must be >= 1");
    n_ = sys.state_dim();
    np_ = sys.multiplier_dim();
    nm_ = sys.mean_dim();
    m_ = n_ + np_;
    K_ = opts.kmax;
    Nt_ = (sys.nonlinear_degree() <= 2) ? 4 * K_ : 4 * K_ + 2;
    mean_sz_ = nm_ + np_;
    dim_ = mean_sz_ + K_ * 2 * m_ + 2;
    ck_.resize(K_ + 1, Nt_);
    sk_.resize(K_ + 1, Nt_);
    for (int k = 0; k <= K_; ++k)
      for (int j = 0; j < Nt_; ++j) {
        const double a = 2.0 * M_PI * k * j / Nt_;
        ck_(k, j) = std::cos(a);
        sk_(k, j) = std::sin(a);
      }
    gy0_ = sys.gram(basis.y0);
  }

  PeriodicBranchPoint solve(double eps, const PeriodicBranchPoint* seed);
  double first_correction_ratio(double eps);

 private:
  struct State {
    Vec vm;
    std::vector<CVec> z;  // k = 1..K, size m
    double zeta = 0.0, mu = 0.0;
  };

  int mode_off(int k) const { return mean_sz_ + (k - 1) * 2 * m_; }
  int scal_off() const { return mean_sz_ + K_ * 2 * m_; }

  State unpack(const Vec& U) const {
    State s;
    s.vm = U.head(mean_sz_);
    s.z.resize(K_);
    for (int k = 1; k <= K_; ++k) {
      const int off = mode_off(k);
      s.z[k - 1].resize(m_);
      for (int i = 0; i < m_; ++i)
        s.z[k - 1][i] = Complex(U[off + i], U[off + m_ + i]);
    }
    s.zeta = U[scal_off()];
    s.mu = U[scal_off() + 1];
    return s;
  }

  Vec pack(const State& s) const {
    Vec U(dim_);
    U.head(mean_sz_) = s.vm;
    for (int k = 1; k <= K_; ++k) {
      const int off = mode_off(k);
      for (int i = 0; i < m_; ++i) {
        U[off + i] = s.z[k - 1][i].real();
        U[off + m_ + i] = s.z[k - 1][i].imag();
      }
    }
    U[scal_off()] = s.zeta;
    U[scal_off() + 1] = s.mu;
    return U;
  }

  State default_seed(double) const {
    State s;
    s.vm = Vec::Zero(mean_sz_);
    s.z.assign(K_, CVec::Zero(m_));
    CVec w1 = 0.5 * basis_.v0;
    s.z[0].head(n_) = w1;
    if (np_ > 0) {
      SpCMat a1 = sys_.osc_matrix(1, basis_.zeta0, 0.0);
      CVec zfull = CVec::Zero(m_);
      zfull.head(n_) = w1;
      CVec r = (a1 * zfull).head(n_);
      s.z[0].tail(np_) = sys_.multiplier_for(r);
    }
    s.zeta = basis_.zeta0;
    s.mu = 0.0;
    return s;
  }

  State seed_from_point(const PeriodicBranchPoint& pt) const {
    State s;
    const double e = pt.eps;
    s.vm.resize(mean_sz_);
    s.vm.head(nm_) = sys_.mean_coords_of(pt.v) / e;
    if (np_ > 0) s.vm.tail(np_) = pt.p_mean / e;
    s.z.assign(K_, CVec::Zero(m_));
    const int kcopy = std::min<int>(K_, static_cast<int>(pt.w_hat.size()));
    for (int k = 1; k <= kcopy; ++k) {
      s.z[k - 1].head(n_) = pt.w_hat[k - 1].conjugate() / e;
      if (np_ > 0) s.z[k - 1].tail(np_) = pt.q_hat[k - 1].conjugate() / e;
    }
    s.zeta = pt.zeta;
    s.mu = pt.mu;
    return s;
  }

  // Assembled linear blocks at the current (zeta, mu); rebuilt per Newton step.
  void assemble_blocks(double zeta, double mu) {
    am_ = sys_.mean_matrix(mu);
    ak_.resize(K_);
    for (int k = 1; k <= K_; ++k) ak_[k - 1] = sys_.osc_matrix(k, zeta, mu);
    blocks_zeta_ = zeta;
    blocks_mu_ = mu;
  }

  std::vector<Vec> samples(const State& s, double eps) const {
    Vec xm = sys_.mean_to_state(Vec(s.vm.head(nm_)));
    std::vector<Vec> xs(Nt_);
    for (int j = 0; j < Nt_; ++j) {
      Vec x = xm;
      for (int k = 1; k <= K_; ++k) {
        const CVec& w = s.z[k - 1];
        x.noalias() += 2.0 * ck_(k, j) * Vec(w.head(n_).real());
        x.noalias() += 2.0 * sk_(k, j) * Vec(w.head(n_).imag());
      }
      xs[j] = eps * x;
    }
    return xs;
  }

  // Fourier coefficient k of a sampled tested field, e^{-ik tau} convention.
  CVec coeff(const std::vector<Vec>& f, int k) const {
    Vec re = Vec::Zero(n_), im = Vec::Zero(n_);
    for (int j = 0; j < Nt_; ++j) {
      re.noalias() += ck_(k, j) * f[j];
      im.noalias() += sk_(k, j) * f[j];
    }
    CVec out(n_);
    for (int i = 0; i < n_; ++i) out[i] = Complex(re[i] / Nt_, im[i] / Nt_);
    return out;
  }

  Vec mean_coeff(const std::vector<Vec>& f) const {
    Vec out = Vec::Zero(n_);
    for (const Vec& v : f) out += v;
    return out / Nt_;
  }

  // Residual of the scaled system; refreshes the sample cache.
  Vec residual(const State& s, double eps) {
    Vec F = Vec::Zero(dim_);
    F.head(mean_sz_) = am_ * s.vm;
    std::vector<CVec> rk(K_);
    for (int k = 1; k <= K_; ++k) rk[k - 1] = ak_[k - 1] * s.z[k - 1];
    if (std::abs(eps) > kEpsTiny) {
      xs_ = samples(s, eps);
      sys_.nonlinear(xs_, s.mu, ns_);
      Vec n0 = mean_coeff(ns_);
      F.head(mean_sz_).head(nm_) -= sys_.state_rows_to_mean(n0) / eps;
      for (int k = 1; k <= K_; ++k) rk[k - 1].head(n_) -= coeff(ns_, k) / eps;
      have_samples_ = true;
    } else {
      have_samples_ = false;
    }
    for (int k = 1; k <= K_; ++k) {
      const int off = mode_off(k);
      F.segment(off, m_) = rk[k - 1].real();
      F.segment(off + m_, m_) = rk[k - 1].imag();
    }
    const Complex side = 2.0 * M_PI * bilinear_dot(gy0_, CVec(s.z[0].head(n_))) - 1.0;
    F[scal_off()] = side.real();
    F[scal_off() + 1] = side.imag();
    return F;
  }

  // Scalar-direction columns of the Jacobian, frozen per Newton step.
  void refresh_columns(const State& s, double eps) {
    zeta_col_ = Vec::Zero(dim_);
    mu_col_ = Vec::Zero(dim_);
    for (int k = 1; k <= K_; ++k) {
      const CVec wk = s.z[k - 1].head(n_);
      const CVec gz = Complex(0.0, -double(k)) * sys_.gram(wk);
      const CVec dm = sys_.dmu_linear(wk, s.mu);
      const int off = mode_off(k);
      zeta_col_.segment(off, n_) = gz.real();
      zeta_col_.segment(off + m_, n_) = gz.imag();
      mu_col_.segment(off, n_) = dm.real();
      mu_col_.segment(off + m_, n_) = dm.imag();
    }
    Vec dmean = sys_.dmu_linear(sys_.mean_to_state(Vec(s.vm.head(nm_))), s.mu);
    mu_col_.head(nm_) = sys_.state_rows_to_mean(dmean);
    if (have_samples_) {
      std::vector<Vec> dn;
      sys_.nonlinear_dmu(xs_, s.mu, dn);
      mu_col_.head(nm_) -= sys_.state_rows_to_mean(mean_coeff(dn)) / eps;
      for (int k = 1; k <= K_; ++k) {
        const CVec c = coeff(dn, k) / eps;
        const int off = mode_off(k);
        mu_col_.segment(off, n_) -= c.real();
        mu_col_.segment(off + m_, n_) -= c.imag();
      }
    }
  }

  Vec jacobian_apply(const State& s, double /*eps*/, const Vec& dU) {
    const State d = unpack(dU);
    Vec J = Vec::Zero(dim_);
    J.head(mean_sz_) = am_ * d.vm;
    std::vector<CVec> jk(K_);
    for (int k = 1; k <= K_; ++k) jk[k - 1] = ak_[k - 1] * d.z[k - 1];
    if (have_samples_) {
      std::vector<Vec> dxs(Nt_);
      Vec dxm = sys_.mean_to_state(Vec(d.vm.head(nm_)));
      for (int j = 0; j < Nt_; ++j) {
        Vec x = dxm;
        for (int k = 1; k <= K_; ++k) {
          const CVec& w = d.z[k - 1];
          x.noalias() += 2.0 * ck_(k, j) * Vec(w.head(n_).real());
          x.noalias() += 2.0 * sk_(k, j) * Vec(w.head(n_).imag());
        }
        dxs[j] = x;
      }
      std::vector<Vec> dn;
      sys_.nonlinear_jacobian(xs_, dxs, s.mu, dn);
      J.head(mean_sz_).head(nm_) -= sys_.state_rows_to_mean(mean_coeff(dn));
      for (int k = 1; k <= K_; ++k) jk[k - 1].head(n_) -= coeff(dn, k);
    }
    for (int k = 1; k <= K_; ++k) {
      const int off = mode_off(k);
      J.segment(off, m_) = jk[k - 1].real();
      J.segment(off + m_, m_) = jk[k - 1].imag();
    }
    const double dzeta = dU[scal_off()];
    const double dmu = dU[scal_off() + 1];
    J += dzeta * zeta_col_ + dmu * mu_col_;
    const Complex dside = 2.0 * M_PI * bilinear_dot(gy0_, CVec(d.z[0].head(n_)));
    J[scal_off()] = dside.real();
    J[scal_off() + 1] = dside.imag();
    return J;
  }

  // Block preconditioner: zero-frequency LU, bordered k = 1 LU (side rows +
  // zeta/mu columns), per-mode LU for k >= 2.
  void build_preconditioner(double zeta, double mu) {
    mean_lu_ = std::make_unique<Eigen::SparseLU<SpMat>>();
    mean_lu_->compute(am_);
    if (mean_lu_->info() != Eigen::Success)
      throw solver_error("zero-frequency block factorization failed");

    mode_lu_.clear();
    mode_lu_.resize(K_);
    for (int k = 2; k <= K_; ++k) {
      mode_lu_[k - 1] = std::make_unique<Eigen::SparseLU<SpCMat>>();
      mode_lu_[k - 1]->compute(ak_[k - 1]);
      if (mode_lu_[k - 1]->info() != Eigen::Success)
        throw solver_error("oscillatory block factorization failed");
    }

    // Bordered k = 1 system in real form: unknowns [Re z1; Im z1; zeta; mu].
    const SpCMat& a1 = ak_[0];
    std::vector<Triplet> trip;
    trip.reserve(4 * a1.nonZeros() + 8 * n_ + 8);
    for (int c = 0; c < a1.outerSize(); ++c)
      for (SpCMat::InnerIterator it(a1, c); it; ++it) {
        const int r = static_cast<int>(it.row());
        const double re = it.value().real(), im = it.value().imag();
        if (re != 0.0) {
          trip.emplace_back(r, c, re);
          trip.emplace_back(r + m_, c + m_, re);
        }
        if (im != 0.0) {
          trip.emplace_back(r, c + m_, -im);
          trip.emplace_back(r + m_, c, im);
        }
      }
    const CVec w1s = 0.5 * basis_.v0;
    const CVec col_z = Complex(0.0, -1.0) * sys_.gram(w1s);
    const CVec col_m = sys_.dmu_linear(w1s, mu);
    for (int i = 0; i < n_; ++i) {
      if (col_z[i] != 0.0) {
        trip.emplace_back(i, 2 * m_, col_z[i].real());
        trip.emplace_back(i + m_, 2 * m_, col_z[i].imag());
      }
      if (col_m[i] != 0.0) {
        trip.emplace_back(i, 2 * m_ + 1, col_m[i].real());
        trip.emplace_back(i + m_, 2 * m_ + 1, col_m[i].imag());
      }
      const Complex row = 2.0 * M_PI * gy0_[i];
      trip.emplace_back(2 * m_, i, row.real());
      trip.emplace_back(2 * m_, i + m_, -row.imag());
      trip.emplace_back(2 * m_ + 1, i, row.imag());
      trip.emplace_back(2 * m_ + 1, i + m_, row.real());
    }
    SpMat bord(2 * m_ + 2, 2 * m_ + 2);
    bord.setFromTriplets(trip.begin(), trip.end());
    bord_lu_ = std::make_unique<Eigen::SparseLU<SpMat>>();
    bord_lu_->compute(bord);
    if (bord_lu_->info() != Eigen::Success)
      throw solver_error("bordered system singular (check Re nu'(0) != 0)");

    fact_zeta_ = zeta;
    fact_mu_ = mu;
    have_fact_ = true;
  }

  Vec precond_apply(const Vec& r) const {
    Vec z = Vec::Zero(dim_);
    z.head(mean_sz_) = mean_lu_->solve(Vec(r.head(mean_sz_)));
    {
      Vec rhs(2 * m_ + 2);
      rhs.head(2 * m_) = r.segment(mode_off(1), 2 * m_);
      rhs[2 * m_] = r[scal_off()];
      rhs[2 * m_ + 1] = r[scal_off() + 1];
      Vec sol = bord_lu_->solve(rhs);
      z.segment(mode_off(1), 2 * m_) = sol.head(2 * m_);
      z[scal_off()] = sol[2 * m_];
      z[scal_off() + 1] = sol[2 * m_ + 1];
    }
    for (int k = 2; k <= K_; ++k) {
      const int off = mode_off(k);
      CVec rc(m_);
      for (int i = 0; i < m_; ++i) rc[i] = Complex(r[off + i], r[off + m_ + i]);
      CVec sc = mode_lu_[k - 1]->solve(rc);
      z.segment(off, m_) = sc.real();
      z.segment(off + m_, m_) = sc.imag();
    }
    return z;
  }

  const AbstractSystem& sys_;
  const OscBasis& basis_;
  BranchOptions opts_;
  int n_ = 0, np_ = 0, nm_ = 0, m_ = 0, K_ = 0, Nt_ = 0, mean_sz_ = 0, dim_ = 0;
  Mat ck_, sk_;
  CVec gy0_;

  SpMat am_;
  std::vector<SpCMat> ak_;
  double blocks_zeta_ = 0.0, blocks_mu_ = 0.0;

  std::vector<Vec> xs_;
  std::vector<Vec> ns_;
  bool have_samples_ = false;
  Vec zeta_col_, mu_col_;

  std::unique_ptr<Eigen::SparseLU<SpMat>> mean_lu_, bord_lu_;
  std::vector<std::unique_ptr<Eigen::SparseLU<SpCMat>>> mode_lu_;
  double fact_zeta_ = 0.0, fact_mu_ = 0.0;
  bool have_fact_ = false;

 public:
  PeriodicBranchPoint finalize(const State& s, double eps, double rnorm, int newton,
                               int gmres_total) const {
    PeriodicBranchPoint pt;
    pt.eps = eps;
    pt.mu = s.mu;
    pt.zeta = s.zeta;
    pt.v = eps * sys_.mean_to_state(Vec(s.vm.head(nm_)));
    pt.p_mean = eps * Vec(s.vm.tail(np_));
    pt.w_hat.resize(K_);
    pt.q_hat.resize(K_);
    double l2sq = 0.0;
    for (int k = 1; k <= K_; ++k) {
      CVec w = eps * CVec(s.z[k - 1].head(n_));
      CVec q = eps * CVec(s.z[k - 1].tail(np_));
      const CVec gw = sys_.gram(w);
      l2sq += 2.0 * std::real(bilinear_dot(w.conjugate(), gw));
      pt.w_hat[k - 1] = w.conjugate();  // store in the e^{+ik tau} convention
      pt.q_hat[k - 1] = q.conjugate();
    }
    pt.amplitude = std::real(2.0 * M_PI * bilinear_dot(gy0_, CVec(eps * s.z[0].head(n_))));
    pt.amplitude_l2 = std::sqrt(l2sq);
    pt.residual = rnorm;
    pt.newton_iters = newton;
    pt.gmres_iters = gmres_total;
    return pt;
  }
};

PeriodicBranchPoint HbSolver::solve(double eps, const PeriodicBranchPoint* seed) {
  State s = (seed && std::abs(seed->eps) > kEpsTiny) ? seed_from_point(*seed)
                                                     : default_seed(eps);
  int gmres_total = 0;
  double rnorm = 0.0;
  for (int it = 0; it <= opts_.max_newton; ++it) {
    assemble_blocks(s.zeta, s.mu);
    Vec F = residual(s, eps);
    rnorm = F.norm();
    if (opts_.verbose)
      std::printf("  [hb] eps=%.4g newton %d residual %.3e (zeta %.8g mu %.4g)\n", eps,
                  it, rnorm, s.zeta, s.mu);
    if (rnorm < opts_.tol) return finalize(s, eps, rnorm, it, gmres_total);
    if (it == opts_.max_newton) break;

    refresh_columns(s, eps);
    if (!have_fact_ || std::abs(s.zeta - fact_zeta_) > 5e-3 ||
        std::abs(s.mu - fact_mu_) > 5e-3)
      build_preconditioner(s.zeta, s.mu);

    const double inner_tol = std::max(1e-10, std::min(1e-2, 1e-3 * rnorm));
    Vec dU;
    const Vec rhs = -F;
    auto aop = [&](const Vec& x) { return jacobian_apply(s, eps, x); };
    auto mop = [&](const Vec& x) { return precond_apply(x); };
    GmresOut g = gmres(aop, mop, rhs, dU, opts_.gmres_restart, opts_.gmres_max_iter,
                       inner_tol);
    gmres_total += g.iters;
    if (!g.converged && g.rel_res > 0.5)
      throw solver_error(format_msg(
          "harmonic-balance linear solve stagnated (gmres rel res %.3e, newton res %.3e)",
          g.rel_res, rnorm));

    // Backtracking safeguard; plain steps suffice near the branch.
    Vec Unow = pack(s);
    double step = 1.0;
    for (int half = 0; half < 4; ++half) {
      State trial = unpack(Vec(Unow + step * dU));
      assemble_blocks(trial.zeta, trial.mu);
      const double rtrial = residual(trial, eps).norm();
      if (rtrial < rnorm || half == 3) {
        s = trial;
        break;
      }
      step *= 0.5;
    }
  }
  throw solver_error(format_msg(
      "harmonic balance did not converge (eps %.4g): last residual %.3e", eps, rnorm));
}

double HbSolver::first_correction_ratio(double eps) {
  State s = default_seed(eps);
  assemble_blocks(s.zeta, s.mu);
  Vec F = residual(s, eps);
  refresh_columns(s, eps);
  build_preconditioner(s.zeta, s.mu);
  Vec dU;
  auto aop = [&](const Vec& x) { return jacobian_apply(s, eps, x); };
  auto mop = [&](const Vec& x) { return precond_apply(x); };
  gmres(aop, mop, Vec(-F), dU, opts_.gmres_restart, opts_.gmres_max_iter, 1e-8);
  const double base = pack(s).norm();
  return dU.norm() / std::max(base, 1e-30);
}

}  // namespace

// ---------------------------------------------------------------------------
// Public engine entry points

PeriodicBranchPoint newton_branch_point(const AbstractSystem& sys, const OscBasis& basis,
                                        double eps, const PeriodicBranchPoint* seed,
                                        const BranchOptions& opts) {
  HbSolver solver(sys, basis, opts);
  return solver.solve(eps, seed);
}

BranchResult continue_branch(const AbstractSystem& sys, const OscBasis& basis,
                             const std::vector<double>& eps_grid,
                             const BranchOptions& opts) {
  BranchResult result;
  std::vector<double> pos, neg;
  bool has_zero = false;
  for (double e : eps_grid) {
    if (e > kEpsTiny)
      pos.push_back(e);
    else if (e < -kEpsTiny)
      neg.push_back(e);
    else
      has_zero = true;
  }
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end(), std::greater<double>());

  HbSolver solver(sys, basis, opts);
  if (has_zero) result.points.push_back(solver.solve(0.0, nullptr));

  auto run_side = [&](const std::vector<double>& side) {
    const PeriodicBranchPoint* prev = nullptr;
    PeriodicBranchPoint last;
    for (double e : side) {
      try {
        last = solver.solve(e, prev);
      } catch (const solver_error& err) {
        result.warnings.push_back(
            format_msg("branch truncated at eps = %.6g (%.0f points kept): ", e,
                       double(result.points.size())) +
            err.what());
        return;
      }
      result.points.push_back(last);
      prev = &result.points.back();
    }
  };
  run_side(pos);
  run_side(neg);
  std::sort(result.points.begin(), result.points.end(),
            [](const PeriodicBranchPoint& a, const PeriodicBranchPoint& b) {
              return a.eps < b.eps;
            });
  return result;
}

double suggest_epsilon_max(const AbstractSystem& sys, const OscBasis& basis, double eps0,
                           const BranchOptions& opts) {
  HbSolver solver(sys, basis, opts);
  double e = eps0;
  for (int i = 0; i < 8; ++i) {
    if (solver.first_correction_ratio(e) <= 0.10) return e;
    e *= 0.5;
  }
  throw solver_error("no amplitude found with Newton correction below 10%");
}

std::vector<double> make_eps_grid(double eps_max, int n_points) {
  if (!(eps_max > 0) || n_points < 2)
    throw validation_error("epsilon grid needs eps_max > 0 and >= 2 points");
  std::vector<double> grid(n_points);
  for (int i = 0; i < n_points; ++i)
    grid[i] = -eps_max + 2.0 * eps_max * i / (n_points - 1);
  return grid;
}

CriticalityFit classify_criticality(const std::vector<PeriodicBranchPoint>& branch) {
  if (branch.size() < 4)
    throw validation_error("criticality classification needs >= 4 branch points");
  const int N = static_cast<int>(branch.size());
  Mat X(N, 2);
  Vec mu(N), ze(N);
  for (int i = 0; i < N; ++i) {
    const double e2 = branch[i].eps * branch[i].eps;
    X(i, 0) = e2;
    X(i, 1) = e2 * e2;
    mu[i] = branch[i].mu;
    ze[i] = branch[i].zeta;
  }
  CriticalityFit fit;
  Eigen::ColPivHouseholderQR<Mat> qr(X);
  Vec beta = qr.solve(mu);
  fit.mu1 = beta[0];
  fit.mu2 = beta[1];
  fit.fit_residual = (X * beta - mu).norm() / std::sqrt(double(N));

  Mat Xz(N, 2);
  Xz.col(0) = Vec::Ones(N);
  Xz.col(1) = X.col(0);
  Vec bz = Eigen::ColPivHouseholderQR<Mat>(Xz).solve(ze);
  fit.zeta0_fit = bz[0];
  fit.zeta2 = bz[1];

  // Noise floor from the fit covariance: sigma(mu1) with the rms residual as
  // the per-point noise estimate.
  Mat xtx_inv = (X.transpose() * X).inverse();
  const double sigma1 = fit.fit_residual * std::sqrt(std::max(xtx_inv(0, 0), 0.0));
  fit.noise_floor = std::max(1e-12, 3.0 * sigma1);
  if (std::abs(fit.mu1) <= fit.noise_floor)
    fit.classification = "degenerate";
  else
    fit.classification = fit.mu1 > 0 ? "supercritical" : "subcritical";
  return fit;
}

std::pair<Vec, std::vector<CVec>> evaluate_N(const AbstractSystem& sys, const Vec& v,
                                             const std::vector<CVec>& w_hat, double mu) {
  const int n = sys.state_dim();
  const int K = static_cast<int>(w_hat.size());
  const int deg = sys.nonlinear_degree();
  const int kout = std::max(1, deg * std::max(K, 1));
  const int Nt = 2 * kout + 2;
  std::vector<Vec> xs(Nt);
  for (int j = 0; j < Nt; ++j) {
    const double tau = 2.0 * M_PI * j / Nt;
    Vec x = v;
    for (int k = 1; k <= K; ++k) {
      x.noalias() += 2.0 * std::cos(k * tau) * Vec(w_hat[k - 1].real());
      x.noalias() -= 2.0 * std::sin(k * tau) * Vec(w_hat[k - 1].imag());
    }
    xs[j] = x;
  }
  std::vector<Vec> ns;
  sys.nonlinear(xs, mu, ns);
  Vec n1 = Vec::Zero(n);
  for (const Vec& f : ns) n1 += f;
  n1 /= Nt;
  std::vector<CVec> n2(kout);
  for (int k = 1; k <= kout; ++k) {
    Vec re = Vec::Zero(n), im = Vec::Zero(n);
    for (int j = 0; j < Nt; ++j) {
      const double a = 2.0 * M_PI * k * j / Nt;
      re.noalias() += std::cos(a) * ns[j];
      im.noalias() -= std::sin(a) * ns[j];
    }
    CVec c(n);
    for (int i = 0; i < n; ++i) c[i] = Complex(re[i] / Nt, im[i] / Nt);
    n2[k - 1] = c;
  }
  return {n1, n2};
}

Complex branch_amplitude(const AbstractSystem& sys, const OscBasis& basis,
                         const PeriodicBranchPoint& pt) {
  if (pt.w_hat.empty()) return 0.0;
  const CVec gy = sys.gram(basis.y0);
  return 2.0 * M_PI * bilinear_dot(gy, CVec(pt.w_hat[0].conjugate()));
}

PeriodicBranchPoint phase_shift(const PeriodicBranchPoint& pt, double theta) {
  PeriodicBranchPoint out = pt;
  for (std::size_t k = 0; k < pt.w_hat.size(); ++k) {
    const Complex ph = std::exp(Complex(0.0, (double(k) + 1.0) * theta));
    out.w_hat[k] = ph * pt.w_hat[k];
    if (k < pt.q_hat.size()) out.q_hat[k] = ph * pt.q_hat[k];
  }
  return out;
}

Vec branch_state_at(const PeriodicBranchPoint& pt, double tau) {
  Vec x = pt.v;
  for (std::size_t k = 0; k < pt.w_hat.size(); ++k) {
    const double a = (double(k) + 1.0) * tau;
    x.noalias() += 2.0 * std::cos(a) * Vec(pt.w_hat[k].real());
    x.noalias() -= 2.0 * std::sin(a) * Vec(pt.w_hat[k].imag());
  }
  return x;
}

}  // namespace oscilla
