#include "oscilla/spectral.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace oscilla {

namespace {

CVec apply_gram(const CoupledOperators& ops, const CVec& x) {
  const Vec re = ops.gram() * x.real();
  const Vec im = ops.gram() * x.imag();
  CVec y(x.size());
  y.real() = re;
  y.imag() = im;
  return y;
}

CVec apply_real(const SpMat& M, const CVec& x) {
  CVec y(M.rows());
  y.real() = M * x.real();
  y.imag() = M * x.imag();
  return y;
}

}  // namespace

ShiftedSolver::ShiftedSolver(const CoupledOperators& ops, Complex s, double mu, bool adjoint)
    : ops_(&ops), s_(s) {
  SpCMat A = ops.shifted_aug(s, mu);
  if (adjoint) A = SpCMat(A.transpose());
  lu_ = std::make_unique<Eigen::SparseLU<SpCMat>>();
  lu_->compute(A);
  if (lu_->info() != Eigen::Success)
    throw solver_error("spectral: shifted factorization failed");
}

CVec ShiftedSolver::apply(const CVec& b) const { return solve_state(apply_gram(*ops_, b)); }

CVec ShiftedSolver::solve_state(const CVec& rhs_state) const {
  CVec rhs = CVec::Zero(ops_->n() + ops_->n_pressure());
  rhs.head(ops_->n()) = rhs_state;
  const CVec sol = lu_->solve(rhs);
  return sol.head(ops_->n());
}

namespace {

struct ArnoldiResult {
  std::vector<Complex> theta;     // Ritz values of the inverted operator
  std::vector<CVec> vec;
  std::vector<double> residual;   // Ritz residual relative to |theta|
};

ArnoldiResult arnoldi(const CoupledOperators& ops, const ShiftedSolver& solver,
                      const ArnoldiOptions& opts) {
  const int n = ops.n();
  const int m = std::min(opts.m, n);
  Rng rng(opts.seed);
  CVec b = rng.normal_cvec(n);
  // One application lands the start vector on the constraint manifold.
  CVec v = solver.apply(b);
  v /= ops.norm(v);

  std::vector<CVec> V;
  V.push_back(v);
  CMat H = CMat::Zero(m + 1, m);
  int mdone = m;
  for (int j = 0; j < m; ++j) {
    CVec w = solver.apply(V[j]);
    for (int pass = 0; pass < 2; ++pass)  // MGS with one re-orthogonalization
      for (int i = 0; i <= j; ++i) {
        const Complex h = ops.inner(V[i], w);
        w -= h * V[i];
        H(i, j) += h;
      }
    const double hn = ops.norm(w);
    H(j + 1, j) = hn;
    if (hn < 1e-13) {
      mdone = j + 1;
      break;
    }
    V.push_back(w / hn);
  }

  const CMat Hm = H.topLeftCorner(mdone, mdone);
  Eigen::ComplexEigenSolver<CMat> es(Hm);
  const double hlast = std::abs(H(mdone, mdone - 1));

  ArnoldiResult out;
  for (int k = 0; k < mdone; ++k) {
    const Complex th = es.eigenvalues()[k];
    if (std::abs(th) < 1e-14) continue;
    const Eigen::VectorXcd y = es.eigenvectors().col(k);
    const double res = hlast * std::abs(y[mdone - 1]) / std::abs(th);
    CVec x = CVec::Zero(ops.n());
    for (int i = 0; i < mdone; ++i) x += y[i] * V[i];
    x /= ops.norm(x);
    out.theta.push_back(th);
    out.vec.push_back(std::move(x));
    out.residual.push_back(res);
  }
  return out;
}

}  // namespace

std::vector<EigPair> eigs_near(const CoupledOperators& ops, Complex shift, int n_want,
                               double mu, const ArnoldiOptions& opts) {
  const ShiftedSolver solver(ops, shift, mu);
  ArnoldiResult ar = arnoldi(ops, solver, opts);
  std::vector<EigPair> pairs;
  for (size_t k = 0; k < ar.theta.size(); ++k) {
    if (ar.residual[k] > opts.tol) continue;
    EigPair p;
    p.nu = shift + 1.0 / ar.theta[k];
    p.vec = ar.vec[k];
    p.residual = ar.residual[k];
    pairs.push_back(std::move(p));
  }
  std::sort(pairs.begin(), pairs.end(), [&](const EigPair& a, const EigPair& b) {
    return std::abs(a.nu - shift) < std::abs(b.nu - shift);
  });
  if (static_cast<int>(pairs.size()) > n_want) pairs.resize(n_want);
  return pairs;
}

EigPair polish_eig(const CoupledOperators& ops, const EigPair& seed, double mu, int rounds) {
  EigPair p = seed;
  for (int r = 0; r < rounds; ++r) {
    // Keep the factorization honestly nonsingular with a tiny imaginary nudge.
    const Complex s = p.nu + Complex(0.0, 1e-9 * (1.0 + std::abs(p.nu)));
    const ShiftedSolver solver(ops, s, mu);
    CVec w = solver.apply(p.vec);
    const Complex theta = ops.inner(p.vec, w);
    p.nu = s + 1.0 / theta;
    p.vec = w / ops.norm(w);
  }
  p.residual = eig_residual(ops, p.nu, p.vec, mu);
  return p;
}

double eig_residual(const CoupledOperators& ops, const Complex& nu, const CVec& v,
                    double mu) {
  const SpMat L = ops.l2_at(mu);
  const CVec Lv = apply_real(L, v);
  const CVec Gv = apply_gram(ops, v);
  CVec r = Lv - nu * Gv;
  // Least-squares pressure: (C^T C) q = -C^T r.
  const SpMat& C = ops.constraint();
  const SpMat CtC = SpMat(C.transpose()) * C;
  Eigen::SimplicialLDLT<SpMat> ldlt(CtC);
  const Vec qr = ldlt.solve(-(C.transpose() * r.real()).eval());
  const Vec qi = ldlt.solve(-(C.transpose() * r.imag()).eval());
  CVec Cq(ops.n());
  Cq.real() = C * qr;
  Cq.imag() = C * qi;
  r += Cq;
  return r.norm() / (Lv.norm() + std::abs(nu) * Gv.norm());
}

std::vector<EigPair> eigs_near_axis(const CoupledOperators& ops, double zeta_max,
                                    int n_shifts, double mu, const ArnoldiOptions& opts) {
  std::vector<EigPair> all;
  for (int j = 0; j < n_shifts; ++j) {
    const double z = (n_shifts == 1) ? 0.0 : zeta_max * j / (n_shifts - 1.0);
    // Stay off the real axis a little so real eigenvalues are seen once.
    auto found = eigs_near(ops, Complex(0.0, z + 1e-3), 6, mu, opts);
    for (auto& p : found) {
      if (p.nu.imag() < -1e-8) continue;  // conjugate representative kept only
      bool dup = false;
      for (auto& q : all)
        if (std::abs(q.nu - p.nu) < 1e-6 * (1.0 + std::abs(p.nu))) {
          dup = true;
          if (p.residual < q.residual) q = p;
          break;
        }
      if (!dup) all.push_back(std::move(p));
    }
  }
  std::sort(all.begin(), all.end(),
            [](const EigPair& a, const EigPair& b) { return a.nu.imag() < b.nu.imag(); });
  return all;
}

std::vector<Complex> dense_spectrum_near(const CoupledOperators& ops, Complex shift,
                                         int n_want, double mu) {
  const int n = ops.n(), np = ops.n_pressure(), N = n + np;
  CMat Aaug = CMat::Zero(N, N);
  Aaug.topLeftCorner(n, n) = Mat(ops.l2_at(mu)).cast<Complex>() - shift * Mat(ops.gram()).cast<Complex>();
  Aaug.topRightCorner(n, np) = Mat(ops.constraint()).cast<Complex>();
  Aaug.bottomLeftCorner(np, n) = Mat(ops.constraint()).transpose().cast<Complex>();

  Eigen::PartialPivLU<CMat> lu(Aaug);
  CMat rhs = CMat::Zero(N, n);
  rhs.topRows(n) = Mat(ops.gram()).cast<Complex>();
  const CMat X = lu.solve(rhs);
  const CMat T = X.topRows(n);

  Eigen::ComplexEigenSolver<CMat> es(T, /*computeEigenvectors=*/false);
  std::vector<Complex> nus;
  for (int k = 0; k < n; ++k) {
    const Complex th = es.eigenvalues()[k];
    // Constraint/deflation directions map to ~0; genuine eigenvalues of the
    // inverted pencil are bounded away from it.
    if (std::abs(th) < 1e-10) continue;
    nus.push_back(shift + 1.0 / th);
  }
  std::sort(nus.begin(), nus.end(), [&](const Complex& a, const Complex& b) {
    return std::abs(a - shift) < std::abs(b - shift);
  });
  if (static_cast<int>(nus.size()) > n_want) nus.resize(n_want);
  return nus;
}

CVec adjoint_eigvec(const CoupledOperators& ops, Complex nu, double mu, int rounds,
                    unsigned seed) {
  const Complex s = nu + Complex(0.0, 1e-9 * (1.0 + std::abs(nu)));
  const ShiftedSolver solver(ops, s, mu, /*adjoint=*/true);
  Rng rng(seed);
  CVec y = solver.apply(rng.normal_cvec(ops.n()));
  y /= ops.norm(y);
  for (int r = 0; r < rounds; ++r) {
    y = solver.apply(y);
    y /= ops.norm(y);
  }
  return y;
}

void normalize_pair(const CoupledOperators& ops, CVec& v, CVec& y) {
  v /= ops.norm(v);
  int imax = 0;
  double best = -1.0;
  for (int i = 0; i < v.size(); ++i)
    if (std::abs(v[i]) > best) {
      best = std::abs(v[i]);
      imax = i;
    }
  const Complex ph = v[imax] / std::abs(v[imax]);
  v /= ph;
  const Complex pairing = y.transpose() * (apply_gram(ops, v));
  if (std::abs(pairing) < 1e-13)
    throw solver_error("spectral: degenerate adjoint pairing; eigenvalue not simple?");
  y *= (M_1_PI / pairing);
}

Complex eig_lambda_derivative(const CoupledOperators& ops, const CVec& v, const CVec& y) {
  const CVec Sv = apply_real(ops.s011(), v);
  const Complex num = y.transpose() * Sv;
  const Complex den = y.transpose() * apply_gram(ops, v);
  return num / den;
}

SimplicityReport check_simplicity(const CoupledOperators& ops, const EigPair& right,
                                  const CVec& adj, double mu) {
  SimplicityReport rep;
  ArnoldiOptions opts;
  opts.m = 40;
  // Nearby Ritz values around the eigenvalue; a defective or multiple
  // eigenvalue shows up as a cluster and/or a vanishing dual pairing.
  auto nearby = eigs_near(ops, right.nu + Complex(0.0, 1e-7 * (1.0 + std::abs(right.nu))),
                          6, mu, opts);
  const double radius = 1e-6 * (1.0 + std::abs(right.nu));
  rep.cluster_gap = std::numeric_limits<double>::infinity();
  for (const auto& p : nearby) {
    const double d = std::abs(p.nu - right.nu);
    if (d < radius)
      ++rep.cluster_count;
    else
      rep.cluster_gap = std::min(rep.cluster_gap, d);
  }
  const Complex pairing = adj.transpose() * apply_gram(ops, right.vec);
  rep.pairing = std::abs(pairing) / (ops.norm(adj) * ops.norm(right.vec));
  rep.simple = (rep.cluster_count <= 1) && (rep.pairing > 1e-8);
  return rep;
}

ResonanceReport check_nonresonance(const CoupledOperators& ops, double zeta0, int kmax,
                                   double delta, const ArnoldiOptions& opts) {
  ResonanceReport rep;
  rep.min_margin = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= kmax; ++k) {
    if (k == 1) continue;  // the crossing pair itself lives at +- i zeta0
    auto found = eigs_near(ops, Complex(0.0, k * zeta0), 4, 0.0, opts);
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& p : found) margin = std::min(margin, std::abs(p.nu - Complex(0.0, k * zeta0)));
    rep.k.push_back(k);
    rep.margin.push_back(margin);
    rep.min_margin = std::min(rep.min_margin, margin);
  }
  rep.ok = rep.min_margin >= delta;
  return rep;
}

ResonanceReport nonresonance_from_spectrum(const std::vector<Complex>& spectrum, double zeta0,
                                           int kmax, double delta) {
  if (spectrum.empty()) throw validation_error("nonresonance_from_spectrum: empty spectrum");
  ResonanceReport rep;
  rep.min_margin = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= kmax; ++k) {
    if (k == 1) continue;  // the crossing pair itself lives at +- i zeta0
    const Complex target(0.0, k * zeta0);
    double margin = std::numeric_limits<double>::infinity();
    for (const Complex& nu : spectrum) margin = std::min(margin, std::abs(nu - target));
    rep.k.push_back(k);
    rep.margin.push_back(margin);
    rep.min_margin = std::min(rep.min_margin, margin);
  }
  rep.ok = rep.min_margin >= delta;
  return rep;
}

CrossingResult find_crossing(CrossingProblem& problem, double lambda_lo, double lambda_hi,
                             const CrossingOptions& opts) {
  struct Eval {
    double lambda;
    EigPair mode;
  };
  CrossingResult out;

  auto evaluate = [&](double lam, const EigPair* prev) -> Eval {
    const CoupledOperators& ops = problem.operators_at(lam);
    std::vector<EigPair> cands;
    if (prev) {
      cands = eigs_near(ops, Complex(0.0, prev->nu.imag()), 4, 0.0, opts.arnoldi);
    } else if (opts.zeta_hint > 0.0) {
      cands = eigs_near(ops, Complex(0.0, opts.zeta_hint), 4, 0.0, opts.arnoldi);
    } else {
      cands = eigs_near_axis(ops, opts.zeta_scan_max, opts.n_scan_shifts, 0.0, opts.arnoldi);
      // Oscillatory candidates only.
      std::erase_if(cands, [](const EigPair& p) { return p.nu.imag() < 1e-4; });
    }
    if (cands.empty()) throw solver_error("find_crossing: no converged eigenvalues at lambda");
    size_t pick = 0;
    if (prev) {
      double best = -1.0;
      for (size_t i = 0; i < cands.size(); ++i) {
        const double ov = std::abs(ops.inner(prev->vec, cands[i].vec));
        if (ov > best) {
          best = ov;
          pick = i;
        }
      }
    } else {
      double best = std::numeric_limits<double>::infinity();
      for (size_t i = 0; i < cands.size(); ++i)
        if (cands[i].nu.real() < best) {
          best = cands[i].nu.real();
          pick = i;
        }
    }
    Eval ev{lam, polish_eig(ops, cands[pick], 0.0, 1)};
    ++out.evaluations;
    if (opts.verbose)
      std::fprintf(stderr, "  crossing eval lambda=%.8f nu=%.3e%+.6fi\n", lam,
                   ev.mode.nu.real(), ev.mode.nu.imag());
    return ev;
  };

  Eval lo = evaluate(lambda_lo, nullptr);
  Eval hi = evaluate(lambda_hi, &lo.mode);
  if (!(lo.mode.nu.real() * hi.mode.nu.real() < 0.0))
    throw solver_error("find_crossing: mode does not change stability over the bracket");
  // Orient the bracket updates by the sign held at the lower end.
  const double sgn = (lo.mode.nu.real() > 0.0) ? 1.0 : -1.0;

  Eval best = (std::abs(lo.mode.nu.real()) < std::abs(hi.mode.nu.real())) ? lo : hi;
  for (int it = 0; it < opts.max_iter && std::abs(best.mode.nu.real()) > opts.tol_re; ++it) {
    const double ga = lo.mode.nu.real(), gb = hi.mode.nu.real();
    double lam = lo.lambda - ga * (hi.lambda - lo.lambda) / (gb - ga);
    const double lam_mid = 0.5 * (lo.lambda + hi.lambda);
    const double span = hi.lambda - lo.lambda;
    if (!(lam > lo.lambda + 1e-3 * span && lam < hi.lambda - 1e-3 * span)) lam = lam_mid;
    Eval ev = evaluate(lam, &best.mode);
    if (sgn * ev.mode.nu.real() > 0.0)
      lo = ev;
    else
      hi = ev;
    if (std::abs(ev.mode.nu.real()) < std::abs(best.mode.nu.real())) best = ev;
    if (span < 1e-12 * (1.0 + hi.lambda)) break;
  }
  if (std::abs(best.mode.nu.real()) > opts.tol_re)
    throw solver_error("find_crossing: |Re nu| tolerance not reached");

  const CoupledOperators& ops = problem.operators_at(best.lambda);
  EigPair mode = polish_eig(ops, best.mode, 0.0, 1);
  if (std::abs(mode.nu.real()) > std::abs(best.mode.nu.real())) mode = best.mode;
  CVec v = mode.vec;
  CVec y = adjoint_eigvec(ops, mode.nu);
  normalize_pair(ops, v, y);

  out.lambda_c = best.lambda;
  out.zeta0 = mode.nu.imag();
  out.re_nu = mode.nu.real();
  out.v0 = v;
  out.v0_adj = y;
  out.dnu_dlambda = eig_lambda_derivative(ops, v, y);
  return out;
}

}  // namespace oscilla
