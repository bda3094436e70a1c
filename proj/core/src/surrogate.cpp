#include "oscilla/surrogate.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace oscilla {

namespace {

std::string fmt_complex(Complex z) {
  std::ostringstream os;
  os << z.real() << (z.imag() < 0 ? " - " : " + ") << std::abs(z.imag()) << "i";
  return os.str();
}

// Realification of a complex scalar: [Re -Im; Im Re] has eigenvalues c, conj(c).
Mat rot2(Complex c) {
  Mat b(2, 2);
  b << c.real(), -c.imag(), c.imag(), c.real();
  return b;
}

Complex closest_to(const std::vector<Complex>& spec, Complex target) {
  Complex best = spec.front();
  double d = std::abs(best - target);
  for (const Complex& nu : spec) {
    const double dn = std::abs(nu - target);
    if (dn < d) {
      d = dn;
      best = nu;
    }
  }
  return best;
}

}  // namespace

SurrogateSystem::SurrogateSystem(Mat l0, Mat l1, int degree, std::function<Vec(const Vec&)> n,
                                 std::function<Vec(const Vec&, const Vec&)> dn,
                                 SurrogateReference ref)
    : n_(static_cast<int>(l0.rows())),
      degree_(degree),
      l0_(std::move(l0)),
      l1_(std::move(l1)),
      nl_(std::move(n)),
      dnl_(std::move(dn)),
      ref_(std::move(ref)) {
  if (n_ < 1 || l0_.cols() != n_) throw validation_error("surrogate: L0 must be square");
  if (l1_.rows() != n_ || l1_.cols() != n_)
    throw validation_error("surrogate: L1 must match L0 dimensions");
  if (degree_ < 2 || degree_ > 3)
    throw validation_error("surrogate: nonlinear degree must be 2 or 3");
}

SpMat SurrogateSystem::mean_matrix(double mu) const {
  return linear_at(mu).sparseView();
}

SpCMat SurrogateSystem::osc_matrix(int k, double zeta, double mu) const {
  CMat m = linear_at(mu).cast<Complex>();
  m.diagonal().array() -= Complex(0.0, k * zeta);
  return m.sparseView();
}

void SurrogateSystem::nonlinear(const std::vector<Vec>& x, double, std::vector<Vec>& out) const {
  out.resize(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = nl_ ? nl_(x[j]) : Vec::Zero(n_);
}

void SurrogateSystem::nonlinear_jacobian(const std::vector<Vec>& x, const std::vector<Vec>& dx,
                                         double, std::vector<Vec>& out) const {
  out.resize(x.size());
  for (std::size_t j = 0; j < x.size(); ++j)
    out[j] = dnl_ ? dnl_(x[j], dx[j]) : Vec::Zero(n_);
}

std::vector<Complex> SurrogateSystem::spectrum_at(double mu) const {
  Eigen::EigenSolver<Mat> es(linear_at(mu), /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) throw solver_error("surrogate: dense eigensolve failed");
  std::vector<Complex> spec(es.eigenvalues().data(), es.eigenvalues().data() + n_);
  return spec;
}

namespace {

// Construction-time check that the dense matrices reproduce the analytic
// crossing data stored in the reference.
void verify_crossing_reference(const SurrogateSystem& sys) {
  const SurrogateReference& ref = sys.reference();
  const double mu_c = ref.lambda_c - ref.lambda_origin;
  const Complex nu_c(0.0, ref.zeta0);
  const Complex got = closest_to(sys.spectrum_at(mu_c), nu_c);
  if (std::abs(got - nu_c) > 1e-10 * (1.0 + std::abs(nu_c)))
    throw solver_error("surrogate self-check: planted crossing eigenvalue " + fmt_complex(nu_c) +
                       " not found, nearest is " + fmt_complex(got));
  const double h = 1e-3;  // the eigenvalue path is linear in the parameter
  const Complex plus = closest_to(sys.spectrum_at(mu_c + h), nu_c + h * ref.dnu_dlambda);
  const Complex minus = closest_to(sys.spectrum_at(mu_c - h), nu_c - h * ref.dnu_dlambda);
  const Complex slope = (plus - minus) / (2.0 * h);
  if (std::abs(slope - ref.dnu_dlambda) > 1e-7 * (1.0 + std::abs(ref.dnu_dlambda)))
    throw solver_error("surrogate self-check: eigenvalue slope mismatch, expected " +
                       fmt_complex(ref.dnu_dlambda) + ", measured " + fmt_complex(slope));
}

}  // namespace

SurrogateSystem make_normal_form(int sign_cubic) {
  if (sign_cubic != 1 && sign_cubic != -1)
    throw validation_error("normal form: cubic sign must be +1 or -1");
  Mat j(2, 2);
  j << 0.0, -1.0, 1.0, 0.0;
  const Mat l0 = -j;                    // eigenvalues +/- i, decay convention
  const Mat l1 = -Mat::Identity(2, 2);  // d nu / d mu = -1 (destabilizing)
  const double s = static_cast<double>(sign_cubic);
  // Cubic scaled by 2 so the duality-normalized amplitude eps (= rho * sqrt(2)
  // for orbit radius rho) obeys mu(eps) = s * eps^2 exactly.
  auto nl = [s](const Vec& x) -> Vec { return (-2.0 * s * x.squaredNorm()) * x; };
  auto dnl = [s](const Vec& x, const Vec& d) -> Vec {
    return -2.0 * s * (x.squaredNorm() * d + 2.0 * x.dot(d) * x);
  };
  SurrogateReference ref;
  ref.lambda_origin = 0.0;
  ref.lambda_c = 0.0;
  ref.zeta0 = 1.0;
  ref.dnu_dlambda = Complex(-1.0, 0.0);
  ref.mu1_sign = sign_cubic;
  ref.mu_of_eps = [s](double eps) { return s * eps * eps; };
  ref.zeta_of_eps = [](double) { return 1.0; };
  SurrogateSystem sys(l0, l1, /*degree=*/3, nl, dnl, ref);
  verify_crossing_reference(sys);
  return sys;
}

SurrogateSystem make_degenerate_normal_form() {
  Mat j(2, 2);
  j << 0.0, -1.0, 1.0, 0.0;
  const Mat l0 = -j;
  const Mat l1 = -Mat::Identity(2, 2);
  const Mat jc = j;
  // Purely rotational cubic (2 i z |z|^2 in complex shorthand): no radial
  // forcing, so mu(eps) = 0 while the phase speed grows as 1 + eps^2.
  auto nl = [jc](const Vec& x) -> Vec { return (2.0 * x.squaredNorm()) * (jc * x); };
  auto dnl = [jc](const Vec& x, const Vec& d) -> Vec {
    return 2.0 * (x.squaredNorm() * (jc * d) + 2.0 * x.dot(d) * (jc * x));
  };
  SurrogateReference ref;
  ref.lambda_origin = 0.0;
  ref.lambda_c = 0.0;
  ref.zeta0 = 1.0;
  ref.dnu_dlambda = Complex(-1.0, 0.0);
  ref.mu1_sign = 0;
  ref.mu_of_eps = [](double) { return 0.0; };
  ref.zeta_of_eps = [](double eps) { return 1.0 + eps * eps; };
  SurrogateSystem sys(l0, l1, /*degree=*/3, nl, dnl, ref);
  verify_crossing_reference(sys);
  return sys;
}

SurrogateSystem make_planted_spectrum(const std::vector<PlantedMode>& modes, double lambda_star,
                                      unsigned seed) {
  if (modes.empty()) throw validation_error("planted spectrum: no modes given");
  const double tol_dup = 1e-12;
  // Mode j contributes eigenvalues {nu_j} or {nu_j, conj nu_j}; overlapping
  // requests (other than the deliberate defective Jordan pair) are rejected.
  for (std::size_t i = 0; i < modes.size(); ++i) {
    for (std::size_t j = i + 1; j < modes.size(); ++j) {
      const Complex a = modes[i].nu;
      const Complex b = modes[j].nu;
      if (std::abs(a - b) < tol_dup || (a.imag() != 0.0 && std::abs(std::conj(a) - b) < tol_dup))
        throw validation_error("planted spectrum: duplicate eigenvalue " + fmt_complex(b) +
                               " requested by modes " + std::to_string(i) + " and " +
                               std::to_string(j));
    }
  }

  int n = 0;
  for (const PlantedMode& m : modes) {
    const bool is_real = m.nu.imag() == 0.0;
    if (is_real && m.slope.imag() != 0.0)
      throw validation_error("planted spectrum: real eigenvalue needs a real slope");
    n += m.jordan ? (is_real ? 2 : 4) : (is_real ? 1 : 2);
  }

  Mat b0 = Mat::Zero(n, n);
  Mat b1 = Mat::Zero(n, n);
  int off = 0;
  for (const PlantedMode& m : modes) {
    const bool is_real = m.nu.imag() == 0.0;
    if (!m.jordan && is_real) {
      b0(off, off) = m.nu.real();
      b1(off, off) = m.slope.real();
      off += 1;
    } else if (!m.jordan) {
      b0.block(off, off, 2, 2) = rot2(m.nu);
      b1.block(off, off, 2, 2) = rot2(m.slope);
      off += 2;
    } else if (is_real) {
      b0.block(off, off, 2, 2) << m.nu.real(), 1.0, 0.0, m.nu.real();
      b1.block(off, off, 2, 2) = m.slope.real() * Mat::Identity(2, 2);
      off += 2;
    } else {
      b0.block(off, off, 2, 2) = rot2(m.nu);
      b0.block(off, off + 2, 2, 2) = Mat::Identity(2, 2);
      b0.block(off + 2, off + 2, 2, 2) = rot2(m.nu);
      b1.block(off, off, 2, 2) = rot2(m.slope);
      b1.block(off + 2, off + 2, 2, 2) = rot2(m.slope);
      off += 4;
    }
  }

  // Seeded random orthogonal change of basis hides the block structure while
  // preserving the spectrum exactly.
  Rng rng(seed);
  Mat a(n, n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) a(i, k) = rng.normal();
  Eigen::HouseholderQR<Mat> qr(a);
  Mat q = qr.householderQ();
  const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int k = 0; k < n; ++k)
    if (r(k, k) < 0.0) q.col(k) *= -1.0;

  const Mat l0 = q * b0 * q.transpose();
  const Mat l1 = q * b1 * q.transpose();

  SurrogateReference ref;
  ref.lambda_origin = lambda_star;
  // Reference crossing: the non-defective oscillatory path reaching Re nu = 0
  // closest to lambda_star, if any.
  double best_dist = std::numeric_limits<double>::infinity();
  for (const PlantedMode& m : modes) {
    if (m.jordan || m.slope.real() == 0.0 || m.nu.imag() == 0.0) continue;
    const double dl = -m.nu.real() / m.slope.real();
    if (std::abs(dl) >= best_dist) continue;
    best_dist = std::abs(dl);
    Complex nu = m.nu;
    Complex slope = m.slope;
    if (nu.imag() < 0.0) {  // report the upper-half-plane representative
      nu = std::conj(nu);
      slope = std::conj(slope);
    }
    ref.lambda_c = lambda_star + dl;
    ref.zeta0 = (nu + dl * slope).imag();
    ref.dnu_dlambda = slope;
  }
  if (!std::isfinite(best_dist)) {
    ref.lambda_c = std::numeric_limits<double>::quiet_NaN();
    ref.zeta0 = 0.0;
    ref.dnu_dlambda = Complex(0.0, 0.0);
  }

  SurrogateSystem sys(l0, l1, /*degree=*/2, {}, {}, ref);

  // Verify every planted eigenvalue (Jordan pairs split by O(sqrt(machine
  // epsilon)) under a dense eigensolve, so they get a looser tolerance).
  const std::vector<Complex> spec = sys.spectrum_at(0.0);
  for (const PlantedMode& m : modes) {
    const Complex got = closest_to(spec, m.nu);
    const double tol = (m.jordan ? 1e-6 : 1e-10) * (1.0 + std::abs(m.nu));
    if (std::abs(got - m.nu) > tol)
      throw solver_error("planted spectrum self-check: eigenvalue " + fmt_complex(m.nu) +
                         " not realized, nearest is " + fmt_complex(got));
  }
  if (std::isfinite(best_dist)) verify_crossing_reference(sys);
  return sys;
}

DenseCrossing find_crossing_dense(const SurrogateSystem& sys, double lambda_lo, double lambda_hi,
                                  double tol_re, int max_iter) {
  if (!(lambda_hi > lambda_lo))
    throw validation_error("find_crossing_dense: need lambda_lo < lambda_hi");
  const double origin = sys.reference().lambda_origin;
  int evals = 0;
  bool have_prev = false;
  Complex prev(0.0, 0.0);
  // Track one oscillatory eigenvalue continuously: least |Re| at the first
  // evaluation, closest to the previous iterate afterwards.
  auto nu_at = [&](double lam) -> Complex {
    ++evals;
    const std::vector<Complex> spec = sys.spectrum_at(lam - origin);
    Complex best(0.0, 0.0);
    double score = std::numeric_limits<double>::infinity();
    for (const Complex& nu : spec) {
      if (nu.imag() <= 1e-9) continue;
      const double sc = have_prev ? std::abs(nu - prev) : std::abs(nu.real());
      if (sc < score) {
        score = sc;
        best = nu;
      }
    }
    if (!std::isfinite(score))
      throw solver_error("find_crossing_dense: no oscillatory eigenvalue present");
    prev = best;
    have_prev = true;
    return best;
  };

  auto finish = [&](double lam, Complex nu) -> DenseCrossing {
    const CMat l = sys.linear_at(lam - origin).cast<Complex>();
    Eigen::ComplexEigenSolver<CMat> es(l, /*computeEigenvectors=*/true);
    Eigen::ComplexEigenSolver<CMat> est(l.transpose(), /*computeEigenvectors=*/true);
    if (es.info() != Eigen::Success || est.info() != Eigen::Success)
      throw solver_error("find_crossing_dense: dense eigensolve failed");
    int iv = 0, iy = 0;
    for (int k = 1; k < l.rows(); ++k) {
      if (std::abs(es.eigenvalues()(k) - nu) < std::abs(es.eigenvalues()(iv) - nu)) iv = k;
      if (std::abs(est.eigenvalues()(k) - nu) < std::abs(est.eigenvalues()(iy) - nu)) iy = k;
    }
    DenseCrossing out;
    out.lambda_c = lam;
    out.zeta0 = nu.imag();
    out.v0 = es.eigenvectors().col(iv);
    out.y0 = est.eigenvectors().col(iy);
    const Complex pair = out.y0.transpose() * out.v0;
    if (std::abs(pair) < 1e-10)
      throw solver_error("find_crossing_dense: defective pair, y^T v vanishes");
    out.dnu_dlambda = Complex(out.y0.transpose() * sys.l1().cast<Complex>() * out.v0) / pair;
    out.evaluations = evals;
    return out;
  };

  double a = lambda_lo, b = lambda_hi;
  Complex nu_a = nu_at(a);
  double fa = nu_a.real();
  if (std::abs(fa) < tol_re) return finish(a, nu_a);
  Complex nu_b = nu_at(b);
  double fb = nu_b.real();
  if (std::abs(fb) < tol_re) return finish(b, nu_b);
  if (fa * fb > 0.0)
    throw solver_error("find_crossing_dense: Re nu does not change sign over the bracket");

  for (int it = 0; it < max_iter; ++it) {
    double x = (fb != fa) ? b - fb * (b - a) / (fb - fa) : 0.5 * (a + b);
    const double lo = std::min(a, b), hi = std::max(a, b);
    const double margin = 0.05 * (hi - lo);
    if (!(x > lo + margin && x < hi - margin)) x = 0.5 * (a + b);
    const Complex nu = nu_at(x);
    const double f = nu.real();
    if (std::abs(f) < tol_re) return finish(x, nu);
    if ((f > 0.0) == (fa > 0.0)) {
      a = x;
      fa = f;
    } else {
      b = x;
      fb = f;
    }
  }
  throw solver_error("find_crossing_dense: secant iteration did not converge");
}

DenseSimplicity check_simplicity_dense(const Mat& l, Complex nu) {
  const CMat lc = l.cast<Complex>();
  Eigen::ComplexEigenSolver<CMat> es(lc, /*computeEigenvectors=*/true);
  Eigen::ComplexEigenSolver<CMat> est(lc.transpose(), /*computeEigenvectors=*/true);
  if (es.info() != Eigen::Success || est.info() != Eigen::Success)
    throw solver_error("check_simplicity_dense: dense eigensolve failed");
  // Cluster radius well above the O(sqrt(machine epsilon)) splitting of a
  // numerically resolved defective pair.
  const double radius = 1e-5 * (1.0 + std::abs(nu));
  DenseSimplicity out;
  out.cluster_gap = std::numeric_limits<double>::infinity();
  int iv = 0, iy = 0;
  for (int k = 0; k < lc.rows(); ++k) {
    const double dv = std::abs(es.eigenvalues()(k) - nu);
    if (dv < radius)
      ++out.multiplicity;
    else
      out.cluster_gap = std::min(out.cluster_gap, dv);
    if (dv < std::abs(es.eigenvalues()(iv) - nu)) iv = k;
    if (std::abs(est.eigenvalues()(k) - nu) < std::abs(est.eigenvalues()(iy) - nu)) iy = k;
  }
  if (!std::isfinite(out.cluster_gap)) out.cluster_gap = 0.0;
  if (out.multiplicity == 0) return out;
  const CVec v = es.eigenvectors().col(iv);
  const CVec y = est.eigenvectors().col(iy);
  out.pairing = std::abs(Complex(y.transpose() * v)) / (y.norm() * v.norm());
  out.simple = (out.multiplicity == 1) && (out.pairing > 1e-6);
  return out;
}

}  // namespace oscilla
