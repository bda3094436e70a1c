#pragma once

#include <functional>

#include "oscilla/hopf.hpp"

namespace oscilla {

// Analytic reference carried by every surrogate; recomputed from the dense
// matrices at construction so the fixtures are self-verifying.
struct SurrogateReference {
  double lambda_origin = 0.0;  // parameter value at mu = 0
  double lambda_c = 0.0;       // absolute crossing parameter
  double zeta0 = 0.0;          // crossing frequency
  Complex dnu_dlambda;    // planted eigenvalue slope at the crossing
  int mu1_sign = 0;       // sign of the leading branch coefficient, 0 when degenerate
  std::function<double(double)> mu_of_eps;    // analytic branch law (may be empty)
  std::function<double(double)> zeta_of_eps;  // analytic frequency law (may be empty)
};

// Dense test system x in R^n with identity Gram:
//   xdot + L(mu) x = N(x),   L(mu) = L0 + mu * L1,
// sharing the AbstractSystem interface so the harmonic-balance engine runs
// unchanged on it. Eigenvalues follow the decay convention L v = nu v.
class SurrogateSystem : public AbstractSystem {
 public:
  SurrogateSystem(Mat l0, Mat l1, int degree, std::function<Vec(const Vec&)> n,
                  std::function<Vec(const Vec&, const Vec&)> dn, SurrogateReference ref);

  int state_dim() const override { return n_; }
  int multiplier_dim() const override { return 0; }
  int mean_dim() const override { return n_; }
  int nonlinear_degree() const override { return degree_; }

  SpMat mean_matrix(double mu) const override;
  SpCMat osc_matrix(int k, double zeta, double mu) const override;
  Vec gram(const Vec& x) const override { return x; }
  CVec gram(const CVec& x) const override { return x; }
  Vec dmu_linear(const Vec& x, double) const override { return l1_ * x; }
  CVec dmu_linear(const CVec& x, double) const override { return l1_ * x; }
  Vec mean_to_state(const Vec& vm) const override { return vm; }
  Vec mean_coords_of(const Vec& state) const override { return state; }
  Vec state_rows_to_mean(const Vec& rows) const override { return rows; }
  void nonlinear(const std::vector<Vec>& x, double mu,
                 std::vector<Vec>& out) const override;
  void nonlinear_jacobian(const std::vector<Vec>& x, const std::vector<Vec>& dx,
                          double mu, std::vector<Vec>& out) const override;

  Mat linear_at(double mu) const { return l0_ + mu * l1_; }
  const Mat& l1() const { return l1_; }
  std::vector<Complex> spectrum_at(double mu) const;  // dense eigenvalues nu
  const SurrogateReference& reference() const { return ref_; }

 private:
  int n_ = 0;
  int degree_ = 2;
  Mat l0_, l1_;
  std::function<Vec(const Vec&)> nl_;
  std::function<Vec(const Vec&, const Vec&)> dnl_;
  SurrogateReference ref_;
};

// Planar normal form xdot = (mu + i) x - sign * 2 x |x|^2 (complex shorthand),
// cubic scaled so the engine's duality-normalized amplitude gives the branch
// law mu(eps) = sign * eps^2 and zeta(eps) = 1 exactly. sign in {+1, -1}
// (supercritical / subcritical).
SurrogateSystem make_normal_form(int sign_cubic);

// Rotation-invariant variant with a purely rotational cubic: mu(eps) = 0 for
// every amplitude (degenerate classification), zeta(eps) = 1 + eps^2.
SurrogateSystem make_degenerate_normal_form();

// Planted linear path nu_j(lambda) = nu_j + slope_j (lambda - lambda_star).
// Complex entries produce real 2x2 rotation blocks (conjugate pairs), real
// entries 1x1 blocks; jordan requests a defective 2x2 Jordan pair at nu.
// The assembled dense matrices are conjugated by a seeded random orthogonal
// basis. Throws validation_error on duplicate non-Jordan eigenvalues.
struct PlantedMode {
  Complex nu;
  Complex slope;
  bool jordan = false;
};
SurrogateSystem make_planted_spectrum(const std::vector<PlantedMode>& modes,
                                      double lambda_star, unsigned seed = 99);

// Dense crossing search on a surrogate: tracks the oscillatory eigenvalue of
// least |Re| continuously in lambda and secant-solves Re nu = 0; returns the
// dual pair and the adjoint-formula slope.
struct DenseCrossing {
  double lambda_c = 0.0;
  double zeta0 = 0.0;
  Complex dnu_dlambda;
  CVec v0, y0;
  int evaluations = 0;
};
DenseCrossing find_crossing_dense(const SurrogateSystem& sys, double lambda_lo,
                                  double lambda_hi, double tol_re = 1e-12,
                                  int max_iter = 80);

// Simplicity of an eigenvalue of a dense matrix: algebraic cluster count at
// nu and the left/right duality pairing (which vanishes for a Jordan block).
struct DenseSimplicity {
  bool simple = false;
  int multiplicity = 0;
  double cluster_gap = 0.0;
  double pairing = 0.0;
};
DenseSimplicity check_simplicity_dense(const Mat& L, Complex nu);

}  // namespace oscilla
