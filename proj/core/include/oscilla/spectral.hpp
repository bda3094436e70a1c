#pragma once

#include <Eigen/SparseLU>
#include <memory>
#include <vector>

#include "oscilla/coupled.hpp"

namespace oscilla {

// Eigenvalues nu of L2 x = nu G x on the divergence-free subspace: decaying
// solutions e^{-nu t}, stable side Re nu > 0. The pencil is real, so the
// spectrum is conjugate-symmetric; representatives with Im nu >= 0 are kept.

struct EigPair {
  Complex nu;
  CVec vec;         // G-normalized right eigenvector (state part only)
  double residual;  // relative residual of the constrained eigenproblem
};

struct ArnoldiOptions {
  int m = 60;            // Krylov dimension
  double tol = 1e-9;     // Ritz residual acceptance
  unsigned seed = 1234;  // start-vector RNG
};

// Factorization of the augmented shifted matrix [[L2(mu) - s G, C],[C^T, 0]];
// apply() maps b to the state part of the solve with right side [G b; 0],
// i.e. one step of shift-inverted application. adjoint uses the transposed
// pencil (same spectrum, bilinear-dual eigenvectors).
class ShiftedSolver {
public:
  ShiftedSolver(const CoupledOperators& ops, Complex s, double mu = 0.0,
                bool adjoint = false);
  CVec apply(const CVec& b) const;
  CVec solve_state(const CVec& rhs_state) const;  // rhs [rhs_state; 0]
  Complex shift() const { return s_; }

private:
  const CoupledOperators* ops_;
  Complex s_;
  std::unique_ptr<Eigen::SparseLU<SpCMat>> lu_;
};

// Shift-invert Arnoldi in the Gram inner product. Returns converged Ritz
// pairs sorted by distance to the shift.
std::vector<EigPair> eigs_near(const CoupledOperators& ops, Complex shift, int n_want,
                               double mu = 0.0, const ArnoldiOptions& opts = {});

// Inverse-iteration polish of an eigenpair estimate (re-factors at the
// current eigenvalue estimate).
EigPair polish_eig(const CoupledOperators& ops, const EigPair& seed, double mu = 0.0,
                   int rounds = 2);

// Honest constrained residual ||L2 v - nu G v + C q*|| / (||L2 v|| + |nu| ||G v||)
// with q* the least-squares pressure.
double eig_residual(const CoupledOperators& ops, const Complex& nu, const CVec& v,
                    double mu = 0.0);

// Shift grid on the imaginary axis in [0, zeta_max]; converged eigenvalues
// deduplicated across shifts.
std::vector<EigPair> eigs_near_axis(const CoupledOperators& ops, double zeta_max,
                                    int n_shifts, double mu = 0.0,
                                    const ArnoldiOptions& opts = {});

// Dense cross-check: LU of the dense augmented shifted matrix, full
// eigendecomposition of the resulting shift-inverted map. Small meshes only.
std::vector<Complex> dense_spectrum_near(const CoupledOperators& ops, Complex shift,
                                         int n_want, double mu = 0.0);

// Bilinear-dual eigenvector at the same eigenvalue (transposed pencil).
CVec adjoint_eigvec(const CoupledOperators& ops, Complex nu, double mu = 0.0,
                    int rounds = 3, unsigned seed = 4321);

// Deterministic joint normalization: |v|_G = 1 with the largest-modulus entry
// rotated positive real; y scaled so the bilinear pairing y^T G v = 1/pi.
void normalize_pair(const CoupledOperators& ops, CVec& v, CVec& y);

// d nu / d lambda through the eigenvalue-perturbation pairing
// (y^T S011 v) / (y^T G v); the crossing is transversal when the real part is
// nonzero (negative when increasing transport destabilizes).
Complex eig_lambda_derivative(const CoupledOperators& ops, const CVec& v, const CVec& y);

struct SimplicityReport {
  bool simple = false;
  int cluster_count = 0;   // Ritz values within the cluster radius of nu
  double cluster_gap = 0;  // distance to the nearest distinct eigenvalue
  double pairing = 0;      // |y^T G v| / (|y|_G |v|_G), ~0 for a defective pair
};
SimplicityReport check_simplicity(const CoupledOperators& ops, const EigPair& right,
                                  const CVec& adj, double mu = 0.0);

struct ResonanceReport {
  std::vector<int> k;
  std::vector<double> margin;  // min distance of the spectrum to i k zeta0
  double min_margin = 0.0;
  bool ok = false;
};
// Margins at i k zeta0 for k = 0 (invertibility) and k = 2..kmax.
ResonanceReport check_nonresonance(const CoupledOperators& ops, double zeta0, int kmax,
                                   double delta, const ArnoldiOptions& opts = {});

// Same margins evaluated against an explicitly known spectrum (dense
// surrogates, planted fixtures).
ResonanceReport nonresonance_from_spectrum(const std::vector<Complex>& spectrum, double zeta0,
                                           int kmax, double delta);

// Rebuild hook for the crossing search: implementations cache steady solves
// and operator assemblies per lambda.
class CrossingProblem {
public:
  virtual ~CrossingProblem() = default;
  virtual const CoupledOperators& operators_at(double lambda) = 0;
};

struct CrossingOptions {
  double tol_re = 1e-8;       // |Re nu| acceptance at the crossing
  int max_iter = 40;
  double zeta_hint = -1.0;    // >0: single shift; otherwise scan
  double zeta_scan_max = 3.0;
  int n_scan_shifts = 7;
  ArnoldiOptions arnoldi;
  int verbose = 0;
};

struct CrossingResult {
  double lambda_c = 0.0;
  double zeta0 = 0.0;      // Im nu at the crossing
  double re_nu = 0.0;      // residual real part at acceptance
  Complex dnu_dlambda;     // at lambda_c
  CVec v0, v0_adj;         // normalized per normalize_pair
  int evaluations = 0;
};

// Secant-with-bisection root find of Re nu(lambda) for the tracked mode;
// requires a sign change over [lambda_lo, lambda_hi] (stable at the low end).
CrossingResult find_crossing(CrossingProblem& problem, double lambda_lo, double lambda_hi,
                             const CrossingOptions& opts = {});

}  // namespace oscilla
