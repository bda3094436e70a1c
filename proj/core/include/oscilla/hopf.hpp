#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "oscilla/spectral.hpp"

namespace oscilla {

// Generic parameterized evolution system
//   G xdot + L(mu) x + C q = N(x, mu),   C^T x = 0,
// with decaying linear solutions e^{-nu t} and a polynomial nonlinearity that
// vanishes to second order at x = 0 (N(0, mu) = 0 and D_x N(0, mu) = 0). The
// harmonic-balance engine below sees only this interface, so the same code
// runs the discretized fluid--body problem and small ODE test systems.
class AbstractSystem {
public:
  virtual ~AbstractSystem() = default;

  virtual int state_dim() const = 0;        // n
  virtual int multiplier_dim() const = 0;   // np; 0 when unconstrained
  virtual int mean_dim() const = 0;         // reduced zero-frequency unknowns
  virtual int nonlinear_degree() const = 0; // highest power in N (2 or 3)

  // Zero-frequency block on [mean coords; multiplier], size mean_dim + np.
  virtual SpMat mean_matrix(double mu) const = 0;
  // Mode block [[L(mu) - i k zeta G, C],[C^T, 0]], size n + np.
  virtual SpCMat osc_matrix(int k, double zeta, double mu) const = 0;

  virtual Vec gram(const Vec& x) const = 0;
  virtual CVec gram(const CVec& x) const = 0;

  // mu-derivative of the linear operator applied to a state (tested rows).
  virtual Vec dmu_linear(const Vec& x, double mu) const = 0;
  virtual CVec dmu_linear(const CVec& x, double mu) const = 0;

  // Embedding of mean coordinates into a full state, its left inverse, and
  // the matching row restriction of a tested right side.
  virtual Vec mean_to_state(const Vec& vm) const = 0;
  virtual Vec mean_coords_of(const Vec& state) const = 0;
  virtual Vec state_rows_to_mean(const Vec& rows) const = 0;

  // N(x_j, mu) for a batch of real states (time samples), tested rows.
  virtual void nonlinear(const std::vector<Vec>& x, double mu,
                         std::vector<Vec>& out) const = 0;
  // Directional derivative D_x N(x_j, mu)[dx_j].
  virtual void nonlinear_jacobian(const std::vector<Vec>& x, const std::vector<Vec>& dx,
                                  double mu, std::vector<Vec>& out) const = 0;
  // dN/dmu at fixed state; zero unless the nonlinearity carries the parameter.
  virtual void nonlinear_dmu(const std::vector<Vec>& x, double mu,
                             std::vector<Vec>& out) const;
  // Least-squares multiplier for a tested mode residual (seeding); empty when
  // the system is unconstrained.
  virtual CVec multiplier_for(const CVec& residual_rows) const;
};

// Adapter for the linearized fluid--body operators: L(mu) = L2 + mu S011 +
// mu^2 S2, N(x, mu) = (lambda0 + mu) * quadratic convective form.
class FsiSystem : public AbstractSystem {
public:
  explicit FsiSystem(const CoupledOperators& ops);

  const CoupledOperators& ops() const { return *ops_; }

  int state_dim() const override { return ops_->n(); }
  int multiplier_dim() const override { return ops_->n_pressure(); }
  int mean_dim() const override { return ops_->mean_n() - ops_->n_pressure(); }
  int nonlinear_degree() const override { return 2; }

  SpMat mean_matrix(double mu) const override { return ops_->mean_aug(mu); }
  SpCMat osc_matrix(int k, double zeta, double mu) const override {
    return ops_->osc_aug(k, zeta, mu);
  }

  Vec gram(const Vec& x) const override { return ops_->gram() * x; }
  CVec gram(const CVec& x) const override;
  Vec dmu_linear(const Vec& x, double mu) const override;
  CVec dmu_linear(const CVec& x, double mu) const override;
  Vec mean_to_state(const Vec& vm) const override;
  Vec mean_coords_of(const Vec& state) const override;
  Vec state_rows_to_mean(const Vec& rows) const override;
  void nonlinear(const std::vector<Vec>& x, double mu,
                 std::vector<Vec>& out) const override;
  void nonlinear_jacobian(const std::vector<Vec>& x, const std::vector<Vec>& dx,
                          double mu, std::vector<Vec>& out) const override;
  void nonlinear_dmu(const std::vector<Vec>& x, double mu,
                     std::vector<Vec>& out) const override;
  CVec multiplier_for(const CVec& residual_rows) const override;

private:
  const CoupledOperators* ops_;
  Eigen::SimplicialLDLT<SpMat> ctc_;  // normal equations of the constraint
};

// Real time-periodic null bases of Q = zeta0 d/dtau + L built from the
// crossing pair (v0, y0) with the joint normalization |v0|_G = 1 (largest
// entry positive real) and y0^T G v0 = 1/pi. The duality relations below fix
// the component signs:
//   v1(tau)   =  Re[v0 e^{-i tau}]      adj1(tau) =  Re[y0 e^{+i tau}]
//   v2(tau)   = -Im[v0 e^{-i tau}]      adj2(tau) =  Im[y0 e^{+i tau}]
// giving ((v1|adj1)) = ((v2|adj2)) = 1, ((v2|adj1)) = ((v1|adj2)) = 0,
// ((dv1/dtau|adj1)) = 0, ((dv1/dtau|adj2)) = -1, where ((f|g)) integrates the
// bilinear Gram pairing over one period.
struct OscBasis {
  double zeta0 = 0.0;
  double lambda0 = 0.0;
  CVec v0;  // right null mode of L - i zeta0 G (constrained)
  CVec y0;  // transposed-pencil dual mode, same eigenvalue

  Vec v1_at(double tau) const;
  Vec v2_at(double tau) const;
  Vec v1_tau_at(double tau) const;  // d/dtau of v1
  Vec adj1_at(double tau) const;
  Vec adj2_at(double tau) const;
};

// Builds and normalizes the bases; throws solver_error when the duality
// pairing y0^T G v0 vanishes (defective pair).
OscBasis build_bases(const AbstractSystem& sys, const CVec& v0, const CVec& y0,
                     double zeta0, double lambda0 = 0.0);
OscBasis build_bases(const AbstractSystem& sys, const CrossingResult& crossing);

// Deviations of the six duality relations from their exact values, evaluated
// by periodic trapezoid quadrature (exact for these trigonometric products).
std::array<double, 6> biorthogonality_errors(const AbstractSystem& sys,
                                             const OscBasis& basis, int n_quad = 128);

// Necessary-condition guard: a time-periodic branch can only bifurcate where
// the spectrum touches the imaginary axis at nonzero frequency. Passing is
// necessary, never sufficient; the report says so explicitly.
struct GuardReport {
  bool pass = false;
  double min_abs_re = 0.0;  // over eigenvalues with |Im nu| > im_min
  double zeta_at_min = 0.0;
  std::string message;
};
GuardReport necessary_guard(const std::vector<Complex>& spectrum, double tol = 1e-6,
                            double im_min = 1e-8);

// One point of the bifurcating time-periodic branch. Stored unscaled with the
// reconstruction
//   x(t) = v + sum_{k=1..K} 2 Re[w_hat[k-1] e^{+i k zeta t}].
struct PeriodicBranchPoint {
  double eps = 0.0;   // branch parameter (duality amplitude of w)
  double mu = 0.0;    // parameter offset from the crossing
  double zeta = 0.0;  // angular frequency
  Vec v;              // mean correction, state coordinates
  Vec p_mean;         // mean multiplier
  std::vector<CVec> w_hat;  // oscillatory state coefficients, k = 1..K
  std::vector<CVec> q_hat;  // oscillatory multipliers, k = 1..K
  double amplitude = 0.0;     // ((w|adj1)); equals eps by the side condition
  double amplitude_l2 = 0.0;  // sqrt(2 sum_k |w_hat_k|_G^2), rms Gram amplitude
  double residual = 0.0;      // combined scaled-system residual at acceptance
  int newton_iters = 0;
  int gmres_iters = 0;
};

struct BranchOptions {
  int kmax = 8;             // Fourier truncation |k| <= kmax
  double tol = 1e-9;        // combined residual (2-norm) acceptance
  int max_newton = 30;
  int gmres_restart = 80;
  int gmres_max_iter = 400;
  int verbose = 0;
};

// Solves the scaled bordered harmonic-balance system at amplitude eps by
// matrix-free Newton--GMRES. The preconditioner solves the zero-frequency
// block, the bordered k = 1 block (augmented with the two side conditions and
// the unknowns zeta, mu), and the remaining mode blocks by sparse LU.
// Throws solver_error on a singular bordered factorization or stalled Newton.
PeriodicBranchPoint newton_branch_point(const AbstractSystem& sys, const OscBasis& basis,
                                        double eps,
                                        const PeriodicBranchPoint* seed = nullptr,
                                        const BranchOptions& opts = {});

struct BranchResult {
  std::vector<PeriodicBranchPoint> points;  // sorted by eps
  std::vector<std::string> warnings;        // per-side truncation notices
};

// Seeds each half of the grid outward from eps = 0; a failed point truncates
// that side with a warning instead of aborting the whole branch.
BranchResult continue_branch(const AbstractSystem& sys, const OscBasis& basis,
                             const std::vector<double>& eps_grid,
                             const BranchOptions& opts = {});

// Largest amplitude at which the first Newton correction stays below 10% of
// the linear prediction (halving search from eps0).
double suggest_epsilon_max(const AbstractSystem& sys, const OscBasis& basis,
                           double eps0 = 0.1, const BranchOptions& opts = {});

std::vector<double> make_eps_grid(double eps_max, int n_points);

// Even-power fit mu(eps) = mu1 eps^2 + mu2 eps^4 and its frequency analogue;
// the sign of mu1 classifies the branch, with a noise floor from the fit
// covariance guarding the degenerate call.
struct CriticalityFit {
  std::string classification;  // "supercritical" | "subcritical" | "degenerate"
  double mu1 = 0.0, mu2 = 0.0;
  double zeta0_fit = 0.0, zeta2 = 0.0;
  double fit_residual = 0.0;  // rms of the mu fit
  double noise_floor = 0.0;
};
CriticalityFit classify_criticality(const std::vector<PeriodicBranchPoint>& branch);

// Mean / zero-mean split of the nonlinearity for a periodic state given by
// mean v and coefficients w_hat (storage convention above): returns the mean
// tested rows and the k = 1..K coefficients of the fluctuating part.
std::pair<Vec, std::vector<CVec>> evaluate_N(const AbstractSystem& sys, const Vec& v,
                                             const std::vector<CVec>& w_hat, double mu);

// Duality amplitude ((w|adj1)) + i ((w|adj2)) of a stored branch point; the
// side conditions make it eps + 0i at accepted points.
Complex branch_amplitude(const AbstractSystem& sys, const OscBasis& basis,
                         const PeriodicBranchPoint& pt);

// Time translation by theta: w_k -> e^{+ik theta} w_k. Used by the
// phase-gauge checks (solutions are unique up to this shift).
PeriodicBranchPoint phase_shift(const PeriodicBranchPoint& pt, double theta);

// State sample x(tau) of a stored branch point.
Vec branch_state_at(const PeriodicBranchPoint& pt, double tau);

}  // namespace oscilla
