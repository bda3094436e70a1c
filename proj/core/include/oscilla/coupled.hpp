#pragma once

#include <vector>

#include "oscilla/steady.hpp"

namespace oscilla {

// Linearized fluid--body operators about a steady state, on the coupled state
//   x = [w_free; sigma; eta]
// where the body trace of the perturbation velocity w is tied to the rigid
// velocity sigma by a prolongation, and eta is the spring displacement.
//
// Evolution: M xdot + L2(mu) x + C q = N,  C^T x = 0, with M equal to the
// Gram matrix G (fluid mass through the prolongation + varpi^{-1} on sigma +
// varpi^{-1} A on eta; the kinematic row eta' = sigma is premultiplied by
// varpi^{-1} A so mass and Gram coincide). Decaying solutions are e^{-nu t}
// with Re nu > 0 on the stable side.
//
// mu is the offset of the transport intensity from the linearization point;
// the base flow is modeled linearly in mu (u0 + mu u0'), which makes
//   L2(mu) = L2 + mu S011 + mu^2 S2
// exact. S011 is the genuine first lambda-derivative of the linearization.
//
// fixed_body freezes the body (homogeneous Dirichlet trace): the state is the
// free fluid dofs only. Used for the fixed-cylinder benchmark.
class CoupledOperators {
public:
  CoupledOperators(const DiscreteSpace& space, const AssembledForms& forms,
                   const SteadyState& base, const Vec& u0_prime, double varpi,
                   const Mat& A, bool fixed_body = false);

  int n() const { return n_; }
  int n_free() const { return nf_; }
  int n_pressure() const { return np_; }
  bool fixed_body() const { return fixed_body_; }
  int sigma_index() const { return fixed_body_ ? -1 : nf_; }
  int eta_index() const { return fixed_body_ ? -1 : nf_ + 2; }
  double lambda0() const { return lambda0_; }
  double varpi() const { return varpi_; }
  const Mat& stiffness() const { return A_; }
  const DiscreteSpace& space() const { return *space_; }
  const AssembledForms& forms() const { return *forms_; }
  const SteadyState& base_state() const { return base_; }
  const Vec& u0_prime() const { return u0_prime_; }

  const SpMat& gram() const { return gram_; }
  const SpMat& constraint() const { return constraint_; }  // n x np divergence coupling
  const SpMat& l0() const { return l0_; }                  // stream transport + viscosity + spring
  const SpMat& l2() const { return l2_; }
  const SpMat& s011() const { return s011_; }
  const SpMat& s2() const { return s2_; }
  const SpMat& dissipation_matrix() const { return diff_state_; }
  SpMat l2_at(double mu) const;

  // Augmented saddle matrices (size n + np) for constrained solves.
  SpCMat shifted_aug(Complex s, double mu = 0.0) const;          // L2(mu) - s G
  SpCMat osc_aug(int k, double zeta, double mu) const;           // L2(mu) - i k zeta G
  SpMat steady_aug(double mu) const;                             // L2(mu)

  // Mean (zero-frequency) block on [w_free; eta_mean; p]: zero body trace,
  // zero mean rigid velocity, spring balancing the mean force. Size
  // nf + 2 + np (nf + np when the body is fixed).
  SpMat mean_aug(double mu) const;
  int mean_n() const { return fixed_body_ ? nf_ + np_ : nf_ + 2 + np_; }

  // Quadratic convective form on states: rows are the state-tested
  //   ((sigma_a - w_a) . grad w_b, phi),
  // without any transport-intensity factor. eta rows are zero.
  Vec nonlinear_form(const Vec& a, const Vec& b) const;
  std::vector<Vec> nonlinear_form_batch(const std::vector<Vec>& a,
                                        const std::vector<Vec>& b) const;
  CVec nonlinear_form(const CVec& a, const CVec& b) const;

  // State <-> full velocity dof transfer.
  Vec to_full(const Vec& state) const;
  CVec to_full(const CVec& state) const;
  Vec from_full(const Vec& full, const Eigen::Vector2d& sigma,
                const Eigen::Vector2d& eta) const;
  Eigen::Vector2d sigma_of(const Vec& state) const;
  Eigen::Vector2cd sigma_of(const CVec& state) const;
  Eigen::Vector2d eta_of(const Vec& state) const;
  Eigen::Vector2cd eta_of(const CVec& state) const;

  // Pairings with the Gram matrix: bilinear (no conjugation, the duality used
  // for adjoint solvability) and the Hermitian inner product.
  Complex bilinear(const CVec& x, const CVec& y) const;
  Complex inner(const CVec& x, const CVec& y) const;
  double norm(const CVec& x) const;
  double norm(const Vec& x) const;
  // 2 ||D(w)||^2 of the fluid part of a state.
  double dissipation(const CVec& x) const;

private:
  const DiscreteSpace* space_;
  const AssembledForms* forms_;
  SteadyState base_;
  Vec u0_prime_;
  double lambda0_ = 0.0, varpi_ = 1.0;
  Mat A_;
  bool fixed_body_ = false;
  int nf_ = 0, np_ = 0, n_ = 0;

  SpMat Zw_;  // nv x n prolongation of the fluid part (trace -> sigma)
  SpMat gram_, constraint_, l0_, l2_, s011_, s2_, diff_state_;
};

}  // namespace oscilla
