#pragma once

#include <Eigen/SparseLU>
#include <memory>
#include <optional>
#include <vector>

#include "oscilla/operators.hpp"

namespace oscilla {

// Steady flow past the spring-mounted body in the body frame, written in the
// deviation-from-stream variable u: the stream points along -e1, u -> 0 far
// away, u = e1 on the body, and
//   2(D(u),D(phi)) - lambda T1(u,phi) + lambda (u.grad u, phi)
//     - (p, div phi) = 0,   (div u, psi) = 0.
// The equilibrium body velocity is zero; the spring carries the drag.
struct SteadyOptions {
  double tol = 1e-11;        // l2 of the free-dof residual
  int max_newton = 30;
  double lambda_first = 2.0; // first continuation target from the Stokes start
  double dlambda_max = 20.0;
  int verbose = 0;
};

struct SteadyState {
  double lambda = 0.0;
  Vec u;  // full retained velocity dofs, body trace e1
  Vec p;
  // Force of the fluid on the body: negated rigid-tested residual. Points
  // downstream (negative first component) for the drag-dominated base flow.
  Eigen::Vector2d traction;
  int newton_iters = 0;
  double residual = 0.0;
  int continuation_steps = 0;
};

// Spring extension balancing the steady drag: chi0 = varpi A^{-1} F.
Eigen::Vector2d equilibrium_displacement(const Eigen::Vector2d& traction, double varpi,
                                         const Mat& A);

class SteadySolver {
public:
  SteadySolver(const DiscreteSpace& space, const AssembledForms& forms);

  // Newton from the given initial state (Stokes lifting if absent).
  SteadyState solve(double lambda, const SteadyOptions& opts = {},
                    const SteadyState* init = nullptr);

  // Ramp lambda from the Stokes regime to the target with tangent predictors
  // and adaptive steps.
  SteadyState continue_to(double lambda_target, const SteadyOptions& opts = {});

  // d(u,p)/d lambda at a converged state; reuses the last Newton factorization
  // when it matches the state. Body trace of the derivative is zero.
  void branch_derivative(const SteadyState& st, Vec& du, Vec& dp);

  // Residual of the steady momentum form on all retained dofs (body rows carry
  // the boundary force) and the continuity residual.
  Vec momentum_residual(double lambda, const Vec& u, const Vec& p) const;
  double continuity_residual(const Vec& u) const;

  const DiscreteSpace& space() const { return *space_; }
  const AssembledForms& forms() const { return *forms_; }
  const std::vector<int>& free_dofs() const { return free_dofs_; }

private:
  void factor_jacobian(double lambda, const Vec& u);
  Vec solve_linear(const Vec& rhs_free, const Vec& rhs_cont);

  const DiscreteSpace* space_;
  const AssembledForms* forms_;
  std::vector<int> free_dofs_;
  SpMat Sf_;  // nv x nfree selection
  std::unique_ptr<Eigen::SparseLU<SpMat>> lu_;
  double lu_lambda_ = -1.0;
  double lu_u_tag_ = 0.0;  // cheap fingerprint of the linearization state
};

}  // namespace oscilla
