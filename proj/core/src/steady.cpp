#include "oscilla/steady.hpp"

#include <cmath>
#include <cstdio>

namespace oscilla {

Eigen::Vector2d equilibrium_displacement(const Eigen::Vector2d& traction, double varpi,
                                         const Mat& A) {
  return varpi * A.ldlt().solve(traction);
}

SteadySolver::SteadySolver(const DiscreteSpace& space, const AssembledForms& forms)
    : space_(&space), forms_(&forms) {
  for (int v = 0; v < space.n_vnodes(); ++v) {
    const int d = space.vdof(v);
    if (d < 0 || space.vclass(v) == VNodeClass::body) continue;
    free_dofs_.push_back(d);
    free_dofs_.push_back(d + 1);
  }
  Sf_ = selection_matrix(forms.nv, free_dofs_);
}

Vec SteadySolver::momentum_residual(double lambda, const Vec& u, const Vec& p) const {
  // (u . grad u, phi) is the negated convective form with zero rigid trace.
  // Raw transport keeps the outflow flux term; the skew variant loses
  // coercivity there once lambda is past a few units.
  Vec conv = -convective_form(*space_, u, Eigen::Vector2d::Zero(), u);
  return forms_->diffusion * u - lambda * (forms_->transport1_raw * u) + lambda * conv +
         forms_->grad_p * p;
}

double SteadySolver::continuity_residual(const Vec& u) const {
  return divergence_residual(*forms_, u);
}

void SteadySolver::factor_jacobian(double lambda, const Vec& u) {
  const SpMat conv = assemble_convection(*space_, u);
  const SpMat reac = assemble_reaction(*space_, u);
  SpMat J = forms_->diffusion - lambda * forms_->transport1_raw + lambda * (conv + reac);
  const SpMat Jff = SpMat(Sf_.transpose()) * J * Sf_;
  const SpMat Bf = SpMat(Sf_.transpose()) * forms_->grad_p;

  const int nf = static_cast<int>(free_dofs_.size());
  const int np = forms_->np;
  std::vector<Triplet> trips;
  trips.reserve(Jff.nonZeros() + 2 * Bf.nonZeros());
  for (int k = 0; k < Jff.outerSize(); ++k)
    for (SpMat::InnerIterator it(Jff, k); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (int k = 0; k < Bf.outerSize(); ++k)
    for (SpMat::InnerIterator it(Bf, k); it; ++it) {
      trips.emplace_back(static_cast<int>(it.row()), nf + static_cast<int>(it.col()), it.value());
      trips.emplace_back(nf + static_cast<int>(it.col()), static_cast<int>(it.row()), it.value());
    }
  SpMat K(nf + np, nf + np);
  K.setFromTriplets(trips.begin(), trips.end());

  lu_ = std::make_unique<Eigen::SparseLU<SpMat>>();
  lu_->compute(K);
  if (lu_->info() != Eigen::Success)
    throw solver_error("steady: Newton matrix factorization failed");
  lu_lambda_ = lambda;
  lu_u_tag_ = u.squaredNorm();
}

Vec SteadySolver::solve_linear(const Vec& rhs_free, const Vec& rhs_cont) {
  const int nf = static_cast<int>(free_dofs_.size());
  Vec rhs(nf + forms_->np);
  rhs.head(nf) = rhs_free;
  rhs.tail(forms_->np) = rhs_cont;
  return lu_->solve(rhs);
}

SteadyState SteadySolver::solve(double lambda, const SteadyOptions& opts,
                                const SteadyState* init) {
  const int nf = static_cast<int>(free_dofs_.size());
  Vec u, p;
  if (init) {
    u = init->u;
    p = init->p;
  } else {
    u = stokes_lift(*space_, *forms_, Eigen::Vector2d::UnitX());
    p = Vec::Zero(forms_->np);
  }

  SteadyState st;
  st.lambda = lambda;
  double rnorm = 0.0;
  int it = 0;
  for (; it < opts.max_newton; ++it) {
    const Vec rm = momentum_residual(lambda, u, p);
    const Vec rf = SpMat(Sf_.transpose()) * rm;
    const Vec rc = forms_->grad_p.transpose() * u;
    rnorm = std::sqrt(rf.squaredNorm() + rc.squaredNorm());
    if (opts.verbose)
      std::fprintf(stderr, "  steady lambda=%g newton %d |r|=%.3e\n", lambda, it, rnorm);
    if (rnorm < opts.tol) break;
    if (!std::isfinite(rnorm)) throw solver_error("steady: residual diverged");

    factor_jacobian(lambda, u);
    const Vec delta = solve_linear(-rf, -rc);

    // Backtracking: require a genuine decrease, else the step is rejected and
    // the whole solve fails fast (continuation reacts by shrinking its step).
    double alpha = 1.0;
    Vec u_new, p_new;
    bool accepted = false;
    for (int h = 0; h < 24; ++h) {
      u_new = u;
      p_new = p + alpha * delta.tail(forms_->np);
      for (int k = 0; k < nf; ++k) u_new[free_dofs_[k]] += alpha * delta[k];
      const Vec rm2 = SpMat(Sf_.transpose()) * momentum_residual(lambda, u_new, p_new);
      const Vec rc2 = forms_->grad_p.transpose() * u_new;
      const double r2 = std::sqrt(rm2.squaredNorm() + rc2.squaredNorm());
      if (r2 < (1.0 - 1e-4 * alpha) * rnorm || r2 < opts.tol) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) throw solver_error("steady: line search stalled");
    u = u_new;
    p = p_new;
  }
  const Vec rm = momentum_residual(lambda, u, p);
  const Vec rf = SpMat(Sf_.transpose()) * rm;
  const Vec rc = forms_->grad_p.transpose() * u;
  rnorm = std::sqrt(rf.squaredNorm() + rc.squaredNorm());
  if (rnorm >= opts.tol) throw solver_error("steady: Newton did not converge");

  st.u = u;
  st.p = p;
  st.newton_iters = it;
  st.residual = rnorm;
  st.traction = -traction_from_residual(*space_, rm);
  return st;
}

SteadyState SteadySolver::continue_to(double lambda_target, const SteadyOptions& opts) {
  if (lambda_target <= 0.0) throw validation_error("steady: lambda must be positive");
  double lam = std::min(opts.lambda_first, lambda_target);
  SteadyState st = solve(lam, opts);
  int steps = 1;
  double dlam = lam;
  while (st.lambda < lambda_target * (1.0 - 1e-14)) {
    dlam = std::min({2.0 * dlam, opts.dlambda_max, lambda_target - st.lambda});
    for (;;) {
      const double lam_next = st.lambda + dlam;
      SteadyState pred = st;
      Vec du, dp;
      branch_derivative(st, du, dp);
      pred.u = st.u + dlam * du;
      pred.p = st.p + dlam * dp;
      try {
        SteadyState next = solve(lam_next, opts, &pred);
        // Easy convergence: allow growing the step next round.
        if (next.newton_iters >= 6) dlam *= 0.5;
        st = next;
        ++steps;
        break;
      } catch (const solver_error&) {
        dlam *= 0.25;
        if (dlam < 1e-6 * lambda_target)
          throw solver_error("steady: continuation stalled before target");
      }
    }
  }
  st.continuation_steps = steps;
  return st;
}

void SteadySolver::branch_derivative(const SteadyState& st, Vec& du, Vec& dp) {
  if (!lu_ || lu_lambda_ != st.lambda || lu_u_tag_ != st.u.squaredNorm())
    factor_jacobian(st.lambda, st.u);
  // dR/dlambda = -T1 u + (u.grad u, .): solve J [du;dp] = -dR/dlambda.
  const Vec conv = -convective_form(*space_, st.u, Eigen::Vector2d::Zero(), st.u);
  const Vec rhs_full = forms_->transport1_raw * st.u - conv;
  const Vec rf = SpMat(Sf_.transpose()) * rhs_full;
  const Vec sol = solve_linear(rf, Vec::Zero(forms_->np));
  du = Vec::Zero(forms_->nv);
  for (size_t k = 0; k < free_dofs_.size(); ++k) du[free_dofs_[k]] = sol[k];
  dp = sol.tail(forms_->np);
}

}  // namespace oscilla
