#pragma once

#include <vector>

#include "oscilla/fem.hpp"
#include "oscilla/util.hpp"

namespace oscilla {

// Parameter-independent forms on the retained velocity dofs (size n_vdofs)
// and pressures (size n_pdofs). transport1 is stored in exact skew form
// 0.5[(d1 u, v) - (d1 v, u)], which makes Re(d1 w, w*) = 0 machine-exact;
// at the truncated outflow this is the directional do-nothing variant.
// transport1_raw is the plain (d1 u, v): the skew variant drops the outflow
// boundary flux, which de-coerces the steady operator at moderate stream
// speeds, so the base-flow solve must use the raw form.
struct AssembledForms {
  SpMat mass;            // (u, v)
  SpMat diffusion;       // 2 (D(u), D(v))
  SpMat transport1;      // skew freestream transport
  SpMat transport1_raw;  // (d1 u, v) without symmetrization
  SpMat grad_p;          // -(div v, p), velocity x pressure
  int nv = 0, np = 0;
};

AssembledForms assemble_basic_forms(const DiscreteSpace& space);

// Direct (consistent) convection (c . grad w, phi) with a P2 coefficient
// field given by its retained dof values (eliminated Dirichlet nodes are 0).
SpMat assemble_convection(const DiscreteSpace& space, const Vec& coeff);

// Zeroth-order coupling (w . grad F, phi) with a fixed P2 field F.
SpMat assemble_reaction(const DiscreteSpace& space, const Vec& field);

// Columns b_m = ((e_m . grad) F, phi): the rigid-velocity part of the
// reaction term. nv x 2.
Mat assemble_reaction_rigid(const DiscreteSpace& space, const Vec& field);

// Quadratic convective functional ((sigma_a - a) . grad b, phi), the building
// block of the nonlinearity. sigma_a is the rigid trace carried by a. The
// batch form shares one sweep over cells across all samples.
Vec convective_form(const DiscreteSpace& space, const Vec& a,
                    const Eigen::Vector2d& sigma_a, const Vec& b);
std::vector<Vec> convective_form_batch(const DiscreteSpace& space,
                                       const std::vector<Vec>& a,
                                       const std::vector<Eigen::Vector2d>& sigma_a,
                                       const std::vector<Vec>& b);

// Rigid-tested momentum residual: the nodal sum over body dofs, equal to the
// boundary traction functional oint (T n).e_m with n outward from the fluid
// (exact for the discrete system that produced the residual, and independent
// of how the rigid test function is extended). This is the force on the
// FLUID; the force on the body is its negative.
Eigen::Vector2d traction_from_residual(const DiscreteSpace& space, const Vec& residual);

// Direct facet-quadrature evaluation of oint (2 D(u) - p I) n . e_m with the
// same fluid-outward orientation: the slower-converging cross-check of the
// residual-based value.
Eigen::Vector2d boundary_traction(const DiscreteSpace& space, const Vec& u, const Vec& p);

// Discretely divergence-free extension of the constant boundary velocity G on
// the body (zero on Dirichlet farfield): a Stokes solve. Returns the full
// velocity dof vector; pressure is discarded.
Vec stokes_lift(const DiscreteSpace& space, const AssembledForms& forms,
                const Eigen::Vector2d& G);

// l2 norm of the discrete divergence functional (div u, psi) over pressures.
double divergence_residual(const AssembledForms& forms, const Vec& u);

// n x keep.size() selection with 1 at (keep[j], j): congruence helper for
// restricting assembled blocks to sub-spaces.
SpMat selection_matrix(int n, const std::vector<int>& keep);

// Broken (cellwise) H2 seminorm and H1 seminorm of a P2 field; used by the
// mode growth-bound diagnostics.
double broken_h2_seminorm(const DiscreteSpace& space, const Vec& u_re, const Vec& u_im);
double h1_seminorm(const DiscreteSpace& space, const Vec& u_re, const Vec& u_im);

}  // namespace oscilla
