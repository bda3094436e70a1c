#include <gtest/gtest.h>

#include <cmath>

#include "oscilla/steady.hpp"

using namespace oscilla;

namespace {

struct SteadyFixture : ::testing::Test {
  static Mesh make_mesh() {
    BodyGeometry g;
    g.kind = BodyGeometry::Kind::circle;
    g.diameter = 1.0;
    MeshOptions o;
    o.R_trunc = 6.0;
    o.n_theta = 12;
    return build_truncated_domain(g, o);
  }

  SteadyFixture()
      : mesh(make_mesh()),
        space(mesh),
        forms(assemble_basic_forms(space)),
        solver(space, forms) {}

  Mesh mesh;
  DiscreteSpace space;
  AssembledForms forms;
  SteadySolver solver;
};

}  // namespace

TEST_F(SteadyFixture, stokes_regime_baseline) {
  SteadyOptions opts;
  SteadyState st = solver.solve(0.5, opts);
  EXPECT_LT(st.residual, opts.tol);
  EXPECT_LT(st.newton_iters, 6);  // nearly linear problem
  EXPECT_LT(st.traction.x(), 0.0);              // drag pushes the body downstream
  EXPECT_NEAR(st.traction.y(), 0.0, 1e-9);      // mirror symmetry kills lift
  EXPECT_LT(solver.continuity_residual(st.u), 1e-9);
  for (int v : space.body_vnodes()) {
    EXPECT_DOUBLE_EQ(st.u[space.vdof(v)], 1.0);  // body trace e1
    EXPECT_DOUBLE_EQ(st.u[space.vdof(v) + 1], 0.0);
  }
}

TEST_F(SteadyFixture, from_scratch_solves_across_the_moderate_range) {
  // Regression guard: these stream speeds once stalled under the
  // boundary-flux-free transport variant.
  for (double lambda : {5.5, 8.0, 20.0}) {
    SteadyState st = solver.solve(lambda, SteadyOptions{});
    EXPECT_LT(st.residual, 1e-11) << "lambda=" << lambda;
    EXPECT_LT(st.newton_iters, 10);
  }
}

TEST_F(SteadyFixture, warm_start_cuts_newton_iterations) {
  SteadyOptions opts;
  SteadyState cold = solver.solve(12.0, opts);
  SteadyState nearby = solver.solve(11.5, opts);
  SteadyState warm = solver.solve(12.0, opts, &nearby);
  EXPECT_LE(warm.newton_iters, cold.newton_iters);
  EXPECT_LT(warm.newton_iters, 5);
  EXPECT_NEAR((warm.u - cold.u).norm(), 0.0, 1e-7 * cold.u.norm());
}

TEST_F(SteadyFixture, continuation_reaches_the_target) {
  SteadyOptions opts;
  SteadyState st = solver.continue_to(30.0, opts);
  EXPECT_DOUBLE_EQ(st.lambda, 30.0);
  EXPECT_LT(st.residual, opts.tol);
  EXPECT_GE(st.continuation_steps, 1);
  EXPECT_LT(st.traction.x(), 0.0);

  // Raw drag magnitude grows with the stream speed in viscous scaling.
  SteadyState lo = solver.solve(10.0, opts);
  EXPECT_GT(-st.traction.x(), -lo.traction.x());

  // Drag coefficient c_D = -2 F_x / lambda in the expected bluff-body range
  // (coarse truncated mesh: generous bounds).
  double cd = -2.0 * st.traction.x() / st.lambda;
  EXPECT_GT(cd, 0.8);
  EXPECT_LT(cd, 3.0);
}

TEST_F(SteadyFixture, momentum_residual_body_rows_carry_the_traction) {
  SteadyState st = solver.solve(15.0, SteadyOptions{});
  Vec r = solver.momentum_residual(st.lambda, st.u, st.p);
  // Free rows vanish at convergence; the rigid-tested sum of the body rows is
  // the force on the fluid = -traction.
  Vec r_free(solver.free_dofs().size());
  for (size_t i = 0; i < solver.free_dofs().size(); ++i) r_free[i] = r[solver.free_dofs()[i]];
  EXPECT_LT(r_free.norm(), 1e-10);
  Eigen::Vector2d on_fluid = traction_from_residual(space, r);
  EXPECT_NEAR((on_fluid + st.traction).norm(), 0.0, 1e-10 * (1.0 + st.traction.norm()));
}

TEST_F(SteadyFixture, residual_based_traction_tracks_the_facet_quadrature_value) {
  SteadyState st = solver.continue_to(20.0, SteadyOptions{});
  // Fluid-outward orientation: the negative of the force on the body. The
  // facet-quadrature evaluation converges slower; on this coarse mesh the two
  // agree to a few percent.
  Eigen::Vector2d direct = boundary_traction(space, st.u, st.p);
  EXPECT_GT(direct.x(), 0.0);
  EXPECT_NEAR(direct.x() / (-st.traction.x()), 1.0, 0.15);
  EXPECT_NEAR(direct.y() + st.traction.y(), 0.0, 0.15 * std::abs(direct.x()));
}

TEST_F(SteadyFixture, branch_derivative_matches_finite_differences) {
  SteadyOptions opts;
  SteadyState st = solver.solve(10.0, opts);
  Vec du, dp;
  solver.branch_derivative(st, du, dp);
  for (int v : space.body_vnodes()) {
    EXPECT_DOUBLE_EQ(du[space.vdof(v)], 0.0);  // trace is lambda-independent
    EXPECT_DOUBLE_EQ(du[space.vdof(v) + 1], 0.0);
  }
  const double h = 0.2;
  SteadyState hi = solver.solve(10.0 + h, opts, &st);
  SteadyState lo = solver.solve(10.0 - h, opts, &st);
  Vec fd = (hi.u - lo.u) / (2.0 * h);
  EXPECT_LT((du - fd).norm() / fd.norm(), 5e-3);
}

TEST_F(SteadyFixture, equilibrium_displacement_formula) {
  Mat A = Eigen::Matrix2d{{2.0, 0.0}, {0.0, 4.0}};
  Eigen::Vector2d chi = equilibrium_displacement({-2.0, 0.5}, 0.5, A);
  EXPECT_DOUBLE_EQ(chi.x(), -0.5);     // varpi A^{-1} F
  EXPECT_DOUBLE_EQ(chi.y(), 0.0625);
}

TEST_F(SteadyFixture, failure_modes_throw_typed_errors) {
  SteadyOptions opts;
  opts.max_newton = 1;
  EXPECT_THROW(solver.solve(30.0, opts), solver_error);
  EXPECT_THROW(solver.continue_to(-3.0, SteadyOptions{}), validation_error);
}
