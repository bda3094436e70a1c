#include <gtest/gtest.h>

#include <cmath>

#include "oscilla/coupled.hpp"

using namespace oscilla;

namespace {

// Shared expensive setup: tiny exterior mesh, steady state, linearization.
struct CoupledFixture : ::testing::Test {
  static constexpr double kLambda = 20.0;

  static Mesh make_mesh() {
    BodyGeometry g;
    g.kind = BodyGeometry::Kind::circle;
    g.diameter = 1.0;
    MeshOptions o;
    o.R_trunc = 6.0;
    o.n_theta = 10;
    return build_truncated_domain(g, o);
  }

  CoupledFixture()
      : mesh(make_mesh()),
        space(mesh),
        forms(assemble_basic_forms(space)),
        solver(space, forms),
        base(solver.solve(kLambda)),
        A(Eigen::Matrix2d{{2.0, 0.3}, {0.3, 3.0}}) {
    solver.branch_derivative(base, u0p, p0p);
    ops = std::make_unique<CoupledOperators>(space, forms, base, u0p, 0.8, A);
  }

  Mesh mesh;
  DiscreteSpace space;
  AssembledForms forms;
  SteadySolver solver;
  SteadyState base;
  Vec u0p, p0p;
  Mat A;
  std::unique_ptr<CoupledOperators> ops;
};

}  // namespace

TEST_F(CoupledFixture, state_layout) {
  EXPECT_EQ(ops->n(), ops->n_free() + 4);
  EXPECT_EQ(ops->sigma_index(), ops->n_free());
  EXPECT_EQ(ops->eta_index(), ops->n_free() + 2);
  EXPECT_EQ(ops->mean_n(), ops->n_free() + 2 + ops->n_pressure());
  EXPECT_DOUBLE_EQ(ops->lambda0(), kLambda);
  EXPECT_EQ(ops->gram().rows(), ops->n());
  EXPECT_EQ(ops->constraint().rows(), ops->n());
  EXPECT_EQ(ops->constraint().cols(), ops->n_pressure());
}

TEST_F(CoupledFixture, gram_is_symmetric_positive) {
  Rng rng(1);
  SpMat Gt = SpMat(ops->gram().transpose());
  EXPECT_NEAR((ops->gram() - Gt).norm(), 0.0, 1e-13);
  for (int s = 0; s < 5; ++s) {
    Vec x = rng.normal_vec(ops->n());
    EXPECT_GT(x.dot(ops->gram() * x), 0.0);
  }
  // norm/inner consistency on the complex pairing
  CVec z = rng.normal_cvec(ops->n());
  EXPECT_NEAR(ops->norm(z) * ops->norm(z), ops->inner(z, z).real(), 1e-10);
  EXPECT_NEAR(ops->inner(z, z).imag(), 0.0, 1e-12 * ops->inner(z, z).real());
  CVec w = rng.normal_cvec(ops->n());
  EXPECT_NEAR(std::abs(ops->bilinear(z, w) - ops->bilinear(w, z)), 0.0,
              1e-12 * std::abs(ops->bilinear(z, w)));
}

TEST_F(CoupledFixture, stream_energy_identity_isolates_the_dissipation) {
  // Re <L0 x, x> = 2 ||D(w)||^2: transport and spring blocks are energy
  // neutral, only viscosity survives.
  Rng rng(2);
  for (int s = 0; s < 20; ++s) {
    CVec x = rng.normal_cvec(ops->n());
    Vec xr = x.real(), xi = x.imag();
    double lhs = xr.dot(ops->l0() * xr) + xi.dot(ops->l0() * xi);
    double rhs = ops->dissipation(x);
    EXPECT_NEAR(lhs, rhs, 1e-12 * std::abs(rhs));
  }
}

TEST_F(CoupledFixture, dissipation_matrix_agrees_with_the_functional) {
  Rng rng(3);
  CVec x = rng.normal_cvec(ops->n());
  Vec xr = x.real(), xi = x.imag();
  double quad = xr.dot(ops->dissipation_matrix() * xr) + xi.dot(ops->dissipation_matrix() * xi);
  EXPECT_NEAR(quad, ops->dissipation(x), 1e-11 * std::abs(quad));
}

TEST_F(CoupledFixture, l2_expansion_in_mu_is_exact) {
  Rng rng(4);
  Vec x = rng.normal_vec(ops->n());
  for (double mu : {0.0, 0.37, -1.4}) {
    Vec direct = ops->l2_at(mu) * x;
    Vec expanded = ops->l2() * x + mu * (ops->s011() * x) + mu * mu * (ops->s2() * x);
    EXPECT_NEAR((direct - expanded).norm(), 0.0, 1e-12 * (1.0 + expanded.norm()));
  }
}

TEST_F(CoupledFixture, s011_matches_rebuilt_linearization_differences) {
  // Rebuild the linearization at lambda +- h with honest steady re-solves: the
  // finite difference of L2 must match S011 to the base-flow curvature error.
  const double h = 0.25;
  SteadyOptions opts;
  SteadyState hi = solver.solve(kLambda + h, opts, &base);
  SteadyState lo = solver.solve(kLambda - h, opts, &base);
  Vec du_hi, dp_hi, du_lo, dp_lo;
  solver.branch_derivative(hi, du_hi, dp_hi);
  solver.branch_derivative(lo, du_lo, dp_lo);
  CoupledOperators ops_hi(space, forms, hi, du_hi, 0.8, A);
  CoupledOperators ops_lo(space, forms, lo, du_lo, 0.8, A);

  Rng rng(5);
  Vec x = rng.normal_vec(ops->n());
  Vec fd = (ops_hi.l2() * x - ops_lo.l2() * x) / (2.0 * h);
  Vec s011x = ops->s011() * x;
  EXPECT_LT((fd - s011x).norm() / s011x.norm(), 5e-3);
}

TEST_F(CoupledFixture, nonlinear_form_is_bilinear_with_zero_eta_rows) {
  Rng rng(6);
  Vec a = rng.normal_vec(ops->n()), b = rng.normal_vec(ops->n());
  Vec n = ops->nonlinear_form(a, b);
  ASSERT_EQ(n.size(), ops->n());
  EXPECT_DOUBLE_EQ(n[ops->eta_index()], 0.0);
  EXPECT_DOUBLE_EQ(n[ops->eta_index() + 1], 0.0);

  EXPECT_NEAR(ops->nonlinear_form(Vec::Zero(ops->n()), b).norm(), 0.0, 1e-14);
  EXPECT_NEAR(ops->nonlinear_form(a, Vec::Zero(ops->n())).norm(), 0.0, 1e-14);

  Vec sum = ops->nonlinear_form(a, b + 2.0 * a);
  Vec split = ops->nonlinear_form(a, b) + 2.0 * ops->nonlinear_form(a, a);
  EXPECT_NEAR((sum - split).norm(), 0.0, 1e-11 * (1.0 + split.norm()));

  auto batch = ops->nonlinear_form_batch({a, b}, {b, a});
  ASSERT_EQ(batch.size(), 2u);
  EXPECT_NEAR((batch[0] - ops->nonlinear_form(a, b)).norm(), 0.0, 1e-13);
  EXPECT_NEAR((batch[1] - ops->nonlinear_form(b, a)).norm(), 0.0, 1e-13);
}

TEST_F(CoupledFixture, complex_nonlinear_form_expands_bilinearly) {
  Rng rng(7);
  CVec a = rng.normal_cvec(ops->n()), b = rng.normal_cvec(ops->n());
  CVec got = ops->nonlinear_form(a, b);
  Vec rr = ops->nonlinear_form(Vec(a.real()), Vec(b.real()));
  Vec ii = ops->nonlinear_form(Vec(a.imag()), Vec(b.imag()));
  Vec ri = ops->nonlinear_form(Vec(a.real()), Vec(b.imag()));
  Vec ir = ops->nonlinear_form(Vec(a.imag()), Vec(b.real()));
  CVec want = (rr - ii).cast<Complex>() + Complex(0, 1) * (ri + ir).cast<Complex>();
  EXPECT_NEAR((got - want).norm(), 0.0, 1e-11 * (1.0 + want.norm()));
}

TEST_F(CoupledFixture, state_velocity_transfer_round_trips) {
  Rng rng(8);
  Vec x = rng.normal_vec(ops->n());
  Vec full = ops->to_full(x);
  ASSERT_EQ(full.size(), space.n_vdofs());
  Eigen::Vector2d sigma = ops->sigma_of(x);
  for (int v : space.body_vnodes()) {
    EXPECT_DOUBLE_EQ(full[space.vdof(v)], sigma.x());  // trace tied to sigma
    EXPECT_DOUBLE_EQ(full[space.vdof(v) + 1], sigma.y());
  }
  Vec back = ops->from_full(full, sigma, ops->eta_of(x));
  EXPECT_NEAR((back - x).norm(), 0.0, 1e-12 * (1.0 + x.norm()));
}

TEST_F(CoupledFixture, augmented_blocks_are_consistent) {
  EXPECT_EQ(ops->mean_aug(0.0).rows(), ops->mean_n());
  SpCMat osc = ops->osc_aug(2, 1.3, 0.1);
  SpCMat shifted = ops->shifted_aug(Complex(0.0, 2.0 * 1.3), 0.1);
  EXPECT_NEAR((osc - shifted).norm(), 0.0, 1e-13);

  SpMat steady = ops->steady_aug(0.1);
  SpCMat zero_shift = ops->shifted_aug(Complex(0.0, 0.0), 0.1);
  EXPECT_NEAR((zero_shift - steady.cast<Complex>()).norm(), 0.0, 1e-13);
  EXPECT_EQ(steady.rows(), ops->n() + ops->n_pressure());
}

TEST_F(CoupledFixture, fixed_body_variant_shrinks_the_state) {
  CoupledOperators fixed(space, forms, base, u0p, 0.8, A, /*fixed_body=*/true);
  EXPECT_TRUE(fixed.fixed_body());
  EXPECT_EQ(fixed.sigma_index(), -1);
  EXPECT_EQ(fixed.eta_index(), -1);
  EXPECT_LT(fixed.n(), ops->n());
  EXPECT_EQ(fixed.mean_n(), fixed.n_free() + fixed.n_pressure());

  Rng rng(9);
  CVec x = rng.normal_cvec(fixed.n());
  Vec xr = x.real(), xi = x.imag();
  double lhs = xr.dot(fixed.l0() * xr) + xi.dot(fixed.l0() * xi);
  EXPECT_NEAR(lhs, fixed.dissipation(x), 1e-12 * std::abs(lhs));

  Vec full = fixed.to_full(Vec(xr));
  for (int v : space.body_vnodes()) {
    EXPECT_DOUBLE_EQ(full[space.vdof(v)], 0.0);  // clamped trace
    EXPECT_DOUBLE_EQ(full[space.vdof(v) + 1], 0.0);
  }
}
