#include <gtest/gtest.h>

#include <cmath>

#include "oscilla/pipeline.hpp"
#include "oscilla/spectral.hpp"

using namespace oscilla;

namespace {

struct SpectralFixture : ::testing::Test {
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

  SpectralFixture()
      : mesh(make_mesh()),
        space(mesh),
        forms(assemble_basic_forms(space)),
        solver(space, forms),
        base(solver.solve(kLambda)),
        A(Eigen::Matrix2d::Identity() * 4.0) {
    Vec dp;
    solver.branch_derivative(base, u0p, dp);
    ops = std::make_unique<CoupledOperators>(space, forms, base, u0p, 1.0, A);
  }

  Mesh mesh;
  DiscreteSpace space;
  AssembledForms forms;
  SteadySolver solver;
  SteadyState base;
  Vec u0p;
  Mat A;
  std::unique_ptr<CoupledOperators> ops;
};

}  // namespace

TEST_F(SpectralFixture, shifted_solver_satisfies_the_constraint_and_duality) {
  Complex s(0.0, 10.0);
  ShiftedSolver fwd(*ops, s), adj(*ops, s, 0.0, /*adjoint=*/true);
  Rng rng(11);
  CVec b = rng.normal_cvec(ops->n()), c = rng.normal_cvec(ops->n());
  CVec x = fwd.apply(b);
  EXPECT_LT((ops->constraint().transpose().cast<Complex>() * x).norm(), 1e-9 * x.norm());

  // Bilinear-duality defining property of the adjoint application:
  // (c, S b)_G = (b, S* c)_G without conjugation.
  Complex lhs = ops->bilinear(c, x);
  Complex rhs = ops->bilinear(b, adj.apply(c));
  EXPECT_LT(std::abs(lhs - rhs), 1e-12 * std::abs(lhs));
}

TEST_F(SpectralFixture, arnoldi_finds_pairs_with_honest_residuals) {
  ArnoldiOptions aopts;
  auto pairs = eigs_near(*ops, Complex(0.0, 10.0), 4, 0.0, aopts);
  ASSERT_GE(pairs.size(), 2u);
  for (const auto& p : pairs) {
    EXPECT_LE(p.residual, aopts.tol);
    double honest = eig_residual(*ops, p.nu, p.vec);
    EXPECT_LT(honest, 50.0 * aopts.tol);
    EXPECT_NEAR(ops->norm(p.vec), 1.0, 1e-8);  // G-normalized
  }
  for (size_t i = 1; i < pairs.size(); ++i)
    EXPECT_GE(std::abs(pairs[i].nu - Complex(0.0, 10.0)),
              std::abs(pairs[i - 1].nu - Complex(0.0, 10.0)) - 1e-12);  // sorted
}

TEST_F(SpectralFixture, polish_tightens_a_perturbed_pair) {
  auto pairs = eigs_near(*ops, Complex(0.0, 10.0), 2);
  ASSERT_FALSE(pairs.empty());
  EigPair rough = pairs[0];
  rough.nu += Complex(1e-4, -1e-4);  // knock the estimate off
  EigPair refined = polish_eig(*ops, rough);
  EXPECT_LT(std::abs(refined.nu - pairs[0].nu), 1e-7 * (1.0 + std::abs(pairs[0].nu)));
  EXPECT_LE(refined.residual, 1e-9);
}

TEST_F(SpectralFixture, axis_sweep_keeps_upper_half_plane_representatives) {
  auto pairs = eigs_near_axis(*ops, 12.0, 4);
  ASSERT_GE(pairs.size(), 3u);
  for (const auto& p : pairs) EXPECT_GE(p.nu.imag(), -1e-8);
  for (size_t i = 0; i < pairs.size(); ++i)
    for (size_t j = i + 1; j < pairs.size(); ++j)
      EXPECT_GT(std::abs(pairs[i].nu - pairs[j].nu), 1e-6);  // deduplicated
}

TEST_F(SpectralFixture, adjoint_pair_normalization_and_simplicity) {
  auto pairs = eigs_near(*ops, Complex(0.0, 10.0), 2);
  ASSERT_FALSE(pairs.empty());
  CVec v = pairs[0].vec;
  CVec y = adjoint_eigvec(*ops, pairs[0].nu);
  normalize_pair(*ops, v, y);
  EXPECT_NEAR(ops->norm(v), 1.0, 1e-12);
  Complex pairing = ops->bilinear(y, v);
  EXPECT_LT(std::abs(pairing - Complex(M_1_PI, 0.0)), 1e-12);
  Eigen::Index imax;
  v.cwiseAbs().maxCoeff(&imax);
  EXPECT_GT(v[imax].real(), 0.0);
  EXPECT_NEAR(v[imax].imag(), 0.0, 1e-12 * std::abs(v[imax]));

  SimplicityReport rep = check_simplicity(*ops, pairs[0], y);
  EXPECT_TRUE(rep.simple);
  EXPECT_EQ(rep.cluster_count, 1);
  EXPECT_GT(rep.pairing, 1e-4);

  Complex slope = eig_lambda_derivative(*ops, v, y);
  EXPECT_TRUE(std::isfinite(slope.real()));
  EXPECT_NE(slope, Complex(0.0, 0.0));
}

TEST_F(SpectralFixture, nonresonance_margins_from_an_explicit_spectrum) {
  std::vector<Complex> spectrum = {{0.5, 3.0}, {0.5, -3.0}, {0.2, 6.001}, {0.2, -6.001}};
  ResonanceReport rep = nonresonance_from_spectrum(spectrum, 3.0, 2, 0.15);
  ASSERT_EQ(rep.k.size(), 2u);
  EXPECT_EQ(rep.k[0], 0);
  EXPECT_EQ(rep.k[1], 2);
  EXPECT_NEAR(rep.margin[0], std::abs(Complex(0.5, 3.0)), 1e-12);
  EXPECT_NEAR(rep.margin[1], std::abs(Complex(0.2, 0.001)), 1e-12);
  EXPECT_NEAR(rep.min_margin, rep.margin[1], 1e-15);
  EXPECT_TRUE(rep.ok);
  EXPECT_FALSE(nonresonance_from_spectrum(spectrum, 3.0, 2, 0.25).ok);
}

TEST_F(SpectralFixture, nonresonance_on_the_coupled_operator) {
  auto pairs = eigs_near(*ops, Complex(0.0, 10.0), 2);
  ASSERT_FALSE(pairs.empty());
  double zeta0 = std::abs(pairs[0].nu.imag());
  ASSERT_GT(zeta0, 1.0);
  ResonanceReport rep = check_nonresonance(*ops, zeta0, 3, 1e-4);
  ASSERT_EQ(rep.k.size(), 3u);  // k = 0, 2, 3
  for (double m : rep.margin) EXPECT_GT(m, 0.0);
  EXPECT_EQ(rep.ok, rep.min_margin > 1e-4);
}

TEST_F(SpectralFixture, crossing_problem_caches_steady_states) {
  FsiCrossingProblem problem(space, forms, 1.0, A, /*fixed_body=*/false);
  const CoupledOperators& o5 = problem.operators_at(5.0);
  EXPECT_DOUBLE_EQ(o5.lambda0(), 5.0);
  int solves_after_first = problem.steady_solves();
  const CoupledOperators& o5b = problem.operators_at(5.0);
  EXPECT_EQ(problem.steady_solves(), solves_after_first);  // cache hit
  EXPECT_DOUBLE_EQ(o5b.lambda0(), 5.0);

  const CoupledOperators& o6 = problem.operators_at(6.0);
  EXPECT_DOUBLE_EQ(o6.lambda0(), 6.0);
  EXPECT_GT(problem.steady_solves(), solves_after_first);  // warm-started solve

  CrossingOptions copts = default_fsi_crossing_options(6.0);
  EXPECT_GT(copts.zeta_scan_max, 6.0);  // covers the shedding band ~0.72 lambda
  EXPECT_GE(copts.n_scan_shifts, 10);
}
