#include <gtest/gtest.h>

#include <cmath>
#include <complex>

#include "oscilla/coupled.hpp"
#include "oscilla/fem.hpp"
#include "oscilla/mesh.hpp"
#include "oscilla/operators.hpp"
#include "oscilla/steady.hpp"
#include "oscilla/surrogate.hpp"

namespace oscilla {
namespace {

// Crossing + duality bases for a surrogate, shared by most engine tests.
struct SurrogateRig {
  SurrogateSystem sys;
  DenseCrossing dc;
  OscBasis basis;

  explicit SurrogateRig(SurrogateSystem s, double lo = -0.5, double hi = 0.5)
      : sys(std::move(s)),
        dc(find_crossing_dense(sys, lo, hi)),
        basis(build_bases(sys, dc.v0, dc.y0, dc.zeta0, dc.lambda_c)) {}
};

BranchOptions quiet_opts() {
  BranchOptions opts;
  opts.kmax = 4;  // the cubic normal forms excite k = 1 and k = 3 only
  return opts;
}

TEST(hopf_basis, duality_relations_hold_on_normal_form) {
  SurrogateRig rig(make_normal_form(+1));
  EXPECT_NEAR(rig.basis.zeta0, 1.0, 1e-10);
  EXPECT_NEAR(rig.basis.lambda0, 0.0, 1e-10);

  const auto err = biorthogonality_errors(rig.sys, rig.basis);
  for (double e : err) EXPECT_LT(e, 1e-12);

  // Joint normalization: |v0|_G = 1 and y0^T G v0 = 1/pi.
  EXPECT_NEAR(rig.basis.v0.norm(), 1.0, 1e-12);
  const Complex pairing = rig.basis.y0.transpose() * rig.basis.v0;
  EXPECT_NEAR(pairing.real(), 1.0 / M_PI, 1e-12);
  EXPECT_NEAR(pairing.imag(), 0.0, 1e-12);
}

TEST(hopf_basis, sampled_components_match_complex_mode) {
  SurrogateRig rig(make_normal_form(-1));
  const OscBasis& b = rig.basis;
  for (double tau : {0.0, 0.7, 2.9}) {
    const Complex ph = std::exp(Complex(0.0, -tau));
    CVec ve = ph * b.v0;
    EXPECT_LT((b.v1_at(tau) - ve.real()).norm(), 1e-14);
    EXPECT_LT((b.v2_at(tau) + ve.imag()).norm(), 1e-14);
    CVec ye = std::exp(Complex(0.0, tau)) * b.y0;
    EXPECT_LT((b.adj1_at(tau) - ye.real()).norm(), 1e-14);
    EXPECT_LT((b.adj2_at(tau) - ye.imag()).norm(), 1e-14);
    // d(v1)/dtau finite difference.
    const double h = 1e-6;
    Vec fd = (b.v1_at(tau + h) - b.v1_at(tau - h)) / (2 * h);
    EXPECT_LT((b.v1_tau_at(tau) - fd).norm(), 1e-8);
  }
}

TEST(hopf_engine, branch_point_reproduces_cubic_law) {
  SurrogateRig rig(make_normal_form(+1));
  const double eps = 0.05;
  PeriodicBranchPoint pt = newton_branch_point(rig.sys, rig.basis, eps, nullptr,
                                               quiet_opts());
  // mu(eps) = eps^2 and zeta(eps) = 1 exactly for this cubic.
  EXPECT_NEAR(pt.mu, eps * eps, 1e-10);
  EXPECT_NEAR(pt.zeta, 1.0, 1e-10);
  EXPECT_LE(pt.newton_iters, 3);
  EXPECT_LT(pt.residual, 1e-9);

  // The side condition pins the duality amplitude to eps itself.
  EXPECT_NEAR(pt.amplitude, eps, 1e-12);
  const Complex amp = branch_amplitude(rig.sys, rig.basis, pt);
  EXPECT_NEAR(amp.real(), eps, 1e-10);
  EXPECT_NEAR(amp.imag(), 0.0, 1e-10);
  // Circular loop of unit-Gram mode: rms Gram amplitude eps / sqrt(2).
  EXPECT_NEAR(pt.amplitude_l2, eps / std::sqrt(2.0), 1e-10);

  // Rotation invariance keeps the loop circular: no even harmonics.
  ASSERT_GE(pt.w_hat.size(), 2u);
  EXPECT_LT(pt.w_hat[1].norm(), 1e-10);
}

TEST(hopf_engine, branch_points_are_even_in_eps) {
  SurrogateRig rig(make_normal_form(+1));
  PeriodicBranchPoint plus = newton_branch_point(rig.sys, rig.basis, 0.05, nullptr,
                                                 quiet_opts());
  PeriodicBranchPoint minus = newton_branch_point(rig.sys, rig.basis, -0.05, nullptr,
                                                  quiet_opts());
  EXPECT_NEAR(plus.mu, minus.mu, 1e-8);
  EXPECT_NEAR(plus.zeta, minus.zeta, 1e-8);
  EXPECT_NEAR(minus.amplitude, -0.05, 1e-12);
}

void check_classification(int sign, const char* expected) {
  SurrogateRig rig(make_normal_form(sign));
  BranchResult br = continue_branch(rig.sys, rig.basis, make_eps_grid(0.2, 9),
                                    quiet_opts());
  EXPECT_TRUE(br.warnings.empty());
  ASSERT_EQ(br.points.size(), 9u);
  for (std::size_t i = 1; i < br.points.size(); ++i)
    EXPECT_LT(br.points[i - 1].eps, br.points[i].eps);

  CriticalityFit fit = classify_criticality(br.points);
  EXPECT_EQ(fit.classification, expected);
  EXPECT_NEAR(fit.mu1, double(sign), 1e-8);
  EXPECT_NEAR(fit.mu2, 0.0, 1e-6);
  EXPECT_NEAR(fit.zeta0_fit, 1.0, 1e-10);
  EXPECT_NEAR(fit.zeta2, 0.0, 1e-8);
  EXPECT_LT(fit.fit_residual, 1e-10);
}

TEST(hopf_engine, supercritical_branch_classified) {
  check_classification(+1, "supercritical");
}

TEST(hopf_engine, subcritical_branch_classified) {
  check_classification(-1, "subcritical");
}

TEST(hopf_engine, rotational_cubic_is_degenerate_with_frequency_shift) {
  SurrogateRig rig(make_degenerate_normal_form());
  BranchResult br = continue_branch(rig.sys, rig.basis, make_eps_grid(0.2, 9),
                                    quiet_opts());
  ASSERT_EQ(br.points.size(), 9u);
  for (const PeriodicBranchPoint& pt : br.points) {
    EXPECT_NEAR(pt.mu, 0.0, 1e-9);
    EXPECT_NEAR(pt.zeta, 1.0 + pt.eps * pt.eps, 1e-9);
  }
  CriticalityFit fit = classify_criticality(br.points);
  EXPECT_EQ(fit.classification, "degenerate");
  EXPECT_LE(std::abs(fit.mu1), fit.noise_floor);
  EXPECT_NEAR(fit.zeta2, 1.0, 1e-8);
}

TEST(hopf_engine, warm_started_continuation_matches_cold_solves) {
  SurrogateRig rig(make_normal_form(+1));
  BranchResult br = continue_branch(rig.sys, rig.basis, {0.05, 0.1, 0.15},
                                    quiet_opts());
  ASSERT_EQ(br.points.size(), 3u);
  PeriodicBranchPoint cold = newton_branch_point(rig.sys, rig.basis, 0.15, nullptr,
                                                 quiet_opts());
  EXPECT_NEAR(br.points[2].mu, cold.mu, 1e-10);
  EXPECT_NEAR(br.points[2].zeta, cold.zeta, 1e-10);
}

TEST(hopf_engine, phase_shift_rotates_the_loop) {
  SurrogateRig rig(make_normal_form(+1));
  PeriodicBranchPoint pt = newton_branch_point(rig.sys, rig.basis, 0.1, nullptr,
                                               quiet_opts());
  const double theta = 0.7;
  PeriodicBranchPoint shifted = phase_shift(pt, theta);
  for (double tau : {0.0, 1.3, 4.0}) {
    Vec a = branch_state_at(shifted, tau);
    Vec b = branch_state_at(pt, tau + theta);
    EXPECT_LT((a - b).norm(), 1e-12);
  }
  // The gauge moves the amplitude phase, not its modulus.
  const Complex amp = branch_amplitude(rig.sys, rig.basis, shifted);
  EXPECT_NEAR(std::abs(amp), 0.1, 1e-10);
  EXPECT_NEAR(std::arg(amp), -theta, 1e-8);
}

TEST(hopf_engine, loop_samples_obey_stored_reconstruction) {
  SurrogateRig rig(make_normal_form(+1));
  PeriodicBranchPoint pt = newton_branch_point(rig.sys, rig.basis, 0.1, nullptr,
                                               quiet_opts());
  const double tau = 0.9;
  Vec x = pt.v;
  for (std::size_t k = 0; k < pt.w_hat.size(); ++k) {
    const Complex ph = std::exp(Complex(0.0, double(k + 1) * tau));
    x += 2.0 * (CVec(ph * pt.w_hat[k])).real();
  }
  EXPECT_LT((branch_state_at(pt, tau) - x).norm(), 1e-13);
}

TEST(hopf_engine, suggested_amplitude_accepts_exact_seed) {
  SurrogateRig rig(make_normal_form(+1));
  const double eps = suggest_epsilon_max(rig.sys, rig.basis, 0.1, quiet_opts());
  EXPECT_GT(eps, 0.0);
  EXPECT_LE(eps, 0.1 + 1e-15);
}

TEST(hopf_engine, eps_grid_is_symmetric_and_validated) {
  std::vector<double> grid = make_eps_grid(0.3, 7);
  ASSERT_EQ(grid.size(), 7u);
  EXPECT_DOUBLE_EQ(grid.front(), -0.3);
  EXPECT_DOUBLE_EQ(grid.back(), 0.3);
  EXPECT_DOUBLE_EQ(grid[3], 0.0);
  for (int i = 1; i < 7; ++i) EXPECT_GT(grid[i], grid[i - 1]);
  EXPECT_THROW(make_eps_grid(0.3, 1), validation_error);
  EXPECT_THROW(make_eps_grid(-0.1, 5), validation_error);
  EXPECT_THROW(make_eps_grid(0.0, 5), validation_error);
}

TEST(hopf_engine, fourier_projection_of_nonlinearity_matches_quadrature) {
  SurrogateSystem sys = make_normal_form(+1);
  Vec v(2);
  v << 0.02, -0.01;
  std::vector<CVec> w(1);
  w[0] = CVec(2);
  w[0] << Complex(0.3, -0.1), Complex(0.05, 0.2);
  const double mu = 0.13;

  auto [n1, n2] = evaluate_N(sys, v, w, mu);
  ASSERT_GE(n2.size(), 3u);

  // Dense trapezoid oracle on the same loop, well past the cubic bandwidth.
  const int nq = 256;
  Vec m1 = Vec::Zero(2);
  std::vector<CVec> m2(n2.size(), CVec::Zero(2));
  std::vector<Vec> xs(nq), ns;
  for (int j = 0; j < nq; ++j) {
    const double tau = 2.0 * M_PI * j / nq;
    xs[j] = v + 2.0 * (CVec(std::exp(Complex(0.0, tau)) * w[0])).real();
  }
  sys.nonlinear(xs, mu, ns);
  for (int j = 0; j < nq; ++j) {
    const double tau = 2.0 * M_PI * j / nq;
    m1 += ns[j] / nq;
    for (std::size_t k = 0; k < m2.size(); ++k)
      m2[k] += std::exp(Complex(0.0, -double(k + 1) * tau)) * ns[j] / double(nq);
  }
  EXPECT_LT((n1 - m1).norm(), 1e-13);
  for (std::size_t k = 0; k < m2.size(); ++k)
    EXPECT_LT((n2[k] - m2[k]).norm(), 1e-13);
}

TEST(hopf_guard, flags_spectra_without_neutral_oscillatory_mode) {
  std::vector<Complex> touching = {Complex(0.3, 1.0), Complex(0.3, -1.0),
                                   Complex(1e-9, 2.5), Complex(1e-9, -2.5)};
  GuardReport pass = necessary_guard(touching);
  EXPECT_TRUE(pass.pass);
  EXPECT_NEAR(pass.min_abs_re, 1e-9, 1e-15);
  EXPECT_NEAR(pass.zeta_at_min, 2.5, 1e-12);
  EXPECT_NE(pass.message.find("necessary"), std::string::npos);

  // A real eigenvalue at the axis is not an oscillatory crossing.
  std::vector<Complex> real_only = {Complex(0.3, 1.0), Complex(1e-12, 0.0)};
  GuardReport fail = necessary_guard(real_only);
  EXPECT_FALSE(fail.pass);
  EXPECT_NEAR(fail.min_abs_re, 0.3, 1e-12);

  GuardReport empty = necessary_guard({Complex(0.5, 0.0)});
  EXPECT_FALSE(empty.pass);
  EXPECT_NE(empty.message.find("no oscillatory"), std::string::npos);
}

TEST(hopf_fit, quartic_synthetic_coefficients_recovered) {
  std::vector<PeriodicBranchPoint> pts;
  for (double eps : make_eps_grid(0.2, 8)) {
    PeriodicBranchPoint p;
    p.eps = eps;
    const double e2 = eps * eps;
    p.mu = 3.0 * e2 - 2.0 * e2 * e2;
    p.zeta = 1.0 + 0.5 * e2;
    pts.push_back(p);
  }
  CriticalityFit fit = classify_criticality(pts);
  EXPECT_EQ(fit.classification, "supercritical");
  EXPECT_NEAR(fit.mu1, 3.0, 1e-10);
  EXPECT_NEAR(fit.mu2, -2.0, 1e-8);
  EXPECT_NEAR(fit.zeta0_fit, 1.0, 1e-12);
  EXPECT_NEAR(fit.zeta2, 0.5, 1e-10);
  EXPECT_LT(fit.fit_residual, 1e-12);

  pts.resize(3);
  EXPECT_THROW(classify_criticality(pts), validation_error);
}

// The flow-coupled realization of the engine interface must agree with the
// underlying operator family it wraps.
TEST(hopf_fsi_system, interface_matches_coupled_operators) {
  BodyGeometry body;
  body.kind = BodyGeometry::Kind::circle;
  body.diameter = 1.0;
  MeshOptions mops;
  mops.R_trunc = 6.0;
  mops.n_theta = 10;
  Mesh mesh = build_truncated_domain(body, mops);
  DiscreteSpace space(mesh);
  AssembledForms forms = assemble_basic_forms(space);

  SteadySolver solver(space, forms);
  SteadyState base = solver.continue_to(12.0);
  Vec u0p, p0p;
  solver.branch_derivative(base, u0p, p0p);
  Mat A(2, 2);
  A << 2.0, 0.3, 0.3, 3.0;
  CoupledOperators ops(space, forms, base, u0p, 0.8, A);
  FsiSystem sys(ops);

  EXPECT_EQ(sys.state_dim(), ops.n());
  EXPECT_EQ(sys.multiplier_dim(), ops.n_pressure());
  EXPECT_EQ(sys.mean_dim(), ops.mean_n() - ops.n_pressure());
  EXPECT_EQ(sys.nonlinear_degree(), 2);

  Rng rng(31);
  Vec x = rng.normal_vec(ops.n());

  // Gram and linear blocks delegate directly.
  EXPECT_LT((sys.gram(x) - ops.gram() * x).norm(), 1e-14);
  SpMat mean_direct = ops.mean_aug(0.2);
  EXPECT_LT((sys.mean_matrix(0.2) - mean_direct).norm(), 1e-14);
  SpCMat osc_direct = ops.osc_aug(2, 1.1, 0.2);
  EXPECT_LT((sys.osc_matrix(2, 1.1, 0.2) - osc_direct).norm(), 1e-14);

  // Quadratic term carries the total transport intensity lambda0 + mu.
  const double mu = 0.4;
  std::vector<Vec> xs = {x}, out;
  sys.nonlinear(xs, mu, out);
  Vec expect = (ops.lambda0() + mu) * ops.nonlinear_form(x, x);
  EXPECT_LT((out[0] - expect).norm() / expect.norm(), 1e-13);

  Vec dx = rng.normal_vec(ops.n());
  std::vector<Vec> dxs = {dx}, jout;
  sys.nonlinear_jacobian(xs, dxs, mu, jout);
  Vec jexpect = (ops.lambda0() + mu) *
                (ops.nonlinear_form(x, dx) + ops.nonlinear_form(dx, x));
  EXPECT_LT((jout[0] - jexpect).norm() / jexpect.norm(), 1e-13);

  std::vector<Vec> dmu_out;
  sys.nonlinear_dmu(xs, mu, dmu_out);
  Vec nexpect = ops.nonlinear_form(x, x);
  EXPECT_LT((dmu_out[0] - nexpect).norm() / nexpect.norm(), 1e-13);

  // Mean-coordinate embedding is a section of the coordinate projection.
  Vec vm = rng.normal_vec(sys.mean_dim());
  Vec lifted = sys.mean_to_state(vm);
  EXPECT_LT((sys.mean_coords_of(lifted) - vm).norm(), 1e-13);

  // Multiplier recovery: the least-squares multiplier canceling the given
  // residual rows, so rows = C q are annihilated by -q.
  CVec q = rng.normal_cvec(ops.n_pressure());
  CVec rows = ops.constraint() * q;
  CVec qhat = sys.multiplier_for(rows);
  EXPECT_LT((qhat + q).norm() / q.norm(), 1e-10);
}

}  // namespace
}  // namespace oscilla
