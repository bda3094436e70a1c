#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oscilla/coupled.hpp"
#include "oscilla/fem.hpp"
#include "oscilla/mesh.hpp"
#include "oscilla/operators.hpp"
#include "oscilla/spectral.hpp"
#include "oscilla/steady.hpp"
#include "oscilla/timestepper.hpp"

namespace oscilla {
namespace {

std::vector<double> uniform_times(int n, double dt) {
  std::vector<double> t(n);
  for (int i = 0; i < n; ++i) t[i] = i * dt;
  return t;
}

TEST(observables, sinusoid_with_offset_is_resolved) {
  const double dt = 0.01;
  auto t = uniform_times(4001, dt);
  std::vector<double> probe(t.size());
  for (std::size_t i = 0; i < t.size(); ++i)
    probe[i] = 0.5 + 0.1 * std::sin(2.0 * t[i]);

  Observables obs = measure(t, probe);
  // The plain window average carries an O(amplitude / (omega T)) remainder
  // from the fractional final period.
  EXPECT_NEAR(obs.mean, 0.5, 3e-3);
  EXPECT_NEAR(obs.amplitude, 0.1, 1e-3);
  EXPECT_NEAR(obs.frequency, 2.0, 1e-3);
  EXPECT_NEAR(obs.growth_rate, 0.0, 1e-3);
  EXPECT_GT(obs.n_extrema, 8);
}

TEST(observables, envelope_slope_recovers_the_growth_rate) {
  const double dt = 0.01;
  auto t = uniform_times(4001, dt);
  std::vector<double> probe(t.size());
  // Cosine phase keeps the window mean near zero, so the mean subtraction
  // inside measure() does not pollute the small late extrema.
  for (std::size_t i = 0; i < t.size(); ++i)
    probe[i] = std::exp(-0.05 * t[i]) * std::cos(t[i]);
  Observables decay = measure(t, probe, 1.0);
  EXPECT_NEAR(decay.growth_rate, -0.05, 5e-3);
  EXPECT_NEAR(decay.frequency, 1.0, 0.01);

  for (std::size_t i = 0; i < t.size(); ++i)
    probe[i] = std::exp(0.05 * t[i]) * std::cos(t[i]);
  Observables grow = measure(t, probe, 1.0);
  EXPECT_NEAR(grow.growth_rate, 0.05, 5e-3);
}

TEST(observables, off_grid_frequency_is_refined_below_bin_width) {
  const double dt = 0.05, omega = 2.34;
  std::vector<double> s(1000);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::sin(omega * i * dt);
  // Raw bin width is 2 pi / (N dt) ~ 0.126; the refinement must do far better.
  EXPECT_NEAR(dominant_frequency(s, dt), omega, 5e-4);
}

TEST(observables, input_validation) {
  auto t = uniform_times(100, 0.01);
  std::vector<double> probe(99, 0.0);
  EXPECT_THROW(measure(t, probe), validation_error);
  probe.resize(100, 0.0);
  EXPECT_THROW(measure(t, probe, 0.0), validation_error);
  EXPECT_THROW(measure(t, probe, 1.5), validation_error);
  std::vector<double> short_t(8, 0.0), short_p(8, 0.0);
  EXPECT_THROW(measure(short_t, short_p), validation_error);
  auto jittered = t;
  jittered[50] += 0.004;
  EXPECT_THROW(measure(jittered, probe), validation_error);

  std::vector<double> few(4, 0.0);
  EXPECT_THROW(dominant_frequency(few, 0.01), validation_error);
  std::vector<double> ok(64, 0.0);
  EXPECT_THROW(dominant_frequency(ok, 0.0), validation_error);
}

// Coupled system on a small domain at a stream speed well below the
// instability: all perturbations must decay.
class TimestepperFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    BodyGeometry body;
    body.kind = BodyGeometry::Kind::circle;
    body.diameter = 1.0;
    MeshOptions mops;
    mops.R_trunc = 6.0;
    mops.n_theta = 10;
    mesh_ = new Mesh(build_truncated_domain(body, mops));
    space_ = new DiscreteSpace(*mesh_);
    forms_ = new AssembledForms(assemble_basic_forms(*space_));

    SteadySolver solver(*space_, *forms_);
    SteadyState base = solver.continue_to(12.0);
    Vec u0p, p0p;
    solver.branch_derivative(base, u0p, p0p);
    Mat A(2, 2);
    A << 2.0, 0.3, 0.3, 3.0;
    ops_ = new CoupledOperators(*space_, *forms_, base, u0p, 0.8, A);
  }

  static void TearDownTestSuite() {
    delete ops_;
    delete forms_;
    delete space_;
    delete mesh_;
    ops_ = nullptr;
    forms_ = nullptr;
    space_ = nullptr;
    mesh_ = nullptr;
  }

  // Divergence-free random state of small Gram norm with a body offset.
  static Vec seeded_state(double scale, unsigned seed) {
    Rng rng(seed);
    ShiftedSolver proj(*ops_, Complex(0.3, 0.0));
    CVec y = proj.apply(rng.normal_cvec(ops_->n()));
    Vec x = y.real();
    x *= scale / ops_->norm(x);
    x[ops_->eta_index()] = 2.0 * scale;
    x[ops_->eta_index() + 1] = scale;
    return x;
  }

  static Mesh* mesh_;
  static DiscreteSpace* space_;
  static AssembledForms* forms_;
  static CoupledOperators* ops_;
};

Mesh* TimestepperFixture::mesh_ = nullptr;
DiscreteSpace* TimestepperFixture::space_ = nullptr;
AssembledForms* TimestepperFixture::forms_ = nullptr;
CoupledOperators* TimestepperFixture::ops_ = nullptr;

TEST_F(TimestepperFixture, rest_state_is_a_fixed_point) {
  SimulateOptions opts;
  opts.tfinal = 1.0;
  opts.dt = 0.01;
  Trajectory tr = simulate(*ops_, Vec::Zero(ops_->n()), opts);

  ASSERT_FALSE(tr.t.empty());
  EXPECT_DOUBLE_EQ(tr.t.front(), 0.0);
  EXPECT_NEAR(tr.t.back(), 1.0, 1e-12);
  EXPECT_EQ(tr.t.size(), tr.energy.size());
  EXPECT_EQ(tr.t.size(), tr.eta.size());
  EXPECT_EQ(tr.t.size(), tr.sigma.size());
  EXPECT_EQ(tr.t.size(), tr.force.size());
  EXPECT_EQ(tr.snapshot_t.size(), tr.snapshots.size());
  EXPECT_GT(tr.snapshots.size(), 2u);
  EXPECT_FALSE(tr.blew_up);
  EXPECT_LT(tr.energy.back(), 1e-24);
  EXPECT_LT(tr.max_divergence, 1e-12);
}

TEST_F(TimestepperFixture, subcritical_stream_damps_the_perturbation) {
  SimulateOptions opts;
  opts.tfinal = 8.0;
  opts.dt = 0.02;
  Vec x0 = seeded_state(0.01, 11);
  Trajectory tr = simulate(*ops_, x0, opts);

  EXPECT_FALSE(tr.blew_up);
  EXPECT_LT(tr.max_divergence, 1e-8);
  EXPECT_LT(tr.energy.back(), 0.5 * tr.energy.front());
  // Energy stays bounded by the initial value: the scheme adds no spurious
  // production at a stable stream speed.
  for (double e : tr.energy) EXPECT_LT(e, 2.0 * tr.energy.front());
}

TEST_F(TimestepperFixture, displacement_obeys_the_trapezoid_kinematics) {
  SimulateOptions opts;
  opts.tfinal = 4.0;
  opts.dt = 0.02;
  Trajectory tr = simulate(*ops_, seeded_state(0.01, 23), opts);

  double max_sigma = 0.0;
  for (const auto& s : tr.sigma)
    max_sigma = std::max({max_sigma, std::abs(s[0]), std::abs(s[1])});
  ASSERT_GT(max_sigma, 0.0);

  // The displacement rows are integrated implicitly, so the recorded series
  // satisfies the trapezoid identity to solver roundoff.
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < tr.t.size(); ++i) {
    const double dt = tr.t[i + 1] - tr.t[i];
    for (int c = 0; c < 2; ++c) {
      const double rate = (tr.eta[i + 1][c] - tr.eta[i][c]) / dt;
      worst = std::max(worst,
                       std::abs(rate - 0.5 * (tr.sigma[i][c] + tr.sigma[i + 1][c])));
    }
  }
  EXPECT_LT(worst, 1e-9 * max_sigma);
}

TEST_F(TimestepperFixture, blowup_guard_truncates_the_run) {
  SimulateOptions opts;
  opts.tfinal = 5.0;
  opts.dt = 0.02;
  opts.blowup_norm = 1e-9;
  Trajectory tr = simulate(*ops_, seeded_state(0.01, 31), opts);
  EXPECT_TRUE(tr.blew_up);
  EXPECT_LT(tr.t.back(), 1.0);
}

TEST_F(TimestepperFixture, rejects_malformed_inputs) {
  SimulateOptions opts;
  opts.dt = -0.01;
  EXPECT_THROW(simulate(*ops_, Vec::Zero(ops_->n()), opts), validation_error);
  opts.dt = 0.01;
  opts.tfinal = 0.005;
  EXPECT_THROW(simulate(*ops_, Vec::Zero(ops_->n()), opts), validation_error);
  opts.tfinal = 1.0;
  opts.stride = 0;
  EXPECT_THROW(simulate(*ops_, Vec::Zero(ops_->n()), opts), validation_error);
  opts.stride = 5;
  EXPECT_THROW(simulate(*ops_, Vec::Zero(ops_->n() + 1), opts), validation_error);
}

TEST_F(TimestepperFixture, body_displacement_converges_at_second_order) {
  const double T = 0.4;
  Vec x0 = seeded_state(0.01, 47);

  auto eta_at_T = [&](double dt) {
    SimulateOptions opts;
    opts.tfinal = T;
    opts.dt = dt;
    Trajectory tr = simulate(*ops_, x0, opts);
    return std::array<double, 2>{tr.eta.back()[0], tr.eta.back()[1]};
  };

  auto ref = eta_at_T(T / 320.0);
  std::vector<double> errs;
  for (double dt : {0.02, 0.01, 0.005}) {
    auto e = eta_at_T(dt);
    errs.push_back(std::hypot(e[0] - ref[0], e[1] - ref[1]));
  }
  ASSERT_GT(errs[0], 0.0);
  const double p1 = std::log2(errs[0] / errs[1]);
  const double p2 = std::log2(errs[1] / errs[2]);
  EXPECT_GT(p1, 1.6);
  EXPECT_LT(p1, 2.6);
  EXPECT_GT(p2, 1.6);
  EXPECT_LT(p2, 2.6);
}

}  // namespace
}  // namespace oscilla
