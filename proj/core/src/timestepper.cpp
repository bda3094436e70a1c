#include "oscilla/timestepper.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include "oscilla/operators.hpp"

namespace oscilla {

namespace {

std::array<double, 2> to_array(const Eigen::Vector2d& v) { return {v(0), v(1)}; }

}  // namespace

Trajectory simulate(const CoupledOperators& ops, const Vec& x0, const SimulateOptions& opts) {
  if (!(opts.dt > 0.0)) throw validation_error("simulate: dt must be positive");
  if (!(opts.tfinal > opts.dt)) throw validation_error("simulate: tfinal must exceed dt");
  if (opts.stride < 1) throw validation_error("simulate: stride must be >= 1");
  const int n = ops.n();
  const int np = ops.n_pressure();
  if (x0.size() != n) throw validation_error("simulate: initial state has wrong dimension");

  const SpMat& g = ops.gram();
  const SpMat& l0 = ops.l0();
  const SpMat& c = ops.constraint();
  const double inv_dt = 1.0 / opts.dt;
  const SpMat a11 = inv_dt * g + 0.5 * l0;  // implicit trapezoid block
  const SpMat b11 = inv_dt * g - 0.5 * l0;
  // Explicitly treated linear part: base-flow coupling at the given offset.
  const double mu = opts.mu;
  const SpMat kmu = (ops.l2() - l0) + mu * ops.s011() + (mu * mu) * ops.s2();
  const double lam_tot = ops.lambda0() + mu;

  // Constant saddle operator [[G/dt + L0/2, C], [C^T, 0]], factored once.
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(a11.nonZeros() + 2 * c.nonZeros()));
  for (int col = 0; col < a11.outerSize(); ++col)
    for (SpMat::InnerIterator it(a11, col); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), col, it.value());
  for (int col = 0; col < c.outerSize(); ++col)
    for (SpMat::InnerIterator it(c, col); it; ++it) {
      trips.emplace_back(static_cast<int>(it.row()), n + col, it.value());
      trips.emplace_back(n + col, static_cast<int>(it.row()), it.value());
    }
  SpMat aug(n + np, n + np);
  aug.setFromTriplets(trips.begin(), trips.end());
  Eigen::SparseLU<SpMat> lu;
  lu.compute(aug);
  if (lu.info() != Eigen::Success)
    throw solver_error("simulate: time-step operator factorization failed");

  auto explicit_rhs = [&](const Vec& x) -> Vec {
    return lam_tot * ops.nonlinear_form(x, x) - kmu * x;
  };

  const int nsteps = static_cast<int>(std::llround(opts.tfinal / opts.dt));
  Trajectory traj;
  traj.dt = opts.dt;
  traj.t.reserve(nsteps + 1);

  Vec x = x0;
  auto record = [&](double t, const Vec& state, const Eigen::Vector2d& force) {
    traj.t.push_back(t);
    traj.eta.push_back(to_array(ops.eta_of(state)));
    traj.sigma.push_back(to_array(ops.sigma_of(state)));
    traj.force.push_back(to_array(force));
    traj.energy.push_back(0.5 * ops.norm(state) * ops.norm(state));
  };
  record(0.0, x, Eigen::Vector2d::Zero());
  traj.snapshot_t.push_back(0.0);
  traj.snapshots.push_back(x);

  Vec rhs(n + np), r_prev;
  for (int step = 0; step < nsteps; ++step) {
    const Vec r_now = explicit_rhs(x);
    const Vec r_hat = (step == 0) ? r_now : Vec(1.5 * r_now - 0.5 * r_prev);
    rhs.head(n) = b11 * x + r_hat;
    rhs.tail(np).setZero();
    const Vec sol = lu.solve(rhs);
    if (!sol.allFinite())
      throw solver_error("simulate: non-finite state at t = " + std::to_string((step + 1) * opts.dt));
    const Vec xn = sol.head(n);
    const Vec q = sol.tail(np);
    r_prev = r_now;

    const double t = (step + 1) * opts.dt;
    if (np > 0) {
      const double div = (c.transpose() * xn).cwiseAbs().maxCoeff();
      traj.max_divergence = std::max(traj.max_divergence, div);
    }
    if (ops.norm(xn) > opts.blowup_norm) {
      traj.blew_up = true;
      break;
    }
    const Eigen::Vector2d force = -boundary_traction(ops.space(), ops.to_full(xn), q);
    record(t, xn, force);
    if (traj.force.size() == 2) traj.force[0] = traj.force[1];  // backfill the t=0 probe
    if ((step + 1) % opts.stride == 0 || step + 1 == nsteps) {
      traj.snapshot_t.push_back(t);
      traj.snapshots.push_back(xn);
    }
    x = xn;
  }
  return traj;
}

namespace {

// In-place iterative radix-2 FFT; length must be a power of two.
void fft_pow2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

double hann(std::size_t j, std::size_t m) {
  return 0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(j) / static_cast<double>(m - 1)));
}

// |sum_j w_j s_j exp(-i omega j dt)|^2: continuous spectrum of the windowed
// series, used to sharpen the discrete peak.
double windowed_power(const std::vector<double>& s, double dt, double omega) {
  std::complex<double> acc(0.0, 0.0);
  const std::size_t m = s.size();
  for (std::size_t j = 0; j < m; ++j) {
    const double phase = -omega * static_cast<double>(j) * dt;
    acc += hann(j, m) * s[j] * std::complex<double>(std::cos(phase), std::sin(phase));
  }
  return std::norm(acc);
}

// Offset of the parabola vertex through (-1,pm), (0,p0), (+1,pp), clamped.
double parabolic_offset(double pm, double p0, double pp) {
  const double denom = pm - 2.0 * p0 + pp;
  if (denom == 0.0) return 0.0;
  return std::clamp(0.5 * (pm - pp) / denom, -0.5, 0.5);
}

}  // namespace

double dominant_frequency(const std::vector<double>& samples, double dt) {
  if (!(dt > 0.0)) throw validation_error("dominant_frequency: dt must be positive");
  const std::size_t m = samples.size();
  if (m < 8) throw validation_error("dominant_frequency: need at least 8 samples");
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(m);
  std::vector<double> s(m);
  for (std::size_t j = 0; j < m; ++j) s[j] = samples[j] - mean;

  std::size_t nfft = 1;
  while (nfft < 4 * m) nfft <<= 1;
  std::vector<std::complex<double>> a(nfft, {0.0, 0.0});
  for (std::size_t j = 0; j < m; ++j) a[j] = hann(j, m) * s[j];
  fft_pow2(a);

  std::size_t kbest = 1;
  double pbest = 0.0;
  for (std::size_t k = 1; k + 1 < nfft / 2; ++k) {
    const double p = std::norm(a[k]);
    if (p > pbest) {
      pbest = p;
      kbest = k;
    }
  }
  if (pbest == 0.0) return 0.0;
  const double bin = 2.0 * M_PI / (static_cast<double>(nfft) * dt);
  double omega =
      (static_cast<double>(kbest) +
       parabolic_offset(std::norm(a[kbest - 1]), pbest, std::norm(a[kbest + 1]))) *
      bin;
  for (double h = 0.25 * bin; h > 0.01 * bin; h *= 0.25) {
    const double pm = windowed_power(s, dt, omega - h);
    const double p0 = windowed_power(s, dt, omega);
    const double pp = windowed_power(s, dt, omega + h);
    omega += parabolic_offset(pm, p0, pp) * 2.0 * h;
  }
  return omega;
}

Observables measure(const std::vector<double>& t, const std::vector<double>& probe,
                    double tail_fraction) {
  if (t.size() != probe.size()) throw validation_error("measure: mismatched series lengths");
  if (t.size() < 16) throw validation_error("measure: need at least 16 samples");
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0))
    throw validation_error("measure: tail fraction must lie in (0, 1]");
  const std::size_t m = t.size();
  const std::size_t start = static_cast<std::size_t>(std::floor((1.0 - tail_fraction) * m));
  const std::size_t mt = m - start;
  if (mt < 16) throw validation_error("measure: tail window too short");
  const double dt0 = t[start + 1] - t[start];
  for (std::size_t j = start; j + 1 < m; ++j)
    if (std::abs(t[j + 1] - t[j] - dt0) > 1e-8 * (1.0 + dt0))
      throw validation_error("measure: probe series is not uniformly sampled");

  Observables obs;
  std::vector<double> tail(probe.begin() + static_cast<std::ptrdiff_t>(start), probe.end());
  obs.mean = std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(mt);
  const auto [mn, mx] = std::minmax_element(tail.begin(), tail.end());
  obs.amplitude = 0.5 * (*mx - *mn);
  std::vector<double> centered(mt);
  for (std::size_t j = 0; j < mt; ++j) centered[j] = tail[j] - obs.mean;
  obs.frequency = dominant_frequency(centered, dt0);

  // Envelope slope: least-squares fit of log |extremum| against time.
  std::vector<double> te, le;
  for (std::size_t j = 1; j + 1 < mt; ++j) {
    const double aj = std::abs(centered[j]);
    if (aj >= std::abs(centered[j - 1]) && aj >= std::abs(centered[j + 1]) && aj > 1e-14)
      te.push_back(t[start + j]), le.push_back(std::log(aj));
  }
  obs.n_extrema = static_cast<int>(te.size());
  if (te.size() >= 2) {
    const double n = static_cast<double>(te.size());
    const double st = std::accumulate(te.begin(), te.end(), 0.0);
    const double sl = std::accumulate(le.begin(), le.end(), 0.0);
    double stt = 0.0, stl = 0.0;
    for (std::size_t j = 0; j < te.size(); ++j) {
      stt += te[j] * te[j];
      stl += te[j] * le[j];
    }
    const double denom = n * stt - st * st;
    if (denom > 0.0) obs.growth_rate = (n * stl - st * sl) / denom;
  }
  return obs;
}

}  // namespace oscilla
