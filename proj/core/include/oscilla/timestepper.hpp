#pragma once

#include <array>
#include <vector>

#include "oscilla/coupled.hpp"

namespace oscilla {

// Second-order semi-implicit integration of the coupled perturbation system
//   G xdot + L2(mu) x + C q = N(x),   C^T x = 0,
// splitting L2(mu) = L0 + Kmu: the stream-transport/viscous/spring block L0
// and the incompressibility constraint are treated by the trapezoid rule with
// one factorization of the constant saddle operator, while the base-flow
// coupling Kmu and the quadratic term are extrapolated explicitly
// (Adams-Bashforth 2, plain Euler on the first step).
struct SimulateOptions {
  double tfinal = 100.0;
  double dt = 2e-2;
  double mu = 0.0;          // control-parameter offset from the base state
  int stride = 5;           // full-state snapshot decimation
  double blowup_norm = 1e6; // Gram norm that truncates the run
  int verbose = 0;
};

// Probes are recorded at every accepted step. The body force uses the
// pressure multiplier of the step that produced the state, which lives at the
// step midpoint: an O(dt) offset that only affects this probe.
struct Trajectory {
  std::vector<double> t;
  std::vector<std::array<double, 2>> eta, sigma, force;  // force on the body
  std::vector<double> energy;                            // (1/2) x^T G x
  std::vector<double> snapshot_t;
  std::vector<Vec> snapshots;  // full coupled states every `stride` steps
  double dt = 0.0;
  double max_divergence = 0.0;  // max over steps of |C^T x|_inf
  bool blew_up = false;         // run truncated at the blowup norm
};

Trajectory simulate(const CoupledOperators& ops, const Vec& x0, const SimulateOptions& opts);

// Scalar-probe observables over the trailing window of a trajectory.
struct Observables {
  double mean = 0.0;
  double amplitude = 0.0;    // half peak-to-peak
  double frequency = 0.0;    // dominant angular frequency
  double growth_rate = 0.0;  // log-magnitude slope of the envelope
  int n_extrema = 0;
};
Observables measure(const std::vector<double>& t, const std::vector<double>& probe,
                    double tail_fraction = 0.5);

// Dominant angular frequency of a uniform series: Hann-windowed zero-padded
// power spectrum peak, sharpened by two parabolic refinements of the
// continuous windowed transform.
double dominant_frequency(const std::vector<double>& samples, double dt);

}  // namespace oscilla
