#pragma once

#include <limits>
#include <map>
#include <memory>

#include "oscilla/spectral.hpp"

namespace oscilla {

// Concrete crossing problem for the discretized fluid--body system: steady
// states are cached per lambda and warm-started from the nearest solved one,
// so the secant iterates of the crossing search cost a few Newton steps each.
// The linearized operators are kept for the most recent lambda only (they
// dominate memory on fine meshes); steady states are kept for all.
class FsiCrossingProblem : public CrossingProblem {
public:
  FsiCrossingProblem(const DiscreteSpace& space, const AssembledForms& forms, double varpi,
                     const Mat& A, bool fixed_body, const SteadyOptions& steady_opts = {});

  const CoupledOperators& operators_at(double lambda) override;
  const SteadyState& steady_at(double lambda);
  int steady_solves() const { return steady_solves_; }

private:
  const DiscreteSpace* space_;
  const AssembledForms* forms_;
  double varpi_;
  Mat A_;
  bool fixed_body_;
  SteadyOptions steady_opts_;
  SteadySolver solver_;
  std::map<double, SteadyState> steady_;
  double ops_lambda_ = std::numeric_limits<double>::quiet_NaN();
  std::unique_ptr<CoupledOperators> ops_;
  int steady_solves_ = 0;
};

// Crossing options tuned for the fluid--body pencil: the shedding frequency
// in viscous time units grows like the transport intensity, so the imaginary
// axis scan has to reach a sizable fraction of lambda_hi.
CrossingOptions default_fsi_crossing_options(double lambda_hi);

}  // namespace oscilla
