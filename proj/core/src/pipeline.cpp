#include "oscilla/pipeline.hpp"

#include <cmath>

namespace oscilla {

FsiCrossingProblem::FsiCrossingProblem(const DiscreteSpace& space, const AssembledForms& forms,
                                       double varpi, const Mat& A, bool fixed_body,
                                       const SteadyOptions& steady_opts)
    : space_(&space),
      forms_(&forms),
      varpi_(varpi),
      A_(A),
      fixed_body_(fixed_body),
      steady_opts_(steady_opts),
      solver_(space, forms) {}

const SteadyState& FsiCrossingProblem::steady_at(double lambda) {
  auto it = steady_.find(lambda);
  if (it != steady_.end()) return it->second;

  const SteadyState* nearest = nullptr;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [lam, st] : steady_) {
    const double d = std::abs(lam - lambda);
    if (d < best) {
      best = d;
      nearest = &st;
    }
  }

  SteadyState st;
  if (!nearest) {
    st = solver_.continue_to(lambda, steady_opts_);
    steady_solves_ += st.continuation_steps;
  } else {
    try {
      st = solver_.solve(lambda, steady_opts_, nearest);
      ++steady_solves_;
    } catch (const solver_error&) {
      // Too far for one warm step: walk over in halves.
      SteadyState cur = *nearest;
      double lam = cur.lambda;
      double step = lambda - lam;
      while (std::abs(lambda - cur.lambda) > 1e-14 * (1.0 + std::abs(lambda))) {
        const double target = (std::abs(step) > std::abs(lambda - cur.lambda))
                                  ? lambda
                                  : cur.lambda + step;
        try {
          cur = solver_.solve(target, steady_opts_, &cur);
          ++steady_solves_;
          step = lambda - cur.lambda;
        } catch (const solver_error&) {
          step *= 0.5;
          if (std::abs(step) < 1e-8 * (1.0 + std::abs(lambda)))
            throw solver_error("crossing: steady walk stalled");
        }
      }
      st = cur;
    }
  }
  return steady_.emplace(lambda, std::move(st)).first->second;
}

const CoupledOperators& FsiCrossingProblem::operators_at(double lambda) {
  if (ops_ && ops_lambda_ == lambda) return *ops_;
  const SteadyState& st = steady_at(lambda);
  Vec du, dp;
  solver_.branch_derivative(st, du, dp);
  ops_ = std::make_unique<CoupledOperators>(*space_, *forms_, st, du, varpi_, A_, fixed_body_);
  ops_lambda_ = lambda;
  return *ops_;
}

CrossingOptions default_fsi_crossing_options(double lambda_hi) {
  CrossingOptions opts;
  // Shedding sits near 2 pi St lambda with St ~ 0.11-0.12; cover generously.
  opts.zeta_scan_max = 1.1 * lambda_hi;
  opts.n_scan_shifts = 14;
  return opts;
}

}  // namespace oscilla
