#pragma once

// Two-step transfer estimator: a penalized fit on the target pooled with a
// known transferable set of sources, followed by a contrast correction
// fitted on the target alone with the pooled estimate as offset.

#include <cstdint>
#include <optional>
#include <vector>

#include "core.hpp"
#include "solver.hpp"

namespace tlqr {

//! Tuning of the two penalized fits. Unset lambdas are chosen by K-fold
//! cross-validation over a log-spaced grid below lambda_max.
struct TransferConfig
{
  SolverConfig solver;
  int cv_folds = 5;
  int grid_size = 50;
  double grid_ratio = 0.01;
  std::uint64_t cv_seed = 0;
};

struct TransferEstimate
{
  CoefVector beta_pooled;
  CoefVector delta;
  CoefVector beta_target; // beta_pooled + delta
  double lambda_beta = 0.0;
  double lambda_delta = 0.0;
  IndexSet transfer_set;
  PenalizedFit pooled_fit;
  PenalizedFit debias_fit;
};

namespace detail {

inline double tune_lambda(const PooledSample& s, QuantileLevel tau,
                          const std::optional<CoefVector>& offset,
                          const TransferConfig& cfg, std::uint64_t seed)
{
  const double top = lambda_max(s, tau, offset);
  if (!(top > 0.0))
    return 0.0;
  const auto grid = lambda_grid(top, cfg.grid_size, cfg.grid_ratio);
  return cross_validate_lambda(s, tau, grid, cfg.cv_folds, seed, cfg.solver,
                               offset)
    .lambda;
}

inline IndexSet with_target(const MultiSourceData& data, const IndexSet& set)
{
  set.check_range(1, data.K(), "source");
  return set.with(0);
}

} // namespace detail

//! Step 1: minimizes L(beta; {0} u T) + lambda_beta |beta|_1.
inline PenalizedFit transfer_step(const MultiSourceData& data,
                                  const IndexSet& transfer_set,
                                  QuantileLevel tau,
                                  std::optional<double> lambda_beta,
                                  const TransferConfig& config)
{
  const PooledSample s = pool(data, detail::with_target(data, transfer_set));
  const double lam = lambda_beta
                       ? *lambda_beta
                       : detail::tune_lambda(s, tau, std::nullopt, config,
                                             config.cv_seed);
  return fit_penalized_qr(s, tau, lam, std::nullopt, config.solver);
}

//! Step 2: minimizes L(beta_pooled + delta; {0}) + lambda_delta |delta|_1.
inline PenalizedFit debias_step(const CoefVector& beta_pooled,
                                const MultiSourceData& data, QuantileLevel tau,
                                std::optional<double> lambda_delta,
                                const TransferConfig& config)
{
  const PooledSample s = pool(data.target());
  detail::check_dims(s, beta_pooled);
  const double lam = lambda_delta
                       ? *lambda_delta
                       : detail::tune_lambda(s, tau, beta_pooled, config,
                                             config.cv_seed + 1);
  return fit_penalized_qr(s, tau, lam, beta_pooled, config.solver);
}

inline TransferEstimate oracle_transfer(const MultiSourceData& data,
                                        const IndexSet& transfer_set,
                                        QuantileLevel tau,
                                        std::optional<double> lambda_beta,
                                        std::optional<double> lambda_delta,
                                        const TransferConfig& config)
{
  TransferEstimate est;
  est.transfer_set = transfer_set;
  est.pooled_fit = transfer_step(data, transfer_set, tau, lambda_beta, config);
  if (transfer_set.empty()) {
    // The pooled fit already is the target fit; there is no contrast.
    est.debias_fit.beta = CoefVector::Zero(data.p());
    est.debias_fit.lambda = lambda_delta.value_or(0.0);
    est.debias_fit.objective = pooled_loss(est.pooled_fit.beta, pool(data.target()), tau);
    est.debias_fit.converged = true;
    est.debias_fit.status = "skipped: empty transfer set";
  } else {
    est.debias_fit =
      debias_step(est.pooled_fit.beta, data, tau, lambda_delta, config);
  }
  est.beta_pooled = est.pooled_fit.beta;
  est.delta = est.debias_fit.beta;
  est.beta_target = est.beta_pooled + est.delta;
  est.lambda_beta = est.pooled_fit.lambda;
  est.lambda_delta = est.debias_fit.lambda;
  return est;
}

} // namespace tlqr
