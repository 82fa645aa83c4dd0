#pragma once

// Data-driven choice of the transferable set: the target is split in two;
// a target-only fit and one transfer fit per source are trained on the first
// half and compared by check loss on the second half.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "core.hpp"
#include "solver.hpp"
#include "transfer.hpp"

namespace tlqr {

struct DetectionConfig
{
  enum class SourceLambda
  {
    cross_validated, // CV on T0 u source k, then on T0 for the correction
    theory           // 4 L sqrt(2 log p / (2 n_k + n0)), L = max |z|
  };

  double epsilon0 = 0.01;
  std::optional<double> lambda_0;          // unset: CV on T0
  std::vector<double> lambda_beta;         // per source; empty: `source_lambda`
  std::vector<double> lambda_delta;        // per source; empty: CV on T0
  SourceLambda source_lambda = SourceLambda::cross_validated;
  bool debias_candidates = true;           // false: candidates skip step 2
  std::uint64_t split_seed = 0;
  TransferConfig transfer;                 // CV settings and solver

  void validate(int K) const
  {
    if (!(epsilon0 >= 0.0))
      throw invalid_input("epsilon0 must be non-negative");
    if (!lambda_beta.empty() && lambda_beta.size() != static_cast<std::size_t>(K))
      throw invalid_input("lambda_beta needs one value per source");
    if (!lambda_delta.empty() && lambda_delta.size() != static_cast<std::size_t>(K))
      throw invalid_input("lambda_delta needs one value per source");
  }
};

struct TargetSplit
{
  IndexSet train;      // T0, size ceil(n0 / 2)
  IndexSet validation; // V0, size floor(n0 / 2)
};

struct DetectionResult
{
  IndexSet selected;
  double baseline_loss = 0.0;
  std::vector<double> source_losses; // entry k - 1 for source k
  TargetSplit split;
  PenalizedFit baseline;
  TransferEstimate final_estimate;
};

inline TargetSplit split_target(Eigen::Index n0, std::uint64_t seed)
{
  if (n0 < 4)
    throw invalid_input("splitting the target needs n0 >= 4");
  std::vector<int> perm(static_cast<std::size_t>(n0));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto half = static_cast<std::size_t>((n0 + 1) / 2);
  return { IndexSet(std::vector<int>(perm.begin(), perm.begin() + static_cast<long>(half))),
           IndexSet(std::vector<int>(perm.begin() + static_cast<long>(half), perm.end())) };
}

//! Mean check loss over the rows V0 of the target.
inline double validation_loss(const CoefVector& beta, const DomainDataset& target,
                              const IndexSet& V0, QuantileLevel tau)
{
  if (V0.empty())
    throw invalid_input("validation set is empty");
  return pooled_loss(beta, pool(target.subset(V0)), tau);
}

//! Target-only penalized fit on the rows T0.
inline PenalizedFit lasso_baseline(const DomainDataset& target,
                                   const IndexSet& T0, QuantileLevel tau,
                                   std::optional<double> lambda_0,
                                   const TransferConfig& config)
{
  const PooledSample s = pool(target.subset(T0));
  const double lam =
    lambda_0 ? *lambda_0
             : detail::tune_lambda(s, tau, std::nullopt, config, config.cv_seed);
  return fit_penalized_qr(s, tau, lam, std::nullopt, config.solver);
}

//! Transfer fit on the training half of the target plus one source.
inline CoefVector per_source_candidate(const DomainDataset& target_T0,
                                       const DomainDataset& source_k,
                                       QuantileLevel tau,
                                       std::optional<double> lambda_beta_k,
                                       std::optional<double> lambda_delta_k,
                                       const TransferConfig& config,
                                       bool debias = true)
{
  const MultiSourceData pair(target_T0, { source_k });
  const PenalizedFit pooled =
    transfer_step(pair, IndexSet{ 1 }, tau, lambda_beta_k, config);
  if (!debias)
    return pooled.beta;
  return pooled.beta +
         debias_step(pooled.beta, pair, tau, lambda_delta_k, config).beta;
}

//! max |z| over the target and source k.
inline double theory_lambda(const DomainDataset& target,
                            const DomainDataset& source)
{
  const double L = std::max(target.Z().cwiseAbs().maxCoeff(),
                            source.Z().cwiseAbs().maxCoeff());
  const double p = static_cast<double>(target.p());
  return 4.0 * L *
         std::sqrt(2.0 * std::log(p) /
                   static_cast<double>(2 * source.n() + target.n()));
}

//! Membership rule applied to stored losses.
inline IndexSet select_sources(const std::vector<double>& source_losses,
                               double baseline_loss, double epsilon0)
{
  std::vector<int> out;
  const double threshold = (1.0 + epsilon0) * baseline_loss;
  for (std::size_t k = 0; k < source_losses.size(); ++k)
    if (source_losses[k] <= threshold)
      out.push_back(static_cast<int>(k) + 1);
  return IndexSet(std::move(out));
}

inline DetectionResult detect(const MultiSourceData& data, QuantileLevel tau,
                              const DetectionConfig& config)
{
  if (data.K() < 1)
    throw invalid_input("detection needs at least one source");
  config.validate(data.K());

  DetectionResult res;
  res.split = split_target(data.target().n(), config.split_seed);
  const DomainDataset t0 = data.target().subset(res.split.train);

  res.baseline = lasso_baseline(data.target(), res.split.train, tau,
                                config.lambda_0, config.transfer);
  res.baseline_loss =
    validation_loss(res.baseline.beta, data.target(), res.split.validation, tau);

  for (int k = 1; k <= data.K(); ++k) {
    const auto ku = static_cast<std::size_t>(k - 1);
    const DomainDataset& src = data.domain(k);
    std::optional<double> lb, ld;
    if (!config.lambda_beta.empty())
      lb = config.lambda_beta[ku];
    else if (config.source_lambda == DetectionConfig::SourceLambda::theory)
      lb = theory_lambda(t0, src);
    if (!config.lambda_delta.empty())
      ld = config.lambda_delta[ku];
    TransferConfig tc = config.transfer;
    tc.cv_seed = config.transfer.cv_seed + 2 * static_cast<std::uint64_t>(k);
    const CoefVector cand = per_source_candidate(t0, src, tau, lb, ld, tc,
                                                 config.debias_candidates);
    res.source_losses.push_back(
      validation_loss(cand, data.target(), res.split.validation, tau));
  }
  res.selected =
    select_sources(res.source_losses, res.baseline_loss, config.epsilon0);
  res.final_estimate = oracle_transfer(data, res.selected, tau, std::nullopt,
                                       std::nullopt, config.transfer);
  return res;
}

} // namespace tlqr
