#include <random>

#include <gtest/gtest.h>

#include <tlqr/simgen.hpp>
#include <tlqr/transfer.hpp>

#include "support.hpp"

using namespace tlqr;

namespace {

MultiSourceData small_data(std::uint64_t seed, int K = 2)
{
  std::mt19937_64 rng(seed);
  std::vector<DomainDataset> src;
  for (int k = 0; k < K; ++k)
    src.push_back(fixture::linear_domain(12, 4, 2, 1.0, rng));
  return MultiSourceData(fixture::linear_domain(15, 4, 2, 1.0, rng), src);
}

} // namespace

TEST(TransferStep, EmptySetIsTargetFit)
{
  const MultiSourceData data = small_data(1);
  const QuantileLevel tau(0.5);
  const PenalizedFit a = transfer_step(data, IndexSet{}, tau, 0.05, {});
  const PenalizedFit b = fit_penalized_qr(pool(data.target()), tau, 0.05, {}, {});
  EXPECT_EQ(a.beta, b.beta);
}

TEST(TransferStep, CopiesOfTargetChangeNothing)
{
  const MultiSourceData base = small_data(2);
  const MultiSourceData copies(base.target(), { base.target(), base.target() });
  const QuantileLevel tau(0.4);
  const PenalizedFit a = transfer_step(copies, IndexSet{ 1, 2 }, tau, 0.05, {});
  const PenalizedFit b = transfer_step(base, IndexSet{}, tau, 0.05, {});
  EXPECT_NEAR(a.objective, b.objective, 1e-10);
  EXPECT_LT((a.beta - b.beta).norm(), 1e-8);
}

TEST(TransferStep, MatchesLpOracleOnPooledSample)
{
  const MultiSourceData data = small_data(3);
  const QuantileLevel tau(0.5);
  const PenalizedFit f = transfer_step(data, IndexSet{ 1, 2 }, tau, 0.05, {});
  const PenalizedFit lp = lp_oracle_fit(data, IndexSet{ 0, 1, 2 }, tau, 0.05);
  EXPECT_NEAR(f.objective, lp.objective, 1e-6);
}

TEST(TransferStep, RejectsOutOfRangeSource)
{
  const MultiSourceData data = small_data(4);
  EXPECT_THROW(transfer_step(data, IndexSet{ 3 }, QuantileLevel(0.5), 0.1, {}), invalid_input);
  EXPECT_THROW(transfer_step(data, IndexSet{ 0 }, QuantileLevel(0.5), 0.1, {}), invalid_input);
}

TEST(DebiasStep, HugePenaltyKeepsPooledFit)
{
  const MultiSourceData data = small_data(5);
  const QuantileLevel tau(0.5);
  const PenalizedFit pooled = transfer_step(data, IndexSet{ 1 }, tau, 0.05, {});
  const PenalizedFit d = debias_step(pooled.beta, data, tau, 1e6, {});
  EXPECT_TRUE(d.beta.isZero(0.0));
}

TEST(DebiasStep, OptimalOffsetGivesZero)
{
  const MultiSourceData data = small_data(6);
  const QuantileLevel tau(0.5);
  const PenalizedFit target = fit_penalized_qr(pool(data.target()), tau, 0.05, {}, {});
  const PenalizedFit d = debias_step(target.beta, data, tau, 0.05, {});
  EXPECT_LT(d.beta.lpNorm<Eigen::Infinity>(), 1e-9);
}

TEST(DebiasStep, MatchesShiftedLp)
{
  const MultiSourceData data = small_data(7);
  const QuantileLevel tau(0.3);
  const PenalizedFit pooled = transfer_step(data, IndexSet{ 1, 2 }, tau, 0.05, {});
  const PenalizedFit d = debias_step(pooled.beta, data, tau, 0.02, {});
  const PooledSample t = pool(data.target());
  const PooledSample shifted{ t.Z, t.y - t.Z * pooled.beta };
  EXPECT_NEAR(d.objective, lp_oracle_fit(shifted, tau, 0.02).objective, 1e-6);
}

TEST(OracleTransfer, AdditivityAndHugePenalties)
{
  const MultiSourceData data = small_data(8);
  const QuantileLevel tau(0.5);
  const TransferEstimate e = oracle_transfer(data, IndexSet{ 1, 2 }, tau, 0.05, 0.05, {});
  for (Eigen::Index j = 0; j < data.p(); ++j)
    EXPECT_EQ(e.beta_target(j), e.beta_pooled(j) + e.delta(j));
  EXPECT_EQ(e.transfer_set, IndexSet({ 1, 2 }));

  const TransferEstimate z = oracle_transfer(data, IndexSet{ 1, 2 }, tau, 1e6, 1e6, {});
  EXPECT_TRUE(z.beta_target.isZero(0.0));
}

TEST(OracleTransfer, EmptySetIsTargetLasso)
{
  const MultiSourceData data = small_data(9);
  const QuantileLevel tau(0.5);
  const TransferEstimate e = oracle_transfer(data, IndexSet{}, tau, 0.05, 1e6, {});
  const PenalizedFit t = fit_penalized_qr(pool(data.target()), tau, 0.05, {}, {});
  EXPECT_EQ(e.beta_target, t.beta);
}

TEST(OracleTransfer, CrossValidatedPenaltiesAreDeterministic)
{
  const MultiSourceData data = small_data(10);
  TransferConfig cfg;
  cfg.cv_seed = 17;
  const QuantileLevel tau(0.5);
  const TransferEstimate a = oracle_transfer(data, IndexSet{ 1 }, tau, {}, {}, cfg);
  const TransferEstimate b = oracle_transfer(data, IndexSet{ 1 }, tau, {}, {}, cfg);
  EXPECT_EQ(a.beta_target, b.beta_target);
  EXPECT_GT(a.lambda_beta, 0.0);
  EXPECT_TRUE(a.pooled_fit.converged);
  EXPECT_TRUE(a.debias_fit.converged);
}

// One close source of 90 rows next to a 60-row target: averaged over 20
// seeded draws the transfer fit beats the target-only fit.
TEST(OracleTransfer, HelpsWithOneCloseSource)
{
  double transfer_err = 0.0, target_err = 0.0;
  for (int r = 1; r <= 20; ++r) {
    SimDesign d;
    d.p = 50;
    d.s0 = 5;
    d.n0 = 60;
    d.nk = 90;
    d.K = 1;
    d.h = 2;
    d.num_transferable = 1;
    d.seed = 1000 + static_cast<std::uint64_t>(r);
    const Scenario sc = gen_scenario(d);
    TransferConfig cfg;
    cfg.cv_seed = d.seed;
    const QuantileLevel tau(0.5);
    transfer_err +=
      (oracle_transfer(sc.data, sc.transferable, tau, {}, {}, cfg).beta_target - sc.beta0)
        .norm();
    target_err += (transfer_step(sc.data, IndexSet{}, tau, {}, cfg).beta - sc.beta0).norm();
  }
  EXPECT_LT(transfer_err, target_err);
}
