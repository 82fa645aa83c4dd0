#include <random>
#include <set>

#include <gtest/gtest.h>

#include <tlqr/detection.hpp>
#include <tlqr/simgen.hpp>

#include "support.hpp"

using namespace tlqr;

TEST(SplitTarget, SizesAndPartition)
{
  for (Eigen::Index n0 = 4; n0 <= 31; ++n0) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const TargetSplit s = split_target(n0, seed);
      EXPECT_EQ(s.train.size(), static_cast<std::size_t>((n0 + 1) / 2));
      EXPECT_EQ(s.validation.size(), static_cast<std::size_t>(n0 / 2));
      std::set<int> all(s.train.begin(), s.train.end());
      for (int i : s.validation)
        EXPECT_TRUE(all.insert(i).second) << "overlap at " << i;
      EXPECT_EQ(all.size(), static_cast<std::size_t>(n0));
      EXPECT_EQ(*all.begin(), 0);
      EXPECT_EQ(*all.rbegin(), n0 - 1);
    }
  }
  EXPECT_EQ(split_target(5, 9).train.size(), 3u);
  EXPECT_EQ(split_target(12, 3).train, split_target(12, 3).train);
  EXPECT_THROW(split_target(3, 0), invalid_input);
}

TEST(ValidationLoss, Examples)
{
  std::mt19937_64 rng(1);
  const Matrix Z = fixture::gaussian_matrix(6, 2, rng);
  const Vector b = fixture::gaussian_vector(2, rng);
  Vector y = Z * b;
  y(0) += 10.0; // outside V0
  const DomainDataset d(y, Z);
  EXPECT_NEAR(validation_loss(b, d, IndexSet{ 2, 3, 5 }, QuantileLevel(0.5)), 0.0, 1e-15);

  Matrix Z0 = Matrix::Zero(3, 2);
  Vector y0(3);
  y0 << 1, -1, 7;
  EXPECT_DOUBLE_EQ(
    validation_loss(Vector::Ones(2), DomainDataset(y0, Z0), IndexSet{ 0, 1 }, QuantileLevel(0.5)),
    0.5);
  EXPECT_THROW(validation_loss(b, d, IndexSet{}, QuantileLevel(0.5)), invalid_input);
}

TEST(ValidationLoss, DirectSum)
{
  std::mt19937_64 rng(2);
  const DomainDataset d = fixture::linear_domain(20, 3, 2, 1.0, rng);
  const Vector b = fixture::gaussian_vector(3, rng);
  const IndexSet V{ 1, 4, 7, 8, 15 };
  double s = 0.0;
  for (int i : V) {
    const double r = d.y()(i) - d.Z().row(i).dot(b);
    s += r > 0 ? 0.2 * r : -0.8 * r;
  }
  EXPECT_NEAR(validation_loss(b, d, V, QuantileLevel(0.2)), s / 5.0, 1e-12);
}

TEST(LassoBaseline, Examples)
{
  std::mt19937_64 rng(3);
  const DomainDataset d = fixture::linear_domain(20, 4, 2, 1.0, rng);
  const IndexSet T0 = IndexSet::range(0, 12);
  EXPECT_TRUE(lasso_baseline(d, T0, QuantileLevel(0.5), 1e6, {}).beta.isZero(0.0));

  const PenalizedFit f = lasso_baseline(d, T0, QuantileLevel(0.5), 0.03, {});
  EXPECT_NEAR(f.objective, lp_oracle_fit(pool(d.subset(T0)), QuantileLevel(0.5), 0.03).objective,
              1e-6);
  const PenalizedFit all = lasso_baseline(d, IndexSet::range(0, 20), QuantileLevel(0.5), 0.03, {});
  const PenalizedFit full = fit_penalized_qr(pool(d), QuantileLevel(0.5), 0.03, {}, {});
  EXPECT_EQ(all.beta, full.beta);
}

TEST(PerSourceCandidate, Examples)
{
  std::mt19937_64 rng(4);
  const DomainDataset t0 = fixture::linear_domain(15, 4, 2, 1.0, rng);
  const DomainDataset src = fixture::linear_domain(20, 4, 2, 1.0, rng);
  EXPECT_TRUE(per_source_candidate(t0, src, QuantileLevel(0.5), 1e6, 1e6, {}).isZero(0.0));

  // A source equal to the training half gives the target-only fit.
  const QuantileLevel tau(0.5);
  const CoefVector same = per_source_candidate(t0, t0, tau, 0.05, 1e6, {});
  const PenalizedFit alone = fit_penalized_qr(pool(t0), tau, 0.05, {}, {});
  EXPECT_LT((same - alone.beta).norm(), 1e-8);

  const CoefVector one_step = per_source_candidate(t0, src, tau, 0.05, 0.05, {}, false);
  const PenalizedFit pooled = transfer_step(MultiSourceData(t0, { src }), IndexSet{ 1 }, tau, 0.05, {});
  EXPECT_EQ(one_step, pooled.beta);
}

TEST(SelectSources, ThresholdRule)
{
  EXPECT_EQ(select_sources({ 1.005, 1.02 }, 1.0, 0.01), IndexSet({ 1 }));
  EXPECT_EQ(select_sources({ 1.01, 1.0100001 }, 1.0, 0.01), IndexSet({ 1 }));
  EXPECT_EQ(select_sources({ 5.0, 0.2, 9.0 }, 1.0, 1e9), IndexSet({ 1, 2, 3 }));
}

TEST(SelectSources, MonotoneInTolerance)
{
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0.5, 1.5);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> losses(8);
    for (double& l : losses)
      l = U(rng);
    const double e1 = U(rng) - 0.5, e2 = e1 + U(rng) - 0.5;
    const IndexSet a = select_sources(losses, 1.0, e1);
    const IndexSet b = select_sources(losses, 1.0, std::max(e1, e2));
    EXPECT_TRUE(a.is_subset_of(b));
  }
}

TEST(TheoryLambda, Formula)
{
  Matrix Z = Matrix::Ones(4, 3);
  Z(2, 1) = -3.0;
  const DomainDataset t(Vector::Zero(4), Z), s(Vector::Zero(6), Matrix::Ones(6, 3));
  EXPECT_NEAR(theory_lambda(t, s), 4 * 3 * std::sqrt(2 * std::log(3.0) / 16.0), 1e-14);
}

TEST(Detect, EndToEnd)
{
  SimDesign d;
  d.p = 40;
  d.s0 = 4;
  d.n0 = 60;
  d.nk = 120;
  d.K = 3;
  d.h = 1;
  d.num_transferable = 1;
  d.seed = 11;
  const Scenario sc = gen_scenario(d);
  DetectionConfig cfg;
  cfg.split_seed = 3;
  cfg.transfer.cv_seed = 4;
  const QuantileLevel tau(0.5);
  const DetectionResult a = detect(sc.data, tau, cfg);
  const DetectionResult b = detect(sc.data, tau, cfg);
  EXPECT_EQ(a.selected, b.selected);
  EXPECT_EQ(a.final_estimate.beta_target, b.final_estimate.beta_target);
  ASSERT_EQ(a.source_losses.size(), 3u);
  EXPECT_EQ(a.selected, select_sources(a.source_losses, a.baseline_loss, cfg.epsilon0));
  EXPECT_EQ(a.final_estimate.transfer_set, a.selected);

  cfg.epsilon0 = 1e9;
  EXPECT_EQ(detect(sc.data, tau, cfg).selected, IndexSet({ 1, 2, 3 }));

  cfg.lambda_beta = { 0.1 };
  EXPECT_THROW(detect(sc.data, tau, cfg), invalid_input);
  EXPECT_THROW(detect(MultiSourceData(sc.data.target(), {}), tau, DetectionConfig{}),
               invalid_input);
}

TEST(Detect, TheoryPenaltyOption)
{
  SimDesign d;
  d.p = 30;
  d.s0 = 3;
  d.n0 = 40;
  d.nk = 60;
  d.K = 2;
  d.num_transferable = 1;
  d.seed = 12;
  const Scenario sc = gen_scenario(d);
  DetectionConfig cfg;
  cfg.source_lambda = DetectionConfig::SourceLambda::theory;
  const DetectionResult r = detect(sc.data, QuantileLevel(0.5), cfg);
  EXPECT_EQ(r.source_losses.size(), 2u);
}

// One informative source at small scale: its candidate's validation loss is
// no worse than the baseline in at least 16 of 20 seeded draws.
TEST(PerSourceCandidate, InformativeSourceBeatsBaseline)
{
  int wins = 0;
  for (int r = 1; r <= 20; ++r) {
    SimDesign d;
    d.p = 50;
    d.s0 = 5;
    d.n0 = 100;
    d.nk = 200;
    d.K = 1;
    d.h = 1;
    d.num_transferable = 1;
    d.seed = 500 + static_cast<std::uint64_t>(r);
    const Scenario sc = gen_scenario(d);
    DetectionConfig cfg;
    cfg.split_seed = d.seed;
    cfg.transfer.cv_seed = d.seed;
    const DetectionResult res = detect(sc.data, QuantileLevel(0.5), cfg);
    wins += res.source_losses[0] <= res.baseline_loss;
  }
  EXPECT_GE(wins, 16);
}
