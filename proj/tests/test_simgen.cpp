#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include <tlqr/simgen.hpp>

using namespace tlqr;

namespace {

double corr(const Matrix& Z, int a, int b)
{
  const Vector x = Z.col(a).array() - Z.col(a).mean();
  const Vector y = Z.col(b).array() - Z.col(b).mean();
  return x.dot(y) / std::sqrt(x.squaredNorm() * y.squaredNorm());
}

double empirical_quantile(Vector v, double q)
{
  std::vector<double> x(v.data(), v.data() + v.size());
  std::sort(x.begin(), x.end());
  return x[static_cast<std::size_t>(std::ceil(q * static_cast<double>(x.size()))) - 1];
}

} // namespace

TEST(Covariates, Ar1Moments)
{
  Rng rng = substream(1, 0);
  const Matrix Z = gen_covariates(50000, 6, rng);
  EXPECT_NEAR(Z.col(0).squaredNorm() / 50000.0, 1.0, 0.05);
  EXPECT_NEAR(Z.col(4).squaredNorm() / 50000.0, 1.0, 0.05);
  EXPECT_NEAR(corr(Z, 0, 1), 0.5, 0.05);
  EXPECT_NEAR(corr(Z, 2, 5), 0.125, 0.05);
}

TEST(Errors, ShiftValues)
{
  EXPECT_EQ(error_quantile(ErrorFamily::normal, QuantileLevel(0.5)), 0.0);
  EXPECT_NEAR(error_quantile(ErrorFamily::cauchy, QuantileLevel(0.75)), 1.0, 1e-15);
  EXPECT_NEAR(error_quantile(ErrorFamily::gumbel, QuantileLevel(0.25)),
              -std::log(-std::log(0.25)), 1e-15);
}

TEST(Errors, TauQuantileIsZero)
{
  for (ErrorFamily f : { ErrorFamily::normal, ErrorFamily::cauchy, ErrorFamily::gumbel }) {
    for (double tau : { 0.25, 0.5, 0.75 }) {
      Rng rng = substream(7, static_cast<std::uint64_t>(f), static_cast<std::uint64_t>(tau * 100));
      const Vector e = gen_errors(100000, f, QuantileLevel(tau), rng);
      EXPECT_NEAR(empirical_quantile(e, tau), 0.0, 0.02) << to_string(f) << " " << tau;
    }
  }
}

TEST(Coefficients, Target)
{
  CoefVector b = gen_target_coefs(5, 2);
  EXPECT_EQ(b, (CoefVector(5) << 1, 1, 0, 0, 0).finished());
  EXPECT_EQ(gen_target_coefs(3, 3), CoefVector::Ones(3));
  b = gen_target_coefs(1000, 15);
  EXPECT_EQ((b.array() != 0).count(), 15);
  EXPECT_EQ(b.lpNorm<1>(), 15.0);
  EXPECT_THROW(gen_target_coefs(3, 4), invalid_input);
}

TEST(Coefficients, Rademacher)
{
  Rng a = substream(3, 1), b = substream(3, 1);
  const Vector d = gen_rademacher(100000, a);
  EXPECT_EQ(d, gen_rademacher(100000, b));
  EXPECT_EQ(d.cwiseAbs().maxCoeff(), 1.0);
  EXPECT_EQ(d.cwiseAbs().minCoeff(), 1.0);
  EXPECT_NEAR(d.mean(), 0.0, 0.02);
}

TEST(Coefficients, Transferable)
{
  Rng rng = substream(4, 1);
  const CoefVector b0 = gen_target_coefs(200, 10);
  EXPECT_EQ(gen_transferable_coefs(b0, 0.0, rng), b0);
  for (double h : { 3.0, 6.0, 12.0 })
    EXPECT_NEAR((gen_transferable_coefs(b0, h, rng) - b0).lpNorm<1>(), h, 1e-12);
  EXPECT_THROW(gen_transferable_coefs(b0, -1.0, rng), invalid_input);
}

TEST(Coefficients, NonTransferable)
{
  const int p = 200, s0 = 10;
  const CoefVector b0 = gen_target_coefs(p, s0);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng = substream(seed, 2);
    const double h = 3.0 * static_cast<double>(1 + seed % 4);
    const CoefVector b = gen_nontransferable_coefs(p, h, s0, rng);
    EXPECT_GE((b - b0).lpNorm<1>(), nontransferable_bound(h, s0, p) - 1e-12);
    EXPECT_EQ((b.array().abs() > 2 * h / p + 1e-12).count(), 2 * s0);
    for (int j = s0; j < 2 * s0; ++j)
      EXPECT_NEAR(std::abs(b(j) - 1.0), 2 * h / p, 1e-12);
  }
  Rng rng = substream(1, 2);
  const CoefVector z = gen_nontransferable_coefs(p, 0.0, s0, rng);
  EXPECT_EQ(z.head(s0), CoefVector::Zero(s0));
  EXPECT_EQ((z.array() == 1.0).count(), 2 * s0);
  EXPECT_EQ((z.array() == 0.0).count(), p - 2 * s0);
  EXPECT_THROW(gen_nontransferable_coefs(29, 1.0, 10, rng), invalid_input);
}

TEST(Response, Assembly)
{
  Rng rng = substream(5, 0);
  const Matrix Z = gen_covariates(20, 4, rng);
  const CoefVector b = gen_target_coefs(4, 2);
  const Vector eta = gen_errors(20, ErrorFamily::normal, QuantileLevel(0.5), rng);
  EXPECT_EQ(gen_response(Z, b, Vector::Zero(20), true), Z * b);
  EXPECT_LT((gen_response(Z, b, eta, false) - Z * b - eta).cwiseAbs().maxCoeff(), 1e-14);
  const Vector het = gen_response(Z, b, eta, true);
  for (int i = 0; i < 20; ++i)
    EXPECT_NEAR(het(i), Z.row(i).dot(b) + normal_cdf(Z(i, 0)) * eta(i), 1e-15);
  Matrix Z0 = Matrix::Zero(1, 4);
  EXPECT_DOUBLE_EQ(gen_response(Z0, b, Vector::Ones(1), true)(0), 0.5);
}

TEST(Scenario, Structure)
{
  SimDesign d;
  d.p = 60;
  d.s0 = 5;
  d.K = 6;
  d.nk = 30;
  d.n0 = 25;
  d.h = 6;
  d.num_transferable = 6;
  const Scenario all = gen_scenario(d);
  EXPECT_EQ(all.transferable, IndexSet::range(1, 7));
  for (const auto& b : all.source_beta)
    EXPECT_LE((b - all.beta0).lpNorm<1>(), d.h + 1e-12);

  d.num_transferable = 0;
  const Scenario none = gen_scenario(d);
  EXPECT_TRUE(none.transferable.empty());
  for (const auto& b : none.source_beta)
    EXPECT_GT((b - none.beta0).lpNorm<1>(), d.h);
  EXPECT_EQ(none.data.K(), 6);
  EXPECT_EQ(none.data.target().n(), 25);
  EXPECT_EQ(none.data.domain(3).n(), 30);
}

TEST(Scenario, DeterministicAndStreamsIndependent)
{
  SimDesign d;
  d.p = 40;
  d.s0 = 4;
  d.K = 3;
  d.nk = 20;
  d.n0 = 20;
  d.num_transferable = 2;
  d.seed = 99;
  const Scenario a = gen_scenario(d), b = gen_scenario(d);
  for (int k = 0; k <= 3; ++k) {
    EXPECT_EQ(a.data.domain(k).y(), b.data.domain(k).y());
    EXPECT_EQ(a.data.domain(k).Z(), b.data.domain(k).Z());
  }
  // More sources, or a different source type, leave other domains' draws alone.
  d.K = 5;
  d.num_transferable = 0;
  const Scenario c = gen_scenario(d);
  EXPECT_EQ(a.data.target().y(), c.data.target().y());
  for (int k = 1; k <= 3; ++k)
    EXPECT_EQ(a.data.domain(k).Z(), c.data.domain(k).Z());
}

TEST(Design, Validation)
{
  SimDesign d;
  d.p = 20;
  d.s0 = 10;
  EXPECT_THROW(d.validate(), invalid_input);
  d.num_transferable = d.K;
  EXPECT_NO_THROW(d.validate());
  d.num_transferable = d.K + 1;
  EXPECT_THROW(d.validate(), invalid_input);
  EXPECT_EQ(parse_error_family("gumbel"), ErrorFamily::gumbel);
  EXPECT_THROW(parse_error_family("laplace"), invalid_input);
}
