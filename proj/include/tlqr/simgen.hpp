#pragma once

// Synthetic multi-source designs: AR(1) Gaussian covariates, sparse target
// coefficients, sources that are either within l1 distance h of the target
// or deliberately far from it, and errors shifted to have tau-quantile zero.
//
// Every domain draws from its own generator, seeded from (seed, domain), so
// adding domains leaves the draws of earlier ones untouched.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "core.hpp"
#include "normal.hpp"

namespace tlqr {

using Rng = std::mt19937_64;

enum class ErrorFamily
{
  normal,
  cauchy,
  gumbel
};

inline const char* to_string(ErrorFamily f)
{
  switch (f) {
    case ErrorFamily::normal:
      return "normal";
    case ErrorFamily::cauchy:
      return "cauchy";
    case ErrorFamily::gumbel:
      return "gumbel";
  }
  return "?";
}

inline ErrorFamily parse_error_family(const std::string& s)
{
  if (s == "normal")
    return ErrorFamily::normal;
  if (s == "cauchy")
    return ErrorFamily::cauchy;
  if (s == "gumbel")
    return ErrorFamily::gumbel;
  throw invalid_input("unknown error family '" + s + "'");
}

struct SimDesign
{
  int p = 1000;
  int n0 = 100;
  int nk = 150;
  int K = 20;
  double h = 6.0;
  int s0 = 15;
  int num_transferable = 0;
  double tau = 0.5;
  ErrorFamily error_family = ErrorFamily::normal;
  bool heterogeneous = true;
  std::uint64_t seed = 1;

  void validate() const
  {
    if (p < 1 || n0 < 1 || nk < 1 || K < 0 || s0 < 0)
      throw invalid_input("design sizes must be positive (K, s0 >= 0)");
    if (!(h >= 0.0))
      throw invalid_input("h must be non-negative");
    if (num_transferable < 0 || num_transferable > K)
      throw invalid_input("num_transferable must lie in [0, K]");
    if (num_transferable < K && 3 * s0 > p)
      throw invalid_input("non-transferable sources need p >= 3 s0");
    if (s0 > p)
      throw invalid_input("s0 exceeds p");
    QuantileLevel check(tau);
    (void)check;
  }
};

//! Independent generator for one (seed, domain, stream) triple.
inline Rng substream(std::uint64_t seed, std::uint64_t domain,
                     std::uint64_t stream = 0)
{
  std::seed_seq seq{ static_cast<std::uint32_t>(seed),
                     static_cast<std::uint32_t>(seed >> 32),
                     static_cast<std::uint32_t>(domain),
                     static_cast<std::uint32_t>(domain >> 32),
                     static_cast<std::uint32_t>(stream) };
  return Rng(seq);
}

//! Uniform on the open interval (0, 1).
inline double open_uniform(Rng& rng)
{
  for (;;) {
    const double u = std::generate_canonical<double, 53>(rng);
    if (u > 0.0 && u < 1.0)
      return u;
  }
}

//! Rows with AR(1) correlation 0.5^|l - j| via z_j = 0.5 z_{j-1} + sqrt(0.75) e_j.
inline Matrix gen_covariates(int n, int p, Rng& rng)
{
  if (n < 1 || p < 1)
    throw invalid_input("covariate dimensions must be positive");
  std::normal_distribution<double> N;
  const double c = std::sqrt(0.75);
  Matrix Z(n, p);
  for (int i = 0; i < n; ++i) {
    double z = N(rng);
    Z(i, 0) = z;
    for (int j = 1; j < p; ++j) {
      z = 0.5 * z + c * N(rng);
      Z(i, j) = z;
    }
  }
  return Z;
}

//! tau-quantile of the standard member of the family.
inline double error_quantile(ErrorFamily f, QuantileLevel tau)
{
  switch (f) {
    case ErrorFamily::normal:
      return normal_quantile(tau);
    case ErrorFamily::cauchy:
      return std::tan(std::numbers::pi * (tau - 0.5));
    case ErrorFamily::gumbel:
      return -std::log(-std::log(tau.value()));
  }
  return 0.0;
}

//! Standard draws minus the family's tau-quantile.
inline Vector gen_errors(int n, ErrorFamily f, QuantileLevel tau, Rng& rng)
{
  const double q = error_quantile(f, tau);
  Vector e(n);
  std::normal_distribution<double> N;
  for (int i = 0; i < n; ++i) {
    double x = 0.0;
    switch (f) {
      case ErrorFamily::normal:
        x = N(rng);
        break;
      case ErrorFamily::cauchy:
        x = std::tan(std::numbers::pi * (open_uniform(rng) - 0.5));
        break;
      case ErrorFamily::gumbel:
        x = -std::log(-std::log(open_uniform(rng)));
        break;
    }
    e(i) = x - q;
  }
  return e;
}

//! Ones on the first s0 coordinates, zeros elsewhere.
inline CoefVector gen_target_coefs(int p, int s0)
{
  if (s0 < 0 || s0 > p)
    throw invalid_input("need 0 <= s0 <= p");
  CoefVector b = CoefVector::Zero(p);
  b.head(s0).setOnes();
  return b;
}

inline Vector gen_rademacher(int p, Rng& rng)
{
  std::bernoulli_distribution B(0.5);
  Vector d(p);
  for (int j = 0; j < p; ++j)
    d(j) = B(rng) ? 1.0 : -1.0;
  return d;
}

//! beta0 + (h / p) d with Rademacher d, so |beta_k - beta0|_1 = h.
inline CoefVector gen_transferable_coefs(const CoefVector& beta0, double h,
                                         Rng& rng)
{
  if (!(h >= 0.0))
    throw invalid_input("h must be non-negative");
  const int p = static_cast<int>(beta0.size());
  return beta0 + (h / p) * gen_rademacher(p, rng);
}

//! 1 + (2h/p) d_j on {s0, ..., 2 s0 - 1} u I, (2h/p) d_j elsewhere, where I
//! holds s0 coordinates drawn from {2 s0, ..., p - 1} (0-based).
inline CoefVector gen_nontransferable_coefs(int p, double h, int s0, Rng& rng)
{
  if (3 * s0 > p)
    throw invalid_input("non-transferable coefficients need p >= 3 s0");
  const Vector d = gen_rademacher(p, rng);
  std::vector<int> pool(static_cast<std::size_t>(p - 2 * s0));
  std::iota(pool.begin(), pool.end(), 2 * s0);
  std::shuffle(pool.begin(), pool.end(), rng);
  CoefVector b = (2.0 * h / p) * d;
  for (int j = s0; j < 2 * s0; ++j)
    b(j) += 1.0;
  for (int t = 0; t < s0; ++t)
    b(pool[static_cast<std::size_t>(t)]) += 1.0;
  return b;
}

//! Lower bound on |beta_k - beta0|_1 for the non-transferable construction.
inline double nontransferable_bound(double h, int s0, int p)
{
  return 2.0 * h + 3.0 * s0 - 12.0 * s0 * h / p;
}

//! y = Z beta + w .* eta with w_i = Phi(z_i1) or 1.
inline Vector gen_response(const Matrix& Z, const CoefVector& beta,
                           const Vector& errors, bool heterogeneous)
{
  if (Z.cols() != beta.size() || Z.rows() != errors.size())
    throw invalid_input("response assembly: dimension mismatch");
  Vector y = Z * beta;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    y(i) += (heterogeneous ? normal_cdf(Z(i, 0)) : 1.0) * errors(i);
  return y;
}

struct Scenario
{
  MultiSourceData data;
  CoefVector beta0;
  IndexSet transferable;            // sources 1..num_transferable
  std::vector<CoefVector> source_beta; // entry k - 1 for source k
};

namespace detail {

inline DomainDataset gen_domain(const SimDesign& d, const CoefVector& beta,
                                int n, int id, Rng& rng)
{
  Matrix Z = gen_covariates(n, d.p, rng);
  const Vector eta = gen_errors(n, d.error_family, QuantileLevel(d.tau), rng);
  Vector y = gen_response(Z, beta, eta, d.heterogeneous);
  return DomainDataset(std::move(y), std::move(Z), id);
}

} // namespace detail

inline Scenario gen_scenario(const SimDesign& d)
{
  d.validate();
  const CoefVector beta0 = gen_target_coefs(d.p, d.s0);
  Rng r0 = substream(d.seed, 0);
  DomainDataset target = detail::gen_domain(d, beta0, d.n0, 0, r0);

  std::vector<DomainDataset> sources;
  std::vector<CoefVector> betas;
  std::vector<int> tset;
  for (int k = 1; k <= d.K; ++k) {
    // Coefficients and observations use separate streams, so the
    // covariates and errors of source k do not depend on its type.
    Rng coef = substream(d.seed, static_cast<std::uint64_t>(k), 1);
    Rng obs = substream(d.seed, static_cast<std::uint64_t>(k));
    CoefVector bk;
    if (k <= d.num_transferable) {
      bk = gen_transferable_coefs(beta0, d.h, coef);
      tset.push_back(k);
    } else {
      bk = gen_nontransferable_coefs(d.p, d.h, d.s0, coef);
    }
    sources.push_back(detail::gen_domain(d, bk, d.nk, k, obs));
    betas.push_back(std::move(bk));
  }
  return Scenario{ MultiSourceData(std::move(target), std::move(sources)),
                   beta0, IndexSet(std::move(tset)), std::move(betas) };
}

} // namespace tlqr
