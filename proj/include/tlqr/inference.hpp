#pragma once

// Confidence intervals for a single target coefficient: kernel-window
// Hessian estimates, a transfer-learned projection direction, the one-step
// correction along the orthogonalized score, and the sandwich variance.
//
// Coordinates are 0-based throughout this header.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "normal.hpp"
#include "solver.hpp"
#include "transfer.hpp"

namespace tlqr {

class degenerate_hessian : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

struct BandwidthPolicy
{
  enum class Mode
  {
    powell_rule,
    fixed
  };
  Mode mode = Mode::powell_rule;
  std::optional<double> fixed_value;
  double floor = 1e-6;

  void validate() const
  {
    if (!(floor > 0.0))
      throw invalid_input("bandwidth floor must be positive");
    if (mode == Mode::fixed && !(fixed_value && *fixed_value > 0.0))
      throw invalid_input("fixed bandwidth needs a positive value");
  }
};

//! Lower sample quantile: the smallest x with F_n(x) >= q.
inline double lower_quantile(std::vector<double> x, double q)
{
  if (x.empty())
    throw invalid_input("quantile of an empty sample");
  if (!(q > 0.0 && q <= 1.0))
    throw invalid_input("quantile level must lie in (0, 1]");
  const auto n = static_cast<double>(x.size());
  auto k = static_cast<std::size_t>(std::ceil(q * n));
  k = std::clamp<std::size_t>(k, 1, x.size());
  std::nth_element(x.begin(), x.begin() + static_cast<long>(k - 1), x.end());
  return x[k - 1];
}

//! Rate factor n^{-1/3} z_{0.975}^{2/3} (1.5 phi(z_tau)^2 / (2 z_tau^2 + 1))^{1/3}.
inline double powell_rate(QuantileLevel tau, Eigen::Index n)
{
  if (n < 1)
    throw invalid_input("bandwidth needs n >= 1");
  const double z = normal_quantile(tau);
  const double f = normal_pdf(z);
  return std::cbrt(1.0 / static_cast<double>(n)) *
         std::cbrt(normal_quantile(0.975) * normal_quantile(0.975)) *
         std::cbrt(1.5 * f * f / (2.0 * z * z + 1.0));
}

//! Bandwidth for the kernel-window Hessian estimate of one domain, from the
//! residuals of that domain at the fitted coefficients. Sets `*warning` when
//! the floor had to be applied.
inline double powell_bandwidth(const Vector& residuals, QuantileLevel tau,
                               Eigen::Index n_k,
                               const BandwidthPolicy& policy = {},
                               std::string* warning = nullptr)
{
  policy.validate();
  if (residuals.size() < 1)
    throw invalid_input("bandwidth needs at least one residual");
  if (!residuals.allFinite())
    throw invalid_input("residuals must be finite");
  if (policy.mode == BandwidthPolicy::Mode::fixed)
    return std::max(*policy.fixed_value, policy.floor);

  const double bt = powell_rate(tau, n_k);
  if (tau + bt >= 1.0 || tau - bt <= 0.0)
    throw invalid_input("bandwidth rate pushes tau outside (0, 1); n_k too small");
  const double width =
    normal_quantile(tau + bt) - normal_quantile(tau - bt);

  const Eigen::Index n = residuals.size();
  const double mean = residuals.mean();
  const double var =
    n > 1 ? (residuals.array() - mean).square().sum() / static_cast<double>(n - 1)
          : 0.0;
  std::vector<double> r(residuals.data(), residuals.data() + n);
  const double iqr = lower_quantile(r, 0.75) - lower_quantile(r, 0.25);
  const double spread = std::min(std::sqrt(var), iqr / 1.34);
  const double b = width * spread;
  if (!(b >= policy.floor)) {
    if (warning)
      *warning = "bandwidth below floor (residual spread " +
                 std::to_string(spread) + "); floor applied";
    return policy.floor;
  }
  return b;
}

//! H_hat = (1/n) sum_i I(|resid_i| <= b) / (2b) z_i z_i'.
inline Matrix hessian_estimate(const DomainDataset& d, const CoefVector& beta,
                               double b)
{
  if (!(b > 0.0))
    throw invalid_input("bandwidth must be positive");
  const PooledSample s = pool(d);
  detail::check_dims(s, beta);
  const Vector r = s.y - s.Z * beta;
  Vector w(s.n());
  for (Eigen::Index i = 0; i < s.n(); ++i)
    w(i) = std::abs(r(i)) <= b ? 1.0 : 0.0;
  const Matrix H = s.Z.transpose() * w.asDiagonal() * s.Z;
  // Averaging with the transpose makes the result exactly symmetric.
  return (H + H.transpose()) / (4.0 * b * static_cast<double>(s.n()));
}

//! Sample-size weighted average sum_k n_k H_k / sum_k n_k.
inline Matrix pooled_hessian(const std::vector<std::pair<Matrix, Eigen::Index>>& parts)
{
  if (parts.empty())
    throw invalid_input("no Hessians to pool");
  const Eigen::Index p = parts.front().first.rows();
  Matrix H = Matrix::Zero(p, p);
  double total = 0.0;
  for (const auto& [Hk, nk] : parts) {
    if (Hk.rows() != p || Hk.cols() != p)
      throw invalid_input("Hessians to pool differ in dimension");
    if (nk < 1)
      throw invalid_input("pooled Hessian weights need n_k >= 1");
    total += static_cast<double>(nk);
  }
  for (const auto& [Hk, nk] : parts)
    H += (static_cast<double>(nk) / total) * Hk;
  return H;
}

struct ProjectionDirection
{
  Eigen::Index m = 0;
  Vector gamma;        // gamma_pooled + zeta
  Vector gamma_pooled;
  Vector zeta;
  Vector phi;          // 1 at m, -gamma elsewhere
  double lambda_m = 0.0;
  double lambda_m_prime = 0.0;
};

namespace detail {

inline Matrix drop_row_col(const Matrix& H, Eigen::Index m)
{
  const Eigen::Index p = H.rows();
  Matrix out(p - 1, p - 1);
  for (Eigen::Index i = 0, ii = 0; i < p; ++i) {
    if (i == m)
      continue;
    for (Eigen::Index j = 0, jj = 0; j < p; ++j) {
      if (j == m)
        continue;
      out(ii, jj++) = H(i, j);
    }
    ++ii;
  }
  return out;
}

inline Vector column_without(const Matrix& H, Eigen::Index m)
{
  return drop_at(H.col(m), m);
}

inline void check_square(const Matrix& H, Eigen::Index m)
{
  if (H.rows() != H.cols() || H.rows() < 2)
    throw invalid_input("Hessian must be square with p >= 2");
  if (m < 0 || m >= H.rows())
    throw invalid_input("coordinate " + std::to_string(m) + " out of range");
}

} // namespace detail

//! Pooled projection, then its target correction:
//!   gamma_pooled = argmin 1/2 g'Hp[-m,-m]g - Hp[-m,m]'g + lambda_m |g|_1,
//!   zeta = argmin 1/2 (gamma_pooled + z)'H0[-m,-m](gamma_pooled + z)
//!          - H0[-m,m]'(gamma_pooled + z) + lambda_m' |z|_1.
inline ProjectionDirection estimate_gamma(const Matrix& H_pooled,
                                          const Matrix& H_target,
                                          Eigen::Index m, double lambda_m,
                                          double lambda_m_prime,
                                          double tol = 1e-8)
{
  detail::check_square(H_pooled, m);
  detail::check_square(H_target, m);
  if (H_pooled.rows() != H_target.rows())
    throw invalid_input("pooled and target Hessians differ in dimension");

  ProjectionDirection dir;
  dir.m = m;
  dir.lambda_m = lambda_m;
  dir.lambda_m_prime = lambda_m_prime;

  const Matrix Hp = detail::drop_row_col(H_pooled, m);
  const Vector bp = detail::column_without(H_pooled, m);
  const QuadraticFit fp = fit_penalized_quadratic(Hp, bp, lambda_m, {}, tol);
  dir.gamma_pooled = fp.gamma;

  // The shift is absorbed into the linear term.
  const Matrix H0 = detail::drop_row_col(H_target, m);
  const Vector b0 =
    detail::column_without(H_target, m) - H0 * dir.gamma_pooled;
  const QuadraticFit f0 = fit_penalized_quadratic(H0, b0, lambda_m_prime, {}, tol);
  dir.zeta = f0.gamma;

  dir.gamma = dir.gamma_pooled + dir.zeta;
  dir.phi = insert_at(-dir.gamma, m, 1.0);
  return dir;
}

//! H0[m,m] - gamma' H0[-m,m].
inline double conditional_hessian(const ProjectionDirection& dir,
                                  const Matrix& H_target)
{
  detail::check_square(H_target, dir.m);
  return H_target(dir.m, dir.m) -
         dir.gamma.dot(detail::column_without(H_target, dir.m));
}

struct OneStep
{
  double beta_tilde = 0.0;
  double h_cond = 0.0;
};

//! beta_hat[m] - (S_m - S_{-m}'gamma) / h_cond, with the score on the target.
inline OneStep one_step_estimate(const CoefVector& beta_hat,
                                 const ProjectionDirection& dir,
                                 const DomainDataset& target,
                                 const Matrix& H_target, QuantileLevel tau)
{
  OneStep out;
  out.h_cond = conditional_hessian(dir, H_target);
  if (!(std::abs(out.h_cond) > 1e-8))
    throw degenerate_hessian("conditional Hessian " + std::to_string(out.h_cond) +
                             " is degenerate");
  const Vector S = score(beta_hat, pool(target), tau);
  const double orth = S(dir.m) - drop_at(S, dir.m).dot(dir.gamma);
  out.beta_tilde = beta_hat(dir.m) - orth / out.h_cond;
  return out;
}

struct InferenceResult
{
  Eigen::Index m = 0;
  double beta_tilde = 0.0;
  double h_cond = 0.0;
  double sigma = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double alpha = 0.0;
  ProjectionDirection direction;
};

//! tau(1 - tau) / n_T * sum over the pooled rows of z z'.
inline Matrix score_covariance(const MultiSourceData& data,
                               const IndexSet& transfer_set, QuantileLevel tau)
{
  const PooledSample s = pool(data, detail::with_target(data, transfer_set));
  Matrix S = s.Z.transpose() * s.Z;
  S *= tau * (1.0 - tau) / static_cast<double>(s.n());
  return S;
}

//! Interval beta_tilde +- sigma z_{1-alpha} / (|h_cond| sqrt(n0)); alpha is
//! the one-sided level, so alpha = 0.025 gives a 95% two-sided interval.
inline InferenceResult sigma_and_ci(const ProjectionDirection& dir,
                                    const MultiSourceData& data,
                                    const IndexSet& transfer_set,
                                    QuantileLevel tau, double beta_tilde,
                                    double h_cond, double alpha)
{
  if (!(alpha > 0.0 && alpha < 1.0))
    throw invalid_input("alpha must lie in (0, 1)");
  if (!(std::abs(h_cond) > 1e-8))
    throw degenerate_hessian("conditional Hessian " + std::to_string(h_cond) +
                             " is degenerate");
  const Matrix Sigma = score_covariance(data, transfer_set, tau);
  InferenceResult res;
  res.m = dir.m;
  res.beta_tilde = beta_tilde;
  res.h_cond = h_cond;
  res.alpha = alpha;
  res.direction = dir;
  res.sigma = std::sqrt(std::max(0.0, dir.phi.dot(Sigma * dir.phi)));
  const double half = res.sigma * normal_quantile(1.0 - alpha) /
                      (std::abs(h_cond) *
                       std::sqrt(static_cast<double>(data.target().n())));
  res.ci_low = beta_tilde - half;
  res.ci_high = beta_tilde + half;
  return res;
}

// ---------------------------------------------------------------------------
// Tuning of the projection penalties.

namespace detail {

// Row-level pieces of a kernel-window Hessian: H = Z' diag(w) Z / n.
struct HessianRows
{
  Matrix Z;
  Vector w;
};

inline Matrix hessian_of(const HessianRows& rows, const std::vector<int>& idx)
{
  const Eigen::Index p = rows.Z.cols();
  Matrix H = Matrix::Zero(p, p);
  for (int i : idx)
    if (rows.w(i) != 0.0)
      H.selfadjointView<Eigen::Lower>().rankUpdate(
        rows.Z.row(i).transpose(), rows.w(i));
  H = H.selfadjointView<Eigen::Lower>();
  return H / static_cast<double>(idx.size());
}

inline double quadratic_value(const Matrix& H, const Vector& b, const Vector& g)
{
  return 0.5 * g.dot(H * g) - b.dot(g);
}

// CV over a descending grid: each fold solves the penalized quadratic on the
// Hessian of the remaining rows and scores the unpenalized quadratic on the
// held-out Hessian. `problem` maps a Hessian to the (matrix, linear term)
// pair of the quadratic being tuned.
template <class Problem>
double cv_quadratic_lambda(const HessianRows& rows, const Problem& problem,
                           int folds, int grid_size, double grid_ratio,
                           std::uint64_t seed)
{
  const auto [Hfull, bfull] = problem(hessian_of(rows, [&] {
    std::vector<int> all(static_cast<std::size_t>(rows.Z.rows()));
    std::iota(all.begin(), all.end(), 0);
    return all;
  }()));
  const double top = bfull.template lpNorm<Eigen::Infinity>();
  if (!(top > 0.0))
    return 0.0;
  const auto grid = lambda_grid(top, grid_size, grid_ratio);
  const auto fold = fold_assignment(rows.Z.rows(), folds, seed);
  std::vector<double> loss(grid.size(), 0.0);
  for (int f = 0; f < folds; ++f) {
    std::vector<int> tr, va;
    for (std::size_t i = 0; i < fold.size(); ++i)
      (fold[i] == f ? va : tr).push_back(static_cast<int>(i));
    const auto [Ht, bt] = problem(hessian_of(rows, tr));
    const auto [Hv, bv] = problem(hessian_of(rows, va));
    std::optional<Vector> warm;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const QuadraticFit fit = fit_penalized_quadratic(Ht, bt, grid[g], warm);
      warm = fit.gamma;
      loss[g] += quadratic_value(Hv, bv, fit.gamma);
    }
  }
  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g)
    if (loss[g] < loss[best])
      best = g;
  return grid[best];
}

} // namespace detail

struct InferenceConfig
{
  TransferConfig transfer;
  BandwidthPolicy bandwidth;
  std::optional<double> lambda_beta;
  std::optional<double> lambda_delta;
  std::optional<double> lambda_m;
  std::optional<double> lambda_m_prime;
  int cv_folds = 5;
  int grid_size = 50;
  double grid_ratio = 0.01;
  std::uint64_t cv_seed = 0;
};

struct InferenceReport
{
  InferenceResult result;
  TransferEstimate estimate;
  std::vector<double> bandwidths; // per domain of {0} u T, target first
  std::vector<std::string> warnings;
};

//! Full interval construction for coordinate m given the transferable set.
inline InferenceReport infer_coordinate(const MultiSourceData& data,
                                        const IndexSet& transfer_set,
                                        QuantileLevel tau, Eigen::Index m,
                                        double alpha,
                                        const InferenceConfig& config = {})
{
  if (m < 0 || m >= data.p())
    throw invalid_input("coordinate " + std::to_string(m) + " out of range");
  if (data.p() < 2)
    throw invalid_input("inference needs p >= 2");
  InferenceReport rep;
  rep.estimate = oracle_transfer(data, transfer_set, tau, config.lambda_beta,
                                 config.lambda_delta, config.transfer);
  const CoefVector& beta = rep.estimate.beta_target;

  // Kernel-window weights for every pooled row, target rows first.
  const IndexSet which = detail::with_target(data, transfer_set);
  const Eigen::Index nT = data.total_n(which);
  detail::HessianRows pooled{ Matrix(nT, data.p()), Vector(nT) };
  detail::HessianRows target;
  Eigen::Index row = 0;
  for (int k : which) {
    const DomainDataset& d = data.domain(k);
    const Vector r = d.y() - d.Z() * beta;
    std::string warn;
    const double b = powell_bandwidth(r, tau, d.n(), config.bandwidth, &warn);
    if (!warn.empty())
      rep.warnings.push_back("domain " + std::to_string(k) + ": " + warn);
    rep.bandwidths.push_back(b);
    for (Eigen::Index i = 0; i < d.n(); ++i) {
      pooled.Z.row(row + i) = d.Z().row(i);
      pooled.w(row + i) = std::abs(r(i)) <= b ? 1.0 / (2.0 * b) : 0.0;
    }
    if (k == 0)
      target = { d.Z(), pooled.w.segment(row, d.n()) };
    row += d.n();
  }
  std::vector<int> all_rows(static_cast<std::size_t>(nT));
  std::iota(all_rows.begin(), all_rows.end(), 0);
  std::vector<int> target_rows(static_cast<std::size_t>(target.Z.rows()));
  std::iota(target_rows.begin(), target_rows.end(), 0);
  const Matrix H_pooled = detail::hessian_of(pooled, all_rows);
  const Matrix H_target = detail::hessian_of(target, target_rows);

  auto pooled_problem = [m](const Matrix& H) {
    return std::pair<Matrix, Vector>{ detail::drop_row_col(H, m),
                                      detail::column_without(H, m) };
  };
  const double lam_m =
    config.lambda_m ? *config.lambda_m
                    : detail::cv_quadratic_lambda(pooled, pooled_problem,
                                                  config.cv_folds, config.grid_size,
                                                  config.grid_ratio, config.cv_seed);
  // The correction step depends on gamma_pooled, so it is tuned after it.
  const Vector gp =
    fit_penalized_quadratic(detail::drop_row_col(H_pooled, m),
                            detail::column_without(H_pooled, m), lam_m)
      .gamma;
  auto debias_problem = [m, &gp](const Matrix& H) {
    Matrix Hm = detail::drop_row_col(H, m);
    Vector b = detail::column_without(H, m) - Hm * gp;
    return std::pair<Matrix, Vector>{ std::move(Hm), std::move(b) };
  };
  const double lam_mp =
    config.lambda_m_prime
      ? *config.lambda_m_prime
      : detail::cv_quadratic_lambda(target, debias_problem, config.cv_folds,
                                    config.grid_size, config.grid_ratio,
                                    config.cv_seed + 1);

  const ProjectionDirection dir =
    estimate_gamma(H_pooled, H_target, m, lam_m, lam_mp);
  const OneStep os = one_step_estimate(beta, dir, data.target(), H_target, tau);
  rep.result =
    sigma_and_ci(dir, data, transfer_set, tau, os.beta_tilde, os.h_cond, alpha);
  return rep;
}

} // namespace tlqr
