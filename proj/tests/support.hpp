#pragma once

// Random instances shared by the test executables.

#include <random>

#include <tlqr/core.hpp>

namespace tlqr::fixture {

inline Matrix gaussian_matrix(Eigen::Index n, Eigen::Index p, std::mt19937_64& rng)
{
  std::normal_distribution<double> N;
  Matrix Z(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j)
      Z(i, j) = N(rng);
  return Z;
}

inline Vector gaussian_vector(Eigen::Index n, std::mt19937_64& rng)
{
  return gaussian_matrix(n, 1, rng).col(0);
}

// y = Z beta + noise with a sparse beta of ones on the first `s` coordinates.
inline DomainDataset linear_domain(Eigen::Index n, Eigen::Index p, int s,
                                   double noise, std::mt19937_64& rng, int id = 0)
{
  Matrix Z = gaussian_matrix(n, p, rng);
  Vector beta = Vector::Zero(p);
  beta.head(std::min<Eigen::Index>(s, p)).setOnes();
  Vector y = Z * beta + noise * gaussian_vector(n, rng);
  return DomainDataset(std::move(y), std::move(Z), id);
}

inline Matrix random_psd(Eigen::Index p, std::mt19937_64& rng, double ridge = 0.1)
{
  const Matrix A = gaussian_matrix(p, p, rng);
  Matrix H = A * A.transpose() / static_cast<double>(p);
  H.diagonal().array() += ridge;
  return H;
}

} // namespace tlqr::fixture
