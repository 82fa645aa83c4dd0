#pragma once

// Dense tableau simplex for small standard-form linear programs
//
//   minimize c'x  subject to  A x = b,  x >= 0,
//
// started from a caller-supplied feasible basis whose columns of A form an
// identity matrix. Entering and leaving variables follow Bland's rule, which
// rules out cycling on degenerate vertices.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "core.hpp"

namespace tlqr {

struct LpSolution
{
  Vector x;
  double objective = 0.0;
  int pivots = 0;
};

class lp_unbounded : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

//! `basis[r]` names the column that is the r-th unit vector of A; requires
//! b >= 0 so the starting vertex x_B = b is feasible.
inline LpSolution simplex_solve(const Matrix& A, const Vector& b,
                                const Vector& c, std::vector<int> basis,
                                int max_pivots = 1000000)
{
  const Eigen::Index m = A.rows();
  const Eigen::Index n = A.cols();
  if (b.size() != m || c.size() != n ||
      basis.size() != static_cast<std::size_t>(m))
    throw invalid_input("simplex: inconsistent problem dimensions");
  if ((b.array() < 0.0).any())
    throw invalid_input("simplex: right-hand side must be non-negative");

  constexpr double eps = 1e-11;

  // T = [A | b]; the last row holds reduced costs and -objective.
  Matrix T(m + 1, n + 1);
  T.topLeftCorner(m, n) = A;
  T.topRightCorner(m, 1) = b;
  T.row(m).head(n) = c.transpose();
  T(m, n) = 0.0;
  for (Eigen::Index r = 0; r < m; ++r) {
    const double cb = c(basis[static_cast<std::size_t>(r)]);
    if (cb != 0.0)
      T.row(m) -= cb * T.row(r);
  }

  LpSolution sol;
  for (;;) {
    Eigen::Index enter = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (T(m, j) < -eps) {
        enter = j;
        break;
      }
    }
    if (enter < 0)
      break;

    Eigen::Index leave = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < m; ++r) {
      const double a = T(r, enter);
      if (a <= eps)
        continue;
      const double ratio = T(r, n) / a;
      if (ratio < best - eps ||
          (ratio <= best + eps && leave >= 0 &&
           basis[static_cast<std::size_t>(r)] <
             basis[static_cast<std::size_t>(leave)])) {
        best = std::min(best, ratio);
        leave = r;
      }
    }
    if (leave < 0)
      throw lp_unbounded("simplex: problem is unbounded");

    T.row(leave) /= T(leave, enter);
    for (Eigen::Index r = 0; r <= m; ++r) {
      if (r == leave)
        continue;
      const double f = T(r, enter);
      if (f != 0.0)
        T.row(r) -= f * T.row(leave);
    }
    basis[static_cast<std::size_t>(leave)] = static_cast<int>(enter);
    if (++sol.pivots > max_pivots)
      throw std::runtime_error("simplex: pivot limit exceeded");
  }

  sol.x = Vector::Zero(n);
  for (Eigen::Index r = 0; r < m; ++r)
    sol.x(basis[static_cast<std::size_t>(r)]) = T(r, n);
  sol.objective = c.dot(sol.x);
  return sol;
}

} // namespace tlqr
