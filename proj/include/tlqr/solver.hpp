#pragma once

// l1-penalized quantile regression and l1-penalized quadratic programs.
//
// The quantile fit minimizes  L(offset + v) + lambda |v|_1  over v. The check
// loss is replaced by its convolution with a uniform kernel of half-width h,
// which is minimized by accelerated proximal gradient (soft-threshold prox,
// backtracking, function-value restart) while h is decreased geometrically.
// After every stage the iterate is polished to the vertex it identifies
// (nonzero coefficients A, the |A| smallest residuals interpolated exactly)
// and optimality is checked with the exact nonsmooth subdifferential. A
// working set of coordinates keeps the per-iteration cost proportional to the
// active columns; coordinates outside it are admitted whenever the full KKT
// check finds them violated.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "core.hpp"
#include "simplex.hpp"

namespace tlqr {

struct BacktrackingRule
{
  double shrink = 0.5;
  double sufficient_decrease = 1e-4;
};

struct SolverConfig
{
  int max_iter = 5000;
  double kkt_tol = 1e-4;
  double smoothing_init = 0.1;
  double smoothing_final = 1e-4;
  double smoothing_decay = 0.5;
  BacktrackingRule step_rule;
  std::uint64_t seed = 0;

  void validate() const
  {
    if (max_iter < 1)
      throw invalid_input("max_iter must be at least 1");
    if (!(kkt_tol > 0.0) || !(smoothing_init > 0.0) ||
        !(smoothing_final > 0.0))
      throw invalid_input("solver tolerances must be positive");
    if (!(smoothing_decay > 0.0 && smoothing_decay < 1.0))
      throw invalid_input("smoothing decay must lie in (0, 1)");
    if (!(step_rule.shrink > 0.0 && step_rule.shrink < 1.0))
      throw invalid_input("backtracking shrink must lie in (0, 1)");
    if (!(step_rule.sufficient_decrease >= 0.0 &&
          step_rule.sufficient_decrease < 1.0))
      throw invalid_input("sufficient decrease must lie in [0, 1)");
  }
};

struct PenalizedFit
{
  //! The penalized variable (beta itself, or delta when fitted with an offset).
  CoefVector beta;
  double lambda = 0.0;
  //! L(offset + beta) + lambda |beta|_1, recomputed from the returned beta.
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  bool converged = false;
  //! Smoothed objective at the end of each continuation stage.
  std::vector<double> stage_objectives;
  std::string status;
};

inline double soft_threshold(double x, double t)
{
  if (x > t)
    return x - t;
  if (x < -t)
    return x + t;
  return 0.0;
}

namespace detail {

inline double l1(const Vector& v) { return v.lpNorm<1>(); }

inline double qr_objective(const Matrix& Z, const Vector& yoff,
                           const Vector& v, double tau, double lambda)
{
  return mean_check_loss(yoff - Z * v, tau) + lambda * l1(v);
}

// Largest singular value squared of Z / sqrt(n), by power iteration.
inline double gram_norm(const Matrix& Z)
{
  const Eigen::Index p = Z.cols();
  if (p == 0 || Z.rows() == 0)
    return 0.0;
  Vector x = Vector::Ones(p) / std::sqrt(static_cast<double>(p));
  double est = 0.0;
  for (int it = 0; it < 50; ++it) {
    Vector y = Z.transpose() * (Z * x);
    const double nrm = y.norm();
    if (nrm == 0.0)
      return 0.0;
    const double next = nrm;
    x = y / nrm;
    if (std::abs(next - est) <= 1e-6 * next) {
      est = next;
      break;
    }
    est = next;
  }
  return 1.05 * est / static_cast<double>(Z.rows());
}

struct KktReport
{
  double residual = 0.0;
  Vector violation; // per coordinate, at the best subgradient selection found
};

// Exact-subdifferential KKT residual of  L(v) + lambda |v|_1 .
//
// Residuals within `tie_tol` of zero contribute z_i (tau - u_i) with u_i free
// in [0, 1]; the returned residual is the max coordinate violation at the
// best selection found, hence an upper bound on the distance of the
// subdifferential to zero (exact whenever no tie occurs, and at
// non-degenerate vertices, where the selection solves a square system).
inline KktReport kkt_report(const Matrix& Z, const Vector& yoff,
                            const Vector& v, double tau, double lambda)
{
  const Eigen::Index n = Z.rows();
  const Eigen::Index p = Z.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  const Vector r = yoff - Z * v;
  const double tie_tol =
    1e-9 * (1.0 + (yoff.size() ? yoff.cwiseAbs().maxCoeff() : 0.0));

  std::vector<int> ties;
  Vector w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(r(i)) <= tie_tol) {
      ties.push_back(static_cast<int>(i));
      w(i) = tau; // u_i = 0 baseline
    } else {
      w(i) = tau - (r(i) < 0.0 ? 1.0 : 0.0);
    }
  }
  const Vector g0 = -(Z.transpose() * w) * inv_n;

  std::vector<int> active;
  Vector target(p); // required value of g_j on active coordinates
  for (Eigen::Index j = 0; j < p; ++j) {
    if (v(j) != 0.0) {
      active.push_back(static_cast<int>(j));
      target(j) = -lambda * (v(j) > 0.0 ? 1.0 : -1.0);
    }
  }

  auto violations = [&](const Vector& g) {
    Vector viol(p);
    for (Eigen::Index j = 0; j < p; ++j)
      viol(j) = v(j) != 0.0 ? std::abs(g(j) - target(j))
                            : std::max(std::abs(g(j)) - lambda, 0.0);
    return viol;
  };

  KktReport rep;
  rep.violation = violations(g0);
  rep.residual = p ? rep.violation.maxCoeff() : 0.0;
  if (ties.empty() || rep.residual == 0.0)
    return rep;

  const Eigen::Index m = static_cast<Eigen::Index>(ties.size());
  Matrix G(p, m); // g(u) = g0 + G u
  for (Eigen::Index t = 0; t < m; ++t)
    G.col(t) = Z.row(ties[static_cast<std::size_t>(t)]).transpose() * inv_n;

  auto consider = [&](const Vector& u) {
    const Vector viol = violations(g0 + G * u);
    const double res = viol.maxCoeff();
    if (res < rep.residual) {
      rep.residual = res;
      rep.violation = viol;
    }
  };

  Vector u = Vector::Ones(m); // the I(r <= 0) convention
  consider(u);

  if (!active.empty()) {
    const Eigen::Index a = static_cast<Eigen::Index>(active.size());
    Matrix GA(a, m);
    Vector rhs(a);
    for (Eigen::Index k = 0; k < a; ++k) {
      const int j = active[static_cast<std::size_t>(k)];
      GA.row(k) = G.row(j);
      rhs(k) = target(j) - g0(j);
    }
    u = GA.completeOrthogonalDecomposition().solve(rhs);
    u = u.cwiseMax(0.0).cwiseMin(1.0);
    consider(u);
  } else {
    u = Vector::Constant(m, 0.5);
  }

  // Projected gradient on the squared violations, keeping the best point.
  const double lip = 2.0 * (G.transpose() * G).norm() + 1e-300;
  const double exact = 1e-13 * (1.0 + lambda);
  for (int it = 0; it < 300 && rep.residual > exact; ++it) {
    const Vector g = g0 + G * u;
    Vector d(p);
    for (Eigen::Index j = 0; j < p; ++j) {
      if (v(j) != 0.0)
        d(j) = g(j) - target(j);
      else if (g(j) > lambda)
        d(j) = g(j) - lambda;
      else if (g(j) < -lambda)
        d(j) = g(j) + lambda;
      else
        d(j) = 0.0;
    }
    const Vector grad = 2.0 * G.transpose() * d;
    if (grad.lpNorm<Eigen::Infinity>() == 0.0)
      break;
    u = (u - grad / lip).cwiseMax(0.0).cwiseMin(1.0);
    consider(u);
  }
  return rep;
}

// Exact minimizer of a one-dimensional problem
//   n^{-1} sum rho_tau(yoff_i - z_i v) + lambda |v|,
// the leftmost one when the minimizer is not unique.
inline double scalar_qr(const Vector& z, const Vector& yoff, double tau,
                        double lambda)
{
  const Eigen::Index n = z.size();
  struct Kink
  {
    double at;
    double jump;
  };
  std::vector<Kink> kinks;
  kinks.reserve(static_cast<std::size_t>(n) + 1);
  // Slope (times n) to the left of every kink.
  double slope = -lambda * static_cast<double>(n);
  double scale = lambda * static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double zi = z(i);
    if (zi == 0.0)
      continue;
    const double a = std::abs(zi);
    slope -= a * (zi > 0.0 ? tau : 1.0 - tau);
    scale += a;
    kinks.push_back({ yoff(i) / zi, a });
  }
  if (lambda > 0.0)
    kinks.push_back({ 0.0, 2.0 * lambda * static_cast<double>(n) });
  if (kinks.empty())
    return 0.0;
  std::sort(kinks.begin(), kinks.end(),
            [](const Kink& l, const Kink& r) { return l.at < r.at; });
  const double eps = 1e-12 * scale;
  std::size_t i = 0;
  while (i < kinks.size()) {
    const double at = kinks[i].at;
    while (i < kinks.size() && kinks[i].at == at)
      slope += kinks[i++].jump;
    if (slope >= -eps)
      return at;
  }
  return kinks.back().at;
}

struct SmoothState
{
  double value = 0.0;
  Vector psi; // derivative of the smoothed loss at each residual
};

inline void smoothed_loss(const Vector& r, double tau, double h,
                          SmoothState& out)
{
  const Eigen::Index n = r.size();
  out.psi.resize(n);
  double s = 0.0;
  const double inv2h = 0.5 / h;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = r(i);
    if (t >= h) {
      s += tau * t;
      out.psi(i) = tau;
    } else if (t <= -h) {
      s += (tau - 1.0) * t;
      out.psi(i) = tau - 1.0;
    } else {
      s += (tau - 0.5) * t + (t * t + h * h) * 0.5 * inv2h;
      out.psi(i) = (tau - 0.5) + t * inv2h;
    }
  }
  out.value = s / static_cast<double>(n);
}

inline double smoothed_value(const Vector& r, double tau, double h)
{
  double s = 0.0;
  const double inv4h = 0.25 / h;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const double t = r(i);
    if (t >= h)
      s += tau * t;
    else if (t <= -h)
      s += (tau - 1.0) * t;
    else
      s += (tau - 0.5) * t + (t * t + h * h) * inv4h;
  }
  return s / static_cast<double>(r.size());
}

inline Matrix select_columns_of(const Matrix& Z, const std::vector<int>& cols)
{
  Matrix out(Z.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c)
    out.col(static_cast<Eigen::Index>(c)) = Z.col(cols[c]);
  return out;
}

// A vertex of the piecewise-linear objective: coordinates A are free
// (nonzero), rows E interpolated exactly, |A| = |E| and Z[E, A] invertible.
struct Vertex
{
  Vector v;
  std::vector<int> A;
  std::vector<int> E;
};

inline Matrix block_of(const Matrix& Z, const std::vector<int>& rows,
                       const std::vector<int>& cols)
{
  Matrix M(static_cast<Eigen::Index>(rows.size()),
           static_cast<Eigen::Index>(cols.size()));
  for (std::size_t e = 0; e < rows.size(); ++e)
    for (std::size_t a = 0; a < cols.size(); ++a)
      M(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(a)) =
        Z(rows[e], cols[a]);
  return M;
}

// Vertex polish: with A the support of v (reduced to a basic subset when it
// exceeds the row count) and E the |A| residuals of smallest magnitude,
// solve Z[E, A] v_A = yoff[E].
inline std::optional<Vertex> polish(const Matrix& Z, const Vector& yoff,
                                    const Vector& v)
{
  Vertex out;
  for (Eigen::Index j = 0; j < v.size(); ++j)
    if (v(j) != 0.0)
      out.A.push_back(static_cast<int>(j));
  if (out.A.empty()) {
    out.v = Vector::Zero(v.size());
    return out;
  }
  if (static_cast<Eigen::Index>(out.A.size()) > Z.rows()) {
    const Matrix ZA = select_columns_of(Z, out.A);
    Eigen::ColPivHouseholderQR<Matrix> qr(ZA);
    std::vector<int> keep;
    for (Eigen::Index c = 0; c < qr.rank(); ++c)
      keep.push_back(
        out.A[static_cast<std::size_t>(qr.colsPermutation().indices()(c))]);
    std::sort(keep.begin(), keep.end());
    out.A = std::move(keep);
  }
  const Eigen::Index k = static_cast<Eigen::Index>(out.A.size());
  const Vector r = yoff - Z * v;
  std::vector<int> order(static_cast<std::size_t>(r.size()));
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](int a, int b) {
                      const double ra = std::abs(r(a));
                      const double rb = std::abs(r(b));
                      return ra < rb || (ra == rb && a < b);
                    });
  out.E.assign(order.begin(), order.begin() + k);
  const Matrix M = block_of(Z, out.E, out.A);
  Eigen::FullPivLU<Matrix> lu(M);
  if (!lu.isInvertible())
    return std::nullopt;
  Vector rhs(k);
  for (Eigen::Index e = 0; e < k; ++e)
    rhs(e) = yoff(out.E[static_cast<std::size_t>(e)]);
  const Vector x = lu.solve(rhs);
  if (!x.allFinite())
    return std::nullopt;
  out.v = Vector::Zero(v.size());
  for (Eigen::Index a = 0; a < k; ++a)
    out.v(out.A[static_cast<std::size_t>(a)]) = x(a);
  return out;
}

// Inverse of the vertex matrix Z[E, A], kept current under single
// row/column exchanges. Rows of `inv` follow A, columns follow E.
class VertexBasis
{
public:
  VertexBasis(const Matrix& Z, std::vector<int>& A, std::vector<int>& E)
    : Z_(Z)
    , A_(A)
    , E_(E)
  {
    refresh();
  }

  const Matrix& inv() const { return inv_; }
  bool ok() const { return ok_; }

  bool refresh()
  {
    updates_ = 0;
    const Eigen::Index k = static_cast<Eigen::Index>(A_.size());
    if (k == 0) {
      inv_.resize(0, 0);
      return ok_ = true;
    }
    Eigen::PartialPivLU<Matrix> lu(block_of(Z_, E_, A_));
    inv_ = lu.inverse();
    return ok_ = inv_.allFinite();
  }

  // E[pos] := row.
  void replace_row(std::size_t pos, int row)
  {
    const Eigen::Index e = static_cast<Eigen::Index>(pos);
    Vector mB = inv_.transpose() * row_of(row); // (m'B)'
    const double piv = mB(e);
    mB(e) -= 1.0;
    E_[pos] = row;
    if (!stable(piv))
      return void(refresh());
    const Vector col = inv_.col(e);
    inv_.noalias() -= col * (mB.transpose() / piv);
    bump();
  }

  // A[pos] := column.
  void replace_col(std::size_t pos, int column)
  {
    const Eigen::Index a = static_cast<Eigen::Index>(pos);
    Vector Bc = inv_ * col_of(column);
    const double piv = Bc(a);
    Bc(a) -= 1.0;
    A_[pos] = column;
    if (!stable(piv))
      return void(refresh());
    const Vector row = inv_.row(a).transpose();
    inv_.noalias() -= Bc * (row.transpose() / piv);
    bump();
  }

  // Drops E[epos] and A[apos].
  void shrink(std::size_t epos, std::size_t apos)
  {
    const Eigen::Index e = static_cast<Eigen::Index>(epos);
    const Eigen::Index a = static_cast<Eigen::Index>(apos);
    const Eigen::Index k = inv_.rows();
    const double piv = inv_(a, e);
    E_.erase(E_.begin() + e);
    A_.erase(A_.begin() + a);
    if (!stable(piv))
      return void(refresh());
    Matrix next(k - 1, k - 1);
    for (Eigen::Index r = 0, rr = 0; r < k; ++r) {
      if (r == a)
        continue;
      for (Eigen::Index c = 0, cc = 0; c < k; ++c) {
        if (c == e)
          continue;
        next(rr, cc++) = inv_(r, c) - inv_(r, e) * inv_(a, c) / piv;
      }
      ++rr;
    }
    inv_ = std::move(next);
    bump();
  }

  // Appends row to E and column to A.
  void grow(int row, int column)
  {
    const Eigen::Index k = inv_.rows();
    const Vector c = col_of(column);
    const Vector r = row_of(row);
    const Vector Bc = inv_ * c;
    const Vector rB = inv_.transpose() * r;
    const double s = Z_(row, column) - r.dot(Bc);
    E_.push_back(row);
    A_.push_back(column);
    if (!stable(s))
      return void(refresh());
    Matrix next(k + 1, k + 1);
    next.topLeftCorner(k, k) = inv_ + Bc * (rB.transpose() / s);
    next.topRightCorner(k, 1) = -Bc / s;
    next.bottomLeftCorner(1, k) = -rB.transpose() / s;
    next(k, k) = 1.0 / s;
    inv_ = std::move(next);
    bump();
  }

private:
  Vector row_of(int row) const
  {
    Vector out(static_cast<Eigen::Index>(A_.size()));
    for (std::size_t a = 0; a < A_.size(); ++a)
      out(static_cast<Eigen::Index>(a)) = Z_(row, A_[a]);
    return out;
  }
  Vector col_of(int column) const
  {
    Vector out(static_cast<Eigen::Index>(E_.size()));
    for (std::size_t e = 0; e < E_.size(); ++e)
      out(static_cast<Eigen::Index>(e)) = Z_(E_[e], column);
    return out;
  }
  static bool stable(double piv) { return std::abs(piv) > 1e-9; }
  void bump()
  {
    if (++updates_ >= 40)
      refresh();
  }

  const Matrix& Z_;
  std::vector<int>& A_;
  std::vector<int>& E_;
  Matrix inv_;
  int updates_ = 0;
  bool ok_ = true;
};

// Exact descent over vertices. At a vertex the p active hyperplanes
// ({r_i = 0} for i in E, {v_j = 0} for j outside A) give 2p edges; the
// directional derivative of the objective along each is available in closed
// form, and the objective is separable in the edge coordinates, so a vertex
// with no descending edge is optimal. Each step follows the steepest edge to
// the minimizing breakpoint along the ray.
inline int vertex_descent(const Matrix& Z, const Vector& yoff, double tau,
                          double lambda, Vertex& vx, int max_pivots)
{
  const Eigen::Index n = Z.rows();
  const Eigen::Index p = Z.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double scale = 1.0 + yoff.cwiseAbs().maxCoeff();
  const double slope_eps = 1e-13 * (1.0 + lambda);

  std::vector<char> inE(static_cast<std::size_t>(n), 0);
  std::vector<char> inA(static_cast<std::size_t>(p), 0);
  for (int i : vx.E)
    inE[static_cast<std::size_t>(i)] = 1;
  for (int j : vx.A)
    inA[static_cast<std::size_t>(j)] = 1;
  Vector sgn = Vector::Zero(p); // side of each free coordinate
  for (int j : vx.A)
    sgn(j) = vx.v(j) >= 0.0 ? 1.0 : -1.0;

  VertexBasis basis(Z, vx.A, vx.E);

  // v_A = Z[E, A]^{-1} yoff[E], with one step of iterative refinement.
  auto solve_vertex = [&]() {
    const Eigen::Index k = static_cast<Eigen::Index>(vx.A.size());
    vx.v.setZero();
    if (k == 0)
      return true;
    Vector rhs(k);
    for (Eigen::Index e = 0; e < k; ++e)
      rhs(e) = yoff(vx.E[static_cast<std::size_t>(e)]);
    Vector x = basis.inv() * rhs;
    Vector res = rhs;
    for (Eigen::Index a = 0; a < k; ++a)
      for (Eigen::Index e = 0; e < k; ++e)
        res(e) -= Z(vx.E[static_cast<std::size_t>(e)],
                    vx.A[static_cast<std::size_t>(a)]) * x(a);
    x.noalias() += basis.inv() * res;
    if (!x.allFinite())
      return false;
    for (Eigen::Index a = 0; a < k; ++a)
      vx.v(vx.A[static_cast<std::size_t>(a)]) = x(a);
    return true;
  };

  struct Edge
  {
    double deriv;
    bool row;
    int idx; // position in E for rows, coordinate for columns
    double s;
  };
  struct Brk
  {
    double t;
    double jump;
    bool row;
    int idx;
  };

  Vector r(n), w(n), g(p), dr(n), d(p);
  std::vector<Edge> edges;
  std::vector<Brk> brk;
  int pivots = 0;
  int stalls = 0;
  for (; pivots < max_pivots; ++pivots) {
    if (!basis.ok() || !solve_vertex())
      break;
    const Eigen::Index k = static_cast<Eigen::Index>(vx.A.size());
    for (int j : vx.A)
      if (vx.v(j) != 0.0)
        sgn(j) = vx.v(j) > 0.0 ? 1.0 : -1.0; // passed crossings flip signs

    r = yoff;
    for (int j : vx.A)
      r.noalias() -= vx.v(j) * Z.col(j);
    for (int i : vx.E)
      r(i) = 0.0;

    for (Eigen::Index i = 0; i < n; ++i)
      w(i) = inE[static_cast<std::size_t>(i)] ? 0.0
                                              : tau - (r(i) < 0.0 ? 1.0 : 0.0);
    g.noalias() = -(Z.transpose() * w) * inv_n;

    // Multipliers of the interpolated rows.
    Vector pi(k);
    if (k > 0) {
      Vector a(k);
      for (Eigen::Index c = 0; c < k; ++c) {
        const int j = vx.A[static_cast<std::size_t>(c)];
        a(c) = g(j) + lambda * sgn(j);
      }
      pi.noalias() = basis.inv().transpose() * a;
    }
    Vector cfree = g; // reduced cost of releasing a fixed coordinate
    for (Eigen::Index e = 0; e < k; ++e)
      cfree.noalias() -=
        pi(e) * Z.row(vx.E[static_cast<std::size_t>(e)]).transpose();

    edges.clear();
    for (Eigen::Index e = 0; e < k; ++e) {
      edges.push_back(
        { pi(e) + (1.0 - tau) * inv_n, true, static_cast<int>(e), 1.0 });
      edges.push_back({ -pi(e) + tau * inv_n, true, static_cast<int>(e), -1.0 });
    }
    for (Eigen::Index j = 0; j < p; ++j) {
      if (inA[static_cast<std::size_t>(j)])
        continue;
      edges.push_back({ cfree(j) + lambda, false, static_cast<int>(j), 1.0 });
      edges.push_back({ -cfree(j) + lambda, false, static_cast<int>(j), -1.0 });
    }
    std::erase_if(edges, [&](const Edge& ed) { return ed.deriv >= -slope_eps; });
    std::sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
      return x.deriv < y.deriv ||
             (x.deriv == y.deriv && (x.row != y.row ? x.row : x.idx < y.idx));
    });

    bool moved = false;
    for (const Edge& ed : edges) {
      // Direction in coefficient space.
      d.setZero();
      if (ed.row) {
        for (Eigen::Index a = 0; a < k; ++a)
          d(vx.A[static_cast<std::size_t>(a)]) = ed.s * basis.inv()(a, ed.idx);
      } else {
        d(ed.idx) = ed.s;
        if (k > 0) {
          Vector col(k);
          for (Eigen::Index e = 0; e < k; ++e)
            col(e) = Z(vx.E[static_cast<std::size_t>(e)], ed.idx);
          const Vector dA = -ed.s * (basis.inv() * col);
          for (Eigen::Index a = 0; a < k; ++a)
            d(vx.A[static_cast<std::size_t>(a)]) = dA(a);
        }
      }
      dr.setZero();
      for (int j : vx.A)
        dr.noalias() -= d(j) * Z.col(j);
      if (!ed.row)
        dr.noalias() -= d(ed.idx) * Z.col(ed.idx);
      const int released_row =
        ed.row ? vx.E[static_cast<std::size_t>(ed.idx)] : -1;
      if (ed.row)
        dr(released_row) = -ed.s; // exact by construction

      // Exact one-sided slope along the ray.
      double slope = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (inE[static_cast<std::size_t>(i)] && i != released_row)
          continue;
        const double di = dr(i);
        if (di == 0.0)
          continue;
        const bool pos = r(i) > 0.0 || (r(i) == 0.0 && di > 0.0);
        slope += (pos ? tau : tau - 1.0) * di;
      }
      slope *= inv_n;
      for (Eigen::Index j = 0; j < p; ++j) {
        if (d(j) == 0.0)
          continue;
        const double vj = vx.v(j);
        if (vj != 0.0)
          slope += lambda * (vj > 0.0 ? d(j) : -d(j));
        else if (inA[static_cast<std::size_t>(j)] && sgn(j) * d(j) < 0.0)
          slope += lambda * sgn(j) * d(j); // leaves towards the kink
        else
          slope += lambda * std::abs(d(j));
      }
      if (slope >= -slope_eps)
        continue; // degenerate edge

      brk.clear();
      for (Eigen::Index i = 0; i < n; ++i) {
        if (inE[static_cast<std::size_t>(i)])
          continue;
        const double ri = r(i);
        const double di = dr(i);
        if (ri != 0.0 && di != 0.0 && (ri > 0.0) != (di > 0.0))
          brk.push_back(
            { -ri / di, std::abs(di) * inv_n, true, static_cast<int>(i) });
      }
      for (int j : vx.A) {
        const double vj = vx.v(j);
        if (d(j) != 0.0 && vj != 0.0 && (vj > 0.0) != (d(j) > 0.0))
          brk.push_back(
            { -vj / d(j), 2.0 * lambda * std::abs(d(j)), false, j });
      }
      std::sort(brk.begin(), brk.end(), [](const Brk& x, const Brk& y) {
        return x.t < y.t || (x.t == y.t && x.jump > y.jump);
      });
      const Brk* stop = nullptr;
      for (const Brk& b : brk) {
        slope += b.jump;
        if (slope >= -slope_eps) {
          stop = &b;
          break;
        }
      }
      if (!stop)
        break; // unbounded ray; cannot happen for a bounded objective

      // Exchange the released hyperplane for the one reached.
      if (ed.row) {
        inE[static_cast<std::size_t>(released_row)] = 0;
        if (stop->row) {
          inE[static_cast<std::size_t>(stop->idx)] = 1;
          basis.replace_row(static_cast<std::size_t>(ed.idx), stop->idx);
        } else {
          inA[static_cast<std::size_t>(stop->idx)] = 0;
          sgn(stop->idx) = 0.0;
          const auto apos =
            std::find(vx.A.begin(), vx.A.end(), stop->idx) - vx.A.begin();
          basis.shrink(static_cast<std::size_t>(ed.idx),
                       static_cast<std::size_t>(apos));
        }
      } else {
        inA[static_cast<std::size_t>(ed.idx)] = 1;
        sgn(ed.idx) = ed.s;
        if (stop->row) {
          inE[static_cast<std::size_t>(stop->idx)] = 1;
          basis.grow(stop->idx, ed.idx);
        } else {
          inA[static_cast<std::size_t>(stop->idx)] = 0;
          sgn(stop->idx) = 0.0;
          const auto apos =
            std::find(vx.A.begin(), vx.A.end(), stop->idx) - vx.A.begin();
          basis.replace_col(static_cast<std::size_t>(apos), ed.idx);
        }
      }
      stalls = stop->t <= 1e-14 * scale ? stalls + 1 : 0;
      moved = true;
      break;
    }
    if (!moved || stalls > 2 * (n + p))
      break;
  }

  if (!basis.refresh() || !solve_vertex())
    vx.v.setZero();
  return pivots;
}

// Smoothing continuation: accelerated proximal gradient on the
// uniform-kernel smoothed objective for a geometric sequence of half-widths.
// Returns the best vertex obtained by polishing the stage iterates.
inline std::optional<Vertex> smoothing_continuation(
  const Matrix& Z, const Vector& yoff, double tau, double lambda, Vector v,
  const SolverConfig& cfg, int& iterations, std::vector<double>& stage_objectives)
{
  const Eigen::Index n = Z.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double lz = gram_norm(Z);
  const double shrink = cfg.step_rule.shrink;
  const double sigma = cfg.step_rule.sufficient_decrease;

  std::optional<Vertex> best;
  double best_obj = std::numeric_limits<double>::infinity();

  double h = cfg.smoothing_init;
  Vector zv = Z * v;
  SmoothState st;
  for (;;) {
    double step = lz > 0.0 ? 4.0 * (2.0 * h) / lz : 1.0;
    Vector x = v, x_prev = v, zx = zv, zx_prev = zv;
    double t_mom = 1.0;
    double fx = smoothed_value(yoff - zx, tau, h) + lambda * l1(x);
    bool stage_done = false;
    while (!stage_done && iterations < cfg.max_iter) {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_mom * t_mom));
      const double mom = (t_mom - 1.0) / t_next;
      const Vector y = x + mom * (x - x_prev);
      const Vector zy = zx + mom * (zx - zx_prev);
      smoothed_loss(yoff - zy, tau, h, st);
      const Vector grad = -(Z.transpose() * st.psi) * inv_n;

      Vector z, zz;
      double fz_smooth = 0.0;
      for (int bt = 0; bt < 60; ++bt) {
        z = y - step * grad;
        for (Eigen::Index j = 0; j < z.size(); ++j)
          z(j) = soft_threshold(z(j), step * lambda);
        zz = Z * z;
        fz_smooth = smoothed_value(yoff - zz, tau, h);
        const Vector d = z - y;
        const double bound = st.value + grad.dot(d) +
                             (1.0 - sigma) * d.squaredNorm() / (2.0 * step);
        if (fz_smooth <= bound + 1e-15 * std::abs(st.value))
          break;
        step *= shrink;
      }
      ++iterations;
      const double fz = fz_smooth + lambda * l1(z);
      const double gm = (z - y).lpNorm<Eigen::Infinity>() / step;

      if (fz > fx) {
        // Restart the momentum; the next iteration is a plain prox step.
        t_mom = 1.0;
        x_prev = x;
        zx_prev = zx;
        if (mom == 0.0)
          stage_done = true;
        continue;
      }
      const double decrease = fx - fz;
      x_prev = x;
      zx_prev = zx;
      x = z;
      zx = zz;
      fx = fz;
      t_mom = t_next;
      if (gm <= cfg.kkt_tol ||
          (mom == 0.0 && decrease <= 1e-16 * (1.0 + std::abs(fz))))
        stage_done = true;
    }
    v = x;
    zv = zx;
    stage_objectives.push_back(fx);

    if (auto pv = polish(Z, yoff, v)) {
      const double pobj = qr_objective(Z, yoff, pv->v, tau, lambda);
      if (pobj < best_obj) {
        best_obj = pobj;
        best = std::move(pv);
        if (kkt_report(Z, yoff, best->v, tau, lambda).residual <=
            0.5 * cfg.kkt_tol)
          break;
      }
    }
    if (h <= cfg.smoothing_final || iterations >= cfg.max_iter)
      break;
    h = std::max(h * cfg.smoothing_decay, cfg.smoothing_final);
  }
  return best;
}

inline PenalizedFit fit_qr(const Matrix& Z, const Vector& yoff, double tau,
                           double lambda, const std::optional<Vector>& init,
                           const SolverConfig& cfg)
{
  const Eigen::Index p = Z.cols();
  PenalizedFit fit;
  fit.lambda = lambda;

  auto finish = [&](Vector v, const char* how) {
    fit.beta = std::move(v);
    fit.objective = qr_objective(Z, yoff, fit.beta, tau, lambda);
    fit.kkt_residual = kkt_report(Z, yoff, fit.beta, tau, lambda).residual;
    fit.converged = fit.kkt_residual <= cfg.kkt_tol;
    fit.status = fit.converged ? how : "warning: KKT tolerance not reached";
    return fit;
  };

  // Penalty dominates: zero is optimal. At lambda = 0 zero may merely lie on
  // a flat optimal face, so the search below picks a vertex instead.
  const Vector zero = Vector::Zero(p);
  if (lambda > 0.0 &&
      kkt_report(Z, yoff, zero, tau, lambda).residual <= 0.5 * cfg.kkt_tol)
    return finish(zero, "ok: zero solution");

  if (p == 1) {
    Vector v(1);
    v(0) = scalar_qr(Z.col(0), yoff, tau, lambda);
    return finish(v, "ok: exact scalar minimizer");
  }

  std::optional<Vertex> start;
  if (init) {
    start = polish(Z, yoff, *init);
  } else {
    start = smoothing_continuation(Z, yoff, tau, lambda, zero, cfg,
                                   fit.iterations, fit.stage_objectives);
  }
  if (!start)
    start = Vertex{ zero, {}, {} };
  const int budget = std::max(1, cfg.max_iter - fit.iterations);
  fit.iterations += vertex_descent(Z, yoff, tau, lambda, *start, budget);
  return finish(start->v, "ok");
}

} // namespace detail

//! Penalized fit on an explicit sample: minimizes
//! L(offset + v) + lambda |v|_1 over v; `init` warm-starts v.
inline PenalizedFit fit_penalized_qr(const PooledSample& sample,
                                     QuantileLevel tau, double lambda,
                                     const std::optional<CoefVector>& offset,
                                     const SolverConfig& config,
                                     const std::optional<CoefVector>& init = {})
{
  config.validate();
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw invalid_input("lambda must be a finite non-negative number");
  Vector yoff = sample.y;
  if (offset) {
    detail::check_dims(sample, *offset);
    yoff -= sample.Z * *offset;
  }
  if (init)
    detail::check_dims(sample, *init);
  return detail::fit_qr(sample.Z, yoff, tau, lambda, init, config);
}

inline PenalizedFit fit_penalized_qr(const MultiSourceData& data,
                                     const IndexSet& which, QuantileLevel tau,
                                     double lambda,
                                     const std::optional<CoefVector>& offset,
                                     const SolverConfig& config)
{
  return fit_penalized_qr(pool(data, which), tau, lambda, offset, config);
}

//! Maximal violation of the subgradient optimality condition of the fitted
//! problem, evaluated from scratch.
inline double kkt_residual(const CoefVector& v, const PooledSample& sample,
                           QuantileLevel tau, double lambda,
                           const std::optional<CoefVector>& offset = {})
{
  detail::check_dims(sample, v);
  Vector yoff = sample.y;
  if (offset) {
    detail::check_dims(sample, *offset);
    yoff -= sample.Z * *offset;
  }
  return detail::kkt_report(sample.Z, yoff, v, tau, lambda).residual;
}

inline double kkt_residual(const PenalizedFit& fit, const MultiSourceData& data,
                           const IndexSet& which, QuantileLevel tau,
                           double lambda,
                           const std::optional<CoefVector>& offset = {})
{
  return kkt_residual(fit.beta, pool(data, which), tau, lambda, offset);
}

//! Largest lambda for which zero is not optimal: |S(offset)|_inf.
inline double lambda_max(const PooledSample& sample, QuantileLevel tau,
                         const std::optional<CoefVector>& offset = {})
{
  const Vector base = offset ? *offset : Vector::Zero(sample.p());
  return score(base, sample, tau).lpNorm<Eigen::Infinity>();
}

//! `count` log-spaced values from `top` down to `ratio * top`.
inline std::vector<double> lambda_grid(double top, int count = 50,
                                       double ratio = 0.01)
{
  if (!(top > 0.0) || count < 1 || !(ratio > 0.0 && ratio <= 1.0))
    throw invalid_input("invalid lambda grid specification");
  std::vector<double> g(static_cast<std::size_t>(count));
  if (count == 1) {
    g[0] = top;
    return g;
  }
  const double step = std::log(ratio) / static_cast<double>(count - 1);
  for (int i = 0; i < count; ++i)
    g[static_cast<std::size_t>(i)] = top * std::exp(step * i);
  g.back() = top * ratio;
  return g;
}

//! Rate-level preset C * L * sqrt(log p / n). The constant is left to the
//! caller.
inline double theoretical_lambda(double C, double L, Eigen::Index p,
                                 Eigen::Index n)
{
  return C * L *
         std::sqrt(std::log(static_cast<double>(p)) / static_cast<double>(n));
}

//! Exact solution of the penalized problem through its linear-program form
//! (residual splits u - v, coefficient splits b+ - b-). Verification only;
//! refuses instances with more than 200 rows or 20 columns.
inline PenalizedFit lp_oracle_fit(const PooledSample& sample,
                                  QuantileLevel tau, double lambda)
{
  const Eigen::Index n = sample.n();
  const Eigen::Index p = sample.p();
  if (n > 200 || p > 20)
    throw invalid_input("LP oracle is limited to n <= 200 and p <= 20");
  if (!(lambda >= 0.0))
    throw invalid_input("lambda must be non-negative");

  // columns: b+ (p) | b- (p) | u (n) | v (n)
  const Eigen::Index ncol = 2 * p + 2 * n;
  Matrix A = Matrix::Zero(n, ncol);
  Vector b(n);
  Vector c(ncol);
  std::vector<int> basis(static_cast<std::size_t>(n));
  const double inv_n = 1.0 / static_cast<double>(n);
  c.head(2 * p).setConstant(lambda);
  c.segment(2 * p, n).setConstant(tau * inv_n);
  c.tail(n).setConstant((1.0 - tau) * inv_n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sgn = sample.y(i) >= 0.0 ? 1.0 : -1.0;
    A.block(i, 0, 1, p) = sgn * sample.Z.row(i);
    A.block(i, p, 1, p) = -sgn * sample.Z.row(i);
    A(i, 2 * p + i) = sgn;
    A(i, 2 * p + n + i) = -sgn;
    b(i) = sgn * sample.y(i);
    basis[static_cast<std::size_t>(i)] =
      static_cast<int>(sgn > 0.0 ? 2 * p + i : 2 * p + n + i);
  }
  const LpSolution sol = simplex_solve(A, b, c, basis);

  PenalizedFit fit;
  fit.lambda = lambda;
  fit.beta = sol.x.head(p) - sol.x.segment(p, p);
  fit.objective = pooled_loss(fit.beta, sample, tau) + lambda * fit.beta.lpNorm<1>();
  fit.kkt_residual = kkt_residual(fit.beta, sample, tau, lambda);
  fit.iterations = sol.pivots;
  fit.converged = true;
  fit.status = "ok: simplex";
  return fit;
}

inline PenalizedFit lp_oracle_fit(const MultiSourceData& data,
                                  const IndexSet& which, QuantileLevel tau,
                                  double lambda)
{
  return lp_oracle_fit(pool(data, which), tau, lambda);
}

struct QuadraticFit
{
  Vector gamma;
  double kkt_residual = 0.0;
  int sweeps = 0;
  bool converged = false;
};

//! KKT residual of  1/2 g'Hg - b'g + lambda |g|_1 .
inline double quadratic_kkt(const Matrix& H, const Vector& b, double lambda,
                            const Vector& g)
{
  const Vector grad = H * g - b;
  double res = 0.0;
  for (Eigen::Index j = 0; j < g.size(); ++j) {
    const double v = g(j) > 0.0   ? std::abs(grad(j) + lambda)
                     : g(j) < 0.0 ? std::abs(grad(j) - lambda)
                                  : std::max(std::abs(grad(j)) - lambda, 0.0);
    res = std::max(res, v);
  }
  return res;
}

//! Coordinate descent for  min 1/2 g'Hg - b'g + lambda |g|_1  with H
//! symmetric positive semidefinite.
inline QuadraticFit fit_penalized_quadratic(const Matrix& H, const Vector& b,
                                            double lambda,
                                            const std::optional<Vector>& init = {},
                                            double tol = 1e-8,
                                            int max_sweeps = 100000)
{
  const Eigen::Index p = H.rows();
  if (H.cols() != p || b.size() != p)
    throw invalid_input("quadratic problem: dimension mismatch");
  if (!(lambda >= 0.0))
    throw invalid_input("lambda must be non-negative");
  const double hscale = 1.0 + H.cwiseAbs().maxCoeff();
  if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-10 * hscale)
    throw invalid_input("quadratic problem: H is not symmetric");
  if (p > 0) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(H, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-8 * hscale)
      throw invalid_input("quadratic problem: H is not positive semidefinite");
  }

  QuadraticFit out;
  out.gamma = init ? *init : Vector::Zero(p);
  if (out.gamma.size() != p)
    throw invalid_input("quadratic problem: init has wrong length");
  for (Eigen::Index j = 0; j < p; ++j) {
    if (H(j, j) <= 0.0) {
      if (std::abs(b(j)) > lambda + tol)
        throw invalid_input("quadratic problem is unbounded below");
      out.gamma(j) = 0.0;
    }
  }
  Vector grad = H * out.gamma - b;
  for (out.sweeps = 0; out.sweeps < max_sweeps; ++out.sweeps) {
    for (Eigen::Index j = 0; j < p; ++j) {
      const double hjj = H(j, j);
      if (hjj <= 0.0)
        continue;
      const double old = out.gamma(j);
      const double c = hjj * old - grad(j); // b_j - sum_{k != j} H_jk g_k
      const double nv = soft_threshold(c, lambda) / hjj;
      if (nv != old) {
        grad += (nv - old) * H.col(j);
        out.gamma(j) = nv;
      }
    }
    if ((out.sweeps & 7) == 7 || p <= 8) {
      grad = H * out.gamma - b;
      out.kkt_residual = quadratic_kkt(H, b, lambda, out.gamma);
      if (out.kkt_residual <= tol) {
        out.converged = true;
        ++out.sweeps;
        return out;
      }
    }
  }
  out.kkt_residual = quadratic_kkt(H, b, lambda, out.gamma);
  out.converged = out.kkt_residual <= tol;
  return out;
}

//! Deterministic fold labels: a seeded shuffle of 0..n-1, position i going
//! to fold i mod folds.
inline std::vector<int> fold_assignment(Eigen::Index n, int folds,
                                        std::uint64_t seed)
{
  if (folds < 2)
    throw invalid_input("cross-validation needs at least two folds");
  if (n < folds)
    throw invalid_input("fewer observations than folds");
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> fold(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < perm.size(); ++i)
    fold[static_cast<std::size_t>(perm[i])] = static_cast<int>(i) % folds;
  return fold;
}

struct CvResult
{
  double lambda = 0.0;
  std::vector<double> grid;
  std::vector<double> losses; // mean validation check loss per grid value
};

//! K-fold cross-validation of the penalized fit over a descending grid.
//! Fits along the grid are warm-started; the smallest mean validation loss
//! wins, ties going to the larger lambda.
inline CvResult cross_validate_lambda(const PooledSample& sample,
                                      QuantileLevel tau,
                                      const std::vector<double>& grid,
                                      int folds, std::uint64_t seed,
                                      const SolverConfig& config,
                                      const std::optional<CoefVector>& offset = {})
{
  if (grid.empty())
    throw invalid_input("lambda grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0))
      throw invalid_input("lambda grid values must be positive");
    if (i > 0 && !(grid[i] < grid[i - 1]))
      throw invalid_input("lambda grid must be strictly descending");
  }
  const auto fold = fold_assignment(sample.n(), folds, seed);

  CvResult res;
  res.grid = grid;
  res.losses.assign(grid.size(), 0.0);
  if (grid.size() == 1) {
    res.lambda = grid.front();
    return res;
  }

  Vector yoff = sample.y;
  if (offset) {
    detail::check_dims(sample, *offset);
    yoff -= sample.Z * *offset;
  }

  for (int f = 0; f < folds; ++f) {
    std::vector<int> tr, va;
    for (std::size_t i = 0; i < fold.size(); ++i)
      (fold[i] == f ? va : tr).push_back(static_cast<int>(i));
    PooledSample train{ Matrix(static_cast<Eigen::Index>(tr.size()), sample.p()),
                        Vector(static_cast<Eigen::Index>(tr.size())) };
    for (std::size_t r = 0; r < tr.size(); ++r) {
      train.Z.row(static_cast<Eigen::Index>(r)) = sample.Z.row(tr[r]);
      train.y(static_cast<Eigen::Index>(r)) = yoff(tr[r]);
    }
    Matrix zv(static_cast<Eigen::Index>(va.size()), sample.p());
    Vector yv(static_cast<Eigen::Index>(va.size()));
    for (std::size_t r = 0; r < va.size(); ++r) {
      zv.row(static_cast<Eigen::Index>(r)) = sample.Z.row(va[r]);
      yv(static_cast<Eigen::Index>(r)) = yoff(va[r]);
    }
    std::optional<Vector> warm;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      PenalizedFit fit = fit_penalized_qr(train, tau, grid[g], std::nullopt,
                                          config, warm);
      warm = fit.beta;
      res.losses[g] += detail::mean_check_loss(yv - zv * fit.beta, tau);
    }
  }
  std::size_t best = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    res.losses[g] /= static_cast<double>(folds);
    if (res.losses[g] < res.losses[best])
      best = g;
  }
  res.lambda = grid[best];
  return res;
}

inline CvResult cross_validate_lambda(const MultiSourceData& data,
                                      const IndexSet& which, QuantileLevel tau,
                                      const std::vector<double>& grid,
                                      int folds, std::uint64_t seed,
                                      const SolverConfig& config)
{
  return cross_validate_lambda(pool(data, which), tau, grid, folds, seed,
                               config);
}

} // namespace tlqr
