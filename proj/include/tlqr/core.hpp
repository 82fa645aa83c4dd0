#pragma once

// Domain types, the check loss, and the pooled empirical loss/score shared by
// every estimation routine in the library.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tlqr {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using CoefVector = Eigen::VectorXd;

class invalid_input : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

//! Quantile level tau, strictly inside (0, 1).
class QuantileLevel
{
public:
  explicit QuantileLevel(double tau)
    : tau_(tau)
  {
    if (!(tau > 0.0 && tau < 1.0))
      throw invalid_input("quantile level must lie in (0, 1), got " +
                          std::to_string(tau));
  }

  double value() const { return tau_; }
  operator double() const { return tau_; }

private:
  double tau_;
};

//! Sorted, duplicate-free set of non-negative integer indices. Used for
//! domain sets (0 = target), row subsets, and coordinate supports.
class IndexSet
{
public:
  IndexSet() = default;
  IndexSet(std::initializer_list<int> values)
    : IndexSet(std::vector<int>(values))
  {}
  explicit IndexSet(std::vector<int> values)
    : idx_(std::move(values))
  {
    std::sort(idx_.begin(), idx_.end());
    idx_.erase(std::unique(idx_.begin(), idx_.end()), idx_.end());
    if (!idx_.empty() && idx_.front() < 0)
      throw invalid_input("index sets hold non-negative indices only");
  }

  //! {first, ..., last - 1}
  static IndexSet range(int first, int last)
  {
    std::vector<int> v;
    for (int i = first; i < last; ++i)
      v.push_back(i);
    return IndexSet(std::move(v));
  }

  std::size_t size() const { return idx_.size(); }
  bool empty() const { return idx_.empty(); }
  bool contains(int i) const
  {
    return std::binary_search(idx_.begin(), idx_.end(), i);
  }
  const std::vector<int>& values() const { return idx_; }
  auto begin() const { return idx_.begin(); }
  auto end() const { return idx_.end(); }
  int operator[](std::size_t i) const { return idx_[i]; }

  //! Throws unless every index is in [lo, hi].
  void check_range(int lo, int hi, const char* what) const
  {
    if (!idx_.empty() && (idx_.front() < lo || idx_.back() > hi))
      throw invalid_input(std::string(what) + " index out of range [" +
                          std::to_string(lo) + ", " + std::to_string(hi) +
                          "]");
  }

  IndexSet with(int i) const
  {
    auto v = idx_;
    v.push_back(i);
    return IndexSet(std::move(v));
  }

  bool is_subset_of(const IndexSet& other) const
  {
    return std::includes(
      other.idx_.begin(), other.idx_.end(), idx_.begin(), idx_.end());
  }

  friend bool operator==(const IndexSet& a, const IndexSet& b)
  {
    return a.idx_ == b.idx_;
  }

  std::string to_string() const
  {
    std::string s = "{";
    for (std::size_t i = 0; i < idx_.size(); ++i) {
      if (i)
        s += ",";
      s += std::to_string(idx_[i]);
    }
    return s + "}";
  }

private:
  std::vector<int> idx_;
};

//! One domain's responses and design matrix (row i = observation i).
class DomainDataset
{
public:
  DomainDataset(Vector y, Matrix Z, int domain_id = 0)
    : y_(std::move(y))
    , Z_(std::move(Z))
    , id_(domain_id)
  {
    if (y_.size() < 1)
      throw invalid_input("a dataset needs at least one observation");
    if (Z_.rows() != y_.size())
      throw invalid_input("design has " + std::to_string(Z_.rows()) +
                          " rows but response has " +
                          std::to_string(y_.size()) + " entries");
    if (Z_.cols() < 1)
      throw invalid_input("design needs at least one column");
    if (domain_id < 0)
      throw invalid_input("domain id must be non-negative");
    if (!y_.allFinite() || !Z_.allFinite())
      throw invalid_input("dataset contains non-finite entries");
  }

  const Vector& y() const { return y_; }
  const Matrix& Z() const { return Z_; }
  int domain_id() const { return id_; }
  Eigen::Index n() const { return y_.size(); }
  Eigen::Index p() const { return Z_.cols(); }

  //! Rows listed in `rows`, in increasing order.
  DomainDataset subset(const IndexSet& rows) const
  {
    rows.check_range(0, static_cast<int>(n()) - 1, "row");
    if (rows.empty())
      throw invalid_input("row subset is empty");
    Vector ys(static_cast<Eigen::Index>(rows.size()));
    Matrix zs(static_cast<Eigen::Index>(rows.size()), p());
    Eigen::Index r = 0;
    for (int i : rows) {
      ys(r) = y_(i);
      zs.row(r) = Z_.row(i);
      ++r;
    }
    return DomainDataset(std::move(ys), std::move(zs), id_);
  }

  DomainDataset with_id(int id) const { return DomainDataset(y_, Z_, id); }

private:
  Vector y_;
  Matrix Z_;
  int id_;
};

//! Target (domain 0) plus K sources (domains 1..K), all of dimension p.
class MultiSourceData
{
public:
  MultiSourceData(DomainDataset target, std::vector<DomainDataset> sources)
    : target_(target.with_id(0))
  {
    sources_.reserve(sources.size());
    for (std::size_t k = 0; k < sources.size(); ++k) {
      if (sources[k].p() != target_.p())
        throw invalid_input("source " + std::to_string(k + 1) + " has " +
                            std::to_string(sources[k].p()) +
                            " columns, target has " +
                            std::to_string(target_.p()));
      sources_.push_back(sources[k].with_id(static_cast<int>(k) + 1));
    }
  }

  const DomainDataset& target() const { return target_; }
  const std::vector<DomainDataset>& sources() const { return sources_; }
  int K() const { return static_cast<int>(sources_.size()); }
  Eigen::Index p() const { return target_.p(); }

  const DomainDataset& domain(int k) const
  {
    if (k < 0 || k > K())
      throw invalid_input("domain id " + std::to_string(k) + " out of range");
    return k == 0 ? target_ : sources_[static_cast<std::size_t>(k - 1)];
  }

  Eigen::Index total_n(const IndexSet& which) const
  {
    Eigen::Index n = 0;
    for (int k : which)
      n += domain(k).n();
    return n;
  }

private:
  DomainDataset target_;
  std::vector<DomainDataset> sources_;
};

//! Stacked rows of several domains; the sample the pooled loss averages over.
struct PooledSample
{
  Matrix Z;
  Vector y;

  Eigen::Index n() const { return y.size(); }
  Eigen::Index p() const { return Z.cols(); }
};

inline PooledSample pool(const MultiSourceData& data, const IndexSet& which)
{
  if (which.empty())
    throw invalid_input("domain set is empty");
  which.check_range(0, data.K(), "domain");
  const Eigen::Index n = data.total_n(which);
  PooledSample s{ Matrix(n, data.p()), Vector(n) };
  Eigen::Index r = 0;
  for (int k : which) {
    const auto& d = data.domain(k);
    s.Z.middleRows(r, d.n()) = d.Z();
    s.y.segment(r, d.n()) = d.y();
    r += d.n();
  }
  return s;
}

inline PooledSample pool(const DomainDataset& d)
{
  return PooledSample{ d.Z(), d.y() };
}

//! rho_tau(t) = t (tau - I(t <= 0)).
inline double check_loss(double t, double tau)
{
  if (!std::isfinite(t))
    throw invalid_input("check loss argument must be finite");
  return t > 0.0 ? t * tau : t * (tau - 1.0);
}

namespace detail {

inline double check_loss_unchecked(double t, double tau)
{
  return t > 0.0 ? t * tau : t * (tau - 1.0);
}

// Mean check loss of the residual vector.
inline double mean_check_loss(const Vector& resid, double tau)
{
  double s = 0.0;
  for (Eigen::Index i = 0; i < resid.size(); ++i)
    s += check_loss_unchecked(resid(i), tau);
  return s / static_cast<double>(resid.size());
}

inline void check_dims(const PooledSample& s, const Vector& beta)
{
  if (beta.size() != s.p())
    throw invalid_input("coefficient vector has length " +
                        std::to_string(beta.size()) + ", data dimension is " +
                        std::to_string(s.p()));
  if (!beta.allFinite())
    throw invalid_input("coefficient vector has non-finite entries");
}

} // namespace detail

inline double pooled_loss(const CoefVector& beta, const PooledSample& s,
                          QuantileLevel tau)
{
  detail::check_dims(s, beta);
  return detail::mean_check_loss(s.y - s.Z * beta, tau);
}

//! L(beta; T) = n_T^{-1} sum_{k in T} sum_i rho_tau(Y_ki - Z_ki' beta).
inline double pooled_loss(const CoefVector& beta, const MultiSourceData& data,
                          const IndexSet& which, QuantileLevel tau)
{
  return pooled_loss(beta, pool(data, which), tau);
}

inline Vector score(const CoefVector& beta, const PooledSample& s,
                    QuantileLevel tau)
{
  detail::check_dims(s, beta);
  const Vector r = s.y - s.Z * beta;
  Vector w(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i)
    w(i) = tau - (r(i) <= 0.0 ? 1.0 : 0.0);
  return -(s.Z.transpose() * w) / static_cast<double>(s.n());
}

//! S(beta; T) = -n_T^{-1} sum Z_ki {tau - I(Y_ki - Z_ki' beta <= 0)}.
inline Vector score(const CoefVector& beta, const MultiSourceData& data,
                    const IndexSet& which, QuantileLevel tau)
{
  return score(beta, pool(data, which), tau);
}

//! Inserts `value` so that it lands at (0-based) position `pos` of the
//! returned vector of length v.size() + 1.
inline Vector insert_at(const Vector& v, Eigen::Index pos, double value)
{
  const Eigen::Index p = v.size() + 1;
  if (pos < 0 || pos >= p)
    throw invalid_input("insert position " + std::to_string(pos) +
                        " out of range for length " + std::to_string(p));
  Vector out(p);
  out.head(pos) = v.head(pos);
  out(pos) = value;
  out.tail(p - pos - 1) = v.tail(p - pos - 1);
  return out;
}

//! v with entry `pos` removed.
inline Vector drop_at(const Vector& v, Eigen::Index pos)
{
  Vector out(v.size() - 1);
  out.head(pos) = v.head(pos);
  out.tail(v.size() - pos - 1) = v.tail(v.size() - pos - 1);
  return out;
}

//! Per-column scale factors (sample standard deviation over the pooled rows
//! of all domains). Estimation works on Z / scale, and coefficients map back
//! by dividing by the same factors.
struct ColumnScaling
{
  Vector scale;

  static ColumnScaling fit(const MultiSourceData& data)
  {
    IndexSet all = IndexSet::range(0, data.K() + 1);
    const PooledSample s = pool(data, all);
    Vector sc(s.p());
    for (Eigen::Index j = 0; j < s.p(); ++j) {
      const double mean = s.Z.col(j).mean();
      const double var = (s.Z.col(j).array() - mean).square().sum() /
                         std::max<double>(1.0, static_cast<double>(s.n() - 1));
      sc(j) = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return ColumnScaling{ sc };
  }

  DomainDataset apply(const DomainDataset& d) const
  {
    Matrix z = d.Z();
    for (Eigen::Index j = 0; j < z.cols(); ++j)
      z.col(j) /= scale(j);
    return DomainDataset(d.y(), std::move(z), d.domain_id());
  }

  MultiSourceData apply(const MultiSourceData& data) const
  {
    std::vector<DomainDataset> src;
    for (const auto& s : data.sources())
      src.push_back(apply(s));
    return MultiSourceData(apply(data.target()), std::move(src));
  }

  //! Coefficients on the scaled design -> coefficients on the original one.
  CoefVector unscale(const CoefVector& beta) const
  {
    return beta.cwiseQuotient(scale);
  }
};

} // namespace tlqr
