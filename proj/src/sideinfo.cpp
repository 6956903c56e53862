#include "rrm/sideinfo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rrm/error.hpp"
#include "rrm/flops.hpp"

namespace rrm {

namespace {

constexpr double kNullThreshold = 1e-8;   // d ≥ 1 − this → unpenalized
constexpr double kDropThreshold = 1e-15;  // d ≤ this → H does not act

Matrix orthonormal_span(const Matrix& a, double rel_tol, Index* dropped = nullptr) {
  if (a.cols() == 0) return Matrix(a.rows(), 0);
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU);
  const Vector& s = svd.singularValues();
  const double top = s.size() > 0 ? s[0] : 0.0;
  Index keep = 0;
  while (keep < s.size() && s[keep] > rel_tol * top && s[keep] > 0.0) ++keep;
  if (dropped != nullptr) *dropped = a.cols() - keep;
  return svd.matrixU().leftCols(keep);
}

}  // namespace

FeatureMatrix::FeatureMatrix(Matrix v, std::vector<std::string> l)
    : values(std::move(v)), labels(std::move(l)) {
  if (!values.allFinite()) throw DataError("feature matrix has non-finite entries");
  if (values.cols() > values.rows()) {
    throw ConfigError("feature matrix has more columns (" + std::to_string(values.cols()) +
                      ") than rows (" + std::to_string(values.rows()) + ")");
  }
  if (!labels.empty() && static_cast<Index>(labels.size()) != values.cols()) {
    throw DataError("feature labels do not match column count");
  }
}

// ---------------------------------------------------------------------------
// SideMetric

SideMetric SideMetric::identity(Index dim) {
  return from_eigenpairs(Matrix(dim, 0), Vector(0));
}

SideMetric SideMetric::from_eigenpairs(const Matrix& w, const Vector& d,
                                       std::vector<std::string> warnings) {
  SideMetric m;
  m.dim_ = w.rows();
  m.warnings_ = std::move(warnings);
  std::vector<Index> keep, null;
  for (Index k = 0; k < d.size(); ++k) {
    if (d[k] >= 1.0 - kNullThreshold) {
      null.push_back(k);
    } else if (d[k] > kDropThreshold) {
      keep.push_back(k);
    }
  }
  m.w_.resize(m.dim_, static_cast<Index>(keep.size()));
  m.d_.resize(static_cast<Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    m.w_.col(j) = w.col(keep[j]);
    m.d_[j] = d[keep[j]];
  }
  m.null_.resize(m.dim_, static_cast<Index>(null.size()));
  for (std::size_t j = 0; j < null.size(); ++j) m.null_.col(j) = w.col(null[j]);
  m.sqrt_coef_ = ((1.0 - m.d_.array()).sqrt() - 1.0).matrix();
  m.pinv_coef_ = ((1.0 - m.d_.array()).rsqrt() - 1.0).matrix();
  if (m.null_.cols() == m.dim_ && m.dim_ > 0) {
    m.warnings_.push_back("metric has no penalized directions; the nuclear-norm block is empty");
  }
  return m;
}

Matrix SideMetric::apply_sqrt(const Matrix& x) const {
  if (x.rows() != dim_) throw DimensionError("metric apply: shape mismatch");
  flops::add(static_cast<std::uint64_t>(4 * (w_.size() + null_.size()) * x.cols()));
  return x + w_ * (sqrt_coef_.asDiagonal() * (w_.transpose() * x)) -
         null_ * (null_.transpose() * x);
}

Matrix SideMetric::apply_pinv(const Matrix& x) const {
  if (x.rows() != dim_) throw DimensionError("metric apply: shape mismatch");
  flops::add(static_cast<std::uint64_t>(4 * (w_.size() + null_.size()) * x.cols()));
  return x + w_ * (pinv_coef_.asDiagonal() * (w_.transpose() * x)) -
         null_ * (null_.transpose() * x);
}

Matrix SideMetric::apply_null_projection(const Matrix& x) const {
  if (x.rows() != dim_) throw DimensionError("metric apply: shape mismatch");
  flops::add(static_cast<std::uint64_t>(4 * null_.size() * x.cols()));
  return null_ * (null_.transpose() * x);
}

namespace {

Operator identity_plus(Index dim, const Matrix& w, const Vector& coef, const Matrix& null) {
  std::vector<Operator> terms{Operator::identity(dim)};
  if (w.cols() > 0) terms.push_back(Operator::low_rank(w * coef.asDiagonal(), w));
  if (null.cols() > 0) terms.push_back(Operator::low_rank(-null, null));
  return Operator::sum(std::move(terms));
}

}  // namespace

Operator SideMetric::hat_operator() const {
  Matrix all(dim_, w_.cols() + null_.cols());
  Vector d(all.cols());
  all << w_, null_;
  d << d_, Vector::Ones(null_.cols());
  return Operator::low_rank(all * d.asDiagonal(), all);
}

Operator SideMetric::sqrt_operator() const { return identity_plus(dim_, w_, sqrt_coef_, null_); }
Operator SideMetric::pinv_operator() const { return identity_plus(dim_, w_, pinv_coef_, null_); }
Operator SideMetric::null_projection_operator() const { return Operator::low_rank(null_, null_); }

double SideMetric::pinv_norm() const {
  double norm = (w_.cols() + null_.cols() < dim_) ? 1.0 : 0.0;
  for (Index k = 0; k < d_.size(); ++k) norm = std::max(norm, 1.0 / std::sqrt(1.0 - d_[k]));
  return norm;
}

// ---------------------------------------------------------------------------
// Constructors

SideMetric ridge_hat(const FeatureMatrix& x, double sigma2, const Matrix& prior_precision) {
  const Matrix& xv = x.values;
  const Index n = xv.rows(), p = xv.cols();
  if (!(sigma2 > 0.0)) throw ConfigError("ridge_hat: sigma2 must be positive");
  if (prior_precision.rows() != p || prior_precision.cols() != p) {
    throw ConfigError("ridge_hat: prior precision must be " + std::to_string(p) + "x" +
                      std::to_string(p));
  }
  const double asym = (prior_precision - prior_precision.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * std::max(1.0, prior_precision.cwiseAbs().maxCoeff())) {
    throw ConfigError("ridge_hat: prior precision is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> prec(prior_precision);
  if (prec.info() != Eigen::Success || !(prec.eigenvalues().minCoeff() > 0.0)) {
    throw ConfigError("ridge_hat: prior precision is not positive definite");
  }
  if (p == 0) return SideMetric::identity(n);

  // X = QR, so H = Q·R(RᵀR + σ²Λ)⁻¹Rᵀ·Qᵀ and only the p×p core is decomposed.
  Eigen::HouseholderQR<Matrix> qr(xv);
  const Matrix q = qr.householderQ() * Matrix::Identity(n, p);
  const Matrix r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
  const Matrix a = r.transpose() * r + sigma2 * prior_precision;
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) throw ConfigError("ridge_hat: normal equations not SPD");
  Matrix core = r * llt.solve(r.transpose());
  core = 0.5 * (core + core.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(core);
  // Descending order.
  const Vector d = eig.eigenvalues().reverse().cwiseMax(0.0).cwiseMin(1.0);
  const Matrix w = q * eig.eigenvectors().rowwise().reverse();
  flops::add(static_cast<std::uint64_t>(4 * n * p * p));
  return SideMetric::from_eigenpairs(w, d);
}

SideMetric projection_hat(const FeatureMatrix& x) {
  const Index n = x.values.rows(), p = x.values.cols();
  std::vector<std::string> warnings;
  Index dropped = 0;
  const Matrix u = orthonormal_span(x.values, 1e-10, &dropped);
  if (dropped > 0) {
    warnings.push_back("projection_hat: dropped " + std::to_string(dropped) +
                       " rank-deficient feature direction(s)");
  }
  if (u.cols() == n) {
    warnings.push_back("projection_hat: features span all " + std::to_string(n) +
                       " dimensions; the metric is zero and nothing is penalized");
  }
  (void)p;
  return SideMetric::from_eigenpairs(u, Vector::Ones(u.cols()), std::move(warnings));
}

SideMetric smoother_metric(const Matrix& w, const Vector& d) {
  if (w.cols() != d.size()) {
    throw ConfigError("smoother_metric: " + std::to_string(w.cols()) + " eigenvectors but " +
                      std::to_string(d.size()) + " eigenvalues");
  }
  if (w.cols() > 0) {
    const double err =
        (w.transpose() * w - Matrix::Identity(w.cols(), w.cols())).cwiseAbs().maxCoeff();
    if (err > 1e-8) throw ConfigError("smoother_metric: eigenvectors are not orthonormal");
  }
  for (Index k = 0; k < d.size(); ++k) {
    if (!(d[k] >= -1e-10 && d[k] <= 1.0 + 1e-10)) {
      std::ostringstream os;
      os << "smoother_metric: eigenvalue " << d[k] << " outside [0, 1] (||H|| <= 1 violated)";
      throw ConfigError(os.str());
    }
  }
  return SideMetric::from_eigenpairs(w, d.cwiseMax(0.0).cwiseMin(1.0));
}

// ---------------------------------------------------------------------------
// Natural splines

namespace {

void check_spline_points(std::span<const double> points, Index df) {
  if (df < 2) throw ConfigError("natural spline: df must be at least 2");
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (!(points[i] > points[i - 1])) {
      throw ConfigError("natural spline: points must be sorted and distinct");
    }
  }
  if (static_cast<Index>(points.size()) < df) {
    throw ConfigError("natural spline: " + std::to_string(points.size()) +
                      " distinct points for df " + std::to_string(df));
  }
}

// Type-7 (linear interpolation) sample quantile of sorted data.
double quantile(std::span<const double> sorted, double prob) {
  const double h = prob * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::vector<double> natural_spline_knots(std::span<const double> points, Index df) {
  check_spline_points(points, df);
  std::vector<double> knots(static_cast<std::size_t>(df));
  for (Index j = 0; j < df; ++j) {
    knots[j] = quantile(points, static_cast<double>(j) / static_cast<double>(df - 1));
  }
  knots.front() = points.front();
  knots.back() = points.back();
  return knots;
}

Matrix natural_spline_basis(std::span<const double> points, Index df) {
  const std::vector<double> knots = natural_spline_knots(points, df);
  const Index n = static_cast<Index>(points.size());
  const double lo = points.front(), span = points.back() - points.front();
  auto scale = [&](double t) { return (t - lo) / span; };
  std::vector<double> xi(knots.size());
  std::transform(knots.begin(), knots.end(), xi.begin(), scale);
  const double last = xi.back();

  // Truncated-power form: 1, t, and d_k − d_{K−1} for k = 1..K−2 where
  // d_k(t) = ((t − ξ_k)³₊ − (t − ξ_K)³₊) / (ξ_K − ξ_k).
  auto cube = [](double v) { return v > 0 ? v * v * v : 0.0; };
  auto dk = [&](double t, std::size_t k) {
    return (cube(t - xi[k]) - cube(t - last)) / (last - xi[k]);
  };
  Matrix basis(n, df);
  for (Index i = 0; i < n; ++i) {
    const double t = scale(points[i]);
    basis(i, 0) = 1.0;
    basis(i, 1) = t;
    const double tail = df > 2 ? dk(t, static_cast<std::size_t>(df - 2)) : 0.0;
    for (Index k = 0; k + 2 < df; ++k) basis(i, k + 2) = dk(t, static_cast<std::size_t>(k)) - tail;
  }
  return basis;
}

ColumnDesign column_subspace_model(const Matrix& coarse_basis, const Matrix& fine_basis) {
  if (coarse_basis.rows() != fine_basis.rows()) {
    throw ConfigError("column_subspace_model: bases have different lengths");
  }
  ColumnDesign out;
  out.coarse = orthonormal_span(coarse_basis, 1e-10);
  const Matrix f = orthonormal_span(fine_basis, 1e-10);
  const double residual = (out.coarse - f * (f.transpose() * out.coarse)).cwiseAbs().maxCoeff();
  if (out.coarse.cols() > 0 && residual > 1e-8) {
    std::ostringstream os;
    os << "column_subspace_model: coarse span not contained in fine span (residual " << residual
       << ")";
    throw ConfigError(os.str());
  }
  const Matrix complement = f - out.coarse * (out.coarse.transpose() * f);
  if (complement.cols() == 0) {
    out.fine = Matrix(f.rows(), 0);
    return out;
  }
  Eigen::JacobiSVD<Matrix> svd(complement, Eigen::ComputeThinU);
  Index keep = 0;
  while (keep < svd.singularValues().size() && svd.singularValues()[keep] > 1e-8) ++keep;
  out.fine = svd.matrixU().leftCols(keep);
  // Remove rounding-level overlap with the coarse block.
  out.fine -= out.coarse * (out.coarse.transpose() * out.fine);
  if (keep > 0) {
    Eigen::HouseholderQR<Matrix> qr(out.fine);
    out.fine = qr.householderQ() * Matrix::Identity(out.fine.rows(), keep);
  }
  return out;
}

ColumnDesign spline_design(std::span<const double> points, Index df_coarse, Index df_fine) {
  if (df_coarse > df_fine) {
    throw ConfigError("spline design: coarse df " + std::to_string(df_coarse) +
                      " exceeds fine df " + std::to_string(df_fine));
  }
  const Matrix fine = orthonormal_span(natural_spline_basis(points, df_fine), 1e-10);
  const Matrix coarse = natural_spline_basis(points, df_coarse);
  return column_subspace_model(fine * (fine.transpose() * coarse), fine);
}

// ---------------------------------------------------------------------------
// Margin

Margin Margin::identity(Index dim) {
  Margin m;
  m.kind_ = Kind::Identity;
  m.dim_ = dim;
  m.null_ = Matrix(dim, 0);
  return m;
}

Margin Margin::metric(SideMetric s) {
  Margin m;
  m.kind_ = Kind::Metric;
  m.dim_ = s.dim();
  m.null_ = s.null_basis();
  m.metric_ = std::move(s);
  return m;
}

Margin Margin::design(ColumnDesign d) {
  Margin m;
  m.kind_ = Kind::Design;
  m.dim_ = d.coarse.rows();
  m.null_ = d.coarse;
  m.design_ = std::move(d);
  return m;
}

Index Margin::coeff_dim() const noexcept {
  return kind_ == Kind::Design ? design_.fine.cols() : dim_;
}

Matrix Margin::map(const Matrix& coeffs) const {
  if (coeffs.rows() != coeff_dim()) throw DimensionError("margin map: shape mismatch");
  switch (kind_) {
    case Kind::Identity: return coeffs;
    case Kind::Metric: return metric_.apply_pinv(coeffs);
    case Kind::Design:
      flops::add(static_cast<std::uint64_t>(2 * design_.fine.size() * coeffs.cols()));
      return design_.fine * coeffs;
  }
  return coeffs;
}

Matrix Margin::map_adjoint(const Matrix& values) const {
  if (values.rows() != dim_) throw DimensionError("margin adjoint map: shape mismatch");
  switch (kind_) {
    case Kind::Identity: return values;
    case Kind::Metric: return metric_.apply_pinv(values);
    case Kind::Design:
      flops::add(static_cast<std::uint64_t>(2 * design_.fine.size() * values.cols()));
      return design_.fine.transpose() * values;
  }
  return values;
}

Operator Margin::map_operator() const {
  switch (kind_) {
    case Kind::Identity: return Operator::identity(dim_);
    case Kind::Metric: return metric_.pinv_operator();
    case Kind::Design: return Operator::dense(design_.fine);
  }
  return Operator::identity(dim_);
}

double Margin::map_norm() const {
  switch (kind_) {
    case Kind::Identity: return 1.0;
    case Kind::Metric: return metric_.pinv_norm();
    case Kind::Design: return design_.fine.cols() > 0 ? 1.0 : 0.0;
  }
  return 1.0;
}

}  // namespace rrm
