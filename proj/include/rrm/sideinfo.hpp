#pragma once

#include <span>
#include <string>
#include <vector>

#include "rrm/operators.hpp"

namespace rrm {

// Dense n×p row (or m×q column) features. Entries must be finite and p ≤ n.
struct FeatureMatrix {
  Matrix values;
  std::vector<std::string> labels;

  FeatureMatrix() = default;
  explicit FeatureMatrix(Matrix v, std::vector<std::string> l = {});
};

// Penalty metric P = (I − H)^{1/2} for a symmetric smoother H with
// eigenvalues in [0, 1], stored through H's nonzero eigenpairs. Directions
// with d ≥ 1 − 1e-8 are unpenalized and live in null_basis; the remaining
// (basis, eigenvalues) pairs have d < 1 − 1e-8.
//
//   P   = I + W(diag(√(1−d)) − I)Wᵀ − N Nᵀ
//   P⁺  = I + W(diag(1/√(1−d)) − I)Wᵀ − N Nᵀ
//   Π⊥  = N Nᵀ
class SideMetric {
 public:
  static SideMetric identity(Index dim);
  // Eigenpairs of H, already validated: W orthonormal, d in [0, 1].
  static SideMetric from_eigenpairs(const Matrix& w, const Vector& d,
                                    std::vector<std::string> warnings = {});

  Index dim() const noexcept { return dim_; }
  const Matrix& basis() const noexcept { return w_; }
  const Vector& eigenvalues() const noexcept { return d_; }
  const Matrix& null_basis() const noexcept { return null_; }
  Index null_dim() const noexcept { return null_.cols(); }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  Matrix apply_sqrt(const Matrix& x) const;
  Matrix apply_pinv(const Matrix& x) const;
  Matrix apply_null_projection(const Matrix& x) const;

  Operator hat_operator() const;
  Operator sqrt_operator() const;
  Operator pinv_operator() const;
  Operator null_projection_operator() const;

  // Spectral norm of P⁺: max(1/√(1−d)), or 1 if some direction is untouched by H.
  double pinv_norm() const;

 private:
  Index dim_ = 0;
  Matrix w_;
  Vector d_;
  Matrix null_;
  Vector sqrt_coef_;  // √(1−d) − 1
  Vector pinv_coef_;  // 1/√(1−d) − 1
  std::vector<std::string> warnings_;
};

// H = X(XᵀX + σ²Λ)⁻¹Xᵀ for prior precision Λ = Σ_η⁻¹, via an eigendecomposition
// of a p×p core. ConfigError when sigma2 ≤ 0 or Λ is not SPD.
SideMetric ridge_hat(const FeatureMatrix& x, double sigma2, const Matrix& prior_precision);

// Flat-prior limit: H is the projection onto the column span of x. Rank
// deficient directions are dropped with a warning.
SideMetric projection_hat(const FeatureMatrix& x);

// Generic symmetric PSD smoother given by eigenpairs. d outside
// [−1e-10, 1 + 1e-10] is a ConfigError; values are clamped into [0, 1].
SideMetric smoother_metric(const Matrix& w, const Vector& d);

// Natural cubic spline basis (|points| × df; constant and linear columns
// first). Boundary knots at min/max, df − 2 interior knots at equally spaced
// quantiles of the points.
Matrix natural_spline_basis(std::span<const double> points, Index df);
std::vector<double> natural_spline_knots(std::span<const double> points, Index df);

// Column design for a constrained margin: coefficients on the orthonormal
// coarse block are unpenalized; coefficients on the fine complement (fine
// span minus coarse span) carry the nuclear norm; everything outside the fine
// span is excluded.
struct ColumnDesign {
  Matrix coarse;  // B₀, orthonormal
  Matrix fine;    // B₁, orthonormal, B₀ᵀB₁ = 0
};

ColumnDesign column_subspace_model(const Matrix& coarse_basis, const Matrix& fine_basis);

// Spline design with df_coarse ≤ df_fine. Quantile knots for different df do
// not nest, so the coarse natural spline basis is replaced by its least
// squares projection onto the fine span before the blocks are formed. Affine
// functions lie in both spans and are kept exactly.
ColumnDesign spline_design(std::span<const double> points, Index df_coarse, Index df_fine);

// One margin (rows or columns) of the reformulated parameterization
//   Θ = R + M_P Γ₁ M_Qᵀ + N_P Γ₂ + Γ₃ N_Qᵀ.
// `map` is M (dimension × coefficient dimension) and `null_basis` is N:
//   identity: M = I, N empty
//   metric:   M = P⁺, N = null basis of P
//   design:   M = B₁, N = B₀
class Margin {
 public:
  enum class Kind { Identity, Metric, Design };

  Margin() = default;
  static Margin identity(Index dim);
  static Margin metric(SideMetric m);
  static Margin design(ColumnDesign d);

  Kind kind() const noexcept { return kind_; }
  Index dim() const noexcept { return dim_; }
  Index coeff_dim() const noexcept;
  Index null_dim() const noexcept { return null_.cols(); }
  const Matrix& null_basis() const noexcept { return null_; }

  Matrix map(const Matrix& coeffs) const;          // M·X
  Matrix map_adjoint(const Matrix& values) const;  // Mᵀ·Y
  Operator map_operator() const;
  double map_norm() const;

  const SideMetric* side_metric() const noexcept {
    return kind_ == Kind::Metric ? &metric_ : nullptr;
  }
  const ColumnDesign* column_design() const noexcept {
    return kind_ == Kind::Design ? &design_ : nullptr;
  }

 private:
  Kind kind_ = Kind::Identity;
  Index dim_ = 0;
  SideMetric metric_;
  ColumnDesign design_;
  Matrix null_;
};

}  // namespace rrm
