#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "rrm/losses.hpp"
#include "rrm/sideinfo.hpp"
#include "rrm/svd.hpp"

namespace rrm {

// Additive offsets R(μ, α, β):
//   R_ij = μ + α_i + β_j + x_iᵀa + z_jᵀb
// Each term is switched on separately. Feature coefficients share the ridge
// weight of the matching intercept vector.
struct OffsetDesign {
  bool intercept = false;
  bool row_effects = false;
  bool col_effects = false;
  std::optional<FeatureMatrix> row_features;  // n×p
  std::optional<FeatureMatrix> col_features;  // m×q
};

// The convex program in three-block form:
//   Θ = R + M_P Γ₁ M_Qᵀ + N_P Γ₂ + Γ₃ N_Qᵀ
//   minimize  loss(Θ) + λ_Γ‖Γ₁‖_* + (λ_α/2)(‖α‖² + ‖a‖²) + (λ_β/2)(‖β‖² + ‖b‖²)
// where (M, N) come from each margin (see Margin).
struct ModelSpec {
  Loss loss;
  OffsetDesign offsets;
  double lambda_alpha = 0.0;
  double lambda_beta = 0.0;
  Margin row_margin;
  Margin col_margin;
  double lambda_gamma = 1.0;

  Index rows() const noexcept { return row_margin.dim(); }
  Index cols() const noexcept { return col_margin.dim(); }
  // Throws ConfigError describing the first inconsistency.
  void validate() const;
};

// Γ₁ = L·diag(σ)·Rᵀ in margin coefficient coordinates.
struct LowRankFactors {
  Matrix left;   // coeff_dim_P × r
  Vector sigma;  // r, positive
  Matrix right;  // coeff_dim_Q × r

  Index rank() const noexcept { return sigma.size(); }
  Matrix dense() const { return left * sigma.asDiagonal() * right.transpose(); }
};

struct ModelState {
  double mu = 0.0;
  Vector alpha;     // n (empty if unused)
  Vector beta;      // m
  Vector row_coef;  // p
  Vector col_coef;  // q
  LowRankFactors gamma1;
  Matrix gamma2;  // k_P × m, coordinates in N_P
  Matrix gamma3;  // n × k_Q, coordinates in N_Q
  std::optional<WarmBasis> warm;

  // All-zero state with blocks shaped for spec.
  static ModelState zeros(const ModelSpec& spec);
};

// Shape check; throws DimensionError on mismatch.
void check_state(const ModelSpec& spec, const ModelState& state);

// Θ on the entries of omega, in its row-major order, without forming Θ.
Vector theta_on_omega(const ModelSpec& spec, const ModelState& state, const ObservedMatrix& omega);
Vector theta_at(const ModelSpec& spec, const ModelState& state,
                std::span<const std::pair<Index, Index>> pairs);

// Offsets part R on omega only.
Vector offsets_on_omega(const ModelSpec& spec, const ModelState& state, const ObservedMatrix& omega);

// Ridge part (λ_α/2)(‖α‖² + ‖a‖²) + (λ_β/2)(‖β‖² + ‖b‖²).
double ridge_penalty(const ModelSpec& spec, const ModelState& state);
double nuclear_penalty(const ModelSpec& spec, const ModelState& state);

// loss + ridge (everything except the nuclear norm).
double smooth_objective(const ModelSpec& spec, const ModelState& state, const ObservedMatrix& y);
double objective(const ModelSpec& spec, const ModelState& state, const ObservedMatrix& y);

struct BlockGradients {
  ObservedMatrix g;  // sparse loss gradient on Ω
  double mu = 0.0;
  Vector alpha;
  Vector beta;
  Vector row_coef;
  Vector col_coef;
  std::optional<Operator> gamma1;  // M_Pᵀ·G·M_Q, unmaterialized
  Matrix gamma2;                   // N_Pᵀ·G
  Matrix gamma3;                   // G·N_Q
};

// Gradient of the smooth part with respect to every block.
BlockGradients block_gradients(const ModelSpec& spec, const ModelState& state,
                               const ObservedMatrix& y);
// Same, from a precomputed sparse loss gradient.
BlockGradients block_gradients_from(const ModelSpec& spec, const ModelState& state,
                                    const ObservedMatrix& g);

// Dense n×m Θ for small problems and reporting.
Matrix theta_dense(const ModelSpec& spec, const ModelState& state);

// Moves the part of Γ₃ lying in the row null space into Γ₂ (Θ unchanged).
void canonicalize(const ModelSpec& spec, ModelState& state);

// Spec and state of the transposed problem Θᵀ.
ModelSpec transposed(const ModelSpec& spec);
ModelState transposed(const ModelSpec& spec, const ModelState& state);

struct Prediction {
  Vector theta;  // natural-parameter scale
  Vector mean;   // ψ'(θ)
};

// Throws PredictionError naming the first out-of-range pair.
Prediction predict(const ModelSpec& spec, const ModelState& state,
                   std::span<const std::pair<Index, Index>> pairs);

}  // namespace rrm
