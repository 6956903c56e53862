#pragma once

#include <cstdint>
#include <optional>
#include <random>

#include "rrm/operators.hpp"

namespace rrm {

struct SvdResult {
  Matrix left;            // n×r, orthonormal
  Vector singular_values; // length r, nonincreasing
  Matrix right;           // m×r, orthonormal
  bool converged = false;
  int inner_iterations = 0;
  // Full iteration block (rank + oversampling columns) and its Ritz values,
  // reusable as a warm start.
  Matrix block;
  Vector block_singular_values;
};

// Left singular subspace carried between consecutive SVD calls.
struct WarmBasis {
  Matrix subspace;        // n×b orthonormal
  Index previous_rank = 0;
  Vector singular_values; // Ritz values of the previous call, for the first convergence check
};

struct SvdOptions {
  double tol = 1e-10;
  int max_iter = 1000;
  Index oversample = 5;
  std::uint64_t seed = 0x5eed;
  // Triples with σ_k at or below this are exempt from the convergence test.
  // The prox sets it to the threshold, since those triples are discarded.
  double residual_floor = 0.0;
};

struct OrthonormalizeResult {
  Matrix q;
  bool replaced = false;  // some columns were rank-deficient and replaced
};

// Householder QR with R's diagonal made positive. If some |R_kk| falls below
// 1e-12 of the largest input column norm, falls back to Gram–Schmidt with one
// reorthogonalization pass and replaces each such column by a fresh Gaussian
// direction drawn from rng.
OrthonormalizeResult orthonormalize(const Matrix& block, std::mt19937_64& rng);
OrthonormalizeResult orthonormalize(const Matrix& block);

// Top-`rank` singular triples by block subspace iteration with Rayleigh–Ritz
// extraction. Convergence requires, for every k ≤ rank with σ_k above both
// tol·σ₁ and residual_floor, ‖Aᵀu_k − σ_k v_k‖ ≤ tol·σ₁ (A v_k = σ_k u_k holds by
// construction) and a relative change of those σ below tol. Left vectors
// follow the sign convention: first nonzero coordinate nonnegative.
SvdResult subspace_svd(const Operator& op, Index rank, const WarmBasis* warm,
                       const SvdOptions& opts = {});

struct ProxResult {
  Matrix left;     // n×r
  Vector sigma;    // shrunk singular values, all > 0
  Matrix right;    // m×r
  WarmBasis warm;  // for the next call
  bool converged = false;
  int inner_iterations = 0;  // summed over rank escalations
  Index computed_rank = 0;   // rank of the last subspace_svd call
};

// argmin_Γ ½‖Z − Γ‖²_F + threshold·‖Γ‖_* for Z = op. Escalates the working
// rank ×2 (capped at min(n,m)) until the smallest computed singular value
// is at or below the threshold.
ProxResult soft_threshold_svd(const Operator& op, double threshold, Index rank_guess,
                              const WarmBasis* warm, const SvdOptions& opts = {});

// Working rank for the next prox call: max(previous retained + 2, 10).
Index next_rank_guess(Index previous_retained);

}  // namespace rrm
