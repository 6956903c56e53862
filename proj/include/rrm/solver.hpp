#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rrm/model.hpp"

namespace rrm {

enum class StepMode { Fixed, Backtracking };

struct SolveOptions {
  int max_iterations = 500;
  double time_budget_seconds = 0.0;  // 0 disables the budget
  double rel_tol = 1e-8;             // relative objective change
  double step_tol = 0.0;             // max block change (Frobenius), 0 disables
  StepMode step_mode = StepMode::Fixed;
  // Overrides the derived Γ₁ step 1/(curvature·‖M_P‖²·‖M_Q‖²) when set.
  std::optional<double> fixed_step;
  // Inner SVD tolerance is max(svd_tol_floor, 0.01·last relative change).
  double svd_tol_floor = 1e-7;
  int svd_max_iter = 300;
  Index oversample = 5;
  std::uint64_t seed = 0x5eed;
  bool warm_start = true;
  bool update_gamma1 = true;  // false fits offsets and null blocks only
  bool polish_offsets = false;  // exact offset minimization at the end (Gaussian only)
  bool monotone_guard = true;   // retry or reject a Γ₁ step that raises the objective
  // Frank-Wolfe only: residual tolerance of the top singular pair. An error
  // of τ in the vectors moves ⟨G, S⟩ by about τ²·σ₁, so a loose value is safe.
  double lmo_tol = 1e-3;
};

struct TraceRow {
  int iteration = 0;
  double seconds = 0.0;
  double objective = 0.0;
  Index rank = 0;
  int svd_iters = 0;
  double step = 0.0;
  double gap = 0.0;  // Frank-Wolfe duality gap (0 for proximal fits)
};

struct FitTrace {
  std::vector<TraceRow> rows;
  bool converged = false;
  std::string stop_reason;
  int svd_nonconverged = 0;  // prox calls that stayed unconverged after the retry
  int rejected_steps = 0;    // Γ₁ steps undone by the monotone guard
  int total_svd_iterations() const;
};

struct FitResult {
  ModelState state;
  FitTrace trace;
};

// Block proximal gradient. Each outer iteration takes gradient steps on the
// offsets (μ, α, β, a, b in turn) and the null-space blocks Γ₂, Γ₃, then a
// proximal step on Γ₁ with a warm-started soft-thresholded SVD.
FitResult fit_proximal(const ModelSpec& spec, const ObservedMatrix& y, const SolveOptions& opts,
                       const std::optional<ModelState>& init = std::nullopt);

// Conditional gradient on {‖Γ‖_* ≤ delta} with step 2/(k+2). Identity
// margins and no offsets; the trace objective is the loss.
FitResult fit_frank_wolfe(const ModelSpec& spec, const ObservedMatrix& y, double delta,
                          const SolveOptions& opts);

// Γ₁ prox residual: Frobenius change of Γ₁ under one more proximal step at
// step t from the given state, computed with a tight SVD.
double prox_fixed_point_residual(const ModelSpec& spec, const ObservedMatrix& y,
                                 const ModelState& state, double step);

// The step 1/(curvature·‖M_P‖²·‖M_Q‖²) used for Γ₁ in fixed mode.
double gamma1_step(const ModelSpec& spec);

// Largest λ_Γ for which Γ₁ = 0 is optimal, given a state that is optimal
// for the offsets and null blocks: ‖M_Pᵀ G M_Q‖₂.
double lambda_max(const ModelSpec& spec, const ObservedMatrix& y, const ModelState& offsets_fit);

std::string trace_csv(const FitTrace& trace);

}  // namespace rrm
