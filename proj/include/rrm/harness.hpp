#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rrm/solver.hpp"

namespace rrm {

// ---------------------------------------------------------------------------
// Synthetic data

struct SyntheticSpec {
  Index n = 1000;
  Index m = 800;
  Index rank = 10;
  Index per_row = 40;
  LossKind loss = LossKind::Bernoulli;
  // Θ = UVᵀ with U ~ N(0, scale²/rank) and V ~ N(0, 1), so sd(Θ_ij) = scale.
  double scale = 1.0;
  double noise_sd = 1.0;  // Gaussian responses only
  std::uint64_t seed = 1;
};

struct SyntheticData {
  ObservedMatrix y;
  Matrix u;      // n × rank
  Matrix v;      // m × rank
  Vector theta;  // true Θ on Ω, aligned with y
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

// Draws responses from the family at natural parameters theta (aligned with
// pattern). Poisson draws use the mean exp(θ).
ObservedMatrix sample_responses(LossKind kind, const ObservedMatrix& pattern, const Vector& theta,
                                double noise_sd, std::mt19937_64& rng);

// Ω with `per_row` distinct uniformly chosen columns per row (values zero).
ObservedMatrix sample_pattern(Index n, Index m, Index per_row, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Splits and metrics

struct Split {
  ObservedMatrix train;
  ObservedMatrix test;
};

// Entrywise random partition; `fraction` of the entries go to the test part
// (rounded, at least one entry in each part). Rows or columns may lose all
// their training entries; predictions there come from the offsets.
Split split(const ObservedMatrix& y, double fraction, std::uint64_t seed);

// Entry positions of `folds` disjoint folds of nearly equal size.
std::vector<std::vector<Index>> fold_positions(Index nnz, int folds, std::uint64_t seed);
// Complement of positions in [0, nnz).
std::vector<Index> complement_positions(Index nnz, const std::vector<Index>& positions);

struct EvalMetrics {
  double deviance = 0.0;           // mean unit deviance
  double mse = 0.0;                // mean (y − ψ'(θ))²
  double misclassification = 0.0;  // Bernoulli only, NaN otherwise
  double log_loss = 0.0;           // Bernoulli only, NaN otherwise
};

EvalMetrics evaluate(LossKind kind, const Vector& theta, const ObservedMatrix& test);
EvalMetrics evaluate(const ModelSpec& spec, const ModelState& state, const ObservedMatrix& test);

// ---------------------------------------------------------------------------
// Paths and cross-validation

struct PathPoint {
  double lambda = 0.0;
  double objective = 0.0;
  double train_deviance = 0.0;
  std::optional<EvalMetrics> test;
  Index rank = 0;
  double seconds = 0.0;
  int svd_iterations = 0;
  int iterations = 0;
  bool converged = false;
  std::string error;  // empty when the fit succeeded
  FitTrace trace;
  ModelState state;
};

// Offsets and null blocks only (Γ₁ held at zero).
FitResult fit_offsets(const ModelSpec& spec, const ObservedMatrix& y, const SolveOptions& opts);

// ‖M_Pᵀ G₀ M_Q‖₂ at the offsets-only fit: the smallest λ_Γ with Γ₁ = 0.
double data_lambda_max(const ModelSpec& spec, const ObservedMatrix& y, const SolveOptions& opts);

// count values from top down to top·min_ratio, geometrically spaced.
std::vector<double> geometric_grid(double top, int count, double min_ratio);

// Fits along a strictly descending grid. With warm_start each fit starts
// from the previous solution (including its SVD subspace). Errors are
// recorded per point and the path continues.
std::vector<PathPoint> lambda_path(const ModelSpec& spec, const ObservedMatrix& train,
                                   const ObservedMatrix* test, const std::vector<double>& grid,
                                   const SolveOptions& opts, bool warm_start = true);

struct CvResult {
  std::vector<double> grid;
  Matrix fold_deviance;  // folds × grid
  Vector mean_deviance;  // per λ
  Vector se_deviance;    // per λ, sd across folds / √folds
  Index selected = 0;
  double lambda = 0.0;
  PathPoint refit;  // fit on all of y at the selected λ
};

CvResult cross_validate(const ModelSpec& spec, const ObservedMatrix& y, int folds,
                        const std::vector<double>& grid, const SolveOptions& opts,
                        std::uint64_t seed);

// Ridge weights for the offsets chosen on held-out data with Γ removed:
// λ_α = λ_β on a log grid, 10 points per decade across 4 decades centred on 1.
double select_offset_ridge(ModelSpec spec, const ObservedMatrix& train, const ObservedMatrix& test,
                           const SolveOptions& opts);

// ---------------------------------------------------------------------------
// Side-information ablation

struct Variant {
  std::string name;
  ModelSpec spec;
};

struct AblationOptions {
  double test_fraction = 0.2;
  int folds = 3;
  int grid_size = 8;
  double min_ratio = 0.05;
  std::uint64_t seed = 1;
  SolveOptions solve;
};

struct AblationRow {
  std::string name;
  double lambda = 0.0;
  double cv_deviance = 0.0;
  Vector cv_fold_deviance;  // per fold at the selected λ
  EvalMetrics test;
  Index rank = 0;
  double seconds = 0.0;
  // Relative to the first variant, same split and folds.
  double delta_test_deviance = 0.0;
  double delta_cv_deviance = 0.0;
  double delta_cv_se = 0.0;  // paired standard error of the fold differences
};

std::vector<AblationRow> side_info_ablation(const ObservedMatrix& y,
                                            const std::vector<Variant>& variants,
                                            const AblationOptions& opts);

// ---------------------------------------------------------------------------
// Desk-scale stand-ins for the educational-testing and phoneme experiments

struct GroupedSpec {
  Index rows = 400;
  Index cols = 200;
  Index groups = 20;
  Index rank = 5;
  Index per_row = 30;
  double scale = 2.0;
  bool noise_features = false;  // features unrelated to the latent groups
  std::uint64_t seed = 1;
};

struct GroupedData {
  ObservedMatrix y;  // Bernoulli
  FeatureMatrix row_features;  // group dummies
  std::vector<Index> group;    // true group of each row
};

// Row factors u_i = (η_{g(i)} + ε_i)/√2 with η, ε iid N(0, 1), so the group
// effects and the individual deviations are of the same order.
GroupedData generate_grouped(const GroupedSpec& spec);

struct CurveSpec {
  Index curves = 200;
  Index grid = 256;
  Index samples = 26;
  Index df_coarse = 4;
  Index df_fine = 12;
  Index rank = 3;
  double noise_sd = 0.3;
  std::uint64_t seed = 1;
};

struct CurveData {
  ObservedMatrix train;  // `samples` noisy points per curve
  ObservedMatrix test;   // every other grid point, noisy
  Matrix truth;          // curves × grid
  std::vector<double> points;
};

// Curves = smooth mean + rank-`rank` smooth cross-curve structure
// + per-curve coarse trend, all in the fine spline span, plus noise.
CurveData generate_curves(const CurveSpec& spec);

// One dummy column per distinct category, in order of first appearance.
FeatureMatrix dummy_features(const std::vector<std::string>& categories);

}  // namespace rrm
