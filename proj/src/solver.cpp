#include "rrm/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "rrm/error.hpp"
#include "rrm/flops.hpp"

namespace rrm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double relative_change(double prev, double cur) {
  const double scale = std::max({std::abs(prev), std::abs(cur), 1e-300});
  return std::abs(prev - cur) / scale;
}

// λ_max(Fᵀ diag(counts) F): the squared norm of c ↦ (F c) sampled on Ω.
double sampled_feature_norm2(const Matrix& f, const Vector& counts) {
  const Matrix gram = f.transpose() * counts.asDiagonal() * f;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  return std::max(eig.eigenvalues().maxCoeff(), 0.0);
}

Vector row_counts(const ObservedMatrix& y) {
  Vector c = Vector::Zero(y.rows());
  for (Index e = 0; e < y.nnz(); ++e) c[y.row(e)] += 1.0;
  return c;
}

Vector col_counts(const ObservedMatrix& y) {
  Vector c = Vector::Zero(y.cols());
  for (Index e = 0; e < y.nnz(); ++e) c[y.col(e)] += 1.0;
  return c;
}

Operator gamma1_gradient_operator(const ModelSpec& spec, const ObservedMatrix& g) {
  std::vector<Operator> factors;
  if (spec.row_margin.kind() != Margin::Kind::Identity) {
    factors.push_back(Operator::transposed(spec.row_margin.map_operator()));
  }
  factors.push_back(Operator::sparse(g));
  if (spec.col_margin.kind() != Margin::Kind::Identity) {
    factors.push_back(spec.col_margin.map_operator());
  }
  return factors.size() == 1 ? factors.front() : Operator::product(std::move(factors));
}

// Prox target Γ₁ − t·g for Γ₁ = LσRᵀ, kept implicit.
Operator prox_target(const LowRankFactors& gamma1, const Operator& grad, double t) {
  const Operator step = Operator::scaled(-t, grad);
  if (gamma1.rank() == 0) return step;
  return Operator::sum({Operator::low_rank(gamma1.left * gamma1.sigma.asDiagonal(), gamma1.right),
                        step});
}

// ‖A − B‖²_F. Writing A − B = X Yᵀ with X = [L_a σ_a, −L_b σ_b] and
// Y = [R_a, R_b], the norm equals ‖R_x R_yᵀ‖ for the triangular QR factors,
// which avoids the cancellation of expanding ‖A‖² + ‖B‖² − 2⟨A, B⟩.
double factored_distance2(const LowRankFactors& a, const LowRankFactors& b) {
  const Index r = a.rank() + b.rank();
  if (r == 0) return 0.0;
  if (a.rank() == 0) return b.sigma.squaredNorm();
  if (b.rank() == 0) return a.sigma.squaredNorm();
  Matrix x(a.left.rows(), r), y(a.right.rows(), r);
  x << a.left * a.sigma.asDiagonal(), -(b.left * b.sigma.asDiagonal());
  y << a.right, b.right;
  auto triangular = [r](const Matrix& m) {
    Eigen::HouseholderQR<Matrix> qr(m);
    const Index k = std::min(m.rows(), r);
    return Matrix(qr.matrixQR().topRows(k).triangularView<Eigen::Upper>());
  };
  return (triangular(x) * triangular(y).transpose()).squaredNorm();
}

// ⟨g, LσRᵀ⟩ for an operator g.
double operator_inner(const Operator& g, const LowRankFactors& f) {
  if (f.rank() == 0) return 0.0;
  const Matrix gr = g.apply(f.right);
  return (f.left.cwiseProduct(gr) * f.sigma).sum();
}

enum class Block { Mu, Alpha, Beta, RowCoef, ColCoef, Gamma2, Gamma3 };

class ProximalFitter {
 public:
  ProximalFitter(const ModelSpec& spec, const ObservedMatrix& y, const SolveOptions& opts,
                 ModelState state)
      : spec_(spec), y_(y), opts_(opts), state_(std::move(state)) {
    kind_ = spec.loss.kind;
    if (opts.step_mode == StepMode::Fixed) {
      curv_ = curvature(spec.loss);
    } else {
      curv_ = spec.loss.kind == LossKind::Poisson && !spec.loss.theta_max
                  ? 1.0
                  : curvature(spec.loss);
    }
    rows_ = row_counts(y);
    cols_ = col_counts(y);
    const OffsetDesign& od = spec.offsets;
    if (od.intercept) blocks_.push_back(Block::Mu);
    if (od.row_effects) blocks_.push_back(Block::Alpha);
    if (od.col_effects) blocks_.push_back(Block::Beta);
    if (od.row_features && od.row_features->values.cols() > 0) {
      blocks_.push_back(Block::RowCoef);
      row_feature_norm2_ = sampled_feature_norm2(od.row_features->values, rows_);
    }
    if (od.col_features && od.col_features->values.cols() > 0) {
      blocks_.push_back(Block::ColCoef);
      col_feature_norm2_ = sampled_feature_norm2(od.col_features->values, cols_);
    }
    if (spec.row_margin.null_dim() > 0) blocks_.push_back(Block::Gamma2);
    if (spec.col_margin.null_dim() > 0) blocks_.push_back(Block::Gamma3);
    has_gamma1_ = opts.update_gamma1 && spec.row_margin.coeff_dim() > 0 &&
                  spec.col_margin.coeff_dim() > 0;
    if (has_gamma1_) {
      const double norms = std::pow(spec.row_margin.map_norm() * spec.col_margin.map_norm(), 2);
      t1_ = opts.fixed_step ? *opts.fixed_step : 1.0 / (curv_ * norms);
      if (!(t1_ > 0.0) || !std::isfinite(t1_)) throw ConfigError("invalid Γ₁ step size");
    }
  }

  FitResult run();

 private:
  double smooth_value(const Vector& theta) const {
    return loss_value(kind_, theta, y_) + ridge_penalty(spec_, state_);
  }
  double full_objective() const { return smooth_value(theta_) + nuclear_penalty(spec_, state_); }

  double block_a2(Block b) const;
  double block_lambda(Block b) const;
  Matrix block_gradient(Block b, const ObservedMatrix& g) const;
  void apply_delta(Block b, const Matrix& delta, Vector& theta);
  double step_smooth_block(Block b);
  double step_gamma1(int iteration, TraceRow& row);
  void polish_offsets();
  ProxResult run_prox(const Operator& target, double t, double tol, int max_iter);

  const ModelSpec& spec_;
  const ObservedMatrix& y_;
  const SolveOptions& opts_;
  ModelState state_;
  LossKind kind_;
  double curv_ = 1.0;
  Vector rows_, cols_;
  double row_feature_norm2_ = 0.0, col_feature_norm2_ = 0.0;
  std::vector<Block> blocks_;
  bool has_gamma1_ = false;
  double t1_ = 0.0;
  Vector theta_;
  double svd_tol_ = 1e-7;
  FitTrace trace_;
};

double ProximalFitter::block_a2(Block b) const {
  switch (b) {
    case Block::Mu: return static_cast<double>(y_.nnz());
    case Block::Alpha: return rows_.maxCoeff();
    case Block::Beta: return cols_.maxCoeff();
    case Block::RowCoef: return row_feature_norm2_;
    case Block::ColCoef: return col_feature_norm2_;
    case Block::Gamma2:
    case Block::Gamma3: return 1.0;  // orthonormal N, sampled on Ω
  }
  return 1.0;
}

double ProximalFitter::block_lambda(Block b) const {
  switch (b) {
    case Block::Alpha:
    case Block::RowCoef: return spec_.lambda_alpha;
    case Block::Beta:
    case Block::ColCoef: return spec_.lambda_beta;
    default: return 0.0;
  }
}

Matrix ProximalFitter::block_gradient(Block b, const ObservedMatrix& g) const {
  switch (b) {
    case Block::Mu: return Matrix::Constant(1, 1, g.values().sum());
    case Block::Alpha: return g.row_sums() + spec_.lambda_alpha * state_.alpha;
    case Block::Beta: return g.col_sums() + spec_.lambda_beta * state_.beta;
    case Block::RowCoef:
      return spec_.offsets.row_features->values.transpose() * g.row_sums() +
             spec_.lambda_alpha * state_.row_coef;
    case Block::ColCoef:
      return spec_.offsets.col_features->values.transpose() * g.col_sums() +
             spec_.lambda_beta * state_.col_coef;
    case Block::Gamma2:
      return g.transpose_times(spec_.row_margin.null_basis()).transpose();
    case Block::Gamma3: {
      Matrix g3 = g.times(spec_.col_margin.null_basis());
      // Γ₃ lives off null(P); the corner belongs to Γ₂.
      if (spec_.row_margin.null_dim() > 0) {
        const Matrix& np = spec_.row_margin.null_basis();
        g3 -= np * (np.transpose() * g3);
      }
      return g3;
    }
  }
  return Matrix();
}

void ProximalFitter::apply_delta(Block b, const Matrix& delta, Vector& theta) {
  const auto ri = y_.row_index();
  const auto ci = y_.col_index();
  const Index nnz = y_.nnz();
  switch (b) {
    case Block::Mu:
      state_.mu += delta(0, 0);
      theta.array() += delta(0, 0);
      break;
    case Block::Alpha:
      state_.alpha += delta.col(0);
      for (Index e = 0; e < nnz; ++e) theta[e] += delta(ri[e], 0);
      break;
    case Block::Beta:
      state_.beta += delta.col(0);
      for (Index e = 0; e < nnz; ++e) theta[e] += delta(ci[e], 0);
      break;
    case Block::RowCoef: {
      state_.row_coef += delta.col(0);
      const Vector d = spec_.offsets.row_features->values * delta.col(0);
      for (Index e = 0; e < nnz; ++e) theta[e] += d[ri[e]];
      break;
    }
    case Block::ColCoef: {
      state_.col_coef += delta.col(0);
      const Vector d = spec_.offsets.col_features->values * delta.col(0);
      for (Index e = 0; e < nnz; ++e) theta[e] += d[ci[e]];
      break;
    }
    case Block::Gamma2: {
      state_.gamma2 += delta;
      const Matrix npt = spec_.row_margin.null_basis().transpose();  // k_P × n
      for (Index e = 0; e < nnz; ++e) theta[e] += npt.col(ri[e]).dot(delta.col(ci[e]));
      flops::add(static_cast<std::uint64_t>(2 * nnz * delta.rows()));
      break;
    }
    case Block::Gamma3: {
      state_.gamma3 += delta;
      const Matrix dt = delta.transpose();                            // k_Q × n
      const Matrix nqt = spec_.col_margin.null_basis().transpose();  // k_Q × m
      for (Index e = 0; e < nnz; ++e) theta[e] += dt.col(ri[e]).dot(nqt.col(ci[e]));
      flops::add(static_cast<std::uint64_t>(2 * nnz * delta.cols()));
      break;
    }
  }
}

// One gradient step on a smooth block with step 1/(curvature·‖A_b‖² + λ_b).
// Returns the Frobenius norm of the change.
double ProximalFitter::step_smooth_block(Block b) {
  const ObservedMatrix g = loss_gradient_sparse(kind_, theta_, y_);
  const Matrix grad = block_gradient(b, g);
  const double lam = block_lambda(b);
  const double a2 = block_a2(b);
  if (opts_.step_mode == StepMode::Fixed) {
    const double t = 1.0 / (curv_ * a2 + lam);
    apply_delta(b, -t * grad, theta_);
    return t * grad.norm();
  }
  // Backtracking: halve until the Armijo condition with constant 1e-4 holds.
  const double before = smooth_value(theta_);
  const double g2 = grad.squaredNorm();
  double local = curv_;
  for (int attempt = 0; attempt < 60; ++attempt) {
    const double t = 1.0 / (local * a2 + lam);
    const ModelState saved = state_;
    Vector theta = theta_;
    apply_delta(b, -t * grad, theta);
    const double after = smooth_value(theta);
    if (std::isfinite(after) && after <= before - 1e-4 * t * g2) {
      theta_ = std::move(theta);
      return t * std::sqrt(g2);
    }
    state_ = saved;
    local *= 2.0;
  }
  return 0.0;
}

ProxResult ProximalFitter::run_prox(const Operator& target, double t, double tol, int max_iter) {
  SvdOptions so;
  so.tol = tol;
  so.max_iter = max_iter;
  so.oversample = opts_.oversample;
  so.seed = opts_.seed;
  const WarmBasis* warm =
      opts_.warm_start && state_.warm && state_.warm->subspace.rows() == target.rows()
          ? &*state_.warm
          : nullptr;
  const Index guess = std::min<Index>(next_rank_guess(state_.gamma1.rank()),
                                      std::min(target.rows(), target.cols()));
  return soft_threshold_svd(target, t * spec_.lambda_gamma, guess, warm, so);
}

// Proximal step on Γ₁. Returns the Frobenius change of Γ₁.
double ProximalFitter::step_gamma1(int iteration, TraceRow& row) {
  (void)iteration;
  const ObservedMatrix g = loss_gradient_sparse(kind_, theta_, y_);
  const Operator grad = gamma1_gradient_operator(spec_, g);
  const double f_old = smooth_value(theta_);
  const double obj_old = f_old + nuclear_penalty(spec_, state_);
  const LowRankFactors old = state_.gamma1;
  const std::optional<WarmBasis> old_warm = state_.warm;

  double t = t1_;
  if (opts_.step_mode == StepMode::Backtracking && row.step > 0.0) t = row.step;

  for (int attempt = 0; attempt < 60; ++attempt) {
    const Operator target = prox_target(old, grad, t);
    ProxResult pr = run_prox(target, t, svd_tol_, opts_.svd_max_iter);
    row.svd_iters += pr.inner_iterations;
    if (!pr.converged) {
      pr = run_prox(target, t, svd_tol_, 2 * opts_.svd_max_iter);
      row.svd_iters += pr.inner_iterations;
      if (!pr.converged) ++trace_.svd_nonconverged;
    }
    LowRankFactors cand{pr.left, pr.sigma, pr.right};
    state_.gamma1 = cand;
    Vector theta = theta_on_omega(spec_, state_, y_);
    double f_new = smooth_value(theta);
    double obj_new = f_new + nuclear_penalty(spec_, state_);

    if (opts_.step_mode == StepMode::Backtracking) {
      const double lin = operator_inner(grad, cand) - operator_inner(grad, old);
      const double quad = factored_distance2(cand, old) / (2.0 * t);
      if (!std::isfinite(f_new) || f_new > f_old + lin + quad + 1e-12 * std::abs(f_old)) {
        state_.gamma1 = old;
        t *= 0.5;
        continue;
      }
    } else if (opts_.monotone_guard && obj_new > obj_old + 1e-12 * std::abs(obj_old)) {
      // Inexact inner SVD: redo with a tight tolerance, then give up on the step.
      ProxResult tight = run_prox(target, t, 1e-12, 4 * opts_.svd_max_iter);
      row.svd_iters += tight.inner_iterations;
      state_.gamma1 = LowRankFactors{tight.left, tight.sigma, tight.right};
      theta = theta_on_omega(spec_, state_, y_);
      f_new = smooth_value(theta);
      obj_new = f_new + nuclear_penalty(spec_, state_);
      if (obj_new > obj_old + 1e-12 * std::abs(obj_old)) {
        state_.gamma1 = old;
        state_.warm = old_warm;
        ++trace_.rejected_steps;
        row.step = t;
        return 0.0;
      }
      pr = std::move(tight);
    }
    state_.warm = pr.warm;
    theta_ = std::move(theta);
    row.step = t;
    return std::sqrt(factored_distance2(state_.gamma1, old));
  }
  state_.gamma1 = old;
  row.step = t;
  return 0.0;
}

// Exact minimization over the offsets for squared-error loss, by block
// Newton steps (exact for a quadratic) swept to convergence.
void ProximalFitter::polish_offsets() {
  std::vector<Block> offsets;
  for (Block b : blocks_) {
    if (b != Block::Gamma2 && b != Block::Gamma3) offsets.push_back(b);
  }
  if (offsets.empty()) return;
  for (int sweep = 0; sweep < 500; ++sweep) {
    double change = 0.0;
    for (Block b : offsets) {
      const ObservedMatrix g = loss_gradient_sparse(kind_, theta_, y_);
      const Matrix grad = block_gradient(b, g);
      const double lam = block_lambda(b);
      Matrix delta;
      switch (b) {
        case Block::Mu: delta = -grad / static_cast<double>(y_.nnz()); break;
        case Block::Alpha: delta = -(grad.array() / (rows_.array() + lam)).matrix(); break;
        case Block::Beta: delta = -(grad.array() / (cols_.array() + lam)).matrix(); break;
        case Block::RowCoef:
        case Block::ColCoef: {
          const Matrix& f = b == Block::RowCoef ? spec_.offsets.row_features->values
                                                : spec_.offsets.col_features->values;
          const Vector& counts = b == Block::RowCoef ? rows_ : cols_;
          Matrix h = f.transpose() * counts.asDiagonal() * f;
          h.diagonal().array() += lam;
          delta = -h.ldlt().solve(grad);
          break;
        }
        default: break;
      }
      apply_delta(b, delta, theta_);
      change = std::max(change, delta.norm());
    }
    if (change < 1e-13) break;
  }
}

FitResult ProximalFitter::run() {
  const auto start = Clock::now();
  canonicalize(spec_, state_);
  theta_ = theta_on_omega(spec_, state_, y_);
  double obj = full_objective();
  if (!std::isfinite(obj)) throw DivergenceError("initial objective is not finite");
  trace_.rows.push_back(TraceRow{0, seconds_since(start), obj, state_.gamma1.rank(), 0, 0.0, 0.0});
  double rel = 1.0;
  svd_tol_ = std::max(opts_.svd_tol_floor, 0.01 * rel);
  double backtrack_step = 0.0;
  trace_.stop_reason = "iteration budget";

  for (int k = 1; k <= opts_.max_iterations; ++k) {
    const double prev = obj;
    TraceRow row;
    row.iteration = k;
    row.step = backtrack_step > 0.0 ? 2.0 * backtrack_step : 0.0;
    double change = 0.0;
    for (Block b : blocks_) change = std::max(change, step_smooth_block(b));
    if (has_gamma1_) {
      change = std::max(change, step_gamma1(k, row));
      backtrack_step = row.step;
    }
    obj = full_objective();
    if (!std::isfinite(obj)) {
      std::ostringstream os;
      os << "objective became non-finite at iteration " << k << " (Γ₁ step " << row.step
         << ", curvature bound " << curv_ << ")";
      throw DivergenceError(os.str());
    }
    rel = relative_change(prev, obj);
    row.seconds = seconds_since(start);
    row.objective = obj;
    row.rank = state_.gamma1.rank();
    trace_.rows.push_back(row);
    svd_tol_ = std::max(opts_.svd_tol_floor, 0.01 * rel);

    if (opts_.rel_tol > 0.0 && rel < opts_.rel_tol) {
      trace_.converged = true;
      trace_.stop_reason = "relative objective change";
      break;
    }
    if (opts_.step_tol > 0.0 && change < opts_.step_tol) {
      trace_.converged = true;
      trace_.stop_reason = "step size";
      break;
    }
    if (opts_.time_budget_seconds > 0.0 && row.seconds > opts_.time_budget_seconds) {
      trace_.stop_reason = "time budget";
      break;
    }
  }

  if (opts_.polish_offsets && kind_ == LossKind::Gaussian) {
    polish_offsets();
    TraceRow row = trace_.rows.back();
    row.iteration += 1;
    row.objective = full_objective();
    row.seconds = seconds_since(start);
    row.svd_iters = 0;
    trace_.rows.push_back(row);
  }
  return FitResult{std::move(state_), std::move(trace_)};
}

void check_inputs(const ModelSpec& spec, const ObservedMatrix& y) {
  spec.validate();
  if (y.rows() != spec.rows() || y.cols() != spec.cols()) {
    throw DimensionError("observations are " + std::to_string(y.rows()) + "x" +
                         std::to_string(y.cols()) + " but the model is " +
                         std::to_string(spec.rows()) + "x" + std::to_string(spec.cols()));
  }
  validate_responses(spec.loss.kind, y);
}

}  // namespace

int FitTrace::total_svd_iterations() const {
  int total = 0;
  for (const TraceRow& r : rows) total += r.svd_iters;
  return total;
}

double gamma1_step(const ModelSpec& spec) {
  const double norms = std::pow(spec.row_margin.map_norm() * spec.col_margin.map_norm(), 2);
  return 1.0 / (curvature(spec.loss) * norms);
}

FitResult fit_proximal(const ModelSpec& spec, const ObservedMatrix& y, const SolveOptions& opts,
                       const std::optional<ModelState>& init) {
  check_inputs(spec, y);
  if (opts.max_iterations < 0) throw ConfigError("max_iterations must be nonnegative");
  if (y.rows() < y.cols()) {
    // Fit Θᵀ so the SVD side is the short one, then map back.
    const ModelSpec tspec = transposed(spec);
    std::optional<ModelState> tinit;
    if (init) {
      tinit = transposed(spec, *init);
      tinit->warm = init->warm;
    }
    FitResult r = ProximalFitter(tspec, y.transposed(), opts,
                                 tinit ? *tinit : ModelState::zeros(tspec))
                      .run();
    const std::optional<WarmBasis> warm = r.state.warm;
    r.state = transposed(tspec, r.state);
    r.state.warm = warm;
    return r;
  }
  ModelState state = init ? *init : ModelState::zeros(spec);
  check_state(spec, state);
  return ProximalFitter(spec, y, opts, std::move(state)).run();
}

double prox_fixed_point_residual(const ModelSpec& spec, const ObservedMatrix& y,
                                 const ModelState& state, double step) {
  const Vector theta = theta_on_omega(spec, state, y);
  const ObservedMatrix g = loss_gradient_sparse(spec.loss.kind, theta, y);
  const Operator target = prox_target(state.gamma1, gamma1_gradient_operator(spec, g), step);
  SvdOptions so;
  so.tol = 1e-13;
  so.max_iter = 20000;
  const Index guess = std::min<Index>(next_rank_guess(state.gamma1.rank()),
                                      std::min(target.rows(), target.cols()));
  const ProxResult pr = soft_threshold_svd(target, step * spec.lambda_gamma, guess, nullptr, so);
  return std::sqrt(factored_distance2(LowRankFactors{pr.left, pr.sigma, pr.right}, state.gamma1));
}

double lambda_max(const ModelSpec& spec, const ObservedMatrix& y, const ModelState& offsets_fit) {
  const Vector theta = theta_on_omega(spec, offsets_fit, y);
  const ObservedMatrix g = loss_gradient_sparse(spec.loss.kind, theta, y);
  const Operator grad = gamma1_gradient_operator(spec, g);
  SvdOptions so;
  so.tol = 1e-10;
  so.max_iter = 5000;
  return subspace_svd(grad, 1, nullptr, so).singular_values[0];
}

// ---------------------------------------------------------------------------
// Frank-Wolfe

FitResult fit_frank_wolfe(const ModelSpec& spec, const ObservedMatrix& y, double delta,
                          const SolveOptions& opts) {
  check_inputs(spec, y);
  if (spec.row_margin.kind() != Margin::Kind::Identity ||
      spec.col_margin.kind() != Margin::Kind::Identity) {
    throw ConfigError("frank-wolfe baseline supports identity margins only");
  }
  const OffsetDesign& od = spec.offsets;
  if (od.intercept || od.row_effects || od.col_effects || od.row_features || od.col_features) {
    throw ConfigError("frank-wolfe baseline does not fit offsets");
  }
  if (!(delta >= 0.0) || !std::isfinite(delta)) {
    throw ConfigError("frank-wolfe radius must be nonnegative and finite");
  }
  const auto start = Clock::now();
  const LossKind kind = spec.loss.kind;
  const Index n = y.rows(), m = y.cols(), nnz = y.nnz();
  const auto ri = y.row_index();
  const auto ci = y.col_index();

  // Γ = U·diag(w)·Vᵀ as a growing list of atoms, compressed periodically.
  Matrix u(n, 0), v(m, 0);
  Vector w(0);
  auto compress = [&]() {
    if (w.size() == 0) return;
    Eigen::HouseholderQR<Matrix> qu(u), qv(v);
    const Index k = w.size();
    const Index ku = std::min(n, k), kv = std::min(m, k);
    const Matrix q_u = qu.householderQ() * Matrix::Identity(n, ku);
    const Matrix q_v = qv.householderQ() * Matrix::Identity(m, kv);
    const Matrix r_u = qu.matrixQR().topRows(ku).triangularView<Eigen::Upper>();
    const Matrix r_v = qv.matrixQR().topRows(kv).triangularView<Eigen::Upper>();
    Eigen::BDCSVD<Matrix> core(r_u * w.asDiagonal() * r_v.transpose(),
                               Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = core.singularValues();
    Index keep = 0;
    while (keep < s.size() && s[keep] > 1e-13 * s[0]) ++keep;
    u = q_u * core.matrixU().leftCols(keep);
    v = q_v * core.matrixV().leftCols(keep);
    w = s.head(keep);
  };

  Vector theta = Vector::Zero(nnz);
  FitResult out;
  out.state = ModelState::zeros(spec);
  FitTrace& trace = out.trace;
  double obj = loss_value(kind, theta, y);
  trace.rows.push_back(TraceRow{0, seconds_since(start), obj, 0, 0, 0.0, 0.0});
  trace.stop_reason = "iteration budget";
  if (delta == 0.0) {
    trace.converged = true;
    trace.stop_reason = "zero radius";
    return out;
  }

  // Compression runs when the atom count doubles, so its cost is amortized.
  Index compress_at = 64;
  std::optional<WarmBasis> warm;
  SvdOptions so;
  so.tol = std::max(opts.lmo_tol, 1e-12);
  so.max_iter = opts.svd_max_iter;
  so.oversample = opts.oversample;
  so.seed = opts.seed;

  for (int k = 0; k < opts.max_iterations; ++k) {
    const ObservedMatrix g = loss_gradient_sparse(kind, theta, y);
    const Operator gop = Operator::sparse(g);
    SvdResult top = subspace_svd(gop, 1, opts.warm_start && warm ? &*warm : nullptr, so);
    int iters = top.inner_iterations;
    if (!top.converged) {
      SvdOptions longer = so;
      longer.max_iter *= 2;
      top = subspace_svd(gop, 1, opts.warm_start && warm ? &*warm : nullptr, longer);
      iters += top.inner_iterations;
      if (!top.converged) ++trace.svd_nonconverged;
    }
    warm = WarmBasis{top.block, 1, top.block_singular_values};
    const Vector uk = top.left.col(0), vk = top.right.col(0);
    const double s1 = top.singular_values[0];
    // Gap ⟨G, Γ − S⟩ with S = −δ·u·vᵀ; on Ω, Γ equals θ since there are no offsets.
    const double gap = g.values().dot(theta) + delta * s1;

    const double gamma = 2.0 / (static_cast<double>(k) + 2.0);
    for (Index e = 0; e < nnz; ++e) {
      theta[e] = (1.0 - gamma) * theta[e] - gamma * delta * uk[ri[e]] * vk[ci[e]];
    }
    flops::add(static_cast<std::uint64_t>(5 * nnz));
    w *= (1.0 - gamma);
    u.conservativeResize(n, u.cols() + 1);
    v.conservativeResize(m, v.cols() + 1);
    w.conservativeResize(w.size() + 1);
    u.col(u.cols() - 1) = -uk;
    v.col(v.cols() - 1) = vk;
    w[w.size() - 1] = gamma * delta;
    if (w.size() >= compress_at) {
      compress();
      compress_at = std::max<Index>(64, 2 * w.size());
    }

    obj = loss_value(kind, theta, y);
    if (!std::isfinite(obj)) {
      throw DivergenceError("frank-wolfe objective became non-finite at iteration " +
                            std::to_string(k + 1));
    }
    TraceRow row;
    row.iteration = k + 1;
    row.seconds = seconds_since(start);
    row.objective = obj;
    row.rank = w.size();
    row.svd_iters = iters;
    row.step = gamma;
    row.gap = gap;
    trace.rows.push_back(row);
    if (opts.rel_tol > 0.0 && gap <= opts.rel_tol * std::max(1.0, std::abs(obj))) {
      trace.converged = true;
      trace.stop_reason = "duality gap";
      break;
    }
    if (opts.time_budget_seconds > 0.0 && row.seconds > opts.time_budget_seconds) {
      trace.stop_reason = "time budget";
      break;
    }
  }
  compress();
  out.state.gamma1 = LowRankFactors{u, w, v};
  out.state.warm = warm;
  trace.rows.back().rank = w.size();
  return out;
}

std::string trace_csv(const FitTrace& trace) {
  std::string out = "iteration,seconds,objective,rank,svd_iters,step\n";
  char buf[256];
  for (const TraceRow& r : trace.rows) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.17g,%lld,%d,%.17g\n", r.iteration, r.seconds,
                  r.objective, static_cast<long long>(r.rank), r.svd_iters, r.step);
    out += buf;
  }
  return out;
}

}  // namespace rrm
