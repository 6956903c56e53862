// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Tolerances and sizes are fixed here.
// Pass criterion numbers as arguments to run a subset.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "rrm/error.hpp"
#include "rrm/flops.hpp"
#include "rrm/harness.hpp"
#include "rrm/model.hpp"
#include "rrm/solver.hpp"
#include "rrm/svd.hpp"

using namespace rrm;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Random eigenpairs for a smoother on `dim` coordinates with `nulls`
// eigenvalues equal to one (unpenalized directions) and `others` in (0, 0.9).
SideMetric random_metric(Index dim, Index nulls, Index others, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 0.9);
  const Index k = nulls + others;
  Matrix w = oracle::orthonormal(dim, k, rng);
  Vector d(k);
  for (Index i = 0; i < k; ++i) d[i] = i < nulls ? 1.0 : u(rng);
  return smoother_metric(w, d);
}

// 1. Prox correctness -------------------------------------------------------

Outcome prox_correctness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<Index> dim(2, 40);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst_gap = 0.0, worst_sub = 0.0;
  int bad = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = dim(rng), m = std::min<Index>(dim(rng), 30);
    // Low-rank signal plus noise, so thresholds fall at varied ranks.
    const Index r = std::min<Index>({n, m, 1 + trial % 8});
    Matrix z = 3.0 * oracle::gaussian(n, r, rng) * oracle::gaussian(r, m, rng) +
               oracle::gaussian(n, m, rng, 0.3);
    Eigen::JacobiSVD<Matrix> svd(z);
    const Vector s = svd.singularValues();
    const double thr = s[s.size() - 1] + unit(rng) * (s[0] - s[s.size() - 1]);
    // Odd trials present Z as a sum of two terms to exercise the sum node.
    const Matrix part = oracle::gaussian(n, m, rng);
    const Operator op = trial % 2 == 0
                            ? Operator::dense(z)
                            : Operator::sum({Operator::dense(z - part), Operator::dense(part)});
    SvdOptions so;
    so.tol = 1e-10;
    const ProxResult pr = soft_threshold_svd(op, thr, 1 + trial % 5, nullptr, so);
    const Matrix gamma = pr.left * pr.sigma.asDiagonal() * pr.right.transpose();
    const oracle::DenseSvt ref = oracle::soft_threshold(z, thr);
    const double gap = (gamma - ref.gamma).norm();
    // Subgradient: Z − Γ = thr·(L Rᵀ + W), ‖W‖₂ ≤ 1, LᵀW = 0, W R = 0.
    const Matrix w = (z - gamma) / thr - pr.left * pr.right.transpose();
    const double sub = std::max({oracle::spectral_norm(w) - 1.0, (pr.left.transpose() * w).norm(),
                                 (w * pr.right).norm()});
    worst_gap = std::max(worst_gap, gap);
    worst_sub = std::max(worst_sub, sub);
    if (!(gap <= 1e-8) || !(sub <= 1e-8)) ++bad;
  }
  const double secs = since(t0);
  return {bad == 0 && secs < 10.0,
          fmt("200 instances, max ||G-G_ref||_F %.2e, max subgradient violation %.2e, %d bad, "
              "%.1fs (limit 10s)",
              worst_gap, worst_sub, bad, secs)};
}

// 2. Factored-form equivalence ------------------------------------------------

Outcome factored_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> lam(0.3, 2.0);
  double worst = 0.0;
  int bad = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 6, m = 5;
    const Matrix y = oracle::gaussian(n, m, rng, 1.5);
    const Index p_null = 1 + trial % 2, q_null = trial % 3 == 0 ? 1 : 0;
    const SideMetric pm = random_metric(n, p_null, 2, rng);
    const SideMetric qm = random_metric(m, q_null, 2, rng);
    ModelSpec s;
    s.loss.kind = LossKind::Gaussian;
    s.row_margin = Margin::metric(pm);
    s.col_margin = Margin::metric(qm);
    s.lambda_gamma = lam(rng);
    const ObservedMatrix obs = oracle::full_observed(y);
    SolveOptions o;
    o.max_iterations = 200000;
    o.rel_tol = 1e-15;
    o.svd_tol_floor = 1e-12;
    const FitResult fit = fit_proximal(s, obs, o);
    // The library loss drops ½‖Y‖²; add it back for ½‖Y − Θ‖².
    const double ours = objective(s, fit.state, obs) + 0.5 * y.squaredNorm();
    const oracle::DenseMetric dp = oracle::dense_metric(pm), dq = oracle::dense_metric(qm);
    const double ref = oracle::factored_alternating_ridge(y, dp.p, dq.p, s.lambda_gamma,
                                                          n + p_null + q_null, 20, rng, 20000);
    const double rel = std::abs(ours - ref) / std::max(1.0, std::abs(ref));
    worst = std::max(worst, rel);
    if (!(rel <= 1e-4)) ++bad;
  }
  const double secs = since(t0);
  return {bad == 0 && secs < 120.0,
          fmt("50 instances, max relative objective gap %.2e (limit 1e-4), %d bad, %.1fs "
              "(limit 120s)",
              worst, bad, secs)};
}

// 3. MAP equivalence --------------------------------------------------------

Outcome map_equivalence() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> unit(0.2, 2.0);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 6, m = 5, p = 2;
    const LossKind kind = trial % 2 == 0 ? LossKind::Gaussian : LossKind::Bernoulli;
    const Matrix x = oracle::gaussian(n, p, rng);
    const double sigma2 = unit(rng);
    Matrix a = oracle::gaussian(p, p, rng);
    const Matrix prior_precision = a * a.transpose() + 0.5 * Matrix::Identity(p, p);

    ModelSpec s;
    s.loss.kind = kind;
    s.offsets.intercept = true;
    s.offsets.row_effects = true;
    s.offsets.col_effects = true;
    s.lambda_alpha = unit(rng);
    s.lambda_beta = unit(rng);
    s.row_margin = Margin::metric(ridge_hat(FeatureMatrix(x), sigma2, prior_precision));
    s.col_margin = Margin::identity(m);
    s.lambda_gamma = 1.0 / sigma2;

    ObservedMatrix pattern = oracle::random_observed(n, m, 0.8, rng);
    Vector vals(pattern.nnz());
    std::bernoulli_distribution bit(0.5);
    for (Index e = 0; e < vals.size(); ++e) {
      vals[e] = kind == LossKind::Gaussian ? oracle::gaussian_vec(1, rng)[0] : (bit(rng) ? 1.0 : 0.0);
    }
    const ObservedMatrix y = pattern.with_values(vals);
    SolveOptions o;
    o.max_iterations = 3000;
    o.rel_tol = 1e-12;
    const ModelState st = fit_proximal(s, y, o).state;
    const double reformulated = objective(s, st, y);

    // Rebuild U, V and η̂ = MU densely, then evaluate the hierarchical MAP
    // criterion: loss + ‖U − Xη‖²/2σ² + ‖V‖²/2σ² + ½ηᵀΣ_η⁻¹η + ridge prior.
    const Matrix core = x.transpose() * x + sigma2 * prior_precision;
    const Matrix mmat = core.ldlt().solve(x.transpose());
    const Matrix h = x * mmat;
    Eigen::SelfAdjointEigenSolver<Matrix> es(Matrix::Identity(n, n) - h);
    const Matrix p_inv_sqrt =
        es.eigenvectors() * es.eigenvalues().cwiseInverse().cwiseSqrt().asDiagonal() *
        es.eigenvectors().transpose();
    const Matrix root = st.gamma1.sigma.cwiseSqrt().asDiagonal();
    const Matrix u = p_inv_sqrt * st.gamma1.left * root;
    const Matrix v = st.gamma1.right * root;
    const Matrix eta = mmat * u;
    Matrix theta = Matrix::Constant(n, m, st.mu);
    theta.colwise() += st.alpha;
    theta.rowwise() += st.beta.transpose();
    theta += u * v.transpose();
    double map = oracle::dense_loss(kind, theta, y);
    map += (u - x * eta).squaredNorm() / (2.0 * sigma2) + v.squaredNorm() / (2.0 * sigma2);
    map += 0.5 * (eta.transpose() * prior_precision * eta).trace();
    map += 0.5 * s.lambda_alpha * st.alpha.squaredNorm() + 0.5 * s.lambda_beta * st.beta.squaredNorm();
    worst = std::max(worst, oracle::relative(map, reformulated));
  }
  return {worst <= 1e-8,
          fmt("20 instances, max relative gap between MAP and reformulated objective %.2e "
              "(limit 1e-8)",
              worst)};
}

// 4. Gradient checks ----------------------------------------------------------

ModelSpec full_spec(LossKind loss, std::mt19937_64& rng) {
  ModelSpec s;
  s.loss.kind = loss;
  s.loss.theta_max = 3.0;
  s.offsets.intercept = true;
  s.offsets.row_effects = true;
  s.offsets.col_effects = true;
  s.offsets.row_features = FeatureMatrix(oracle::gaussian(6, 2, rng));
  s.offsets.col_features = FeatureMatrix(oracle::gaussian(5, 1, rng));
  s.lambda_alpha = 0.7;
  s.lambda_beta = 1.3;
  s.lambda_gamma = 0.4;
  s.row_margin = Margin::metric(random_metric(6, 1, 2, rng));
  Matrix fine(5, 3);
  fine << Matrix::Ones(5, 1), oracle::gaussian(5, 2, rng);
  s.col_margin = Margin::design(column_subspace_model(Matrix::Ones(5, 1), fine));
  return s;
}

Outcome gradient_checks() {
  std::mt19937_64 rng(404);
  double worst = 0.0;
  int checks = 0;
  auto record = [&](double fd, double an) {
    worst = std::max(worst, std::abs(fd - an) / std::max(1.0, std::abs(an)));
    ++checks;
  };
  const double h = 1e-5;
  for (LossKind kind : {LossKind::Gaussian, LossKind::Bernoulli, LossKind::Poisson}) {
    // Scalar derivatives of ψ.
    for (int k = 0; k < 20; ++k) {
      const double t = oracle::gaussian_vec(1, rng, 1.5)[0];
      record((psi(kind, t + h) - psi(kind, t - h)) / (2 * h), psi_prime(kind, t));
      record((psi_prime(kind, t + h) - psi_prime(kind, t - h)) / (2 * h), psi_second(kind, t));
    }
    // Loss gradient on Ω.
    ModelSpec s = full_spec(kind, rng);
    ObservedMatrix pattern = oracle::random_observed(6, 5, 0.7, rng);
    Vector vals(pattern.nnz());
    std::poisson_distribution<int> count(1.5);
    for (Index e = 0; e < vals.size(); ++e) {
      vals[e] = kind == LossKind::Gaussian ? oracle::gaussian_vec(1, rng)[0]
                                           : std::min<double>(count(rng), kind == LossKind::Bernoulli ? 1 : 99);
    }
    const ObservedMatrix y = pattern.with_values(vals);
    const Vector t0 = oracle::gaussian_vec(y.nnz(), rng, 0.5);
    const Vector g = loss_gradient_sparse(kind, t0, y).values();
    for (int k = 0; k < 20; ++k) {
      const Vector d = oracle::gaussian_vec(y.nnz(), rng);
      record((loss_value(kind, t0 + h * d, y) - loss_value(kind, t0 - h * d, y)) / (2 * h), g.dot(d));
    }

    // Every model block against a dense objective built test-side. Γ₁ is
    // held as left·I·Iᵀ so perturbing `left` perturbs Γ₁ itself.
    ModelState st = ModelState::zeros(s);
    auto randomize = [&](Vector& v) { v = oracle::gaussian_vec(v.size(), rng, 0.3); };
    st.mu = 0.2;
    randomize(st.alpha);
    randomize(st.beta);
    randomize(st.row_coef);
    randomize(st.col_coef);
    const Index kp = s.row_margin.coeff_dim(), kq = s.col_margin.coeff_dim();
    st.gamma1 = LowRankFactors{oracle::gaussian(kp, kq, rng, 0.3), Vector::Ones(kq),
                               Matrix::Identity(kq, kq)};
    st.gamma2 = oracle::gaussian(st.gamma2.rows(), st.gamma2.cols(), rng, 0.3);
    st.gamma3 = oracle::gaussian(st.gamma3.rows(), st.gamma3.cols(), rng, 0.3);
    const BlockGradients bg = block_gradients(s, st, y);
    auto smooth = [&](const ModelState& z) {
      return oracle::dense_objective(s, z, y) - s.lambda_gamma * z.gamma1.sigma.sum();
    };
    auto flat = [](const Matrix& mtx) { return Vector(Eigen::Map<const Vector>(mtx.data(), mtx.size())); };
    struct BlockRef {
      std::function<Eigen::Map<Vector>(ModelState&)> view;
      Vector grad;
    };
    std::vector<BlockRef> blocks = {
        {[](ModelState& z) { return Eigen::Map<Vector>(&z.mu, 1); }, Vector::Constant(1, bg.mu)},
        {[](ModelState& z) { return Eigen::Map<Vector>(z.alpha.data(), z.alpha.size()); }, bg.alpha},
        {[](ModelState& z) { return Eigen::Map<Vector>(z.beta.data(), z.beta.size()); }, bg.beta},
        {[](ModelState& z) { return Eigen::Map<Vector>(z.row_coef.data(), z.row_coef.size()); },
         bg.row_coef},
        {[](ModelState& z) { return Eigen::Map<Vector>(z.col_coef.data(), z.col_coef.size()); },
         bg.col_coef},
        {[](ModelState& z) { return Eigen::Map<Vector>(z.gamma1.left.data(), z.gamma1.left.size()); },
         flat(oracle::materialize(*bg.gamma1))},
        {[](ModelState& z) { return Eigen::Map<Vector>(z.gamma2.data(), z.gamma2.size()); },
         flat(bg.gamma2)},
        {[](ModelState& z) { return Eigen::Map<Vector>(z.gamma3.data(), z.gamma3.size()); },
         flat(bg.gamma3)},
    };
    for (const BlockRef& b : blocks) {
      ModelState probe = st;
      const Index len = b.view(probe).size();
      if (len == 0 || b.grad.size() != len) {
        if (b.grad.size() != len) record(1.0, 0.0);
        continue;
      }
      for (int k = 0; k < 20; ++k) {
        const Vector d = oracle::gaussian_vec(len, rng);
        ModelState plus = st, minus = st;
        b.view(plus) += h * d;
        b.view(minus) -= h * d;
        record((smooth(plus) - smooth(minus)) / (2 * h), b.grad.dot(d));
      }
    }
  }
  return {worst < 1e-6,
          fmt("%d directional checks over 3 losses and 8 blocks, max relative error %.2e "
              "(limit 1e-6)",
              checks, worst)};
}

// 5. Descent and fixed point ----------------------------------------------------

Outcome descent_and_fixed_point() {
  std::mt19937_64 rng(505);
  std::uniform_int_distribution<Index> dim(5, 30);
  double worst_rise = 0.0, worst_fp = 0.0;
  int rises = 0, unconverged = 0, fp_bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = dim(rng), m = dim(rng);
    ObservedMatrix pattern = oracle::random_observed(n, m, 0.5, rng);
    const Matrix truth = oracle::gaussian(n, 2, rng) * oracle::gaussian(2, m, rng);
    Vector vals(pattern.nnz());
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (Index e = 0; e < vals.size(); ++e) {
      const double pr = 1.0 / (1.0 + std::exp(-truth(pattern.row(e), pattern.col(e))));
      vals[e] = unit(rng) < pr ? 1.0 : 0.0;
    }
    const ObservedMatrix y = pattern.with_values(vals);
    ModelSpec s;
    s.loss.kind = LossKind::Bernoulli;
    s.offsets.intercept = trial % 2 == 0;
    s.offsets.row_effects = trial % 3 == 0;
    s.lambda_alpha = 1.0;
    // No null directions here: an unpenalized Γ₂ block has no finite
    // logistic optimum on small separable samples.
    s.row_margin = trial % 4 == 1 ? Margin::metric(random_metric(n, 0, 3, rng)) : Margin::identity(n);
    s.col_margin = Margin::identity(m);
    SolveOptions o;
    // Objective changes stall at rounding level long before the iterates
    // settle, so convergence is declared on the block step size.
    o.max_iterations = 50000;
    o.rel_tol = 0.0;
    o.step_tol = 1e-10;
    o.svd_tol_floor = 1e-12;
    o.monotone_guard = false;  // descent must hold without step rejection
    s.lambda_gamma = 0.3 * data_lambda_max(s, y, o);
    const FitResult fit = fit_proximal(s, y, o);
    const auto& rows = fit.trace.rows;
    for (std::size_t k = 1; k < rows.size(); ++k) {
      const double rise = rows[k].objective - rows[k - 1].objective;
      const double slack = 1e-12 * std::max(1.0, std::abs(rows[k - 1].objective));
      worst_rise = std::max(worst_rise, rise);
      if (rise > slack) ++rises;
    }
    if (!fit.trace.converged) {
      ++unconverged;
      continue;
    }
    const double fp = prox_fixed_point_residual(s, y, fit.state, gamma1_step(s));
    worst_fp = std::max(worst_fp, fp);
    if (!(fp < 1e-8)) ++fp_bad;
  }
  return {rises == 0 && unconverged == 0 && fp_bad == 0,
          fmt("100 logistic fits, %d objective rises (max rise %.2e), %d unconverged, max "
              "fixed-point residual %.2e (limit 1e-8), %d above limit",
              rises, worst_rise, unconverged, worst_fp, fp_bad)};
}

// 6 and 7. Desk-scale timing instance ------------------------------------------------

struct LargeRuns {
  SyntheticData data;
  ModelSpec spec;
  FitResult warm;
  FitResult cold;
  double warm_seconds = 0.0;
  double cold_seconds = 0.0;
};

// 500×400 logistic, rank 10, 40 per row. Factor scale 3 gives a clear signal
// at this observation rate; λ = 0.4·λ_max.
const LargeRuns& large_runs() {
  static std::optional<LargeRuns> runs;
  if (runs) return *runs;
  LargeRuns r;
  SyntheticSpec sp;
  sp.n = 500;
  sp.m = 400;
  sp.rank = 10;
  sp.per_row = 40;
  sp.scale = 3.0;
  sp.seed = 11;
  r.data = generate_synthetic(sp);
  r.spec.loss.kind = LossKind::Bernoulli;
  r.spec.row_margin = Margin::identity(sp.n);
  r.spec.col_margin = Margin::identity(sp.m);
  SolveOptions o;
  o.max_iterations = 5000;
  o.rel_tol = 1e-10;
  r.spec.lambda_gamma = 0.4 * data_lambda_max(r.spec, r.data.y, o);
  auto t0 = Clock::now();
  r.warm = fit_proximal(r.spec, r.data.y, o);
  r.warm_seconds = since(t0);
  o.warm_start = false;
  t0 = Clock::now();
  r.cold = fit_proximal(r.spec, r.data.y, o);
  r.cold_seconds = since(t0);
  runs = std::move(r);
  return *runs;
}

// First trace time at which (value − best)/|best| ≤ tol, or nullopt.
std::optional<double> time_to(const FitTrace& trace, double best, double tol) {
  for (const TraceRow& row : trace.rows) {
    if ((row.objective - best) / std::abs(best) <= tol) return row.seconds;
  }
  return std::nullopt;
}

Outcome cross_method_agreement() {
  const LargeRuns& r = large_runs();
  const double best = r.warm.trace.rows.back().objective;
  const double delta = r.warm.state.gamma1.sigma.sum();
  // The penalized solution is feasible and optimal for the ball of radius
  // ‖Γ̂‖_*, so its loss is the constrained optimum.
  const double best_loss = best - r.spec.lambda_gamma * delta;
  SolveOptions fo;
  fo.max_iterations = 1000000;
  fo.rel_tol = 0.0;
  fo.time_budget_seconds = 240.0;
  const auto fw_start = Clock::now();
  const FitResult fw = fit_frank_wolfe(r.spec, r.data.y, delta, fo);
  const double fw_seconds = since(fw_start);
  const double fw_loss = fw.trace.rows.back().objective;
  const double agree = std::abs(fw_loss - best_loss) / std::abs(best_loss);
  const auto prox_t = time_to(r.warm.trace, best, 1e-4);
  const auto fw_t = time_to(fw.trace, best_loss, 1e-4);
  const bool faster = prox_t && (!fw_t || *prox_t < *fw_t);
  // Runtime is the penalized reference fit plus the FW run; the cold fit
  // belongs to criterion 7.
  const double secs = r.warm_seconds + fw_seconds;
  std::string fw_str = fw_t ? fmt("%.1fs", *fw_t) : fmt("not within %.0fs", fo.time_budget_seconds);
  return {agree <= 1e-3 && faster && secs < 600.0,
          fmt("FW loss %.6f vs constrained optimum %.6f (rel %.2e, limit 1e-3); time to 1e-4 "
              "suboptimality: proximal %.1fs, FW %s; %.0fs",
              fw_loss, best_loss, agree, prox_t.value_or(-1.0), fw_str.c_str(), secs)};
}

Outcome warm_start_benefit() {
  const LargeRuns& r = large_runs();
  const double warm = r.warm.trace.total_svd_iterations();
  const double cold = r.cold.trace.total_svd_iterations();
  const double a = r.warm.trace.rows.back().objective, b = r.cold.trace.rows.back().objective;
  const double gap = std::abs(a - b) / std::abs(b);
  return {warm <= 0.6 * cold && gap <= 1e-6 && r.warm.trace.converged && r.cold.trace.converged,
          fmt("inner SVD iterations warm %.0f vs cold %.0f (ratio %.3f, limit 0.6); objectives "
              "%.9f vs %.9f (rel %.1e, limit 1e-6); %.0fs and %.0fs",
              warm, cold, warm / cold, a, b, gap, r.warm_seconds, r.cold_seconds)};
}

// 8. Grouped side information ---------------------------------------------------

ModelSpec grouped_spec(const GroupedData& d, bool ridge) {
  ModelSpec s;
  s.loss.kind = LossKind::Bernoulli;
  s.offsets.intercept = true;
  s.offsets.row_effects = true;
  s.offsets.col_effects = true;
  s.lambda_alpha = 1.0;
  s.lambda_beta = 1.0;
  const Index n = d.y.rows(), p = d.row_features.values.cols();
  s.row_margin = ridge ? Margin::metric(ridge_hat(d.row_features, 1.0, Matrix::Identity(p, p)))
                       : Margin::identity(n);
  s.col_margin = Margin::identity(d.y.cols());
  return s;
}

Outcome grouped_side_information() {
  const auto t0 = Clock::now();
  int wins = 0, quiet = 0;
  std::ostringstream deltas, noise_deltas;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    AblationOptions ao;
    ao.seed = 1000 + seed;
    ao.solve.max_iterations = 500;
    ao.solve.rel_tol = 1e-6;
    // Both deviance minima sit near 0.3 of λ_max, and a loose inner SVD floor
    // is enough for deviance comparisons at this outer tolerance.
    ao.solve.svd_tol_floor = 1e-4;
    ao.min_ratio = 0.2;
    for (bool noise : {false, true}) {
      GroupedSpec g;
      g.seed = seed;
      g.noise_features = noise;
      const GroupedData d = generate_grouped(g);
      const auto rows = side_info_ablation(
          d.y, {{"identity", grouped_spec(d, false)}, {"ridge", grouped_spec(d, true)}}, ao);
      const AblationRow& r = rows[1];
      if (!noise) {
        if (r.delta_cv_deviance < 0.0) ++wins;
        deltas << fmt("%+.4f", r.delta_cv_deviance) << (seed < 10 ? " " : "");
      } else {
        if (std::abs(r.delta_cv_deviance) <= 2.0 * r.delta_cv_se) ++quiet;
        noise_deltas << fmt("%+.4f/%.4f", r.delta_cv_deviance, r.delta_cv_se)
                     << (seed < 10 ? " " : "");
      }
    }
  }
  return {wins >= 9 && quiet >= 9,
          fmt("ridge beats identity in CV deviance on %d/10 seeds (need 9; deltas %s); noise "
              "features within 2 paired SE on %d/10 seeds (need 9; delta/SE %s); %.0fs",
              wins, deltas.str().c_str(), quiet, noise_deltas.str().c_str(), since(t0))};
}

// 9. Functional reconstruction ------------------------------------------------------

Outcome curve_reconstruction() {
  int wins = 0;
  double worst_ratio = 0.0, slowest = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto t0 = Clock::now();
    CurveSpec c;
    c.seed = seed;
    const CurveData d = generate_curves(c);
    const Index n = d.train.rows(), m = d.train.cols();
    double mse[2];
    for (int variant = 0; variant < 2; ++variant) {
      ModelSpec s;
      s.loss.kind = LossKind::Gaussian;
      s.offsets.intercept = true;
      s.offsets.col_effects = true;
      s.lambda_beta = 1.0;
      s.row_margin = Margin::identity(n);
      s.col_margin = variant == 0 ? Margin::identity(m)
                                  : Margin::design(spline_design(d.points, c.df_coarse, c.df_fine));
      SolveOptions o;
      o.max_iterations = 2000;
      o.rel_tol = 1e-7;
      o.svd_tol_floor = 1e-4;
      const double top = data_lambda_max(s, d.train, o);
      const CvResult cv =
          cross_validate(s, d.train, 3, geometric_grid(top, 8, 0.01), o, 2000 + seed);
      s.lambda_gamma = cv.lambda;
      const Vector fit = theta_on_omega(s, cv.refit.state, d.test);
      double acc = 0.0;
      for (Index e = 0; e < d.test.nnz(); ++e) {
        const double err = fit[e] - d.truth(d.test.row(e), d.test.col(e));
        acc += err * err;
      }
      mse[variant] = acc / static_cast<double>(d.test.nnz());
    }
    const double ratio = mse[1] / mse[0];
    worst_ratio = std::max(worst_ratio, ratio);
    if (ratio <= 0.8) ++wins;
    slowest = std::max(slowest, since(t0));
  }
  return {wins >= 9 && slowest < 300.0,
          fmt("spline MSE <= 0.8x plain on %d/10 seeds (need 9), worst ratio %.3f, slowest seed "
              "%.0fs (limit 300s)",
              wins, worst_ratio, slowest)};
}

// 10. Operator scalability ---------------------------------------------------------

// Flops of one proximal iteration at a warm state: θ on Ω, the sparse loss
// gradient, the prox target and a soft-thresholded SVD with the number of
// subspace sweeps pinned, so the count reflects operator cost alone.
std::uint64_t one_iteration_flops(Index n, Index m, Index& rank_out, int& sweeps_out) {
  SyntheticSpec sp;
  sp.n = n;
  sp.m = m;
  sp.rank = 5;
  sp.per_row = 20;
  sp.scale = 3.0;
  sp.seed = 77;
  const SyntheticData d = generate_synthetic(sp);
  ModelSpec s;
  s.loss.kind = LossKind::Bernoulli;
  s.row_margin = Margin::identity(n);
  s.col_margin = Margin::identity(m);
  ModelState st = ModelState::zeros(s);
  // Warm state: the generating factors in SVD form.
  Eigen::HouseholderQR<Matrix> qu(d.u), qv(d.v);
  const Matrix q_u = qu.householderQ() * Matrix::Identity(n, sp.rank);
  const Matrix q_v = qv.householderQ() * Matrix::Identity(m, sp.rank);
  const Matrix r_u = qu.matrixQR().topRows(sp.rank).triangularView<Eigen::Upper>();
  const Matrix r_v = qv.matrixQR().topRows(sp.rank).triangularView<Eigen::Upper>();
  Eigen::JacobiSVD<Matrix> core(r_u * r_v.transpose(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  st.gamma1 = LowRankFactors{q_u * core.matrixU(), core.singularValues(), q_v * core.matrixV()};
  // λ sits above the gradient noise at this state, so the prox keeps the
  // generating rank and the working rank stays at its initial guess.
  s.lambda_gamma = 1.5 * lambda_max(s, d.y, st);
  const double t = gamma1_step(s);

  const std::uint64_t before = flops::total();
  const Vector theta = theta_on_omega(s, st, d.y);
  const ObservedMatrix g = loss_gradient_sparse(s.loss.kind, theta, d.y);
  const BlockGradients bg = block_gradients_from(s, st, g);
  const Operator target = Operator::sum(
      {Operator::low_rank(st.gamma1.left * st.gamma1.sigma.asDiagonal(), st.gamma1.right),
       Operator::scaled(-t, *bg.gamma1)});
  SvdOptions so;
  so.tol = 1e-300;  // never met, so exactly max_iter sweeps run
  so.max_iter = 10;
  const ProxResult pr = soft_threshold_svd(target, t * s.lambda_gamma, next_rank_guess(5), nullptr, so);
  st.gamma1 = LowRankFactors{pr.left, pr.sigma, pr.right};
  (void)objective(s, st, d.y);
  rank_out = pr.computed_rank;
  sweeps_out = pr.inner_iterations;
  return flops::total() - before;
}

Outcome operator_scalability() {
  std::vector<std::uint64_t> f;
  std::ostringstream desc;
  bool same_work = true;
  Index rank0 = -1;
  int sweeps0 = -1;
  for (Index k = 0; k < 4; ++k) {
    const Index n = 250 << k, m = 200 << k;
    Index rank = 0;
    int sweeps = 0;
    f.push_back(one_iteration_flops(n, m, rank, sweeps));
    if (k == 0) {
      rank0 = rank;
      sweeps0 = sweeps;
    }
    same_work = same_work && rank == rank0 && sweeps == sweeps0;
    desc << n << "x" << m << ": " << f.back() << (k < 3 ? ", " : "");
  }
  bool ok = same_work;
  std::ostringstream ratios;
  for (std::size_t k = 1; k < f.size(); ++k) {
    const double r = static_cast<double>(f[k]) / static_cast<double>(f[k - 1]);
    ok = ok && r >= 1.7 && r <= 2.5;
    ratios << fmt("%.3f", r) << (k + 1 < f.size() ? " " : "");
  }
  return {ok, fmt("flops %s; doubling ratios %s (window [1.7, 2.5]); working rank %ld, %d sweeps",
                  desc.str().c_str(), ratios.str().c_str(), static_cast<long>(rank0), sweeps0)};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all = {
      {1, "prox correctness", prox_correctness},
      {2, "factored-form equivalence", factored_equivalence},
      {3, "MAP equivalence", map_equivalence},
      {4, "gradient checks", gradient_checks},
      {5, "descent and fixed point", descent_and_fixed_point},
      {6, "proximal vs Frank-Wolfe", cross_method_agreement},
      {7, "warm-start benefit", warm_start_benefit},
      {8, "grouped side information", grouped_side_information},
      {9, "spline reconstruction", curve_reconstruction},
      {10, "operator scalability", operator_scalability},
  };
  std::set<int> chosen;
  for (int i = 1; i < argc; ++i) chosen.insert(std::atoi(argv[i]));
  int failures = 0;
  for (const Criterion& c : all) {
    if (!chosen.empty() && !chosen.count(c.id)) continue;
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    if (!out.pass) ++failures;
    std::printf("criterion %2d %s: %s: %s\n", c.id, out.pass ? "PASS" : "FAIL", c.name,
                out.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
