#include <gtest/gtest.h>

#include <functional>

#include "oracles.hpp"
#include "rrm/error.hpp"
#include "rrm/model.hpp"

using namespace rrm;

namespace {

// 6×5 spec exercising every block: a row metric with one null direction,
// a column design margin, and all five offset terms.
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
  Matrix w = oracle::orthonormal(6, 3, rng);
  Vector d(3);
  d << 1.0, 0.4, 0.1;
  s.row_margin = Margin::metric(smoother_metric(w, d));
  Matrix coarse = Matrix::Ones(5, 1);
  Matrix fine(5, 3);
  fine << Matrix::Ones(5, 1), oracle::gaussian(5, 2, rng);
  s.col_margin = Margin::design(column_subspace_model(coarse, fine));
  s.validate();
  return s;
}

void randomize(const ModelSpec& spec, ModelState& st, std::mt19937_64& rng, double sd = 0.5) {
  st.mu = oracle::gaussian_vec(1, rng, sd)[0];
  st.alpha = oracle::gaussian_vec(st.alpha.size(), rng, sd);
  st.beta = oracle::gaussian_vec(st.beta.size(), rng, sd);
  st.row_coef = oracle::gaussian_vec(st.row_coef.size(), rng, sd);
  st.col_coef = oracle::gaussian_vec(st.col_coef.size(), rng, sd);
  const Index kp = spec.row_margin.coeff_dim(), kq = spec.col_margin.coeff_dim();
  st.gamma1.left = oracle::gaussian(kp, kq, rng, sd);
  st.gamma1.sigma = Vector::Ones(kq);
  st.gamma1.right = Matrix::Identity(kq, kq);
  st.gamma2 = oracle::gaussian(st.gamma2.rows(), st.gamma2.cols(), rng, sd);
  st.gamma3 = oracle::gaussian(st.gamma3.rows(), st.gamma3.cols(), rng, sd);
}

ObservedMatrix responses(LossKind kind, Index n, Index m, double p, std::mt19937_64& rng) {
  ObservedMatrix pattern = oracle::random_observed(n, m, p, rng);
  Vector v(pattern.nnz());
  std::bernoulli_distribution bit(0.4);
  std::poisson_distribution<int> count(1.5);
  std::normal_distribution<double> g(0.0, 1.0);
  for (Index e = 0; e < v.size(); ++e) {
    if (kind == LossKind::Gaussian) v[e] = g(rng);
    else if (kind == LossKind::Bernoulli) v[e] = bit(rng) ? 1.0 : 0.0;
    else v[e] = count(rng);
  }
  return pattern.with_values(v);
}

// Central-difference check of one block: `get` exposes the block as a flat
// vector, `grad` is the analytic gradient in the same layout.
void check_block(const std::string& name, const ModelSpec& spec, const ModelState& base,
                 const ObservedMatrix& y, const std::function<double*(ModelState&, Index&)>& get,
                 const Vector& grad, std::mt19937_64& rng) {
  ModelState probe = base;
  Index len = 0;
  get(probe, len);
  ASSERT_EQ(grad.size(), len) << name;
  if (len == 0) return;
  for (int dir = 0; dir < 20; ++dir) {
    Vector d = oracle::gaussian_vec(len, rng);
    const double h = 1e-5;
    ModelState plus = base, minus = base;
    Eigen::Map<Vector>(get(plus, len), len) += h * d;
    Eigen::Map<Vector>(get(minus, len), len) -= h * d;
    const double fd =
        (smooth_objective(spec, plus, y) - smooth_objective(spec, minus, y)) / (2 * h);
    const double an = grad.dot(d);
    EXPECT_LT(std::abs(fd - an) / std::max(1.0, std::abs(an)), 1e-6) << name << " dir " << dir;
  }
}

Vector flat(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

}  // namespace

TEST(Model, StateShapes) {
  std::mt19937_64 rng(1);
  ModelSpec s = full_spec(LossKind::Gaussian, rng);
  ModelState st = ModelState::zeros(s);
  EXPECT_EQ(st.alpha.size(), 6);
  EXPECT_EQ(st.beta.size(), 5);
  EXPECT_EQ(st.row_coef.size(), 2);
  EXPECT_EQ(st.col_coef.size(), 1);
  EXPECT_EQ(st.gamma2.rows(), 1);
  EXPECT_EQ(st.gamma2.cols(), 5);
  EXPECT_EQ(st.gamma3.rows(), 6);
  EXPECT_EQ(st.gamma3.cols(), 1);
  st.alpha.resize(3);
  EXPECT_THROW(check_state(s, st), DimensionError);
}

TEST(Model, ThetaOnOmegaMatchesDense) {
  std::mt19937_64 rng(2);
  ModelSpec s = full_spec(LossKind::Gaussian, rng);
  ModelState st = ModelState::zeros(s);
  randomize(s, st, rng);
  ObservedMatrix y = responses(LossKind::Gaussian, 6, 5, 0.6, rng);
  Matrix dense = oracle::dense_theta(s, st);
  Vector on = theta_on_omega(s, st, y);
  for (Index e = 0; e < y.nnz(); ++e) EXPECT_NEAR(on[e], dense(y.row(e), y.col(e)), 1e-12);
  EXPECT_LT((theta_dense(s, st) - dense).norm(), 1e-12);
  EXPECT_NEAR(objective(s, st, y), oracle::dense_objective(s, st, y), 1e-10);
}

TEST(Model, GradientsMatchFiniteDifferencesOnEveryBlock) {
  for (LossKind kind : {LossKind::Gaussian, LossKind::Bernoulli, LossKind::Poisson}) {
    std::mt19937_64 rng(3);
    ModelSpec s = full_spec(kind, rng);
    ModelState st = ModelState::zeros(s);
    randomize(s, st, rng, 0.3);
    ObservedMatrix y = responses(kind, 6, 5, 0.7, rng);
    BlockGradients g = block_gradients(s, st, y);
    check_block("mu", s, st, y, [](ModelState& m, Index& n) { n = 1; return &m.mu; },
                Vector::Constant(1, g.mu), rng);
    check_block("alpha", s, st, y,
                [](ModelState& m, Index& n) { n = m.alpha.size(); return m.alpha.data(); }, g.alpha,
                rng);
    check_block("beta", s, st, y,
                [](ModelState& m, Index& n) { n = m.beta.size(); return m.beta.data(); }, g.beta,
                rng);
    check_block("row_coef", s, st, y,
                [](ModelState& m, Index& n) { n = m.row_coef.size(); return m.row_coef.data(); },
                g.row_coef, rng);
    check_block("col_coef", s, st, y,
                [](ModelState& m, Index& n) { n = m.col_coef.size(); return m.col_coef.data(); },
                g.col_coef, rng);
    check_block("gamma2", s, st, y,
                [](ModelState& m, Index& n) { n = m.gamma2.size(); return m.gamma2.data(); },
                flat(g.gamma2), rng);
    check_block("gamma3", s, st, y,
                [](ModelState& m, Index& n) { n = m.gamma3.size(); return m.gamma3.data(); },
                flat(g.gamma3), rng);
    ASSERT_TRUE(g.gamma1.has_value());
    check_block("gamma1", s, st, y,
                [](ModelState& m, Index& n) { n = m.gamma1.left.size(); return m.gamma1.left.data(); },
                flat(oracle::materialize(*g.gamma1)), rng);
  }
}

TEST(Model, IdentityMarginsGiveSparseGradient) {
  std::mt19937_64 rng(4);
  ModelSpec s;
  s.row_margin = Margin::identity(7);
  s.col_margin = Margin::identity(4);
  ObservedMatrix y = responses(LossKind::Gaussian, 7, 4, 0.5, rng);
  ModelState st = ModelState::zeros(s);
  BlockGradients g = block_gradients(s, st, y);
  ASSERT_TRUE(g.gamma1.has_value());
  ASSERT_TRUE(std::holds_alternative<SparseOp>(g.gamma1->node().value));
  EXPECT_EQ(oracle::materialize(*g.gamma1), oracle::dense(g.g));
  EXPECT_EQ(g.g.values(), -y.values());
}

TEST(Model, ObjectiveInvariantToFactorRotation) {
  std::mt19937_64 rng(5);
  ModelSpec s = full_spec(LossKind::Bernoulli, rng);
  ModelState st = ModelState::zeros(s);
  randomize(s, st, rng);
  ObservedMatrix y = responses(LossKind::Bernoulli, 6, 5, 0.8, rng);
  Eigen::JacobiSVD<Matrix> svd(st.gamma1.dense(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  st.gamma1 = {svd.matrixU(), svd.singularValues(), svd.matrixV()};
  const double base = objective(s, st, y);
  // Rotating a pair of factor columns with equal σ leaves Γ₁ unchanged.
  ModelState rot = st;
  const Index r = rot.gamma1.rank();
  rot.gamma1.sigma.setConstant(r, rot.gamma1.sigma.mean());
  const double rebased = objective(s, rot, y);
  Matrix q = oracle::orthonormal(r, r, rng);
  rot.gamma1.left = rot.gamma1.left * q;
  rot.gamma1.right = rot.gamma1.right * q;
  EXPECT_NEAR(objective(s, rot, y), rebased, 1e-12 * std::max(1.0, std::abs(rebased)));
  EXPECT_TRUE(std::isfinite(base));
}

TEST(Model, CanonicalizePreservesTheta) {
  std::mt19937_64 rng(6);
  ModelSpec s = full_spec(LossKind::Gaussian, rng);
  ModelState st = ModelState::zeros(s);
  randomize(s, st, rng);
  Matrix before = oracle::dense_theta(s, st);
  canonicalize(s, st);
  EXPECT_LT((oracle::dense_theta(s, st) - before).norm(), 1e-12);
  const Matrix& np = s.row_margin.null_basis();
  EXPECT_LT((np.transpose() * st.gamma3).norm(), 1e-12);
}

TEST(Model, TransposedProblemHasTransposedTheta) {
  std::mt19937_64 rng(7);
  ModelSpec s = full_spec(LossKind::Gaussian, rng);
  ModelState st = ModelState::zeros(s);
  randomize(s, st, rng);
  ModelSpec ts = transposed(s);
  ModelState tst = transposed(s, st);
  EXPECT_EQ(ts.rows(), 5);
  EXPECT_EQ(ts.cols(), 6);
  EXPECT_LT((oracle::dense_theta(ts, tst) - oracle::dense_theta(s, st).transpose()).norm(), 1e-12);
  EXPECT_NEAR(ridge_penalty(ts, tst), ridge_penalty(s, st), 1e-12);
}

TEST(Model, PredictReproducesTrainingThetaAndNamesBadPairs) {
  std::mt19937_64 rng(8);
  ModelSpec s = full_spec(LossKind::Bernoulli, rng);
  ModelState st = ModelState::zeros(s);
  randomize(s, st, rng);
  ObservedMatrix y = responses(LossKind::Bernoulli, 6, 5, 0.5, rng);
  std::vector<std::pair<Index, Index>> pairs;
  for (Index e = 0; e < y.nnz(); ++e) pairs.emplace_back(y.row(e), y.col(e));
  Prediction p = predict(s, st, pairs);
  Vector on = theta_on_omega(s, st, y);
  for (Index e = 0; e < y.nnz(); ++e) {
    EXPECT_EQ(p.theta[e], on[e]);
    EXPECT_NEAR(p.mean[e], 1.0 / (1.0 + std::exp(-on[e])), 1e-14);
  }
  std::vector<std::pair<Index, Index>> bad{{0, 0}, {6, 1}};
  try {
    predict(s, st, bad);
    FAIL();
  } catch (const PredictionError& e) {
    EXPECT_NE(std::string(e.what()).find("(6, 1)"), std::string::npos) << e.what();
  }
}

TEST(Model, GaussianMeanIsTheta) {
  std::mt19937_64 rng(9);
  ModelSpec s = full_spec(LossKind::Gaussian, rng);
  ModelState st = ModelState::zeros(s);
  randomize(s, st, rng);
  std::vector<std::pair<Index, Index>> pairs{{1, 2}, {5, 4}};
  Prediction p = predict(s, st, pairs);
  EXPECT_EQ(p.theta, p.mean);
}

TEST(Model, ValidateRejectsInconsistentSpecs) {
  std::mt19937_64 rng(10);
  ModelSpec s = full_spec(LossKind::Gaussian, rng);
  ModelSpec bad = s;
  bad.lambda_gamma = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = s;
  bad.lambda_alpha = -1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = s;
  bad.offsets.row_features = FeatureMatrix(oracle::gaussian(4, 1, rng));
  EXPECT_THROW(bad.validate(), ConfigError);
}
