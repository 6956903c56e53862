#include "rrm/model.hpp"

#include <cmath>
#include <string>

#include "rrm/error.hpp"
#include "rrm/flops.hpp"

namespace rrm {

namespace {

std::string shape(Index r, Index c) { return std::to_string(r) + "x" + std::to_string(c); }

void expect_shape(const char* what, Index r, Index c, Index er, Index ec) {
  if (r != er || c != ec) {
    throw DimensionError(std::string(what) + " is " + shape(r, c) + ", expected " +
                         shape(er, ec));
  }
}

void expect_length(const char* what, Index len, Index expected) {
  if (len != expected) {
    throw DimensionError(std::string(what) + " has length " + std::to_string(len) +
                         ", expected " + std::to_string(expected));
  }
}

// Θ_ij = f_i·g_j: every block is folded into one row factor (stored
// transposed, one column per row of Θ) and one column factor.
struct FoldedFactors {
  Matrix row_t;  // w × n
  Matrix col_t;  // w × m
  Vector row_offset;
  Vector col_offset;
  double mu = 0.0;
};

FoldedFactors fold(const ModelSpec& spec, const ModelState& state) {
  check_state(spec, state);
  const Index n = spec.rows(), m = spec.cols();
  const Index r = state.gamma1.rank();
  const Index kp = spec.row_margin.null_dim(), kq = spec.col_margin.null_dim();
  const Index w = r + kp + kq;

  FoldedFactors f;
  f.mu = state.mu;
  f.row_t.resize(w, n);
  f.col_t.resize(w, m);
  if (r > 0) {
    f.row_t.topRows(r) =
        spec.row_margin.map(state.gamma1.left * state.gamma1.sigma.asDiagonal()).transpose();
    f.col_t.topRows(r) = spec.col_margin.map(state.gamma1.right).transpose();
  }
  if (kp > 0) {
    f.row_t.middleRows(r, kp) = spec.row_margin.null_basis().transpose();
    f.col_t.middleRows(r, kp) = state.gamma2;
  }
  if (kq > 0) {
    f.row_t.bottomRows(kq) = state.gamma3.transpose();
    f.col_t.bottomRows(kq) = spec.col_margin.null_basis().transpose();
  }

  f.row_offset = Vector::Zero(n);
  f.col_offset = Vector::Zero(m);
  if (state.alpha.size() > 0) f.row_offset += state.alpha;
  if (state.beta.size() > 0) f.col_offset += state.beta;
  if (state.row_coef.size() > 0) {
    f.row_offset += spec.offsets.row_features->values * state.row_coef;
    flops::add(static_cast<std::uint64_t>(2 * n * state.row_coef.size()));
  }
  if (state.col_coef.size() > 0) {
    f.col_offset += spec.offsets.col_features->values * state.col_coef;
    flops::add(static_cast<std::uint64_t>(2 * m * state.col_coef.size()));
  }
  return f;
}

double entry(const FoldedFactors& f, Index i, Index j) {
  double v = f.mu + f.row_offset[i] + f.col_offset[j];
  if (f.row_t.rows() > 0) v += f.row_t.col(i).dot(f.col_t.col(j));
  return v;
}

}  // namespace

void ModelSpec::validate() const {
  const Index n = rows(), m = cols();
  if (n < 1 || m < 1) throw ConfigError("model margins must have positive dimension");
  if (!(lambda_gamma > 0.0) || !std::isfinite(lambda_gamma)) {
    throw ConfigError("lambda_gamma must be positive and finite");
  }
  if (!(lambda_alpha >= 0.0) || !(lambda_beta >= 0.0)) {
    throw ConfigError("offset ridge weights must be nonnegative");
  }
  if (offsets.row_features && offsets.row_features->values.rows() != n) {
    throw ConfigError("row features have " + std::to_string(offsets.row_features->values.rows()) +
                      " rows for " + std::to_string(n) + " matrix rows");
  }
  if (offsets.col_features && offsets.col_features->values.rows() != m) {
    throw ConfigError("column features have " +
                      std::to_string(offsets.col_features->values.rows()) + " rows for " +
                      std::to_string(m) + " matrix columns");
  }
}

ModelState ModelState::zeros(const ModelSpec& spec) {
  const Index n = spec.rows(), m = spec.cols();
  ModelState s;
  if (spec.offsets.row_effects) s.alpha = Vector::Zero(n);
  if (spec.offsets.col_effects) s.beta = Vector::Zero(m);
  if (spec.offsets.row_features) s.row_coef = Vector::Zero(spec.offsets.row_features->values.cols());
  if (spec.offsets.col_features) s.col_coef = Vector::Zero(spec.offsets.col_features->values.cols());
  s.gamma1.left = Matrix(spec.row_margin.coeff_dim(), 0);
  s.gamma1.sigma = Vector(0);
  s.gamma1.right = Matrix(spec.col_margin.coeff_dim(), 0);
  s.gamma2 = Matrix::Zero(spec.row_margin.null_dim(), m);
  s.gamma3 = Matrix::Zero(n, spec.col_margin.null_dim());
  return s;
}

void check_state(const ModelSpec& spec, const ModelState& state) {
  const Index n = spec.rows(), m = spec.cols();
  expect_length("alpha", state.alpha.size(), spec.offsets.row_effects ? n : 0);
  expect_length("beta", state.beta.size(), spec.offsets.col_effects ? m : 0);
  expect_length("row feature coefficients", state.row_coef.size(),
                spec.offsets.row_features ? spec.offsets.row_features->values.cols() : 0);
  expect_length("column feature coefficients", state.col_coef.size(),
                spec.offsets.col_features ? spec.offsets.col_features->values.cols() : 0);
  const Index r = state.gamma1.rank();
  expect_shape("gamma1 left factor", state.gamma1.left.rows(), state.gamma1.left.cols(),
               spec.row_margin.coeff_dim(), r);
  expect_shape("gamma1 right factor", state.gamma1.right.rows(), state.gamma1.right.cols(),
               spec.col_margin.coeff_dim(), r);
  expect_shape("gamma2", state.gamma2.rows(), state.gamma2.cols(), spec.row_margin.null_dim(), m);
  expect_shape("gamma3", state.gamma3.rows(), state.gamma3.cols(), n, spec.col_margin.null_dim());
}

Vector theta_on_omega(const ModelSpec& spec, const ModelState& state, const ObservedMatrix& omega) {
  if (omega.rows() != spec.rows() || omega.cols() != spec.cols()) {
    throw DimensionError("observations are " + shape(omega.rows(), omega.cols()) +
                         " but the model is " + shape(spec.rows(), spec.cols()));
  }
  const FoldedFactors f = fold(spec, state);
  const auto rows = omega.row_index();
  const auto cols = omega.col_index();
  Vector theta(omega.nnz());
  for (Index e = 0; e < omega.nnz(); ++e) theta[e] = entry(f, rows[e], cols[e]);
  flops::add(static_cast<std::uint64_t>(2 * omega.nnz() * (f.row_t.rows() + 2)));
  return theta;
}

Vector theta_at(const ModelSpec& spec, const ModelState& state,
                std::span<const std::pair<Index, Index>> pairs) {
  const FoldedFactors f = fold(spec, state);
  Vector theta(static_cast<Index>(pairs.size()));
  for (std::size_t e = 0; e < pairs.size(); ++e) {
    const auto [i, j] = pairs[e];
    if (i < 0 || i >= spec.rows() || j < 0 || j >= spec.cols()) {
      throw DimensionError("index (" + std::to_string(i) + ", " + std::to_string(j) +
                           ") outside " + shape(spec.rows(), spec.cols()));
    }
    theta[static_cast<Index>(e)] = entry(f, i, j);
  }
  return theta;
}

Vector offsets_on_omega(const ModelSpec& spec, const ModelState& state, const ObservedMatrix& omega) {
  ModelState offsets_only = state;
  offsets_only.gamma1 = ModelState::zeros(spec).gamma1;
  offsets_only.gamma2.setZero();
  offsets_only.gamma3.setZero();
  return theta_on_omega(spec, offsets_only, omega);
}

double ridge_penalty(const ModelSpec& spec, const ModelState& state) {
  return 0.5 * spec.lambda_alpha * (state.alpha.squaredNorm() + state.row_coef.squaredNorm()) +
         0.5 * spec.lambda_beta * (state.beta.squaredNorm() + state.col_coef.squaredNorm());
}

double nuclear_penalty(const ModelSpec& spec, const ModelState& state) {
  return spec.lambda_gamma * state.gamma1.sigma.sum();
}

double smooth_objective(const ModelSpec& spec, const ModelState& state, const ObservedMatrix& y) {
  return loss_value(spec.loss.kind, theta_on_omega(spec, state, y), y) +
         ridge_penalty(spec, state);
}

double objective(const ModelSpec& spec, const ModelState& state, const ObservedMatrix& y) {
  return smooth_objective(spec, state, y) + nuclear_penalty(spec, state);
}

BlockGradients block_gradients_from(const ModelSpec& spec, const ModelState& state,
                                    const ObservedMatrix& g) {
  BlockGradients out;
  out.g = g;
  if (spec.offsets.intercept) out.mu = g.values().sum();
  const bool need_rows = spec.offsets.row_effects || spec.offsets.row_features.has_value();
  const bool need_cols = spec.offsets.col_effects || spec.offsets.col_features.has_value();
  const Vector row_sums = need_rows ? g.row_sums() : Vector();
  const Vector col_sums = need_cols ? g.col_sums() : Vector();
  if (spec.offsets.row_effects) out.alpha = row_sums + spec.lambda_alpha * state.alpha;
  if (spec.offsets.col_effects) out.beta = col_sums + spec.lambda_beta * state.beta;
  if (spec.offsets.row_features) {
    out.row_coef = spec.offsets.row_features->values.transpose() * row_sums +
                   spec.lambda_alpha * state.row_coef;
  }
  if (spec.offsets.col_features) {
    out.col_coef = spec.offsets.col_features->values.transpose() * col_sums +
                   spec.lambda_beta * state.col_coef;
  }

  std::vector<Operator> factors;
  if (spec.row_margin.kind() != Margin::Kind::Identity) {
    factors.push_back(Operator::transposed(spec.row_margin.map_operator()));
  }
  factors.push_back(Operator::sparse(g));
  if (spec.col_margin.kind() != Margin::Kind::Identity) {
    factors.push_back(spec.col_margin.map_operator());
  }
  out.gamma1 = factors.size() == 1 ? factors.front() : Operator::product(std::move(factors));

  const Index kp = spec.row_margin.null_dim(), kq = spec.col_margin.null_dim();
  out.gamma2 = kp > 0 ? Matrix(g.transpose_times(spec.row_margin.null_basis()).transpose())
                      : Matrix(0, spec.cols());
  out.gamma3 = kq > 0 ? g.times(spec.col_margin.null_basis()) : Matrix(spec.rows(), 0);
  return out;
}

BlockGradients block_gradients(const ModelSpec& spec, const ModelState& state,
                               const ObservedMatrix& y) {
  const Vector theta = theta_on_omega(spec, state, y);
  return block_gradients_from(spec, state, loss_gradient_sparse(spec.loss.kind, theta, y));
}

Matrix theta_dense(const ModelSpec& spec, const ModelState& state) {
  const FoldedFactors f = fold(spec, state);
  Matrix theta = f.row_t.transpose() * f.col_t;
  theta.array() += f.mu;
  theta.colwise() += f.row_offset;
  theta.rowwise() += f.col_offset.transpose();
  return theta;
}

void canonicalize(const ModelSpec& spec, ModelState& state) {
  const Index kp = spec.row_margin.null_dim(), kq = spec.col_margin.null_dim();
  if (kp == 0 || kq == 0) return;
  const Matrix& np = spec.row_margin.null_basis();
  const Matrix& nq = spec.col_margin.null_basis();
  const Matrix corner = np.transpose() * state.gamma3;  // k_P × k_Q
  state.gamma2 += corner * nq.transpose();
  state.gamma3 -= np * corner;
}

ModelSpec transposed(const ModelSpec& spec) {
  ModelSpec t = spec;
  std::swap(t.row_margin, t.col_margin);
  std::swap(t.lambda_alpha, t.lambda_beta);
  std::swap(t.offsets.row_effects, t.offsets.col_effects);
  std::swap(t.offsets.row_features, t.offsets.col_features);
  return t;
}

ModelState transposed(const ModelSpec& spec, const ModelState& state) {
  ModelState t;
  t.mu = state.mu;
  t.alpha = state.beta;
  t.beta = state.alpha;
  t.row_coef = state.col_coef;
  t.col_coef = state.row_coef;
  t.gamma1.left = state.gamma1.right;
  t.gamma1.sigma = state.gamma1.sigma;
  t.gamma1.right = state.gamma1.left;
  t.gamma2 = state.gamma3.transpose();
  t.gamma3 = state.gamma2.transpose();
  canonicalize(transposed(spec), t);
  return t;
}

Prediction predict(const ModelSpec& spec, const ModelState& state,
                   std::span<const std::pair<Index, Index>> pairs) {
  for (std::size_t e = 0; e < pairs.size(); ++e) {
    const auto [i, j] = pairs[e];
    if (i < 0 || i >= spec.rows() || j < 0 || j >= spec.cols()) {
      throw PredictionError("pair " + std::to_string(e) + " (" + std::to_string(i) + ", " +
                            std::to_string(j) + ") is outside the trained " +
                            shape(spec.rows(), spec.cols()) + " matrix");
    }
  }
  Prediction p;
  p.theta = theta_at(spec, state, pairs);
  p.mean = p.theta.unaryExpr([&](double t) { return psi_prime(spec.loss.kind, t); });
  return p;
}

}  // namespace rrm
