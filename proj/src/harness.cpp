#include "rrm/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "rrm/error.hpp"

namespace rrm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Matrix gaussian(Index rows, Index cols, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, sd);
  Matrix g(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) g(i, j) = normal(rng);
  return g;
}

Vector theta_entries(const ObservedMatrix& pattern, const Matrix& u, const Matrix& v) {
  Vector theta(pattern.nnz());
  for (Index e = 0; e < pattern.nnz(); ++e) {
    theta[e] = u.row(pattern.row(e)).dot(v.row(pattern.col(e)));
  }
  return theta;
}

Matrix orthonormal_columns(const Matrix& a) {
  Eigen::HouseholderQR<Matrix> qr(a);
  return qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
}

double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

ObservedMatrix sample_pattern(Index n, Index m, Index per_row, std::mt19937_64& rng) {
  if (n < 1 || m < 1) throw ConfigError("synthetic dimensions must be positive");
  if (per_row < 1 || per_row > m) {
    throw ConfigError("entries per row must be in [1, " + std::to_string(m) + "]");
  }
  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(n * per_row));
  std::vector<Index> cols(static_cast<std::size_t>(m));
  for (Index i = 0; i < n; ++i) {
    std::iota(cols.begin(), cols.end(), Index{0});
    // Partial Fisher-Yates: the first per_row slots are a uniform sample.
    for (Index k = 0; k < per_row; ++k) {
      std::uniform_int_distribution<Index> pick(k, m - 1);
      std::swap(cols[k], cols[pick(rng)]);
    }
    for (Index k = 0; k < per_row; ++k) entries.push_back(Entry{i, cols[k], 0.0});
  }
  return ObservedMatrix(n, m, std::move(entries));
}

ObservedMatrix sample_responses(LossKind kind, const ObservedMatrix& pattern, const Vector& theta,
                                double noise_sd, std::mt19937_64& rng) {
  Vector y(pattern.nnz());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Index e = 0; e < pattern.nnz(); ++e) {
    const double t = theta[e];
    switch (kind) {
      case LossKind::Gaussian: y[e] = t + noise_sd * normal(rng); break;
      case LossKind::Bernoulli: y[e] = unif(rng) < psi_prime(LossKind::Bernoulli, t) ? 1.0 : 0.0; break;
      case LossKind::Poisson: {
        std::poisson_distribution<long long> pois(std::exp(t));
        y[e] = static_cast<double>(pois(rng));
        break;
      }
    }
  }
  return pattern.with_values(std::move(y));
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  if (spec.rank < 1 || spec.rank > std::min(spec.n, spec.m)) {
    throw ConfigError("synthetic rank must be in [1, min(n, m)]");
  }
  if (!(spec.scale >= 0.0)) throw ConfigError("synthetic factor scale must be nonnegative");
  std::mt19937_64 rng(spec.seed);
  SyntheticData d;
  d.u = gaussian(spec.n, spec.rank, spec.scale / std::sqrt(static_cast<double>(spec.rank)), rng);
  d.v = gaussian(spec.m, spec.rank, 1.0, rng);
  const ObservedMatrix pattern = sample_pattern(spec.n, spec.m, spec.per_row, rng);
  d.theta = theta_entries(pattern, d.u, d.v);
  d.y = sample_responses(spec.loss, pattern, d.theta, spec.noise_sd, rng);
  return d;
}

Split split(const ObservedMatrix& y, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must be in (0, 1)");
  const Index nnz = y.nnz();
  if (nnz < 2) throw DataError("cannot split fewer than two observations");
  Index n_test = static_cast<Index>(std::llround(fraction * static_cast<double>(nnz)));
  n_test = std::clamp<Index>(n_test, 1, nnz - 1);
  std::vector<Index> perm(static_cast<std::size_t>(nnz));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Index> test(perm.begin(), perm.begin() + n_test);
  std::vector<Index> train(perm.begin() + n_test, perm.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return Split{y.subset(train), y.subset(test)};
}

std::vector<std::vector<Index>> fold_positions(Index nnz, int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (nnz < folds) throw DataError("fewer observations than folds");
  std::vector<Index> perm(static_cast<std::size_t>(nnz));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(folds));
  for (Index k = 0; k < nnz; ++k) out[static_cast<std::size_t>(k % folds)].push_back(perm[k]);
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

std::vector<Index> complement_positions(Index nnz, const std::vector<Index>& positions) {
  std::vector<char> mark(static_cast<std::size_t>(nnz), 0);
  for (Index p : positions) mark[static_cast<std::size_t>(p)] = 1;
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(nnz) - positions.size());
  for (Index k = 0; k < nnz; ++k) {
    if (!mark[static_cast<std::size_t>(k)]) out.push_back(k);
  }
  return out;
}

EvalMetrics evaluate(LossKind kind, const Vector& theta, const ObservedMatrix& test) {
  EvalMetrics out;
  out.deviance = mean_deviance(kind, theta, test);
  const Vector& y = test.values();
  const double count = static_cast<double>(test.nnz());
  double se = 0.0, miss = 0.0, ll = 0.0;
  for (Index e = 0; e < test.nnz(); ++e) {
    const double mean = psi_prime(kind, theta[e]);
    se += (y[e] - mean) * (y[e] - mean);
    if (kind == LossKind::Bernoulli) {
      miss += ((theta[e] > 0.0) != (y[e] > 0.5)) ? 1.0 : 0.0;
      ll += psi(kind, theta[e]) - y[e] * theta[e];
    }
  }
  out.mse = se / count;
  out.misclassification = kind == LossKind::Bernoulli ? miss / count : kNaN;
  out.log_loss = kind == LossKind::Bernoulli ? ll / count : kNaN;
  return out;
}

EvalMetrics evaluate(const ModelSpec& spec, const ModelState& state, const ObservedMatrix& test) {
  return evaluate(spec.loss.kind, theta_on_omega(spec, state, test), test);
}

FitResult fit_offsets(const ModelSpec& spec, const ObservedMatrix& y, const SolveOptions& opts) {
  SolveOptions o = opts;
  o.update_gamma1 = false;
  return fit_proximal(spec, y, o);
}

double data_lambda_max(const ModelSpec& spec, const ObservedMatrix& y, const SolveOptions& opts) {
  const FitResult base = fit_offsets(spec, y, opts);
  return lambda_max(spec, y, base.state);
}

std::vector<double> geometric_grid(double top, int count, double min_ratio) {
  if (!(top > 0.0) || count < 1 || !(min_ratio > 0.0 && min_ratio < 1.0)) {
    throw ConfigError("geometric grid needs top > 0, count ≥ 1 and ratio in (0, 1)");
  }
  std::vector<double> grid(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const double frac = count == 1 ? 0.0 : static_cast<double>(k) / (count - 1);
    grid[static_cast<std::size_t>(k)] = top * std::pow(min_ratio, frac);
  }
  return grid;
}

std::vector<PathPoint> lambda_path(const ModelSpec& spec, const ObservedMatrix& train,
                                   const ObservedMatrix* test, const std::vector<double>& grid,
                                   const SolveOptions& opts, bool warm_start) {
  if (grid.empty()) throw ConfigError("lambda grid is empty");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!(grid[k] > 0.0)) throw ConfigError("lambda grid values must be positive");
    if (k > 0 && !(grid[k] < grid[k - 1])) {
      throw ConfigError("lambda grid must be strictly descending");
    }
  }
  std::vector<PathPoint> out;
  std::optional<ModelState> previous;
  for (double lambda : grid) {
    PathPoint p;
    p.lambda = lambda;
    ModelSpec s = spec;
    s.lambda_gamma = lambda;
    const auto start = std::chrono::steady_clock::now();
    try {
      FitResult r = fit_proximal(s, train, opts, warm_start ? previous : std::nullopt);
      p.seconds = elapsed(start);
      p.objective = r.trace.rows.back().objective;
      p.train_deviance = mean_deviance(s.loss.kind, theta_on_omega(s, r.state, train), train);
      if (test != nullptr) p.test = evaluate(s, r.state, *test);
      p.rank = r.state.gamma1.rank();
      p.svd_iterations = r.trace.total_svd_iterations();
      p.iterations = r.trace.rows.back().iteration;
      p.converged = r.trace.converged;
      p.trace = std::move(r.trace);
      p.state = std::move(r.state);
      previous = p.state;
    } catch (const Error& e) {
      p.seconds = elapsed(start);
      p.error = std::string(category_name(e.category())) + ": " + e.what();
    }
    out.push_back(std::move(p));
  }
  return out;
}

CvResult cross_validate(const ModelSpec& spec, const ObservedMatrix& y, int folds,
                        const std::vector<double>& grid, const SolveOptions& opts,
                        std::uint64_t seed) {
  const auto parts = fold_positions(y.nnz(), folds, seed);
  CvResult cv;
  cv.grid = grid;
  const Index g = static_cast<Index>(grid.size());
  cv.fold_deviance = Matrix::Constant(folds, g, std::numeric_limits<double>::infinity());
  for (int f = 0; f < folds; ++f) {
    const ObservedMatrix test = y.subset(parts[static_cast<std::size_t>(f)]);
    const ObservedMatrix train =
        y.subset(complement_positions(y.nnz(), parts[static_cast<std::size_t>(f)]));
    const auto path = lambda_path(spec, train, &test, grid, opts, true);
    for (Index k = 0; k < g; ++k) {
      const PathPoint& p = path[static_cast<std::size_t>(k)];
      if (p.error.empty() && p.test) cv.fold_deviance(f, k) = p.test->deviance;
    }
  }
  cv.mean_deviance = cv.fold_deviance.colwise().mean().transpose();
  cv.se_deviance.resize(g);
  for (Index k = 0; k < g; ++k) {
    const auto col = cv.fold_deviance.col(k).array();
    const double mean = cv.mean_deviance[k];
    const double var = (col - mean).square().sum() / std::max(1, folds - 1);
    cv.se_deviance[k] = std::sqrt(var / folds);
  }
  cv.mean_deviance.minCoeff(&cv.selected);
  cv.lambda = grid[static_cast<std::size_t>(cv.selected)];
  // Refit on all data along the path down to the selected λ.
  const std::vector<double> head(grid.begin(), grid.begin() + cv.selected + 1);
  auto path = lambda_path(spec, y, nullptr, head, opts, true);
  cv.refit = std::move(path.back());
  return cv;
}

double select_offset_ridge(ModelSpec spec, const ObservedMatrix& train, const ObservedMatrix& test,
                           const SolveOptions& opts) {
  double best = 1.0, best_dev = std::numeric_limits<double>::infinity();
  for (int j = 0; j <= 40; ++j) {
    const double lam = std::pow(10.0, -2.0 + static_cast<double>(j) / 10.0);
    spec.lambda_alpha = lam;
    spec.lambda_beta = lam;
    const FitResult r = fit_offsets(spec, train, opts);
    const double dev = evaluate(spec, r.state, test).deviance;
    if (dev < best_dev) {
      best_dev = dev;
      best = lam;
    }
  }
  return best;
}

std::vector<AblationRow> side_info_ablation(const ObservedMatrix& y,
                                            const std::vector<Variant>& variants,
                                            const AblationOptions& opts) {
  if (variants.empty()) throw ConfigError("ablation needs at least one variant");
  const Split parts = split(y, opts.test_fraction, opts.seed);
  std::vector<AblationRow> rows;
  for (const Variant& v : variants) {
    const auto start = std::chrono::steady_clock::now();
    AblationRow row;
    row.name = v.name;
    const double top = data_lambda_max(v.spec, parts.train, opts.solve);
    const auto grid = geometric_grid(top, opts.grid_size, opts.min_ratio);
    const CvResult cv =
        cross_validate(v.spec, parts.train, opts.folds, grid, opts.solve, opts.seed + 1);
    row.lambda = cv.lambda;
    row.cv_deviance = cv.mean_deviance[cv.selected];
    row.cv_fold_deviance = cv.fold_deviance.col(cv.selected);
    ModelSpec s = v.spec;
    s.lambda_gamma = cv.lambda;
    if (!cv.refit.error.empty()) throw Error(ErrorCategory::Internal, cv.refit.error);
    row.test = evaluate(s, cv.refit.state, parts.test);
    row.rank = cv.refit.rank;
    row.seconds = elapsed(start);
    rows.push_back(std::move(row));
  }
  for (AblationRow& row : rows) {
    const AblationRow& base = rows.front();
    row.delta_test_deviance = row.test.deviance - base.test.deviance;
    const Vector diff = row.cv_fold_deviance - base.cv_fold_deviance;
    row.delta_cv_deviance = diff.mean();
    const double k = static_cast<double>(diff.size());
    const double var = diff.size() > 1 ? (diff.array() - diff.mean()).square().sum() / (k - 1) : 0.0;
    row.delta_cv_se = std::sqrt(var / k);
  }
  return rows;
}

GroupedData generate_grouped(const GroupedSpec& spec) {
  if (spec.groups < 1 || spec.groups > spec.rows) throw ConfigError("invalid group count");
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<Index> pick(0, spec.groups - 1);
  GroupedData d;
  d.group.resize(static_cast<std::size_t>(spec.rows));
  for (auto& g : d.group) g = pick(rng);
  const Matrix eta = gaussian(spec.groups, spec.rank, 1.0, rng);
  const Matrix eps = gaussian(spec.rows, spec.rank, 1.0, rng);
  Matrix u(spec.rows, spec.rank);
  const double s = spec.scale / std::sqrt(2.0 * static_cast<double>(spec.rank));
  for (Index i = 0; i < spec.rows; ++i) {
    u.row(i) = s * (eta.row(d.group[static_cast<std::size_t>(i)]) + eps.row(i));
  }
  const Matrix v = gaussian(spec.cols, spec.rank, 1.0, rng);
  const ObservedMatrix pattern = sample_pattern(spec.rows, spec.cols, spec.per_row, rng);
  d.y = sample_responses(LossKind::Bernoulli, pattern, theta_entries(pattern, u, v), 1.0, rng);

  std::vector<Index> feature_group = d.group;
  if (spec.noise_features) {
    for (auto& g : feature_group) g = pick(rng);
  }
  std::vector<std::string> labels;
  for (Index g = 0; g < spec.groups; ++g) labels.push_back("group" + std::to_string(g));
  Matrix x = Matrix::Zero(spec.rows, spec.groups);
  for (Index i = 0; i < spec.rows; ++i) x(i, feature_group[static_cast<std::size_t>(i)]) = 1.0;
  // Drop empty groups so the dummies have full column rank.
  std::vector<Index> used;
  for (Index g = 0; g < spec.groups; ++g) {
    if (x.col(g).sum() > 0.0) used.push_back(g);
  }
  Matrix xu(spec.rows, static_cast<Index>(used.size()));
  std::vector<std::string> lu;
  for (std::size_t k = 0; k < used.size(); ++k) {
    xu.col(static_cast<Index>(k)) = x.col(used[k]);
    lu.push_back(labels[static_cast<std::size_t>(used[k])]);
  }
  d.row_features = FeatureMatrix(std::move(xu), std::move(lu));
  return d;
}

CurveData generate_curves(const CurveSpec& spec) {
  if (spec.samples < 1 || spec.samples >= spec.grid) {
    throw ConfigError("samples per curve must be in [1, grid)");
  }
  std::mt19937_64 rng(spec.seed);
  CurveData d;
  d.points.resize(static_cast<std::size_t>(spec.grid));
  for (Index j = 0; j < spec.grid; ++j) {
    d.points[static_cast<std::size_t>(j)] = static_cast<double>(j) / static_cast<double>(spec.grid - 1);
  }
  const Matrix fine = orthonormal_columns(natural_spline_basis(d.points, spec.df_fine));
  const Matrix coarse = spline_design(d.points, spec.df_coarse, spec.df_fine).coarse;
  const double g = static_cast<double>(spec.grid);
  // A coefficient vector c on an orthonormal basis gives pointwise rms ‖c‖/√grid.
  auto smooth = [&](const Matrix& basis, Index count, double rms) {
    const double sd = rms * std::sqrt(g / static_cast<double>(basis.cols()));
    return Matrix(basis * gaussian(basis.cols(), count, sd, rng));
  };
  const Vector mean = smooth(fine, 1, 1.0).col(0);
  const Matrix phi = smooth(fine, spec.rank, 1.0);  // grid × rank
  const Matrix scores = gaussian(spec.curves, spec.rank, 1.0 / std::sqrt(static_cast<double>(spec.rank)), rng);
  const Matrix trend = smooth(coarse, spec.curves, 0.3).transpose();  // curves × grid
  d.truth = scores * phi.transpose() + trend;
  d.truth.rowwise() += mean.transpose();

  std::vector<Entry> train, test;
  std::normal_distribution<double> noise(0.0, spec.noise_sd);
  std::vector<Index> cols(static_cast<std::size_t>(spec.grid));
  for (Index i = 0; i < spec.curves; ++i) {
    std::iota(cols.begin(), cols.end(), Index{0});
    for (Index k = 0; k < spec.samples; ++k) {
      std::uniform_int_distribution<Index> pick(k, spec.grid - 1);
      std::swap(cols[k], cols[pick(rng)]);
    }
    std::vector<char> sampled(static_cast<std::size_t>(spec.grid), 0);
    for (Index k = 0; k < spec.samples; ++k) sampled[static_cast<std::size_t>(cols[k])] = 1;
    for (Index j = 0; j < spec.grid; ++j) {
      const double value = d.truth(i, j) + noise(rng);
      (sampled[static_cast<std::size_t>(j)] ? train : test).push_back(Entry{i, j, value});
    }
  }
  d.train = ObservedMatrix(spec.curves, spec.grid, std::move(train));
  d.test = ObservedMatrix(spec.curves, spec.grid, std::move(test));
  return d;
}

FeatureMatrix dummy_features(const std::vector<std::string>& categories) {
  std::unordered_map<std::string, Index> index;
  std::vector<std::string> labels;
  for (const auto& c : categories) {
    if (index.emplace(c, static_cast<Index>(labels.size())).second) labels.push_back(c);
  }
  Matrix x = Matrix::Zero(static_cast<Index>(categories.size()), static_cast<Index>(labels.size()));
  for (std::size_t i = 0; i < categories.size(); ++i) x(static_cast<Index>(i), index[categories[i]]) = 1.0;
  return FeatureMatrix(std::move(x), std::move(labels));
}

}  // namespace rrm
