#include "rrm/svd.hpp"

#include <algorithm>
#include <cmath>

#include "rrm/error.hpp"
#include "rrm/flops.hpp"

namespace rrm {

namespace {

Matrix gaussian_block(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) g(i, j) = normal(rng);
  return g;
}

// First coordinate with |x| above this is treated as "nonzero".
constexpr double kSignEps = 1e-12;

void fix_signs(Matrix& left, Matrix& right) {
  for (Index k = 0; k < left.cols(); ++k) {
    for (Index i = 0; i < left.rows(); ++i) {
      const double x = left(i, k);
      if (std::abs(x) > kSignEps) {
        if (x < 0) {
          left.col(k) *= -1.0;
          right.col(k) *= -1.0;
        }
        break;
      }
    }
  }
}

}  // namespace

OrthonormalizeResult orthonormalize(const Matrix& block, std::mt19937_64& rng) {
  const Index n = block.rows(), b = block.cols();
  if (b > n) {
    throw ArgumentError("orthonormalize: " + std::to_string(b) + " columns exceed dimension " +
                        std::to_string(n));
  }
  OrthonormalizeResult out;
  double max_norm = 0.0;
  for (Index k = 0; k < b; ++k) max_norm = std::max(max_norm, block.col(k).norm());

  // Householder QR handles the well-conditioned case; Gram–Schmidt below is
  // only needed when some column has to be replaced.
  if (max_norm > 0.0) {
    Eigen::HouseholderQR<Matrix> qr(block);
    const auto diag = qr.matrixQR().diagonal();
    bool full_rank = true;
    for (Index k = 0; k < b && full_rank; ++k) full_rank = std::abs(diag[k]) > 1e-12 * max_norm;
    if (full_rank) {
      out.q = qr.householderQ() * Matrix::Identity(n, b);
      for (Index k = 0; k < b; ++k) {
        if (diag[k] < 0.0) out.q.col(k) *= -1.0;
      }
      flops::add(static_cast<std::uint64_t>(4 * n * b * b));
      return out;
    }
  }

  out.q = block;

  for (Index k = 0; k < b; ++k) {
    auto v = out.q.col(k);
    const double original = v.norm();
    for (int pass = 0; pass < 2 && k > 0; ++pass) {
      const Vector h = out.q.leftCols(k).transpose() * v;
      v -= out.q.leftCols(k) * h;
    }
    double nrm = v.norm();
    if (!(nrm > 1e-12 * max_norm) || !(original > 0.0)) {
      out.replaced = true;
      // Try a few draws; in exact arithmetic one suffices.
      for (int attempt = 0; attempt < 8; ++attempt) {
        v = gaussian_block(n, 1, rng);
        for (int pass = 0; pass < 2 && k > 0; ++pass) {
          const Vector h = out.q.leftCols(k).transpose() * v;
          v -= out.q.leftCols(k) * h;
        }
        nrm = v.norm();
        if (nrm > 1e-8) break;
      }
    }
    v /= nrm;
  }
  flops::add(static_cast<std::uint64_t>(4 * n * b * b + 3 * n * b));
  return out;
}

OrthonormalizeResult orthonormalize(const Matrix& block) {
  std::mt19937_64 rng(0x0a7b0);
  return orthonormalize(block, rng);
}

Index next_rank_guess(Index previous_retained) {
  return std::max<Index>(previous_retained + 2, 10);
}

SvdResult subspace_svd(const Operator& op, Index rank, const WarmBasis* warm,
                       const SvdOptions& opts) {
  const Index n = op.rows(), m = op.cols();
  const Index mn = std::min(n, m);
  if (rank < 1 || rank > mn) {
    throw ArgumentError("subspace_svd: rank " + std::to_string(rank) + " outside [1, " +
                        std::to_string(mn) + "]");
  }
  if (!(opts.tol > 0.0)) throw ArgumentError("subspace_svd: tolerance must be positive");
  const Index b = std::min(mn, rank + std::max<Index>(opts.oversample, 0));
  std::mt19937_64 rng(opts.seed);

  Matrix start;
  Vector prev_sigma;
  if (warm != nullptr && warm->subspace.rows() == n && warm->subspace.cols() > 0) {
    const Index keep = std::min(b, warm->subspace.cols());
    start.resize(n, b);
    start.leftCols(keep) = warm->subspace.leftCols(keep);
    if (keep < b) start.rightCols(b - keep) = gaussian_block(n, b - keep, rng);
    prev_sigma = warm->singular_values;
  } else {
    start = gaussian_block(n, b, rng);
  }
  Matrix u = orthonormalize(start, rng).q;

  SvdResult res;
  Vector sigma;
  Matrix v_ritz;
  bool have_ritz = false;

  while (true) {
    Matrix z = op.apply_adjoint(u);  // m×b
    if (have_ritz) {
      const double s1 = sigma[0];
      bool ok = true;
      if (s1 > 0.0) {
        const double floor = std::max(opts.tol * s1, opts.residual_floor);
        Index checked = 0;
        for (Index k = 0; k < rank && ok; ++k) {
          if (sigma[k] <= floor) break;
          const double r = (z.col(k) - sigma[k] * v_ritz.col(k)).norm();
          if (r > opts.tol * s1) ok = false;
          ++checked;
        }
        if (ok) {
          if (prev_sigma.size() >= rank) {
            const Index c = std::max<Index>(checked, 1);
            const double change = (sigma.head(c) - prev_sigma.head(c)).norm();
            if (change > opts.tol * sigma.head(c).norm()) ok = false;
          } else {
            ok = false;
          }
        }
      }
      if (ok) {
        res.converged = true;
        break;
      }
      if (res.inner_iterations >= opts.max_iter) break;
      prev_sigma = sigma;
    }

    Matrix v = orthonormalize(z, rng).q;  // m×b
    Matrix y = op.apply(v);               // n×b
    Eigen::HouseholderQR<Matrix> qr(y);
    const Matrix q = qr.householderQ() * Matrix::Identity(n, b);
    const Matrix r = qr.matrixQR().topRows(b).triangularView<Eigen::Upper>();
    Eigen::JacobiSVD<Matrix> small(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    u = q * small.matrixU();
    v_ritz = v * small.matrixV();
    sigma = small.singularValues();
    flops::add(static_cast<std::uint64_t>(4 * n * b * b + 2 * m * b * b + 20 * b * b * b));
    have_ritz = true;
    ++res.inner_iterations;
  }

  fix_signs(u, v_ritz);
  res.left = u.leftCols(rank);
  res.right = v_ritz.leftCols(rank);
  res.singular_values = sigma.head(rank);
  res.block = u;
  res.block_singular_values = sigma;
  return res;
}

ProxResult soft_threshold_svd(const Operator& op, double threshold, Index rank_guess,
                              const WarmBasis* warm, const SvdOptions& opts) {
  if (!(threshold >= 0.0)) throw ArgumentError("soft_threshold_svd: negative threshold");
  const Index mn = std::min(op.rows(), op.cols());
  Index rank = std::clamp<Index>(rank_guess, 1, mn);

  SvdOptions inner = opts;
  inner.residual_floor = std::max(opts.residual_floor, threshold);
  ProxResult out;
  WarmBasis current;
  const WarmBasis* start = warm;
  SvdResult res;
  while (true) {
    res = subspace_svd(op, rank, start, inner);
    out.inner_iterations += res.inner_iterations;
    if (res.singular_values[rank - 1] > threshold && rank < mn) {
      current.subspace = res.block;
      current.singular_values = res.block_singular_values;
      start = &current;
      rank = std::min(2 * rank, mn);
      continue;
    }
    break;
  }

  Index keep = 0;
  while (keep < rank && res.singular_values[keep] > threshold) ++keep;
  out.left = res.left.leftCols(keep);
  out.right = res.right.leftCols(keep);
  out.sigma = (res.singular_values.head(keep).array() - threshold).matrix();
  out.converged = res.converged;
  out.computed_rank = rank;
  out.warm.subspace = res.block;
  out.warm.previous_rank = keep;
  out.warm.singular_values = res.block_singular_values;
  return out;
}

}  // namespace rrm
