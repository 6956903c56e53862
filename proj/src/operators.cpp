#include "rrm/operators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rrm/error.hpp"
#include "rrm/flops.hpp"

namespace rrm {

namespace {
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
thread_local std::uint64_t flop_total = 0;
}

void flops::add(std::uint64_t n) noexcept { flop_total += n; }
std::uint64_t flops::total() noexcept { return flop_total; }

// ---------------------------------------------------------------------------
// ObservedMatrix

ObservedMatrix::ObservedMatrix(Index n_rows, Index n_cols, std::vector<Entry> entries) {
  if (n_rows < 1 || n_cols < 1) {
    throw DataError("observed matrix needs positive dimensions");
  }
  if (entries.empty()) {
    throw DataError("observed matrix needs at least one entry");
  }
  for (const auto& e : entries) {
    if (e.row < 0 || e.row >= n_rows || e.col < 0 || e.col >= n_cols) {
      std::ostringstream os;
      os << "entry (" << e.row << "," << e.col << ") outside " << n_rows << "x" << n_cols;
      throw DataError(os.str());
    }
  }
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  for (std::size_t k = 1; k < entries.size(); ++k) {
    if (entries[k].row == entries[k - 1].row && entries[k].col == entries[k - 1].col) {
      std::ostringstream os;
      os << "duplicate entry (" << entries[k].row << "," << entries[k].col << ")";
      throw DataError(os.str());
    }
  }

  auto p = std::make_shared<Pattern>();
  p->rows = n_rows;
  p->cols = n_cols;
  const auto nnz = static_cast<Index>(entries.size());
  p->row_ptr.assign(n_rows + 1, 0);
  p->row_index.resize(nnz);
  p->col_index.resize(nnz);
  values_.resize(nnz);
  std::vector<Index> col_count(n_cols, 0);
  for (Index k = 0; k < nnz; ++k) {
    p->row_index[k] = entries[k].row;
    p->col_index[k] = entries[k].col;
    values_[k] = entries[k].value;
    ++p->row_ptr[entries[k].row + 1];
    ++col_count[entries[k].col];
  }
  for (Index i = 0; i < n_rows; ++i) {
    p->max_row_count = std::max(p->max_row_count, p->row_ptr[i + 1]);
    p->row_ptr[i + 1] += p->row_ptr[i];
  }
  p->max_col_count = *std::max_element(col_count.begin(), col_count.end());
  pattern_ = std::move(p);
}

ObservedMatrix ObservedMatrix::with_values(Vector values) const {
  if (values.size() != nnz()) {
    throw DimensionError("with_values: expected " + std::to_string(nnz()) + " values, got " +
                         std::to_string(values.size()));
  }
  return ObservedMatrix(pattern_, std::move(values));
}

std::vector<Entry> ObservedMatrix::entries() const {
  std::vector<Entry> out(nnz());
  for (Index k = 0; k < nnz(); ++k) out[k] = {row(k), col(k), values_[k]};
  return out;
}

ObservedMatrix ObservedMatrix::transposed() const {
  std::vector<Entry> out(nnz());
  for (Index k = 0; k < nnz(); ++k) out[k] = {col(k), row(k), values_[k]};
  return ObservedMatrix(cols(), rows(), std::move(out));
}

ObservedMatrix ObservedMatrix::subset(std::span<const Index> positions) const {
  std::vector<Entry> out;
  out.reserve(positions.size());
  for (Index k : positions) {
    if (k < 0 || k >= nnz()) throw DimensionError("subset: position out of range");
    out.push_back({row(k), col(k), values_[k]});
  }
  return ObservedMatrix(rows(), cols(), std::move(out));
}

Matrix ObservedMatrix::times(const Matrix& x) const {
  if (x.rows() != cols()) {
    throw DimensionError("sparse apply: operand has " + std::to_string(x.rows()) +
                         " rows, expected " + std::to_string(cols()));
  }
  // Row-major copies let each entry update a whole row of the block at once.
  const Index w = x.cols();
  const RowMatrix xr = x;
  RowMatrix acc = RowMatrix::Zero(rows(), w);
  const auto& rp = pattern_->row_ptr;
  const auto& ci = pattern_->col_index;
  for (Index i = 0; i < rows(); ++i) {
    for (Index k = rp[i]; k < rp[i + 1]; ++k) acc.row(i).noalias() += values_[k] * xr.row(ci[k]);
  }
  Matrix out = acc;
  flops::add(2ull * static_cast<std::uint64_t>(nnz() * w));
  return out;
}

Matrix ObservedMatrix::transpose_times(const Matrix& x) const {
  if (x.rows() != rows()) {
    throw DimensionError("sparse adjoint apply: operand has " + std::to_string(x.rows()) +
                         " rows, expected " + std::to_string(rows()));
  }
  const Index w = x.cols();
  const RowMatrix xr = x;
  RowMatrix acc = RowMatrix::Zero(cols(), w);
  const auto& rp = pattern_->row_ptr;
  const auto& ci = pattern_->col_index;
  for (Index i = 0; i < rows(); ++i) {
    for (Index k = rp[i]; k < rp[i + 1]; ++k) acc.row(ci[k]).noalias() += values_[k] * xr.row(i);
  }
  Matrix out = acc;
  flops::add(2ull * static_cast<std::uint64_t>(nnz() * w));
  return out;
}

Vector ObservedMatrix::row_sums() const {
  Vector out = Vector::Zero(rows());
  for (Index k = 0; k < nnz(); ++k) out[row(k)] += values_[k];
  return out;
}

Vector ObservedMatrix::col_sums() const {
  Vector out = Vector::Zero(cols());
  for (Index k = 0; k < nnz(); ++k) out[col(k)] += values_[k];
  return out;
}

// ---------------------------------------------------------------------------
// Operator

namespace {

std::string shape(Index r, Index c) { return std::to_string(r) + "x" + std::to_string(c); }

void check_rows(const Operator& op, const Matrix& x, Index expected, const char* what) {
  if (x.rows() != expected) {
    throw DimensionError(std::string(what) + ": operand has " + std::to_string(x.rows()) +
                         " rows, operator is " + shape(op.rows(), op.cols()));
  }
}

}  // namespace

Operator make_operator(OperatorNode node) {
  return Operator(std::make_shared<const OperatorNode>(std::move(node)));
}

Index Operator::rows() const noexcept { return node_->rows; }
Index Operator::cols() const noexcept { return node_->cols; }

Operator Operator::dense(Matrix m) {
  const Index r = m.rows(), c = m.cols();
  return make_operator({DenseOp{std::move(m)}, r, c});
}

Operator Operator::sparse(ObservedMatrix s) {
  const Index r = s.rows(), c = s.cols();
  return make_operator({SparseOp{std::move(s)}, r, c});
}

Operator Operator::diagonal(Vector d) {
  const Index n = d.size();
  return make_operator({DiagonalOp{std::move(d)}, n, n});
}

Operator Operator::low_rank(Matrix left, Matrix right) {
  if (left.cols() != right.cols()) {
    throw DimensionError("low_rank: factor widths differ (" + std::to_string(left.cols()) +
                         " vs " + std::to_string(right.cols()) + ")");
  }
  const Index r = left.rows(), c = right.rows();
  return make_operator({LowRankOp{std::move(left), std::move(right)}, r, c});
}

Operator Operator::identity(Index dim) { return make_operator({IdentityOp{dim}, dim, dim}); }

Operator Operator::scaled(double s, const Operator& child) {
  if (s == 1.0) return child;
  const Index r = child.rows(), c = child.cols();
  return std::visit(
      [&](const auto& n) -> Operator {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, DenseOp>) {
          return dense(s * n.m);
        } else if constexpr (std::is_same_v<T, SparseOp>) {
          return sparse(n.s.with_values(s * n.s.values()));
        } else if constexpr (std::is_same_v<T, DiagonalOp>) {
          return diagonal(s * n.d);
        } else if constexpr (std::is_same_v<T, LowRankOp>) {
          return low_rank(s * n.left, n.right);
        } else if constexpr (std::is_same_v<T, ScaledOp>) {
          return scaled(s * n.scale, n.child);
        } else if constexpr (std::is_same_v<T, SumOp>) {
          std::vector<Operator> terms;
          terms.reserve(n.terms.size());
          for (const auto& t : n.terms) terms.push_back(scaled(s, t));
          return make_operator({SumOp{std::move(terms)}, r, c});
        } else if constexpr (std::is_same_v<T, ProductOp>) {
          std::vector<Operator> factors = n.factors;
          factors.front() = scaled(s, factors.front());
          return make_operator({ProductOp{std::move(factors)}, r, c});
        } else if constexpr (std::is_same_v<T, TransposedOp>) {
          return transposed(scaled(s, n.child));
        } else {
          return make_operator({ScaledOp{s, child}, r, c});
        }
      },
      child.node().value);
}

Operator Operator::sum(std::vector<Operator> terms) {
  if (terms.empty()) throw ArgumentError("sum: no terms");
  const Index r = terms.front().rows(), c = terms.front().cols();
  std::vector<Operator> flat;
  for (auto& t : terms) {
    if (t.rows() != r || t.cols() != c) {
      throw DimensionError("sum: term of shape " + shape(t.rows(), t.cols()) + " vs " +
                           shape(r, c));
    }
    if (const auto* s = std::get_if<SumOp>(&t.node().value)) {
      flat.insert(flat.end(), s->terms.begin(), s->terms.end());
    } else {
      flat.push_back(std::move(t));
    }
  }
  if (flat.size() == 1) return flat.front();
  return make_operator({SumOp{std::move(flat)}, r, c});
}

Operator Operator::product(std::vector<Operator> factors) {
  if (factors.empty()) throw ArgumentError("product: no factors");
  for (std::size_t k = 1; k < factors.size(); ++k) {
    if (factors[k - 1].cols() != factors[k].rows()) {
      throw DimensionError("product: cannot chain " +
                           shape(factors[k - 1].rows(), factors[k - 1].cols()) + " with " +
                           shape(factors[k].rows(), factors[k].cols()));
    }
  }
  if (factors.size() == 1) return factors.front();
  const Index r = factors.front().rows(), c = factors.back().cols();
  return make_operator({ProductOp{std::move(factors)}, r, c});
}

Operator Operator::transposed(const Operator& child) {
  if (const auto* t = std::get_if<TransposedOp>(&child.node().value)) return t->child;
  return make_operator({TransposedOp{child}, child.cols(), child.rows()});
}

Matrix Operator::apply(const Matrix& x) const {
  check_rows(*this, x, cols(), "apply");
  const Index w = x.cols();
  return std::visit(
      [&](const auto& n) -> Matrix {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, DenseOp>) {
          flops::add(2ull * static_cast<std::uint64_t>(n.m.size() * w));
          return n.m * x;
        } else if constexpr (std::is_same_v<T, SparseOp>) {
          return n.s.times(x);
        } else if constexpr (std::is_same_v<T, DiagonalOp>) {
          flops::add(static_cast<std::uint64_t>(n.d.size() * w));
          return n.d.asDiagonal() * x;
        } else if constexpr (std::is_same_v<T, LowRankOp>) {
          flops::add(2ull * static_cast<std::uint64_t>((n.left.size() + n.right.size()) * w));
          return n.left * (n.right.transpose() * x);
        } else if constexpr (std::is_same_v<T, IdentityOp>) {
          return x;
        } else if constexpr (std::is_same_v<T, ScaledOp>) {
          flops::add(static_cast<std::uint64_t>(rows() * w));
          return n.scale * n.child.apply(x);
        } else if constexpr (std::is_same_v<T, SumOp>) {
          Matrix out = n.terms.front().apply(x);
          for (std::size_t k = 1; k < n.terms.size(); ++k) out += n.terms[k].apply(x);
          flops::add(static_cast<std::uint64_t>((n.terms.size() - 1) * rows() * w));
          return out;
        } else if constexpr (std::is_same_v<T, ProductOp>) {
          Matrix out = n.factors.back().apply(x);
          for (std::size_t k = n.factors.size() - 1; k-- > 0;) out = n.factors[k].apply(out);
          return out;
        } else {
          return n.child.apply_adjoint(x);
        }
      },
      node_->value);
}

Matrix Operator::apply_adjoint(const Matrix& x) const {
  check_rows(*this, x, rows(), "apply_adjoint");
  const Index w = x.cols();
  return std::visit(
      [&](const auto& n) -> Matrix {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, DenseOp>) {
          flops::add(2ull * static_cast<std::uint64_t>(n.m.size() * w));
          return n.m.transpose() * x;
        } else if constexpr (std::is_same_v<T, SparseOp>) {
          return n.s.transpose_times(x);
        } else if constexpr (std::is_same_v<T, DiagonalOp>) {
          flops::add(static_cast<std::uint64_t>(n.d.size() * w));
          return n.d.asDiagonal() * x;
        } else if constexpr (std::is_same_v<T, LowRankOp>) {
          flops::add(2ull * static_cast<std::uint64_t>((n.left.size() + n.right.size()) * w));
          return n.right * (n.left.transpose() * x);
        } else if constexpr (std::is_same_v<T, IdentityOp>) {
          return x;
        } else if constexpr (std::is_same_v<T, ScaledOp>) {
          flops::add(static_cast<std::uint64_t>(cols() * w));
          return n.scale * n.child.apply_adjoint(x);
        } else if constexpr (std::is_same_v<T, SumOp>) {
          Matrix out = n.terms.front().apply_adjoint(x);
          for (std::size_t k = 1; k < n.terms.size(); ++k) out += n.terms[k].apply_adjoint(x);
          flops::add(static_cast<std::uint64_t>((n.terms.size() - 1) * cols() * w));
          return out;
        } else if constexpr (std::is_same_v<T, ProductOp>) {
          Matrix out = n.factors.front().apply_adjoint(x);
          for (std::size_t k = 1; k < n.factors.size(); ++k) out = n.factors[k].apply_adjoint(out);
          return out;
        } else {
          return n.child.apply(x);
        }
      },
      node_->value);
}

Matrix apply(const Operator& op, const Matrix& x) { return op.apply(x); }
Matrix apply_adjoint(const Operator& op, const Matrix& x) { return op.apply_adjoint(x); }

Operator operator+(const Operator& a, const Operator& b) { return Operator::sum({a, b}); }
Operator operator*(const Operator& a, const Operator& b) { return Operator::product({a, b}); }
Operator operator*(double s, const Operator& a) { return Operator::scaled(s, a); }

// ---------------------------------------------------------------------------
// SymmetricSolvable

SymmetricSolvable SymmetricSolvable::identity(Index dim, double c) {
  return SymmetricSolvable(c, Matrix(dim, 0), Vector(0));
}

SymmetricSolvable::SymmetricSolvable(double c, Matrix w, Vector d)
    : dim_(w.rows()), c_(c), w_(std::move(w)), d_(std::move(d)) {
  if (!(c_ > 0.0)) throw ArgumentError("symmetric solvable: base scalar must be positive");
  if (w_.cols() != d_.size()) {
    throw DimensionError("symmetric solvable: " + std::to_string(w_.cols()) +
                         " basis columns but " + std::to_string(d_.size()) + " eigenvalues");
  }
  if (w_.cols() > 0) {
    const double err =
        (w_.transpose() * w_ - Matrix::Identity(w_.cols(), w_.cols())).cwiseAbs().maxCoeff();
    if (err > 1e-10) {
      throw ArgumentError("symmetric solvable: basis not orthonormal (deviation " +
                          std::to_string(err) + ")");
    }
  }
}

Matrix SymmetricSolvable::apply(const Matrix& x) const {
  if (x.rows() != dim_) throw DimensionError("symmetric solvable apply: shape mismatch");
  flops::add(static_cast<std::uint64_t>((4 * w_.size() + dim_) * x.cols()));
  return c_ * x + w_ * (d_.asDiagonal() * (w_.transpose() * x));
}

Operator SymmetricSolvable::as_operator() const {
  Operator base = Operator::scaled(c_, Operator::identity(dim_));
  if (w_.cols() == 0) return base;
  return base + Operator::low_rank(w_ * d_.asDiagonal(), w_);
}

Matrix woodbury_solve(const SymmetricSolvable& a, const Matrix& b) {
  if (b.rows() != a.dim()) {
    throw DimensionError("woodbury_solve: right-hand side has " + std::to_string(b.rows()) +
                         " rows, system is " + std::to_string(a.dim()));
  }
  const double c = a.base();
  const Vector& d = a.eigenvalues();
  Vector shrink(d.size());
  for (Index k = 0; k < d.size(); ++k) {
    const double denom = c + d[k];
    if (std::abs(denom) < 1e-12 * c) {
      std::ostringstream os;
      os << "woodbury_solve: singular system, eigenvalue d[" << k << "] = " << d[k]
         << " cancels base " << c;
      throw SingularityError(os.str());
    }
    shrink[k] = d[k] / denom;
  }
  // (cI + W D Wᵀ)⁻¹ = (I − W diag(d/(c+d)) Wᵀ) / c for orthonormal W.
  const Matrix& w = a.basis();
  flops::add(static_cast<std::uint64_t>((4 * w.size() + b.rows()) * b.cols()));
  return (b - w * (shrink.asDiagonal() * (w.transpose() * b))) / c;
}

}  // namespace rrm
