#pragma once

#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "rrm/types.hpp"

namespace rrm {

struct Entry {
  Index row = 0;
  Index col = 0;
  double value = 0.0;
};

// Sparse triplet store of the observed entries Y over the observation set.
// Entries are kept in row-major order (row, then column); this is the order
// of every vector "over the observation set" in the library. The sparsity
// pattern is shared between copies, so with_values() is O(nnz) and
// allocation-light.
class ObservedMatrix {
 public:
  ObservedMatrix() = default;

  // Validates ranges, sorts row-major, and rejects duplicate (i,j) pairs and
  // empty entry lists with DataError.
  ObservedMatrix(Index n_rows, Index n_cols, std::vector<Entry> entries);

  Index rows() const noexcept { return pattern_ ? pattern_->rows : 0; }
  Index cols() const noexcept { return pattern_ ? pattern_->cols : 0; }
  Index nnz() const noexcept { return values_.size(); }

  Index row(Index e) const { return pattern_->row_index[e]; }
  Index col(Index e) const { return pattern_->col_index[e]; }
  const Vector& values() const noexcept { return values_; }

  std::span<const Index> row_ptr() const noexcept { return pattern_->row_ptr; }
  std::span<const Index> row_index() const noexcept { return pattern_->row_index; }
  std::span<const Index> col_index() const noexcept { return pattern_->col_index; }

  Index max_row_count() const noexcept { return pattern_ ? pattern_->max_row_count : 0; }
  Index max_col_count() const noexcept { return pattern_ ? pattern_->max_col_count : 0; }

  // Same pattern, new values (length nnz).
  ObservedMatrix with_values(Vector values) const;
  ObservedMatrix transposed() const;
  // Subset of the entries by position in the row-major order.
  ObservedMatrix subset(std::span<const Index> positions) const;
  std::vector<Entry> entries() const;

  // Y·x and Yᵀ·x for a dense block x. Reduction order is fixed: row-major
  // entry order, so results are bit-reproducible.
  Matrix times(const Matrix& x) const;
  Matrix transpose_times(const Matrix& x) const;

  // Σ_j Y_ij per row and Σ_i Y_ij per column.
  Vector row_sums() const;
  Vector col_sums() const;

  bool same_pattern(const ObservedMatrix& other) const noexcept {
    return pattern_ == other.pattern_;
  }

 private:
  struct Pattern {
    Index rows = 0;
    Index cols = 0;
    std::vector<Index> row_ptr;
    std::vector<Index> row_index;
    std::vector<Index> col_index;
    Index max_row_count = 0;
    Index max_col_count = 0;
  };

  ObservedMatrix(std::shared_ptr<const Pattern> pattern, Vector values)
      : pattern_(std::move(pattern)), values_(std::move(values)) {}

  std::shared_ptr<const Pattern> pattern_;
  Vector values_;
};

struct OperatorNode;
class Operator;
Operator make_operator(OperatorNode node);

// Implicit "easy to apply" linear operator: an immutable expression tree
// over dense-small, sparse, diagonal, low-rank and identity leaves, closed
// under scaling, sums, products and transposition. Block apply is the
// primitive; vectors are width-1 blocks.
//
// Constructors normalize lightly: nested sums are flattened, and scalars are
// folded into leaves (or pushed into the first factor of a product). No other
// rewriting happens.
class Operator {
 public:
  static Operator dense(Matrix m);
  static Operator sparse(ObservedMatrix s);
  static Operator diagonal(Vector d);
  // left·rightᵀ with left n×k and right m×k.
  static Operator low_rank(Matrix left, Matrix right);
  static Operator identity(Index dim);
  static Operator scaled(double s, const Operator& child);
  static Operator sum(std::vector<Operator> terms);
  static Operator product(std::vector<Operator> factors);
  static Operator transposed(const Operator& child);

  Index rows() const noexcept;
  Index cols() const noexcept;
  const OperatorNode& node() const noexcept { return *node_; }

  Matrix apply(const Matrix& x) const;
  Matrix apply_adjoint(const Matrix& x) const;

 private:
  explicit Operator(std::shared_ptr<const OperatorNode> node) : node_(std::move(node)) {}
  friend Operator make_operator(OperatorNode node);
  std::shared_ptr<const OperatorNode> node_;
};

struct DenseOp {
  Matrix m;
};
struct SparseOp {
  ObservedMatrix s;
};
struct DiagonalOp {
  Vector d;
};
struct LowRankOp {
  Matrix left;
  Matrix right;
};
struct IdentityOp {
  Index dim = 0;
};
struct ScaledOp {
  double scale = 1.0;
  Operator child;
};
struct SumOp {
  std::vector<Operator> terms;
};
struct ProductOp {
  std::vector<Operator> factors;
};
struct TransposedOp {
  Operator child;
};

struct OperatorNode {
  std::variant<DenseOp, SparseOp, DiagonalOp, LowRankOp, IdentityOp, ScaledOp, SumOp,
               ProductOp, TransposedOp>
      value;
  Index rows = 0;
  Index cols = 0;
};

Matrix apply(const Operator& op, const Matrix& x);
Matrix apply_adjoint(const Operator& op, const Matrix& x);

Operator operator+(const Operator& a, const Operator& b);
Operator operator*(const Operator& a, const Operator& b);
Operator operator*(double s, const Operator& a);

// A = c·I + W·diag(d)·Wᵀ with orthonormal W: the "easy to solve" class used
// for I − H.
class SymmetricSolvable {
 public:
  static SymmetricSolvable identity(Index dim, double c = 1.0);
  // Requires c > 0 and WᵀW = I within 1e-10 (ArgumentError otherwise).
  SymmetricSolvable(double c, Matrix w, Vector d);

  Index dim() const noexcept { return dim_; }
  double base() const noexcept { return c_; }
  const Matrix& basis() const noexcept { return w_; }
  const Vector& eigenvalues() const noexcept { return d_; }

  Matrix apply(const Matrix& x) const;
  Operator as_operator() const;

 private:
  Index dim_ = 0;
  double c_ = 1.0;
  Matrix w_;
  Vector d_;
};

// Solves a·x = b in O((n·k + k³)·width) via the Woodbury identity. Throws
// SingularityError naming the eigenvalue when |c + d_k| < 1e-12·c.
Matrix woodbury_solve(const SymmetricSolvable& a, const Matrix& b);

}  // namespace rrm
