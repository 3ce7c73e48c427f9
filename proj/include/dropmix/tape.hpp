#pragma once

#include <optional>
#include <vector>

#include "dropmix/types.hpp"

namespace dropmix {

// Handle to a tape node.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense matrices. Nodes are recorded in forward
// order and backward() walks them in exact reverse. The primitive set is
// deliberately small: just enough to express the GCN encoder and the
// InfoNCE objective with synthesized-negative terms.
//
// A tape owns its node values; sparse propagation operators are referenced
// and must outlive the tape. Replaying the same forward sequence on fresh
// tapes yields bit-identical values.
class Tape {
 public:
  // Leaf holding a value; set requires_grad for trainable parameters.
  Var leaf(Matrix value, bool requires_grad = false);

  // y = op * h. Backward: dh = op^T * g.
  Var sparse_propagate(const SparseMatrix& op, Var h);

  // y = h * w. Backward: dh = g * w^T, dw = h^T * g.
  Var dense_affine(Var h, Var w);

  // Elementwise max(0, x); subgradient at exactly 0 is 0.
  Var relu(Var x);

  Var transpose(Var x);

  // c(i,j) = cos(u_i, v_j) over rows. Rows with norm < 1e-12 raise a
  // degenerate-embedding error.
  Var cosine_sim(Var u, Var v);

  // w(i,j) = cos(u_i, bank row i*per_row + j). The bank rows are constants:
  // no gradient flows into them.
  Var cosine_sim_bank(Var u, Matrix bank_rows, Index per_row);

  // Mean over rows i of [logsumexp_j(args/tau) - cross(i,i)/tau], where the
  // logsumexp runs over all columns of `cross`, all columns of `bank_sims`
  // (when given), and the off-diagonal columns of `intra` (when given).
  Var nce_reduce(Var cross, std::optional<Var> bank_sims,
                 std::optional<Var> intra, double tau);

  // Scalar combination sum_i coeffs[i] * terms[i]; all terms must be 1x1.
  Var scaled_sum(const std::vector<Var>& terms,
                 const std::vector<double>& coeffs);

  const Matrix& value(Var v) const;

  // Seeds d(root)/d(root) = 1 (root must be 1x1) and accumulates gradients
  // into every node that requires them. May be called once per tape.
  void backward(Var root);

  const Matrix& grad(Var v) const;
  bool requires_grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op {
    kLeaf,
    kSparsePropagate,
    kDenseAffine,
    kRelu,
    kTranspose,
    kCosineSim,
    kCosineSimBank,
    kNceReduce,
    kScaledSum,
  };

  struct Node {
    Op op;
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<int> parents;
    // Op-specific state.
    const SparseMatrix* sparse_op = nullptr;
    Matrix normed_a, normed_b;   // cosine: row-normalized operands
    Vector inv_norm_a, inv_norm_b;
    Matrix aux;                  // bank rows / softmax caches
    Matrix softmax_cross, softmax_bank, softmax_intra;
    Index per_row = 0;
    double tau = 0.0;
    std::vector<double> coeffs;
  };

  int push(Node node);
  const Node& at(Var v) const;
  Node& at(Var v);
  void accumulate(int id, const Matrix& g);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Row-normalizes `m` into `normed` and writes 1/norm per row; rows with
// norm < 1e-12 raise a degenerate-embedding error tagged with `who`.
void normalize_rows(const Matrix& m, Matrix* normed, Vector* inv_norm,
                    const char* who);

}  // namespace dropmix
