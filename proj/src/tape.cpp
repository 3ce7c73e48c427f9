#include "dropmix/tape.hpp"

#include <cmath>
#include <string>

#include "dropmix/errors.hpp"

namespace dropmix {
namespace {

constexpr const char* kModule = "grad-engine";
constexpr double kNormFloor = 1e-12;

void check_same_cols(const Matrix& a, const Matrix& b, const char* where) {
  if (a.cols() != b.cols())
    throw ContractViolation(kModule, std::string(where) +
                                         ": column counts differ (" +
                                         std::to_string(a.cols()) + " vs " +
                                         std::to_string(b.cols()) + ")");
}

}  // namespace

void normalize_rows(const Matrix& m, Matrix* normed, Vector* inv_norm,
                    const char* who) {
  normed->resize(m.rows(), m.cols());
  inv_norm->resize(m.rows());
  for (Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (!(n >= kNormFloor))
      throw DegenerateEmbeddingError(
          kModule, std::string(who) + ": row " + std::to_string(i) +
                       " has norm " + std::to_string(n));
    (*inv_norm)(i) = 1.0 / n;
    normed->row(i) = m.row(i) * (*inv_norm)(i);
  }
}

int Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

const Tape::Node& Tape::at(Var v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
    throw ContractViolation(kModule, "invalid tape handle");
  return nodes_[static_cast<std::size_t>(v.id)];
}

Tape::Node& Tape::at(Var v) {
  return const_cast<Node&>(static_cast<const Tape*>(this)->at(v));
}

Var Tape::leaf(Matrix value, bool requires_grad) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return Var{push(std::move(n))};
}

Var Tape::sparse_propagate(const SparseMatrix& op, Var h) {
  const Node& hn = at(h);
  if (op.cols() != hn.value.rows())
    throw ContractViolation(
        kModule, "sparse_propagate: operator is " + std::to_string(op.rows()) +
                     "x" + std::to_string(op.cols()) + " but input has " +
                     std::to_string(hn.value.rows()) + " rows");
  Node n;
  n.op = Op::kSparsePropagate;
  n.sparse_op = &op;
  n.parents = {h.id};
  n.requires_grad = hn.requires_grad;
  n.value = op * hn.value;
  return Var{push(std::move(n))};
}

Var Tape::dense_affine(Var h, Var w) {
  const Node& hn = at(h);
  const Node& wn = at(w);
  if (hn.value.cols() != wn.value.rows())
    throw ContractViolation(
        kModule, "dense_affine: inner dimensions differ (" +
                     std::to_string(hn.value.cols()) + " vs " +
                     std::to_string(wn.value.rows()) + ")");
  Node n;
  n.op = Op::kDenseAffine;
  n.parents = {h.id, w.id};
  n.requires_grad = hn.requires_grad || wn.requires_grad;
  n.value = hn.value * wn.value;
  return Var{push(std::move(n))};
}

Var Tape::relu(Var x) {
  const Node& xn = at(x);
  Node n;
  n.op = Op::kRelu;
  n.parents = {x.id};
  n.requires_grad = xn.requires_grad;
  n.value = xn.value.cwiseMax(0.0);
  return Var{push(std::move(n))};
}

Var Tape::transpose(Var x) {
  const Node& xn = at(x);
  Node n;
  n.op = Op::kTranspose;
  n.parents = {x.id};
  n.requires_grad = xn.requires_grad;
  n.value = xn.value.transpose();
  return Var{push(std::move(n))};
}

Var Tape::cosine_sim(Var u, Var v) {
  const Node& un = at(u);
  const Node& vn = at(v);
  check_same_cols(un.value, vn.value, "cosine_sim");
  Node n;
  n.op = Op::kCosineSim;
  n.parents = {u.id, v.id};
  n.requires_grad = un.requires_grad || vn.requires_grad;
  normalize_rows(un.value, &n.normed_a, &n.inv_norm_a, "cosine_sim lhs");
  normalize_rows(vn.value, &n.normed_b, &n.inv_norm_b, "cosine_sim rhs");
  n.value = n.normed_a * n.normed_b.transpose();
  return Var{push(std::move(n))};
}

Var Tape::cosine_sim_bank(Var u, Matrix bank_rows, Index per_row) {
  const Node& un = at(u);
  if (per_row <= 0)
    throw ContractViolation(kModule, "cosine_sim_bank: per_row must be >= 1");
  if (bank_rows.rows() != un.value.rows() * per_row)
    throw ContractViolation(kModule,
                            "cosine_sim_bank: bank row count mismatch");
  check_same_cols(un.value, bank_rows, "cosine_sim_bank");
  Node n;
  n.op = Op::kCosineSimBank;
  n.parents = {u.id};
  n.requires_grad = un.requires_grad;
  n.per_row = per_row;
  normalize_rows(un.value, &n.normed_a, &n.inv_norm_a, "cosine_sim_bank lhs");
  Vector bank_inv;
  normalize_rows(bank_rows, &n.aux, &bank_inv, "cosine_sim_bank bank");
  n.value.resize(un.value.rows(), per_row);
  for (Index i = 0; i < un.value.rows(); ++i)
    for (Index j = 0; j < per_row; ++j)
      n.value(i, j) = n.normed_a.row(i).dot(n.aux.row(i * per_row + j));
  return Var{push(std::move(n))};
}

Var Tape::nce_reduce(Var cross, std::optional<Var> bank_sims,
                     std::optional<Var> intra, double tau) {
  if (!(tau > 0.0))
    throw ContractViolation(kModule, "nce_reduce: tau must be positive");
  const Node& cn = at(cross);
  const Index n_rows = cn.value.rows();
  if (cn.value.cols() != n_rows)
    throw ContractViolation(kModule, "nce_reduce: cross matrix must be square");

  Node n;
  n.op = Op::kNceReduce;
  n.tau = tau;
  n.parents = {cross.id};
  n.requires_grad = cn.requires_grad;
  const Matrix* bank = nullptr;
  const Matrix* in = nullptr;
  if (bank_sims) {
    const Node& bn = at(*bank_sims);
    if (bn.value.rows() != n_rows)
      throw ContractViolation(kModule, "nce_reduce: bank sims row mismatch");
    bank = &bn.value;
    n.parents.push_back(bank_sims->id);
    n.requires_grad = n.requires_grad || bn.requires_grad;
  }
  if (intra) {
    const Node& in_node = at(*intra);
    if (in_node.value.rows() != n_rows || in_node.value.cols() != n_rows)
      throw ContractViolation(kModule, "nce_reduce: intra matrix mismatch");
    in = &in_node.value;
    n.parents.push_back(intra->id);
    n.requires_grad = n.requires_grad || in_node.requires_grad;
  }

  n.softmax_cross.resize(n_rows, n_rows);
  if (bank) n.softmax_bank.resize(n_rows, bank->cols());
  if (in) n.softmax_intra.resize(n_rows, n_rows);

  double total = 0.0;
  for (Index i = 0; i < n_rows; ++i) {
    double m = cn.value.row(i).maxCoeff() / tau;
    if (bank && bank->cols() > 0)
      m = std::max(m, bank->row(i).maxCoeff() / tau);
    if (in)
      for (Index j = 0; j < n_rows; ++j)
        if (j != i) m = std::max(m, (*in)(i, j) / tau);

    double denom = 0.0;
    for (Index j = 0; j < n_rows; ++j) {
      const double e = std::exp(cn.value(i, j) / tau - m);
      n.softmax_cross(i, j) = e;
      denom += e;
    }
    if (bank)
      for (Index j = 0; j < bank->cols(); ++j) {
        const double e = std::exp((*bank)(i, j) / tau - m);
        n.softmax_bank(i, j) = e;
        denom += e;
      }
    if (in)
      for (Index j = 0; j < n_rows; ++j) {
        double e = 0.0;
        if (j != i) {
          e = std::exp((*in)(i, j) / tau - m);
          denom += e;
        }
        n.softmax_intra(i, j) = e;
      }

    const double lse = m + std::log(denom);
    total += lse - cn.value(i, i) / tau;
    const double inv = 1.0 / denom;
    n.softmax_cross.row(i) *= inv;
    if (bank) n.softmax_bank.row(i) *= inv;
    if (in) n.softmax_intra.row(i) *= inv;
  }

  n.value.resize(1, 1);
  n.value(0, 0) = total / static_cast<double>(n_rows);
  return Var{push(std::move(n))};
}

Var Tape::scaled_sum(const std::vector<Var>& terms,
                     const std::vector<double>& coeffs) {
  if (terms.empty() || terms.size() != coeffs.size())
    throw ContractViolation(kModule, "scaled_sum: terms/coeffs mismatch");
  Node n;
  n.op = Op::kScaledSum;
  n.coeffs = coeffs;
  double total = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const Node& tn = at(terms[i]);
    if (tn.value.rows() != 1 || tn.value.cols() != 1)
      throw ContractViolation(kModule, "scaled_sum: terms must be scalars");
    n.parents.push_back(terms[i].id);
    n.requires_grad = n.requires_grad || tn.requires_grad;
    total += coeffs[i] * tn.value(0, 0);
  }
  n.value.resize(1, 1);
  n.value(0, 0) = total;
  return Var{push(std::move(n))};
}

const Matrix& Tape::value(Var v) const { return at(v).value; }

bool Tape::requires_grad(Var v) const { return at(v).requires_grad; }

const Matrix& Tape::grad(Var v) const {
  const Node& n = at(v);
  if (n.grad.size() == 0)
    throw ContractViolation(kModule, "gradient not available for this node");
  return n.grad;
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0)
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  n.grad += g;
}

void Tape::backward(Var root) {
  if (backward_done_)
    throw ContractViolation(kModule, "backward may be called once per tape");
  backward_done_ = true;
  Node& r = at(root);
  if (r.value.rows() != 1 || r.value.cols() != 1)
    throw ContractViolation(kModule, "backward root must be a scalar");
  if (!r.requires_grad) return;
  r.grad = Matrix::Ones(1, 1);

  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    const Matrix& g = n.grad;
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kSparsePropagate: {
        accumulate(n.parents[0], n.sparse_op->transpose() * g);
        break;
      }
      case Op::kDenseAffine: {
        const Node& h = nodes_[static_cast<std::size_t>(n.parents[0])];
        const Node& w = nodes_[static_cast<std::size_t>(n.parents[1])];
        if (h.requires_grad) accumulate(n.parents[0], g * w.value.transpose());
        if (w.requires_grad) accumulate(n.parents[1], h.value.transpose() * g);
        break;
      }
      case Op::kRelu: {
        const Node& x = nodes_[static_cast<std::size_t>(n.parents[0])];
        accumulate(n.parents[0],
                   (x.value.array() > 0.0).cast<Scalar>().matrix()
                       .cwiseProduct(g));
        break;
      }
      case Op::kTranspose: {
        accumulate(n.parents[0], g.transpose());
        break;
      }
      case Op::kCosineSim: {
        const Node& u = nodes_[static_cast<std::size_t>(n.parents[0])];
        const Node& v = nodes_[static_cast<std::size_t>(n.parents[1])];
        if (u.requires_grad) {
          Matrix du_hat = g * n.normed_b;  // N x k
          Matrix du(du_hat.rows(), du_hat.cols());
          for (Index i = 0; i < du.rows(); ++i) {
            const double along = du_hat.row(i).dot(n.normed_a.row(i));
            du.row(i) =
                (du_hat.row(i) - along * n.normed_a.row(i)) * n.inv_norm_a(i);
          }
          accumulate(n.parents[0], du);
        }
        if (v.requires_grad) {
          Matrix dv_hat = g.transpose() * n.normed_a;  // M x k
          Matrix dv(dv_hat.rows(), dv_hat.cols());
          for (Index i = 0; i < dv.rows(); ++i) {
            const double along = dv_hat.row(i).dot(n.normed_b.row(i));
            dv.row(i) =
                (dv_hat.row(i) - along * n.normed_b.row(i)) * n.inv_norm_b(i);
          }
          accumulate(n.parents[1], dv);
        }
        break;
      }
      case Op::kCosineSimBank: {
        Matrix du(n.normed_a.rows(), n.normed_a.cols());
        for (Index i = 0; i < du.rows(); ++i) {
          RowVector acc = RowVector::Zero(du.cols());
          for (Index j = 0; j < n.per_row; ++j) {
            acc += g(i, j) * (n.aux.row(i * n.per_row + j) -
                              n.value(i, j) * n.normed_a.row(i));
          }
          du.row(i) = acc * n.inv_norm_a(i);
        }
        accumulate(n.parents[0], du);
        break;
      }
      case Op::kNceReduce: {
        const double scale =
            g(0, 0) / (static_cast<double>(n.softmax_cross.rows()) * n.tau);
        std::size_t p = 0;
        {
          Matrix dc = scale * n.softmax_cross;
          dc.diagonal().array() -= scale;
          accumulate(n.parents[p++], dc);
        }
        if (n.softmax_bank.size() > 0)
          accumulate(n.parents[p++], Matrix(scale * n.softmax_bank));
        if (n.softmax_intra.size() > 0)
          accumulate(n.parents[p++], Matrix(scale * n.softmax_intra));
        break;
      }
      case Op::kScaledSum: {
        for (std::size_t i = 0; i < n.parents.size(); ++i)
          accumulate(n.parents[i], Matrix(n.coeffs[i] * g));
        break;
      }
    }
  }
}

}  // namespace dropmix
