#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dropmix/diffusion.hpp"
#include "dropmix/encoder.hpp"
#include "dropmix/errors.hpp"
#include "dropmix/loss.hpp"
#include "test_util.hpp"

using namespace dropmix;
using dropmix::testing::max_grad_rel_error;
using dropmix::testing::random_matrix;

namespace {

// Scalar oracle for the objective, computed with naive per-pair cosines and
// plain log/exp. Mirrors the documented contract, not the implementation.
double nce_oracle(const Matrix& hl, const Matrix& hg, const NegativeBank& bank,
                  const LossConfig& cfg) {
  const Index n = hl.rows();
  auto one_direction = [&](const Matrix& anchors, const Matrix& positives) {
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
      double denom = 0.0;
      for (Index k = 0; k < n; ++k)
        denom += std::exp(
            testing::cosine(anchors.row(i), positives.row(k)) / cfg.tau);
      if (cfg.include_intra_view_negatives)
        for (Index k = 0; k < n; ++k)
          if (k != i)
            denom += std::exp(
                testing::cosine(anchors.row(i), anchors.row(k)) / cfg.tau);
      if (!bank.empty())
        for (Index j = 0; j < bank.per_anchor; ++j)
          denom += std::exp(
              testing::cosine(anchors.row(i),
                              bank.vectors.row(i * bank.per_anchor + j)) /
              cfg.tau);
      const double pos =
          std::exp(testing::cosine(anchors.row(i), positives.row(i)) / cfg.tau);
      total += -std::log(pos / denom);
    }
    return total / static_cast<double>(n);
  };
  const double fwd = one_direction(hl, hg);
  if (!cfg.symmetrize) return fwd;
  return 0.5 * (fwd + one_direction(hg, hl));
}

double loss_value(const Matrix& hl, const Matrix& hg, const NegativeBank& bank,
                  const LossConfig& cfg) {
  Tape tape;
  ViewEmbeddings views{tape.leaf(hl), tape.leaf(hg)};
  return tape.value(info_nce(tape, views, bank, cfg))(0, 0);
}

NegativeBank bank_of(Matrix vectors, Index per_anchor) {
  NegativeBank bank;
  bank.vectors = std::move(vectors);
  bank.per_anchor = per_anchor;
  bank.provenance.resize(static_cast<std::size_t>(bank.vectors.rows()));
  return bank;
}

}  // namespace

TEST_CASE("identical embeddings give ln N for any temperature") {
  for (Index n : {2, 4, 16}) {
    Matrix h(n, 3);
    for (Index i = 0; i < n; ++i) h.row(i) << 0.3, -1.2, 0.5;
    for (double tau : {0.2, 0.5, 1.0, 5.0}) {
      LossConfig cfg;
      cfg.tau = tau;
      const double loss = loss_value(h, h, {}, cfg);
      CHECK(std::abs(loss - std::log(static_cast<double>(n))) <= 1e-9);
    }
  }
}

TEST_CASE("orthonormal two-node case equals ln(1+exp(-1))") {
  Matrix h = Matrix::Identity(2, 2);
  LossConfig cfg;
  cfg.tau = 1.0;
  const double expect = std::log(1.0 + std::exp(-1.0));
  CHECK(std::abs(loss_value(h, h, {}, cfg) - expect) <= 1e-9);
  cfg.symmetrize = false;  // each direction already equals the target
  CHECK(std::abs(loss_value(h, h, {}, cfg) - expect) <= 1e-9);
}

TEST_CASE("loss matches the scalar oracle on random inputs") {
  Matrix hl = random_matrix(7, 5, 11);
  Matrix hg = random_matrix(7, 5, 12);
  NegativeBank bank = bank_of(random_matrix(7 * 3, 5, 13), 3);
  for (bool sym : {true, false}) {
    for (bool intra : {false, true}) {
      LossConfig cfg;
      cfg.tau = 0.7;
      cfg.symmetrize = sym;
      cfg.include_intra_view_negatives = intra;
      const double mine = loss_value(hl, hg, bank, cfg);
      const double oracle = nce_oracle(hl, hg, bank, cfg);
      CHECK(mine == doctest::Approx(oracle).epsilon(1e-12));
    }
  }
}

TEST_CASE("a bank vector equal to the positive raises the loss") {
  Matrix hl = random_matrix(2, 4, 21);
  Matrix hg = random_matrix(2, 4, 22);
  LossConfig cfg;
  cfg.tau = 0.5;
  const double base = loss_value(hl, hg, {}, cfg);

  Matrix dup(2, 4);
  dup.row(0) = hg.row(0);  // anchor 0's positive
  dup.row(1) = hg.row(1);
  const double with_bank = loss_value(hl, hg, bank_of(dup, 1), cfg);
  CHECK(with_bank > base);
}

TEST_CASE("scale invariance of embedding rows") {
  Matrix hl = random_matrix(6, 4, 31);
  Matrix hg = random_matrix(6, 4, 32);
  LossConfig cfg;
  const double base = loss_value(hl, hg, {}, cfg);

  Rng rng(33);
  Matrix hl2 = hl, hg2 = hg;
  for (Index i = 0; i < 6; ++i) {
    hl2.row(i) *= rng.next_uniform(0.1, 10.0);
    hg2.row(i) *= rng.next_uniform(0.1, 10.0);
  }
  CHECK(std::abs(loss_value(hl2, hg2, {}, cfg) - base) <= 1e-10);
}

TEST_CASE("gradients w.r.t. both views match finite differences") {
  Matrix hl = random_matrix(5, 4, 41);
  Matrix hg = random_matrix(5, 4, 42);
  NegativeBank bank = bank_of(random_matrix(5 * 2, 4, 43), 2);
  LossConfig cfg;
  cfg.tau = 0.6;

  auto forward = [&]() { return loss_value(hl, hg, bank, cfg); };
  Tape tape;
  ViewEmbeddings views{tape.leaf(hl, true), tape.leaf(hg, true)};
  Var loss = info_nce(tape, views, bank, cfg);
  tape.backward(loss);
  CHECK(max_grad_rel_error(forward, hl, tape.grad(views.local)) <= 1e-5);
  CHECK(max_grad_rel_error(forward, hg, tape.grad(views.global)) <= 1e-5);
}

TEST_CASE("composed encoder plus loss gradient check on every weight") {
  Graph g = testing::random_graph(7, 0.35, 4, 51);
  DiffusionConfig dcfg;
  dcfg.series_tol = 1e-8;
  dcfg.sparsify_eps = 0.0;
  dcfg.topk.reset();
  // A second propagation operator distinct from A-hat.
  Matrix s_dense = testing::dense_ppr(Matrix(g.adjacency_norm), 0.2);
  SparseMatrix s = sparsify(s_dense, 0.0, std::nullopt);

  EncoderParams params = init_params(4, 3, 2, 5);
  LossConfig cfg;
  cfg.tau = 0.8;

  auto forward = [&]() {
    Tape t;
    ViewEmbeddings v = encode(t, g, s, params, Activation::kRelu, nullptr);
    return t.value(info_nce(t, v, {}, cfg))(0, 0);
  };

  Tape t;
  std::vector<Var> wvars;
  ViewEmbeddings v = encode(t, g, s, params, Activation::kRelu, &wvars);
  Var loss = info_nce(t, v, {}, cfg);
  t.backward(loss);
  for (std::size_t l = 0; l < params.weights.size(); ++l)
    CHECK(max_grad_rel_error(forward, params.weights[l], t.grad(wvars[l])) <=
          1e-5);
}

TEST_CASE("no gradient leaks through the bank") {
  Matrix hl = random_matrix(4, 3, 61);
  Matrix hg = random_matrix(4, 3, 62);
  LossConfig cfg;

  // The bank influences the loss value...
  NegativeBank bank = bank_of(random_matrix(4 * 2, 3, 63), 2);
  NegativeBank shifted =
      bank_of(Matrix((bank.vectors.array() + 0.25).matrix()), 2);
  CHECK(loss_value(hl, hg, bank, cfg) != loss_value(hl, hg, shifted, cfg));

  // ...but view gradients are identical whether its vectors are frozen
  // copies or recomputed values, and match finite differences at fixed bank.
  auto grads_with = [&](const NegativeBank& b) {
    Tape tape;
    ViewEmbeddings views{tape.leaf(hl, true), tape.leaf(hg, true)};
    tape.backward(info_nce(tape, views, b, cfg));
    return std::make_pair(Matrix(tape.grad(views.local)),
                          Matrix(tape.grad(views.global)));
  };
  NegativeBank frozen = bank_of(bank.vectors, 2);  // fresh copy of the values
  auto [gl1, gg1] = grads_with(bank);
  auto [gl2, gg2] = grads_with(frozen);
  CHECK((gl1 - gl2).cwiseAbs().maxCoeff() == 0.0);
  CHECK((gg1 - gg2).cwiseAbs().maxCoeff() == 0.0);

  auto forward = [&]() { return loss_value(hl, hg, bank, cfg); };
  CHECK(max_grad_rel_error(forward, hl, gl1) <= 1e-5);
}

TEST_CASE("temperature must be positive") {
  Matrix h = random_matrix(3, 2, 71);
  LossConfig cfg;
  cfg.tau = 0.0;
  CHECK_THROWS_AS(loss_value(h, h, {}, cfg), ConfigError);
}
