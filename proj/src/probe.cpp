#include "dropmix/probe.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "dropmix/errors.hpp"

namespace dropmix {
namespace {

constexpr const char* kModule = "probe-eval";
constexpr int kSteps = 300;
constexpr double kLr = 0.1;
constexpr double kL2 = 1e-4;

}  // namespace

ProbeModel fit_probe(const Matrix& embeddings, const std::vector<int>& labels,
                     const SplitSpec& split, std::uint64_t /*seed*/) {
  if (split.train_idx.empty())
    throw DataError(kModule, "train split is empty");
  if (labels.size() != static_cast<std::size_t>(embeddings.rows()))
    throw ContractViolation(kModule, "labels/embeddings size mismatch");

  int n_classes = 0;
  for (int c : labels) n_classes = std::max(n_classes, c + 1);
  std::vector<bool> in_train(static_cast<std::size_t>(n_classes), false);
  for (Index i : split.train_idx) {
    if (i < 0 || i >= embeddings.rows())
      throw ContractViolation(kModule, "train index out of range");
    in_train[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] =
        true;
  }
  for (int c = 0; c < n_classes; ++c)
    if (!in_train[static_cast<std::size_t>(c)])
      throw DataError(kModule,
                      "class " + std::to_string(c) + " missing from train split");

  const Index n_train = static_cast<Index>(split.train_idx.size());
  const Index k = embeddings.cols();
  Matrix z(n_train, k);
  for (Index r = 0; r < n_train; ++r)
    z.row(r) = embeddings.row(split.train_idx[static_cast<std::size_t>(r)]);

  // Standardize with train statistics; folded back out before returning.
  RowVector mean = z.colwise().mean();
  RowVector std_dev(k);
  for (Index j = 0; j < k; ++j) {
    const double var =
        (z.col(j).array() - mean(j)).square().sum() / static_cast<double>(n_train);
    std_dev(j) = std::max(std::sqrt(var), 1e-8);
  }
  for (Index r = 0; r < n_train; ++r)
    z.row(r) = (z.row(r) - mean).cwiseQuotient(std_dev);

  Matrix y = Matrix::Zero(n_train, n_classes);
  for (Index r = 0; r < n_train; ++r)
    y(r, labels[static_cast<std::size_t>(
           split.train_idx[static_cast<std::size_t>(r)])]) = 1.0;

  // Zero init keeps duplicated dimensions symmetric under gradient descent.
  Matrix w = Matrix::Zero(k, n_classes);
  RowVector b = RowVector::Zero(n_classes);
  Matrix logits(n_train, n_classes), probs(n_train, n_classes);
  for (int step = 0; step < kSteps; ++step) {
    logits.noalias() = z * w;
    logits.rowwise() += b;
    for (Index r = 0; r < n_train; ++r) {
      const double m = logits.row(r).maxCoeff();
      probs.row(r) = (logits.row(r).array() - m).exp();
      probs.row(r) /= probs.row(r).sum();
    }
    probs -= y;
    probs /= static_cast<double>(n_train);
    Matrix gw = z.transpose() * probs + kL2 * w;
    RowVector gb = probs.colwise().sum();
    w -= kLr * gw;
    b -= kLr * gb;
  }

  ProbeModel model;
  model.n_classes = n_classes;
  // logits = ((x - mean) / std) * w + b == x * (w / std) + (b - mean * (w / std))
  model.weight = std_dev.cwiseInverse().transpose().asDiagonal() * w;
  model.bias = b - mean * model.weight;
  return model;
}

double accuracy(const ProbeModel& model, const Matrix& embeddings,
                const std::vector<int>& labels,
                const std::vector<Index>& idx) {
  if (idx.empty()) throw DataError(kModule, "empty evaluation index set");
  long correct = 0;
  for (Index i : idx) {
    if (i < 0 || i >= embeddings.rows())
      throw ContractViolation(kModule, "evaluation index out of range");
    const RowVector logits = embeddings.row(i) * model.weight + model.bias;
    int best = 0;
    for (int c = 1; c < model.n_classes; ++c)
      if (logits(c) > logits(best)) best = c;
    if (best == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

}  // namespace dropmix
