#pragma once

#include <cstdint>
#include <vector>

#include "dropmix/graph.hpp"
#include "dropmix/types.hpp"

namespace dropmix {

// Linear softmax classifier over raw embeddings; the train-split
// standardization is folded into weight/bias after fitting.
struct ProbeModel {
  Matrix weight;   // k x C
  RowVector bias;  // 1 x C
  int n_classes = 0;
};

// Softmax regression on frozen embeddings: 300 full-batch gradient steps,
// learning rate 0.1, l2 penalty 1e-4, on train-standardized inputs. The
// fixed recipe keeps evaluation identical across all modes. Deterministic;
// embeddings are never mutated.
ProbeModel fit_probe(const Matrix& embeddings, const std::vector<int>& labels,
                     const SplitSpec& split, std::uint64_t seed);

// Fraction of argmax-correct predictions over `idx`; argmax ties resolve to
// the smaller class index.
double accuracy(const ProbeModel& model, const Matrix& embeddings,
                const std::vector<int>& labels, const std::vector<Index>& idx);

}  // namespace dropmix
