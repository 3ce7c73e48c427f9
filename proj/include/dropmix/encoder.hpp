#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dropmix/graph.hpp"
#include "dropmix/tape.hpp"
#include "dropmix/types.hpp"

namespace dropmix {

enum class Activation { kRelu, kNone };

struct EncoderConfig {
  int layers = 1;
  Index hidden = 256;
  Activation activation = Activation::kRelu;  // applied between layers only
};

// Weights shared by both views: W_1 is d x k, the rest k x k.
struct EncoderParams {
  std::vector<Matrix> weights;
  std::uint64_t seed = 0;

  int layers() const { return static_cast<int>(weights.size()); }
};

// Tape handles for the two embedding views. Rows of `local` are propagated
// with A-hat, rows of `global` with the diffusion matrix S, using the same
// weights.
struct ViewEmbeddings {
  Var local;
  Var global;
};

// Glorot-uniform initialization, deterministic per seed.
EncoderParams init_params(Index in_dim, Index hidden, int layers,
                          std::uint64_t seed);

// H^{(l)} = act(P * H^{(l-1)} * W_l) with P in {A-hat, S}; no activation
// after the final layer. Raises a degenerate-embedding error if any output
// row has (near-)zero norm.
ViewEmbeddings encode(Tape& tape, const Graph& graph, const SparseMatrix& S,
                      const std::vector<Var>& weight_vars,
                      Activation activation);

// Convenience wrapper that also registers the weights as leaves.
ViewEmbeddings encode(Tape& tape, const Graph& graph, const SparseMatrix& S,
                      const EncoderParams& params, Activation activation,
                      std::vector<Var>* weight_vars = nullptr);

// Applies only the combine weights (and inter-layer activation) to bare
// feature rows, as if each row were an isolated node. Used for
// feature-level mixing, where synthesized feature vectors have no graph
// position to propagate through.
Matrix encode_rows(const Matrix& rows, const EncoderParams& params,
                   Activation activation);

// Binary checkpoint: header (layer count, per-layer dims, init seed), then
// row-major 64-bit weights. Round-trips bit-exactly.
void save_params(const EncoderParams& params, const std::string& path);
EncoderParams load_params(const std::string& path);

}  // namespace dropmix
