#include "dropmix/encoder.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>

#include "dropmix/errors.hpp"
#include "dropmix/rng.hpp"

namespace dropmix {
namespace {

constexpr const char* kModule = "encoder";
constexpr std::uint64_t kCheckpointMagic = 0x444D58434B505431ULL;  // "DMXCKPT1"

void check_degenerate(const Matrix& h, const char* view) {
  for (Index i = 0; i < h.rows(); ++i) {
    const double n = h.row(i).norm();
    if (!(n >= 1e-12))
      throw DegenerateEmbeddingError(
          kModule, std::string(view) + " embedding row " + std::to_string(i) +
                       " collapsed (norm " + std::to_string(n) + ")");
  }
}

Var encode_view(Tape& tape, Var features, const SparseMatrix& op,
                const std::vector<Var>& weights, Activation activation) {
  Var h = features;
  const int layers = static_cast<int>(weights.size());
  for (int l = 0; l < layers; ++l) {
    h = tape.sparse_propagate(op, h);
    h = tape.dense_affine(h, weights[static_cast<std::size_t>(l)]);
    if (activation == Activation::kRelu && l + 1 < layers) h = tape.relu(h);
  }
  return h;
}

}  // namespace

EncoderParams init_params(Index in_dim, Index hidden, int layers,
                          std::uint64_t seed) {
  if (in_dim < 1 || hidden < 1 || layers < 1)
    throw ConfigError(kModule, "in_dim, hidden, and layers must be >= 1");
  Rng rng(substream(seed, "init"));
  EncoderParams params;
  params.seed = seed;
  Index fan_in = in_dim;
  for (int l = 0; l < layers; ++l) {
    const Index fan_out = hidden;
    const double bound =
        std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_in, fan_out);
    for (Index i = 0; i < fan_in; ++i)
      for (Index j = 0; j < fan_out; ++j)
        w(i, j) = rng.next_uniform(-bound, bound);
    params.weights.push_back(std::move(w));
    fan_in = hidden;
  }
  return params;
}

ViewEmbeddings encode(Tape& tape, const Graph& graph, const SparseMatrix& S,
                      const std::vector<Var>& weight_vars,
                      Activation activation) {
  if (weight_vars.empty())
    throw ContractViolation(kModule, "encoder needs at least one layer");
  if (S.rows() != graph.n_nodes || S.cols() != graph.n_nodes)
    throw ContractViolation(kModule, "diffusion matrix shape mismatch");
  if (graph.adjacency_norm.rows() != graph.n_nodes)
    throw ContractViolation(kModule, "graph adjacency shape mismatch");
  if (tape.value(weight_vars.front()).rows() != graph.feature_dim())
    throw ContractViolation(kModule, "first layer does not match feature dim");

  Var x = tape.leaf(graph.features, /*requires_grad=*/false);
  ViewEmbeddings views;
  views.local =
      encode_view(tape, x, graph.adjacency_norm, weight_vars, activation);
  views.global = encode_view(tape, x, S, weight_vars, activation);
  check_degenerate(tape.value(views.local), "local");
  check_degenerate(tape.value(views.global), "global");
  return views;
}

ViewEmbeddings encode(Tape& tape, const Graph& graph, const SparseMatrix& S,
                      const EncoderParams& params, Activation activation,
                      std::vector<Var>* weight_vars) {
  std::vector<Var> ws;
  ws.reserve(params.weights.size());
  for (const Matrix& w : params.weights)
    ws.push_back(tape.leaf(w, /*requires_grad=*/true));
  if (weight_vars) *weight_vars = ws;
  return encode(tape, graph, S, ws, activation);
}

Matrix encode_rows(const Matrix& rows, const EncoderParams& params,
                   Activation activation) {
  if (params.weights.empty())
    throw ContractViolation(kModule, "encoder needs at least one layer");
  if (rows.cols() != params.weights.front().rows())
    throw ContractViolation(kModule, "row width does not match first layer");
  Matrix h = rows;
  const int layers = params.layers();
  for (int l = 0; l < layers; ++l) {
    h = h * params.weights[static_cast<std::size_t>(l)];
    if (activation == Activation::kRelu && l + 1 < layers)
      h = h.cwiseMax(0.0);
  }
  return h;
}

void save_params(const EncoderParams& params, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError(kModule, "cannot write checkpoint " + path);
  auto put_u64 = [&f](std::uint64_t v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof v);
  };
  put_u64(kCheckpointMagic);
  put_u64(static_cast<std::uint64_t>(params.weights.size()));
  for (const Matrix& w : params.weights) {
    put_u64(static_cast<std::uint64_t>(w.rows()));
    put_u64(static_cast<std::uint64_t>(w.cols()));
  }
  put_u64(params.seed);
  for (const Matrix& w : params.weights)
    f.write(reinterpret_cast<const char*>(w.data()),
            static_cast<std::streamsize>(sizeof(Scalar)) * w.size());
}

EncoderParams load_params(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError(kModule, "cannot open checkpoint " + path);
  auto get_u64 = [&f, &path]() {
    std::uint64_t v = 0;
    if (!f.read(reinterpret_cast<char*>(&v), sizeof v))
      throw DataError(kModule, "truncated checkpoint " + path);
    return v;
  };
  if (get_u64() != kCheckpointMagic)
    throw DataError(kModule, "not a checkpoint file: " + path);
  const std::uint64_t layers = get_u64();
  if (layers == 0 || layers > 1024)
    throw DataError(kModule, "corrupt checkpoint header");
  std::vector<std::pair<Index, Index>> dims;
  for (std::uint64_t l = 0; l < layers; ++l) {
    const auto r = static_cast<Index>(get_u64());
    const auto c = static_cast<Index>(get_u64());
    if (r < 1 || c < 1) throw DataError(kModule, "corrupt checkpoint dims");
    dims.emplace_back(r, c);
  }
  EncoderParams params;
  params.seed = get_u64();
  for (const auto& [r, c] : dims) {
    Matrix w(r, c);
    if (!f.read(reinterpret_cast<char*>(w.data()),
                static_cast<std::streamsize>(sizeof(Scalar)) * w.size()))
      throw DataError(kModule, "truncated checkpoint " + path);
    params.weights.push_back(std::move(w));
  }
  return params;
}

}  // namespace dropmix
