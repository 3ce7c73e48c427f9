#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dropmix/types.hpp"

namespace dropmix {

// Immutable node-attributed graph with the symmetrically normalized
// adjacency precomputed. Edges are canonical undirected pairs (u < v),
// sorted and deduplicated; self-loops enter only through the +I used for
// normalization. Safe to share across threads once built.
struct Graph {
  Index n_nodes = 0;
  std::vector<std::pair<Index, Index>> edges;
  Matrix features;           // n_nodes x d
  std::vector<int> labels;   // empty when unlabeled
  SparseMatrix adjacency_norm;

  bool has_labels() const { return !labels.empty(); }
  Index feature_dim() const { return features.cols(); }
  Index n_classes() const;
};

struct SplitSpec {
  std::vector<Index> train_idx;
  std::vector<Index> val_idx;
  std::vector<Index> test_idx;
};

// Validates inputs (range checks, finite features, no self-loops after
// canonicalization) and computes adjacency_norm. Reversed/duplicate edges
// collapse; when any were present a warning is written to stderr.
Graph build_graph(Index n_nodes, std::vector<std::pair<Index, Index>> edges,
                  Matrix features, std::vector<int> labels = {});

// Text formats: features file starts with "N d" then N rows of d floats;
// edges file has one "u v" pair per line; labels file one integer per line.
// labels_path may be empty for unlabeled graphs.
Graph load_graph(const std::string& features_path,
                 const std::string& edges_path,
                 const std::string& labels_path = "");

// Writes features.txt / edges.txt / labels.txt into `dir` with full float
// precision so load_graph round-trips bit-exactly.
void write_graph(const Graph& graph, const std::string& dir);

// Assortative stochastic block model: blocks define labels, features are a
// one-hot block indicator plus N(0, 0.1) noise. Deterministic per seed.
Graph generate_sbm(Index n_per_block, Index n_blocks, double p_in,
                   double p_out, Index feature_dim, std::uint64_t seed);

// Seeded stratified split; ratios are (train, val, test) fractions summing
// to at most 1. Split class histograms follow the global histogram within
// rounding.
SplitSpec make_split(const Graph& graph, std::array<double, 3> ratios,
                     std::uint64_t seed);

// One node index per line.
std::vector<Index> load_index_file(const std::string& path, Index n_nodes);
void write_index_file(const std::string& path, const std::vector<Index>& idx);

}  // namespace dropmix
