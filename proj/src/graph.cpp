#include "dropmix/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "dropmix/errors.hpp"
#include "dropmix/rng.hpp"

namespace dropmix {
namespace {

constexpr const char* kModule = "graph-core";

bool parse_double(const std::string& tok, double* out) {
  try {
    std::size_t used = 0;
    *out = std::stod(tok, &used);
    return used == tok.size();
  } catch (const std::exception&) {
    return false;
  }
}

bool parse_index(const std::string& tok, long long* out) {
  try {
    std::size_t used = 0;
    *out = std::stoll(tok, &used);
    return used == tok.size();
  } catch (const std::exception&) {
    return false;
  }
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> toks;
  std::istringstream ss(line);
  std::string t;
  while (ss >> t) toks.push_back(t);
  return toks;
}

}  // namespace

Index Graph::n_classes() const {
  int hi = -1;
  for (int c : labels) hi = std::max(hi, c);
  return hi + 1;
}

Graph build_graph(Index n_nodes, std::vector<std::pair<Index, Index>> edges,
                  Matrix features, std::vector<int> labels) {
  if (n_nodes <= 0)
    throw DataError(kModule, "graph must have at least one node");
  if (features.rows() != n_nodes)
    throw DataError(kModule, "feature matrix has " +
                                 std::to_string(features.rows()) +
                                 " rows, expected " + std::to_string(n_nodes));
  if (!features.allFinite())
    throw DataError(kModule, "features contain NaN/Inf entries");
  if (!labels.empty()) {
    if (static_cast<Index>(labels.size()) != n_nodes)
      throw DataError(kModule, "label count does not match node count");
    for (int c : labels)
      if (c < 0) throw DataError(kModule, "negative class label");
  }

  std::size_t raw_count = edges.size();
  for (auto& [u, v] : edges) {
    if (u < 0 || u >= n_nodes || v < 0 || v >= n_nodes)
      throw DataError(kModule, "edge endpoint out of range: " +
                                   std::to_string(u) + " " + std::to_string(v));
    if (u == v)
      throw DataError(kModule, "self-loop on node " + std::to_string(u));
    if (u > v) std::swap(u, v);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  if (edges.size() != raw_count) {
    std::cerr << "[" << kModule << "] warning: " << (raw_count - edges.size())
              << " duplicate/reversed edge(s) symmetrized\n";
  }

  Graph g;
  g.n_nodes = n_nodes;
  g.edges = std::move(edges);
  g.features = std::move(features);
  g.labels = std::move(labels);

  // A-hat = D~^{-1/2} (A + I) D~^{-1/2}; one value per undirected edge keeps
  // the stored matrix bitwise symmetric.
  std::vector<Index> degree(static_cast<std::size_t>(n_nodes), 1);
  for (const auto& [u, v] : g.edges) {
    ++degree[static_cast<std::size_t>(u)];
    ++degree[static_cast<std::size_t>(v)];
  }
  std::vector<Eigen::Triplet<Scalar>> trips;
  trips.reserve(g.edges.size() * 2 + static_cast<std::size_t>(n_nodes));
  for (Index i = 0; i < n_nodes; ++i)
    trips.emplace_back(i, i, 1.0 / static_cast<Scalar>(degree[i]));
  for (const auto& [u, v] : g.edges) {
    const Scalar w = 1.0 / std::sqrt(static_cast<Scalar>(degree[u]) *
                                     static_cast<Scalar>(degree[v]));
    trips.emplace_back(u, v, w);
    trips.emplace_back(v, u, w);
  }
  g.adjacency_norm.resize(n_nodes, n_nodes);
  g.adjacency_norm.setFromTriplets(trips.begin(), trips.end());
  g.adjacency_norm.makeCompressed();
  return g;
}

Graph load_graph(const std::string& features_path,
                 const std::string& edges_path,
                 const std::string& labels_path) {
  std::ifstream ff(features_path);
  if (!ff) throw DataError(kModule, "cannot open " + features_path);

  std::string line;
  long lineno = 0;
  if (!std::getline(ff, line))
    throw ParseError(kModule, "empty features file", 1);
  ++lineno;
  auto header = split_ws(line);
  long long n = 0, d = 0;
  if (header.size() != 2 || !parse_index(header[0], &n) ||
      !parse_index(header[1], &d))
    throw ParseError(kModule, "features header must be \"N d\"", lineno);
  if (n <= 0 || d <= 0)
    throw DataError(kModule, "features header dimensions must be positive");

  Matrix features(n, d);
  for (long long i = 0; i < n; ++i) {
    if (!std::getline(ff, line))
      throw DataError(kModule, "features body has " + std::to_string(i) +
                                   " rows, header says " + std::to_string(n));
    ++lineno;
    auto toks = split_ws(line);
    if (static_cast<long long>(toks.size()) != d)
      throw ParseError(kModule,
                       "expected " + std::to_string(d) + " values, got " +
                           std::to_string(toks.size()),
                       lineno);
    for (long long j = 0; j < d; ++j) {
      double x;
      if (!parse_double(toks[static_cast<std::size_t>(j)], &x))
        throw ParseError(kModule, "bad float \"" + toks[j] + "\"", lineno);
      features(i, j) = x;
    }
  }
  while (std::getline(ff, line)) {
    ++lineno;
    if (!split_ws(line).empty())
      throw DataError(kModule, "features body longer than header N=" +
                                   std::to_string(n));
  }

  std::ifstream ef(edges_path);
  if (!ef) throw DataError(kModule, "cannot open " + edges_path);
  std::vector<std::pair<Index, Index>> edges;
  lineno = 0;
  while (std::getline(ef, line)) {
    ++lineno;
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    long long u, v;
    if (toks.size() != 2 || !parse_index(toks[0], &u) ||
        !parse_index(toks[1], &v))
      throw ParseError(kModule, "edge line must be \"u v\"", lineno);
    if (u < 0 || u >= n || v < 0 || v >= n)
      throw DataError(kModule, "edge endpoint out of range at line " +
                                   std::to_string(lineno));
    if (u == v)
      throw DataError(kModule,
                      "self-loop at line " + std::to_string(lineno));
    edges.emplace_back(u, v);
  }

  std::vector<int> labels;
  if (!labels_path.empty()) {
    std::ifstream lf(labels_path);
    if (!lf) throw DataError(kModule, "cannot open " + labels_path);
    lineno = 0;
    while (std::getline(lf, line)) {
      ++lineno;
      auto toks = split_ws(line);
      if (toks.empty()) continue;
      long long c;
      if (toks.size() != 1 || !parse_index(toks[0], &c))
        throw ParseError(kModule, "label line must be one integer", lineno);
      labels.push_back(static_cast<int>(c));
    }
    if (static_cast<long long>(labels.size()) != n)
      throw DataError(kModule, "labels file has " +
                                   std::to_string(labels.size()) +
                                   " entries, expected " + std::to_string(n));
  }

  return build_graph(n, std::move(edges), std::move(features),
                     std::move(labels));
}

void write_graph(const Graph& graph, const std::string& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir + "/features.txt");
    if (!f) throw DataError(kModule, "cannot write to " + dir);
    f << graph.n_nodes << " " << graph.feature_dim() << "\n";
    char buf[40];
    for (Index i = 0; i < graph.n_nodes; ++i) {
      for (Index j = 0; j < graph.feature_dim(); ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", graph.features(i, j));
        f << (j ? " " : "") << buf;
      }
      f << "\n";
    }
  }
  {
    std::ofstream f(dir + "/edges.txt");
    for (const auto& [u, v] : graph.edges) f << u << " " << v << "\n";
  }
  if (graph.has_labels()) {
    std::ofstream f(dir + "/labels.txt");
    for (int c : graph.labels) f << c << "\n";
  }
}

Graph generate_sbm(Index n_per_block, Index n_blocks, double p_in,
                   double p_out, Index feature_dim, std::uint64_t seed) {
  if (n_per_block < 1 || n_blocks < 1)
    throw ConfigError(kModule, "sbm sizes must be at least 1");
  if (!(p_out >= 0.0 && p_in <= 1.0 && p_out <= p_in))
    throw ConfigError(kModule,
                      "sbm requires 0 <= p_out <= p_in <= 1 (assortative)");
  if (feature_dim < n_blocks)
    throw ConfigError(kModule, "feature_dim must be at least n_blocks");

  const Index n = n_per_block * n_blocks;
  Rng edge_rng(substream(seed, "sbm/edges"));
  std::vector<std::pair<Index, Index>> edges;
  for (Index u = 0; u < n; ++u) {
    const Index bu = u / n_per_block;
    for (Index v = u + 1; v < n; ++v) {
      const double p = (v / n_per_block == bu) ? p_in : p_out;
      if (edge_rng.next_unit() < p) edges.emplace_back(u, v);
    }
  }

  Rng feat_rng(substream(seed, "sbm/features"));
  Matrix features(n, feature_dim);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const Index b = i / n_per_block;
    labels[static_cast<std::size_t>(i)] = static_cast<int>(b);
    for (Index j = 0; j < feature_dim; ++j)
      features(i, j) = (j == b ? 1.0 : 0.0) + feat_rng.next_gaussian(0.0, 0.1);
  }

  return build_graph(n, std::move(edges), std::move(features),
                     std::move(labels));
}

SplitSpec make_split(const Graph& graph, std::array<double, 3> ratios,
                     std::uint64_t seed) {
  if (!graph.has_labels())
    throw DataError(kModule, "split requires node labels");
  double sum = 0.0;
  for (double r : ratios) {
    if (r < 0.0) throw ConfigError(kModule, "split ratios must be >= 0");
    sum += r;
  }
  if (sum > 1.0 + 1e-9)
    throw ConfigError(kModule, "split ratios must sum to at most 1");

  const Index n = graph.n_nodes;
  const Index n_classes = graph.n_classes();

  // Global split sizes by largest remainder.
  std::array<Index, 3> target;
  std::array<double, 3> frac;
  Index assigned = 0;
  for (int s = 0; s < 3; ++s) {
    const double exact = static_cast<double>(n) * ratios[s];
    target[s] = static_cast<Index>(std::floor(exact + 1e-9));
    frac[s] = exact - static_cast<double>(target[s]);
    assigned += target[s];
  }
  Index leftover =
      static_cast<Index>(std::floor(static_cast<double>(n) * sum + 1e-9)) -
      assigned;
  while (leftover > 0) {
    int best = 0;
    for (int s = 1; s < 3; ++s)
      if (frac[s] > frac[best]) best = s;
    ++target[best];
    frac[best] = -1.0;
    --leftover;
  }
  for (int s = 0; s < 3; ++s)
    if (target[s] == 0)
      throw ConfigError(kModule, "split " + std::to_string(s) +
                                     " would be empty under these ratios");

  // Seeded shuffle within each class.
  std::vector<std::vector<Index>> pools(static_cast<std::size_t>(n_classes));
  for (Index i = 0; i < n; ++i)
    pools[static_cast<std::size_t>(graph.labels[static_cast<std::size_t>(i)])]
        .push_back(i);
  Rng rng(substream(seed, "split"));
  for (auto& pool : pools)
    for (std::size_t i = pool.size(); i > 1; --i)
      std::swap(pool[i - 1], pool[rng.next_below(i)]);
  std::vector<std::size_t> cursor(pools.size(), 0);

  SplitSpec split;
  std::array<std::vector<Index>*, 3> out = {&split.train_idx, &split.val_idx,
                                            &split.test_idx};
  for (int s = 0; s < 3; ++s) {
    // Per-class quotas proportional to the global class histogram, largest
    // remainder, capped by what is left in each pool.
    std::vector<Index> quota(pools.size(), 0);
    std::vector<double> qfrac(pools.size(), 0.0);
    Index got = 0;
    for (std::size_t c = 0; c < pools.size(); ++c) {
      const double exact = static_cast<double>(target[s]) *
                           static_cast<double>(pools[c].size()) /
                           static_cast<double>(n);
      quota[c] = static_cast<Index>(std::floor(exact + 1e-9));
      const Index avail = static_cast<Index>(pools[c].size() - cursor[c]);
      quota[c] = std::min(quota[c], avail);
      qfrac[c] = exact - static_cast<double>(quota[c]);
      got += quota[c];
    }
    while (got < target[s]) {
      std::size_t best = pools.size();
      for (std::size_t c = 0; c < pools.size(); ++c) {
        if (cursor[c] + static_cast<std::size_t>(quota[c]) >= pools[c].size())
          continue;
        if (best == pools.size() || qfrac[c] > qfrac[best]) best = c;
      }
      if (best == pools.size())
        throw DataError(kModule,
                        "classes have too few nodes to fill the splits");
      ++quota[best];
      qfrac[best] = -1.0;
      ++got;
    }
    for (std::size_t c = 0; c < pools.size(); ++c) {
      for (Index k = 0; k < quota[c]; ++k)
        out[s]->push_back(pools[c][cursor[c]++]);
    }
    std::sort(out[s]->begin(), out[s]->end());
  }
  return split;
}

std::vector<Index> load_index_file(const std::string& path, Index n_nodes) {
  std::ifstream f(path);
  if (!f) throw DataError(kModule, "cannot open " + path);
  std::vector<Index> idx;
  std::string line;
  long lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    long long v;
    if (toks.size() != 1 || !parse_index(toks[0], &v))
      throw ParseError(kModule, "index line must be one integer", lineno);
    if (v < 0 || v >= n_nodes)
      throw DataError(kModule,
                      "index out of range at line " + std::to_string(lineno));
    idx.push_back(static_cast<Index>(v));
  }
  return idx;
}

void write_index_file(const std::string& path, const std::vector<Index>& idx) {
  std::ofstream f(path);
  if (!f) throw DataError(kModule, "cannot write " + path);
  for (Index i : idx) f << i << "\n";
}

}  // namespace dropmix
