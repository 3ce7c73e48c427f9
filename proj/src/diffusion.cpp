#include "dropmix/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>
#include <vector>

#include "dropmix/errors.hpp"

namespace dropmix {
namespace {

constexpr const char* kModule = "diffusion";

void validate(const DiffusionConfig& cfg) {
  if (!(cfg.teleport > 0.0 && cfg.teleport < 1.0))
    throw ConfigError(kModule, "teleport must lie in (0,1)");
  if (!(cfg.series_tol > 0.0 && cfg.series_tol < 1.0))
    throw ConfigError(kModule, "series_tol must lie in (0,1)");
  if (cfg.sparsify_eps < 0.0)
    throw ConfigError(kModule, "sparsify_eps must be >= 0");
  if (cfg.topk && *cfg.topk < 1)
    throw ConfigError(kModule, "topk must be >= 1");
}

// Keep rule shared by the streaming path and the standalone sparsify():
// value > 0, value >= eps, and within the row's topk largest (ties broken
// by smaller column index). Appends kept (col, value) pairs sorted by column.
void sparsify_row(const Scalar* row, Index n, double eps,
                  std::optional<Index> topk,
                  std::vector<std::pair<Index, Scalar>>* out) {
  out->clear();
  for (Index j = 0; j < n; ++j)
    if (row[j] > 0.0 && row[j] >= eps) out->emplace_back(j, row[j]);
  if (topk && static_cast<Index>(out->size()) > *topk) {
    auto larger = [](const std::pair<Index, Scalar>& a,
                     const std::pair<Index, Scalar>& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    };
    std::nth_element(out->begin(), out->begin() + *topk - 1, out->end(),
                     larger);
    out->resize(static_cast<std::size_t>(*topk));
    std::sort(out->begin(), out->end());
  }
}

}  // namespace

int ppr_series_terms(const DiffusionConfig& cfg) {
  validate(cfg);
  int terms = 0;
  for (double r = 1.0; r > cfg.series_tol; r *= 1.0 - cfg.teleport) ++terms;
  return terms;
}

DiffusionMatrix compute_ppr(const SparseMatrix& adjacency_norm,
                            const DiffusionConfig& cfg) {
  validate(cfg);
  const Index n = adjacency_norm.rows();
  if (n == 0) throw DataError(kModule, "empty graph");
  if (adjacency_norm.cols() != n)
    throw ContractViolation(kModule, "adjacency operator must be square");

  const double alpha = cfg.teleport;
  const int K = ppr_series_terms(cfg);

  // Row blocks sized to roughly 64 MB of dense scratch.
  const Index rows_per_block = std::clamp<Index>(
      static_cast<Index>((64LL << 20) / (8LL * std::max<Index>(n, 1))),
      Index{1}, n);

  std::vector<Eigen::Triplet<Scalar>> trips;
  std::vector<std::pair<Index, Scalar>> kept;
  for (Index start = 0; start < n; start += rows_per_block) {
    const Index bs = std::min(rows_per_block, n - start);
    Matrix walk = Matrix::Zero(bs, n);
    for (Index r = 0; r < bs; ++r) walk(r, start + r) = 1.0;
    Matrix acc = alpha * walk;
    Matrix next(bs, n);
    double coeff = alpha;
    for (int k = 1; k <= K; ++k) {
      next.noalias() = walk * adjacency_norm;
      walk.swap(next);
      coeff *= 1.0 - alpha;
      acc.noalias() += coeff * walk;
    }
    for (Index r = 0; r < bs; ++r) {
      sparsify_row(acc.row(r).data(), n, cfg.sparsify_eps, cfg.topk, &kept);
      for (const auto& [col, val] : kept)
        trips.emplace_back(start + r, col, val);
    }
  }

  DiffusionMatrix dm;
  dm.S.resize(n, n);
  dm.S.setFromTriplets(trips.begin(), trips.end());
  dm.S.makeCompressed();
  dm.terms_used = K;
  dm.density = static_cast<double>(dm.S.nonZeros()) /
               (static_cast<double>(n) * static_cast<double>(n));
  return dm;
}

SparseMatrix sparsify(const Matrix& dense, double eps,
                      std::optional<Index> topk) {
  if (eps < 0.0) throw ConfigError(kModule, "eps must be >= 0");
  if (topk && *topk < 1) throw ConfigError(kModule, "topk must be >= 1");
  std::vector<Eigen::Triplet<Scalar>> trips;
  std::vector<std::pair<Index, Scalar>> kept;
  for (Index i = 0; i < dense.rows(); ++i) {
    sparsify_row(dense.row(i).data(), dense.cols(), eps, topk, &kept);
    for (const auto& [col, val] : kept) trips.emplace_back(i, col, val);
  }
  SparseMatrix s(dense.rows(), dense.cols());
  s.setFromTriplets(trips.begin(), trips.end());
  s.makeCompressed();
  return s;
}

std::string diffusion_cache_key(const SparseMatrix& adjacency_norm,
                                const DiffusionConfig& cfg) {
  // FNV-1a over the adjacency structure and the config.
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto feed = [&h](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 0x100000001B3ULL;
    }
  };
  const std::int64_t n = adjacency_norm.rows();
  feed(&n, sizeof n);
  for (int k = 0; k < adjacency_norm.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(adjacency_norm, k); it; ++it) {
      const std::int64_t rc[2] = {it.row(), it.col()};
      const double v = it.value();
      feed(rc, sizeof rc);
      feed(&v, sizeof v);
    }
  feed(&cfg.teleport, sizeof cfg.teleport);
  feed(&cfg.series_tol, sizeof cfg.series_tol);
  feed(&cfg.sparsify_eps, sizeof cfg.sparsify_eps);
  const std::int64_t tk = cfg.topk ? *cfg.topk : -1;
  feed(&tk, sizeof tk);

  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

bool load_diffusion_cache(const std::string& path, Index n_nodes,
                          DiffusionMatrix* out) {
  std::ifstream f(path);
  if (!f) return false;
  long long n = 0, nnz = 0;
  if (!(f >> n >> nnz) || n != n_nodes) return false;
  std::vector<Eigen::Triplet<Scalar>> trips;
  trips.reserve(static_cast<std::size_t>(nnz));
  for (long long i = 0; i < nnz; ++i) {
    long long r, c;
    double v;
    if (!(f >> r >> c >> v)) return false;
    if (r < 0 || r >= n || c < 0 || c >= n) return false;
    trips.emplace_back(static_cast<Index>(r), static_cast<Index>(c), v);
  }
  out->S.resize(n, n);
  out->S.setFromTriplets(trips.begin(), trips.end());
  out->S.makeCompressed();
  out->terms_used = 0;  // not recorded in the cache format
  out->density = static_cast<double>(out->S.nonZeros()) /
                 (static_cast<double>(n) * static_cast<double>(n));
  return true;
}

void save_diffusion_cache(const std::string& path, const DiffusionMatrix& dm) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  // Write to a side file and rename so concurrent sweep workers never see a
  // half-written cache.
  const std::string tmp =
      path + ".tmp." +
      std::to_string(
          std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream f(tmp);
    if (!f) throw DataError(kModule, "cannot write cache file " + tmp);
    f << dm.S.rows() << " " << dm.S.nonZeros() << "\n";
    char buf[40];
    for (int k = 0; k < dm.S.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(dm.S, k); it; ++it) {
        std::snprintf(buf, sizeof buf, "%.17g", it.value());
        f << it.row() << " " << it.col() << " " << buf << "\n";
      }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace dropmix
