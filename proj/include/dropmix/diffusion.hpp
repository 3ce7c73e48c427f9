#pragma once

#include <optional>
#include <string>

#include "dropmix/types.hpp"

namespace dropmix {

struct DiffusionConfig {
  double teleport = 0.15;      // PPR restart probability
  double series_tol = 1e-4;    // truncation tolerance for the power series
  double sparsify_eps = 1e-4;  // drop entries below this magnitude
  std::optional<Index> topk = 128;  // per-row keep limit; nullopt keeps all
};

// Sparsified PPR matrix S used as the global-view propagation operator.
struct DiffusionMatrix {
  SparseMatrix S;
  int terms_used = 0;
  double density = 0.0;
};

// S = teleport * sum_{k=0..K} (1-teleport)^k * A-hat^k, evaluated row-block
// by row-block so no dense N x N matrix is ever materialized for large N.
// K is the smallest integer with (1-teleport)^K <= series_tol. Entries are
// dropped below sparsify_eps, then optionally truncated to the per-row topk
// largest (ties keep the smaller column index); no renormalization happens
// afterwards.
DiffusionMatrix compute_ppr(const SparseMatrix& adjacency_norm,
                            const DiffusionConfig& cfg);

// Number of series terms K used by compute_ppr for this config.
int ppr_series_terms(const DiffusionConfig& cfg);

// Standalone sparsification of a dense matrix under the same keep rule.
SparseMatrix sparsify(const Matrix& dense, double eps,
                      std::optional<Index> topk);

// Cache files hold "N nnz" then one "row col value" line per entry, with
// full float precision so cached and freshly computed runs are bit-identical.
std::string diffusion_cache_key(const SparseMatrix& adjacency_norm,
                                const DiffusionConfig& cfg);
bool load_diffusion_cache(const std::string& path, Index n_nodes,
                          DiffusionMatrix* out);
void save_diffusion_cache(const std::string& path, const DiffusionMatrix& dm);

}  // namespace dropmix
