#include "dropmix/miner.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "dropmix/errors.hpp"
#include "dropmix/tape.hpp"

namespace dropmix {
namespace {

constexpr const char* kModule = "negative-miner";

void validate(const MinerConfig& cfg) {
  if (!(cfg.lower_pct >= 0.0 && cfg.lower_pct < 1.0))
    throw ConfigError(kModule, "lower_pct must lie in [0,1)");
  if (!(cfg.upper_pct > 0.0 && cfg.upper_pct <= 1.0))
    throw ConfigError(kModule, "upper_pct must lie in (0,1]");
  if (!(cfg.lower_pct < cfg.upper_pct))
    throw ConfigError(kModule, "lower_pct must be below upper_pct");
}

}  // namespace

Index rank_floor(double x) {
  return static_cast<Index>(std::floor(x + 1e-9));
}

HardnessTable score_hardness(const Matrix& h_local, const Matrix& h_global,
                             const MinerConfig& cfg) {
  validate(cfg);
  if (h_local.rows() != h_global.rows())
    throw ContractViolation(kModule, "views disagree on node count");

  Matrix local_n, global_n;
  Vector inv;
  normalize_rows(h_local, &local_n, &inv, "hardness local view");
  normalize_rows(h_global, &global_n, &inv, "hardness global view");

  HardnessTable table;
  table.phi_local.noalias() = local_n * local_n.transpose();
  table.phi_global.noalias() = global_n * global_n.transpose();
  switch (cfg.view_mode) {
    case ViewMode::kLocalOnly:
      table.phi = table.phi_local;
      break;
    case ViewMode::kGlobalOnly:
      table.phi = table.phi_global;
      break;
    case ViewMode::kBoth:
      table.phi = table.phi_local + table.phi_global;
      break;
  }
  return table;
}

void select_hard_set(HardnessTable& table, const MinerConfig& cfg) {
  validate(cfg);
  const Index n = table.n_anchors();
  if (n < 2)
    throw ContractViolation(kModule, "need at least two nodes to mine");
  const Index n_neg = n - 1;
  const Index lo = rank_floor(cfg.lower_pct * static_cast<double>(n_neg));
  const Index hi = rank_floor(cfg.upper_pct * static_cast<double>(n_neg));
  if (lo >= hi)
    throw ConfigError(kModule,
                      "hardness window [" + std::to_string(cfg.lower_pct) +
                          "," + std::to_string(cfg.upper_pct) +
                          ") selects no negatives for anchor 0");

  table.hard_set.assign(static_cast<std::size_t>(n), {});
  std::vector<Index> cand(static_cast<std::size_t>(n_neg));
  for (Index i = 0; i < n; ++i) {
    Index w = 0;
    for (Index j = 0; j < n; ++j)
      if (j != i) cand[static_cast<std::size_t>(w++)] = j;
    const auto* row = table.phi.row(i).data();
    auto harder = [row](Index a, Index b) {
      if (row[a] != row[b]) return row[a] < row[b];
      return a < b;
    };
    std::nth_element(cand.begin(), cand.begin() + lo, cand.end(), harder);
    if (hi < n_neg)
      std::nth_element(cand.begin() + lo, cand.begin() + hi, cand.end(),
                       harder);
    auto& sel = table.hard_set[static_cast<std::size_t>(i)];
    sel.assign(cand.begin() + lo, cand.begin() + hi);
    std::sort(sel.begin(), sel.end());
  }
}

void dump_hardness_csv(const HardnessTable& table, std::ostream& out) {
  out << "anchor,negative,phi_l,phi_g,phi,selected\n";
  const Index n = table.n_anchors();
  static const std::vector<Index> kEmpty;
  for (Index i = 0; i < n; ++i) {
    const auto& sel = table.hard_set.empty()
                          ? kEmpty
                          : table.hard_set[static_cast<std::size_t>(i)];
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const bool selected =
          std::binary_search(sel.begin(), sel.end(), j);
      out << i << "," << j << "," << table.phi_local(i, j) << ","
          << table.phi_global(i, j) << "," << table.phi(i, j) << ","
          << (selected ? 1 : 0) << "\n";
    }
  }
}

}  // namespace dropmix
