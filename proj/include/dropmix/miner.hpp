#pragma once

#include <iosfwd>
#include <vector>

#include "dropmix/types.hpp"

namespace dropmix {

enum class ViewMode { kLocalOnly, kGlobalOnly, kBoth };

struct MinerConfig {
  double lower_pct = 0.35;  // selection alpha: easy-end cut
  double upper_pct = 0.95;  // selection beta: false-negative cut
  ViewMode view_mode = ViewMode::kBoth;
};

// Per-anchor hardness scores over all candidate negatives (every node
// except the anchor itself; diagonals are placeholders) and, once selected,
// the hard window per anchor. hard_set entries are sorted by node index.
struct HardnessTable {
  Matrix phi_local;   // cos within the local view
  Matrix phi_global;  // cos within the global view
  Matrix phi;         // combined per view_mode
  std::vector<std::vector<Index>> hard_set;

  Index n_anchors() const { return phi.rows(); }
};

// phi_l(i,n) = cos(h_local_i, h_local_n) and phi_g likewise; the anchor's
// positive within each view's space is its own row. Inputs are detached
// embedding matrices.
HardnessTable score_hardness(const Matrix& h_local, const Matrix& h_global,
                             const MinerConfig& cfg);

// Keeps, per anchor, the candidates ranked [floor(a*N_neg), floor(b*N_neg))
// by ascending phi, ties broken by smaller node index.
void select_hard_set(HardnessTable& table, const MinerConfig& cfg);

// Floating-point-robust floor for rank cutoffs like 0.3 * 10.
Index rank_floor(double x);

// Debug dump: "anchor,negative,phi_l,phi_g,phi,selected" per candidate pair.
void dump_hardness_csv(const HardnessTable& table, std::ostream& out);

}  // namespace dropmix
