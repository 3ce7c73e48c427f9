#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "dropmix/rng.hpp"
#include "dropmix/types.hpp"

namespace dropmix {

enum class MixMode { kNone, kMixup, kCutmix, kDropmix };

struct MixConfig {
  MixMode mode = MixMode::kDropmix;
  double lambda = 0.2;          // convex-combination coefficient
  double gamma = 0.3;           // fraction of dimensions that get mixed
  Index synth_per_anchor = 64;  // vectors synthesized per anchor
};

// Synthesized negatives, `per_anchor` vectors per anchor stacked so anchor
// i owns rows [i*per_anchor, (i+1)*per_anchor). The vectors act as
// constants in the loss: no gradient flows back into their sources.
struct NegativeBank {
  Matrix vectors;
  Index per_anchor = 0;
  struct Provenance {
    Index first = -1;   // source of the kept dimensions
    Index second = -1;  // mixed-in source
    int mask_id = -1;   // draw index of the mask, -1 when no mask was used
  };
  std::vector<Provenance> provenance;

  bool empty() const { return per_anchor == 0 || vectors.rows() == 0; }
  Index n_anchors() const {
    return per_anchor == 0 ? 0 : vectors.rows() / per_anchor;
  }
};

// h_mix = lambda * h1 + (1 - lambda) * h2.
RowVector mix_pair(const Eigen::Ref<const RowVector>& h1,
                   const Eigen::Ref<const RowVector>& h2, double lambda);

// Mask with exactly round(gamma * k) zeros (the mixed positions) placed
// uniformly at random; ones mark kept positions.
ArrayX sample_mask(Index k, double gamma, Rng& rng);

// h_new = M . h1 + (1 - M) . h_mix: kept positions copy h1 exactly, mixed
// positions take the convex combination.
RowVector drop_mix(const Eigen::Ref<const RowVector>& h1,
                   const Eigen::Ref<const RowVector>& h2, double lambda,
                   const ArrayX& mask);

// Draws synth_per_anchor ordered pairs (n1 != n2) per anchor from its hard
// set and synthesizes one vector per pair according to cfg.mode. Pair and
// mask draws come from separate per-anchor substreams of `seed`, so banks
// for different modes under the same seed share their pair draws, and
// per-anchor work is schedule independent.
NegativeBank synthesize_bank(const Matrix& source_rows,
                             const std::vector<std::vector<Index>>& hard_sets,
                             const MixConfig& cfg, std::uint64_t seed);

// Debug dump: "anchor,n1,n2,lambda,gamma,mode" per synthesized vector.
void dump_bank_csv(const NegativeBank& bank, const MixConfig& cfg,
                   std::ostream& out);

const char* to_string(MixMode mode);

}  // namespace dropmix
