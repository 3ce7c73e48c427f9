#pragma once

#include <optional>

#include "dropmix/encoder.hpp"
#include "dropmix/synthesizer.hpp"
#include "dropmix/tape.hpp"

namespace dropmix {

struct LossConfig {
  double tau = 0.5;  // InfoNCE temperature
  bool include_intra_view_negatives = false;
  bool symmetrize = true;  // average both anchor/positive role assignments
};

// InfoNCE over cross-view positives: anchor i in one view pairs with row i
// of the other view; the denominator sums over all N cross-view rows
// (positive included) plus this anchor's synthesized negatives. The bank is
// reused in both directions and receives no gradient.
Var info_nce(Tape& tape, const ViewEmbeddings& views, const NegativeBank& bank,
             const LossConfig& cfg);

}  // namespace dropmix
