#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "dropmix/diffusion.hpp"
#include "dropmix/encoder.hpp"
#include "dropmix/graph.hpp"
#include "dropmix/loss.hpp"
#include "dropmix/miner.hpp"
#include "dropmix/synthesizer.hpp"

namespace dropmix {

// Whether hard negatives are mixed in embedding space or on raw input
// features (which are then pushed through the combine weights).
enum class MixLevel { kEmbedding, kFeature };

struct TrainConfig {
  double lr = 0.001;
  double weight_decay = 0.0;
  int epochs_max = 300;
  int patience = 8;        // consecutive evaluations without improvement
  int warmup_epochs = 50;  // epochs trained with an empty bank
  int eval_every = 5;      // probe cadence in epochs
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  std::optional<double> val_acc;  // present on evaluation epochs
  double hard_mean = 0.0;         // mean hard-set size over anchors
  Index bank_size = 0;            // total synthesized vectors
  double ms = 0.0;                // wall time; excluded from determinism
};

struct TrainLog {
  std::vector<EpochStats> epochs;
};

// One JSON object per epoch:
// {"epoch":..,"loss":..,"val_acc":..,"hard_mean":..,"bank_size":..,"ms":..}
void write_train_log(const TrainLog& log, std::ostream& out);

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long t = 0;
};

// Standard Adam with the l2 penalty weight_decay * w added to the raw
// gradients. Raises training-diverged on non-finite gradients.
void adam_step(std::vector<Matrix>& params, const std::vector<Matrix>& grads,
               AdamState& state, const TrainConfig& cfg);

struct TrainResult {
  EncoderParams params;  // best-validation checkpoint
  TrainLog log;
};

// Full loop: warm-up with an empty bank, then per-epoch rescoring on
// current detached embeddings, synthesis, one full-graph Adam step. Every
// eval_every epochs a linear probe on the frozen combined embeddings
// (local + global) logs validation accuracy; stops early after `patience`
// evaluations without improvement and returns the best checkpoint.
TrainResult train(const Graph& graph, const DiffusionMatrix& diffusion,
                  const SplitSpec& split, const EncoderConfig& enc_cfg,
                  const MinerConfig& miner_cfg, const MixConfig& mix_cfg,
                  const LossConfig& loss_cfg, const TrainConfig& train_cfg,
                  MixLevel mix_level = MixLevel::kEmbedding);

// The representation handed to probes: sum of the two views.
Matrix combined_embeddings(const Graph& graph, const DiffusionMatrix& diffusion,
                           const EncoderParams& params,
                           const EncoderConfig& enc_cfg);

}  // namespace dropmix
