#include "dropmix/loss.hpp"

#include "dropmix/errors.hpp"

namespace dropmix {
namespace {

constexpr const char* kModule = "contrastive-objective";

Var direction_loss(Tape& tape, Var cross, Var anchors,
                   const NegativeBank& bank, const LossConfig& cfg) {
  std::optional<Var> bank_sims;
  if (!bank.empty())
    bank_sims = tape.cosine_sim_bank(anchors, bank.vectors, bank.per_anchor);
  std::optional<Var> intra;
  if (cfg.include_intra_view_negatives)
    intra = tape.cosine_sim(anchors, anchors);
  return tape.nce_reduce(cross, bank_sims, intra, cfg.tau);
}

}  // namespace

Var info_nce(Tape& tape, const ViewEmbeddings& views, const NegativeBank& bank,
             const LossConfig& cfg) {
  if (!(cfg.tau > 0.0))
    throw ConfigError(kModule, "temperature must be positive");
  const Index n = tape.value(views.local).rows();
  if (tape.value(views.global).rows() != n)
    throw ContractViolation(kModule, "views disagree on node count");
  if (!bank.empty() && bank.n_anchors() != n)
    throw ContractViolation(kModule, "bank anchor count mismatch");

  Var cross = tape.cosine_sim(views.local, views.global);
  Var forward = direction_loss(tape, cross, views.local, bank, cfg);
  if (!cfg.symmetrize) return forward;

  Var cross_t = tape.transpose(cross);
  Var backward = direction_loss(tape, cross_t, views.global, bank, cfg);
  return tape.scaled_sum({forward, backward}, {0.5, 0.5});
}

}  // namespace dropmix
