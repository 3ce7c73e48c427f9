#include "dropmix/trainer.hpp"

#include <chrono>
#include <cmath>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "dropmix/errors.hpp"
#include "dropmix/probe.hpp"
#include "dropmix/rng.hpp"

namespace dropmix {
namespace {

constexpr const char* kModule = "trainer";

void validate(const TrainConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw ConfigError(kModule, "lr must be positive");
  if (cfg.weight_decay < 0.0)
    throw ConfigError(kModule, "weight_decay must be >= 0");
  if (cfg.patience < 1) throw ConfigError(kModule, "patience must be >= 1");
  if (cfg.eval_every < 1)
    throw ConfigError(kModule, "eval_every must be >= 1");
  if (cfg.epochs_max < 0)
    throw ConfigError(kModule, "epochs_max must be >= 0");
  if (cfg.epochs_max > 0 && cfg.warmup_epochs >= cfg.epochs_max)
    throw ConfigError(kModule, "warmup_epochs must be below epochs_max");
  if (cfg.warmup_epochs < 0)
    throw ConfigError(kModule, "warmup_epochs must be >= 0");
}

}  // namespace

void adam_step(std::vector<Matrix>& params, const std::vector<Matrix>& grads,
               AdamState& state, const TrainConfig& cfg) {
  if (params.size() != grads.size())
    throw ContractViolation(kModule, "adam_step: params/grads count mismatch");
  if (state.m.empty()) {
    for (const Matrix& p : params) {
      state.m.push_back(Matrix::Zero(p.rows(), p.cols()));
      state.v.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }
  if (state.m.size() != params.size())
    throw ContractViolation(kModule, "adam_step: state size mismatch");

  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].rows() != grads[i].rows() ||
        params[i].cols() != grads[i].cols())
      throw ContractViolation(kModule, "adam_step: shape mismatch");
    if (!grads[i].allFinite())
      throw TrainingDivergedError(kModule, "non-finite gradient in layer " +
                                               std::to_string(i));
    const Matrix g = grads[i] + cfg.weight_decay * params[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] =
        cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const Matrix m_hat = state.m[i] / bc1;
    const Matrix v_hat = state.v[i] / bc2;
    params[i].array() -=
        cfg.lr * m_hat.array() / (v_hat.array().sqrt() + cfg.adam_eps);
  }
}

TrainResult train(const Graph& graph, const DiffusionMatrix& diffusion,
                  const SplitSpec& split, const EncoderConfig& enc_cfg,
                  const MinerConfig& miner_cfg, const MixConfig& mix_cfg,
                  const LossConfig& loss_cfg, const TrainConfig& train_cfg,
                  MixLevel mix_level) {
  validate(train_cfg);
  using clock = std::chrono::steady_clock;

  TrainResult result;
  result.params = init_params(graph.feature_dim(), enc_cfg.hidden,
                              enc_cfg.layers, train_cfg.seed);
  if (train_cfg.epochs_max == 0) return result;

  const std::uint64_t bank_root = substream(train_cfg.seed, "bank");
  const std::uint64_t probe_seed = substream(train_cfg.seed, "probe");
  const bool mixing_on =
      mix_cfg.mode != MixMode::kNone && mix_cfg.synth_per_anchor > 0;

  AdamState adam;
  EncoderParams best_params = result.params;
  double best_val = -1.0;
  int evals_since_best = 0;
  bool evaluated = false;

  for (int epoch = 0; epoch < train_cfg.epochs_max; ++epoch) {
    const auto t0 = clock::now();
    Tape tape;
    std::vector<Var> weight_vars;
    ViewEmbeddings views = encode(tape, graph, diffusion.S, result.params,
                                  enc_cfg.activation, &weight_vars);

    NegativeBank bank;
    double hard_mean = 0.0;
    if (mixing_on && epoch >= train_cfg.warmup_epochs) {
      HardnessTable table = score_hardness(
          tape.value(views.local), tape.value(views.global), miner_cfg);
      select_hard_set(table, miner_cfg);
      for (const auto& hs : table.hard_set)
        hard_mean += static_cast<double>(hs.size());
      hard_mean /= static_cast<double>(table.hard_set.size());

      const std::uint64_t epoch_seed =
          substream(bank_root, static_cast<std::uint64_t>(epoch));
      if (mix_level == MixLevel::kEmbedding) {
        bank = synthesize_bank(tape.value(views.global), table.hard_set,
                               mix_cfg, epoch_seed);
      } else {
        bank = synthesize_bank(graph.features, table.hard_set, mix_cfg,
                               epoch_seed);
        bank.vectors =
            encode_rows(bank.vectors, result.params, enc_cfg.activation);
      }
    }

    Var loss = info_nce(tape, views, bank, loss_cfg);
    const double loss_value = tape.value(loss)(0, 0);
    if (!std::isfinite(loss_value))
      throw TrainingDivergedError(
          kModule, "non-finite loss at epoch " + std::to_string(epoch));

    tape.backward(loss);
    std::vector<Matrix> grads;
    grads.reserve(weight_vars.size());
    for (Var w : weight_vars) grads.push_back(tape.grad(w));
    adam_step(result.params.weights, grads, adam, train_cfg);

    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = loss_value;
    stats.hard_mean = hard_mean;
    stats.bank_size = bank.vectors.rows();

    bool stop = false;
    if ((epoch + 1) % train_cfg.eval_every == 0) {
      const Matrix emb =
          combined_embeddings(graph, diffusion, result.params, enc_cfg);
      const ProbeModel probe =
          fit_probe(emb, graph.labels, split, probe_seed);
      const double val = accuracy(probe, emb, graph.labels, split.val_idx);
      stats.val_acc = val;
      evaluated = true;
      if (val > best_val) {
        best_val = val;
        best_params = result.params;
        evals_since_best = 0;
      } else if (++evals_since_best >= train_cfg.patience) {
        stop = true;
      }
    }

    stats.ms = std::chrono::duration<double, std::milli>(clock::now() - t0)
                   .count();
    result.log.epochs.push_back(stats);
    if (stop) break;
  }

  if (evaluated) result.params = best_params;
  return result;
}

Matrix combined_embeddings(const Graph& graph,
                           const DiffusionMatrix& diffusion,
                           const EncoderParams& params,
                           const EncoderConfig& enc_cfg) {
  Tape tape;
  std::vector<Var> ws;
  ws.reserve(params.weights.size());
  for (const Matrix& w : params.weights) ws.push_back(tape.leaf(w, false));
  ViewEmbeddings views =
      encode(tape, graph, diffusion.S, ws, enc_cfg.activation);
  return tape.value(views.local) + tape.value(views.global);
}

void write_train_log(const TrainLog& log, std::ostream& out) {
  for (const EpochStats& e : log.epochs) {
    nlohmann::json j;
    j["epoch"] = e.epoch;
    j["loss"] = e.loss;
    if (e.val_acc)
      j["val_acc"] = *e.val_acc;
    else
      j["val_acc"] = nullptr;
    j["hard_mean"] = e.hard_mean;
    j["bank_size"] = e.bank_size;
    j["ms"] = e.ms;
    out << j.dump() << "\n";
  }
}

}  // namespace dropmix
