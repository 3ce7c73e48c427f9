#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "dropmix/errors.hpp"
#include "dropmix/probe.hpp"
#include "dropmix/trainer.hpp"
#include "test_util.hpp"

using namespace dropmix;

namespace {

struct Pipeline {
  Graph graph;
  DiffusionMatrix diffusion;
  SplitSpec split;
};

Pipeline small_sbm(Index per_block, std::uint64_t seed, double p_in = 0.2,
                   double p_out = 0.02) {
  Pipeline p;
  p.graph = generate_sbm(per_block, 2, p_in, p_out, 6, seed);
  DiffusionConfig dcfg;
  dcfg.series_tol = 1e-6;
  dcfg.sparsify_eps = 1e-5;
  p.diffusion = compute_ppr(p.graph.adjacency_norm, dcfg);
  p.split = make_split(p.graph, {0.2, 0.2, 0.6}, seed);
  return p;
}

TrainConfig fast_train(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs_max = 40;
  cfg.warmup_epochs = 10;
  cfg.eval_every = 5;
  cfg.patience = 3;
  cfg.lr = 0.01;
  cfg.seed = seed;
  return cfg;
}

EncoderConfig small_encoder() {
  EncoderConfig cfg;
  cfg.hidden = 16;
  return cfg;
}

MixConfig small_mix(MixMode mode) {
  MixConfig cfg;
  cfg.mode = mode;
  cfg.synth_per_anchor = 8;
  return cfg;
}

}  // namespace

TEST_CASE("adam first step matches the bias-corrected closed form") {
  std::vector<Matrix> params = {Matrix::Zero(1, 1)};
  std::vector<Matrix> grads = {Matrix::Ones(1, 1)};
  AdamState state;
  TrainConfig cfg;
  cfg.lr = 0.001;
  adam_step(params, grads, state, cfg);
  const double expect = -0.001 / (1.0 + 1e-8);
  CHECK(std::abs(params[0](0, 0) - expect) <= 1e-15);
}

TEST_CASE("adam leaves params unchanged for zero gradients") {
  std::vector<Matrix> params = {testing::random_matrix(3, 2, 7)};
  const Matrix before = params[0];
  std::vector<Matrix> grads = {Matrix::Zero(3, 2)};
  AdamState state;
  TrainConfig cfg;
  adam_step(params, grads, state, cfg);
  CHECK((params[0] - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adam drives a scalar quadratic to zero") {
  std::vector<Matrix> params = {Matrix::Ones(1, 1)};
  AdamState state;
  TrainConfig cfg;
  cfg.lr = 0.01;
  for (int step = 0; step < 500; ++step) {
    std::vector<Matrix> grads = {2.0 * params[0]};  // d/dw of w^2
    adam_step(params, grads, state, cfg);
  }
  CHECK(std::abs(params[0](0, 0)) < 1e-2);
}

TEST_CASE("adam rejects non-finite gradients") {
  std::vector<Matrix> params = {Matrix::Zero(1, 1)};
  Matrix bad(1, 1);
  bad << std::nan("");
  AdamState state;
  TrainConfig cfg;
  CHECK_THROWS_AS(adam_step(params, {bad}, state, cfg),
                  TrainingDivergedError);
}

TEST_CASE("weight decay adds the l2 pull") {
  std::vector<Matrix> params = {Matrix::Ones(1, 1)};
  std::vector<Matrix> grads = {Matrix::Zero(1, 1)};
  AdamState state;
  TrainConfig cfg;
  cfg.lr = 0.001;
  cfg.weight_decay = 0.1;
  adam_step(params, grads, state, cfg);
  // Effective gradient 0.1 * w: the first bias-corrected step is -lr.
  CHECK(params[0](0, 0) == doctest::Approx(1.0 - 0.001).epsilon(1e-9));
}

TEST_CASE("epochs_max 0 returns the initial params and an empty log") {
  Pipeline p = small_sbm(10, 3);
  TrainConfig cfg = fast_train(3);
  cfg.epochs_max = 0;
  TrainResult r = train(p.graph, p.diffusion, p.split, small_encoder(),
                        MinerConfig{}, small_mix(MixMode::kNone), LossConfig{},
                        cfg);
  EncoderParams fresh = init_params(6, 16, 1, 3);
  CHECK(r.log.epochs.empty());
  CHECK((r.params.weights[0] - fresh.weights[0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("training is bitwise deterministic modulo wall time") {
  Pipeline p = small_sbm(12, 5);
  auto run = [&]() {
    return train(p.graph, p.diffusion, p.split, small_encoder(), MinerConfig{},
                 small_mix(MixMode::kDropmix), LossConfig{}, fast_train(5));
  };
  TrainResult a = run();
  TrainResult b = run();
  REQUIRE(a.log.epochs.size() == b.log.epochs.size());
  for (std::size_t i = 0; i < a.log.epochs.size(); ++i) {
    CHECK(a.log.epochs[i].loss == b.log.epochs[i].loss);
    CHECK(a.log.epochs[i].val_acc == b.log.epochs[i].val_acc);
    CHECK(a.log.epochs[i].bank_size == b.log.epochs[i].bank_size);
    CHECK(a.log.epochs[i].hard_mean == b.log.epochs[i].hard_mean);
  }
  for (std::size_t l = 0; l < a.params.weights.size(); ++l)
    CHECK((a.params.weights[l] - b.params.weights[l]).cwiseAbs().maxCoeff() ==
          0.0);
}

TEST_CASE("warm-up epochs run with an empty bank, then the bank appears") {
  Pipeline p = small_sbm(12, 7);
  TrainConfig cfg = fast_train(7);
  cfg.epochs_max = 16;
  cfg.warmup_epochs = 9;
  cfg.patience = 100;
  TrainResult r = train(p.graph, p.diffusion, p.split, small_encoder(),
                        MinerConfig{}, small_mix(MixMode::kDropmix),
                        LossConfig{}, cfg);
  REQUIRE(r.log.epochs.size() == 16);
  for (const EpochStats& e : r.log.epochs) {
    CHECK(std::isfinite(e.loss));
    if (e.epoch < 9) {
      CHECK(e.bank_size == 0);
    } else {
      CHECK(e.bank_size == p.graph.n_nodes * 8);
      CHECK(e.hard_mean > 0.0);
    }
  }
}

TEST_CASE("mode none trains to a separable representation on an easy sbm") {
  // Forced-structure check from the training contract: 2 blocks, strong
  // assortativity, default-style settings scaled down for a unit test.
  Graph graph = generate_sbm(100, 2, 0.1, 0.01, 8, 11);
  DiffusionConfig dcfg;
  DiffusionMatrix diffusion = compute_ppr(graph.adjacency_norm, dcfg);
  SplitSpec split = make_split(graph, {0.1, 0.1, 0.8}, 11);

  EncoderConfig enc;
  enc.hidden = 64;
  TrainConfig tcfg;
  tcfg.seed = 11;
  tcfg.epochs_max = 60;
  tcfg.warmup_epochs = 10;
  TrainResult r = train(graph, diffusion, split, enc, MinerConfig{},
                        small_mix(MixMode::kNone), LossConfig{}, tcfg);
  const Matrix emb = combined_embeddings(graph, diffusion, r.params, enc);
  const ProbeModel probe = fit_probe(emb, graph.labels, split, 0);
  CHECK(accuracy(probe, emb, graph.labels, split.train_idx) >= 0.95);
}

TEST_CASE("feature-level mixing banks go through the combine weights") {
  Pipeline p = small_sbm(10, 13);
  TrainConfig cfg = fast_train(13);
  cfg.epochs_max = 14;
  cfg.warmup_epochs = 2;
  cfg.patience = 50;
  TrainResult r = train(p.graph, p.diffusion, p.split, small_encoder(),
                        MinerConfig{}, small_mix(MixMode::kDropmix),
                        LossConfig{}, cfg, MixLevel::kFeature);
  CHECK(r.log.epochs.back().bank_size == p.graph.n_nodes * 8);
}

TEST_CASE("invalid train configs are rejected") {
  Pipeline p = small_sbm(6, 17);
  TrainConfig cfg = fast_train(17);
  cfg.lr = 0.0;
  CHECK_THROWS_AS(train(p.graph, p.diffusion, p.split, small_encoder(),
                        MinerConfig{}, small_mix(MixMode::kNone), LossConfig{},
                        cfg),
                  ConfigError);
  cfg = fast_train(17);
  cfg.warmup_epochs = cfg.epochs_max;
  CHECK_THROWS_AS(train(p.graph, p.diffusion, p.split, small_encoder(),
                        MinerConfig{}, small_mix(MixMode::kNone), LossConfig{},
                        cfg),
                  ConfigError);
  cfg = fast_train(17);
  cfg.patience = 0;
  CHECK_THROWS_AS(train(p.graph, p.diffusion, p.split, small_encoder(),
                        MinerConfig{}, small_mix(MixMode::kNone), LossConfig{},
                        cfg),
                  ConfigError);
}

TEST_CASE("train log serializes to one json object per epoch") {
  TrainLog log;
  EpochStats e;
  e.epoch = 0;
  e.loss = 1.5;
  e.hard_mean = 2.0;
  e.bank_size = 4;
  e.ms = 10.0;
  log.epochs.push_back(e);
  e.epoch = 1;
  e.val_acc = 0.75;
  log.epochs.push_back(e);

  std::ostringstream out;
  write_train_log(log, out);
  std::istringstream in(out.str());
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    CHECK(line.find("\"epoch\":") != std::string::npos);
    CHECK(line.find("\"val_acc\":") != std::string::npos);
  }
  CHECK(lines == 2);
  CHECK(out.str().find("\"val_acc\":null") != std::string::npos);
  CHECK(out.str().find("\"val_acc\":0.75") != std::string::npos);
}
