#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dropmix/trainer.hpp"

namespace dropmix {

// Union of all module configs plus dataset and output paths. String fields
// hold the CLI spellings and are validated when resolved.
struct ExperimentConfig {
  std::string dataset_dir;    // empty -> generate an SBM
  std::string sbm = "100x2";  // "PERxBLOCKS[:p_in[:p_out[:dim]]]"

  std::string mode = "dropmix";         // none|mixup|cutmix|dropmix
  std::string mix_level = "embedding";  // embedding|feature
  std::string view_mode = "both";       // local|global|both

  double alpha = 0.35;  // hardness window lower percentile
  double beta = 0.95;   // hardness window upper percentile
  double gamma = 0.3;   // fraction of dimensions mixed
  double lambda = 0.2;  // mixing coefficient
  double tau = 0.5;     // InfoNCE temperature

  double teleport = 0.15;
  double series_tol = 1e-4;
  double sparsify_eps = 1e-4;
  long long topk = 128;  // negative disables the per-row limit

  long long synth_per_anchor = 64;
  int warmup = 50;
  int epochs = 300;
  int patience = 8;
  int eval_every = 5;
  double lr = 0.001;
  double weight_decay = 0.0;
  long long hidden = 256;
  int layers = 1;
  std::string activation = "relu";  // relu|none
  bool intra_view = false;
  bool single_direction = false;

  double train_ratio = 0.1;
  double val_ratio = 0.1;
  double test_ratio = 0.8;

  std::uint64_t seed = 0;
  std::string out_dir = "out";

  // Canonical "key=value;..." rendering of every field, in fixed order.
  std::string blob() const;
  // Stable 16-hex-digit id derived from blob().
  std::string run_id() const;
};

struct ResultRow {
  std::string run_id;
  std::string mode;
  std::string view_mode;
  double alpha = 0, beta = 0, gamma = 0, lambda = 0;
  std::uint64_t seed = 0;
  double val_acc = 0, test_acc = 0;
  std::string config_blob;

  std::string to_csv_line() const;
};

inline constexpr const char* kResultsHeader =
    "run_id,mode,view_mode,alpha,beta,gamma,lambda,seed,val_acc,test_acc,"
    "config";

// Typed view of the string fields; throws ConfigError on bad spellings.
MixMode parse_mix_mode(const std::string& s);
MixLevel parse_mix_level(const std::string& s);
ViewMode parse_view_mode(const std::string& s);
Activation parse_activation(const std::string& s);

// load -> diffuse -> train -> probe -> emit. Writes metrics_<run_id>.jsonl
// and ckpt_<run_id>.bin under out_dir, reuses/saves the diffusion cache,
// and (when append_row is set) appends the result row to out_dir/results.csv.
ResultRow run_experiment(const ExperimentConfig& cfg, bool append_row = true);

// Cartesian sweep over any of the four mining/mixing knobs; empty vectors
// mean "keep the base value". Runs |grid| x n_seeds experiments (seeds
// 0..n_seeds-1), optionally in parallel worker threads, and appends all
// rows to out_dir/results.csv in deterministic grid order.
struct SweepGrid {
  std::vector<double> alphas;
  std::vector<double> betas;
  std::vector<double> gammas;
  std::vector<double> lambdas;
  int n_seeds = 1;
};
std::vector<ResultRow> run_sweep(const ExperimentConfig& base,
                                 const SweepGrid& grid, int jobs = 1);

// Mean and sample standard deviation of test accuracy per config group
// (grouping ignores the seed). Rows come out sorted by group key.
struct AggregateRow {
  std::string mode;
  std::string view_mode;
  double alpha = 0, beta = 0, gamma = 0, lambda = 0;
  int n = 0;
  double test_mean = 0;
  double test_std = 0;
  std::string group_blob;  // config with the seed field removed
};
std::vector<AggregateRow> aggregate(std::istream& results_csv);
void write_aggregate_csv(const std::vector<AggregateRow>& rows,
                         std::ostream& out);

// Inclusive "start:stop:step" range (or a single value) for sweep flags.
std::vector<double> parse_range(const std::string& spec);

void append_results(const std::string& csv_path,
                    const std::vector<ResultRow>& rows);

}  // namespace dropmix
