#include <exception>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "dropmix/errors.hpp"
#include "dropmix/experiment.hpp"

namespace {

// "key = value" config file, merged under the command line: a key is only
// applied when its flag was not passed. Unknown keys are rejected.
void apply_config_file(const CLI::App* cmd, const std::string& path,
                       const std::map<std::string, std::function<void(const std::string&)>>& setters) {
  std::ifstream f(path);
  if (!f) throw dropmix::ConfigError("cli", "cannot open config file " + path);
  std::string line;
  long lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    if (eq == std::string::npos) {
      if (!trim(line).empty())
        throw dropmix::ConfigError(
            "cli", "config line " + std::to_string(lineno) +
                       " is not \"key = value\": " + line);
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end())
      throw dropmix::ConfigError("cli", "unknown config key \"" + key +
                                            "\" (line " +
                                            std::to_string(lineno) + ")");
    const CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (opt != nullptr && opt->count() > 0) continue;  // flag wins
    try {
      it->second(value);
    } catch (const dropmix::Error&) {
      throw;
    } catch (const std::exception&) {
      throw dropmix::ConfigError("cli", "bad value for config key \"" + key +
                                            "\": " + value);
    }
  }
}

std::map<std::string, std::function<void(const std::string&)>> config_setters(
    dropmix::ExperimentConfig* cfg) {
  auto str = [](std::string* field) {
    return [field](const std::string& v) { *field = v; };
  };
  auto num = [](double* field) {
    return [field](const std::string& v) { *field = std::stod(v); };
  };
  auto integer = [](auto* field) {
    return [field](const std::string& v) {
      *field = static_cast<std::remove_pointer_t<decltype(field)>>(
          std::stoll(v));
    };
  };
  auto boolean = [](bool* field) {
    return [field](const std::string& v) {
      if (v == "1" || v == "true") {
        *field = true;
      } else if (v == "0" || v == "false") {
        *field = false;
      } else {
        throw dropmix::ConfigError("cli", "expected a boolean, got " + v);
      }
    };
  };
  return {
      {"dataset", str(&cfg->dataset_dir)},
      {"sbm", str(&cfg->sbm)},
      {"mode", str(&cfg->mode)},
      {"mix-level", str(&cfg->mix_level)},
      {"view-mode", str(&cfg->view_mode)},
      {"alpha", num(&cfg->alpha)},
      {"beta", num(&cfg->beta)},
      {"gamma", num(&cfg->gamma)},
      {"lambda", num(&cfg->lambda)},
      {"tau", num(&cfg->tau)},
      {"teleport", num(&cfg->teleport)},
      {"series-tol", num(&cfg->series_tol)},
      {"sparsify-eps", num(&cfg->sparsify_eps)},
      {"topk", integer(&cfg->topk)},
      {"synth-per-anchor", integer(&cfg->synth_per_anchor)},
      {"warmup", integer(&cfg->warmup)},
      {"epochs", integer(&cfg->epochs)},
      {"patience", integer(&cfg->patience)},
      {"eval-every", integer(&cfg->eval_every)},
      {"lr", num(&cfg->lr)},
      {"weight-decay", num(&cfg->weight_decay)},
      {"hidden", integer(&cfg->hidden)},
      {"layers", integer(&cfg->layers)},
      {"activation", str(&cfg->activation)},
      {"intra-view", boolean(&cfg->intra_view)},
      {"single-direction", boolean(&cfg->single_direction)},
      {"train-ratio", num(&cfg->train_ratio)},
      {"val-ratio", num(&cfg->val_ratio)},
      {"test-ratio", num(&cfg->test_ratio)},
      {"seed", integer(&cfg->seed)},
      {"out", str(&cfg->out_dir)},
  };
}

void add_experiment_flags(CLI::App* cmd, dropmix::ExperimentConfig* cfg,
                          bool with_mining_knobs = true) {
  cmd->add_option("--dataset", cfg->dataset_dir,
                  "Dataset directory (features.txt, edges.txt, labels.txt, "
                  "optional *_idx.txt split files)");
  cmd->add_option("--sbm", cfg->sbm,
                  "Synthetic SBM spec NxB[:p_in[:p_out[:dim]]] used when no "
                  "dataset is given");
  cmd->add_option("--mode", cfg->mode, "none|mixup|cutmix|dropmix");
  cmd->add_option("--mix-level", cfg->mix_level, "embedding|feature");
  cmd->add_option("--view-mode", cfg->view_mode, "local|global|both");
  if (with_mining_knobs) {
    cmd->add_option("--alpha", cfg->alpha, "Hardness window lower percentile");
    cmd->add_option("--beta", cfg->beta, "Hardness window upper percentile");
    cmd->add_option("--gamma", cfg->gamma, "Fraction of dimensions mixed");
    cmd->add_option("--lambda", cfg->lambda, "Mixing coefficient");
  }
  cmd->add_option("--tau", cfg->tau, "InfoNCE temperature");
  cmd->add_option("--teleport", cfg->teleport, "PPR restart probability");
  cmd->add_option("--series-tol", cfg->series_tol,
                  "PPR series truncation tolerance");
  cmd->add_option("--sparsify-eps", cfg->sparsify_eps,
                  "Diffusion entry drop threshold");
  cmd->add_option("--topk", cfg->topk,
                  "Per-row keep limit for the diffusion matrix (negative "
                  "disables)");
  cmd->add_option("--synth-per-anchor", cfg->synth_per_anchor,
                  "Synthesized negatives per anchor");
  cmd->add_option("--warmup", cfg->warmup, "Epochs before mining starts");
  cmd->add_option("--epochs", cfg->epochs, "Maximum training epochs");
  cmd->add_option("--patience", cfg->patience,
                  "Evaluations without improvement before stopping");
  cmd->add_option("--eval-every", cfg->eval_every, "Probe cadence in epochs");
  cmd->add_option("--lr", cfg->lr, "Adam learning rate");
  cmd->add_option("--weight-decay", cfg->weight_decay, "L2 penalty weight");
  cmd->add_option("--hidden", cfg->hidden, "Embedding width");
  cmd->add_option("--layers", cfg->layers, "Encoder depth");
  cmd->add_option("--activation", cfg->activation, "relu|none");
  cmd->add_flag("--intra-view", cfg->intra_view,
                "Add same-view negatives to the denominator");
  cmd->add_flag("--single-direction", cfg->single_direction,
                "Skip the symmetrized second loss direction");
  cmd->add_option("--train-ratio", cfg->train_ratio, "Train split fraction");
  cmd->add_option("--val-ratio", cfg->val_ratio, "Validation split fraction");
  cmd->add_option("--test-ratio", cfg->test_ratio, "Test split fraction");
  cmd->add_option("--seed", cfg->seed, "Master seed");
  cmd->add_option("--out", cfg->out_dir, "Output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph contrastive learning with mined and mixed hard "
               "negatives"};
  app.require_subcommand(1);

  dropmix::ExperimentConfig cfg;
  std::string run_config_path;
  CLI::App* run = app.add_subcommand("run", "Run one experiment");
  add_experiment_flags(run, &cfg);
  run->add_option("--config", run_config_path,
                  "key = value config file (flags win)");

  dropmix::ExperimentConfig sweep_cfg;
  std::string alpha_range, beta_range, gamma_range, lambda_range;
  int n_seeds = 1;
  int jobs = 1;
  CLI::App* sweep =
      app.add_subcommand("sweep", "Run a grid of experiments");
  add_experiment_flags(sweep, &sweep_cfg, /*with_mining_knobs=*/false);
  sweep->add_option("--alpha", alpha_range,
                    "Value or start:stop:step range for alpha");
  sweep->add_option("--beta", beta_range,
                    "Value or start:stop:step range for beta");
  sweep->add_option("--gamma", gamma_range,
                    "Value or start:stop:step range for gamma");
  sweep->add_option("--lambda", lambda_range,
                    "Value or start:stop:step range for lambda");
  sweep->add_option("--seeds", n_seeds, "Number of seeds (0..N-1) per point");
  sweep->add_option("--jobs", jobs, "Parallel worker threads");
  std::string sweep_config_path;
  sweep->add_option("--config", sweep_config_path,
                    "key = value config file (flags win)");

  std::string results_path = "out/results.csv";
  std::string summary_path;
  CLI::App* agg = app.add_subcommand(
      "aggregate", "Summarize results.csv as mean +- std per config group");
  agg->add_option("--results", results_path, "Path to results.csv");
  agg->add_option("--out-file", summary_path,
                  "Write the summary here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) {
      if (!run_config_path.empty())
        apply_config_file(run, run_config_path, config_setters(&cfg));
      const dropmix::ResultRow row = dropmix::run_experiment(cfg);
      std::cout << dropmix::kResultsHeader << "\n"
                << row.to_csv_line() << "\n";
    } else if (sweep->parsed()) {
      if (!sweep_config_path.empty()) {
        auto setters = config_setters(&sweep_cfg);
        // In a sweep the four mining knobs accept range syntax.
        setters["alpha"] = [&](const std::string& v) { alpha_range = v; };
        setters["beta"] = [&](const std::string& v) { beta_range = v; };
        setters["gamma"] = [&](const std::string& v) { gamma_range = v; };
        setters["lambda"] = [&](const std::string& v) { lambda_range = v; };
        apply_config_file(sweep, sweep_config_path, setters);
      }
      dropmix::SweepGrid grid;
      if (!alpha_range.empty()) grid.alphas = dropmix::parse_range(alpha_range);
      if (!beta_range.empty()) grid.betas = dropmix::parse_range(beta_range);
      if (!gamma_range.empty()) grid.gammas = dropmix::parse_range(gamma_range);
      if (!lambda_range.empty())
        grid.lambdas = dropmix::parse_range(lambda_range);
      grid.n_seeds = n_seeds;
      const auto rows = dropmix::run_sweep(sweep_cfg, grid, jobs);
      std::cout << rows.size() << " runs appended to " << sweep_cfg.out_dir
                << "/results.csv\n";
    } else if (agg->parsed()) {
      std::ifstream in(results_path);
      if (!in)
        throw dropmix::DataError("cli", "cannot open " + results_path);
      const auto rows = dropmix::aggregate(in);
      if (summary_path.empty()) {
        dropmix::write_aggregate_csv(rows, std::cout);
      } else {
        std::ofstream out(summary_path);
        dropmix::write_aggregate_csv(rows, out);
      }
    }
  } catch (const dropmix::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const dropmix::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const dropmix::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const dropmix::TrainingDivergedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const dropmix::DegenerateEmbeddingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const dropmix::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
