#include "dropmix/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <sstream>

#include "dropmix/errors.hpp"
#include "dropmix/probe.hpp"
#include "dropmix/rng.hpp"

namespace dropmix {
namespace {

constexpr const char* kModule = "cli";

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct SbmSpec {
  Index per_block = 100;
  Index blocks = 2;
  double p_in = 0.1;
  double p_out = 0.01;
  Index dim = 8;
};

SbmSpec parse_sbm(const std::string& spec) {
  SbmSpec out;
  std::string s = spec;
  std::replace(s.begin(), s.end(), 'x', ' ');
  std::replace(s.begin(), s.end(), ':', ' ');
  std::istringstream ss(s);
  long long per = 0, blocks = 0;
  if (!(ss >> per >> blocks) || per < 1 || blocks < 1)
    throw ConfigError(kModule, "bad --sbm spec \"" + spec +
                                   "\"; expected NxB[:p_in[:p_out[:dim]]]");
  out.per_block = per;
  out.blocks = blocks;
  if (ss >> out.p_in) {
    if (ss >> out.p_out) {
      long long dim;
      if (ss >> dim) out.dim = dim;
    }
  }
  std::string rest;
  if (ss >> rest)
    throw ConfigError(kModule, "trailing junk in --sbm spec \"" + spec + "\"");
  out.dim = std::max<Index>(out.dim, out.blocks);
  return out;
}

bool file_exists(const std::string& p) {
  return std::filesystem::exists(p);
}

}  // namespace

MixMode parse_mix_mode(const std::string& s) {
  if (s == "none") return MixMode::kNone;
  if (s == "mixup") return MixMode::kMixup;
  if (s == "cutmix") return MixMode::kCutmix;
  if (s == "dropmix") return MixMode::kDropmix;
  throw ConfigError(kModule, "unknown mode \"" + s + "\"");
}

MixLevel parse_mix_level(const std::string& s) {
  if (s == "embedding") return MixLevel::kEmbedding;
  if (s == "feature") return MixLevel::kFeature;
  throw ConfigError(kModule, "unknown mix-level \"" + s + "\"");
}

ViewMode parse_view_mode(const std::string& s) {
  if (s == "local") return ViewMode::kLocalOnly;
  if (s == "global") return ViewMode::kGlobalOnly;
  if (s == "both") return ViewMode::kBoth;
  throw ConfigError(kModule, "unknown view-mode \"" + s + "\"");
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "none") return Activation::kNone;
  throw ConfigError(kModule, "unknown activation \"" + s + "\"");
}

std::string ExperimentConfig::blob() const {
  std::ostringstream b;
  b << "dataset=" << dataset_dir << ";sbm=" << (dataset_dir.empty() ? sbm : "")
    << ";mode=" << mode << ";mix_level=" << mix_level
    << ";view_mode=" << view_mode << ";alpha=" << fmt(alpha)
    << ";beta=" << fmt(beta) << ";gamma=" << fmt(gamma)
    << ";lambda=" << fmt(lambda) << ";tau=" << fmt(tau)
    << ";teleport=" << fmt(teleport) << ";series_tol=" << fmt(series_tol)
    << ";sparsify_eps=" << fmt(sparsify_eps) << ";topk=" << topk
    << ";synth_per_anchor=" << synth_per_anchor << ";warmup=" << warmup
    << ";epochs=" << epochs << ";patience=" << patience
    << ";eval_every=" << eval_every << ";lr=" << fmt(lr)
    << ";weight_decay=" << fmt(weight_decay) << ";hidden=" << hidden
    << ";layers=" << layers << ";activation=" << activation
    << ";intra_view=" << (intra_view ? 1 : 0)
    << ";single_direction=" << (single_direction ? 1 : 0)
    << ";train_ratio=" << fmt(train_ratio) << ";val_ratio=" << fmt(val_ratio)
    << ";test_ratio=" << fmt(test_ratio) << ";seed=" << seed;
  return b.str();
}

std::string ExperimentConfig::run_id() const {
  const std::string s = blob();
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

std::string ResultRow::to_csv_line() const {
  std::ostringstream o;
  o << run_id << "," << mode << "," << view_mode << "," << fmt(alpha) << ","
    << fmt(beta) << "," << fmt(gamma) << "," << fmt(lambda) << "," << seed
    << "," << fmt(val_acc) << "," << fmt(test_acc) << ",\"" << config_blob
    << "\"";
  return o.str();
}

ResultRow run_experiment(const ExperimentConfig& cfg, bool append_row) {
  // Resolve typed configs up front so bad values fail before any work.
  const MixMode mix_mode = parse_mix_mode(cfg.mode);
  const MixLevel mix_level = parse_mix_level(cfg.mix_level);

  MinerConfig miner_cfg;
  miner_cfg.lower_pct = cfg.alpha;
  miner_cfg.upper_pct = cfg.beta;
  miner_cfg.view_mode = parse_view_mode(cfg.view_mode);

  MixConfig mix_cfg;
  mix_cfg.mode = mix_mode;
  mix_cfg.lambda = cfg.lambda;
  mix_cfg.gamma = cfg.gamma;
  if (cfg.synth_per_anchor < 0)
    throw ConfigError(kModule, "synth-per-anchor must be >= 0");
  mix_cfg.synth_per_anchor = cfg.synth_per_anchor;

  LossConfig loss_cfg;
  loss_cfg.tau = cfg.tau;
  if (!(cfg.tau > 0.0)) throw ConfigError(kModule, "tau must be positive");
  loss_cfg.include_intra_view_negatives = cfg.intra_view;
  loss_cfg.symmetrize = !cfg.single_direction;

  DiffusionConfig diff_cfg;
  diff_cfg.teleport = cfg.teleport;
  diff_cfg.series_tol = cfg.series_tol;
  diff_cfg.sparsify_eps = cfg.sparsify_eps;
  if (cfg.topk >= 0) {
    diff_cfg.topk = static_cast<Index>(cfg.topk);
  } else {
    diff_cfg.topk.reset();
  }

  EncoderConfig enc_cfg;
  if (cfg.hidden < 1 || cfg.layers < 1)
    throw ConfigError(kModule, "hidden and layers must be >= 1");
  enc_cfg.hidden = static_cast<Index>(cfg.hidden);
  enc_cfg.layers = cfg.layers;
  enc_cfg.activation = parse_activation(cfg.activation);

  TrainConfig train_cfg;
  train_cfg.lr = cfg.lr;
  train_cfg.weight_decay = cfg.weight_decay;
  train_cfg.epochs_max = cfg.epochs;
  train_cfg.patience = cfg.patience;
  train_cfg.warmup_epochs = cfg.warmup;
  train_cfg.eval_every = cfg.eval_every;
  train_cfg.seed = cfg.seed;

  // Data.
  Graph graph;
  SplitSpec split;
  bool have_split = false;
  if (!cfg.dataset_dir.empty()) {
    const std::string base = cfg.dataset_dir;
    const std::string labels =
        file_exists(base + "/labels.txt") ? base + "/labels.txt" : "";
    if (labels.empty())
      throw DataError(kModule, "dataset lacks labels.txt (needed for probes)");
    graph = load_graph(base + "/features.txt", base + "/edges.txt", labels);
    if (file_exists(base + "/train_idx.txt")) {
      split.train_idx = load_index_file(base + "/train_idx.txt", graph.n_nodes);
      split.val_idx = load_index_file(base + "/val_idx.txt", graph.n_nodes);
      split.test_idx = load_index_file(base + "/test_idx.txt", graph.n_nodes);
      have_split = true;
    }
  } else {
    const SbmSpec sbm = parse_sbm(cfg.sbm);
    graph = generate_sbm(sbm.per_block, sbm.blocks, sbm.p_in, sbm.p_out,
                         sbm.dim, cfg.seed);
  }
  if (!have_split)
    split = make_split(graph, {cfg.train_ratio, cfg.val_ratio, cfg.test_ratio},
                       cfg.seed);

  // Diffusion, cached per dataset + config.
  std::filesystem::create_directories(cfg.out_dir);
  const std::string cache_path =
      cfg.out_dir + "/ppr_cache/" +
      diffusion_cache_key(graph.adjacency_norm, diff_cfg) + ".txt";
  DiffusionMatrix diffusion;
  if (!load_diffusion_cache(cache_path, graph.n_nodes, &diffusion)) {
    diffusion = compute_ppr(graph.adjacency_norm, diff_cfg);
    save_diffusion_cache(cache_path, diffusion);
  }
  diffusion.terms_used = ppr_series_terms(diff_cfg);

  // Train and evaluate.
  TrainResult trained = train(graph, diffusion, split, enc_cfg, miner_cfg,
                              mix_cfg, loss_cfg, train_cfg, mix_level);
  const Matrix emb =
      combined_embeddings(graph, diffusion, trained.params, enc_cfg);
  const ProbeModel probe =
      fit_probe(emb, graph.labels, split, substream(cfg.seed, "probe"));

  ResultRow row;
  row.run_id = cfg.run_id();
  row.mode = cfg.mode;
  row.view_mode = cfg.view_mode;
  row.alpha = cfg.alpha;
  row.beta = cfg.beta;
  row.gamma = cfg.gamma;
  row.lambda = cfg.lambda;
  row.seed = cfg.seed;
  row.val_acc = accuracy(probe, emb, graph.labels, split.val_idx);
  row.test_acc = accuracy(probe, emb, graph.labels, split.test_idx);
  row.config_blob = cfg.blob();

  {
    std::ofstream mf(cfg.out_dir + "/metrics_" + row.run_id + ".jsonl");
    write_train_log(trained.log, mf);
  }
  save_params(trained.params, cfg.out_dir + "/ckpt_" + row.run_id + ".bin");
  if (append_row) append_results(cfg.out_dir + "/results.csv", {row});
  return row;
}

void append_results(const std::string& csv_path,
                    const std::vector<ResultRow>& rows) {
  const bool fresh = !file_exists(csv_path) ||
                     std::filesystem::file_size(csv_path) == 0;
  std::ofstream f(csv_path, std::ios::app);
  if (!f) throw DataError(kModule, "cannot write " + csv_path);
  if (fresh) f << kResultsHeader << "\n";
  for (const ResultRow& r : rows) f << r.to_csv_line() << "\n";
}

std::vector<ResultRow> run_sweep(const ExperimentConfig& base,
                                 const SweepGrid& grid, int jobs) {
  if (grid.n_seeds < 1) throw ConfigError(kModule, "need at least one seed");
  if (jobs < 1) throw ConfigError(kModule, "jobs must be >= 1");

  auto axis = [](const std::vector<double>& v, double fallback) {
    return v.empty() ? std::vector<double>{fallback} : v;
  };
  const auto alphas = axis(grid.alphas, base.alpha);
  const auto betas = axis(grid.betas, base.beta);
  const auto gammas = axis(grid.gammas, base.gamma);
  const auto lambdas = axis(grid.lambdas, base.lambda);

  std::vector<ExperimentConfig> configs;
  for (double a : alphas)
    for (double b : betas)
      for (double g : gammas)
        for (double l : lambdas)
          for (int s = 0; s < grid.n_seeds; ++s) {
            ExperimentConfig c = base;
            c.alpha = a;
            c.beta = b;
            c.gamma = g;
            c.lambda = l;
            c.seed = static_cast<std::uint64_t>(s);
            configs.push_back(std::move(c));
          }

  std::vector<ResultRow> rows(configs.size());
  std::atomic<std::size_t> cursor{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= configs.size()) return;
      rows[i] = run_experiment(configs[i], /*append_row=*/false);
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::future<void>> pool;
    for (int j = 0; j < jobs; ++j)
      pool.push_back(std::async(std::launch::async, worker));
    for (auto& f : pool) f.get();
  }

  append_results(base.out_dir + "/results.csv", rows);
  return rows;
}

namespace {

// Minimal CSV field splitter handling double-quoted fields.
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string strip_seed(const std::string& blob) {
  const auto pos = blob.find(";seed=");
  if (pos == std::string::npos) return blob;
  auto end = blob.find(';', pos + 1);
  if (end == std::string::npos) end = blob.size();
  return blob.substr(0, pos) + blob.substr(end);
}

}  // namespace

std::vector<AggregateRow> aggregate(std::istream& results_csv) {
  std::string line;
  if (!std::getline(results_csv, line))
    throw DataError(kModule, "results file is empty");

  struct Group {
    AggregateRow proto;
    std::vector<double> accs;
  };
  std::map<std::string, Group> groups;
  while (std::getline(results_csv, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() < 11)
      throw DataError(kModule, "malformed results row: " + line);
    const std::string key = strip_seed(f[10]);
    auto& g = groups[key];
    if (g.accs.empty()) {
      g.proto.mode = f[1];
      g.proto.view_mode = f[2];
      g.proto.alpha = std::stod(f[3]);
      g.proto.beta = std::stod(f[4]);
      g.proto.gamma = std::stod(f[5]);
      g.proto.lambda = std::stod(f[6]);
      g.proto.group_blob = key;
    }
    g.accs.push_back(std::stod(f[9]));
  }
  if (groups.empty())
    throw DataError(kModule, "results file has no data rows");

  std::vector<AggregateRow> rows;
  for (auto& [key, g] : groups) {
    AggregateRow r = g.proto;
    r.n = static_cast<int>(g.accs.size());
    double mean = 0;
    for (double a : g.accs) mean += a;
    mean /= static_cast<double>(r.n);
    double ss = 0;
    for (double a : g.accs) ss += (a - mean) * (a - mean);
    r.test_mean = mean;
    r.test_std = r.n > 1 ? std::sqrt(ss / static_cast<double>(r.n - 1)) : 0.0;
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_aggregate_csv(const std::vector<AggregateRow>& rows,
                         std::ostream& out) {
  out << "mode,view_mode,alpha,beta,gamma,lambda,n,test_mean,test_std,"
         "summary,config\n";
  char pretty[64];
  for (const AggregateRow& r : rows) {
    std::snprintf(pretty, sizeof pretty, "%.4f +- %.4f", r.test_mean,
                  r.test_std);
    out << r.mode << "," << r.view_mode << "," << fmt(r.alpha) << ","
        << fmt(r.beta) << "," << fmt(r.gamma) << "," << fmt(r.lambda) << ","
        << r.n << "," << fmt(r.test_mean) << "," << fmt(r.test_std) << ","
        << pretty << ",\"" << r.group_blob << "\"\n";
  }
}

std::vector<double> parse_range(const std::string& spec) {
  std::vector<double> vals;
  const auto c1 = spec.find(':');
  if (c1 == std::string::npos) {
    try {
      vals.push_back(std::stod(spec));
    } catch (const std::exception&) {
      throw ConfigError(kModule, "bad range \"" + spec + "\"");
    }
    return vals;
  }
  const auto c2 = spec.find(':', c1 + 1);
  if (c2 == std::string::npos)
    throw ConfigError(kModule,
                      "range must be start:stop:step, got \"" + spec + "\"");
  double start, stop, step;
  try {
    start = std::stod(spec.substr(0, c1));
    stop = std::stod(spec.substr(c1 + 1, c2 - c1 - 1));
    step = std::stod(spec.substr(c2 + 1));
  } catch (const std::exception&) {
    throw ConfigError(kModule, "bad range \"" + spec + "\"");
  }
  if (!(step > 0.0) || stop < start)
    throw ConfigError(kModule, "range needs step > 0 and stop >= start");
  for (double v = start; v <= stop + step * 1e-9; v += step)
    vals.push_back(v);
  return vals;
}

}  // namespace dropmix
