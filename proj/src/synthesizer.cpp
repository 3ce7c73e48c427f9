#include "dropmix/synthesizer.hpp"

#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "dropmix/errors.hpp"

namespace dropmix {
namespace {

constexpr const char* kModule = "negative-synthesizer";

void validate(const MixConfig& cfg) {
  if (!(cfg.lambda >= 0.0 && cfg.lambda <= 1.0))
    throw ConfigError(kModule, "lambda must lie in [0,1]");
  if (!(cfg.gamma >= 0.0 && cfg.gamma <= 1.0))
    throw ConfigError(kModule, "gamma must lie in [0,1]");
  if (cfg.synth_per_anchor < 0)
    throw ConfigError(kModule, "synth_per_anchor must be >= 0");
}

}  // namespace

RowVector mix_pair(const Eigen::Ref<const RowVector>& h1,
                   const Eigen::Ref<const RowVector>& h2, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw ConfigError(kModule, "lambda must lie in [0,1]");
  if (h1.size() != h2.size())
    throw ContractViolation(kModule, "mix_pair: dimension mismatch");
  return lambda * h1 + (1.0 - lambda) * h2;
}

ArrayX sample_mask(Index k, double gamma, Rng& rng) {
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw ConfigError(kModule, "gamma must lie in [0,1]");
  const Index m = static_cast<Index>(
      std::llround(gamma * static_cast<double>(k)));  // mixed positions
  std::vector<Index> pos(static_cast<std::size_t>(k));
  std::iota(pos.begin(), pos.end(), Index{0});
  // Partial Fisher-Yates: the first m entries are the zeroed positions.
  for (Index j = 0; j < m; ++j) {
    const Index swap_with =
        j + static_cast<Index>(rng.next_below(
                static_cast<std::uint64_t>(k - j)));
    std::swap(pos[static_cast<std::size_t>(j)],
              pos[static_cast<std::size_t>(swap_with)]);
  }
  ArrayX mask = ArrayX::Ones(k);
  for (Index j = 0; j < m; ++j) mask(pos[static_cast<std::size_t>(j)]) = 0.0;
  return mask;
}

RowVector drop_mix(const Eigen::Ref<const RowVector>& h1,
                   const Eigen::Ref<const RowVector>& h2, double lambda,
                   const ArrayX& mask) {
  if (h1.size() != h2.size() || h1.size() != mask.size())
    throw ContractViolation(kModule, "drop_mix: dimension mismatch");
  const RowVector mixed = mix_pair(h1, h2, lambda);
  const auto m = mask.transpose();
  return (m * h1.array() + (1.0 - m) * mixed.array()).matrix();
}

NegativeBank synthesize_bank(const Matrix& source_rows,
                             const std::vector<std::vector<Index>>& hard_sets,
                             const MixConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  NegativeBank bank;
  if (cfg.mode == MixMode::kNone || cfg.synth_per_anchor == 0) return bank;

  const Index n_anchors = static_cast<Index>(hard_sets.size());
  const Index k = source_rows.cols();
  const Index s = cfg.synth_per_anchor;
  bank.per_anchor = s;
  bank.vectors.resize(n_anchors * s, k);
  bank.provenance.resize(static_cast<std::size_t>(n_anchors * s));

  for (Index i = 0; i < n_anchors; ++i) {
    const auto& hs = hard_sets[static_cast<std::size_t>(i)];
    if (hs.size() < 2)
      throw DataError(kModule, "anchor " + std::to_string(i) +
                                   " has fewer than two hard negatives");
    const std::uint64_t anchor_seed = substream(seed, static_cast<std::uint64_t>(i));
    Rng pair_rng(substream(anchor_seed, "pairs"));
    Rng mask_rng(substream(anchor_seed, "masks"));

    for (Index j = 0; j < s; ++j) {
      const auto n_hard = static_cast<std::uint64_t>(hs.size());
      const auto a = static_cast<std::size_t>(pair_rng.next_below(n_hard));
      auto b = static_cast<std::size_t>(pair_rng.next_below(n_hard - 1));
      if (b >= a) ++b;
      const Index n1 = hs[a];
      const Index n2 = hs[b];
      for (Index bad : {n1, n2})
        if (bad < 0 || bad >= source_rows.rows())
          throw ContractViolation(kModule, "hard set index out of range");

      const Index row = i * s + j;
      auto& prov = bank.provenance[static_cast<std::size_t>(row)];
      prov.first = n1;
      prov.second = n2;
      switch (cfg.mode) {
        case MixMode::kMixup:
          bank.vectors.row(row) =
              mix_pair(source_rows.row(n1), source_rows.row(n2), cfg.lambda);
          break;
        case MixMode::kCutmix: {
          const ArrayX mask = sample_mask(k, cfg.gamma, mask_rng);
          prov.mask_id = static_cast<int>(j);
          bank.vectors.row(row) = drop_mix(source_rows.row(n1),
                                           source_rows.row(n2), 0.0, mask);
          break;
        }
        case MixMode::kDropmix: {
          const ArrayX mask = sample_mask(k, cfg.gamma, mask_rng);
          prov.mask_id = static_cast<int>(j);
          bank.vectors.row(row) = drop_mix(
              source_rows.row(n1), source_rows.row(n2), cfg.lambda, mask);
          break;
        }
        case MixMode::kNone:
          break;
      }
    }
  }
  return bank;
}

void dump_bank_csv(const NegativeBank& bank, const MixConfig& cfg,
                   std::ostream& out) {
  out << "anchor,n1,n2,lambda,gamma,mode\n";
  for (Index row = 0; row < bank.vectors.rows(); ++row) {
    const auto& prov = bank.provenance[static_cast<std::size_t>(row)];
    out << row / bank.per_anchor << "," << prov.first << "," << prov.second
        << "," << cfg.lambda << "," << cfg.gamma << "," << to_string(cfg.mode)
        << "\n";
  }
}

const char* to_string(MixMode mode) {
  switch (mode) {
    case MixMode::kNone:
      return "none";
    case MixMode::kMixup:
      return "mixup";
    case MixMode::kCutmix:
      return "cutmix";
    case MixMode::kDropmix:
      return "dropmix";
  }
  return "?";
}

}  // namespace dropmix
