#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <sstream>

#include "dropmix/errors.hpp"
#include "dropmix/synthesizer.hpp"
#include "test_util.hpp"

using namespace dropmix;

namespace {

std::vector<std::vector<Index>> uniform_hard_sets(Index n_anchors,
                                                  const std::vector<Index>& hs) {
  return std::vector<std::vector<Index>>(static_cast<std::size_t>(n_anchors),
                                         hs);
}

}  // namespace

TEST_CASE("mix_pair forced values and bounds") {
  RowVector h1(2), h2(2);
  h1 << 1, 0;
  h2 << 0, 1;
  RowVector m = mix_pair(h1, h2, 0.3);
  CHECK(m(0) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(m(1) == doctest::Approx(0.7).epsilon(1e-15));

  CHECK((mix_pair(h1, h2, 1.0) - h1).cwiseAbs().maxCoeff() == 0.0);
  CHECK((mix_pair(h1, h2, 0.0) - h2).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(mix_pair(h1, h2, 1.5), ConfigError);
  CHECK_THROWS_AS(mix_pair(h1, h2, -0.1), ConfigError);
  RowVector wrong(3);
  wrong.setZero();
  CHECK_THROWS_AS(mix_pair(h1, wrong, 0.5), ContractViolation);
}

TEST_CASE("sample_mask extremes and exact zero count") {
  Rng rng(5);
  CHECK(sample_mask(16, 0.0, rng).minCoeff() == 1.0);
  CHECK(sample_mask(16, 1.0, rng).maxCoeff() == 0.0);

  for (double gamma : {0.1, 0.25, 0.3, 0.5}) {
    const Index m = static_cast<Index>(std::llround(gamma * 128));
    for (int rep = 0; rep < 50; ++rep) {
      ArrayX mask = sample_mask(128, gamma, rng);
      CHECK((mask == 0.0).count() == m);
      CHECK(((mask == 0.0) || (mask == 1.0)).all());
    }
  }
  // k=128, gamma=0.3 pins 38 zeros.
  CHECK((sample_mask(128, 0.3, rng) == 0.0).count() == 38);
}

TEST_CASE("sample_mask positions cover uniformly") {
  Rng rng(7);
  const Index k = 32;
  const int draws = 4000;
  Eigen::ArrayXd zero_count = Eigen::ArrayXd::Zero(k);
  for (int i = 0; i < draws; ++i)
    zero_count += (sample_mask(k, 0.25, rng) == 0.0).cast<double>();
  // Each position is zeroed with probability 1/4.
  const double expect = draws * 0.25;
  const double sigma = std::sqrt(draws * 0.25 * 0.75);
  CHECK((zero_count - expect).abs().maxCoeff() <= 4.0 * sigma);
}

TEST_CASE("drop_mix worked example and degenerate masks") {
  RowVector h1(2), h2(2);
  h1 << 1, 0;
  h2 << 0, 1;
  ArrayX mask(2);
  mask << 1, 0;
  RowVector out = drop_mix(h1, h2, 0.3, mask);
  CHECK(out(0) == 1.0);
  CHECK(out(1) == doctest::Approx(0.7).epsilon(1e-15));

  RowVector a = testing::random_matrix(1, 6, 11).row(0);
  RowVector b = testing::random_matrix(1, 6, 12).row(0);
  ArrayX ones = ArrayX::Ones(6);
  ArrayX zeros = ArrayX::Zero(6);
  CHECK((drop_mix(a, b, 0.4, ones) - a).cwiseAbs().maxCoeff() == 0.0);
  CHECK((drop_mix(a, b, 0.4, zeros) - mix_pair(a, b, 0.4))
            .cwiseAbs()
            .maxCoeff() == 0.0);
  ArrayX short_mask = ArrayX::Ones(3);
  CHECK_THROWS_AS(drop_mix(a, b, 0.4, short_mask), ContractViolation);
}

TEST_CASE("mode none or zero count yields an empty bank") {
  Matrix src = testing::random_matrix(6, 4, 21);
  auto hs = uniform_hard_sets(6, {0, 1, 2});
  MixConfig cfg;
  cfg.mode = MixMode::kNone;
  CHECK(synthesize_bank(src, hs, cfg, 1).empty());
  cfg.mode = MixMode::kDropmix;
  cfg.synth_per_anchor = 0;
  CHECK(synthesize_bank(src, hs, cfg, 1).empty());
}

TEST_CASE("dropmix with gamma 1 equals mixup bitwise under a shared seed") {
  Matrix src = testing::random_matrix(9, 16, 31);
  auto hs = uniform_hard_sets(9, {1, 3, 4, 7});
  MixConfig mixup;
  mixup.mode = MixMode::kMixup;
  mixup.lambda = 0.35;
  mixup.synth_per_anchor = 12;
  MixConfig dm = mixup;
  dm.mode = MixMode::kDropmix;
  dm.gamma = 1.0;

  NegativeBank a = synthesize_bank(src, hs, mixup, 77);
  NegativeBank b = synthesize_bank(src, hs, dm, 77);
  REQUIRE(a.vectors.rows() == b.vectors.rows());
  CHECK((a.vectors - b.vectors).cwiseAbs().maxCoeff() == 0.0);
  for (std::size_t i = 0; i < a.provenance.size(); ++i) {
    CHECK(a.provenance[i].first == b.provenance[i].first);
    CHECK(a.provenance[i].second == b.provenance[i].second);
  }
}

TEST_CASE("dropmix with gamma 0 copies the first source bitwise") {
  Matrix src = testing::random_matrix(5, 8, 41);
  auto hs = uniform_hard_sets(5, {0, 2, 4});
  MixConfig cfg;
  cfg.mode = MixMode::kDropmix;
  cfg.gamma = 0.0;
  cfg.synth_per_anchor = 6;
  NegativeBank bank = synthesize_bank(src, hs, cfg, 3);
  for (Index r = 0; r < bank.vectors.rows(); ++r) {
    const Index n1 = bank.provenance[static_cast<std::size_t>(r)].first;
    CHECK((bank.vectors.row(r) - src.row(n1)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("cutmix equals dropmix with lambda 0 bitwise under a shared seed") {
  Matrix src = testing::random_matrix(7, 12, 51);
  auto hs = uniform_hard_sets(7, {0, 1, 5, 6});
  MixConfig cut;
  cut.mode = MixMode::kCutmix;
  cut.gamma = 0.4;
  cut.lambda = 0.9;  // must be ignored by cutmix
  cut.synth_per_anchor = 10;
  MixConfig dm = cut;
  dm.mode = MixMode::kDropmix;
  dm.lambda = 0.0;

  NegativeBank a = synthesize_bank(src, hs, cut, 13);
  NegativeBank b = synthesize_bank(src, hs, dm, 13);
  CHECK((a.vectors - b.vectors).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cutmix changes exactly round(gamma*k) positions") {
  // Sources drawn from disjoint ranges differ in every coordinate.
  Matrix src(4, 128);
  src.row(0) = testing::random_matrix(1, 128, 61, 0.0, 1.0);
  src.row(1) = testing::random_matrix(1, 128, 62, 2.0, 3.0);
  src.row(2) = testing::random_matrix(1, 128, 63, 4.0, 5.0);
  src.row(3) = testing::random_matrix(1, 128, 64, 6.0, 7.0);
  auto hs = uniform_hard_sets(4, {0, 1, 2, 3});
  MixConfig cfg;
  cfg.mode = MixMode::kCutmix;
  cfg.gamma = 0.3;
  cfg.synth_per_anchor = 25;
  NegativeBank bank = synthesize_bank(src, hs, cfg, 7);
  for (Index r = 0; r < bank.vectors.rows(); ++r) {
    const Index n1 = bank.provenance[static_cast<std::size_t>(r)].first;
    const Index changed =
        (bank.vectors.row(r).array() != src.row(n1).array()).count();
    CHECK(changed == 38);
  }
}

TEST_CASE("convexity and support bounds hold for every mode") {
  Matrix src = testing::random_matrix(6, 20, 71);
  auto hs = uniform_hard_sets(6, {0, 1, 2, 3, 4, 5});
  for (MixMode mode : {MixMode::kMixup, MixMode::kCutmix, MixMode::kDropmix}) {
    MixConfig cfg;
    cfg.mode = mode;
    cfg.gamma = 0.35;
    cfg.lambda = 0.25;
    cfg.synth_per_anchor = 15;
    NegativeBank bank = synthesize_bank(src, hs, cfg, 17);
    const Index m = static_cast<Index>(std::llround(0.35 * 20));
    for (Index r = 0; r < bank.vectors.rows(); ++r) {
      const auto& prov = bank.provenance[static_cast<std::size_t>(r)];
      const auto h1 = src.row(prov.first).array();
      const auto h2 = src.row(prov.second).array();
      const auto hn = bank.vectors.row(r).array();
      CHECK((hn >= h1.min(h2) - 1e-15).all());
      CHECK((hn <= h1.max(h2) + 1e-15).all());
      if (mode != MixMode::kMixup) {
        const Index changed = (hn != h1).count();
        CHECK(changed <= m);
      }
      CHECK(prov.first != prov.second);
    }
  }
}

TEST_CASE("bank synthesis is deterministic and validates hard sets") {
  Matrix src = testing::random_matrix(5, 6, 81);
  auto hs = uniform_hard_sets(5, {1, 2, 3});
  MixConfig cfg;
  cfg.synth_per_anchor = 9;
  NegativeBank a = synthesize_bank(src, hs, cfg, 23);
  NegativeBank b = synthesize_bank(src, hs, cfg, 23);
  CHECK((a.vectors - b.vectors).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.n_anchors() == 5);

  // Pair sources always come from the anchor's hard set.
  for (const auto& prov : a.provenance) {
    CHECK(std::set<Index>({1, 2, 3}).count(prov.first) == 1);
    CHECK(std::set<Index>({1, 2, 3}).count(prov.second) == 1);
  }

  auto tiny = uniform_hard_sets(5, {2});
  CHECK_THROWS_AS(synthesize_bank(src, tiny, cfg, 1), DataError);
  cfg.lambda = 2.0;
  CHECK_THROWS_AS(synthesize_bank(src, hs, cfg, 1), ConfigError);
}

TEST_CASE("bank dump lists provenance") {
  Matrix src = testing::random_matrix(3, 4, 91);
  auto hs = uniform_hard_sets(3, {0, 1, 2});
  MixConfig cfg;
  cfg.synth_per_anchor = 2;
  NegativeBank bank = synthesize_bank(src, hs, cfg, 29);
  std::ostringstream out;
  dump_bank_csv(bank, cfg, out);
  const std::string text = out.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 6);
  CHECK(text.find("dropmix") != std::string::npos);
}
