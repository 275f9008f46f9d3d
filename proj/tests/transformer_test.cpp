#include "addrkit/transformer.hpp"

#include <gtest/gtest.h>

#include "gradcheck.hpp"

using namespace addrkit;

namespace {

TrunkConfig tiny_config() {
  TrunkConfig cfg;
  cfg.vocab = 11;
  cfg.d_model = 16;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_ff = 24;
  cfg.max_len = 32;
  return cfg;
}

struct TrunkFixture {
  ParamStore store;
  Trunk trunk;
  explicit TrunkFixture(const TrunkConfig& cfg) : trunk(store, "t.", cfg) {
    store.allocate();
    Rng rng(99);
    trunk.init(rng);
  }
};

std::vector<int> random_tokens(Rng& rng, int vocab, int n) {
  std::vector<int> t(n);
  for (int& x : t) x = static_cast<int>(rng.uniform_int(vocab));
  return t;
}

}  // namespace

TEST(Trunk, RejectsBadConfigAndInput) {
  ParamStore s1;
  TrunkConfig bad = tiny_config();
  bad.d_model = 15;  // not divisible by heads
  EXPECT_THROW(Trunk(s1, "t.", bad), ConfigError);
  ParamStore s2;
  TrunkConfig none = tiny_config();
  none.vocab = 0;
  EXPECT_THROW(Trunk(s2, "t.", none), ConfigError);

  TrunkFixture f(tiny_config());
  EXPECT_THROW(f.trunk.forward({}, nullptr), std::invalid_argument);
  EXPECT_THROW(f.trunk.forward({0, 11}, nullptr), std::invalid_argument);
  EXPECT_THROW(f.trunk.forward({-1}, nullptr), std::invalid_argument);
  std::vector<int> too_long(33, 1);
  EXPECT_THROW(f.trunk.forward(too_long, nullptr), std::invalid_argument);
}

TEST(Trunk, ForwardIsDeterministicWithExpectedShape) {
  TrunkFixture f(tiny_config());
  const std::vector<int> toks = {1, 4, 7, 2, 2, 9};
  Mat a = f.trunk.forward(toks, nullptr);
  Mat b = f.trunk.forward(toks, nullptr);
  EXPECT_EQ(a.rows(), 16);
  EXPECT_EQ(a.cols(), 6);
  EXPECT_EQ((a - b).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Trunk, CausalMaskBlocksFutureTokens) {
  TrunkFixture f(tiny_config());
  std::vector<int> t1 = {3, 5, 1, 8, 2, 6, 6};
  std::vector<int> t2 = t1;
  t2[4] = 9;  // change position 4 only
  Mat h1 = f.trunk.forward(t1, nullptr);
  Mat h2 = f.trunk.forward(t2, nullptr);
  for (int c = 0; c < 4; ++c)
    EXPECT_EQ((h1.col(c) - h2.col(c)).cwiseAbs().maxCoeff(), 0.0) << "column " << c;
  EXPECT_GT((h1.col(4) - h2.col(4)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Trunk, EarlierPositionsAttendedDifferentlyByDistance) {
  // same key token at two distances from the query must not contribute
  // identically (the additive distance penalty is active)
  TrunkFixture f(tiny_config());
  // sequences where the duplicate key sits near vs. far from the last position
  Mat near_h = f.trunk.forward({5, 1, 1, 1, 7, 3}, nullptr);
  Mat far_h = f.trunk.forward({3, 1, 1, 1, 7, 5}, nullptr);
  EXPECT_GT((near_h.col(5) - far_h.col(5)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Trunk, PrefillAndStepMatchFullForward) {
  TrunkFixture f(tiny_config());
  Rng rng(5);
  for (int round = 0; round < 4; ++round) {
    const std::vector<int> toks = random_tokens(rng, 11, 3 + static_cast<int>(rng.uniform_int(8)));
    Mat full = f.trunk.forward(toks, nullptr);

    Trunk::StepState st = f.trunk.make_state();
    Mat pre = f.trunk.prefill(st, toks);
    ASSERT_EQ(pre.cols(), full.cols());
    EXPECT_LT((pre - full).cwiseAbs().maxCoeff(), 1e-10);

    // token-by-token path
    Trunk::StepState st2 = f.trunk.make_state();
    for (std::size_t i = 0; i < toks.size(); ++i) {
      Vec y = f.trunk.step(st2, toks[i]);
      EXPECT_LT((y - full.col(i)).cwiseAbs().maxCoeff(), 1e-10) << "pos " << i;
    }

    // split prefill: half batch, half incremental
    Trunk::StepState st3 = f.trunk.make_state();
    const std::size_t half = toks.size() / 2;
    std::vector<int> head(toks.begin(), toks.begin() + half);
    if (!head.empty()) f.trunk.prefill(st3, head);
    for (std::size_t i = half; i < toks.size(); ++i) {
      Vec y = f.trunk.step(st3, toks[i]);
      EXPECT_LT((y - full.col(i)).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(Trunk, BackwardMatchesCentralDifferences) {
  TrunkFixture f(tiny_config());
  Rng rng(123);
  addrkit::testing::jitter_params(f.store, rng, 0.03);

  const std::vector<int> toks = {2, 9, 4, 4, 0, 7, 1, 10};
  const int t_len = static_cast<int>(toks.size());
  Mat seed(16, t_len);
  for (int j = 0; j < t_len; ++j)
    for (int i = 0; i < 16; ++i) seed(i, j) = rng.gaussian();

  auto loss = [&]() { return (f.trunk.forward(toks, nullptr).array() * seed.array()).sum(); };
  f.store.zero_grad();
  Trunk::Cache cache;
  f.trunk.forward(toks, &cache);
  f.trunk.backward(cache, seed);
  const std::vector<double> analytic = f.store.grads();

  auto res = addrkit::testing::run_gradcheck(f.store, loss, analytic, 16, rng);
  EXPECT_EQ(res.checked, 16);
  EXPECT_LT(res.max_rel, 1e-4);
}

TEST(Trunk, BackwardAccumulatesAcrossCalls) {
  TrunkFixture f(tiny_config());
  const std::vector<int> toks = {1, 2, 3};
  Mat seed = Mat::Ones(16, 3);

  f.store.zero_grad();
  Trunk::Cache c1;
  f.trunk.forward(toks, &c1);
  f.trunk.backward(c1, seed);
  const std::vector<double> once = f.store.grads();

  f.store.zero_grad();
  Trunk::Cache c2;
  f.trunk.forward(toks, &c2);
  f.trunk.backward(c2, seed);
  f.trunk.backward(c2, seed);
  for (std::size_t i = 0; i < once.size(); ++i)
    EXPECT_NEAR(f.store.grads()[i], 2.0 * once[i], 1e-12 + 1e-9 * std::abs(once[i]));
}
