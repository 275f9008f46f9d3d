#include "addrkit/embedder.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "gradcheck.hpp"

using namespace addrkit;

namespace {

const World& small_world() {
  static World w = [] {
    WorldParams p;
    p.seed = 21;
    p.branching = {2, 2, 2, 2, 2, 2};
    return generate_world(p);
  }();
  return w;
}

SpatialEncoder fresh_encoder(const World& w, std::uint64_t seed, EmbedderConfig cfg = {}) {
  SpatialEncoder enc(w.lexicon.size(), cfg);
  Rng rng(seed);
  enc.init(rng);
  return enc;
}

std::vector<EmbedSample> coordinate_samples(const World& w) {
  std::vector<EmbedSample> out;
  const double side = 10000.0;
  for (const auto& rec : w.records)
    out.push_back({w.lexicon.tokenize(rec.text), rec.coordinate.x / side, rec.coordinate.y / side});
  return out;
}

std::vector<GeoRefSample> reference_samples(const World& w) {
  std::vector<GeoRefSample> out;
  for (const auto& rec : w.records) out.push_back({w.lexicon.tokenize(rec.text), rec.coordinate});
  return out;
}

const World& big_world() {
  static World w = generate_world(WorldParams{});  // 486 leaves
  return w;
}

// trained once, shared by the correlation and monotonicity tests
const SpatialEncoder& trained_encoder() {
  static SpatialEncoder enc = [] {
    SpatialEncoder e(big_world().lexicon.size(), EmbedderConfig{});
    Rng rng(11);
    e.init(rng);
    EmbedderTrainConfig cfg;
    cfg.phase1_epochs = 2;
    cfg.phase2_epochs = 12;
    cfg.seed = 3;
    train_embedder(e, coordinate_samples(big_world()), cfg);
    return e;
  }();
  return enc;
}

}  // namespace

TEST(SpatialEncoder, EmbeddingIsUnitLengthAndDeterministic) {
  const World& w = small_world();
  SpatialEncoder enc = fresh_encoder(w, 5);
  for (int i = 0; i < 10; ++i) {
    const Vec e = enc.embed_text(w.lexicon, w.records[i * 3].text);
    EXPECT_NEAR(e.norm(), 1.0, 1e-9);
    const Vec again = enc.embed_text(w.lexicon, w.records[i * 3].text);
    EXPECT_EQ((e - again).norm(), 0.0);
  }
  EXPECT_EQ(enc.embed({}).norm(), 0.0);
  EXPECT_NEAR(cosine(enc.embed({}), enc.embed({1})), 0.0, 0.0);
}

TEST(SpatialEncoder, IgnoresTokensBeyondWindow) {
  const World& w = small_world();
  EmbedderConfig cfg;
  cfg.max_len = 6;
  SpatialEncoder enc = fresh_encoder(w, 6, cfg);
  std::vector<int> toks = w.lexicon.tokenize(w.records[0].text);
  ASSERT_GT(static_cast<int>(toks.size()), 6);
  std::vector<int> head(toks.begin(), toks.begin() + 6);
  EXPECT_EQ((enc.embed(toks) - enc.embed(head)).norm(), 0.0);
}

TEST(SpatialEncoder, RejectsOutOfVocabularyTokens) {
  const World& w = small_world();
  SpatialEncoder enc = fresh_encoder(w, 7);
  EXPECT_THROW(enc.embed({-1}), std::invalid_argument);
  EXPECT_THROW(enc.embed({w.lexicon.size()}), std::invalid_argument);
}

TEST(SpatialEncoder, PredictionGradientsMatchFiniteDifferences) {
  const World& w = small_world();
  SpatialEncoder enc = fresh_encoder(w, 8);
  const std::vector<EmbedSample> all = coordinate_samples(w);
  const std::vector<EmbedSample> samples(all.begin(), all.begin() + 3);
  auto loss = [&] {
    double total = 0.0;
    for (const auto& s : samples) {
      const Vec pred = enc.predict(s.tokens);
      total += (pred(0) - s.nx) * (pred(0) - s.nx) + (pred(1) - s.ny) * (pred(1) - s.ny);
    }
    return total;
  };
  enc.params().zero_grad();
  for (const auto& s : samples) {
    SpatialEncoder::Cache cache;
    const Vec pred = enc.predict(s.tokens, &cache);
    Vec err(2);
    err << pred(0) - s.nx, pred(1) - s.ny;
    enc.backward(cache, 2.0 * err);
  }
  std::vector<double> analytic = enc.params().grads();
  Rng rng(99);
  auto res = addrkit::testing::run_gradcheck(enc.params(), loss, analytic, 14, rng);
  EXPECT_GE(res.checked, 14);
  EXPECT_LT(res.max_rel, 1e-4);
}

TEST(SpatialEncoder, TrainingLossGradientsMatchFiniteDifferences) {
  const World& w = small_world();
  SpatialEncoder enc = fresh_encoder(w, 15);
  const std::vector<EmbedSample> all = coordinate_samples(w);
  const std::vector<EmbedSample> samples(all.begin(), all.begin() + 4);
  auto loss = [&] {
    double total = 0.0;
    for (const auto& s : samples) total += enc.train_loss(s);
    return total;
  };
  enc.params().zero_grad();
  for (const auto& s : samples) enc.train_backward(s, 1.0);
  std::vector<double> analytic = enc.params().grads();
  Rng rng(101);
  auto res = addrkit::testing::run_gradcheck(enc.params(), loss, analytic, 14, rng);
  EXPECT_GE(res.checked, 14);
  EXPECT_LT(res.max_rel, 1e-4);
}

TEST(SpatialEncoder, TwoPhaseTrainingFreezesEncoderFirst) {
  const World& w = small_world();
  SpatialEncoder enc = fresh_encoder(w, 9);
  EmbedderTrainConfig cfg;
  cfg.phase1_epochs = 4;
  cfg.phase2_epochs = 4;
  cfg.seed = 2;
  const auto report = train_embedder(enc, coordinate_samples(w), cfg);
  // phase 1 may only move the head
  EXPECT_EQ(report.enc_checksum_init, report.enc_checksum_after_phase1);
  EXPECT_NE(report.enc_checksum_after_phase1, report.enc_checksum_final);
  ASSERT_EQ(static_cast<int>(report.phase1_loss.size()), 4);
  ASSERT_EQ(static_cast<int>(report.phase2_loss.size()), 4);
  EXPECT_LT(report.phase1_loss.back(), report.phase1_loss.front());
  EXPECT_LT(report.phase2_loss.back(), report.phase1_loss.back());
  EXPECT_THROW(train_embedder(enc, {}, cfg), ConfigError);
}

TEST(SpatialEncoder, TrainingImprovesDistanceCorrelation) {
  const World& w = big_world();
  SpatialEncoder control(w.lexicon.size(), EmbedderConfig{});
  Rng rng(11);
  control.init(rng);

  const auto before = correlation_report(control, w, 1500, 7);
  EXPECT_LE(before.r2, 0.1) << "untrained control should not explain distance";

  const auto after = correlation_report(trained_encoder(), w, 1500, 7);
  EXPECT_GE(after.r2, 0.6) << "cosine dissimilarity should track distance after training";
  EXPECT_GT(after.slope, 0.0);
  EXPECT_LT(after.mse, before.mse);
  EXPECT_EQ(after.pairs, 1500);
}

TEST(SpatialEncoder, NearbyAddressesScoreHigherThanFarOnes) {
  const World& w = big_world();
  const SpatialEncoder& enc = trained_encoder();
  const auto refs = reference_samples(w);
  std::vector<Vec> embs(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) embs[i] = enc.embed(refs[i].tokens);

  Rng rng(17);
  int agree = 0, total = 0;
  while (total < 300) {
    const std::size_t a = rng.uniform_int(refs.size());
    const std::size_t n = rng.uniform_int(refs.size());
    const std::size_t f = rng.uniform_int(refs.size());
    if (a == n || a == f || n == f) continue;
    const double dn = distance(refs[a].coordinate, refs[n].coordinate);
    const double df = distance(refs[a].coordinate, refs[f].coordinate);
    if (dn >= df / 4.0) continue;
    ++total;
    if (cosine(embs[a], embs[n]) > cosine(embs[a], embs[f])) ++agree;
  }
  EXPECT_GE(agree, 240) << "expected sim(a,near) > sim(a,far) in at least 80% of triples, got "
                        << agree << "/300";
}

TEST(SpatialEncoder, HeadOnFrozenEncoderBeatsCentroidBaseline) {
  const World& w = small_world();
  SpatialEncoder enc = fresh_encoder(w, 23);
  const auto samples = coordinate_samples(w);

  // predicting the sample centroid is the no-information floor
  double mx = 0, my = 0, mz = 0;
  for (const auto& s : samples) {
    mx += s.nx;
    my += s.ny;
    mz += lift_height(s.nx, s.ny);
  }
  mx /= samples.size();
  my /= samples.size();
  mz /= samples.size();
  double baseline = 0;
  for (const auto& s : samples) {
    const double dz = lift_height(s.nx, s.ny) - mz;
    baseline += (s.nx - mx) * (s.nx - mx) + (s.ny - my) * (s.ny - my) + dz * dz;
  }
  baseline /= samples.size();

  EmbedderTrainConfig cfg;
  cfg.phase1_epochs = 10;
  cfg.phase2_epochs = 0;
  cfg.seed = 5;
  const auto report = train_embedder(enc, samples, cfg);
  EXPECT_EQ(report.enc_checksum_init, report.enc_checksum_final);
  double final_loss = 0;
  for (const auto& s : samples) final_loss += enc.train_loss(s);
  final_loss /= samples.size();
  EXPECT_LT(final_loss, baseline)
      << "a head trained on a frozen random encoder should beat the centroid";
}

TEST(SpatialEncoder, CorrelationReportValidatesInputAndHandlesDegenerateClouds) {
  const World& w = small_world();
  SpatialEncoder enc = fresh_encoder(w, 12);
  const auto refs = reference_samples(w);
  EXPECT_THROW(correlation_report(enc, {refs[0]}, 100, 1), ConfigError);
  EXPECT_THROW(correlation_report(enc, refs, 1, 1), ConfigError);

  // identical texts everywhere -> zero variance in dissimilarity -> no fit
  std::vector<GeoRefSample> flat;
  for (int i = 0; i < 8; ++i) flat.push_back({refs[0].tokens, {100.0 * i, 0.0}});
  EXPECT_THROW(correlation_report(enc, flat, 50, 1), DomainFailure);

  // two pairs always sit on their own fitted line
  const auto two = correlation_report(enc, refs, 2, 3);
  EXPECT_EQ(two.r2, 1.0);
  EXPECT_EQ(two.mse, 0.0);

  std::vector<std::pair<double, double>> scatter;
  correlation_report(enc, refs, 64, 5, &scatter);
  EXPECT_EQ(static_cast<int>(scatter.size()), 64);
  for (const auto& [x, y] : scatter) {
    EXPECT_GE(x, -1e-12);
    EXPECT_LE(x, 2.0 + 1e-12);
    EXPECT_GE(y, 0.0);
  }
}

TEST(SpatialEncoder, CheckpointRoundTripReproducesEmbeddings) {
  const World& w = small_world();
  SpatialEncoder enc = fresh_encoder(w, 13);
  const std::string path =
      (std::filesystem::temp_directory_path() / "addrkit_encoder_ckpt.bin").string();

  CheckpointHeader hdr;
  hdr.kind = "encoder";
  hdr.vocab_hash = w.lexicon.vocab_hash();
  hdr.config_json = enc.config_json();
  save_checkpoint(path, hdr, enc.params());

  const CheckpointHeader peeked = peek_checkpoint(path);
  SpatialEncoder loaded(w.lexicon.size(), SpatialEncoder::config_from_json(peeked.config_json));
  load_checkpoint(path, "encoder", loaded.params());

  const std::vector<int> toks = w.lexicon.tokenize(w.records[5].text);
  EXPECT_EQ((enc.embed(toks) - loaded.embed(toks)).norm(), 0.0);
  EXPECT_EQ(enc.params().checksum(), loaded.params().checksum());
  std::filesystem::remove(path);
}
