#include "addrkit/data.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "addrkit/address.hpp"

using namespace addrkit;

namespace {

const World& default_world() {
  static World w = generate_world(WorldParams{});
  return w;
}

DataConfig small_config() {
  DataConfig c;
  c.parsing_n = 400;
  c.completion_n = 400;
  c.rewriting_n = 1000;
  c.alignment_n = 200;
  c.geocoding_n = 400;
  c.test_n = 300;
  return c;
}

const Datasets& small_datasets() {
  static Datasets d = build_datasets(default_world(), small_config(), 7);
  return d;
}

}  // namespace

TEST(Datasets, TrainTestRecordPoolsDisjointAndComplete) {
  const auto& d = small_datasets();
  const World& w = default_world();
  std::set<int> train(d.train_records.begin(), d.train_records.end());
  std::set<int> test(d.test_records.begin(), d.test_records.end());
  EXPECT_EQ(train.size() + test.size(), static_cast<std::size_t>(w.record_count()));
  for (int id : test) EXPECT_FALSE(train.count(id));
  long long expect_test = std::llround(w.record_count() * small_config().test_record_fraction);
  EXPECT_EQ(static_cast<long long>(test.size()), expect_test);
}

TEST(Datasets, SamplesDrawOnlyFromTheirPool) {
  const auto& d = small_datasets();
  std::set<int> train(d.train_records.begin(), d.train_records.end());
  std::set<int> test(d.test_records.begin(), d.test_records.end());
  for (const auto& s : d.parsing) EXPECT_TRUE(train.count(*s.record_id));
  for (const auto& s : d.rewriting) EXPECT_TRUE(train.count(*s.record_id));
  for (const auto& s : d.alignment) EXPECT_TRUE(train.count(*s.record_id));
  for (const auto& s : d.geocoding) EXPECT_TRUE(train.count(*s.record_id));
  for (const auto& s : d.test_rewrite) EXPECT_TRUE(test.count(*s.record_id));
  for (const auto& s : d.test_completion) EXPECT_TRUE(test.count(*s.record_id));
}

TEST(Datasets, IdentityPairCountIsExact) {
  const auto& d = small_datasets();
  int identity = 0;
  for (const auto& s : d.rewriting) identity += s.input_text == s.target_text ? 1 : 0;
  EXPECT_EQ(identity, 778);  // llround(1000 * 0.778)
  for (const auto& s : d.rewriting) {
    if (s.input_text != s.target_text) EXPECT_FALSE(s.error_type.empty());
  }
}

TEST(Datasets, ParsingTargetsEncodeAllTiers) {
  const auto& d = small_datasets();
  const World& w = default_world();
  for (const auto& s : d.parsing) {
    const auto& rec = w.records[*s.record_id];
    EXPECT_EQ(s.target_text, parsing_target(rec));
    EXPECT_EQ(s.target_text.rfind("[1]", 0), 0u);
    for (int t = 1; t <= kTiers; ++t)
      EXPECT_NE(s.target_text.find(rec.components[t - 1]), std::string::npos);
  }
}

TEST(Datasets, CompletionDropsOneRegionTier) {
  const auto& d = small_datasets();
  const World& w = default_world();
  for (const auto& s : d.completion) {
    const auto& rec = w.records[*s.record_id];
    EXPECT_EQ(s.target_text, rec.text);
    ParsedAddress p = parse(w, s.input_text);
    auto missing = p.missing_tiers();
    ASSERT_EQ(missing.size(), 1u);
    EXPECT_LE(missing[0], 3);
  }
}

TEST(Datasets, AlignmentSamplesAreCorruptedWithDelivery) {
  const auto& d = small_datasets();
  const World& w = default_world();
  for (const auto& s : d.alignment) {
    const auto& rec = w.records[*s.record_id];
    EXPECT_NE(s.input_text, rec.text);
    EXPECT_FALSE(s.error_type.empty());
    ASSERT_TRUE(s.delivery.has_value());
    EXPECT_TRUE(w.in_bounds(*s.delivery));
    EXPECT_TRUE(s.target_text.empty());
  }
}

TEST(Datasets, GeocodingTargetsAreExactRecordCoordinates) {
  const auto& d = small_datasets();
  const World& w = default_world();
  int corrupted = 0;
  for (const auto& s : d.geocoding) {
    const auto& rec = w.records[*s.record_id];
    ASSERT_TRUE(s.delivery.has_value());
    EXPECT_EQ(s.delivery->x, rec.coordinate.x);
    EXPECT_EQ(s.delivery->y, rec.coordinate.y);
    corrupted += s.input_text != rec.text ? 1 : 0;
  }
  // mix of canonical / alias / corrupted inputs
  EXPECT_GT(corrupted, static_cast<int>(d.geocoding.size()) / 4);
  EXPECT_LT(corrupted, static_cast<int>(d.geocoding.size()));
}

TEST(Datasets, TestRewriteShape) {
  const auto& d = small_datasets();
  const World& w = default_world();
  int abnormal = 0;
  for (const auto& s : d.test_rewrite) {
    const auto& rec = w.records[*s.record_id];
    EXPECT_EQ(s.target_text, rec.text);
    ASSERT_TRUE(s.delivery.has_value());
    ASSERT_TRUE(s.station_id.has_value());
    EXPECT_EQ(*s.station_id, station_of(w, *s.delivery));
    if (s.abnormal) {
      ++abnormal;
      EXPECT_NE(s.input_text, rec.text);
      EXPECT_FALSE(s.error_type.empty());
    } else {
      EXPECT_EQ(s.input_text, rec.text);
    }
  }
  EXPECT_EQ(abnormal, 30);  // llround(300 * 0.10)
}

TEST(Datasets, DeterministicForSeed) {
  const World& w = default_world();
  Datasets a = build_datasets(w, small_config(), 21);
  Datasets b = build_datasets(w, small_config(), 21);
  ASSERT_EQ(a.rewriting.size(), b.rewriting.size());
  for (std::size_t i = 0; i < a.rewriting.size(); ++i)
    EXPECT_EQ(sample_to_json_line(a.rewriting[i]), sample_to_json_line(b.rewriting[i]));
  Datasets c = build_datasets(w, small_config(), 22);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.rewriting.size() && i < c.rewriting.size(); ++i)
    any_diff |= a.rewriting[i].input_text != c.rewriting[i].input_text;
  EXPECT_TRUE(any_diff);
}

TEST(Datasets, JsonlRoundTrip) {
  const auto& d = small_datasets();
  for (const auto& s : d.test_rewrite) {
    RewriteSample back = sample_from_json_line(sample_to_json_line(s));
    EXPECT_EQ(back.task, s.task);
    EXPECT_EQ(back.input_text, s.input_text);
    EXPECT_EQ(back.target_text, s.target_text);
    EXPECT_EQ(back.abnormal, s.abnormal);
    EXPECT_EQ(back.error_type, s.error_type);
    ASSERT_EQ(back.delivery.has_value(), s.delivery.has_value());
    EXPECT_EQ(back.delivery->x, s.delivery->x);
    EXPECT_EQ(back.delivery->y, s.delivery->y);
    EXPECT_EQ(back.station_id, s.station_id);
    EXPECT_EQ(back.record_id, s.record_id);
  }
  EXPECT_THROW(sample_from_json_line("{"), IoError);
  EXPECT_THROW(sample_from_json_line("{\"task\":\"x\"}"), IoError);
}

TEST(Datasets, SaveLoadRoundTrip) {
  const auto& d = small_datasets();
  std::string dir = testing::TempDir() + "/addrkit_data_test";
  ArtifactMeta meta;
  meta.stages["world"] = "00";
  meta.stages["data"] = "11";
  save_datasets(d, small_config(), dir, meta);
  ArtifactMeta back_meta;
  Datasets back = load_datasets(dir, &back_meta);
  EXPECT_EQ(back_meta.stages.at("data"), "11");
  EXPECT_EQ(back.train_records, d.train_records);
  EXPECT_EQ(back.test_records, d.test_records);
  ASSERT_EQ(back.test_rewrite.size(), d.test_rewrite.size());
  for (std::size_t i = 0; i < d.test_rewrite.size(); ++i)
    EXPECT_EQ(sample_to_json_line(back.test_rewrite[i]),
              sample_to_json_line(d.test_rewrite[i]));
  std::filesystem::remove_all(dir);
}

TEST(Datasets, EmptyPoolRejected) {
  const World& w = default_world();
  Rng rng(1);
  EXPECT_THROW(build_parsing(w, {}, 10, 0.3, rng), ConfigError);
  DataConfig bad = small_config();
  bad.identity_ratio = 1.5;
  EXPECT_THROW(build_datasets(w, bad, 1), ConfigError);
}
