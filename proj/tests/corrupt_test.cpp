#include "addrkit/corrupt.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

#include "addrkit/address.hpp"

using namespace addrkit;

namespace {

const World& default_world() {
  static World w = generate_world(WorldParams{});
  return w;
}

int levenshtein(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

TEST(Corrupt, NeverReturnsCanonicalText) {
  const World& w = default_world();
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const auto& rec = w.records[rng.uniform_int(w.record_count())];
    auto c = corrupt(w, rec, sample_error_type(rng), rng);
    EXPECT_NE(c.text, rec.text);
    EXPECT_EQ(c.record_id, rec.id);
  }
}

TEST(Corrupt, DeterministicForSeed) {
  const World& w = default_world();
  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) {
    auto ca = corrupt(w, w.records[i], ErrorType::irrelevant_words, a);
    auto cb = corrupt(w, w.records[i], ErrorType::irrelevant_words, b);
    EXPECT_EQ(ca.text, cb.text);
  }
}

TEST(Corrupt, MissingRegionDropsExactlyOneRegionTier) {
  const World& w = default_world();
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const auto& rec = w.records[rng.uniform_int(w.record_count())];
    auto c = corrupt(w, rec, ErrorType::missing_region, rng);
    ParsedAddress p = parse(w, c.text);
    auto missing = p.missing_tiers();
    ASSERT_EQ(missing.size(), 1u) << c.text;
    EXPECT_LE(missing[0], 3);
    for (int t = 1; t <= kTiers; ++t)
      if (t != missing[0]) EXPECT_EQ(p.components[t - 1], rec.components[t - 1]);
  }
}

TEST(Corrupt, NestedAddressAppendsForeignRegionPrefix) {
  const World& w = default_world();
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto& rec = w.records[rng.uniform_int(w.record_count())];
    auto c = corrupt(w, rec, ErrorType::nested_address, rng);
    EXPECT_EQ(c.text.rfind(rec.text, 0), 0u);  // own text is a prefix
    ParsedAddress p = parse(w, c.text);
    EXPECT_TRUE(p.contradictory());
    EXPECT_TRUE(p.duplicate_tiers.count(1));  // provinces are globally unique names
    EXPECT_FALSE(geocode(w, c.text).has_value());
  }
}

TEST(Corrupt, AliasKeepsStandardness) {
  const World& w = default_world();
  Rng rng(4);
  int applied = 0;
  for (int i = 0; i < 300; ++i) {
    const auto& rec = w.records[rng.uniform_int(w.record_count())];
    auto c = corrupt(w, rec, ErrorType::alias, rng);
    if (c.applied != ErrorType::alias) continue;  // record had no aliased component
    ++applied;
    EXPECT_TRUE(is_standard(w, c.text)) << c.text;
    ParsedAddress p = parse(w, c.text);
    for (int t = 1; t <= kTiers; ++t) EXPECT_EQ(p.components[t - 1], rec.components[t - 1]);
  }
  EXPECT_GT(applied, 50);  // default alias rate covers most records
}

TEST(Corrupt, AliasFallsBackToMisspelling) {
  WorldParams p;
  p.alias_rate = 0.0;
  World w = generate_world(p);
  Rng rng(5);
  auto c = corrupt(w, w.records[0], ErrorType::alias, rng);
  EXPECT_EQ(c.applied, ErrorType::misspelling);
  EXPECT_NE(c.text, w.records[0].text);
}

TEST(Corrupt, IrrelevantWordsAddParenthesizedRemark) {
  const World& w = default_world();
  Rng rng(6);
  int poi_conflicts = 0;
  for (int i = 0; i < 300; ++i) {
    const auto& rec = w.records[rng.uniform_int(w.record_count())];
    auto c = corrupt(w, rec, ErrorType::irrelevant_words, rng);
    EXPECT_NE(c.text.find('('), std::string::npos);
    EXPECT_NE(c.text.find(')'), std::string::npos);
    EXPECT_FALSE(is_standard(w, c.text)) << c.text;
    ParsedAddress p = parse(w, c.text);
    if (p.duplicate_tiers.count(5)) ++poi_conflicts;
  }
  // the poi-slot templates inject a conflicting tier-5 name a fair share of the time
  EXPECT_GT(poi_conflicts, 40);
}

TEST(Corrupt, MisspellingStaysWithinEditDistanceTwo) {
  const World& w = default_world();
  Rng rng(7);
  for (int i = 0; i < 300; ++i) {
    const auto& rec = w.records[rng.uniform_int(w.record_count())];
    auto c = corrupt(w, rec, ErrorType::misspelling, rng);
    int d = levenshtein(c.text, rec.text);
    EXPECT_GE(d, 1) << c.text;
    EXPECT_LE(d, 2) << c.text;
  }
}

TEST(ErrorTypes, StringRoundTrip) {
  for (int i = 0; i < kNumErrorTypes; ++i) {
    auto t = static_cast<ErrorType>(i);
    EXPECT_EQ(error_type_from_string(to_string(t)), t);
  }
  EXPECT_THROW(error_type_from_string("typo"), std::invalid_argument);
}

TEST(ErrorTypes, SamplerMatchesPublishedWeights) {
  // chi-square goodness of fit against the normalized taxonomy frequencies;
  // df = 4, critical value 13.2767 at the 0.01 significance level
  Rng rng(123);
  const int n = 100000;
  std::array<int, kNumErrorTypes> counts{};
  for (int i = 0; i < n; ++i) counts[static_cast<int>(sample_error_type(rng))]++;
  double wsum = 0.0;
  for (double v : kErrorWeights) wsum += v;
  double chi2 = 0.0;
  for (int i = 0; i < kNumErrorTypes; ++i) {
    double expect = n * kErrorWeights[i] / wsum;
    double diff = counts[i] - expect;
    chi2 += diff * diff / expect;
  }
  EXPECT_LT(chi2, 13.2767);
}

TEST(ErrorTypes, CustomWeightsRespected) {
  Rng rng(9);
  std::array<double, kNumErrorTypes> w{0.0, 0.0, 1.0, 0.0, 0.0};
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_error_type(rng, w), ErrorType::alias);
}

TEST(Fillers, PoolShape) {
  const auto& pool = filler_templates();
  EXPECT_EQ(pool.size(), 20u);
  int slots = 0;
  for (const auto& f : pool) slots += f.poi_slot ? 1 : 0;
  EXPECT_EQ(slots, 8);
}
