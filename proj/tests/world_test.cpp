#include "addrkit/world.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <map>
#include <set>

using namespace addrkit;

namespace {

const World& default_world() {
  static World w = generate_world(WorldParams{});
  return w;
}

// oracle: a boundary point belongs to the smallest station id whose closed
// rectangle contains it
int station_oracle(const World& w, const Coordinate& c) {
  int best = -1;
  for (const auto& s : w.stations)
    if (s.region.contains(c) && (best < 0 || s.id < best)) best = s.id;
  return best;
}

}  // namespace

TEST(WorldGen, DeterministicForSeed) {
  WorldParams p;
  p.seed = 77;
  World a = generate_world(p);
  World b = generate_world(p);
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  EXPECT_EQ(a.lexicon.vocab_hash(), b.lexicon.vocab_hash());
  p.seed = 78;
  World c = generate_world(p);
  EXPECT_NE(a.fingerprint(), c.fingerprint());
}

TEST(WorldGen, TreeShapeMatchesBranching) {
  const World& w = default_world();
  std::array<int, kTiers> count{};
  for (const auto& n : w.nodes) count[n.tier - 1]++;
  long long expect = 1;
  for (int t = 0; t < kTiers; ++t) {
    expect *= w.params.branching[t];
    EXPECT_EQ(count[t], expect) << "tier " << t + 1;
  }
  EXPECT_EQ(w.record_count(), static_cast<int>(expect));
  for (const auto& r : w.records) {
    EXPECT_EQ(w.nodes[r.leaf_node].record_id, r.id);
    EXPECT_EQ(w.nodes[r.leaf_node].tier, kTiers);
  }
}

TEST(WorldGen, CoordinatesInsideEveryAncestorRegion) {
  const World& w = default_world();
  for (const auto& r : w.records) {
    int cur = r.leaf_node;
    while (cur >= 0) {
      EXPECT_TRUE(w.nodes[cur].region.contains(r.coordinate))
          << "record " << r.id << " outside tier " << w.nodes[cur].tier;
      cur = w.nodes[cur].parent;
    }
  }
}

TEST(WorldGen, SiblingRegionsPartitionParent) {
  const World& w = default_world();
  for (const auto& n : w.nodes) {
    if (n.children.empty()) continue;
    double area = 0.0;
    for (int c : n.children) {
      const Rect& r = w.nodes[c].region;
      area += (r.x1 - r.x0) * (r.y1 - r.y0);
    }
    const Rect& pr = n.region;
    EXPECT_NEAR(area, (pr.x1 - pr.x0) * (pr.y1 - pr.y0), 1e-6);
  }
}

TEST(WorldGen, SiblingNamesDistinctAndTierConsistent) {
  const World& w = default_world();
  for (const auto& n : w.nodes) {
    std::set<std::string> names;
    for (int c : n.children) names.insert(w.nodes[c].name);
    EXPECT_EQ(names.size(), n.children.size());
  }
  // a surface form never appears at two different tiers
  std::map<std::string, int> tier_of;
  for (const auto& n : w.nodes) {
    auto it = tier_of.find(n.name);
    if (it == tier_of.end())
      tier_of[n.name] = n.tier;
    else
      EXPECT_EQ(it->second, n.tier) << n.name;
  }
}

TEST(WorldGen, CanonicalTextsUnique) {
  const World& w = default_world();
  std::set<std::string> texts;
  for (const auto& r : w.records) EXPECT_TRUE(texts.insert(r.text).second) << r.text;
}

TEST(WorldGen, MiddleTierNamesAreReused) {
  // reuse at tiers 3..5 is what makes truncated addresses ambiguous
  const World& w = default_world();
  std::map<std::string, int> uses;
  for (const auto& n : w.nodes)
    if (n.tier == 3) uses[n.name]++;
  bool any_reused = false;
  for (auto& [k, v] : uses) any_reused |= v > 1;
  EXPECT_TRUE(any_reused);
}

TEST(WorldGen, RejectsBadParams) {
  WorldParams p;
  p.branching[2] = 0;
  EXPECT_THROW(generate_world(p), ConfigError);
  p = WorldParams{};
  p.name_pool[2] = 2;  // smaller than branching 3
  EXPECT_THROW(generate_world(p), ConfigError);
  p = WorldParams{};
  p.alias_rate = 1.5;
  EXPECT_THROW(generate_world(p), ConfigError);
  p = WorldParams{};
  p.size_m = -10;
  EXPECT_THROW(generate_world(p), ConfigError);
}

TEST(Stations, GridCountAndCoverage) {
  const World& w = default_world();
  EXPECT_EQ(static_cast<int>(w.stations.size()), w.params.stations_x * w.params.stations_y);
  Rng rng(4);
  for (int i = 0; i < 2000; ++i) {
    Coordinate c{rng.uniform(0, w.params.size_m), rng.uniform(0, w.params.size_m)};
    int got = station_of(w, c);
    EXPECT_EQ(got, station_oracle(w, c));
    EXPECT_TRUE(w.stations[got].region.contains(c));
  }
}

TEST(Stations, BoundaryBelongsToSmallerId) {
  const World& w = default_world();
  double cw = w.params.size_m / w.params.stations_x;
  double ch = w.params.size_m / w.params.stations_y;
  // vertical boundary between column 0 and 1, row 0
  Coordinate v{cw, 0.5 * ch};
  EXPECT_EQ(station_of(w, v), station_oracle(w, v));
  EXPECT_EQ(station_of(w, v), 0);
  // horizontal boundary between row 0 and 1
  Coordinate h{0.5 * cw, ch};
  EXPECT_EQ(station_of(w, h), 0);
  // interior corner shared by four cells
  Coordinate corner{cw, ch};
  EXPECT_EQ(station_of(w, corner), 0);
  // far corner of the world belongs to the last station
  Coordinate far{w.params.size_m, w.params.size_m};
  EXPECT_EQ(station_of(w, far), static_cast<int>(w.stations.size()) - 1);
}

TEST(Stations, OutOfBoundsThrows) {
  const World& w = default_world();
  EXPECT_THROW(station_of(w, {-1.0, 50.0}), DomainFailure);
  EXPECT_THROW(station_of(w, {50.0, w.params.size_m + 1.0}), DomainFailure);
}

TEST(ReverseGeocode, NearestRecordTruncated) {
  const World& w = default_world();
  Rng rng(21);
  for (int i = 0; i < 500; ++i) {
    Coordinate c{rng.uniform(0, w.params.size_m), rng.uniform(0, w.params.size_m)};
    // independent nearest scan
    int best = -1;
    double bd = 1e300;
    for (const auto& r : w.records) {
      double d = distance(r.coordinate, c);
      if (d < bd) {
        bd = d;
        best = r.id;
      }
    }
    std::string expect;
    for (int t = 0; t < kTiers - 1; ++t) {
      if (t) expect += ", ";
      expect += w.records[best].components[t];
    }
    EXPECT_EQ(reverse_geocode(w, c), expect);
  }
  EXPECT_THROW(reverse_geocode(w, {-5.0, 0.0}), DomainFailure);
}

TEST(ReverseGeocode, ExactRecordCoordinateIsItself) {
  const World& w = default_world();
  const auto& rec = w.records[w.record_count() / 2];
  std::string got = reverse_geocode(w, rec.coordinate);
  std::string expect;
  for (int t = 0; t < kTiers - 1; ++t) {
    if (t) expect += ", ";
    expect += rec.components[t];
  }
  EXPECT_EQ(got, expect);
}

TEST(Delivery, NoiseScaleAndClamping) {
  const World& w = default_world();
  // central record so clamping never triggers at sigma 30
  const AddressRecord* central = nullptr;
  for (const auto& r : w.records)
    if (r.coordinate.x > 3000 && r.coordinate.x < 7000 && r.coordinate.y > 3000 &&
        r.coordinate.y < 7000) {
      central = &r;
      break;
    }
  ASSERT_NE(central, nullptr);
  Rng rng(33);
  const int n = 20000;
  double sx = 0.0, sxx = 0.0;
  for (int i = 0; i < n; ++i) {
    Coordinate c = sample_delivery(w, *central, 30.0, rng);
    EXPECT_TRUE(w.in_bounds(c));
    double dx = c.x - central->coordinate.x;
    sx += dx;
    sxx += dx * dx;
  }
  double mean = sx / n;
  double sd = std::sqrt(sxx / n - mean * mean);
  EXPECT_NEAR(mean, 0.0, 1.5);
  EXPECT_NEAR(sd, 30.0, 3.0);  // within 10%
}

TEST(Lexicon, RoundTripCanonicalAndAliasText) {
  const World& w = default_world();
  for (const auto& r : w.records) {
    auto toks = w.lexicon.tokenize(r.text);
    EXPECT_EQ(w.lexicon.detokenize(toks), r.text);
  }
  for (const auto& [canon, aliases] : w.alias_table) {
    for (const auto& a : aliases) {
      auto toks = w.lexicon.tokenize(a);
      ASSERT_EQ(toks.size(), 1u) << a;
      EXPECT_EQ(w.lexicon.entry(toks[0]).kind, TokenKind::alias);
      EXPECT_EQ(w.lexicon.entry(w.lexicon.entry(toks[0]).canonical).text, canon);
    }
  }
}

TEST(Lexicon, UnknownBytesMapToUnknownToken) {
  const World& w = default_world();
  auto toks = w.lexicon.tokenize("@@@");
  ASSERT_FALSE(toks.empty());
  for (int t : toks) EXPECT_EQ(t, kTokUnknown);
}

TEST(Lexicon, AliasTableNonEmptyAtDefaultRate) {
  const World& w = default_world();
  EXPECT_GT(w.alias_table.size(), 5u);
}

TEST(WorldIo, SaveLoadRoundTrip) {
  const World& w = default_world();
  std::string path = testing::TempDir() + "/addrkit_world_test.json";
  ArtifactMeta meta;
  meta.stages["world"] = "deadbeef00000000";
  meta.config_json = "{\"seed\":1}";
  save_world(w, path, meta);
  ArtifactMeta back;
  World w2 = load_world(path, &back);
  EXPECT_EQ(w.fingerprint(), w2.fingerprint());
  EXPECT_EQ(w.lexicon.vocab_hash(), w2.lexicon.vocab_hash());
  EXPECT_EQ(back.stages.at("world"), "deadbeef00000000");
  // a second save of the loaded world is byte-identical
  std::string path2 = testing::TempDir() + "/addrkit_world_test2.json";
  save_world(w2, path2, back);
  EXPECT_EQ(read_text_file(path), read_text_file(path2));
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST(WorldIo, RejectsGarbage) {
  std::string path = testing::TempDir() + "/addrkit_world_bad.json";
  write_text_file(path, "{\"format\":\"other/9\"}");
  EXPECT_THROW(load_world(path), IoError);
  write_text_file(path, "not json");
  EXPECT_THROW(load_world(path), IoError);
  std::remove(path.c_str());
}
