// Synthetic planar geography: a fixed-depth administrative hierarchy over a
// square region, leaf address records with coordinates, delivery stations on
// a grid, and an alias table. The world owns the lexicon used to tokenize
// any text in its vocabulary.
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "addrkit/common.hpp"
#include "addrkit/lexicon.hpp"

namespace addrkit {

inline constexpr int kTiers = 6;

struct Coordinate {
  double x = 0.0;
  double y = 0.0;
};

double distance(const Coordinate& a, const Coordinate& b);

struct Rect {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
  Coordinate center() const { return {0.5 * (x0 + x1), 0.5 * (y0 + y1)}; }
  bool contains(const Coordinate& c) const {
    return c.x >= x0 && c.x <= x1 && c.y >= y0 && c.y <= y1;
  }
};

struct HierarchyNode {
  int id = -1;
  int tier = 0;        // 1..6
  std::string name;    // surface form, unique among siblings but reusable across subtrees
  Rect region;
  int parent = -1;     // -1 for tier-1 nodes
  std::vector<int> children;
  int record_id = -1;  // leaf nodes only
};

struct AddressRecord {
  int id = -1;
  std::array<std::string, kTiers> components;
  Coordinate coordinate;
  std::string text;  // canonical: components joined by ", "
  int leaf_node = -1;
};

struct Station {
  int id = -1;
  Rect region;
};

struct WorldParams {
  std::uint64_t seed = 1;
  double size_m = 10000.0;
  std::array<int, kTiers> branching{2, 3, 3, 3, 3, 3};
  // Name pool size per tier; 0 means every node gets a fresh unique name.
  // Small pools at middle tiers make bare suffixes of an address ambiguous,
  // which is what gives region information its value.
  std::array<int, kTiers> name_pool{0, 4, 6, 12, 36, 8};
  double alias_rate = 0.35;
  int stations_x = 4;
  int stations_y = 4;
};

struct World {
  WorldParams params;
  std::vector<HierarchyNode> nodes;
  std::vector<int> roots;  // tier-1 node ids
  std::vector<AddressRecord> records;
  std::vector<Station> stations;
  // canonical name -> aliases (deterministic order)
  std::map<std::string, std::vector<std::string>> alias_table;
  Lexicon lexicon;

  // derived lookup: name surface form -> node ids carrying it (ascending)
  std::unordered_map<std::string, std::vector<int>> name_nodes;

  int node_count() const { return static_cast<int>(nodes.size()); }
  int record_count() const { return static_cast<int>(records.size()); }
  bool in_bounds(const Coordinate& c) const {
    return c.x >= 0.0 && c.x <= params.size_m && c.y >= 0.0 && c.y <= params.size_m;
  }
  std::uint64_t fingerprint() const;  // content hash over records/stations/aliases
};

// Deterministic generation: identical params (seed included) produce an
// identical world, including the lexicon ordering.
World generate_world(const WorldParams& params);

// Station containing the coordinate; points on shared boundaries belong to
// the smallest station id among the touching cells. Throws DomainFailure
// when the coordinate is outside the world square.
int station_of(const World& w, const Coordinate& c);

// Nearest record by Euclidean distance (ties -> smaller id), rendered with
// the building tier dropped. Throws DomainFailure outside the world square.
std::string reverse_geocode(const World& w, const Coordinate& c);

// Record coordinate plus isotropic Gaussian noise, clamped to the square.
Coordinate sample_delivery(const World& w, const AddressRecord& rec, double sigma_m, Rng& rng);

struct ArtifactMeta {
  std::map<std::string, std::string> stages;  // stage name -> hex hash
  std::string config_json;                    // resolved config, canonical text
};

void save_world(const World& w, const std::string& path, const ArtifactMeta& meta);
World load_world(const std::string& path, ArtifactMeta* meta_out = nullptr);

}  // namespace addrkit
