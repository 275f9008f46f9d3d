#include "addrkit/world.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>

#include "addrkit/corrupt.hpp"
#include "json.hpp"

namespace addrkit {

using nlohmann::json;

double distance(const Coordinate& a, const Coordinate& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

namespace {

const char kConsonants[] = "bdfghjklmnprstvz";
const char kVowels[] = "aeiou";

std::string make_word(Rng& rng, std::set<std::string>& used) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    int syllables = 2 + static_cast<int>(rng.uniform_int(2));
    std::string w;
    for (int s = 0; s < syllables; ++s) {
      w += kConsonants[rng.uniform_int(sizeof(kConsonants) - 1)];
      w += kVowels[rng.uniform_int(sizeof(kVowels) - 1)];
    }
    if (rng.uniform() < 0.3) w += kConsonants[rng.uniform_int(sizeof(kConsonants) - 1)];
    w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
    if (used.insert(w).second) return w;
  }
  throw Error(ErrorCategory::internal, "pseudoword space exhausted");
}

const char* kTierSuffix[kTiers] = {" Province", " City", " District", " St", "", ""};
const char* kPoiKinds[] = {"Plaza", "Mall",   "Tower", "Court", "Market",
                           "Hotel", "Center", "Park",  "Depot"};

std::string pool_name(int tier, int k, Rng& rng, std::set<std::string>& used) {
  switch (tier) {
    case 5:
      if (k % 2 == 0) return "No. " + std::to_string(k / 2 + 1);
      return make_word(rng, used) + " " + kPoiKinds[(k / 2) % 9];
    case 6:
      return "Bldg " + std::to_string(k + 1);
    default:
      return make_word(rng, used) + kTierSuffix[tier - 1];
  }
}

std::string fresh_name(int tier, Rng& rng, std::set<std::string>& used) {
  return make_word(rng, used) + kTierSuffix[tier - 1];
}

Rect split_region(const Rect& parent, int tier, int k, int n) {
  // x-splits at odd tiers, y-splits at even tiers
  Rect r = parent;
  if (tier % 2 == 1) {
    double w = (parent.x1 - parent.x0) / n;
    r.x0 = parent.x0 + k * w;
    r.x1 = (k + 1 == n) ? parent.x1 : parent.x0 + (k + 1) * w;
  } else {
    double h = (parent.y1 - parent.y0) / n;
    r.y0 = parent.y0 + k * h;
    r.y1 = (k + 1 == n) ? parent.y1 : parent.y0 + (k + 1) * h;
  }
  return r;
}

void validate_params(const WorldParams& p) {
  if (p.size_m <= 0.0) throw ConfigError("world size must be positive");
  if (p.stations_x < 1 || p.stations_y < 1) throw ConfigError("station grid must be at least 1x1");
  long long leaves = 1;
  for (int t = 0; t < kTiers; ++t) {
    if (p.branching[t] < 1) throw ConfigError("branching factors must be >= 1");
    leaves *= p.branching[t];
    if (p.name_pool[t] > 0 && p.name_pool[t] < p.branching[t])
      throw ConfigError("name pool at tier " + std::to_string(t + 1) +
                        " smaller than branching factor");
  }
  if (leaves > 2'000'000) throw ConfigError("world too large");
  if (p.alias_rate < 0.0 || p.alias_rate > 1.0) throw ConfigError("alias_rate must be in [0,1]");
}

void build_lexicon(World& w) {
  Lexicon& lex = w.lexicon;
  for (int t = 1; t <= kTiers; ++t)
    lex.add("[" + std::to_string(t) + "]", TokenKind::tier_marker, t);
  lex.add(", ", TokenKind::separator);
  lex.add(" ", TokenKind::separator);
  lex.add("(", TokenKind::separator);
  lex.add(")", TokenKind::separator);
  for (const auto& f : filler_templates()) lex.add(f.text, TokenKind::filler);
  for (const auto& node : w.nodes) lex.add(node.name, TokenKind::name, node.tier);
  for (const auto& [canon, aliases] : w.alias_table) {
    int cid = lex.find(canon);
    if (cid < 0) throw Error(ErrorCategory::internal, "alias for unknown name: " + canon);
    for (const auto& a : aliases) lex.add(a, TokenKind::alias, lex.entry(cid).tier, cid);
  }
  lex.finalize();
}

void rebuild_derived(World& w) {
  w.roots.clear();
  for (auto& n : w.nodes) n.children.clear();
  for (const auto& n : w.nodes) {
    if (n.parent < 0)
      w.roots.push_back(n.id);
    else
      w.nodes[n.parent].children.push_back(n.id);
  }
  w.name_nodes.clear();
  for (const auto& n : w.nodes) w.name_nodes[n.name].push_back(n.id);
  build_lexicon(w);
}

}  // namespace

World generate_world(const WorldParams& params) {
  validate_params(params);
  World w;
  w.params = params;

  Rng name_rng(derive_seed(params.seed, "names"));
  Rng tree_rng(derive_seed(params.seed, "tree"));
  Rng coord_rng(derive_seed(params.seed, "coords"));
  Rng alias_rng(derive_seed(params.seed, "alias"));

  std::set<std::string> used;
  for (const auto& f : filler_templates()) used.insert(f.text);
  for (const char* k : kPoiKinds) used.insert(k);
  used.insert({"Province", "City", "District", "St", "No.", "Bldg"});

  std::array<std::vector<std::string>, kTiers> pools;
  for (int t = 1; t <= kTiers; ++t) {
    int p = params.name_pool[t - 1];
    for (int k = 0; k < p; ++k) {
      std::string n = pool_name(t, k, name_rng, used);
      used.insert(n);
      pools[t - 1].push_back(n);
    }
  }

  // breadth-first tier construction
  std::vector<int> frontier;
  for (int t = 1; t <= kTiers; ++t) {
    std::vector<int> next;
    int fan = params.branching[t - 1];
    auto make_children = [&](int parent_id, const Rect& parent_region) {
      // names for this sibling set: pool sample without replacement, or fresh
      std::vector<std::string> names;
      if (!pools[t - 1].empty()) {
        std::vector<int> idx(pools[t - 1].size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
        for (int k = 0; k < fan; ++k) {
          int j = k + static_cast<int>(tree_rng.uniform_int(idx.size() - k));
          std::swap(idx[k], idx[j]);
          names.push_back(pools[t - 1][idx[k]]);
        }
      } else {
        for (int k = 0; k < fan; ++k) names.push_back(fresh_name(t, name_rng, used));
      }
      for (int k = 0; k < fan; ++k) {
        HierarchyNode n;
        n.id = static_cast<int>(w.nodes.size());
        n.tier = t;
        n.name = names[k];
        n.parent = parent_id;
        n.region = split_region(parent_region, t, k, fan);
        w.nodes.push_back(n);
        if (parent_id >= 0) w.nodes[parent_id].children.push_back(n.id);
        next.push_back(n.id);
      }
    };
    if (t == 1) {
      make_children(-1, Rect{0, 0, params.size_m, params.size_m});
      w.roots = next;
    } else {
      for (int pid : frontier) make_children(pid, w.nodes[pid].region);
    }
    frontier = std::move(next);
  }

  // leaf records
  for (int leaf_id : frontier) {
    HierarchyNode& leaf = w.nodes[leaf_id];
    AddressRecord rec;
    rec.id = static_cast<int>(w.records.size());
    rec.leaf_node = leaf_id;
    rec.coordinate.x = coord_rng.uniform(leaf.region.x0, leaf.region.x1);
    rec.coordinate.y = coord_rng.uniform(leaf.region.y0, leaf.region.y1);
    int cur = leaf_id;
    while (cur >= 0) {
      rec.components[w.nodes[cur].tier - 1] = w.nodes[cur].name;
      cur = w.nodes[cur].parent;
    }
    for (int t = 0; t < kTiers; ++t) {
      if (t) rec.text += ", ";
      rec.text += rec.components[t];
    }
    leaf.record_id = rec.id;
    w.records.push_back(std::move(rec));
  }

  // sanity: canonical texts must be pairwise distinct
  {
    std::set<std::string> texts;
    for (const auto& r : w.records)
      if (!texts.insert(r.text).second)
        throw Error(ErrorCategory::internal, "duplicate canonical text: " + r.text);
  }

  // aliases over unique names, tiers 1..5 (building numbers stay literal)
  {
    std::set<std::string> seen;
    for (const auto& node : w.nodes) {
      if (node.tier > 5 || !seen.insert(node.name).second) continue;
      if (alias_rng.uniform() >= params.alias_rate) continue;
      const std::string& s = node.name;
      std::vector<std::string> candidates;
      if (s.rfind("No. ", 0) == 0) {
        candidates.push_back("#" + s.substr(4));
      } else {
        auto sp = s.find(' ');
        if (sp != std::string::npos && sp >= 3) {
          candidates.push_back(s.substr(0, sp));                       // drop suffix
          candidates.push_back(s.substr(0, 3) + "." + s.substr(sp));   // abbreviate
        }
      }
      std::size_t pick = candidates.size() > 1 ? alias_rng.uniform_int(candidates.size()) : 0;
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        const std::string& a = candidates[(pick + i) % candidates.size()];
        if (used.insert(a).second) {
          w.alias_table[s].push_back(a);
          break;
        }
      }
    }
  }

  // station grid
  {
    double cw = params.size_m / params.stations_x;
    double ch = params.size_m / params.stations_y;
    for (int r = 0; r < params.stations_y; ++r)
      for (int c = 0; c < params.stations_x; ++c) {
        Station s;
        s.id = r * params.stations_x + c;
        s.region = Rect{c * cw, r * ch, (c + 1) * cw, (r + 1) * ch};
        w.stations.push_back(s);
      }
  }

  w.name_nodes.clear();
  for (const auto& n : w.nodes) w.name_nodes[n.name].push_back(n.id);
  build_lexicon(w);
  return w;
}

int station_of(const World& w, const Coordinate& c) {
  if (!w.in_bounds(c))
    throw DomainFailure("coordinate outside world bounds");
  int nx = w.params.stations_x, ny = w.params.stations_y;
  double cw = w.params.size_m / nx, ch = w.params.size_m / ny;
  int col = static_cast<int>(std::floor(c.x / cw));
  int row = static_cast<int>(std::floor(c.y / ch));
  // boundary points belong to the smaller station id (the cell below/left)
  if (col > 0 && c.x == col * cw) col -= 1;
  if (row > 0 && c.y == row * ch) row -= 1;
  if (col >= nx) col = nx - 1;
  if (row >= ny) row = ny - 1;
  return row * nx + col;
}

std::string reverse_geocode(const World& w, const Coordinate& c) {
  if (!w.in_bounds(c))
    throw DomainFailure("coordinate outside world bounds");
  if (w.records.empty()) throw DomainFailure("world has no records");
  int best = 0;
  double best_d2 = 0.0;
  for (const auto& r : w.records) {
    double dx = r.coordinate.x - c.x, dy = r.coordinate.y - c.y;
    double d2 = dx * dx + dy * dy;
    if (r.id == 0 || d2 < best_d2) {
      best = r.id;
      best_d2 = d2;
    }
  }
  const auto& rec = w.records[best];
  std::string out;
  for (int t = 0; t < kTiers - 1; ++t) {
    if (t) out += ", ";
    out += rec.components[t];
  }
  return out;
}

Coordinate sample_delivery(const World& w, const AddressRecord& rec, double sigma_m, Rng& rng) {
  Coordinate c = rec.coordinate;
  c.x += sigma_m * rng.gaussian();
  c.y += sigma_m * rng.gaussian();
  c.x = std::clamp(c.x, 0.0, w.params.size_m);
  c.y = std::clamp(c.y, 0.0, w.params.size_m);
  return c;
}

std::uint64_t World::fingerprint() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& r : records) {
    h = fnv1a(r.text, h);
    h = fnv1a_u64(std::bit_cast<std::uint64_t>(r.coordinate.x), h);
    h = fnv1a_u64(std::bit_cast<std::uint64_t>(r.coordinate.y), h);
  }
  for (const auto& s : stations) {
    h = fnv1a_u64(std::bit_cast<std::uint64_t>(s.region.x0), h);
    h = fnv1a_u64(std::bit_cast<std::uint64_t>(s.region.y1), h);
  }
  for (const auto& [k, v] : alias_table) {
    h = fnv1a(k, h);
    for (const auto& a : v) h = fnv1a(a, h);
  }
  return h;
}

namespace {
json params_to_json(const WorldParams& p) {
  return json{{"seed", p.seed},
              {"size_m", p.size_m},
              {"branching", p.branching},
              {"name_pool", p.name_pool},
              {"alias_rate", p.alias_rate},
              {"stations_x", p.stations_x},
              {"stations_y", p.stations_y}};
}

WorldParams params_from_json(const json& j) {
  WorldParams p;
  p.seed = j.at("seed").get<std::uint64_t>();
  p.size_m = j.at("size_m").get<double>();
  auto b = j.at("branching").get<std::vector<int>>();
  auto np = j.at("name_pool").get<std::vector<int>>();
  if (b.size() != kTiers || np.size() != kTiers)
    throw IoError("world params: branching/name_pool must have 6 entries");
  std::copy(b.begin(), b.end(), p.branching.begin());
  std::copy(np.begin(), np.end(), p.name_pool.begin());
  p.alias_rate = j.at("alias_rate").get<double>();
  p.stations_x = j.at("stations_x").get<int>();
  p.stations_y = j.at("stations_y").get<int>();
  return p;
}

json meta_to_json(const ArtifactMeta& meta) {
  json m;
  m["stages"] = meta.stages;
  m["config"] = meta.config_json.empty() ? json(nullptr) : json::parse(meta.config_json);
  return m;
}

ArtifactMeta meta_from_json(const json& m) {
  ArtifactMeta meta;
  if (m.contains("stages"))
    meta.stages = m.at("stages").get<std::map<std::string, std::string>>();
  if (m.contains("config") && !m.at("config").is_null()) meta.config_json = m.at("config").dump();
  return meta;
}
}  // namespace

void save_world(const World& w, const std::string& path, const ArtifactMeta& meta) {
  json j;
  j["format"] = "addrkit-world/1";
  j["meta"] = meta_to_json(meta);
  j["params"] = params_to_json(w.params);
  json nodes = json::array();
  for (const auto& n : w.nodes)
    nodes.push_back(json::array({n.tier, n.name, n.parent, n.region.x0, n.region.y0, n.region.x1,
                                 n.region.y1, n.record_id}));
  j["nodes"] = std::move(nodes);
  json recs = json::array();
  for (const auto& r : w.records)
    recs.push_back(json::array(
        {r.id, r.components, r.coordinate.x, r.coordinate.y, r.leaf_node}));
  j["records"] = std::move(recs);
  json stations = json::array();
  for (const auto& s : w.stations)
    stations.push_back(
        json::array({s.id, s.region.x0, s.region.y0, s.region.x1, s.region.y1}));
  j["stations"] = std::move(stations);
  j["aliases"] = w.alias_table;
  write_text_file(path, j.dump() + "\n");
}

World load_world(const std::string& path, ArtifactMeta* meta_out) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw IoError("cannot parse world file " + path + ": " + e.what());
  }
  if (!j.contains("format") || j.at("format") != "addrkit-world/1")
    throw IoError("unsupported world format in " + path);
  World w;
  try {
    w.params = params_from_json(j.at("params"));
    if (meta_out && j.contains("meta")) *meta_out = meta_from_json(j.at("meta"));
    for (const auto& nj : j.at("nodes")) {
      HierarchyNode n;
      n.id = static_cast<int>(w.nodes.size());
      n.tier = nj.at(0).get<int>();
      n.name = nj.at(1).get<std::string>();
      n.parent = nj.at(2).get<int>();
      n.region = Rect{nj.at(3).get<double>(), nj.at(4).get<double>(), nj.at(5).get<double>(),
                      nj.at(6).get<double>()};
      n.record_id = nj.at(7).get<int>();
      w.nodes.push_back(std::move(n));
    }
    for (const auto& rj : j.at("records")) {
      AddressRecord r;
      r.id = rj.at(0).get<int>();
      auto comps = rj.at(1).get<std::vector<std::string>>();
      if (comps.size() != kTiers) throw IoError("record components must have 6 entries");
      std::copy(comps.begin(), comps.end(), r.components.begin());
      r.coordinate = Coordinate{rj.at(2).get<double>(), rj.at(3).get<double>()};
      r.leaf_node = rj.at(4).get<int>();
      for (int t = 0; t < kTiers; ++t) {
        if (t) r.text += ", ";
        r.text += r.components[t];
      }
      w.records.push_back(std::move(r));
    }
    for (const auto& sj : j.at("stations")) {
      Station s;
      s.id = sj.at(0).get<int>();
      s.region = Rect{sj.at(1).get<double>(), sj.at(2).get<double>(), sj.at(3).get<double>(),
                      sj.at(4).get<double>()};
      w.stations.push_back(s);
    }
    w.alias_table = j.at("aliases").get<std::map<std::string, std::vector<std::string>>>();
  } catch (const json::exception& e) {
    throw IoError("malformed world file " + path + ": " + e.what());
  }
  rebuild_derived(w);
  return w;
}

}  // namespace addrkit
