#include "addrkit/address.hpp"

#include <stdexcept>

namespace addrkit {

std::vector<int> ParsedAddress::missing_tiers() const {
  std::vector<int> out;
  for (int t = 1; t <= kTiers; ++t)
    if (components[t - 1].empty()) out.push_back(t);
  return out;
}

ParsedAddress parse(const World& w, const std::string& text) {
  ParsedAddress p;
  std::vector<int> tokens = w.lexicon.tokenize(text);
  int last_assigned_tier = 0;
  for (int pos = 0; pos < static_cast<int>(tokens.size()); ++pos) {
    const TokenEntry& e = w.lexicon.entry(tokens[pos]);
    switch (e.kind) {
      case TokenKind::name:
      case TokenKind::alias: {
        int tier = e.tier;
        const std::string& canon =
            e.kind == TokenKind::alias ? w.lexicon.entry(e.canonical).text : e.text;
        std::string& slot = p.components[tier - 1];
        if (slot.empty()) {
          slot = canon;
          p.first_pos[tier - 1] = pos;
          if (tier < last_assigned_tier) p.out_of_order = true;
          last_assigned_tier = std::max(last_assigned_tier, tier);
        } else if (slot != canon) {
          p.duplicate_tiers.insert(tier);
        }
        break;
      }
      case TokenKind::separator:
      case TokenKind::tier_marker:
        break;
      default:
        // fillers, bare characters, control tokens, unknown bytes
        p.unknown_token_count += 1;
        break;
    }
  }
  return p;
}

std::string serialize(const ParsedAddress& p) {
  if (p.contradictory())
    throw std::invalid_argument("cannot serialize a contradictory parse");
  std::string out;
  for (int t = 1; t <= kTiers; ++t) {
    if (!p.has(t)) continue;
    if (!out.empty()) out += ", ";
    out += p.components[t - 1];
  }
  return out;
}

bool is_standard(const World& w, const std::string& text) {
  ParsedAddress p = parse(w, text);
  return !p.contradictory() && !p.out_of_order && p.unknown_token_count == 0 &&
         p.has(1) && p.has(2) && p.has(3);
}

GeocodeTrace geocode_trace(const World& w, const std::string& text) {
  GeocodeTrace tr;
  ParsedAddress p = parse(w, text);
  if (p.contradictory()) {
    tr.contradictory = true;
    return tr;
  }
  int node = -1;  // -1 = virtual root covering all tier-1 nodes
  int resolved_tier = 0;
  for (int t = 1; t <= kTiers; ++t) {
    if (!p.has(t)) continue;
    const std::string& want = p.components[t - 1];
    auto it = w.name_nodes.find(want);
    int match = -1;
    int match_count = 0;
    if (it != w.name_nodes.end()) {
      for (int cand : it->second) {
        if (w.nodes[cand].tier != t) continue;
        if (node >= 0) {
          // ancestor check: climb from cand to tier of `node`
          int cur = cand;
          while (cur >= 0 && w.nodes[cur].tier > w.nodes[node].tier)
            cur = w.nodes[cur].parent;
          if (cur != node) continue;
        }
        ++match_count;
        match = cand;
        if (match_count > 1) break;
      }
    }
    if (match_count != 1) break;  // ambiguous or absent under the resolved node
    node = match;
    resolved_tier = t;
  }
  tr.node = node;
  tr.resolved_tier = resolved_tier;
  if (node < 0 || resolved_tier < 3) return tr;
  const HierarchyNode& n = w.nodes[node];
  if (n.record_id >= 0)
    tr.coordinate = w.records[n.record_id].coordinate;
  else
    tr.coordinate = n.region.center();
  return tr;
}

std::optional<Coordinate> geocode(const World& w, const std::string& text) {
  return geocode_trace(w, text).coordinate;
}

}  // namespace addrkit
