// Address text analysis against a world: tier extraction, normalization,
// standardness, and geocoding.
#pragma once

#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "addrkit/world.hpp"

namespace addrkit {

struct ParsedAddress {
  // canonical surface form per tier (aliases resolved); empty when absent
  std::array<std::string, kTiers> components;
  // first token position at which each tier was assigned (-1 when absent)
  std::array<int, kTiers> first_pos{-1, -1, -1, -1, -1, -1};
  std::set<int> duplicate_tiers;  // tiers seen with two distinct names
  bool out_of_order = false;      // a lower tier first appears after a higher one
  int unknown_token_count = 0;    // fillers, stray characters, unknown bytes

  bool has(int tier) const { return !components[tier - 1].empty(); }
  std::vector<int> missing_tiers() const;
  bool contradictory() const { return !duplicate_tiers.empty(); }
};

// Single pass over the token stream; never throws on messy input.
ParsedAddress parse(const World& w, const std::string& text);

// Canonical rendering of the assigned tiers in ascending order.
// Throws std::invalid_argument when the parse carries duplicate tiers.
std::string serialize(const ParsedAddress& p);

// True iff the text parses with tiers 1..3 present, no duplicates, in
// canonical order, and no unattributable content. Missing fine-grained
// tiers (4..6) do not disqualify a text.
bool is_standard(const World& w, const std::string& text);

// Deepest-unambiguous-node semantics:
//   walk assigned tiers top down; at each, match descendants of the node
//   resolved so far; descend on a unique match, stop otherwise.
// Fails (nullopt) on contradictory parses or when resolution ends above
// tier 3. Leaf resolution returns the record coordinate exactly; internal
// resolution returns the node's region center.
std::optional<Coordinate> geocode(const World& w, const std::string& text);

// Diagnostic variant: also reports the resolved node (-1 when none).
struct GeocodeTrace {
  std::optional<Coordinate> coordinate;
  int node = -1;
  int resolved_tier = 0;
  bool contradictory = false;
};
GeocodeTrace geocode_trace(const World& w, const std::string& text);

}  // namespace addrkit
