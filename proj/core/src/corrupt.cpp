#include "addrkit/corrupt.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <stdexcept>

namespace addrkit {

const char* to_string(ErrorType t) {
  switch (t) {
    case ErrorType::missing_region: return "missing_region";
    case ErrorType::nested_address: return "nested_address";
    case ErrorType::alias: return "alias";
    case ErrorType::irrelevant_words: return "irrelevant_words";
    case ErrorType::misspelling: return "misspelling";
  }
  return "misspelling";
}

ErrorType error_type_from_string(const std::string& s) {
  for (int i = 0; i < kNumErrorTypes; ++i) {
    auto t = static_cast<ErrorType>(i);
    if (s == to_string(t)) return t;
  }
  throw std::invalid_argument("unknown error type: " + s);
}

ErrorType sample_error_type(Rng& rng, const std::array<double, kNumErrorTypes>& weights) {
  std::vector<double> w(weights.begin(), weights.end());
  return static_cast<ErrorType>(rng.categorical(w));  // categorical normalizes
}

const std::vector<FillerTemplate>& filler_templates() {
  static const std::vector<FillerTemplate> pool = {
      {"urgent", false},
      {"fragile", false},
      {"call on arrival", false},
      {"leave at front desk", false},
      {"ring twice", false},
      {"red door", false},
      {"second floor rear", false},
      {"ask for reception", false},
      {"cash on delivery", false},
      {"weekday mornings only", false},
      {"gate code 4412", false},
      {"do not fold", false},
      {"near", true},
      {"opposite", true},
      {"behind", true},
      {"beside", true},
      {"formerly", true},
      {"across from", true},
      {"next to", true},
      {"close to", true},
  };
  return pool;
}

namespace {

std::string join_components(const AddressRecord& rec, int skip_tier) {
  std::string out;
  for (int t = 1; t <= kTiers; ++t) {
    if (t == skip_tier) continue;
    if (!out.empty()) out += ", ";
    out += rec.components[t - 1];
  }
  return out;
}

std::string misspell(const AddressRecord& rec, Rng& rng) {
  int tier = 1 + static_cast<int>(rng.uniform_int(kTiers));
  std::string name = rec.components[tier - 1];
  bool swapped = false;
  if (rng.uniform() < 0.5) {
    // adjacent transposition at a position where it changes the string
    std::vector<std::size_t> spots;
    for (std::size_t i = 0; i + 1 < name.size(); ++i)
      if (name[i] != name[i + 1] && name[i] != ' ' && name[i + 1] != ' ')
        spots.push_back(i);
    if (!spots.empty()) {
      std::size_t i = spots[rng.uniform_int(spots.size())];
      std::swap(name[i], name[i + 1]);
      swapped = true;
    }
  }
  if (!swapped) {
    // substitute one letter with a different lowercase letter
    std::vector<std::size_t> spots;
    for (std::size_t i = 0; i < name.size(); ++i)
      if (std::isalpha(static_cast<unsigned char>(name[i]))) spots.push_back(i);
    if (spots.empty()) spots.push_back(name.size() - 1);
    std::size_t i = spots[rng.uniform_int(spots.size())];
    const char* letters = "abcdefghijklmnopqrstuvwxyz";
    char c = letters[rng.uniform_int(26)];
    while (c == name[i]) c = letters[rng.uniform_int(26)];
    name[i] = c;
  }
  std::string out;
  for (int t = 1; t <= kTiers; ++t) {
    if (!out.empty()) out += ", ";
    out += (t == tier) ? name : rec.components[t - 1];
  }
  return out;
}

std::vector<std::string> poi_names(const World& w) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& n : w.nodes)
    if (n.tier == 5 && n.name.rfind("No. ", 0) != 0 && seen.insert(n.name).second)
      out.push_back(n.name);
  return out;
}

}  // namespace

Corruption corrupt(const World& w, const AddressRecord& rec, ErrorType wanted, Rng& rng) {
  Corruption c;
  c.record_id = rec.id;
  c.applied = wanted;
  switch (wanted) {
    case ErrorType::missing_region: {
      int tier = 1 + static_cast<int>(rng.uniform_int(3));
      c.text = join_components(rec, tier);
      break;
    }
    case ErrorType::nested_address: {
      // splice the region prefix of a record from a different tier-1 subtree
      std::vector<int> candidates;
      for (const auto& r : w.records)
        if (r.components[0] != rec.components[0]) candidates.push_back(r.id);
      if (candidates.empty())
        for (const auto& r : w.records)
          if (r.id != rec.id) candidates.push_back(r.id);
      if (candidates.empty()) throw DomainFailure("nested_address needs at least two records");
      const auto& other = w.records[candidates[rng.uniform_int(candidates.size())]];
      c.text = rec.text + ", " + other.components[0] + ", " + other.components[1] + ", " +
               other.components[2];
      break;
    }
    case ErrorType::alias: {
      std::vector<int> tiers;
      for (int t = 1; t <= kTiers; ++t)
        if (w.alias_table.count(rec.components[t - 1])) tiers.push_back(t);
      if (tiers.empty()) {
        c.text = misspell(rec, rng);
        c.applied = ErrorType::misspelling;
        break;
      }
      int tier = tiers[rng.uniform_int(tiers.size())];
      const auto& aliases = w.alias_table.at(rec.components[tier - 1]);
      const std::string& alias = aliases[rng.uniform_int(aliases.size())];
      std::string out;
      for (int t = 1; t <= kTiers; ++t) {
        if (!out.empty()) out += ", ";
        out += (t == tier) ? alias : rec.components[t - 1];
      }
      c.text = out;
      break;
    }
    case ErrorType::irrelevant_words: {
      const auto& pool = filler_templates();
      const FillerTemplate& tpl = pool[rng.uniform_int(pool.size())];
      std::string phrase = tpl.text;
      if (tpl.poi_slot) {
        auto pois = poi_names(w);
        if (pois.empty())
          phrase += " somewhere";  // degenerate worlds without POI names
        else
          phrase += " " + pois[rng.uniform_int(pois.size())];
      }
      // parenthesized remark after a uniformly chosen component
      int after = 1 + static_cast<int>(rng.uniform_int(kTiers));
      std::string out;
      for (int t = 1; t <= kTiers; ++t) {
        if (!out.empty()) out += ", ";
        out += rec.components[t - 1];
        if (t == after) out += " (" + phrase + ")";
      }
      c.text = out;
      break;
    }
    case ErrorType::misspelling:
      c.text = misspell(rec, rng);
      break;
  }
  if (c.text == rec.text)
    throw Error(ErrorCategory::internal, "corruption left the text unchanged");
  return c;
}

}  // namespace addrkit
