// Error-taxonomy corruptor: maps a clean record to a realistic defective
// address text, following a fixed weighted mix of five error classes.
#pragma once

#include <array>
#include <string>
#include <vector>

#include "addrkit/common.hpp"
#include "addrkit/world.hpp"

namespace addrkit {

enum class ErrorType {
  missing_region,
  nested_address,
  alias,
  irrelevant_words,
  misspelling,
};

inline constexpr int kNumErrorTypes = 5;

// Empirical class frequencies; they sum to 1.001 as published and are
// normalized before sampling.
inline constexpr std::array<double, kNumErrorTypes> kErrorWeights{
    0.213, 0.232, 0.146, 0.279, 0.131};

const char* to_string(ErrorType t);
ErrorType error_type_from_string(const std::string& s);

ErrorType sample_error_type(Rng& rng,
                            const std::array<double, kNumErrorTypes>& weights = kErrorWeights);

// Parenthesized side-remarks the corruptor can inject. Entries with
// poi_slot=true are completed with a tier-5 name at corruption time
// ("near" -> "near Karimo Plaza").
struct FillerTemplate {
  std::string text;
  bool poi_slot = false;
};
const std::vector<FillerTemplate>& filler_templates();

struct Corruption {
  int record_id = -1;
  std::string text;           // corrupted address
  ErrorType applied = ErrorType::misspelling;  // actual class after fallbacks
};

// Always returns text different from the canonical form. When `wanted` is
// alias but no component of the record has an alias, falls back to a
// misspelling and records that in `applied`.
Corruption corrupt(const World& w, const AddressRecord& rec, ErrorType wanted, Rng& rng);

}  // namespace addrkit
