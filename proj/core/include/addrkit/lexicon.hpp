// Closed-world token table plus a longest-match tokenizer over it.
//
// Every string the system can emit or consume is built from these entries:
// control/delimiter tokens for prompts, tier markers, component names and
// their aliases, filler vocabulary used by the corruptor, and single
// characters as a fallback so misspelled names remain representable.
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace addrkit {

enum class TokenKind {
  unknown,
  control,
  tier_marker,
  separator,
  filler,
  name,
  alias,
  character,
};

struct TokenEntry {
  std::string text;       // surface form
  TokenKind kind = TokenKind::unknown;
  int tier = 0;           // 1..6 for name/alias entries, else 0
  int canonical = -1;     // alias -> token id of the canonical name
};

// Control token ids are fixed; everything else is assigned at build time.
enum ControlToken : int {
  kTokUnknown = 0,
  kTokTaskParse,
  kTokTaskAep,
  kTokTaskRewrite,
  kTokAddrOpen,
  kTokAddrClose,
  kTokHierOpen,
  kTokHierClose,
  kTokExamplesOpen,
  kTokExamplesClose,
  kTokRelatedOpen,
  kTokRelatedClose,
  kTokItem,
  kTokSys,
  kTokEos,
  kNumControlTokens,
};

class Lexicon {
 public:
  Lexicon();

  // Returns the token id; reuses an existing entry when the surface form is
  // already present (first registration wins, later kinds are ignored).
  int add(const std::string& text, TokenKind kind, int tier = 0, int canonical = -1);

  // Call once after all names/aliases/fillers are added: registers every
  // character that occurs in any entry as a fallback token.
  void finalize();

  int size() const { return static_cast<int>(entries_.size()); }
  const TokenEntry& entry(int id) const;
  int find(const std::string& text) const;  // -1 when absent
  bool finalized() const { return finalized_; }

  // Greedy longest-match scan. Characters not covered by any entry map to
  // the unknown token.
  std::vector<int> tokenize(const std::string& text) const;
  std::string detokenize(const std::vector<int>& tokens) const;

  // Order- and content-sensitive fingerprint; checkpoints embed it so a
  // model can refuse a mismatched vocabulary.
  std::uint64_t vocab_hash() const;

 private:
  std::vector<TokenEntry> entries_;
  std::unordered_map<std::string, int> by_text_;
  // tokenizer acceleration: entries bucketed by first byte, longest first
  std::vector<std::vector<int>> by_first_byte_;
  std::size_t max_entry_len_ = 0;
  bool finalized_ = false;
};

}  // namespace addrkit
