#include "addrkit/lexicon.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "addrkit/common.hpp"

namespace addrkit {

namespace {
const char* control_surface(int id) {
  switch (id) {
    case kTokUnknown: return "<unk>";
    case kTokTaskParse: return "<task:parse>";
    case kTokTaskAep: return "<task:complete>";
    case kTokTaskRewrite: return "<task:rewrite>";
    case kTokAddrOpen: return "<addr>";
    case kTokAddrClose: return "</addr>";
    case kTokHierOpen: return "<hier>";
    case kTokHierClose: return "</hier>";
    case kTokExamplesOpen: return "<ex>";
    case kTokExamplesClose: return "</ex>";
    case kTokRelatedOpen: return "<rel>";
    case kTokRelatedClose: return "</rel>";
    case kTokItem: return "<item>";
    case kTokSys: return "<sys>";
    case kTokEos: return "<eos>";
    default: return "<bad>";
  }
}
}  // namespace

Lexicon::Lexicon() {
  for (int id = 0; id < kNumControlTokens; ++id)
    add(control_surface(id), id == kTokUnknown ? TokenKind::unknown : TokenKind::control);
}

int Lexicon::add(const std::string& text, TokenKind kind, int tier, int canonical) {
  if (finalized_) throw std::logic_error("lexicon already finalized");
  if (text.empty()) throw std::invalid_argument("empty token text");
  auto it = by_text_.find(text);
  if (it != by_text_.end()) return it->second;
  int id = static_cast<int>(entries_.size());
  entries_.push_back(TokenEntry{text, kind, tier, canonical});
  by_text_.emplace(text, id);
  return id;
}

void Lexicon::finalize() {
  if (finalized_) return;
  std::set<char> chars;
  for (const auto& e : entries_) {
    if (e.kind == TokenKind::unknown || e.kind == TokenKind::control) continue;
    for (char c : e.text) chars.insert(c);
  }
  for (char c : chars) add(std::string(1, c), TokenKind::character);

  by_first_byte_.assign(256, {});
  for (int id = 0; id < size(); ++id) {
    const auto& e = entries_[id];
    if (e.kind == TokenKind::unknown || e.kind == TokenKind::control) continue;
    by_first_byte_[static_cast<unsigned char>(e.text[0])].push_back(id);
    max_entry_len_ = std::max(max_entry_len_, e.text.size());
  }
  for (auto& bucket : by_first_byte_) {
    std::sort(bucket.begin(), bucket.end(), [this](int a, int b) {
      if (entries_[a].text.size() != entries_[b].text.size())
        return entries_[a].text.size() > entries_[b].text.size();
      return a < b;
    });
  }
  finalized_ = true;
}

const TokenEntry& Lexicon::entry(int id) const {
  if (id < 0 || id >= size()) throw std::invalid_argument("token id out of range");
  return entries_[static_cast<std::size_t>(id)];
}

int Lexicon::find(const std::string& text) const {
  auto it = by_text_.find(text);
  return it == by_text_.end() ? -1 : it->second;
}

std::vector<int> Lexicon::tokenize(const std::string& text) const {
  if (!finalized_) throw std::logic_error("lexicon not finalized");
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto& bucket = by_first_byte_[static_cast<unsigned char>(text[pos])];
    int matched = -1;
    for (int id : bucket) {
      const std::string& t = entries_[id].text;
      if (t.size() <= text.size() - pos && text.compare(pos, t.size(), t) == 0) {
        matched = id;
        break;  // buckets are longest-first
      }
    }
    if (matched >= 0) {
      out.push_back(matched);
      pos += entries_[matched].text.size();
    } else {
      out.push_back(kTokUnknown);
      pos += 1;
    }
  }
  return out;
}

std::string Lexicon::detokenize(const std::vector<int>& tokens) const {
  std::string out;
  for (int id : tokens) {
    const auto& e = entry(id);
    if (id == kTokUnknown) {
      out += '?';
    } else {
      out += e.text;
    }
  }
  return out;
}

std::uint64_t Lexicon::vocab_hash() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& e : entries_) {
    h = fnv1a(e.text, h);
    h = fnv1a_u64(static_cast<std::uint64_t>(e.kind), h);
    h = fnv1a_u64(static_cast<std::uint64_t>(e.tier), h);
  }
  return h;
}

}  // namespace addrkit
