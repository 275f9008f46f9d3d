#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "addrkit/embedder.hpp"
#include "addrkit/world.hpp"

namespace addrkit {

// One retrieval result: a record id plus its cosine score against the query.
struct RetrievalHit {
  int record_id = -1;
  double score = 0.0;
};

// Dense exact-scan index over canonical address texts.  Columns of
// `embeddings` are unit vectors (or zero for degenerate inputs) aligned with
// `record_ids`.  The vocab hash and encoder checksum pin which lexicon and
// encoder weights produced the columns, so stale indexes can be rejected
// instead of silently returning garbage neighbours.
struct RetrieverIndex {
  int embed_dim = 0;
  std::uint64_t vocab_hash = 0;
  std::uint64_t encoder_checksum = 0;
  std::vector<int> record_ids;
  Mat embeddings;  // embed_dim x count
  ArtifactMeta meta;
};

// Embeds every record's canonical text.  The address library is world-level
// knowledge shared by all pipeline stages, not per-split data, so the index
// always covers the full record set.
RetrieverIndex build_index(const SpatialEncoder& enc, const World& w);

// Exact cosine top-k.  Results are sorted by score descending; exact score
// ties resolve to the smaller record id so ranking is reproducible.  k must
// be positive; fewer than k hits come back when the index is smaller.
std::vector<RetrievalHit> retrieve(const RetrieverIndex& index, const Vec& query, int k);

// Convenience wrapper: tokenize + embed `text`, then scan.
std::vector<RetrievalHit> retrieve_text(const RetrieverIndex& index, const SpatialEncoder& enc,
                                        const Lexicon& lex, const std::string& text, int k);

void save_index(const RetrieverIndex& index, const std::string& path);
RetrieverIndex load_index(const std::string& path);

}  // namespace addrkit
