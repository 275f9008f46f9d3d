#include "addrkit/retriever.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "addrkit/common.hpp"

namespace addrkit {

namespace {

constexpr char kIndexMagic[8] = {'A', 'D', 'K', 'I', 'N', 'D', 'X', '1'};
constexpr std::uint32_t kMaxHeaderBytes = 1u << 20;

}  // namespace

RetrieverIndex build_index(const SpatialEncoder& enc, const World& w) {
  RetrieverIndex index;
  index.embed_dim = enc.config().embed_dim;
  index.vocab_hash = w.lexicon.vocab_hash();
  index.encoder_checksum = enc.params().checksum();
  const int n = static_cast<int>(w.records.size());
  index.record_ids.reserve(n);
  index.embeddings.resize(index.embed_dim, n);
  for (int i = 0; i < n; ++i) {
    index.record_ids.push_back(w.records[i].id);
    index.embeddings.col(i) = enc.embed_text(w.lexicon, w.records[i].text);
  }
  return index;
}

std::vector<RetrievalHit> retrieve(const RetrieverIndex& index, const Vec& query, int k) {
  if (k <= 0) throw std::invalid_argument("retrieve: k must be positive");
  if (query.size() != index.embed_dim)
    throw std::invalid_argument("retrieve: query dimension mismatch");
  const int n = static_cast<int>(index.record_ids.size());
  Vec scores = index.embeddings.transpose() * query;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const int take = std::min(k, n);
  auto better = [&](int a, int b) {
    if (scores(a) != scores(b)) return scores(a) > scores(b);
    return index.record_ids[a] < index.record_ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + take, order.end(), better);
  std::vector<RetrievalHit> hits;
  hits.reserve(take);
  for (int i = 0; i < take; ++i)
    hits.push_back({index.record_ids[order[i]], scores(order[i])});
  return hits;
}

std::vector<RetrievalHit> retrieve_text(const RetrieverIndex& index, const SpatialEncoder& enc,
                                        const Lexicon& lex, const std::string& text, int k) {
  return retrieve(index, enc.embed_text(lex, text), k);
}

void save_index(const RetrieverIndex& index, const std::string& path) {
  nlohmann::json header;
  header["format"] = "addrkit-index/1";
  header["embed_dim"] = index.embed_dim;
  header["count"] = index.record_ids.size();
  header["vocab_hash"] = index.vocab_hash;
  header["encoder_checksum"] = index.encoder_checksum;
  header["stages"] = index.meta.stages;
  header["config"] = index.meta.config_json;
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(kIndexMagic, sizeof(kIndexMagic));
  const std::uint32_t len = static_cast<std::uint32_t>(header_text.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  if (!index.record_ids.empty()) {
    std::vector<std::int32_t> ids(index.record_ids.begin(), index.record_ids.end());
    out.write(reinterpret_cast<const char*>(ids.data()),
              static_cast<std::streamsize>(ids.size() * sizeof(std::int32_t)));
    out.write(reinterpret_cast<const char*>(index.embeddings.data()),
              static_cast<std::streamsize>(index.embeddings.size() * sizeof(double)));
  }
  if (!out) throw IoError("write failed: " + path);
}

RetrieverIndex load_index(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char magic[sizeof(kIndexMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kIndexMagic, sizeof(magic)) != 0)
    throw IoError("not an index file: " + path);
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len == 0 || len > kMaxHeaderBytes) throw IoError("corrupt index header: " + path);
  std::string header_text(len, '\0');
  in.read(header_text.data(), len);
  if (!in) throw IoError("corrupt index header: " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception&) {
    throw IoError("corrupt index header: " + path);
  }
  if (header.value("format", "") != "addrkit-index/1")
    throw IoError("unsupported index format: " + path);

  RetrieverIndex index;
  index.embed_dim = header.at("embed_dim").get<int>();
  const std::size_t count = header.at("count").get<std::size_t>();
  index.vocab_hash = header.at("vocab_hash").get<std::uint64_t>();
  index.encoder_checksum = header.at("encoder_checksum").get<std::uint64_t>();
  index.meta.stages = header.at("stages").get<std::map<std::string, std::string>>();
  index.meta.config_json = header.at("config").get<std::string>();
  if (index.embed_dim <= 0) throw IoError("corrupt index header: " + path);

  index.record_ids.resize(count);
  index.embeddings.resize(index.embed_dim, static_cast<Eigen::Index>(count));
  if (count > 0) {
    std::vector<std::int32_t> ids(count);
    in.read(reinterpret_cast<char*>(ids.data()),
            static_cast<std::streamsize>(count * sizeof(std::int32_t)));
    in.read(reinterpret_cast<char*>(index.embeddings.data()),
            static_cast<std::streamsize>(index.embeddings.size() * sizeof(double)));
    if (!in) throw IoError("truncated index payload: " + path);
    std::copy(ids.begin(), ids.end(), index.record_ids.begin());
  }
  return index;
}

}  // namespace addrkit
